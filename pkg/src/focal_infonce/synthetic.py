"""Synthetic embedding sets for desk-scale experiments."""
import numpy as np

from .errors import DomainError


def anisotropic_spectrum(d, anisotropy):
    """Covariance eigenvalues ``(1 - anisotropy) ** k`` for ``k = 0..d-1``."""
    if not 0.0 <= anisotropy <= 1.0:
        raise DomainError("anisotropy must lie in [0, 1]")
    return (1.0 - anisotropy) ** np.arange(d, dtype=np.float64)


def cone_offset(anisotropy):
    """Length of the shared mean vector, ``sqrt(a / (1 - a))``."""
    if anisotropy >= 1.0:
        return np.inf
    return float(np.sqrt(anisotropy / (1.0 - anisotropy)))


def synth_anisotropic(n, d, anisotropy, seed=0):
    """Unit-normalized Gaussian rows that occupy a narrow cone.

    Coordinate ``k`` has variance ``(1 - a) ** k`` and coordinate 0 also
    carries a shared offset of ``sqrt(a / (1 - a))``; rows are then scaled
    to unit norm.  ``a = 0`` is isotropic and ``a = 1`` puts every row on
    the first axis.  Output is fixed by `seed`.
    """
    if n < 2 or d < 2:
        raise DomainError("synth_anisotropic needs n >= 2 and d >= 2")
    spectrum = anisotropic_spectrum(d, anisotropy)
    if anisotropy >= 1.0:
        x = np.zeros((n, d))
        x[:, 0] = 1.0
        return x
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d)) * np.sqrt(spectrum)
    x[:, 0] += cone_offset(anisotropy)
    return x / np.linalg.norm(x, axis=1)[:, None]


def synth_sts(n=10000, d=32, n_pairs=2000, anisotropy=0.8, seed=0,
              semantic_dim=8, semantic_decay=0.6, style_scale=0.005, max_pair_noise=1.5):
    """A synthetic STS task: an embedding store plus gold-scored pairs.

    Each item has a latent meaning ``u`` in ``semantic_dim`` dimensions.
    The observed embedding puts ``u`` (axis ``k`` scaled by
    ``sqrt(semantic_decay ** k)``) in the leading coordinates, low-amplitude
    noise of scale `style_scale` in the remaining ones, and the same cone
    offset as `synth_anisotropic` on coordinate 0 before normalizing.

    Besides the `n` base items there are `n_pairs` partner items
    ``u_i + lvl * noise`` with ``lvl ~ U(0, max_pair_noise)``; pair ``k``
    joins a base item with its partner and carries gold score
    ``2.5 * (1 + cos(u_i, u_partner))``.  Ids are ``"s00000"`` onwards.

    Returns ``(EmbeddingStore, StsPairSet)``; every row of the store is
    training data.
    """
    from .data_io import EmbeddingStore, PairRecord, StsPairSet

    if n < 2 or d < 2:
        raise DomainError("synth_sts needs n >= 2 and d >= 2")
    if not 1 <= semantic_dim <= d:
        raise DomainError("semantic_dim must lie in [1, d]")
    if n_pairs < 2:
        raise DomainError("synth_sts needs at least 2 pairs")
    if not 0.0 <= anisotropy < 1.0:
        raise DomainError("synth_sts needs anisotropy in [0, 1)")
    k = semantic_dim
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, k))
    base = rng.integers(0, n, n_pairs)
    lvl = rng.uniform(0.0, max_pair_noise, n_pairs)
    partner = u[base] + lvl[:, None] * rng.standard_normal((n_pairs, k))
    latent = np.vstack([u, partner])

    unit = latent / np.linalg.norm(latent, axis=1)[:, None]
    cos = np.einsum("ij,ij->i", unit[base], unit[n:])
    gold = np.clip(2.5 * (1.0 + cos), 0.0, 5.0)

    x = np.empty((n + n_pairs, d))
    x[:, :k] = latent * np.sqrt(semantic_decay ** np.arange(k))
    x[:, k:] = style_scale * rng.standard_normal((n + n_pairs, d - k))
    x[:, 0] += cone_offset(anisotropy)
    x /= np.linalg.norm(x, axis=1)[:, None]

    ids = [f"s{i:05d}" for i in range(n + n_pairs)]
    pairs = StsPairSet(tuple(
        PairRecord(ids[b], ids[n + j], float(g)) for j, (b, g) in enumerate(zip(base, gold))
    ))
    return EmbeddingStore(ids, x), pairs
