"""InfoNCE and Focal-InfoNCE losses over a cross-view similarity matrix,
their exact gradients, and a finite-difference oracle for checking them.

Every loss here is row-separable: row ``i`` of the similarity matrix holds
the positive pair on the diagonal and the in-batch negatives off it, and
the batch loss is the plain sum of the per-row losses.  Focal-InfoNCE
replaces the logits ``s / tau`` with ``s**2 / tau`` for the positive and
``s * (s + m) / tau`` for each negative, so negatives with ``s > 1 - m``
are pushed up and easier ones pushed down.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np

from .core_math import as_similarity, log_sum_exp, similarity_matrix
from .errors import DomainError

TAU_RANGE = (0.001, 10.0)
M_RANGE = (0.0, 1.0)

DEFAULT_TAU = 0.05
DEFAULT_M = 0.3

#: Pass threshold for grad_check on the maximum relative error.
GRAD_CHECK_TOL = 1e-5


class LossKind(str, enum.Enum):
    INFONCE = "infonce"
    FOCAL = "focal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"infonce": cls.INFONCE, "focal": cls.FOCAL, "focalinfonce": cls.FOCAL}
        try:
            return aliases[key]
        except KeyError:
            raise DomainError(f"unknown loss kind {value!r}; expected 'infonce' or 'focal'") from None


@dataclass(frozen=True)
class LossConfig:
    """Objective selector plus temperature `tau` and hardness `m`.

    `m` is carried but ignored by InfoNCE.
    """

    kind: LossKind = LossKind.FOCAL
    tau: float = DEFAULT_TAU
    m: float = DEFAULT_M

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        tau, m = float(self.tau), float(self.m)
        if not TAU_RANGE[0] <= tau <= TAU_RANGE[1]:
            raise DomainError(f"tau={self.tau!r} outside [{TAU_RANGE[0]}, {TAU_RANGE[1]}]")
        if not M_RANGE[0] <= m <= M_RANGE[1]:
            raise DomainError(f"m={self.m!r} outside [{M_RANGE[0]}, {M_RANGE[1]}]")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "m", m)

    @classmethod
    def infonce(cls, tau=DEFAULT_TAU):
        return cls(LossKind.INFONCE, tau, 0.0)

    @classmethod
    def focal(cls, tau=DEFAULT_TAU, m=DEFAULT_M):
        return cls(LossKind.FOCAL, tau, m)


@dataclass(frozen=True)
class LossValue:
    total: float
    per_sample: np.ndarray


@dataclass(frozen=True)
class GradReport:
    """Analytical vs finite-difference gradient comparison."""

    max_rel_err: float
    mean_rel_err: float
    rel_err: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    tol: float = GRAD_CHECK_TOL

    @property
    def passed(self):
        return bool(self.max_rel_err < self.tol)


def effective_logit(s, m):
    """Re-scaled negative similarity ``s * (s + m)``.

    Exceeds `s` exactly when ``s > 1 - m`` (for positive `s`), which is the
    hard-negative region; ``s = 1 - m`` is a fixed point.
    """
    return s * (s + m)


def _logit_maps(cfg):
    """(positive map, negative map) from similarity to logit."""
    tau = cfg.tau
    if cfg.kind is LossKind.INFONCE:
        return (lambda s: s / tau), (lambda s: s / tau)
    m = cfg.m
    return (lambda s: s * s / tau), (lambda s: effective_logit(s, m) / tau)


def logits(sim, cfg):
    """Per-row logit matrix: positive logit on the diagonal, negatives off it."""
    sim = as_similarity(sim)
    pos_map, neg_map = _logit_maps(cfg)
    out = neg_map(sim)
    diag = np.arange(sim.shape[0])
    out[diag, diag] = pos_map(sim[diag, diag])
    return out


def _loss_from_logits(z):
    """``l_i = logsumexp(z_i) - z_ii``, accurate to relative precision.

    Shifting row ``i`` by its positive logit gives
    ``l_i = log(1 + sum_{j != i} exp(z_ij - z_ii))``.  When the positive is
    the row maximum every term is at most 1 and log1p keeps full precision
    even for losses near 1e-300; otherwise ``l_i >= log 2`` and the plain
    log-sum-exp difference has no cancellation to speak of.
    """
    n = z.shape[0]
    pos = np.diagonal(z)
    neg = z - pos[:, None]
    neg[np.arange(n), np.arange(n)] = -np.inf
    dominant = neg.max(axis=1) <= 0.0 if n > 1 else np.ones(1, dtype=bool)
    with np.errstate(under="ignore"):
        per_sample = np.log1p(np.sum(np.exp(np.minimum(neg, 0.0)), axis=1))
    if not dominant.all():
        rows = ~dominant
        per_sample[rows] = log_sum_exp(z[rows], axis=1) - pos[rows]
    return LossValue(total=math.fsum(per_sample), per_sample=per_sample)


def info_nce(sim, cfg):
    """InfoNCE: ``l_i = -log softmax(s[i] / tau)[i]``."""
    if cfg.kind is not LossKind.INFONCE:
        raise DomainError("info_nce called with a Focal-InfoNCE config")
    return _loss_from_logits(logits(sim, cfg))


def focal_info_nce(sim, cfg):
    """Focal-InfoNCE, ``l_i = logsumexp(z_i) - s_ii**2 / tau`` with
    ``z_ij = s_ij (s_ij + m) / tau`` for ``j != i`` and ``z_ii = s_ii**2 / tau``.
    """
    if cfg.kind is not LossKind.FOCAL:
        raise DomainError("focal_info_nce called with an InfoNCE config")
    return _loss_from_logits(logits(sim, cfg))


def contrastive_loss(sim, cfg):
    """Dispatch on ``cfg.kind``."""
    return _loss_from_logits(logits(sim, cfg))


def _softmax_rows(z):
    return np.exp(z - log_sum_exp(z, axis=1)[:, None])


def loss_gradient(sim, cfg, form="exact"):
    """``dL/ds`` for every entry of the similarity matrix.

    ``form="exact"`` is the true derivative of the implemented loss.  For
    Focal-InfoNCE that is ``p_ij (2 s_ij + m) / tau`` off the diagonal and
    ``-(2 s_ii / tau) * sum_{j != i} p_ij`` on it, where ``p`` is the row
    softmax of the logits.  The diagonal uses the sum of the negative
    probabilities instead of ``p_ii - 1`` so it keeps full relative
    precision when ``p_ii`` rounds to 1.

    ``form="printed"`` (Focal-InfoNCE only) is a diagnostic for an
    alternative closed form with factor ``2 (s + m)`` and a sum over the
    row's negatives, placed in every off-diagonal entry of that row.  It
    does not match finite differences and is never used for training.
    """
    sim = as_similarity(sim)
    n = sim.shape[0]
    diag = np.arange(n)
    z = logits(sim, cfg)
    p = _softmax_rows(z)
    p_neg = p.copy()
    p_neg[diag, diag] = 0.0
    miss = p_neg.sum(axis=1)
    tau = cfg.tau

    if cfg.kind is LossKind.INFONCE:
        if form != "exact":
            raise DomainError("only the exact gradient form exists for InfoNCE")
        grad = p_neg / tau
        grad[diag, diag] = -miss / tau
        return grad

    m = cfg.m
    s_pos = sim[diag, diag]
    if form == "exact":
        grad = p_neg * (2.0 * sim + m) / tau
    elif form == "printed":
        row = (2.0 / tau * p_neg * (sim + m)).sum(axis=1)
        grad = np.repeat(row[:, None], n, axis=1)
    else:
        raise DomainError(f"unknown gradient form {form!r}")
    grad[diag, diag] = -(2.0 * s_pos / tau) * miss
    return grad


def _exclusive_row_sums(e):
    """``out[i, j] = sum_{k != j} e[i, k]`` without subtracting."""
    n = e.shape[1]
    prefix = np.zeros_like(e)
    suffix = np.zeros_like(e)
    if n > 1:
        prefix[:, 1:] = np.cumsum(e[:, :-1], axis=1)
        suffix[:, :-1] = np.cumsum(e[:, :0:-1], axis=1)[:, ::-1]
    return prefix + suffix


def finite_diff_gradient(sim, cfg, h=1e-6, loss_fn=None):
    """Central finite differences ``(L(s + h e_ij) - L(s - h e_ij)) / 2h``.

    With a custom `loss_fn` (any callable mapping a matrix to a float) each
    entry is perturbed in turn and the loss re-evaluated directly.

    For the built-in losses the two perturbed losses are evaluated in
    closed form and differenced as ``log(Z+ / Z-)`` via log1p/expm1, which
    is the same quantity without the cancellation a direct subtraction
    suffers when an entry's softmax weight is tiny.  Only row ``i`` of the
    loss depends on entry ``(i, j)``, so the other rows cancel exactly and
    are not evaluated.
    """
    if not 1e-8 <= h <= 1e-4:
        raise DomainError(f"step h={h!r} outside [1e-8, 1e-4]")
    sim = as_similarity(sim)
    if loss_fn is not None:
        return _naive_finite_diff(sim, loss_fn, h)

    n = sim.shape[0]
    diag = np.arange(n)
    pos_map, neg_map = _logit_maps(cfg)
    z = logits(sim, cfg)
    z_minus = neg_map(sim - h)
    z_plus = neg_map(sim + h)
    z_minus[diag, diag] = pos_map(sim[diag, diag] - h)
    z_plus[diag, diag] = pos_map(sim[diag, diag] + h)

    top = z.max(axis=1, keepdims=True)
    others = _exclusive_row_sums(np.exp(z - top))
    e_minus = np.exp(z_minus - top)
    dz = z_plus - z_minus

    with np.errstate(invalid="ignore", divide="ignore"):
        # negative entry (i, j): l_i changes by log(Z+ / Z-)
        delta = np.log1p(e_minus / (others + e_minus) * np.expm1(dz))
        # positive entry: l_i = log1p(R exp(-pos)) with R fixed
        rest = others[diag, diag]
        weight = np.where(rest > 0.0, rest / (rest + e_minus[diag, diag]), 0.0)
    delta[diag, diag] = np.log1p(weight * np.expm1(-dz[diag, diag]))
    return delta / (2.0 * h)


def _naive_finite_diff(sim, loss_fn, h):
    grad = np.zeros_like(sim)
    work = sim.copy()
    for idx in np.ndindex(*sim.shape):
        orig = work[idx]
        work[idx] = orig + h
        f_plus = loss_fn(work)
        work[idx] = orig - h
        f_minus = loss_fn(work)
        work[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(a, b, floor=1e-12):
    """Entry-wise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(sim, cfg, h=1e-6, analytic=None):
    """Compare `analytic` (default: ``loss_gradient``) with finite differences."""
    sim = as_similarity(sim)
    if analytic is None:
        analytic = loss_gradient(sim, cfg)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = finite_diff_gradient(sim, cfg, h)
    err = relative_error(analytic, numeric)
    return GradReport(
        max_rel_err=float(err.max()),
        mean_rel_err=float(err.mean()),
        rel_err=err,
        analytic=analytic,
        numeric=numeric,
    )


def random_instance(rng, n, d, noise=0.5):
    """Similarity matrix between a Gaussian batch and a noisy copy of it."""
    a = rng.standard_normal((n, d))
    b = a + noise * rng.standard_normal((n, d))
    return similarity_matrix(a, b)
