"""Embedding quality metrics.  Spearman correlation scores predictions
against gold labels; alignment and uniformity describe the geometry."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import rankdata

from .core_math import as_batch, normalize_rows, row_norms
from .errors import DimensionError, DomainError, MissingIdError, UndefinedCorrelationError

UNIT_NORM_TOL = 1e-6
DEFAULT_POSITIVE_THRESHOLD = 4.0


@dataclass(frozen=True)
class EvalReport:
    spearman: float
    alignment: float
    uniformity: float
    n_pairs: int
    n_positive_pairs: int = 0
    n_embeddings: int = 0

    def as_row(self):
        return {
            "spearman": self.spearman,
            "alignment": self.alignment,
            "uniformity": self.uniformity,
            "n_pairs": self.n_pairs,
            "n_positive_pairs": self.n_positive_pairs,
            "n_embeddings": self.n_embeddings,
        }


def spearman(pred, gold):
    """Spearman's rho: Pearson correlation of average ranks (ties share the mean rank)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gold = np.asarray(gold, dtype=np.float64).ravel()
    if pred.size != gold.size:
        raise DimensionError(f"length mismatch: {pred.size} vs {gold.size}")
    if pred.size < 2:
        raise UndefinedCorrelationError("spearman needs at least two points")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(gold))):
        raise DomainError("spearman inputs must be finite")
    rp = rankdata(pred, method="average")
    rg = rankdata(gold, method="average")
    rp -= rp.mean()
    rg -= rg.mean()
    denom = math.sqrt(np.dot(rp, rp) * np.dot(rg, rg))
    if denom == 0.0:
        raise UndefinedCorrelationError("spearman is undefined for a constant ranking")
    return max(-1.0, min(1.0, float(np.dot(rp, rg) / denom)))


def _check_unit(x, name):
    dev = np.abs(row_norms(x) - 1.0)
    if dev.max() > UNIT_NORM_TOL:
        i = int(dev.argmax())
        raise DomainError(f"{name} row {i} is not unit norm (deviation {dev[i]:.3g})")


def alignment(a, b):
    """Mean squared distance between positive pairs ``a_i``, ``b_i`` (unit rows)."""
    a = as_batch(a, "a")
    b = as_batch(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    _check_unit(a, "a")
    _check_unit(b, "b")
    diff = a - b
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def uniformity(a, t=2.0):
    """``log`` of the mean of ``exp(-t |a_i - a_j|^2)`` over pairs ``i < j``.

    Distances come from explicit row differences, so identical rows
    contribute exactly 1.  The pair terms are sorted before summing, which
    makes the result independent of row order.
    """
    a = as_batch(a, "a")
    if a.shape[0] < 2:
        raise DomainError("uniformity needs at least two rows")
    _check_unit(a, "a")
    terms = np.sort(np.exp(-t * pdist(a, "sqeuclidean")))
    return min(0.0, math.log(np.sum(terms) / terms.size))


def evaluate_sts(store, pairs, positive_threshold=DEFAULT_POSITIVE_THRESHOLD, transform=None):
    """Score an embedding store against gold-scored pairs.

    `store` is an EmbeddingStore (or any mapping from id to vector);
    `pairs` an StsPairSet or a sequence of ``(id_a, id_b, gold)``.  When
    `transform` is given (e.g. a trained projection head) it is applied to
    the embedding matrix first.

    Predictions are cosine similarities.  Alignment uses the pairs with gold
    ``>= positive_threshold`` and is NaN when there are none; uniformity uses
    every distinct embedding referenced by the pairs and is NaN when there is
    only one.
    """
    records = list(getattr(pairs, "records", pairs))
    if len(records) < 2:
        raise DomainError(f"evaluate_sts needs at least 2 pairs, got {len(records)}")

    ids = []
    index = {}
    for rec in records:
        for key in (rec[0], rec[1]):
            if key not in index:
                index[key] = len(ids)
                ids.append(key)
    missing = [k for k in ids if k not in store]
    if missing:
        raise MissingIdError(f"id {missing[0]!r} not found in embedding store")

    mat = np.stack([np.asarray(store[k], dtype=np.float64) for k in ids])
    if transform is not None:
        mat = transform(mat)
    unit = normalize_rows(mat)

    ia = np.array([index[r[0]] for r in records])
    ib = np.array([index[r[1]] for r in records])
    gold = np.array([float(r[2]) for r in records])
    pred = np.clip(np.einsum("ij,ij->i", unit[ia], unit[ib]), -1.0, 1.0)

    pos = gold >= positive_threshold
    algn = alignment(unit[ia[pos]], unit[ib[pos]]) if pos.any() else float("nan")
    unif = uniformity(unit) if len(ids) >= 2 else float("nan")
    return EvalReport(
        spearman=spearman(pred, gold),
        alignment=algn,
        uniformity=unif,
        n_pairs=len(records),
        n_positive_pairs=int(pos.sum()),
        n_embeddings=len(ids),
    )
