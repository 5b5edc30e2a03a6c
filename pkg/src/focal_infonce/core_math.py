"""Vector and matrix primitives, from cosine similarity to a stable
log-sum-exp.

Embedding batches are plain ``(N, d)`` float64 arrays and similarity
matrices are ``(N, N)`` float64 arrays; the helpers here validate and
coerce inputs rather than wrapping them in container classes.
"""
import numpy as np

from .errors import DegenerateInputError, DimensionError, DomainError

#: Tolerance on cosine values before clamping to [-1, 1].
COSINE_SLACK = 1e-6


def as_batch(x, name="batch"):
    """Return `x` as a C-contiguous float64 ``(N, d)`` array.

    Raises DimensionError for anything that is not a non-empty matrix and
    DegenerateInputError for NaN or infinite entries.
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DegenerateInputError(f"{name} has a non-finite entry at row {bad[0]}, column {bad[1]}")
    return arr


def as_similarity(s, name="similarity matrix"):
    """Return `s` as a float64 square matrix with finite entries."""
    arr = np.ascontiguousarray(s, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"{name} must be square and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError(f"{name} has non-finite entries")
    return arr


def cosine(u, v):
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or u.size == 0:
        raise DimensionError("cosine expects two non-empty 1-d vectors")
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.size} vs {v.size}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DegenerateInputError("cosine of a vector with non-finite entries")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine is undefined for a zero-norm vector")
    c = float(np.dot(u / nu, v / nv))
    return min(1.0, max(-1.0, c))


def row_norms(x):
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def normalize_rows(x):
    """Scale every row of `x` to unit Euclidean norm.

    An all-zero row raises DegenerateInputError naming its index.
    """
    x = as_batch(x)
    norms = row_norms(x)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"row {zero[0]} has zero norm and cannot be normalized")
    return x / norms[:, None]


def similarity_matrix(a, b):
    """Cross-view cosine similarities ``s[i, j] = cos(a_i, b_j)``.

    Row `i` of `a` and row `i` of `b` are the two views of the same item, so
    the diagonal holds the positive pairs.
    """
    a = as_batch(a, "view a")
    b = as_batch(b, "view b")
    if a.shape != b.shape:
        raise DimensionError(f"view shapes differ: {a.shape} vs {b.shape}")
    s = normalize_rows(a) @ normalize_rows(b).T
    return np.clip(s, -1.0, 1.0)


def log_sum_exp(xs, axis=None):
    """``max(xs) + log(sum(exp(xs - max(xs))))`` along `axis`.

    With ``axis=None`` the input must be a non-empty vector and a float is
    returned; otherwise the reduction is applied along the given axis.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise DomainError("log_sum_exp of an empty sequence")
    if axis is None:
        xs = xs.ravel()
        top = xs.max()
        return float(top + np.log(np.sum(np.exp(xs - top))))
    top = xs.max(axis=axis, keepdims=True)
    out = top + np.log(np.sum(np.exp(xs - top), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)
