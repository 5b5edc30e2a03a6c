"""Desk-scale contrastive training of a small projection head over frozen
input embeddings.

Two dropout views of each minibatch row play the role of the positive
pair; the head maps both views, the outputs are L2-normalized, and the
cross-view cosine matrix feeds either objective.  Backpropagation from
the loss down to the head parameters is written out by hand.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .core_math import as_batch, similarity_matrix
from .errors import DegenerateInputError, DimensionError, DivergenceError, DomainError
from .objective import LossConfig, contrastive_loss, loss_gradient


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in ("sgd", "adam"):
            raise DomainError(f"unknown optimizer {self.kind!r}; expected 'sgd' or 'adam'")
        object.__setattr__(self, "kind", kind)
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise DomainError("Adam betas must lie in [0, 1)")
        if not self.eps > 0.0:
            raise DomainError("Adam eps must be positive")

    def build(self, learning_rate):
        if self.kind == "sgd":
            return SGD(learning_rate)
        return Adam(learning_rate, self.beta1, self.beta2, self.eps)

    def __str__(self):
        if self.kind == "sgd":
            return "sgd"
        return f"adam({self.beta1!r},{self.beta2!r},{self.eps!r})"


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    batch_size: int = 64
    steps: int = 500
    learning_rate: float = 1e-3
    dropout_rate: float = 0.1
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    log_every: int = 1

    def __post_init__(self):
        if self.batch_size < 2:
            raise DomainError("batch_size must be at least 2 for contrastive training")
        if self.steps < 0:
            raise DomainError("steps must be non-negative")
        if not 0.0 <= self.learning_rate < float("inf"):
            raise DomainError("learning_rate must be finite and non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DomainError("dropout_rate must lie in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.log_every < 1:
            raise DomainError("log_every must be at least 1")


class SGD:
    def __init__(self, learning_rate):
        self.learning_rate = learning_rate

    def step(self, params, grads):
        return [p - self.learning_rate * g for p, g in zip(params, grads)]


class Adam:
    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            out.append(p - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


@dataclass(frozen=True)
class ProjectionHead:
    """Stack of affine layers ``x @ W + b`` with tanh between them.

    The last layer is linear.  Weights have shape ``(in, out)``.
    """

    weights: tuple
    biases: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise DimensionError(f"layer {k} input does not match layer {k - 1} output")

    @classmethod
    def init(cls, in_dim, out_dim=None, hidden_dim=None, seed=0):
        """Two-layer head ``in -> hidden -> out`` with Glorot-normal weights."""
        out_dim = in_dim if out_dim is None else out_dim
        hidden_dim = in_dim if hidden_dim is None else hidden_dim
        rng = np.random.default_rng(seed)
        dims = [in_dim, hidden_dim, out_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            std = np.sqrt(2.0 / (fan_in + fan_out))
            weights.append(rng.standard_normal((fan_in, fan_out)) * std)
            biases.append(np.zeros(fan_out))
        return cls(tuple(weights), tuple(biases))

    @classmethod
    def identity(cls, dim):
        return cls((np.eye(dim),), (np.zeros(dim),))

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_params(self, params):
        return ProjectionHead(tuple(params[0::2]), tuple(params[1::2]))

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.params)

    def __call__(self, x):
        return forward(self, x)

    def save(self, path):
        arrays = {f"w{k}": w for k, w in enumerate(self.weights)}
        arrays.update({f"b{k}": b for k, b in enumerate(self.biases)})
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            n = sum(1 for key in data.files if key.startswith("w"))
            return cls(
                tuple(data[f"w{k}"] for k in range(n)),
                tuple(data[f"b{k}"] for k in range(n)),
            )


def _forward_cache(head, x):
    acts = [x]
    h = x
    last = len(head.weights) - 1
    for k, (w, b) in enumerate(zip(head.weights, head.biases)):
        h = h @ w + b
        if k < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def forward(head, x):
    """Apply the head row-wise; no output normalization."""
    x = as_batch(x, "input")
    if x.shape[1] != head.in_dim:
        raise DimensionError(f"input has {x.shape[1]} columns, head expects {head.in_dim}")
    return _forward_cache(head, x)[-1]


def _backward(head, acts, d_out):
    grads = [None] * (2 * len(head.weights))
    g = d_out
    for k in range(len(head.weights) - 1, -1, -1):
        if k < len(head.weights) - 1:
            g = g * (1.0 - acts[k + 1] ** 2)
        grads[2 * k] = acts[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ head.weights[k].T
    return grads


def _normalize_backward(unit, norms, d_unit):
    return (d_unit - unit * np.einsum("ij,ij->i", unit, d_unit)[:, None]) / norms[:, None]


def dropout_views(x, rate, rng):
    """Two inverted-dropout copies of `x` with independent masks."""
    x = as_batch(x)
    if not 0.0 <= rate < 1.0:
        raise DomainError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return x.copy(), x.copy()
    keep = 1.0 - rate
    mask_a = rng.random(x.shape) >= rate
    mask_b = rng.random(x.shape) >= rate
    return x * mask_a / keep, x * mask_b / keep


@dataclass(frozen=True)
class PipelineResult:
    loss: float
    per_sample: np.ndarray
    sim: np.ndarray
    d_sim: np.ndarray
    grads: list
    unit_a: np.ndarray
    unit_b: np.ndarray


def pipeline(head, view_a, view_b, loss_cfg):
    """Loss and head-parameter gradients for fixed input views."""
    acts_a = _forward_cache(head, as_batch(view_a, "view a"))
    acts_b = _forward_cache(head, as_batch(view_b, "view b"))
    ya, yb = acts_a[-1], acts_b[-1]
    na = np.sqrt(np.einsum("ij,ij->i", ya, ya))
    nb = np.sqrt(np.einsum("ij,ij->i", yb, yb))
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateInputError("projection head produced an all-zero output row")
    ua = ya / na[:, None]
    ub = yb / nb[:, None]
    # the clamp only moves values by rounding error; its gradient is taken as identity
    sim = np.clip(ua @ ub.T, -1.0, 1.0)

    value = contrastive_loss(sim, loss_cfg)
    d_sim = loss_gradient(sim, loss_cfg)
    d_ya = _normalize_backward(ua, na, d_sim @ ub)
    d_yb = _normalize_backward(ub, nb, d_sim.T @ ua)
    grads_a = _backward(head, acts_a, d_ya)
    grads_b = _backward(head, acts_b, d_yb)
    grads = [ga + gb for ga, gb in zip(grads_a, grads_b)]
    return PipelineResult(value.total, value.per_sample, sim, d_sim, grads, ua, ub)


@dataclass(frozen=True)
class StepResult:
    head: ProjectionHead
    loss: float
    sim: np.ndarray
    d_sim: np.ndarray
    unit_a: np.ndarray
    unit_b: np.ndarray


def train_step(head, batch, cfg, rng, optimizer=None, step=0):
    """One optimizer step on `batch`.

    `optimizer` carries state across steps (Adam moments); a fresh one is
    built from `cfg` when omitted.  Raises DivergenceError if any parameter
    becomes non-finite.
    """
    batch = as_batch(batch)
    if batch.shape[0] < 2:
        raise DomainError("contrastive training needs at least two rows per batch")
    if batch.shape[1] != head.in_dim:
        raise DimensionError(f"batch has {batch.shape[1]} columns, head expects {head.in_dim}")
    if optimizer is None:
        optimizer = cfg.optimizer.build(cfg.learning_rate)
    view_a, view_b = dropout_views(batch, cfg.dropout_rate, rng)
    res = pipeline(head, view_a, view_b, cfg.loss)
    if cfg.learning_rate == 0.0:
        new_head = head
    else:
        new_head = head.with_params(optimizer.step(head.params, res.grads))
    if not (np.isfinite(res.loss) and new_head.is_finite()):
        raise DivergenceError(step)
    return StepResult(new_head, res.loss, res.sim, res.d_sim, res.unit_a, res.unit_b)


def order_violations(sim, d_sim):
    """Count negative pairs in the same row whose gradient order contradicts
    their similarity order, over negatives with non-negative similarity."""
    n = sim.shape[0]
    count = 0
    off = ~np.eye(n, dtype=bool)
    for i in range(n):
        keep = off[i] & (sim[i] >= 0.0)
        s = sim[i, keep]
        g = np.abs(d_sim[i, keep])
        order = np.argsort(s, kind="stable")
        s, g = s[order], g[order]
        # strictly larger similarity must not have a strictly smaller gradient
        higher = s[1:] > s[:-1]
        count += int(np.sum(higher & (g[1:] < np.maximum.accumulate(g)[:-1])))
    return count


TRACE_FIELDS = (
    "step",
    "loss",
    "mean_sp",
    "mean_sn",
    "alignment",
    "uniformity",
    "order_violations",
)


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([row[name] for row in self.rows])

    def to_csv(self, fh=None):
        """Write the trace as CSV to `fh` (or return it as a string)."""
        buf = fh if fh is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for row in self.rows:
            writer.writerow([format_value(row[k]) for k in TRACE_FIELDS])
        if fh is None:
            return buf.getvalue()
        return None


def format_value(x):
    """17-significant-digit text for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def batch_stats(sim, unit_a, unit_b):
    n = sim.shape[0]
    diag = np.diagonal(sim)
    off = sim[~np.eye(n, dtype=bool)]
    return {
        "mean_sp": float(diag.mean()),
        "mean_sn": float(off.mean()) if off.size else float("nan"),
        "alignment": metrics.alignment(unit_a, unit_b),
        "uniformity": metrics.uniformity(unit_a),
    }


def train(head, data, cfg):
    """Run ``cfg.steps`` minibatch steps over `data`, reshuffling each epoch.

    Deterministic in ``(head, data, cfg)``.  Trace rows are logged every
    ``cfg.log_every`` steps and on the final step; each row describes the
    batch before that step's update.
    """
    data = as_batch(data, "training data")
    if data.shape[0] < cfg.batch_size:
        raise DomainError(f"{data.shape[0]} rows cannot fill a batch of {cfg.batch_size}")
    if data.shape[1] != head.in_dim:
        raise DimensionError(f"data has {data.shape[1]} columns, head expects {head.in_dim}")
    trace = TrainTrace()
    if cfg.steps == 0:
        return head, trace

    rng = np.random.default_rng(cfg.seed)
    optimizer = cfg.optimizer.build(cfg.learning_rate)
    per_epoch = data.shape[0] // cfg.batch_size
    order = None
    for step in range(cfg.steps):
        k = step % per_epoch
        if k == 0:
            order = rng.permutation(data.shape[0])
        idx = order[k * cfg.batch_size:(k + 1) * cfg.batch_size]
        res = train_step(head, data[idx], cfg, rng, optimizer, step)
        head = res.head
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            row = {"step": step, "loss": res.loss}
            row.update(batch_stats(res.sim, res.unit_a, res.unit_b))
            row["order_violations"] = order_violations(res.sim, res.d_sim)
            trace.rows.append(row)
    return head, trace


def head_loss(head, view_a, view_b, loss_cfg):
    """Scalar loss of the full pipeline, for finite-difference checks."""
    ya = forward(head, view_a)
    yb = forward(head, view_b)
    return contrastive_loss(similarity_matrix(ya, yb), loss_cfg).total


def head_finite_diff(head, view_a, view_b, loss_cfg, h=1e-5):
    """Central differences of `head_loss` with respect to every parameter."""
    params = [p.copy() for p in head.params]
    out = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(*p.shape):
            orig = p[idx]
            p[idx] = orig + h
            f_plus = head_loss(head.with_params(params), view_a, view_b, loss_cfg)
            p[idx] = orig - h
            f_minus = head_loss(head.with_params(params), view_a, view_b, loss_cfg)
            p[idx] = orig
            g[idx] = (f_plus - f_minus) / (2.0 * h)
        out.append(g)
    return out

