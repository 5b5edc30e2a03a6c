"""On-disk formats.  Embeddings use the binary FEMB layout below; STS pairs
and run configurations are plain text.

FEMB layout (all integers little-endian)::

    magic   4 bytes  b"FEMB"
    version u32      1
    N       u64      number of rows (>= 1)
    d       u32      dimensionality (>= 1)
    ids     N x [len u16 | UTF-8 bytes]
    payload N*d float32, row-major

Values are widened to float64 on load.
"""
import logging
import dataclasses
import re
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    BoundError,
    ConfigValueError,
    DimensionError,
    DomainError,
    DuplicateIdError,
    GoldRangeError,
    IngestionError,
    NonFiniteValueError,
    PairFormatError,
    TrailingDataError,
    TruncatedFileError,
    UnknownKeyError,
    UnsupportedVersionError,
)
from .objective import LossConfig
from .trainer import OptimizerConfig, TrainConfig

logger = logging.getLogger(__name__)

FEMB_MAGIC = b"FEMB"
FEMB_VERSION = 1
_HEADER = struct.Struct("<4sIQI")
_ID_LEN = struct.Struct("<H")
MAX_ID_BYTES = 0xFFFF


class EmbeddingStore:
    """Row-aligned string ids and an ``(N, d)`` float64 matrix.

    Supports ``store[id]`` (the row vector), ``id in store`` and ``len``.
    """

    def __init__(self, ids, matrix):
        ids = tuple(ids)
        matrix = np.array(matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise DimensionError(f"matrix must be a non-empty 2-d array, got shape {matrix.shape}")
        if len(ids) != matrix.shape[0]:
            raise DimensionError(f"{len(ids)} ids for {matrix.shape[0]} rows")
        index = {}
        for k, key in enumerate(ids):
            if not isinstance(key, str) or not key:
                raise DomainError(f"id at row {k} must be a non-empty string")
            if key in index:
                raise DuplicateIdError(f"duplicate id {key!r} at rows {index[key]} and {k}")
            index[key] = k
        if not np.all(np.isfinite(matrix)):
            row = int(np.argwhere(~np.isfinite(matrix))[0][0])
            raise NonFiniteValueError(f"non-finite value in row {row} ({ids[row]!r})")
        matrix.setflags(write=False)
        self.ids = ids
        self.matrix = matrix
        self._index = index

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def d(self):
        return self.matrix.shape[1]

    def __len__(self):
        return self.n

    def __contains__(self, key):
        return key in self._index

    def __getitem__(self, key):
        return self.matrix[self._index[key]]

    def index_of(self, key):
        return self._index[key]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.matrix.shape == other.matrix.shape
            and self.matrix.tobytes() == other.matrix.tobytes()
        )

    def __repr__(self):
        return f"EmbeddingStore(n={self.n}, d={self.d})"


def write_embeddings(store, path):
    """Write `store` in FEMB format.  Output bytes depend only on the store."""
    payload = store.matrix.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise NonFiniteValueError("value overflows float32", path=path)
    parts = [_HEADER.pack(FEMB_MAGIC, FEMB_VERSION, store.n, store.d)]
    for key in store.ids:
        raw = key.encode("utf-8")
        if len(raw) > MAX_ID_BYTES:
            raise IngestionError(f"id {key[:20]!r}... longer than {MAX_ID_BYTES} bytes", path=path)
        parts.append(_ID_LEN.pack(len(raw)))
        parts.append(raw)
    parts.append(payload.tobytes(order="C"))
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise IngestionError(f"cannot write embeddings: {exc.strerror or exc}", path=path) from exc


def read_embeddings(path):
    """Parse a FEMB file into an EmbeddingStore, validating every field."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read embeddings: {exc.strerror or exc}", path=path) from exc
    return parse_embeddings(data, path)


def parse_embeddings(data, path=None):
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"header needs {_HEADER.size} bytes, file has {len(data)}",
                                 path=path, offset=len(data))
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != FEMB_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {FEMB_MAGIC!r}", path=path, offset=0)
    if version != FEMB_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}", path=path, offset=4)
    if n < 1:
        raise IngestionError("row count must be at least 1", path=path, offset=8)
    if d < 1:
        raise IngestionError("dimension must be at least 1", path=path, offset=16)

    pos = _HEADER.size
    payload_bytes = n * d * 4
    # every id needs at least its 2-byte length prefix
    if n * _ID_LEN.size + payload_bytes > len(data) - pos:
        raise TruncatedFileError(f"file too short for {n} rows of dimension {d}",
                                 path=path, offset=len(data))
    ids = []
    seen = {}
    for k in range(n):
        if pos + _ID_LEN.size > len(data):
            raise TruncatedFileError(f"id table ends inside entry {k}", path=path, offset=pos)
        (length,) = _ID_LEN.unpack_from(data, pos)
        start = pos + _ID_LEN.size
        end = start + length
        if end > len(data):
            raise TruncatedFileError(f"id {k} runs past end of file", path=path, offset=start)
        if length == 0:
            raise IngestionError(f"id {k} is empty", path=path, offset=pos)
        try:
            key = data[start:end].decode("utf-8")
        except UnicodeDecodeError:
            raise IngestionError(f"id {k} is not valid UTF-8", path=path, offset=start) from None
        if key in seen:
            raise DuplicateIdError(f"duplicate id {key!r} (entries {seen[key]} and {k})",
                                   path=path, offset=pos)
        seen[key] = k
        ids.append(key)
        pos = end

    remaining = len(data) - pos
    if remaining < payload_bytes:
        raise TruncatedFileError(f"payload has {remaining} bytes, expected {payload_bytes}",
                                 path=path, offset=len(data))
    if remaining > payload_bytes:
        raise TrailingDataError(f"{remaining - payload_bytes} unexpected bytes after payload",
                                path=path, offset=pos + payload_bytes)
    values = np.frombuffer(data, dtype="<f4", count=n * d, offset=pos).reshape(n, d)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = (int(v) for v in bad[0])
        raise NonFiniteValueError(f"non-finite value at row {r}, column {c}",
                                  path=path, offset=pos + 4 * (r * d + c))
    return EmbeddingStore(ids, values.astype(np.float64))


@dataclass(frozen=True)
class PairRecord:
    id_a: str
    id_b: str
    gold: float
    line: int = 0

    def __iter__(self):
        return iter((self.id_a, self.id_b, self.gold))

    def __getitem__(self, k):
        return (self.id_a, self.id_b, self.gold)[k]


@dataclass(frozen=True)
class StsPairSet:
    records: tuple = ()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def gold(self):
        return np.array([r.gold for r in self.records])


GOLD_RANGE = (0.0, 5.0)


def read_pairs(path):
    """Read ``id_a<TAB>id_b<TAB>gold`` lines; ``#`` comments and blank lines are skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise PairFormatError(f"not UTF-8: {exc.reason}", path=path) from exc
    except OSError as exc:
        raise IngestionError(f"cannot read pairs: {exc.strerror or exc}", path=path) from exc
    return parse_pairs(text, path)


def parse_pairs(text, path=None):
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise PairFormatError(f"expected 3 tab-separated fields, got {len(cols)}",
                                  path=path, line=lineno)
        id_a, id_b, raw = cols
        if not id_a or not id_b:
            raise PairFormatError("empty id", path=path, line=lineno)
        try:
            gold = float(raw)
        except ValueError:
            raise PairFormatError(f"gold score {raw!r} is not a number", path=path, line=lineno) from None
        if not GOLD_RANGE[0] <= gold <= GOLD_RANGE[1]:
            raise GoldRangeError(f"gold score {gold} outside [0, 5]", path=path, line=lineno)
        records.append(PairRecord(id_a, id_b, gold, lineno))
    return StsPairSet(tuple(records))


def write_pairs(pairs, path):
    lines = [f"{a}\t{b}\t{gold!r}" for a, b, gold in pairs]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


SYNTH_KINDS = ("anisotropic", "sts")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs.  Paths are strings or None."""

    loss: str = "focal"
    tau: float = 0.05
    m: float = 0.3
    batch_size: int = 64
    steps: int = 500
    learning_rate: float = 1e-3
    dropout_rate: float = 0.1
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    embeddings_path: str = None
    pairs_path: str = None
    out_path: str = None
    head_path: str = None
    log_every: int = 1
    positive_threshold: float = 4.0
    synth_n: int = 10000
    synth_d: int = 32
    synth_anisotropy: float = 0.8
    synth: str = "anisotropic"
    synth_pairs: int = 2000

    def __post_init__(self):
        try:
            self.train_config()
        except DomainError as exc:
            raise BoundError(str(exc)) from None
        if not 0.0 <= self.positive_threshold <= 5.0:
            raise BoundError("positive_threshold must lie in [0, 5]")
        if self.synth_n < 2 or self.synth_d < 2:
            raise BoundError("synth_n and synth_d must be at least 2")
        if not 0.0 <= self.synth_anisotropy <= 1.0:
            raise BoundError("synth_anisotropy must lie in [0, 1]")
        if self.synth not in SYNTH_KINDS:
            raise ConfigValueError(f"synth must be one of {', '.join(SYNTH_KINDS)}, got {self.synth!r}")
        if self.synth == "sts" and self.synth_anisotropy >= 1.0:
            raise BoundError("synth=sts needs synth_anisotropy < 1")
        if self.synth_pairs < 2:
            raise BoundError("synth_pairs must be at least 2")

    def loss_config(self):
        return LossConfig(self.loss, self.tau, self.m)

    def train_config(self):
        return TrainConfig(
            loss=self.loss_config(),
            batch_size=self.batch_size,
            steps=self.steps,
            learning_rate=self.learning_rate,
            dropout_rate=self.dropout_rate,
            seed=self.seed,
            optimizer=self.optimizer,
            log_every=self.log_every,
        )

    def echo(self):
        """Fully resolved ``key=value`` text; parses back to an equal config."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, float):
                value = repr(value)
            out.append(f"{f.name}={value}")
        return "\n".join(out) + "\n"


def replace_config(cfg, **changes):
    """Copy of `cfg` with `changes` applied and re-validated."""
    return dataclasses.replace(cfg, **changes)


_OPT_RE = re.compile(r"^(sgd|adam)(?:\(([^)]*)\))?$")


def parse_optimizer(text):
    match = _OPT_RE.match(text.strip().lower().replace(" ", ""))
    if not match:
        raise ConfigValueError(f"cannot parse optimizer {text!r}; use sgd, adam or adam(b1,b2,eps)")
    kind, args = match.groups()
    if kind == "sgd":
        if args:
            raise ConfigValueError("sgd takes no arguments")
        return OptimizerConfig("sgd")
    if not args:
        return OptimizerConfig("adam")
    try:
        b1, b2, eps = (float(v) for v in args.split(","))
    except ValueError:
        raise ConfigValueError(f"adam needs three numbers, got {args!r}") from None
    try:
        return OptimizerConfig("adam", b1, b2, eps)
    except DomainError as exc:
        raise BoundError(str(exc)) from None


def _parse_int(text):
    return int(text, 10)


_CONFIG_KEYS = {
    "loss": str,
    "tau": float,
    "m": float,
    "batch_size": _parse_int,
    "steps": _parse_int,
    "learning_rate": float,
    "dropout_rate": float,
    "seed": _parse_int,
    "optimizer": parse_optimizer,
    "embeddings_path": str,
    "pairs_path": str,
    "out_path": str,
    "head_path": str,
    "log_every": _parse_int,
    "positive_threshold": float,
    "synth_n": _parse_int,
    "synth_d": _parse_int,
    "synth_anisotropy": float,
    "synth": str,
    "synth_pairs": _parse_int,
}


def parse_config(text, source="<config>", overrides=None):
    """Parse ``key=value`` lines; ``#`` starts a comment line."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigValueError(f"{source}, line {lineno}: expected key=value")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise UnknownKeyError(f"{source}, line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigValueError(f"{source}, line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except (ConfigValueError, BoundError) as exc:
            raise type(exc)(f"{source}, line {lineno}: {exc}") from None
        except ValueError:
            raise ConfigValueError(f"{source}, line {lineno}: cannot parse {key}={value!r}") from None
    if overrides:
        values.update(overrides)
    if "loss" in values:
        try:
            LossConfig(values["loss"])
        except DomainError as exc:
            raise ConfigValueError(f"{source}: {exc}") from None
    try:
        return RunConfig(**values)
    except BoundError as exc:
        raise BoundError(f"{source}: {exc}") from None


def read_config(path, overrides=None):
    """Read and validate a run configuration.

    The resolved configuration is logged at INFO level; `overrides` (e.g.
    a seed from the environment) replace file values before validation.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read config: {exc.strerror or exc}", path=path) from exc
    cfg = parse_config(text, str(path), overrides)
    logger.info("resolved config:\n%s", cfg.echo())
    return cfg
