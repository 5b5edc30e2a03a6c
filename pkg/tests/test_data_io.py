import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from focal_infonce.data_io import (
    EmbeddingStore,
    RunConfig,
    parse_config,
    parse_embeddings,
    parse_optimizer,
    parse_pairs,
    read_config,
    read_embeddings,
    read_pairs,
    write_embeddings,
    write_pairs,
)
from focal_infonce.errors import (
    BadMagicError,
    BoundError,
    ConfigValueError,
    DimensionError,
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
from focal_infonce.trainer import OptimizerConfig

HEADER_BYTES = 20


def random_store(rng, n=None, d=None):
    n = int(rng.integers(1, 20)) if n is None else n
    d = int(rng.integers(1, 10)) if d is None else d
    ids = [f"id-{k}-{'é' * int(rng.integers(0, 3))} x" for k in range(n)]
    values = rng.standard_normal((n, d)).astype(np.float32).astype(np.float64)
    return EmbeddingStore(ids, values)


def femb_bytes(ids, values, magic=b"FEMB", version=1, n=None, d=None):
    values = np.asarray(values, dtype="<f4")
    n = len(ids) if n is None else n
    d = values.shape[1] if d is None else d
    out = struct.pack("<4sIQI", magic, version, n, d)
    for key in ids:
        raw = key.encode()
        out += struct.pack("<H", len(raw)) + raw
    return out + values.tobytes()


class TestEmbeddingStore:
    def test_lookup(self):
        store = EmbeddingStore(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
        assert "a" in store and "c" not in store
        np.testing.assert_array_equal(store["b"], [3.0, 4.0])
        assert len(store) == 2 and store.d == 2

    def test_immutable(self):
        store = EmbeddingStore(["a"], [[1.0]])
        with pytest.raises(ValueError):
            store.matrix[0, 0] = 2.0

    def test_duplicate_ids(self):
        with pytest.raises(DuplicateIdError):
            EmbeddingStore(["a", "a"], np.zeros((2, 2)))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            EmbeddingStore(["a"], np.zeros((2, 2)))

    def test_non_finite(self):
        with pytest.raises(NonFiniteValueError):
            EmbeddingStore(["a"], [[np.nan]])


class TestFembRoundTrip:
    def test_small_store(self, rng, tmp_path):
        store = random_store(rng, 8, 4)
        write_embeddings(store, tmp_path / "s.femb")
        back = read_embeddings(tmp_path / "s.femb")
        assert back == store
        assert back.matrix.tobytes() == store.matrix.tobytes()

    def test_layout_matches_hand_encoding(self, tmp_path):
        store = EmbeddingStore(["a", "bc"], [[1.0, -2.0], [0.5, 0.25]])
        write_embeddings(store, tmp_path / "s.femb")
        assert (tmp_path / "s.femb").read_bytes() == femb_bytes(["a", "bc"], store.matrix)

    def test_bytes_are_deterministic(self, rng, tmp_path):
        store = random_store(rng)
        write_embeddings(store, tmp_path / "a.femb")
        write_embeddings(store, tmp_path / "b.femb")
        assert (tmp_path / "a.femb").read_bytes() == (tmp_path / "b.femb").read_bytes()

    def test_float32_widening_error_is_small(self, rng, tmp_path):
        store = EmbeddingStore(["a", "b"], rng.standard_normal((2, 16)))
        write_embeddings(store, tmp_path / "s.femb")
        back = read_embeddings(tmp_path / "s.femb")
        np.testing.assert_allclose(back.matrix, store.matrix, rtol=1e-7)

    @given(st.integers(0, 2**32 - 1))
    def test_random_round_trip(self, seed):
        store = random_store(np.random.default_rng(seed))
        data = femb_bytes(store.ids, store.matrix)
        assert parse_embeddings(data) == store


class TestFembErrors:
    def good(self):
        return femb_bytes(["a", "b", "c"], np.arange(6, dtype=float).reshape(3, 2))

    def test_bad_magic(self):
        with pytest.raises(BadMagicError, match="byte 0"):
            parse_embeddings(b"XXXX" + self.good()[4:])

    def test_version(self):
        data = self.good()
        with pytest.raises(UnsupportedVersionError):
            parse_embeddings(data[:4] + struct.pack("<I", 2) + data[8:])

    def test_declared_rows_exceed_payload(self):
        data = femb_bytes(["a", "b"], np.zeros((2, 2)), n=3)
        with pytest.raises(TruncatedFileError):
            parse_embeddings(data)

    def test_truncated_payload(self):
        with pytest.raises(TruncatedFileError):
            parse_embeddings(self.good()[:-1])

    def test_short_header(self):
        with pytest.raises(TruncatedFileError):
            parse_embeddings(b"FEMB\x01")

    def test_trailing_data(self):
        with pytest.raises(TrailingDataError):
            parse_embeddings(self.good() + b"\x00")

    def test_duplicate_id(self):
        data = femb_bytes(["a", "a"], np.zeros((2, 2)))
        with pytest.raises(DuplicateIdError):
            parse_embeddings(data)

    def test_non_finite_value_offset(self):
        values = np.zeros((2, 2))
        values[1, 0] = np.inf
        data = femb_bytes(["a", "b"], values)
        payload = len(data) - 16
        with pytest.raises(NonFiniteValueError, match=f"byte {payload + 8}"):
            parse_embeddings(data)

    @pytest.mark.parametrize("n, d", [(0, 2), (1, 0)])
    def test_empty_dimensions(self, n, d):
        data = struct.pack("<4sIQI", b"FEMB", 1, n, d)
        with pytest.raises(IngestionError):
            parse_embeddings(data)

    def test_empty_id(self):
        with pytest.raises(IngestionError):
            parse_embeddings(femb_bytes([""], np.zeros((1, 1))))

    def test_invalid_utf8(self):
        data = struct.pack("<4sIQI", b"FEMB", 1, 1, 1) + b"\x01\x00\xff" + np.zeros(1, "<f4").tobytes()
        with pytest.raises(IngestionError, match="UTF-8"):
            parse_embeddings(data)

    def test_huge_declared_size_does_not_allocate(self):
        data = struct.pack("<4sIQI", b"FEMB", 1, 2**62, 2**31)
        with pytest.raises(TruncatedFileError):
            parse_embeddings(data)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(IngestionError, match="nothing.femb"):
            read_embeddings(tmp_path / "nothing.femb")

    def test_every_header_byte_flip_rejected(self, rng):
        data = femb_bytes(*self._store_args(rng))
        for pos in range(HEADER_BYTES):
            for mask in range(1, 256):
                mutated = bytearray(data)
                mutated[pos] ^= mask
                with pytest.raises(IngestionError):
                    parse_embeddings(bytes(mutated))

    def test_id_length_flips_rejected(self, rng):
        ids, values = self._store_args(rng)
        data = femb_bytes(ids, values)
        pos = HEADER_BYTES
        for key in ids:
            for byte in (pos, pos + 1):
                for mask in range(1, 256):
                    mutated = bytearray(data)
                    mutated[byte] ^= mask
                    with pytest.raises(IngestionError):
                        parse_embeddings(bytes(mutated))
            pos += 2 + len(key.encode())

    def _store_args(self, rng):
        store = random_store(rng, 5, 3)
        return store.ids, store.matrix


class TestPairs:
    def test_single_record(self):
        pairs = parse_pairs("a\tb\t4.5\n")
        assert [tuple(r) for r in pairs] == [("a", "b", 4.5)]

    def test_gold_out_of_range(self):
        with pytest.raises(GoldRangeError, match="line 1"):
            parse_pairs("a\tb\t7.0\n")

    def test_empty(self, tmp_path):
        (tmp_path / "p.tsv").write_text("")
        assert len(read_pairs(tmp_path / "p.tsv")) == 0

    def test_comments_blanks_and_spaces(self):
        pairs = parse_pairs("# header\n\nthe cat\ta dog\t0\n   \nx\ty\t5\n")
        assert [tuple(r) for r in pairs] == [("the cat", "a dog", 0.0), ("x", "y", 5.0)]
        assert [r.line for r in pairs] == [3, 5]

    @pytest.mark.parametrize("text, line", [
        ("a\tb\t1\na b 2\n", 2),
        ("a\tb\n", 1),
        ("a\tb\tx\n", 1),
        ("#c\n\tb\t1\n", 2),
        ("a\tb\t1\t2\n", 1),
    ])
    def test_malformed_line_cites_number(self, text, line):
        with pytest.raises(PairFormatError, match=f"line {line}"):
            parse_pairs(text)

    def test_not_utf8(self, tmp_path):
        (tmp_path / "p.tsv").write_bytes(b"\xff\tb\t1\n")
        with pytest.raises(PairFormatError):
            read_pairs(tmp_path / "p.tsv")

    @given(st.lists(st.tuples(
        st.text("abcxyz é", min_size=1, max_size=6).filter(lambda s: not s.startswith("#") and s.strip()),
        st.text("abcxyz é", min_size=1, max_size=6),
        st.floats(0, 5),
    ), max_size=20))
    def test_order_and_count_preserved(self, records):
        text = "".join(f"{a}\t{b}\t{g!r}\n" for a, b, g in records)
        parsed = parse_pairs(text)
        assert [tuple(r) for r in parsed] == records

    def test_write_read(self, tmp_path):
        records = [("a", "b", 1.25), ("c d", "e", 0.1)]
        write_pairs(records, tmp_path / "p.tsv")
        assert [tuple(r) for r in read_pairs(tmp_path / "p.tsv")] == records


class TestConfig:
    def test_defaults_applied(self):
        cfg = parse_config("tau=0.05\nm=0.3")
        assert cfg == RunConfig(tau=0.05, m=0.3)
        assert cfg.steps == 500 and cfg.batch_size == 64 and cfg.loss == "focal"

    def test_bound_error(self):
        with pytest.raises(BoundError, match="tau"):
            parse_config("tau=-1")

    def test_unknown_key(self):
        with pytest.raises(UnknownKeyError, match="tua"):
            parse_config("tua=0.05")

    @pytest.mark.parametrize("text", ["steps=ten", "batch_size=6.4", "tau", "loss=triplet", "optimizer=rmsprop",
                                      "synth=gaussian", "tau=1\ntau=2"])
    def test_value_errors(self, text):
        with pytest.raises(ConfigValueError):
            parse_config(text)

    @pytest.mark.parametrize("text", ["batch_size=1", "dropout_rate=1", "m=2", "seed=-3", "learning_rate=-1",
                                      "positive_threshold=6", "synth_anisotropy=1.5", "optimizer=adam(1,0.9,1e-8)"])
    def test_bounds(self, text):
        with pytest.raises(BoundError):
            parse_config(text)

    def test_large_tau_accepted(self):
        assert parse_config("tau=0.7").tau == 0.7

    def test_comments_and_whitespace(self):
        cfg = parse_config("# run\n  steps = 3 \n\nloss=infonce\n")
        assert cfg.steps == 3 and cfg.loss == "infonce"

    def test_optimizer_forms(self):
        assert parse_optimizer("sgd") == OptimizerConfig("sgd")
        assert parse_optimizer("Adam") == OptimizerConfig()
        assert parse_optimizer("adam(0.8, 0.99, 1e-6)") == OptimizerConfig("adam", 0.8, 0.99, 1e-6)

    def test_echo_round_trips(self):
        cfg = parse_config("tau=0.07\noptimizer=adam(0.8,0.99,1e-6)\nout_path=/tmp/x.csv\nseed=12345678901234")
        assert parse_config(cfg.echo()) == cfg

    def test_overrides(self):
        assert parse_config("seed=1", overrides={"seed": 9}).seed == 9

    def test_read_config_logs_resolved(self, tmp_path, caplog):
        (tmp_path / "c.cfg").write_text("steps=4\n")
        with caplog.at_level("INFO"):
            cfg = read_config(tmp_path / "c.cfg")
        assert cfg.steps == 4
        assert "steps=4" in caplog.text and "tau=0.05" in caplog.text

    def test_train_config(self):
        cfg = parse_config("loss=infonce\ntau=0.1\nsteps=3").train_config()
        assert cfg.loss.tau == 0.1 and cfg.steps == 3 and cfg.loss.kind.value == "infonce"
