import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from normscale.errors import ParseError, ShapeError, ValidationError
from normscale.ingest import (
    MAGIC,
    SplitMix64,
    build_test_stream,
    load_datasets,
    load_manifest,
    read_logits,
    shuffle_indices,
    write_logits,
)
from normscale.stats import LogitRecord, Origin


def random_records(rng, n=25, k=4, labels=True, origin=Origin.TRAIN):
    z = rng.normal(scale=30, size=(n, k)).astype(np.float32)
    lab = rng.integers(0, k, n) if labels else [None] * n
    return [LogitRecord(row, None if l is None else int(l), origin) for row, l in zip(z, lab)]


class TestBinary:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        recs = random_records(rng)
        write_logits(tmp_path / "a.bin", recs, "bin")
        back = read_logits(tmp_path / "a.bin", "bin")
        assert back == recs
        for a, b in zip(recs, back):
            assert a.logits.astype(np.float32).tobytes() == b.logits.astype(np.float32).tobytes()

    def test_layout(self, tmp_path):
        recs = [LogitRecord([1.0, -2.5], 1), LogitRecord([0.5, 3.0], None)]
        write_logits(tmp_path / "a.bin", recs, "bin")
        raw = (tmp_path / "a.bin").read_bytes()
        assert raw[:4] == MAGIC
        assert struct.unpack_from("<HQIB", raw, 4) == (1, 2, 2, 1)
        assert np.frombuffer(raw, "<f4", 4, 19).tolist() == [1.0, -2.5, 0.5, 3.0]
        assert np.frombuffer(raw, "<i4", 2, 35).tolist() == [1, -1]
        assert len(raw) == 43

    def test_no_labels(self, tmp_path, rng):
        recs = random_records(rng, labels=False)
        write_logits(tmp_path / "a.bin", recs)
        raw = (tmp_path / "a.bin").read_bytes()
        assert raw[18] == 0 and len(raw) == 19 + 25 * 4 * 4
        assert read_logits(tmp_path / "a.bin") == recs

    def test_errors(self, tmp_path, rng):
        p = tmp_path / "a.bin"
        p.write_bytes(b"")
        with pytest.raises(ParseError):
            read_logits(p, "bin")
        write_logits(p, random_records(rng))
        raw = p.read_bytes()
        p.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(ParseError, match="magic"):
            read_logits(p)
        p.write_bytes(raw[:-3])
        with pytest.raises(ParseError):
            read_logits(p)

    def test_nonfinite_rejected(self, tmp_path):
        p = tmp_path / "a.bin"
        body = struct.pack("<4sHQIB", MAGIC, 1, 1, 2, 0) + np.array([1.0, np.nan], "<f4").tobytes()
        p.write_bytes(body)
        with pytest.raises(ValidationError, match="non-finite"):
            read_logits(p)


class TestCsv:
    def test_label_out_of_range(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("label,z0,z1\n3,0.5,-1.2\n")
        with pytest.raises(ValidationError):
            read_logits(p, "csv")

    def test_empty(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("")
        with pytest.raises(ParseError):
            read_logits(p, "csv")
        p.write_text("label,z0\n")
        with pytest.raises(ParseError):
            read_logits(p, "csv")

    def test_bad_rows(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("label,z0,z1\n0,1,2\n1,3\n")
        with pytest.raises(ShapeError, match="line 3"):
            read_logits(p, "csv")
        p.write_text("label,z0,z1\n0,1,abc\n")
        with pytest.raises(ParseError, match="line 2"):
            read_logits(p, "csv")
        p.write_text("label,z0,z1\n0,1,inf\n")
        with pytest.raises(ValidationError):
            read_logits(p, "csv")

    def test_round_trip_within_one_ulp(self, tmp_path, rng):
        recs = random_records(rng, n=200, labels=False) + random_records(rng, n=5)
        write_logits(tmp_path / "a.csv", recs, "csv")
        back = read_logits(tmp_path / "a.csv", "csv")
        assert [r.label for r in back] == [r.label for r in recs]
        a = np.vstack([r.logits for r in recs]).astype(np.float32)
        b = np.vstack([r.logits for r in back]).astype(np.float32)
        ulps = np.abs(a.view(np.int32).astype(np.int64) - b.view(np.int32).astype(np.int64))
        assert ulps.max() <= 1

    def test_header(self, tmp_path):
        write_logits(tmp_path / "a.csv", [LogitRecord([1.0, 2.0, 3.0], 2)], "csv")
        assert (tmp_path / "a.csv").read_text().splitlines() == ["label,z0,z1,z2", "2,1,2,3"]


class TestShuffle:
    def test_splitmix_reference_values(self):
        # published SplitMix64 outputs for seed 1234567
        g = SplitMix64(1234567)
        assert [g.next() for _ in range(3)] == [
            6457827717110365317,
            3203168211198807973,
            9817491932198370423,
        ]

    def test_deterministic_permutation(self):
        a = shuffle_indices(50, 7)
        assert a == shuffle_indices(50, 7)
        assert sorted(a) == list(range(50))

    def test_seeds_differ(self, rng):
        ins = random_records(rng, 8, origin=Origin.IN_TEST)
        outs = random_records(rng, 6, labels=False, origin=Origin.OOD_TEST)
        a = build_test_stream(ins, [outs], 1)
        b = build_test_stream(ins, [outs], 2)
        assert [id(r) for r in a] != [id(r) for r in b]

    @given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**64 - 1))
    def test_permutation(self, n_in, n_out, seed):
        ins = [LogitRecord([float(i)], None, Origin.IN_TEST) for i in range(n_in)]
        outs = [LogitRecord([-float(i) - 1], None, Origin.OOD_TEST) for i in range(n_out)]
        s = build_test_stream(ins, [outs], seed)
        assert s == build_test_stream(ins, [outs], seed)
        assert sorted(r.logits[0] for r in s) == sorted(r.logits[0] for r in ins + outs)
        assert sum(r.origin is Origin.IN_TEST for r in s) == n_in

    def test_empty(self):
        with pytest.raises(ValidationError):
            build_test_stream([], [[LogitRecord([1.0])]], 0)


class TestManifest:
    def write(self, tmp_path, rng, entries=None):
        for name, k in (("tr", 3), ("te", 3), ("o1", 3), ("bad", 4)):
            write_logits(tmp_path / f"{name}.bin", random_records(rng, 5, k))
        entries = entries or [
            {"name": "tr", "role": "train", "path": "tr.bin", "format": "bin"},
            {"name": "te", "role": "in_test", "path": "te.bin", "format": "bin"},
            {"name": "o1", "role": "ood_test", "path": "o1.bin", "format": "bin"},
        ]
        (tmp_path / "m.json").write_text(json.dumps({"entries": entries}))
        return tmp_path / "m.json"

    def test_load(self, tmp_path, rng):
        m = load_manifest(self.write(tmp_path, rng))
        assert m.train.name == "tr" and [e.name for e in m.ood] == ["o1"]
        data = load_datasets(m)
        assert data["o1"][0].origin is Origin.OOD_TEST

    def test_missing_role(self, tmp_path, rng):
        p = self.write(tmp_path, rng, [
            {"name": "tr", "role": "train", "path": "tr.bin"},
            {"name": "te", "role": "in_test", "path": "te.bin"},
        ])
        with pytest.raises(ValidationError, match="ood_test"):
            load_manifest(p)

    def test_missing_file(self, tmp_path, rng):
        p = self.write(tmp_path, rng, [
            {"name": "tr", "role": "train", "path": "tr.bin"},
            {"name": "te", "role": "in_test", "path": "nope.bin"},
            {"name": "o1", "role": "ood_test", "path": "o1.bin"},
        ])
        with pytest.raises(ValidationError, match="missing"):
            load_manifest(p)

    def test_width_mismatch(self, tmp_path, rng):
        p = self.write(tmp_path, rng, [
            {"name": "tr", "role": "train", "path": "tr.bin"},
            {"name": "te", "role": "in_test", "path": "te.bin"},
            {"name": "bad", "role": "ood_test", "path": "bad.bin"},
        ])
        with pytest.raises(ShapeError):
            load_datasets(load_manifest(p))
