import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from normscale.detector import (
    Decision,
    DetectorConfig,
    ScoreKind,
    decide,
    energy_score,
    msp_score,
    scale_stream,
    score_stream,
    softmax,
    write_scored_csv,
)
from normscale.errors import DomainError, ParameterError
from normscale.stats import LogitRecord, Origin, fit_class_stats, norm_scale

finite = st.floats(-100, 100, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


class TestSoftmax:
    def test_symmetric(self):
        assert softmax([0.0, 0.0]).tolist() == [0.5, 0.5]
        for c in (-1e4, 0.0, 3.7, 1e4):
            assert softmax([c] * 4).tolist() == [0.25] * 4

    def test_exact_exponentials(self):
        p = softmax([math.log(1), math.log(2), math.log(3)])
        assert p == pytest.approx([1 / 6, 2 / 6, 3 / 6], abs=1e-15)

    def test_no_overflow(self):
        p = softmax([1e4, 0.0, -1e4])
        assert np.all(np.isfinite(p)) and p[0] == 1.0

    def test_nonfinite(self):
        with pytest.raises(DomainError):
            softmax([0.0, np.nan])

    @given(vectors, st.floats(-100, 100))
    def test_shift_invariant(self, z, c):
        p = softmax(z)
        assert np.all(p > 0)
        assert abs(p.sum() - 1) <= 1e-12
        assert np.allclose(softmax(z + c), p, rtol=0, atol=1e-12)


class TestMSP:
    def test_tie_goes_to_lowest(self):
        assert msp_score([0.0, 0.0]) == (0, 0.5)
        assert msp_score([1.0, 3.0, 3.0])[0] == 1

    def test_closed_form(self):
        cls, score = msp_score([10.0, 0.0])
        assert cls == 0
        assert score == pytest.approx(1 / (1 + math.exp(-10)), rel=1e-15)
        assert score == pytest.approx(0.9999546, abs=1e-7)

    def test_saturation(self):
        cls, score = msp_score([50.0, 0.0, 0.0])
        assert cls == 0 and score == pytest.approx(1.0)

    def test_batch(self):
        cls, score = msp_score(np.array([[0.0, 1.0], [2.0, 0.0]]))
        assert cls.tolist() == [1, 0]

    @given(vectors)
    def test_range(self, z):
        n = z.size
        _, s = msp_score(z)
        assert 1 / n <= s <= 1
        if np.all(z == z[0]):
            assert s == pytest.approx(1 / n, rel=1e-15)
        elif np.ptp(z) > 1e-6:
            assert s > 1 / n

    @pytest.mark.parametrize("z", [[3.0, 1.0, -2.0], [0.1, 0.2], [5.0, 4.9, 4.8, -1.0]])
    def test_temperature_monotone(self, z):
        z = np.asarray(z)
        scores = [msp_score(z / t) for t in (1, 10, 1000)]
        assert len({c for c, _ in scores}) == 1
        vals = [s for _, s in scores]
        assert vals[0] > vals[1] > vals[2] > 1 / z.size


class TestEnergy:
    def test_values(self):
        assert energy_score([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
        assert energy_score([4.25]) == 4.25
        assert np.isfinite(energy_score([1e4, -1e4, 1e4]))

    def test_tau(self):
        assert energy_score([0.0, 0.0], tau=2.0) == pytest.approx(2 * math.log(2))
        with pytest.raises(ParameterError):
            energy_score([0.0], tau=0.0)

    @given(vectors, st.floats(-100, 100))
    def test_shift_identity(self, z, c):
        assert abs(energy_score(z + c) - energy_score(z) - c) <= 1e-9


class TestDecide:
    @pytest.mark.parametrize(
        "score,expected",
        [(0.4, Decision.OUT_OF_DISTRIBUTION), (0.5, Decision.IN_DISTRIBUTION), (0.9, Decision.IN_DISTRIBUTION)],
    )
    def test_threshold(self, score, expected):
        assert decide(score, 0.5) is expected


class TestConfig:
    def test_running_requires_norm(self):
        with pytest.raises(ParameterError):
            DetectorConfig(scaling="temp", stats_mode="running_literal")
        DetectorConfig(scaling="tau_norm", stats_mode="running_standard", tau=2.0)

    def test_tau_positive(self):
        with pytest.raises(ParameterError):
            DetectorConfig(scaling="temp", tau=0.0)

    def test_unknown_value(self):
        with pytest.raises(ParameterError):
            DetectorConfig(scaling="bogus")


@pytest.fixture
def stream(rng):
    ins = [LogitRecord(rng.normal([5, 1, 0], 1.0), int(rng.integers(3)), Origin.IN_TEST) for _ in range(30)]
    outs = [LogitRecord(rng.normal(2, 1.0, 3), None, Origin.OOD_TEST) for _ in range(20)]
    out = ins + outs
    order = rng.permutation(len(out))
    return [out[i] for i in order]


@pytest.fixture
def train_stats(rng):
    return fit_class_stats(rng.normal([5, 1, 0], [1.0, 2.0, 0.5], size=(200, 3)))


class TestScoreStream:
    def test_identity_pipeline(self, stream):
        out = score_stream(stream, None, DetectorConfig())
        for r, s in zip(stream, out):
            cls, score = msp_score(r.logits)
            assert (s.predicted_class, s.score, s.origin) == (cls, score, r.origin)
            assert s.score_kind is ScoreKind.MSP

    def test_norm_frozen_uses_zscores(self, stream, train_stats):
        out = score_stream(stream, train_stats, DetectorConfig(scaling="norm"))
        for r, s in zip(stream, out):
            assert s.score == msp_score(norm_scale(r.logits, train_stats))[1]
            assert s.predicted_class == int(np.argmax(r.logits))

    def test_scaled_prediction_source(self, stream, train_stats):
        cfg = DetectorConfig(scaling="norm", prediction_source="scaled_logits")
        out = score_stream(stream, train_stats, cfg)
        for r, s in zip(stream, out):
            assert s.predicted_class == int(np.argmax(norm_scale(r.logits, train_stats)))

    def test_energy(self, stream):
        out = score_stream(stream, None, DetectorConfig(score_kind="energy", scaling="temp", tau=2.0))
        assert out[0].score == pytest.approx(energy_score(stream[0].logits / 2.0))

    @pytest.mark.parametrize("mode", ["frozen", "running_literal", "running_standard"])
    def test_deterministic(self, stream, train_stats, mode):
        cfg = DetectorConfig(scaling="norm", stats_mode=mode)
        assert score_stream(stream, train_stats, cfg) == score_stream(list(stream), train_stats, cfg)

    def test_frozen_is_permutation_equivariant(self, stream, train_stats):
        cfg = DetectorConfig(scaling="tau_norm", tau=1.7)
        out = score_stream(stream, train_stats, cfg)
        rev = score_stream(stream[::-1], train_stats, cfg)
        assert out == rev[::-1]

    @pytest.mark.parametrize("mode", ["running_literal", "running_standard"])
    def test_running_is_not(self, stream, train_stats, mode):
        cfg = DetectorConfig(scaling="norm", stats_mode=mode)
        out = score_stream(stream, train_stats, cfg)
        rev = score_stream(stream[::-1], train_stats, cfg)
        assert [s.score for s in out] != [s.score for s in rev[::-1]]

    def test_running_update_then_scale(self, stream, train_stats):
        from normscale.stats import stream_init, stream_scale, stream_update

        cfg = DetectorConfig(scaling="norm", stats_mode="running_standard")
        scaled = scale_stream(stream[:3], train_stats, cfg)
        st_ = stream_init(train_stats, "standard")
        for r, row in zip(stream[:3], scaled):
            st_ = stream_update(st_, r.logits)
            assert np.array_equal(row, stream_scale(st_, r.logits))

    def test_needs_stats(self, stream):
        with pytest.raises(ParameterError):
            score_stream(stream, None, DetectorConfig(scaling="norm"))

    def test_scored_csv(self, stream, tmp_path):
        out = score_stream(stream[:3], None, DetectorConfig())
        write_scored_csv(tmp_path / "s.csv", out)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "origin,predicted_class,score"
        origin, cls, score = lines[1].split(",")
        assert origin == out[0].origin.value and int(cls) == out[0].predicted_class
        assert float(score) == pytest.approx(out[0].score, rel=1e-8)
