"""Softmax/energy scoring of (optionally scaled) logits.

All scores are oriented so that higher means more in-distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from .errors import DomainError, ParameterError, ShapeError
from .stats import (
    ClassStats,
    LogitRecord,
    Origin,
    StreamMode,
    norm_scale,
    stack_logits,
    stream_init,
    stream_scale,
    stream_update,
    temperature_scale,
)


class ScoreKind(str, Enum):
    MSP = "msp"
    ENERGY = "energy"


class Scaling(str, Enum):
    NONE = "none"
    NORM = "norm"
    TAU_NORM = "tau_norm"
    TEMP = "temp"


class StatsMode(str, Enum):
    FROZEN = "frozen"
    RUNNING_LITERAL = "running_literal"
    RUNNING_STANDARD = "running_standard"


class PredictionSource(str, Enum):
    UNSCALED = "unscaled_logits"
    SCALED = "scaled_logits"


class Decision(str, Enum):
    IN_DISTRIBUTION = "in_distribution"
    OUT_OF_DISTRIBUTION = "out_of_distribution"


@dataclass(frozen=True)
class DetectorConfig:
    score_kind: ScoreKind = ScoreKind.MSP
    scaling: Scaling = Scaling.NONE
    tau: float = 1.0
    stats_mode: StatsMode = StatsMode.FROZEN
    prediction_source: PredictionSource = PredictionSource.UNSCALED
    epsilon: Optional[float] = None

    def __post_init__(self):
        for name, kind in (
            ("score_kind", ScoreKind),
            ("scaling", Scaling),
            ("stats_mode", StatsMode),
            ("prediction_source", PredictionSource),
        ):
            try:
                object.__setattr__(self, name, kind(getattr(self, name)))
            except ValueError as exc:
                raise ParameterError(str(exc)) from exc
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.stats_mode is not StatsMode.FROZEN and self.scaling not in (Scaling.NORM, Scaling.TAU_NORM):
            raise ParameterError("running statistics require scaling 'norm' or 'tau_norm'")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")

    @property
    def needs_stats(self) -> bool:
        return self.scaling in (Scaling.NORM, Scaling.TAU_NORM)

    @property
    def effective_tau(self) -> float:
        # plain norm-scaling ignores tau
        return 1.0 if self.scaling is Scaling.NORM else self.tau

    def to_dict(self) -> dict:
        return {
            "score_kind": self.score_kind.value,
            "scaling": self.scaling.value,
            "tau": self.tau,
            "stats_mode": self.stats_mode.value,
            "prediction_source": self.prediction_source.value,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class ScoredSample:
    predicted_class: int
    score: float
    score_kind: ScoreKind
    origin: Origin


def _finite(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise ShapeError("empty logit vector")
    if not np.all(np.isfinite(z)):
        raise DomainError("logits must be finite")
    return z


def softmax(logits) -> np.ndarray:
    """Max-subtracted softmax over the last axis."""
    z = _finite(logits)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def msp_score(logits):
    """Return ``(predicted_class, max softmax probability)``.

    Ties in the argmax go to the lowest class index. For a matrix input
    both elements are arrays.
    """
    z = _finite(logits)
    p = softmax(z)
    pred = np.argmax(z, axis=-1)
    conf = np.max(p, axis=-1)
    if p.ndim == 1:
        return int(pred), float(conf)
    return pred, conf


def energy_score(logits, tau: float = 1.0):
    """``tau * logsumexp(z / tau)``; the negated free energy."""
    if not (tau > 0 and math.isfinite(tau)):
        raise ParameterError(f"tau must be positive, got {tau}")
    z = _finite(logits) / tau
    m = z.max(axis=-1, keepdims=True)
    lse = np.squeeze(m, -1) + np.log(np.exp(z - m).sum(axis=-1))
    out = tau * lse
    return float(out) if np.ndim(out) == 0 else out


def decide(score: float, threshold: float) -> Decision:
    return Decision.OUT_OF_DISTRIBUTION if score < threshold else Decision.IN_DISTRIBUTION


def _score(scaled: np.ndarray, kind: ScoreKind):
    if kind is ScoreKind.MSP:
        return msp_score(scaled)[1]
    return energy_score(scaled)


def scale_logits(z: np.ndarray, config: DetectorConfig, stats: Optional[ClassStats]) -> np.ndarray:
    """Apply the configured frozen scaling to a vector or matrix of logits."""
    if config.scaling is Scaling.NONE:
        return np.asarray(z, dtype=np.float64)
    if config.scaling is Scaling.TEMP:
        return temperature_scale(z, config.tau)
    if stats is None:
        raise ParameterError(f"scaling '{config.scaling.value}' needs fitted statistics")
    # norm and tau_norm share one expression so tau=1 is bit-identical to norm
    return norm_scale(z, stats, config.epsilon) / config.effective_tau


def scale_stream(
    records: Sequence[LogitRecord],
    stats: Optional[ClassStats],
    config: DetectorConfig,
) -> np.ndarray:
    """Scaled logits for an ordered test stream, one row per record.

    With running statistics each record is first folded into the state and
    then scaled with the updated statistics, so rows depend on the order of
    ``records``.
    """
    z = stack_logits(records)
    if z.size == 0:
        return z
    if stats is not None and z.shape[1] != stats.num_classes:
        raise ShapeError(f"logit width {z.shape[1]} does not match {stats.num_classes} classes")
    if config.stats_mode is StatsMode.FROZEN:
        return scale_logits(z, config, stats)
    if stats is None:
        raise ParameterError("running statistics need fitted statistics to start from")
    mode = StreamMode.LITERAL if config.stats_mode is StatsMode.RUNNING_LITERAL else StreamMode.STANDARD
    state = stream_init(stats, mode)
    scaled = np.empty_like(z)
    for i, row in enumerate(z):
        state = stream_update(state, row)
        scaled[i] = stream_scale(state, row, config.effective_tau, config.epsilon)
    return scaled


def predicted_classes(records: Sequence[LogitRecord], scaled: np.ndarray, config: DetectorConfig) -> np.ndarray:
    source = stack_logits(records) if config.prediction_source is PredictionSource.UNSCALED else scaled
    return np.argmax(source, axis=1)


def score_stream(
    records: Sequence[LogitRecord],
    stats: Optional[ClassStats],
    config: DetectorConfig,
) -> List[ScoredSample]:
    """Score an ordered test stream; see :func:`scale_stream` for ordering."""
    if not records:
        return []
    return score_scaled(records, scale_stream(records, stats, config), config)


def score_scaled(records: Sequence[LogitRecord], scaled: np.ndarray, config: DetectorConfig) -> List[ScoredSample]:
    """Build ScoredSamples from already-scaled logits of ``records``."""
    pred = predicted_classes(records, scaled, config)
    scores = np.atleast_1d(_score(scaled, config.score_kind))
    return [
        ScoredSample(int(p), float(s), config.score_kind, r.origin)
        for p, s, r in zip(pred, scores, records)
    ]


def write_scored_csv(path, scored: Sequence[ScoredSample]) -> None:
    lines = ["origin,predicted_class,score"]
    lines += [f"{s.origin.value},{s.predicted_class},{s.score:.9g}" for s in scored]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
