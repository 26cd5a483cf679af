"""Per-class logit statistics and the scalings built on them.

Fitting uses the population form (divide by the training-set size) and
exactly-rounded sums, so refitting the same rows in any order gives
bit-identical statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import FitError, ParameterError, ParseError, ShapeError, ValidationError

DEFAULT_EPSILON = 1e-12


class Origin(str, Enum):
    TRAIN = "train"
    IN_TEST = "in_test"
    OOD_TEST = "ood_test"


class StreamMode(str, Enum):
    LITERAL = "literal"
    STANDARD = "standard"


@dataclass(frozen=True, eq=False)
class LogitRecord:
    """One sample's raw logit vector, optional true label and origin tag."""

    logits: np.ndarray
    label: Optional[int] = None
    origin: Origin = Origin.TRAIN

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=np.float64)
        if z.ndim != 1 or z.size == 0:
            raise ShapeError(f"logits must be a non-empty vector, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValidationError("logits contain non-finite values")
        if self.label is not None and not 0 <= self.label < z.size:
            raise ValidationError(f"label {self.label} outside [0, {z.size})")
        z.flags.writeable = False
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "origin", Origin(self.origin))

    @property
    def num_classes(self) -> int:
        return self.logits.size

    def __eq__(self, other):
        if not isinstance(other, LogitRecord):
            return NotImplemented
        return (
            self.label == other.label
            and self.origin == other.origin
            and np.array_equal(self.logits, other.logits)
        )

    __hash__ = None


LogitsLike = Union[np.ndarray, Sequence[float]]


def stack_logits(records: Iterable[LogitRecord]) -> np.ndarray:
    """Stack records into a ``(D, N)`` float64 matrix, checking widths."""
    rows = [r.logits for r in records]
    if not rows:
        return np.empty((0, 0))
    width = rows[0].size
    for i, row in enumerate(rows):
        if row.size != width:
            raise ShapeError(f"record {i} has width {row.size}, expected {width}")
    return np.vstack(rows)


@dataclass(frozen=True, eq=False)
class ClassStats:
    """Per-class logit mean and population standard deviation."""

    mu: np.ndarray
    sigma: np.ndarray
    sample_count: int
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        sigma = np.array(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or mu.shape != sigma.shape or mu.size == 0:
            raise ShapeError(f"mu {mu.shape} and sigma {sigma.shape} must be equal-length vectors")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)) or not np.all(np.isfinite(mu)):
            raise ValidationError("sigma must be finite and non-negative, mu finite")
        if int(self.sample_count) < 1:
            raise ValidationError("sample_count must be >= 1")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        mu.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "sample_count", int(self.sample_count))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def num_classes(self) -> int:
        return self.mu.size

    def __eq__(self, other):
        if not isinstance(other, ClassStats):
            return NotImplemented
        return (
            self.sample_count == other.sample_count
            and self.epsilon == other.epsilon
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.sigma, other.sigma)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "mu": [float(x) for x in self.mu],
            "sigma": [float(x) for x in self.sigma],
            "sample_count": self.sample_count,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassStats":
        try:
            n = int(data["num_classes"])
            out = cls(
                mu=data["mu"],
                sigma=data["sigma"],
                sample_count=data["sample_count"],
                epsilon=data.get("epsilon", DEFAULT_EPSILON),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed statistics document: {exc!r}") from exc
        if out.num_classes != n:
            raise ShapeError(f"num_classes={n} but mu has {out.num_classes} entries")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ClassStats":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=path, line=exc.lineno) from exc
        return cls.from_dict(data)


def fit_class_stats(
    train: Union[Sequence[LogitRecord], np.ndarray], epsilon: float = DEFAULT_EPSILON
) -> ClassStats:
    """Fit column-wise mean and population std over every training row.

    ``train`` may be a sequence of records or a ``(D, N)`` array.
    """
    if isinstance(train, np.ndarray):
        z = np.asarray(train, dtype=np.float64)
        if z.ndim != 2:
            raise ShapeError(f"expected a 2-d logit matrix, got shape {z.shape}")
    else:
        z = stack_logits(train)
    if z.shape[0] == 0:
        raise FitError("cannot fit statistics on an empty training set")
    if not np.all(np.isfinite(z)):
        raise ValidationError("training logits contain non-finite values")
    d = z.shape[0]
    # fsum is exactly rounded, which makes the fit independent of row order;
    # constant columns take their value directly so they centre to exactly 0
    mu = np.array([col[0] if col.min() == col.max() else math.fsum(col) / d for col in z.T])
    var = np.array([math.fsum((col - m) ** 2) / d for col, m in zip(z.T, mu)])
    return ClassStats(mu=mu, sigma=np.sqrt(var), sample_count=d, epsilon=epsilon)


def _check_width(z: np.ndarray, n: int) -> None:
    if z.shape[-1] != n:
        raise ShapeError(f"logit width {z.shape[-1]} does not match {n} classes")


def _scale(z: np.ndarray, mu: np.ndarray, sigma: np.ndarray, epsilon: float) -> np.ndarray:
    return (z - mu) / np.maximum(sigma, epsilon)


def norm_scale(logits: LogitsLike, stats: ClassStats, epsilon: Optional[float] = None) -> np.ndarray:
    """Z-score each class column: ``(z - mu) / max(sigma, epsilon)``.

    Works on a single vector or a ``(D, N)`` matrix. ``epsilon`` defaults
    to the value stored in ``stats``.
    """
    z = np.asarray(logits, dtype=np.float64)
    _check_width(z, stats.num_classes)
    eps = stats.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise ParameterError("epsilon must be positive")
    return _scale(z, stats.mu, stats.sigma, eps)


def _check_tau(tau: float) -> None:
    if not (tau > 0 and math.isfinite(tau)):
        raise ParameterError(f"tau must be a positive finite number, got {tau}")


def tau_norm_scale(
    logits: LogitsLike, stats: ClassStats, tau: float, epsilon: Optional[float] = None
) -> np.ndarray:
    """Norm-scaling with an extra temperature; ``tau=1`` is plain norm-scaling."""
    _check_tau(tau)
    return norm_scale(logits, stats, epsilon) / tau


def temperature_scale(logits: LogitsLike, tau: float) -> np.ndarray:
    _check_tau(tau)
    return np.asarray(logits, dtype=np.float64) / tau


@dataclass(frozen=True, eq=False)
class StreamState:
    """Running per-class mean/variance after ``t`` test-time updates.

    ``mode="literal"`` applies the recurrences

        mu_t  = (mu_{t-1} + z) / (t + 1)
        var_t = (var_{t-1} + (z - mu_t)**2) / (t + 1)

    verbatim (history is discounted geometrically). ``mode="standard"``
    treats the training statistics as one pseudo-sample and keeps an
    ordinary running average with a Welford variance update.
    """

    base: ClassStats
    t: int
    mu_t: np.ndarray
    var_t: np.ndarray
    mode: StreamMode = StreamMode.LITERAL

    def __post_init__(self):
        object.__setattr__(self, "mode", StreamMode(self.mode))
        for name in ("mu_t", "var_t"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def sigma_t(self) -> np.ndarray:
        return np.sqrt(self.var_t)

    def as_stats(self) -> ClassStats:
        """Snapshot of the current running statistics as a ClassStats."""
        return ClassStats(
            mu=self.mu_t,
            sigma=self.sigma_t,
            sample_count=self.base.sample_count + self.t,
            epsilon=self.base.epsilon,
        )


def stream_init(stats: ClassStats, mode: Union[StreamMode, str] = StreamMode.LITERAL) -> StreamState:
    return StreamState(base=stats, t=0, mu_t=stats.mu, var_t=stats.sigma**2, mode=mode)


def stream_update(state: StreamState, logits: LogitsLike) -> StreamState:
    """Fold one test sample into the running statistics."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError("stream_update takes one logit vector at a time")
    _check_width(z, state.base.num_classes)
    t = state.t + 1
    if state.mode is StreamMode.LITERAL:
        mu = (state.mu_t + z) / (t + 1)
        var = (state.var_t + (z - mu) ** 2) / (t + 1)
    else:
        delta = z - state.mu_t
        mu = (t * state.mu_t + z) / (t + 1)
        var = (t * state.var_t + delta * (z - mu)) / (t + 1)
    # clamp contract: rounding must never produce a negative variance
    var = np.maximum(var, 0.0)
    return replace(state, t=t, mu_t=mu, var_t=var)


def stream_scale(
    state: StreamState, logits: LogitsLike, tau: float = 1.0, epsilon: Optional[float] = None
) -> np.ndarray:
    """Norm-scale ``logits`` with the state's current running statistics."""
    _check_tau(tau)
    z = np.asarray(logits, dtype=np.float64)
    _check_width(z, state.base.num_classes)
    eps = state.base.epsilon if epsilon is None else epsilon
    return _scale(z, state.mu_t, np.sqrt(state.var_t), eps) / tau


__all__ = [
    "DEFAULT_EPSILON",
    "ClassStats",
    "LogitRecord",
    "Origin",
    "StreamMode",
    "StreamState",
    "fit_class_stats",
    "norm_scale",
    "stack_logits",
    "stream_init",
    "stream_scale",
    "stream_update",
    "tau_norm_scale",
    "temperature_scale",
]
