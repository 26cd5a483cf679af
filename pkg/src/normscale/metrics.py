"""Detection and calibration metrics.

In-distribution samples are the positive class throughout: TPR is the
fraction of in-distribution samples kept, precision is the in-distribution
purity of the kept set (AUPR-In). A sample is kept at threshold ``c`` when
its score is ``>= c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detector import ScoredSample
from .errors import ConsistencyError, MetricError, ParameterError, ShapeError, ValidationError
from .stats import Origin

DEFAULT_BINS = 15
METRIC_NAMES = ("auroc", "aupr", "fpr95", "ece")


@dataclass(frozen=True, eq=False)
class BinaryScoreSet:
    in_scores: np.ndarray
    out_scores: np.ndarray

    def __post_init__(self):
        for name in ("in_scores", "out_scores"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            if arr.size == 0:
                raise MetricError(f"{name} is empty; curve metrics are undefined")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def swapped(self) -> "BinaryScoreSet":
        return BinaryScoreSet(self.out_scores, self.in_scores)


@dataclass(frozen=True)
class _Sweep:
    thresholds: np.ndarray  # distinct scores, descending
    tp: np.ndarray  # in-distribution kept at each threshold
    fp: np.ndarray  # OoD kept at each threshold
    n_pos: int
    n_neg: int


def _sweep(s: BinaryScoreSet) -> _Sweep:
    scores = np.concatenate([s.in_scores, s.out_scores])
    positive = np.concatenate([np.ones(s.in_scores.size, bool), np.zeros(s.out_scores.size, bool)])
    order = np.argsort(-scores, kind="stable")
    scores, positive = scores[order], positive[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(positive, dtype=np.int64)[ends]
    fp = (ends + 1) - tp
    return _Sweep(scores[ends], tp, fp, int(s.in_scores.size), int(s.out_scores.size))


def roc_points(s: BinaryScoreSet) -> List[Tuple[float, float]]:
    """(FPR, TPR) at each distinct threshold, anchored at (0,0) and (1,1)."""
    sw = _sweep(s)
    pts = [(0.0, 0.0)]
    pts += [(fp / sw.n_neg, tp / sw.n_pos) for tp, fp in zip(sw.tp.tolist(), sw.fp.tolist())]
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def pr_points(s: BinaryScoreSet) -> List[Tuple[float, float]]:
    """(recall, precision) at each distinct threshold, descending."""
    sw = _sweep(s)
    return [(tp / sw.n_pos, tp / (tp + fp)) for tp, fp in zip(sw.tp.tolist(), sw.fp.tolist())]


def auroc(s: BinaryScoreSet) -> float:
    """Trapezoidal area under the ROC curve.

    Accumulated in integer counts, so the result is exactly the
    Mann-Whitney statistic with ties counted as one half.
    """
    sw = _sweep(s)
    tp = np.r_[0, sw.tp]
    fp = np.r_[0, sw.fp]
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2 * sw.n_pos * sw.n_neg)


def aupr(s: BinaryScoreSet) -> float:
    """Average precision: sum of recall increments times precision."""
    sw = _sweep(s)
    total = 0.0
    prev_tp = 0
    for tp, fp in zip(sw.tp.tolist(), sw.fp.tolist()):
        if tp != prev_tp:
            total += (tp - prev_tp) / sw.n_pos * (tp / (tp + fp))
            prev_tp = tp
    return total


def fpr_at_tpr(s: BinaryScoreSet, target: float = 0.95) -> float:
    """Lowest FPR among thresholds whose TPR reaches ``target`` (no interpolation)."""
    if not 0 < target <= 1:
        raise ParameterError(f"target TPR must lie in (0, 1], got {target}")
    sw = _sweep(s)
    for tp, fp in zip(sw.tp.tolist(), sw.fp.tolist()):
        if tp / sw.n_pos >= target:
            return fp / sw.n_neg
    raise MetricError("no threshold reaches the target TPR")  # unreachable: last tp == n_pos


@dataclass(frozen=True, eq=False)
class ReliabilityBins:
    """Equal-width confidence bins; bin ``m`` (1-based) covers ``((m-1)/M, m/M]``.

    ``acc`` and ``conf`` are NaN for empty bins.
    """

    M: int
    counts: np.ndarray
    acc: np.ndarray
    conf: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        """``(bin, count, acc, conf)`` per bin, None for empty-bin values."""
        for m in range(self.M):
            c = int(self.counts[m])
            yield (
                m + 1,
                c,
                float(self.acc[m]) if c else None,
                float(self.conf[m]) if c else None,
            )


def bin_index(confidences, M: int) -> np.ndarray:
    """1-based bin for each confidence; 0 goes to bin 1."""
    p = np.asarray(confidences, dtype=np.float64)
    m = np.ceil(p * M).astype(np.int64)
    m = np.clip(m, 1, M)
    # repair float rounding in p*M so membership follows the interval
    # endpoints (m-1)/M and m/M evaluated exactly as written
    lower = (m - 1) / M
    upper = m / M
    m = np.where((p <= lower) & (m > 1), m - 1, m)
    m = np.where((p > upper) & (m < M), m + 1, m)
    return m


def reliability(confidences, correct, M: int = DEFAULT_BINS) -> ReliabilityBins:
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ParameterError(f"bin count must be a positive integer, got {M}")
    p = np.asarray(confidences, dtype=np.float64).ravel()
    ok = np.asarray(correct, dtype=bool).ravel()
    if p.shape != ok.shape:
        raise ShapeError(f"{p.size} confidences but {ok.size} correctness flags")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValidationError("confidences must lie in [0, 1]")
    idx = bin_index(p, M) - 1
    counts = np.bincount(idx, minlength=M)
    acc = np.full(M, np.nan)
    conf = np.full(M, np.nan)
    # exactly-rounded sums keep bin means independent of sample order
    for m in np.flatnonzero(counts):
        members = idx == m
        acc[m] = int(ok[members].sum()) / counts[m]
        conf[m] = math.fsum(p[members]) / counts[m]
    return ReliabilityBins(int(M), counts, acc, conf)


def ece(bins: ReliabilityBins, n: Optional[int] = None) -> float:
    """Count-weighted mean absolute gap between bin accuracy and confidence."""
    total = bins.total
    if n is None:
        n = total
    if n != total:
        raise ConsistencyError(f"n={n} but the bins hold {total} samples")
    if n == 0:
        raise MetricError("ECE of an empty sample is undefined")
    used = bins.counts > 0
    gaps = np.abs(bins.acc[used] - bins.conf[used])
    return math.fsum(bins.counts[used] / n * gaps)


def expected_calibration_error(confidences, correct, M: int = DEFAULT_BINS) -> float:
    bins = reliability(confidences, correct, M)
    return ece(bins, bins.total)


@dataclass(frozen=True)
class EvalReport:
    """Detection metrics for one evaluation, or the mean of several.

    For aggregated reports the metric fields hold means and ``std`` holds
    the population standard deviations.
    """

    auroc: float
    aupr: float
    fpr95: float
    ece: Optional[float] = None
    grouping: str = "single"
    n_in: int = 0
    n_out: int = 0
    roc: Tuple[Tuple[float, float], ...] = ()
    pr: Tuple[Tuple[float, float], ...] = ()
    std: Optional[Dict[str, Optional[float]]] = None
    n_reports: int = 1
    groups: Optional[Dict[int, Dict[str, float]]] = None

    def metrics(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_dict(self) -> dict:
        out = {"auroc": self.auroc, "aupr": self.aupr, "fpr95": self.fpr95, "ece": self.ece,
               "n_in": self.n_in, "n_out": self.n_out}
        if self.groups is not None:
            out["groups_used"] = sorted(self.groups)
        return out

    def summary(self) -> Dict[str, Dict[str, Optional[float]]]:
        std = self.std or {}
        return {
            name: {"mean": getattr(self, name), "std": std.get(name, 0.0 if getattr(self, name) is not None else None)}
            for name in METRIC_NAMES
        }


def evaluate(s: BinaryScoreSet, fpr_target: float = 0.95, curves: bool = True) -> EvalReport:
    return EvalReport(
        auroc=auroc(s),
        aupr=aupr(s),
        fpr95=fpr_at_tpr(s, fpr_target),
        n_in=int(s.in_scores.size),
        n_out=int(s.out_scores.size),
        roc=tuple(roc_points(s)) if curves else (),
        pr=tuple(pr_points(s)) if curves else (),
    )


def _mean(values: Sequence[float]) -> float:
    values = list(values)
    # identical inputs must average to themselves exactly
    if all(v == values[0] for v in values):
        return float(values[0])
    return math.fsum(values) / len(values)


def _pstd(values: Sequence[float], mean: float) -> float:
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))


def split_scores(scored: Sequence[ScoredSample]) -> BinaryScoreSet:
    ins, outs = [], []
    for s in scored:
        if s.origin is Origin.IN_TEST:
            ins.append(s.score)
        elif s.origin is Origin.OOD_TEST:
            outs.append(s.score)
        else:
            raise ValidationError(f"scored sample has origin {s.origin.value!r}; expected test data")
    return BinaryScoreSet(ins, outs)


def multi_threshold_eval(scored: Sequence[ScoredSample], num_classes: int) -> EvalReport:
    """Per-predicted-class metrics, averaged with equal class weights.

    Groups missing either in-distribution or OoD samples are skipped.
    """
    ins: List[List[float]] = [[] for _ in range(num_classes)]
    outs: List[List[float]] = [[] for _ in range(num_classes)]
    for s in scored:
        if not 0 <= s.predicted_class < num_classes:
            raise ValidationError(f"predicted class {s.predicted_class} outside [0, {num_classes})")
        if s.origin is Origin.IN_TEST:
            ins[s.predicted_class].append(s.score)
        elif s.origin is Origin.OOD_TEST:
            outs[s.predicted_class].append(s.score)
        else:
            raise ValidationError(f"scored sample has origin {s.origin.value!r}; expected test data")

    groups: Dict[int, Dict[str, float]] = {}
    for k in range(num_classes):
        if ins[k] and outs[k]:
            r = evaluate(BinaryScoreSet(ins[k], outs[k]), curves=False)
            groups[k] = {"auroc": r.auroc, "aupr": r.aupr, "fpr95": r.fpr95,
                         "n_in": r.n_in, "n_out": r.n_out}
    if not groups:
        raise MetricError("no predicted-class group holds both in-distribution and OoD samples")
    return EvalReport(
        auroc=_mean([g["auroc"] for g in groups.values()]),
        aupr=_mean([g["aupr"] for g in groups.values()]),
        fpr95=_mean([g["fpr95"] for g in groups.values()]),
        grouping="per_class",
        n_in=sum(map(len, ins)),
        n_out=sum(map(len, outs)),
        groups=groups,
    )


def aggregate(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean and population std of each metric across ``reports``."""
    reports = list(reports)
    if not reports:
        raise ParameterError("cannot aggregate an empty list of reports")
    means: Dict[str, Optional[float]] = {}
    stds: Dict[str, Optional[float]] = {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in reports]
        if any(v is None for v in vals):
            means[name] = stds[name] = None
            continue
        means[name] = _mean(vals)
        stds[name] = _pstd(vals, means[name])
    kinds = {r.grouping for r in reports}
    return EvalReport(
        **means,
        grouping=kinds.pop() if len(kinds) == 1 else "mixed",
        n_in=sum(r.n_in for r in reports),
        n_out=sum(r.n_out for r in reports),
        std=stds,
        n_reports=len(reports),
    )
