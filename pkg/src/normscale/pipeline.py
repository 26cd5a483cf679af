"""End-to-end evaluation and temperature sweeps over manifest datasets."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ingest
from .detector import (
    DetectorConfig,
    Scaling,
    StatsMode,
    msp_score,
    predicted_classes,
    scale_stream,
    score_scaled,
    write_scored_csv,
)
from .errors import ParameterError, ValidationError
from .metrics import (
    DEFAULT_BINS,
    EvalReport,
    aggregate,
    ece,
    evaluate,
    multi_threshold_eval,
    reliability,
    split_scores,
)
from .stats import DEFAULT_EPSILON, ClassStats, LogitRecord, Origin, fit_class_stats

log = logging.getLogger(__name__)

SEED_SEMANTICS = (
    "seeds drive test-stream shuffling (and synthetic generation when used); "
    "no model is trained"
)


def default_tau_grid() -> List[float]:
    return [float(x) for x in np.logspace(-1, 2, 24)]


@dataclass
class RunSpec:
    manifest: Path
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    seeds: Tuple[int, ...] = (0,)
    bins: int = DEFAULT_BINS
    out: Optional[Path] = None
    stats: Optional[Path] = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.manifest = Path(self.manifest)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ParameterError("need at least one seed")
        if any(not 0 <= s < 2**64 for s in self.seeds):
            raise ParameterError("seeds must be unsigned 64-bit integers")
        if self.bins < 1:
            raise ParameterError("bin count must be >= 1")
        if self.out is not None:
            self.out = Path(self.out)
        if self.stats is not None:
            self.stats = Path(self.stats)


def variant_name(cfg: DetectorConfig) -> str:
    parts = [cfg.score_kind.value, cfg.scaling.value]
    if cfg.scaling in (Scaling.TAU_NORM, Scaling.TEMP):
        parts.append(f"tau={cfg.tau:g}")
    if cfg.stats_mode is not StatsMode.FROZEN:
        parts.append(cfg.stats_mode.value)
    return "/".join(parts)


def _stats_for(spec: RunSpec, train: Sequence[LogitRecord]) -> ClassStats:
    if spec.stats is not None:
        return ClassStats.load(spec.stats)
    return fit_class_stats(train, spec.epsilon)


def _calibration(records, scaled, cfg: DetectorConfig, bins: int):
    """Reliability bins over the labelled in-distribution part of a stream."""
    mask = np.array([r.origin is Origin.IN_TEST and r.label is not None for r in records])
    if not mask.any():
        return None
    sub = [r for r, m in zip(records, mask) if m]
    pred = predicted_classes(sub, scaled[mask], cfg)
    _, conf = msp_score(scaled[mask])
    correct = pred == np.array([r.label for r in sub])
    return reliability(np.atleast_1d(conf), correct, bins)


def _write_pairs(path: Path, header: Tuple[str, str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows((f"{a:.9g}", f"{b:.9g}") for a, b in rows)


def _write_bins(path: Path, rel) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin", "count", "acc", "conf"))
        for m, c, a, p in rel.rows():
            w.writerow((m, c, "" if a is None else f"{a:.9g}", "" if p is None else f"{p:.9g}"))


def run_eval(spec: RunSpec) -> dict:
    """Evaluate one detector configuration on every (seed, OoD set) pair.

    Per seed the per-dataset blocks are averaged over OoD sets; the final
    ``aggregate`` block is the mean and std of those per-seed averages.
    """
    manifest = ingest.load_manifest(spec.manifest)
    data = ingest.load_datasets(manifest)
    stats = _stats_for(spec, data[manifest.train.name])
    cfg = spec.detector
    n = stats.num_classes
    if data[manifest.in_test.name][0].num_classes != n:
        raise ValidationError("statistics and datasets disagree on the number of classes")

    if spec.out is not None:
        spec.out.mkdir(parents=True, exist_ok=True)

    runs = []
    per_seed: Dict[str, List[EvalReport]] = {"single": [], "per_class": []}
    for seed in spec.seeds:
        blocks = {}
        reports: Dict[str, List[EvalReport]] = {"single": [], "per_class": []}
        for entry in manifest.ood:
            stream = ingest.build_test_stream(data[manifest.in_test.name], [data[entry.name]], seed)
            scaled = scale_stream(stream, stats, cfg)
            scored = score_scaled(stream, scaled, cfg)
            rel = _calibration(stream, scaled, cfg, spec.bins)
            single = evaluate(split_scores(scored))
            single = replace(single, ece=None if rel is None else ece(rel))
            multi = multi_threshold_eval(scored, n)
            reports["single"].append(single)
            reports["per_class"].append(multi)
            blocks[entry.name] = {"single": single.to_dict(), "per_class": multi.to_dict()}
            log.info("seed %d / %s: auroc %.4f (single) %.4f (per-class)", seed, entry.name, single.auroc, multi.auroc)
            if spec.out is not None:
                stem = f"{seed}_{entry.name}"
                _write_pairs(spec.out / f"roc_{stem}.csv", ("fpr", "tpr"), single.roc)
                _write_pairs(spec.out / f"pr_{stem}.csv", ("recall", "precision"), single.pr)
                if rel is not None:
                    _write_bins(spec.out / f"reliability_{stem}.csv", rel)
                write_scored_csv(spec.out / f"scores_{stem}.csv", scored)
        seed_agg = {g: aggregate(r) for g, r in reports.items()}
        for g in per_seed:
            per_seed[g].append(seed_agg[g])
        runs.append({
            "seed": seed,
            "datasets": blocks,
            "aggregate": {g: a.summary() for g, a in seed_agg.items()},
        })

    report = {
        "metadata": {
            "variant": variant_name(cfg),
            "detector": cfg.to_dict(),
            "in_dataset": manifest.in_test.name,
            "ood_datasets": [e.name for e in manifest.ood],
            "seeds": list(spec.seeds),
            "seed_semantics": SEED_SEMANTICS,
            "bins": spec.bins,
            "positive_class": "in_distribution",
            "aupr_flavor": "AUPR-In",
            "fpr_target_tpr": 0.95,
            "shuffle": ingest.shuffle_metadata(),
            "stats": stats.to_dict(),
        },
        "runs": runs,
        "aggregate": {g: aggregate(r).summary() for g, r in per_seed.items()},
    }
    if spec.out is not None:
        write_json(spec.out / "report.json", report)
    return report


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def sweep_tau(
    spec: RunSpec, grid: Optional[Sequence[float]] = None
) -> List[Tuple[float, float, float]]:
    """ECE of tau-norm-scaling and of temperature scaling for each tau.

    Uses the labelled in-distribution test set with frozen statistics.
    Predicted labels follow ``spec.detector.prediction_source``.
    """
    grid = default_tau_grid() if grid is None else [float(t) for t in grid]
    if any(not t > 0 for t in grid):
        raise ParameterError("every tau in the grid must be positive")
    manifest = ingest.load_manifest(spec.manifest)
    train = ingest.read_logits(manifest.train.path, manifest.train.format, Origin.TRAIN)
    in_test = ingest.read_logits(manifest.in_test.path, manifest.in_test.format, Origin.IN_TEST)
    if any(r.label is None for r in in_test):
        raise ValidationError("the tau sweep needs ground-truth labels on the in-distribution test set")
    stats = _stats_for(spec, train)
    labels = np.array([r.label for r in in_test])
    base = spec.detector

    rows = []
    for tau in grid:
        row = [tau]
        for scaling in (Scaling.TAU_NORM, Scaling.TEMP):
            cfg = replace(base, scaling=scaling, tau=tau, stats_mode=StatsMode.FROZEN)
            scaled = scale_stream(in_test, stats, cfg)
            pred = predicted_classes(in_test, scaled, cfg)
            _, conf = msp_score(scaled)
            rel = reliability(conf, pred == labels, spec.bins)
            row.append(ece(rel))
        rows.append(tuple(row))
    return rows


def write_sweep_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tau", "ece_norm", "ece_temp"))
        w.writerows((f"{t:.9g}", f"{a:.9g}", f"{b:.9g}") for t, a, b in rows)


def synth_to_dir(cfg, out: Path, fmt: str = "bin") -> ingest.DatasetManifest:
    """Generate a synthetic benchmark and write it with a manifest."""
    from .synthgen import generate

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    train, in_test, ood = generate(cfg)
    ext = "csv" if fmt == "csv" else "bin"
    entries = []
    for name, role, recs in (
        ("synth_train", Origin.TRAIN, train),
        ("synth_in", Origin.IN_TEST, in_test),
        ("synth_ood", Origin.OOD_TEST, ood),
    ):
        path = out / f"{name}.{ext}"
        ingest.write_logits(path, recs, fmt)
        entries.append(ingest.ManifestEntry(name, role, path, fmt))
    manifest = ingest.DatasetManifest(tuple(entries))
    manifest.save(out / "manifest.json")
    cfg.save(out / "synth.json")
    return manifest
