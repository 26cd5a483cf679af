"""Command-line interface: ``normscale {fit,eval,sweep-tau,synth}``.

Exit codes: 0 success, 2 input/validation error, 3 metric undefined.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import ingest
from .detector import DetectorConfig
from .errors import NormScaleError
from .metrics import DEFAULT_BINS
from .pipeline import RunSpec, run_eval, sweep_tau, synth_to_dir, write_sweep_csv
from .stats import DEFAULT_EPSILON, Origin, fit_class_stats
from .synthgen import SynthConfig, fig1_like

log = logging.getLogger("normscale")

_SCALING = {"none": "none", "norm": "norm", "tau-norm": "tau_norm", "temp": "temp"}
_STATS_MODE = {"frozen": "frozen", "running-literal": "running_literal", "running-standard": "running_standard"}
_PRED_SOURCE = {"unscaled": "unscaled_logits", "scaled": "scaled_logits"}


def _seed_list(values):
    seeds = []
    for v in values:
        seeds.extend(int(x) for x in str(v).split(",") if x.strip())
    return seeds


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", choices=["msp", "energy"], default="msp")
    p.add_argument("--scaling", choices=list(_SCALING), default="none")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--stats-mode", choices=list(_STATS_MODE), default="frozen")
    p.add_argument("--prediction-source", choices=list(_PRED_SOURCE), default="unscaled")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)


def _runspec(args, detector: DetectorConfig) -> RunSpec:
    return RunSpec(
        manifest=args.manifest,
        detector=detector,
        seeds=tuple(_seed_list(args.seeds)),
        bins=args.bins,
        out=args.out,
        stats=args.stats,
        epsilon=args.epsilon,
    )


def _detector(args) -> DetectorConfig:
    return DetectorConfig(
        score_kind=args.detector,
        scaling=_SCALING[args.scaling],
        tau=args.tau,
        stats_mode=_STATS_MODE[args.stats_mode],
        prediction_source=_PRED_SOURCE[args.prediction_source],
        epsilon=args.epsilon,
    )


def cmd_fit(args) -> int:
    fmt = args.format or ingest.guess_format(args.train)
    records = ingest.read_logits(args.train, fmt, Origin.TRAIN)
    stats = fit_class_stats(records, args.epsilon)
    stats.save(args.out)
    log.info("fitted %d-class statistics on %d samples -> %s", stats.num_classes, stats.sample_count, args.out)
    return 0


def cmd_eval(args) -> int:
    spec = _runspec(args, _detector(args))
    report = run_eval(spec)
    agg = report["aggregate"]
    for grouping in ("single", "per_class"):
        cells = "  ".join(
            f"{m}={agg[grouping][m]['mean']:.4f}±{agg[grouping][m]['std']:.4f}"
            for m in ("auroc", "aupr", "fpr95")
        )
        print(f"{report['metadata']['variant']:<24} {grouping:<10} {cells}")
    return 0


def cmd_sweep_tau(args) -> int:
    spec = _runspec(args, _detector(args))
    rows = sweep_tau(spec, _float_list(args.grid) if args.grid else None)
    if args.out is None:
        print("tau,ece_norm,ece_temp")
        for t, a, b in rows:
            print(f"{t:.9g},{a:.9g},{b:.9g}")
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(args.out, rows)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.load(args.config) if args.config else fig1_like()
    if args.seed is not None:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    synth_to_dir(cfg, args.out, args.format)
    log.info("wrote synthetic benchmark to %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normscale", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit per-class logit statistics on a training logit file")
    p.add_argument("train", type=Path)
    p.add_argument("--format", choices=ingest.FORMATS)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_fit)

    for name, func, helptext in (
        ("eval", cmd_eval, "evaluate a detector on every OoD set of a manifest"),
        ("sweep-tau", cmd_sweep_tau, "ECE versus tau for tau-norm-scaling and temperature scaling"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--manifest", type=Path, required=True)
        p.add_argument("--stats", type=Path, help="statistics JSON; fitted on the train entry if omitted")
        _detector_args(p)
        p.add_argument("--seeds", nargs="+", default=["0"])
        p.add_argument("--bins", type=int, default=DEFAULT_BINS)
        p.add_argument("--out", type=Path, required=(name == "eval"))
        if name == "sweep-tau":
            p.add_argument("--grid", help="comma-separated taus (default: 24 log-spaced in [0.1, 100])")
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="write a synthetic benchmark and its manifest")
    p.add_argument("--config", type=Path, help="synth.json; the fig1-like config if omitted")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=ingest.FORMATS, default="bin")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NormScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
