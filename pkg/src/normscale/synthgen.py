"""Synthetic class-conditional logit datasets.

In-distribution sample: true class ``y`` uniform, logit ``y`` drawn from
``Normal(class_means[y], class_stds[y])``, every other logit from
``Normal(off_mean, off_std)``. OoD sample: every logit from
``Normal(ood_mean, ood_std)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import ParameterError, ParseError
from .stats import LogitRecord, Origin


@dataclass(frozen=True)
class SynthConfig:
    class_means: Tuple[float, ...]
    class_stds: Tuple[float, ...]
    off_mean: float = 2.0
    off_std: float = 1.5
    ood_mean: float = 10.0
    ood_std: float = 1.5
    n_train: int = 5000
    n_in_test: int = 2000
    n_ood_test: int = 2000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_means", tuple(float(x) for x in self.class_means))
        object.__setattr__(self, "class_stds", tuple(float(x) for x in self.class_stds))
        if not self.class_means:
            raise ParameterError("need at least one class")
        if len(self.class_means) != len(self.class_stds):
            raise ParameterError("class_means and class_stds must have the same length")
        if min(self.class_stds + (self.off_std, self.ood_std)) <= 0:
            raise ParameterError("all standard deviations must be positive")
        if min(self.n_train, self.n_in_test, self.n_ood_test) < 1:
            raise ParameterError("all sample counts must be >= 1")

    @property
    def num_classes(self) -> int:
        return len(self.class_means)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["num_classes"] = self.num_classes
        d["class_means"] = list(self.class_means)
        d["class_stds"] = list(self.class_stds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        n = data.pop("num_classes", None)
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ParameterError(f"bad synthetic config: {exc}") from exc
        if n is not None and n != cfg.num_classes:
            raise ParameterError(f"num_classes={n} but {cfg.num_classes} class means given")
        return cfg

    @classmethod
    def load(cls, path) -> "SynthConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=path, line=exc.lineno) from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def fig1_like(seed: int = 0, **overrides) -> SynthConfig:
    """Three classes whose own-logit distributions peak at different places,
    with OoD logits sitting just below them (values read off by eye)."""
    params = dict(
        class_means=(13.0, 20.0, 11.0),
        class_stds=(2.0, 4.0, 1.5),
        off_mean=2.0,
        off_std=1.5,
        ood_mean=10.0,
        ood_std=1.5,
        n_train=5000,
        n_in_test=2000,
        n_ood_test=2000,
        seed=seed,
    )
    params.update(overrides)
    return SynthConfig(**params)


def _in_dist(rng: np.random.Generator, cfg: SynthConfig, n: int, origin: Origin) -> List[LogitRecord]:
    k = cfg.num_classes
    means = np.asarray(cfg.class_means)
    stds = np.asarray(cfg.class_stds)
    y = rng.integers(0, k, size=n)
    z = rng.normal(cfg.off_mean, cfg.off_std, size=(n, k))
    z[np.arange(n), y] = rng.normal(means[y], stds[y])
    return [LogitRecord(row, int(lab), origin) for row, lab in zip(z, y)]


def generate(cfg: SynthConfig):
    """Return ``(train, in_test, ood_test)`` record lists, deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    train = _in_dist(rng, cfg, cfg.n_train, Origin.TRAIN)
    in_test = _in_dist(rng, cfg, cfg.n_in_test, Origin.IN_TEST)
    z = rng.normal(cfg.ood_mean, cfg.ood_std, size=(cfg.n_ood_test, cfg.num_classes))
    ood = [LogitRecord(row, None, Origin.OOD_TEST) for row in z]
    return train, in_test, ood
