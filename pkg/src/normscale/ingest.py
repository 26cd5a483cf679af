"""Logit file formats, dataset manifests and seeded test streams.

Binary layout (little-endian)::

    b"OODL" | u16 version | u64 rows | u32 cols | u8 has_labels
    | rows*cols float32 logits (row-major) | [rows int32 labels]

CSV layout: header ``label,z0,...,z{N-1}``, label ``-1`` when absent,
logits printed with 9 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import ParameterError, ParseError, ShapeError, ValidationError
from .stats import LogitRecord, Origin

MAGIC = b"OODL"
BIN_VERSION = 1
_HEADER = struct.Struct("<4sHQIB")

SHUFFLE_ALGORITHM = "splitmix64/fisher-yates"
SHUFFLE_VERSION = 1

FORMATS = ("csv", "bin")

PathLike = Union[str, Path]


def _labels_and_matrix(records: Sequence[LogitRecord]):
    if not records:
        raise ValidationError("refusing to write an empty logit file")
    width = records[0].num_classes
    for i, r in enumerate(records):
        if r.num_classes != width:
            raise ShapeError(f"record {i} has width {r.num_classes}, expected {width}")
    z = np.vstack([r.logits for r in records])
    labels = [r.label for r in records]
    return z, labels


def write_bin(path: PathLike, records: Sequence[LogitRecord]) -> None:
    z, labels = _labels_and_matrix(records)
    z32 = z.astype("<f4")
    if not np.all(np.isfinite(z32)):
        raise ValidationError("logits overflow float32")
    has_labels = any(lab is not None for lab in labels)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, BIN_VERSION, z.shape[0], z.shape[1], int(has_labels)))
        fh.write(z32.tobytes(order="C"))
        if has_labels:
            lab = np.array([-1 if x is None else x for x in labels], dtype="<i4")
            fh.write(lab.tobytes())


def _finish(z: np.ndarray, labels, origin: Origin, path) -> List[LogitRecord]:
    n = z.shape[1]
    if not np.all(np.isfinite(z)):
        bad = np.argwhere(~np.isfinite(z))[0]
        raise ValidationError(f"{path}: non-finite logit at row {bad[0]}, column {bad[1]}")
    out = []
    for i, row in enumerate(z):
        lab = None if labels is None or labels[i] == -1 else int(labels[i])
        if lab is not None and not 0 <= lab < n:
            raise ValidationError(f"{path}: row {i} label {lab} outside [0, {n})")
        out.append(LogitRecord(row, lab, origin))
    return out


def read_bin(path: PathLike, origin: Union[Origin, str] = Origin.TRAIN) -> List[LogitRecord]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError("truncated header", path=path, offset=len(data))
    magic, version, rows, cols, has_labels = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", path=path, offset=0)
    if version != BIN_VERSION:
        raise ParseError(f"unsupported format version {version}", path=path, offset=4)
    if rows == 0 or cols == 0:
        raise ParseError("file holds no logits", path=path, offset=6)
    if has_labels not in (0, 1):
        raise ParseError(f"label-presence byte must be 0 or 1, got {has_labels}", path=path, offset=18)
    expected = _HEADER.size + rows * cols * 4 + (rows * 4 if has_labels else 0)
    if len(data) != expected:
        raise ParseError(f"expected {expected} bytes, found {len(data)}", path=path, offset=len(data))
    z = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    z = z.reshape(rows, cols).astype(np.float64)
    labels = None
    if has_labels:
        labels = np.frombuffer(data, dtype="<i4", count=rows, offset=_HEADER.size + rows * cols * 4)
    return _finish(z, labels, Origin(origin), path)


def write_csv(path: PathLike, records: Sequence[LogitRecord]) -> None:
    z, labels = _labels_and_matrix(records)
    buf = io.StringIO()
    buf.write(",".join(["label"] + [f"z{j}" for j in range(z.shape[1])]) + "\n")
    for lab, row in zip(labels, z):
        buf.write(",".join([str(-1 if lab is None else lab)] + [f"{x:.9g}" for x in row]) + "\n")
    Path(path).write_text(buf.getvalue())


def read_csv(path: PathLike, origin: Union[Origin, str] = Origin.TRAIN) -> List[LogitRecord]:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header:
        raise ParseError("empty file", path=path, line=1)
    n = len(header) - 1
    if header[0].strip() != "label" or n < 1 or [h.strip() for h in header[1:]] != [f"z{j}" for j in range(n)]:
        raise ParseError("header must be label,z0,...,z{N-1}", path=path, line=1)
    rows, labels = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n + 1:
            raise ShapeError(f"{path}: line {lineno} has {len(row) - 1} logits, expected {n}")
        try:
            labels.append(int(row[0]))
            rows.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), path=path, line=lineno) from exc
        if labels[-1] < -1 or labels[-1] >= n:
            raise ValidationError(f"{path}: line {lineno} label {labels[-1]} outside [0, {n})")
    if not rows:
        raise ParseError("no data rows", path=path, line=2)
    return _finish(np.array(rows, dtype=np.float64), labels, Origin(origin), path)


def read_logits(path: PathLike, format: str = "bin", origin: Union[Origin, str] = Origin.TRAIN) -> List[LogitRecord]:
    if format == "bin":
        return read_bin(path, origin)
    if format == "csv":
        return read_csv(path, origin)
    raise ParameterError(f"unknown logit format {format!r}; expected one of {FORMATS}")


def write_logits(path: PathLike, records: Sequence[LogitRecord], format: str = "bin") -> None:
    if format == "bin":
        write_bin(path, records)
    elif format == "csv":
        write_csv(path, records)
    else:
        raise ParameterError(f"unknown logit format {format!r}; expected one of {FORMATS}")


def guess_format(path: PathLike) -> str:
    return "csv" if str(path).lower().endswith(".csv") else "bin"


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    role: Origin
    path: Path
    format: str = "bin"


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple

    @property
    def train(self) -> ManifestEntry:
        return next(e for e in self.entries if e.role is Origin.TRAIN)

    @property
    def in_test(self) -> ManifestEntry:
        return next(e for e in self.entries if e.role is Origin.IN_TEST)

    @property
    def ood(self) -> List[ManifestEntry]:
        return [e for e in self.entries if e.role is Origin.OOD_TEST]

    def to_dict(self, relative_to: Optional[Path] = None) -> dict:
        def rel(p: Path) -> str:
            if relative_to is not None:
                try:
                    return p.relative_to(relative_to).as_posix()
                except ValueError:
                    pass
            return p.as_posix()

        return {"entries": [
            {"name": e.name, "role": e.role.value, "path": rel(e.path), "format": e.format}
            for e in self.entries
        ]}

    def save(self, path: PathLike) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(relative_to=path.parent), indent=2) + "\n")


def load_manifest(path: PathLike, check_files: bool = True) -> DatasetManifest:
    """Load and validate a manifest; relative paths resolve against its folder."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from exc
    raw = data.get("entries") if isinstance(data, dict) else None
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: manifest needs an 'entries' list")
    entries = []
    for i, e in enumerate(raw):
        try:
            role = Origin(e["role"])
            fmt = e.get("format") or guess_format(e["path"])
            entry = ManifestEntry(str(e["name"]), role, path.parent / e["path"], fmt)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: entry {i} is malformed: {exc}") from exc
        if entry.format not in FORMATS:
            raise ValidationError(f"{path}: entry {entry.name!r} has unknown format {entry.format!r}")
        if check_files and not entry.path.is_file():
            raise ValidationError(f"{path}: entry {entry.name!r} points to missing file {entry.path}")
        entries.append(entry)
    roles = [e.role for e in entries]
    if roles.count(Origin.TRAIN) != 1 or roles.count(Origin.IN_TEST) != 1:
        raise ValidationError(f"{path}: need exactly one train and one in_test entry")
    if roles.count(Origin.OOD_TEST) < 1:
        raise ValidationError(f"{path}: need at least one ood_test entry")
    return DatasetManifest(tuple(entries))


def load_datasets(manifest: DatasetManifest) -> Dict[str, List[LogitRecord]]:
    """Read every manifest entry (keyed by name) and check they share N."""
    out = {}
    width = None
    for e in manifest.entries:
        recs = read_logits(e.path, e.format, e.role)
        n = recs[0].num_classes
        if width is None:
            width = n
        elif n != width:
            raise ShapeError(f"dataset {e.name!r} has {n} classes, expected {width}")
        out[e.name] = recs
    return out


_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator; tiny, fully specified and portable."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` by rejection."""
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next()
            if r < limit:
                return r % bound


def shuffle_indices(n: int, seed: int) -> List[int]:
    """Fisher-Yates permutation of ``range(n)`` driven by SplitMix64(seed)."""
    rng = SplitMix64(seed)
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def build_test_stream(
    in_test: Sequence[LogitRecord],
    ood_sets: Sequence[Sequence[LogitRecord]],
    seed: int,
) -> List[LogitRecord]:
    """Concatenate in-distribution and OoD records, then shuffle with ``seed``."""
    if not in_test:
        raise ValidationError("in-distribution test set is empty")
    if not ood_sets or any(len(s) == 0 for s in ood_sets):
        raise ValidationError("need at least one non-empty OoD set")
    pool = list(in_test)
    for s in ood_sets:
        pool.extend(s)
    return [pool[i] for i in shuffle_indices(len(pool), seed)]


def shuffle_metadata() -> dict:
    return {"algorithm": SHUFFLE_ALGORITHM, "version": SHUFFLE_VERSION}
