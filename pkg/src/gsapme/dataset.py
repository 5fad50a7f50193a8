"""Typed input/output samples and their encoded (distance-ready) views."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coalitions import coalition, members
from .errors import DatasetError, DegenerateOutputError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
DISCRETE = "discrete"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, DISCRETE, CATEGORICAL)


@dataclass(frozen=True)
class ColumnSpec:
    """Declaration of one column.

    ``levels`` restricts discrete or categorical cells to a finite set and
    ``bounds`` gives an inclusive ``(low, high)`` range for numeric or discrete
    cells. Exactly one column of a dataset carries ``output=True``.
    """

    name: str
    kind: str = NUMERIC
    levels: tuple | None = None
    bounds: tuple[float, float] | None = None
    output: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DatasetError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.levels is not None:
            if len(self.levels) == 0:
                raise DatasetError(f"column {self.name!r}: empty level set")
            if self.kind == NUMERIC:
                raise DatasetError(f"column {self.name!r}: numeric columns take bounds, not levels")
            if self.kind == CATEGORICAL:
                levels = tuple(str(v) for v in self.levels)
            else:
                levels = tuple(sorted(int(v) for v in self.levels))
            if len(set(levels)) != len(levels):
                raise DatasetError(f"column {self.name!r}: duplicated levels")
            object.__setattr__(self, "levels", levels)
        if self.bounds is not None:
            if self.kind == CATEGORICAL:
                raise DatasetError(f"column {self.name!r}: categorical columns take levels, not bounds")
            lo, hi = self.bounds
            if lo > hi:
                raise DatasetError(f"column {self.name!r}: bounds {self.bounds} are reversed")
        if self.output and self.kind != NUMERIC:
            raise DatasetError(f"output column {self.name!r} must be numeric")

    def parse(self, cell: str):
        text = cell.strip()
        if self.kind == CATEGORICAL:
            return text
        try:
            value = float(text)
        except ValueError:
            raise DatasetError(f"column {self.name!r}: unparsable cell {cell!r}") from None
        if not math.isfinite(value):
            raise DatasetError(f"column {self.name!r}: unparsable cell {cell!r}")
        if self.kind == DISCRETE:
            if value != int(value):
                raise DatasetError(f"column {self.name!r}: unparsable cell {cell!r} (expected an integer)")
            return int(value)
        return value

    def validate(self, values: np.ndarray) -> None:
        if self.levels is not None:
            allowed = set(self.levels)
            bad = [v for v in np.unique(values).tolist() if v not in allowed]
            if bad:
                raise DatasetError(
                    f"column {self.name!r}: level outside declared set {list(self.levels)}: {bad[:5]}"
                )
        if self.bounds is not None:
            lo, hi = self.bounds
            if values.size and (values.min() < lo or values.max() > hi):
                raise DatasetError(f"column {self.name!r}: values outside declared range [{lo}, {hi}]")


def _column_array(spec: ColumnSpec, values) -> np.ndarray:
    if spec.kind == CATEGORICAL:
        arr = np.asarray([str(v) for v in values], dtype=object)
    elif spec.kind == DISCRETE:
        raw = np.asarray(values)
        if raw.dtype.kind == "f":
            if not np.all(raw == np.round(raw)):
                raise DatasetError(f"column {spec.name!r}: non-integer value in a discrete column")
        arr = raw.astype(np.int64)
    else:
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DatasetError(f"column {spec.name!r}: non-finite value")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """An i.i.d. sample of ``d`` typed inputs and one numeric output."""

    inputs: tuple[ColumnSpec, ...]
    output: ColumnSpec
    columns: dict
    y: np.ndarray

    @classmethod
    def from_columns(cls, specs: Sequence[ColumnSpec], data: dict) -> "Dataset":
        specs = tuple(specs)
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise DatasetError(f"column names are not unique: {names}")
        outputs = [s for s in specs if s.output]
        if len(outputs) != 1:
            raise DatasetError(f"exactly one output column is required, got {len(outputs)}")
        inputs = tuple(s for s in specs if not s.output)
        if not inputs:
            raise DatasetError("dataset needs at least one input column")
        missing = [n for n in names if n not in data]
        if missing:
            raise DatasetError(f"missing column(s): {missing}")
        cols = {}
        for spec in specs:
            arr = _column_array(spec, data[spec.name])
            spec.validate(arr)
            cols[spec.name] = arr
        lengths = {len(a) for a in cols.values()}
        if len(lengths) != 1:
            raise DatasetError(f"columns have different lengths: {sorted(lengths)}")
        n = lengths.pop()
        if n < 2:
            raise DatasetError(f"dataset needs n >= 2 rows, got {n}")
        y = cols.pop(outputs[0].name)
        return cls(inputs=inputs, output=outputs[0], columns=cols, y=y)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return len(self.inputs)

    @property
    def input_names(self) -> list[str]:
        return [s.name for s in self.inputs]

    def specs(self) -> list[ColumnSpec]:
        return [*self.inputs, self.output]

    def take(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        cols = {name: arr[rows] for name, arr in self.columns.items()}
        for arr in cols.values():
            arr.setflags(write=False)
        y = self.y[rows]
        y.setflags(write=False)
        if len(y) < 2:
            raise DatasetError(f"dataset needs n >= 2 rows, got {len(y)}")
        return Dataset(inputs=self.inputs, output=self.output, columns=cols, y=y)

    def with_output(self, name: str, y) -> "Dataset":
        out = ColumnSpec(name, NUMERIC, output=True)
        return Dataset.from_columns([*self.inputs, out], {**self.columns, name: y})


def load_csv(path, specs: Sequence[ColumnSpec]) -> Dataset:
    """Read a comma-separated file with a header row.

    Rows containing an empty cell in any declared column are skipped. Columns
    in the file that are not declared are ignored.
    """
    path = Path(path)
    specs = list(specs)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        missing = [s.name for s in specs if s.name not in header]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {missing}")
        pos = {s.name: header.index(s.name) for s in specs}
        data = {s.name: [] for s in specs}
        skipped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            cells = [row[pos[s.name]] if pos[s.name] < len(row) else "" for s in specs]
            if any(not c.strip() for c in cells):
                skipped += 1
                continue
            for s, c in zip(specs, cells):
                try:
                    data[s.name].append(s.parse(c))
                except DatasetError as exc:
                    raise DatasetError(f"{path}:{lineno}: {exc}") from None
    if skipped:
        logger.warning("%s: rejected %d row(s) with missing cells", path, skipped)
    return Dataset.from_columns(specs, data)


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the layout :func:`load_csv` reads (output column last)."""
    names = ds.input_names + [ds.output.name]
    cols = [ds.columns[n] for n in ds.input_names] + [ds.y]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*cols):
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    """Standardised numeric view of a subset of inputs.

    ``source[j]`` is the input index of column ``j``; ``center`` and ``scale``
    are the constants that were subtracted and divided. Columns that were
    constant on the sample are listed in ``dropped`` and absent from ``values``.
    """

    values: np.ndarray
    source: np.ndarray
    labels: tuple[str, ...]
    center: np.ndarray
    scale: np.ndarray
    dropped: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def select(self, subset) -> "EncodedMatrix":
        """Restrict to the encoded columns of inputs in ``subset``."""
        mask = coalition(subset)
        keep = np.array([bool(mask >> int(s) & 1) for s in self.source], dtype=bool)
        values = self.values[:, keep]
        values.setflags(write=False)
        return EncodedMatrix(
            values=values,
            source=self.source[keep],
            labels=tuple(l for l, k in zip(self.labels, keep) if k),
            center=self.center[keep],
            scale=self.scale[keep],
            dropped=self.dropped,
        )


def _raw_columns(ds: Dataset, i: int):
    spec = ds.inputs[i]
    values = ds.columns[spec.name]
    if spec.kind != CATEGORICAL:
        return [values.astype(float)], [spec.name]
    levels = spec.levels if spec.levels is not None else tuple(sorted(set(values.tolist())))
    cols = [(values == lev).astype(float) for lev in levels]
    return cols, [f"{spec.name}={lev}" for lev in levels]


def encode(ds: Dataset, subset) -> EncodedMatrix:
    """One-hot encode categorical inputs and standardise every column.

    Standardisation uses the sample mean and the ``n - 1`` standard deviation.
    """
    mask = coalition(subset)
    idx = [i for i in members(mask) if i < ds.d]
    if not idx or mask >> ds.d:
        raise DatasetError("encode needs a non-empty subset of the dataset inputs")
    cols, labels, source, dropped = [], [], [], []
    centers, scales = [], []
    for i in idx:
        raw, names = _raw_columns(ds, i)
        for col, label in zip(raw, names):
            sd = col.std(ddof=1)
            if sd == 0.0:
                dropped.append(label)
                continue
            mu = col.mean()
            cols.append((col - mu) / sd)
            labels.append(label)
            source.append(i)
            centers.append(mu)
            scales.append(sd)
    if dropped:
        logger.warning("dropping constant encoded column(s) from the distance space: %s", dropped)
    values = np.column_stack(cols) if cols else np.zeros((ds.n, 0))
    values.setflags(write=False)
    return EncodedMatrix(
        values=values,
        source=np.asarray(source, dtype=np.int64),
        labels=tuple(labels),
        center=np.asarray(centers),
        scale=np.asarray(scales),
        dropped=tuple(dropped),
    )


def subsample_size(n: int, fraction: float) -> int:
    # floor, with slack for fractions such as 0.9 * 10 = 8.999...
    return int(math.floor(fraction * n + 1e-9))


def subsample_rows(n: int, fraction: float, seed: int) -> np.ndarray:
    """Sorted indices of the ``floor(fraction * n)`` rows :func:`subsample` keeps."""
    if not 0.0 < fraction <= 1.0:
        raise DatasetError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return np.arange(n)
    m = subsample_size(n, fraction)
    if m < 2:
        raise DatasetError(f"subsample of {m} row(s) is too small")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=m, replace=False))


def subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Draw ``floor(fraction * n)`` rows without replacement, keeping row order."""
    rows = subsample_rows(ds.n, fraction, seed)
    return ds if fraction == 1.0 else ds.take(rows)


def variance_total(ds: Dataset) -> float:
    """Unbiased sample variance of the output."""
    y = ds.y
    if y.size < 2:
        raise DatasetError("variance needs at least two rows")
    if np.ptp(y) == 0.0:
        raise DegenerateOutputError("degenerate output: the output is constant")
    return float(np.var(y, ddof=1))
