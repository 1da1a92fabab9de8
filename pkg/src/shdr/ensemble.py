"""Response ensembles, driver signals, and their file formats.

Missing observations are stored as NaN inside float arrays. They are never
imputed here; downstream stages decide how to treat them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateChannel, EmptyInput, ParseError, ShortSeries

MISSING = float("nan")
_MISSING_TOKENS = {"", "nan", "NaN", "NAN"}


@dataclass(frozen=True)
class ResponseEnsemble:
    """N aligned response channels sampled at the same T timepoints.

    ``values`` has shape (T, N); NaN marks a missing observation.
    """

    values: np.ndarray
    sample_period: float = 1.0
    labels: Optional[tuple] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] == 0:
            raise EmptyInput("ensemble needs at least one channel")
        if values.shape[0] < 2:
            raise ShortSeries(f"series length T={values.shape[0]} < 2")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")
        if np.isinf(values).any():
            raise ValueError("infinite values are not valid observations")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != values.shape[1]:
                raise ValueError("one label per channel required")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_channels(cls, channels: Sequence[Sequence[float]], **kwargs):
        lengths = {len(c) for c in channels}
        if not channels:
            raise EmptyInput("no channels given")
        if len(lengths) != 1:
            raise ValueError(f"channels have unequal lengths {sorted(lengths)}")
        return cls(np.column_stack([np.asarray(c, dtype=float) for c in channels]), **kwargs)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def channel(self, k: int) -> np.ndarray:
        return self.values[:, k]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    def subset(self, channels: Sequence[int]) -> "ResponseEnsemble":
        labels = None if self.labels is None else tuple(self.labels[k] for k in channels)
        return ResponseEnsemble(self.values[:, list(channels)], self.sample_period, labels)


@dataclass(frozen=True)
class DriverSignal:
    """A reconstructed (or ground-truth) driver.

    Continuous signals have shape (T_r,) or (T_r, m); discrete signals are
    integer labels in {0..K-1}. ``time_offset`` is the raw-sample index of
    the first value, so ``values[t]`` belongs to raw timepoint
    ``t + time_offset``.
    """

    values: np.ndarray
    mode: str = "continuous"
    time_offset: int = 0
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown driver mode {self.mode!r}")
        values = np.asarray(self.values)
        if self.mode == "discrete":
            values = values.astype(np.int64)
            if values.size and (values.min() < 0 or len(np.unique(values)) != values.max() + 1):
                raise ValueError("discrete labels must form a contiguous set 0..K-1")
        else:
            values = values.astype(float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_states(self) -> int:
        if self.mode != "discrete":
            raise ValueError("n_states is only defined for discrete signals")
        return int(self.values.max()) + 1 if self.values.size else 0

    @property
    def primary(self) -> np.ndarray:
        """The leading signal: the first mode of a continuous estimate, or the labels."""
        return self.values if self.values.ndim == 1 else self.values[:, 0]


@dataclass(frozen=True)
class IngestOptions:
    header: bool = False
    delimiter: str = ","
    sample_period: float = 1.0


def _parse_cell(cell, row, column):
    token = cell.strip()
    if token in _MISSING_TOKENS:
        return MISSING
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric cell {token!r}", row=row, column=column) from None
    if math.isinf(value):
        raise ParseError(f"infinite cell {token!r}", row=row, column=column)
    return value


def load_csv(path, options: IngestOptions = IngestOptions()) -> ResponseEnsemble:
    """Read a CSV with one row per timepoint and one column per channel.

    Empty cells and ``NaN`` become missing values. Row numbers in errors are
    1-based file line numbers; column numbers are 1-based.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=options.delimiter)]
    # trailing blank lines are not timepoints
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    labels = None
    first_line = 1
    if options.header and rows:
        labels = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    if not rows:
        raise EmptyInput(f"{path} contains no data rows")
    width = len(rows[0]) if labels is None else len(labels)
    if width == 0:
        raise EmptyInput(f"{path} contains no columns")
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise ParseError(f"expected {width} cells, found {len(row)}", row=line)
        for j, cell in enumerate(row):
            data[i, j] = _parse_cell(cell, line, j + 1)
    if data.shape[0] < 2:
        raise ShortSeries(f"{path} has T={data.shape[0]} timepoints; at least 2 required")
    return ResponseEnsemble(data, sample_period=options.sample_period, labels=labels)


def _fmt(value) -> str:
    return "NaN" if math.isnan(value) else format(value, ".17g")


def save_csv(ensemble: ResponseEnsemble, path, header: bool = False) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            labels = ensemble.labels or tuple(f"x{k}" for k in range(ensemble.N))
            writer.writerow(labels)
        for row in ensemble.values:
            writer.writerow([_fmt(v) for v in row])


def zscore(ensemble: ResponseEnsemble) -> ResponseEnsemble:
    """Standardize each channel with its mean and population std over observed entries.

    Zero-variance channels become all zeros; missing entries stay missing.
    """
    out = np.array(ensemble.values)
    for k in range(ensemble.N):
        col = out[:, k]
        ok = ~np.isnan(col)
        if ok.sum() < 2:
            raise DegenerateChannel(f"channel {k} has fewer than 2 observed values")
        mean = col[ok].mean()
        std = col[ok].std()
        col[ok] = 0.0 if std == 0 else (col[ok] - mean) / std
    return ResponseEnsemble(out, ensemble.sample_period, ensemble.labels)


def constant_channels(ensemble: ResponseEnsemble) -> list:
    """Indices of channels whose observed values have zero variance."""
    return [k for k in range(ensemble.N) if np.nanstd(ensemble.channel(k)) == 0]


def save_driver(signal: DriverSignal, path, parameters: Optional[dict] = None) -> Path:
    """Write a driver estimate as CSV plus a ``.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    values = signal.values if signal.values.ndim == 2 else signal.values[:, None]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in values:
            if signal.mode == "discrete":
                writer.writerow([int(v) for v in row])
            else:
                writer.writerow([_fmt(v) for v in row])
    sidecar = path.with_suffix(".json")
    meta = {
        "mode": signal.mode,
        "T_r": len(signal),
        "time_offset": signal.time_offset,
        "parameters": parameters or {},
    }
    info = {k: v for k, v in signal.info.items() if _jsonable(v)}
    if info:
        meta["info"] = info
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return sidecar


def load_driver(path) -> DriverSignal:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] == 1:
        data = data[:, 0]
    return DriverSignal(data, mode=meta["mode"], time_offset=meta["time_offset"])


def _jsonable(value) -> bool:
    try:
        json.dumps(value)
    except TypeError:
        return False
    return True
