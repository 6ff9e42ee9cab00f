"""Usage features and capacity-change targets per fixed-length interval.

Every raw variable is split by four fleet-wide, time-weighted percentile
thresholds. For each of the six threshold pairs (a, b) the feature is the
fraction of the interval spent in [p_a, p_b). The next 36 features are the
interval-to-interval differences of those fractions, and the last two are
elapsed time in days and its square root.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .data import SECONDS_PER_DAY, VARIABLES, CellSeries
from .errors import DataError, ParseError, SchemaError

PERCENTILES = (1.0, 33.0, 67.0, 99.0)
PAIRS = kernels.PAIRS
N_OCCUPANCY = len(VARIABLES) * len(PAIRS)
N_FEATURES = 2 * N_OCCUPANCY + 2


class FeatureDescriptor(NamedTuple):
    name: str
    kind: str  # "occupancy" | "difference" | "time" | "sqrt_time"
    variable: str | None
    pair: tuple[int, int] | None


def _build_catalog() -> tuple[FeatureDescriptor, ...]:
    occ = [FeatureDescriptor(f"{v}_{a}_{b}", "occupancy", v, (a, b))
           for v in VARIABLES for a, b in PAIRS]
    diff = [FeatureDescriptor("d" + d.name, "difference", d.variable, d.pair) for d in occ]
    return tuple(occ + diff + [FeatureDescriptor("t_days", "time", None, None),
                               FeatureDescriptor("sqrt_t_days", "sqrt_time", None, None)])


CATALOG = _build_catalog()
FEATURE_NAMES = tuple(d.name for d in CATALOG)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}
T_DAYS = FEATURE_INDEX["t_days"]


def feature_index(name_or_index) -> int:
    if isinstance(name_or_index, str):
        return FEATURE_INDEX[name_or_index]
    return int(name_or_index)


@dataclass(frozen=True, eq=False)
class PercentileBounds:
    """Four thresholds per variable, rows in ``VARIABLES`` order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(len(VARIABLES), len(PERCENTILES))
        if np.any(np.diff(v, axis=1) < 0):
            raise ValueError("thresholds must be non-decreasing within each variable")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __getitem__(self, variable: str) -> np.ndarray:
        return self.values[VARIABLES.index(variable)]

    def to_dict(self) -> dict:
        return {"percentiles": list(PERCENTILES),
                "thresholds": {var: row.tolist() for var, row in zip(VARIABLES, self.values)}}

    @classmethod
    def from_dict(cls, d: dict) -> "PercentileBounds":
        return cls(np.array([d["thresholds"][var] for var in VARIABLES]))

    def digest(self) -> bytes:
        return self.values.tobytes()


class IntervalRecord(NamedTuple):
    cell_id: str
    interval_index: int
    features: np.ndarray
    delta_q: float


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Column-wise collection of interval records, possibly from several cells.

    ``q_start`` is the capacity (% nominal) at the start of each interval, so
    ``q_start[0] + cumsum(delta_q)`` rebuilds a cell's observed trajectory.
    """

    cell_id: np.ndarray
    interval: np.ndarray
    features: np.ndarray
    delta_q: np.ndarray
    q_start: np.ndarray
    interval_hours: float = 12.0

    def __len__(self) -> int:
        return int(self.delta_q.size)

    def __iter__(self) -> Iterator[IntervalRecord]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> IntervalRecord:
        return IntervalRecord(str(self.cell_id[i]), int(self.interval[i]),
                              self.features[i], float(self.delta_q[i]))

    @property
    def t_days(self) -> np.ndarray:
        return self.features[:, T_DAYS]

    def take(self, mask) -> "FeatureTable":
        return FeatureTable(self.cell_id[mask], self.interval[mask], self.features[mask],
                            self.delta_q[mask], self.q_start[mask], self.interval_hours)

    def for_cell(self, cell_id: str) -> "FeatureTable":
        return self.take(self.cell_id == cell_id)

    def cell_ids(self) -> list[str]:
        _, first = np.unique(self.cell_id, return_index=True)
        return [str(self.cell_id[i]) for i in np.sort(first)]

    @classmethod
    def empty(cls, interval_hours: float = 12.0) -> "FeatureTable":
        return cls(np.array([], dtype=object), np.array([], dtype=int),
                   np.empty((0, N_FEATURES)), np.array([]), np.array([]), interval_hours)

    @classmethod
    def concat(cls, tables) -> "FeatureTable":
        tables = list(tables)
        if not tables:
            return cls.empty()
        return cls(np.concatenate([t.cell_id for t in tables]),
                   np.concatenate([t.interval for t in tables]),
                   np.vstack([t.features for t in tables]),
                   np.concatenate([t.delta_q for t in tables]),
                   np.concatenate([t.q_start for t in tables]),
                   tables[0].interval_hours)


def weighted_percentiles(values, weights, percentiles=PERCENTILES) -> np.ndarray:
    """Smallest value below which at least p % of the total weight lies."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = weights > 0
    values, weights = values[keep], weights[keep]
    if values.size == 0:
        raise DataError("no positive-duration samples to build percentiles from")
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    cum /= cum[-1]
    idx = np.searchsorted(cum, np.asarray(percentiles) / 100.0 - 1e-12, side="left")
    return values[order][np.minimum(idx, values.size - 1)]


def compute_bounds(cells) -> PercentileBounds:
    """Fleet-wide time-weighted 1st/33rd/67th/99th percentiles for every variable."""
    cells = list(cells)
    if not cells:
        raise DataError("cannot compute bounds for an empty fleet")
    vals = np.hstack([c.variables() for c in cells])
    dur = np.concatenate([c.durations() for c in cells])
    return PercentileBounds(np.vstack([weighted_percentiles(v, dur) for v in vals]))


def featurize(cell: CellSeries, bounds: PercentileBounds, interval_hours: float = 12.0) -> FeatureTable:
    """Features and capacity change for every complete interval of one cell.

    Intervals start at the first sample; a trailing partial interval is dropped.
    """
    dt = interval_hours * 3600.0
    if cell.n_samples < 2:
        return FeatureTable.empty(interval_hours)
    t0 = float(cell.time[0])
    n_int = int(np.floor((cell.time[-1] - t0) / dt + 1e-9))
    if n_int < 1:
        return FeatureTable.empty(interval_hours)

    occ = kernels.occupancy(cell.time, cell.variables(), t0, dt, n_int, bounds.values)
    diff = np.zeros_like(occ)
    diff[1:] = occ[1:] - occ[:-1]
    edges = t0 + dt * np.arange(n_int + 1)
    t_days = edges[1:] / SECONDS_PER_DAY
    feats = np.column_stack([occ, diff, t_days, np.sqrt(t_days)])

    q_pct = 100.0 * cell.capacity_at(edges) / cell.nominal_capacity
    return FeatureTable(np.full(n_int, cell.cell_id, dtype=object), np.arange(n_int), feats,
                        np.diff(q_pct), q_pct[:-1], interval_hours)


def featurize_many(cells, bounds: PercentileBounds, interval_hours: float = 12.0) -> FeatureTable:
    return FeatureTable.concat(featurize(c, bounds, interval_hours) for c in cells)


def export_features_csv(table: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cell_id", "interval", *FEATURE_NAMES, "delta_q"))
        for i in range(len(table)):
            w.writerow((table.cell_id[i], int(table.interval[i]),
                        *map(repr, table.features[i].tolist()), repr(float(table.delta_q[i]))))


def read_features_csv(path, interval_hours: float = 12.0) -> FeatureTable:
    """Inverse of :func:`export_features_csv`. ``q_start`` is not stored and comes back NaN."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["cell_id", "interval", *FEATURE_NAMES, "delta_q"]
        if header != expected:
            raise SchemaError(f"{path}: header does not match the feature matrix schema")
        ids, idx, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise ParseError(f"{path.name}: expected {len(expected)} fields", lineno)
            try:
                idx.append(int(row[1]))
                rows.append([float(x) for x in row[2:]])
            except ValueError:
                raise ParseError(f"{path.name}: non-numeric field", lineno) from None
            ids.append(row[0])
    a = np.array(rows, dtype=float).reshape(-1, N_FEATURES + 1)
    return FeatureTable(np.array(ids, dtype=object), np.array(idx, dtype=int), a[:, :-1], a[:, -1],
                        np.full(len(ids), np.nan), interval_hours)
