"""Cell data model, CSV ingest/export and observed end of life."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import CensoredCellError, DataError, ParseError, SchemaError

SECONDS_PER_DAY = 86400.0
EOL_FRACTION = 0.8

SAMPLE_COLUMNS = ("cell_id", "time_s", "current_a", "voltage_v", "temperature_c")
CAPACITY_COLUMNS = ("cell_id", "time_s", "capacity_ah", "nominal_ah")

# order of the six raw/derived variables everywhere in the package
VARIABLES = ("I", "V", "T", "P", "absI", "absP")


class RawSample(NamedTuple):
    time: float
    current: float
    voltage: float
    temperature: float


class CapacityObservation(NamedTuple):
    time: float
    capacity: float


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CellSeries:
    """Raw usage samples and capacity observations for one cell.

    Arrays are stored column-wise and made read-only. Times are seconds since
    cell start, capacities in Ah.
    """

    cell_id: str
    time: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    temperature: np.ndarray
    capacity_time: np.ndarray
    capacity: np.ndarray
    nominal_capacity: float
    _derived: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("time", "current", "voltage", "temperature", "capacity_time", "capacity"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.time.size
        if not (self.current.size == self.voltage.size == self.temperature.size == n):
            raise DataError(f"cell {self.cell_id}: sample columns differ in length")
        if self.capacity_time.size != self.capacity.size:
            raise DataError(f"cell {self.cell_id}: capacity columns differ in length")
        if n and np.any(np.diff(self.time) <= 0):
            raise DataError(f"cell {self.cell_id}: non-monotonic time in samples")
        if not np.all(np.isfinite(self.voltage)) or np.any(self.voltage <= 0):
            raise DataError(f"cell {self.cell_id}: voltage must be finite and positive")
        if self.capacity.size < 2:
            raise DataError(f"cell {self.cell_id}: need at least two capacity observations")
        if np.any(np.diff(self.capacity_time) <= 0):
            raise DataError(f"cell {self.cell_id}: non-monotonic time in capacities")
        if np.any(self.capacity <= 0):
            raise DataError(f"cell {self.cell_id}: capacity must be positive")
        if not self.nominal_capacity > 0:
            raise DataError(f"cell {self.cell_id}: nominal capacity must be positive")

    @property
    def n_samples(self) -> int:
        return int(self.time.size)

    def samples(self) -> Iterator[RawSample]:
        for row in zip(self.time, self.current, self.voltage, self.temperature):
            yield RawSample(*map(float, row))

    def capacities(self) -> Iterator[CapacityObservation]:
        for t, q in zip(self.capacity_time, self.capacity):
            yield CapacityObservation(float(t), float(q))

    def variables(self) -> np.ndarray:
        """(6, n) array of current, voltage, temperature, power, |current|, |power|."""
        if "vars" not in self._derived:
            power = self.current * self.voltage
            v = np.vstack([self.current, self.voltage, self.temperature,
                           power, np.abs(self.current), np.abs(power)])
            v.flags.writeable = False
            self._derived["vars"] = v
        return self._derived["vars"]

    def durations(self) -> np.ndarray:
        """Hold time of each sample; the final sample holds for zero time."""
        return np.append(np.diff(self.time), 0.0)

    def capacity_at(self, times) -> np.ndarray:
        """Capacity (Ah) of the observation nearest in time; ties go to the earlier one."""
        times = np.asarray(times, dtype=float)
        ct = self.capacity_time
        idx = np.searchsorted(ct, times, side="left")
        idx = np.clip(idx, 1, ct.size - 1)
        left, right = ct[idx - 1], ct[idx]
        pick = np.where(times - left <= right - times, idx - 1, idx)
        return self.capacity[pick]


def series_equal(a: CellSeries, b: CellSeries) -> bool:
    return (
        a.cell_id == b.cell_id
        and a.nominal_capacity == b.nominal_capacity
        and all(np.array_equal(getattr(a, f), getattr(b, f))
                for f in ("time", "current", "voltage", "temperature", "capacity_time", "capacity"))
    )


def true_eol(series: CellSeries) -> float:
    """Observed end of life in days: first crossing of 80 % nominal, linearly interpolated."""
    threshold = EOL_FRACTION * series.nominal_capacity
    q = series.capacity
    t = series.capacity_time
    # 0.8 * nominal rounds; treat observations within 1e-12 relative as on the threshold
    on = np.isclose(q, threshold, rtol=1e-12, atol=0.0)
    below = np.flatnonzero((q <= threshold) | on)
    if below.size == 0:
        raise CensoredCellError(f"cell {series.cell_id} never reaches {threshold:.4g} Ah")
    i = int(below[0])
    if i == 0 or on[i]:
        return float(t[i]) / SECONDS_PER_DAY
    frac = (q[i - 1] - threshold) / (q[i - 1] - q[i])
    return float(t[i - 1] + frac * (t[i] - t[i - 1])) / SECONDS_PER_DAY


def try_true_eol(series: CellSeries) -> float | None:
    try:
        return true_eol(series)
    except CensoredCellError:
        return None


# -- CSV ---------------------------------------------------------------------

def default_capacity_path(samples_path) -> Path:
    p = Path(samples_path)
    if p.stem == "samples":
        return p.with_name("capacity.csv")
    return p.with_name(f"{p.stem}_capacity.csv")


def _read_table(path: Path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = [header.index(c) for c in columns]
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"{path.name}: expected {width} fields, got {len(row)}", lineno)
            yield lineno, [row[j].strip() for j in pos]


def _to_float(text, what, path, lineno):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{path.name}: bad {what} {text!r}", lineno) from None


def ingest_csv(samples_path, capacity_path=None) -> list[CellSeries]:
    """Read the samples file and its companion capacity file into cells.

    Cells are returned in order of first appearance in the samples file.
    Rows of one cell must already be in strictly increasing time order.
    """
    samples_path = Path(samples_path)
    capacity_path = Path(capacity_path) if capacity_path else default_capacity_path(samples_path)
    if not capacity_path.exists():
        raise SchemaError(f"capacity file {capacity_path} not found")

    samples: dict[str, list] = {}
    for lineno, (cid, *nums) in _read_table(samples_path, SAMPLE_COLUMNS):
        vals = [_to_float(x, name, samples_path, lineno) for x, name in zip(nums, SAMPLE_COLUMNS[1:])]
        samples.setdefault(cid, []).append(vals)

    caps: dict[str, list] = {}
    nominal: dict[str, float] = {}
    for lineno, (cid, t, q, nom) in _read_table(capacity_path, CAPACITY_COLUMNS):
        if nom == "":
            raise SchemaError(f"{capacity_path.name}: line {lineno}: missing nominal capacity")
        nom_v = _to_float(nom, "nominal_ah", capacity_path, lineno)
        if cid in nominal and nominal[cid] != nom_v:
            raise DataError(f"cell {cid}: inconsistent nominal capacity")
        nominal[cid] = nom_v
        caps.setdefault(cid, []).append(
            (_to_float(t, "time_s", capacity_path, lineno), _to_float(q, "capacity_ah", capacity_path, lineno)))

    cells = []
    for cid, rows in samples.items():
        if cid not in nominal:
            raise SchemaError(f"cell {cid}: missing nominal capacity (no capacity rows)")
        a = np.array(rows, dtype=float)
        c = np.array(caps[cid], dtype=float)
        cells.append(CellSeries(cid, a[:, 0], a[:, 1], a[:, 2], a[:, 3],
                                c[:, 0], c[:, 1], nominal[cid]))
    return cells


def ingest_dir(directory) -> list[CellSeries]:
    d = Path(directory)
    return ingest_csv(d / "samples.csv", d / "capacity.csv")


def export_csv(cells, samples_path, capacity_path=None) -> None:
    """Write cells in the ingest schema; floats use repr so re-ingest is exact."""
    samples_path = Path(samples_path)
    capacity_path = Path(capacity_path) if capacity_path else default_capacity_path(samples_path)
    with open(samples_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for c in cells:
            for row in zip(c.time.tolist(), c.current.tolist(), c.voltage.tolist(), c.temperature.tolist()):
                w.writerow((c.cell_id, *map(repr, row)))
    with open(capacity_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CAPACITY_COLUMNS)
        for c in cells:
            nom = repr(float(c.nominal_capacity))
            for t, q in zip(c.capacity_time.tolist(), c.capacity.tolist()):
                w.writerow((c.cell_id, repr(t), repr(q), nom))
