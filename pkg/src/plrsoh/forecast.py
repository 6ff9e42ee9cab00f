"""Capacity trajectories from predicted ΔQ, end-of-life detection and metrics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .featurize import FeatureTable

EOL_PCT = 80.0
TAIL_INTERVALS = 5


@dataclass(frozen=True, eq=False)
class CapacityForecast:
    cell_id: str
    delta_q: np.ndarray        # predicted ΔQ per interval, % nominal
    trajectory: np.ndarray     # capacity at interval edges, % nominal; length n + 1
    eol_days: float            # NaN when unreachable
    unreachable: bool = False
    extrapolated: bool = False
    t0_days: float = 0.0
    interval_hours: float = 12.0
    variance: np.ndarray | None = None

    @property
    def times_days(self) -> np.ndarray:
        return self.t0_days + np.arange(self.trajectory.size) * self.interval_hours / 24.0


def eol_crossing(trajectory, delta_q, t0_days: float, interval_days: float,
                 tail: int = TAIL_INTERVALS) -> tuple[float, bool, bool]:
    """First time the trajectory reaches 80 %, as (days, unreachable, extrapolated).

    Linear interpolation inside the crossing interval. With no crossing the
    mean ΔQ of the last ``tail`` intervals is extrapolated; a non-negative
    rate means the threshold is never reached.
    """
    traj = np.asarray(trajectory, dtype=float)
    below = np.flatnonzero(traj <= EOL_PCT)
    if below.size:
        i = int(below[0])
        if i == 0 or traj[i] == EOL_PCT:
            return float(t0_days + i * interval_days), False, False
        frac = (traj[i - 1] - EOL_PCT) / (traj[i - 1] - traj[i])
        return float(t0_days + (i - 1 + frac) * interval_days), False, False
    dq = np.asarray(delta_q, dtype=float)
    rate = float(dq[-tail:].mean()) if dq.size else 0.0
    if not rate < 0:
        return float("nan"), True, True
    n = traj.size - 1
    return float(t0_days + (n + (traj[-1] - EOL_PCT) / -rate) * interval_days), False, True


def forecast_from_dq(cell_id: str, delta_q, initial_capacity: float, t0_days: float = 0.0,
                     interval_hours: float = 12.0, variance=None) -> CapacityForecast:
    dq = np.asarray(delta_q, dtype=float)
    traj = initial_capacity + np.concatenate([[0.0], np.cumsum(dq)])
    eol, unreachable, extrap = eol_crossing(traj, dq, t0_days, interval_hours / 24.0)
    return CapacityForecast(cell_id, dq, traj, eol, unreachable, extrap, t0_days, interval_hours,
                            None if variance is None else np.asarray(variance, float))


def forecast_cell(model, records: FeatureTable, initial_capacity: float,
                  t0_days: float | None = None) -> CapacityForecast:
    """Predict every interval's ΔQ from its recorded features and integrate.

    ``model`` is anything with ``predict(features) -> (mean, variance)``.
    """
    if np.any(np.diff(records.interval) <= 0):
        raise ValueError("records must be ordered by interval")
    mean, var = model.predict(records.features)
    ids = records.cell_ids()
    if t0_days is None:
        t0_days = float(records.t_days[0]) - records.interval_hours / 24.0 if len(records) else 0.0
    return forecast_from_dq(ids[0] if ids else "", mean, initial_capacity, t0_days,
                            records.interval_hours, var)


@dataclass(frozen=True)
class MetricTriple:
    rmse_dq: float
    rmse_capacity: float
    eol_error: float = float("nan")   # signed %, NaN when not scorable

    def __post_init__(self):
        if self.rmse_dq < 0 or self.rmse_capacity < 0:
            raise ValueError("RMSE values must be >= 0")


def eol_error(observed_days: float, predicted_days: float) -> float:
    """100 (observed - predicted) / observed; late predictions are negative."""
    return float(100.0 * (observed_days - predicted_days) / observed_days)


def score(forecast: CapacityForecast, observed: FeatureTable,
          observed_eol: float | None = None) -> MetricTriple:
    """Metric triple against one cell's recorded ΔQ and capacity.

    The EoL error is NaN when the cell is censored (``observed_eol`` None or
    NaN) or the forecast never reaches end of life.
    """
    obs_dq = np.asarray(observed.delta_q, dtype=float)
    if obs_dq.size != forecast.delta_q.size:
        raise ValueError(f"forecast has {forecast.delta_q.size} intervals, observed {obs_dq.size}")
    if obs_dq.size == 0:
        raise ValueError("nothing to score")
    rmse_dq = float(np.sqrt(np.mean((forecast.delta_q - obs_dq) ** 2)))
    start = observed.q_start[0] if np.isfinite(observed.q_start[0]) else forecast.trajectory[0]
    obs_cap = start + np.cumsum(obs_dq)
    rmse_cap = float(np.sqrt(np.mean((forecast.trajectory[1:] - obs_cap) ** 2)))
    err = float("nan")
    if observed_eol is not None and math.isfinite(observed_eol) and not forecast.unreachable:
        err = eol_error(observed_eol, forecast.eol_days)
    return MetricTriple(rmse_dq, rmse_cap, err)


@dataclass(frozen=True)
class FleetSummary:
    count: int
    eol_count: int
    rmse_dq_median: float
    rmse_dq_p95: float
    rmse_capacity_median: float
    rmse_capacity_p95: float
    eol_abs_median: float
    eol_abs_p95: float
    eol_signed_median: float

    def table(self) -> list[tuple[str, float, float]]:
        return [("rmse_dq", self.rmse_dq_median, self.rmse_dq_p95),
                ("rmse_capacity", self.rmse_capacity_median, self.rmse_capacity_p95),
                ("eol_error_abs", self.eol_abs_median, self.eol_abs_p95)]

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _quantiles(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    med, p95 = np.percentile(v, [50.0, 95.0])
    return float(med), float(p95)


def summarize(triples) -> FleetSummary:
    """Median and 95th percentile (linear interpolation) of each metric;
    EoL statistics use |error| over scorable forecasts only."""
    triples = list(triples)
    if not triples:
        raise ValueError("cannot summarize an empty set of forecasts")
    dq = [t.rmse_dq for t in triples]
    cap = [t.rmse_capacity for t in triples]
    eol = np.array([t.eol_error for t in triples], dtype=float)
    eol = eol[np.isfinite(eol)]
    signed = float(np.median(eol)) if eol.size else float("nan")
    return FleetSummary(len(triples), int(eol.size), *_quantiles(dq), *_quantiles(cap),
                        *_quantiles(np.abs(eol)), signed)
