"""Synthetic cycling corpora with a known two-regime degradation law.

Each interval of a synthetic cell is a few identical duty cycles made of six
constant-valued phases (fast charge, slow charge, rest at full, discharge,
deep discharge, mid-voltage dwell). Every variable takes one discrete level
per phase, so the fleet's time-weighted voltage percentiles land exactly on
phase levels and two voltage occupancy features are exact functions of the
phase fractions:

* ``V_1_2`` = deep + discharge fraction (cycling depth, ``g``)
* ``V_2_3`` = mid-voltage dwell fraction (``s``), the splitting feature

A per-cell usage intensity in [0, 1] sets how much of each cycle is spent
discharging, and so sets ``g``.

Capacity loss per interval (% nominal) is piecewise linear in (g, s) with a
kink at ``s = KNEE``. The dwell fraction drifts linearly over each cell's
life at a per-cell rate solved so that the knee falls at a drawn fraction of
the resulting lifetime; draws whose lifetime falls outside ``lifetime_days``
are rejected. Linear drift keeps the fleet's density of ``s`` flat around
the knee.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import CellSeries, export_csv
from .featurize import FEATURE_INDEX, PercentileBounds, compute_bounds, featurize

KNEE = 0.37
TRUE_FEATURES = ("V_1_2", "V_2_3")
SPLIT_FEATURE = "V_2_3"

# loss = BASE + LOSS_G * g + LOSS_S * s + KINK * max(s - KNEE, 0)
BASE = 0.03
LOSS_G = 0.5
LOSS_S = 0.5
KINK = 3.2

DEEP_FRAC = 0.03
TOP_FRAC = 0.04
MIN_SLOW_FRAC = 0.02
FAST_FRAC = 0.045
S_JITTER = 0.015
D_JITTER = 0.01

# per-phase levels: (voltage V, temperature C); currents depend on the cell
PHASES = ("fast", "slow", "top", "discharge", "deep", "mid")
VOLTAGE = {"fast": 3.55, "slow": 3.45, "top": 3.60, "discharge": 3.0, "deep": 2.0, "mid": 3.2}
TEMPERATURE = {"fast": 36.0, "slow": 32.0, "top": 30.0, "discharge": 34.0, "deep": 33.0, "mid": 30.5}
DESIGN_VOLTAGE_BOUNDS = (2.0, 3.2, 3.45, 3.6)


@dataclass(frozen=True)
class SyntheticSpec:
    n_cells: int = 157
    interval_hours: float = 12.0
    noise_std: float = 0.05
    knee_onset_range: tuple[float, float] = (0.45, 0.7)
    rng_seed: int = 0
    lifetime_days: tuple[float, float] = (15.0, 40.0)
    nominal_ah: float = 1.1
    cycles_per_interval: int = 3

    def __post_init__(self):
        lo, hi = self.knee_onset_range
        if not 0 <= lo < hi <= 1:
            raise ValueError("knee_onset_range must satisfy 0 <= lo < hi <= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        if not 0 < self.lifetime_days[0] < self.lifetime_days[1]:
            raise ValueError("lifetime_days must be an increasing positive pair")
        if self.interval_hours <= 0 or self.cycles_per_interval < 1:
            raise ValueError("interval_hours and cycles_per_interval must be positive")


def true_loss(g, s):
    """Noise-free capacity loss per interval (% nominal, positive = fade)."""
    g = np.asarray(g, dtype=float)
    s = np.asarray(s, dtype=float)
    return BASE + LOSS_G * g + LOSS_S * s + KINK * np.maximum(s - KNEE, 0.0)


def segment_coefficients() -> list[dict]:
    """ΔQ = coef · (V_1_2, V_2_3) + bias on each side of the knee."""
    return [
        {"coef": [-LOSS_G, -LOSS_S], "bias": -BASE},
        {"coef": [-LOSS_G, -(LOSS_S + KINK)], "bias": -(BASE - KINK * KNEE)},
    ]


@dataclass
class GroundTruth:
    split_feature: str
    break_value: float
    feature_names: tuple[str, ...]
    segments: list[dict]
    eol_days: dict[str, float]
    knee_days: dict[str, float]
    intensity: dict[str, float]
    bounds: dict
    spec: dict = field(default_factory=dict)

    def delta_q(self, features) -> np.ndarray:
        """Noise-free ΔQ for rows of a full 74-column feature matrix."""
        f = np.atleast_2d(features)
        cols = [FEATURE_INDEX[n] for n in self.feature_names]
        x = f[:, cols]
        seg = (f[:, FEATURE_INDEX[self.split_feature]] >= self.break_value).astype(int)
        coef = np.array([s["coef"] for s in self.segments])
        bias = np.array([s["bias"] for s in self.segments])
        return np.einsum("ij,ij->i", x, coef[seg]) + bias[seg]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        d["feature_names"] = tuple(d["feature_names"])
        return cls(**d)


def _eol_from_trajectory(q_pct, interval_days) -> float:
    below = np.flatnonzero(q_pct <= 80.0)
    if below.size == 0:
        return float("inf")
    i = int(below[0])
    if i == 0 or q_pct[i] == 80.0:
        return i * interval_days
    frac = (q_pct[i - 1] - 80.0) / (q_pct[i - 1] - q_pct[i])
    return (i - 1 + frac) * interval_days


class _CellPlan:
    """Per-interval phase fractions for one cell, before any raw samples exist."""

    def __init__(self, rng, spec: SyntheticSpec):
        step = spec.interval_hours / 24.0
        lo_life, hi_life = spec.lifetime_days
        # keep noisy observed lifetimes inside the window too
        margin = min(1.0, 0.1 * (hi_life - lo_life))
        n_max = int(np.ceil((1.1 * hi_life + 1.0) / step))
        for _ in range(1000):
            kappa = rng.uniform(*spec.knee_onset_range)
            c = rng.uniform(0.0, 1.0)
            s0 = rng.uniform(0.04, 0.10)
            q0 = rng.uniform(99.0, 101.0)
            s_noise = rng.normal(0, S_JITTER, n_max)
            d = np.clip(0.04 + 0.12 * c + rng.normal(0, D_JITTER, n_max), 0.03, 0.17)
            t_mid = (np.arange(n_max) + 0.5) * step
            s_cap = 1.0 - DEEP_FRAC - TOP_FRAC - d - FAST_FRAC - MIN_SLOW_FRAC

            def dwell(r):
                return np.clip(s0 + r * t_mid + s_noise, 0.01, s_cap)

            def eol(r):
                loss = true_loss(DEEP_FRAC + d, dwell(r))
                return _eol_from_trajectory(q0 - np.concatenate([[0.0], np.cumsum(loss)]), step)

            def knee_fraction(r):
                # no end of life inside the horizon counts as drifting too slowly
                return (KNEE - s0) / r / eol(r) if np.isfinite(eol(r)) else np.inf

            # knee_fraction falls as the drift rate rises; bisect in log space
            lo, hi = np.log(1e-3), np.log(1.0)
            if not knee_fraction(np.exp(hi)) < kappa < knee_fraction(np.exp(lo)):
                continue
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if knee_fraction(np.exp(mid)) > kappa:
                    lo = mid
                else:
                    hi = mid
            r = np.exp(0.5 * (lo + hi))
            life = eol(r)
            if not lo_life + margin <= life <= hi_life - margin:
                continue
            n = int(np.ceil((1.1 * life + 1.0) / step))
            self.life, self.kappa, self.intensity, self.q0 = life, kappa, c, q0
            self.knee_days = (KNEE - s0) / r
            self.s = dwell(r)[:n]
            self.d = d[:n]
            self.fast = np.full(n, FAST_FRAC)
            self.n = n
            return
        raise RuntimeError("could not draw a feasible synthetic cell")


def _raw_trace(plan: _CellPlan, spec: SyntheticSpec):
    dt = spec.interval_hours * 3600.0
    frac = {
        "fast": plan.fast,
        "top": np.full(plan.n, TOP_FRAC),
        "discharge": plan.d,
        "deep": np.full(plan.n, DEEP_FRAC),
        "mid": plan.s,
    }
    frac["slow"] = 1.0 - sum(frac.values())
    current = {"fast": 6.6, "slow": 1.1, "top": 0.0,
               "discharge": -4.4, "deep": -4.4, "mid": 1.1}
    m = spec.cycles_per_interval
    # (n, m * 6) durations in phase order, repeated m times per interval
    durs = np.column_stack([frac[p] for p in PHASES]) * (dt / m)
    durs = np.tile(durs, (1, m))
    starts = dt * np.arange(plan.n)[:, None] + np.concatenate(
        [np.zeros((plan.n, 1)), np.cumsum(durs, axis=1)[:, :-1]], axis=1)
    time = np.append(starts.ravel(), dt * plan.n)
    level = lambda table: np.append(np.tile([table[p] for p in PHASES], plan.n * m), table[PHASES[0]])
    return time, level(current), level(VOLTAGE), level(TEMPERATURE)


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[CellSeries], GroundTruth]:
    """Deterministic synthetic fleet plus the law that generated it."""
    children = np.random.SeedSequence(spec.rng_seed).spawn(spec.n_cells)
    plans = [_CellPlan(np.random.default_rng(ss), spec) for ss in children]
    noise_rngs = [np.random.default_rng(ss.spawn(1)[0]) for ss in children]
    ids = [f"syn{i:04d}" for i in range(spec.n_cells)]
    dt = spec.interval_hours * 3600.0
    step = spec.interval_hours / 24.0
    nominal = spec.nominal_ah

    # usage-only cells (placeholder capacity) to derive fleet bounds and features
    traces = [_raw_trace(p, spec) for p in plans]
    placeholder = lambda cid, tr: CellSeries(cid, *tr, [0.0, tr[0][-1]], [nominal, nominal], nominal)
    usage = [placeholder(cid, tr) for cid, tr in zip(ids, traces)]
    bounds = compute_bounds(usage)
    if not np.allclose(bounds["V"], DESIGN_VOLTAGE_BOUNDS):
        raise RuntimeError(f"synthetic fleet voltage bounds {bounds['V']} off design; use more cells")

    truth = GroundTruth(SPLIT_FEATURE, KNEE, TRUE_FEATURES, segment_coefficients(),
                        {}, {}, {}, bounds.to_dict(), _spec_dict(spec))
    cells = []
    for cid, plan, tr, cell, rng in zip(ids, plans, traces, usage, noise_rngs):
        table = featurize(cell, bounds, spec.interval_hours)
        dq_true = truth.delta_q(table.features)
        dq = dq_true + (rng.normal(0, spec.noise_std, dq_true.size) if spec.noise_std > 0 else 0.0)
        q_pct = plan.q0 + np.concatenate([[0.0], np.cumsum(dq)])
        cap_t = dt * np.arange(plan.n + 1)
        cells.append(CellSeries(cid, *tr, cap_t, q_pct / 100.0 * nominal, nominal))
        q_true = plan.q0 + np.concatenate([[0.0], np.cumsum(dq_true)])
        truth.eol_days[cid] = _eol_from_trajectory(q_true, step)
        truth.knee_days[cid] = plan.knee_days
        truth.intensity[cid] = plan.intensity
    return cells, truth


def _spec_dict(spec: SyntheticSpec) -> dict:
    d = asdict(spec)
    d["knee_onset_range"] = list(spec.knee_onset_range)
    d["lifetime_days"] = list(spec.lifetime_days)
    return d


def export_synthetic(cells, truth: GroundTruth, directory) -> None:
    """Write ``samples.csv``, ``capacity.csv`` and ``ground_truth.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    export_csv(cells, d / "samples.csv", d / "capacity.csv")
    (d / "ground_truth.json").write_text(truth.to_json(), encoding="utf-8")


def truth_bounds(truth: GroundTruth) -> PercentileBounds:
    return PercentileBounds.from_dict(truth.bounds)
