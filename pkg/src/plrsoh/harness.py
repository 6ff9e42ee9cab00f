"""Repeated train/test trials, parameter sweeps and their exports."""
from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data import SECONDS_PER_DAY, CellSeries, ingest_csv, try_true_eol
from .errors import DataError
from .featurize import FEATURE_NAMES, FeatureTable, PercentileBounds, compute_bounds, featurize
from .forecast import FleetSummary, MetricTriple, forecast_cell, score, summarize
from .gpr import fit_gpr
from .regress import (BlrPrior, SizeSelectConfig, estimate_sigma_n, select_model_size,
                      with_bias)
from .segment import (BreakSet, CurvatureSplitter, FreeSearchSplitter, KMeansSplitter,
                      SegmentStats, SmootherConfig, break_histogram)
from .select import SelectionConfig, SelectionResult, select_features
from .synthetic import SyntheticSpec, generate_synthetic

METHODS = ("plr-curvature", "plr-kmeans", "plr-freesearch", "gpr")
SWEEP_STRIDE = 10 ** 6


@dataclass(frozen=True)
class TrialConfig:
    method: str = "plr-curvature"
    n_repeats: int = 200
    n_train_cells: int = 50
    n_features: int = 5
    rho_max: float = 0.85
    beta_improv: float = 0.01
    max_models: int = 10
    interval_hours: float = 12.0
    rng_seed: int = 0
    sigma_w: float = 10.0
    bounds_from: str = "train"        # "train" or "all" cells
    gpr_max_points: int = 250
    gpr_starts: int = 5
    workers: int = 1
    samples_path: str | None = None
    capacity_path: str | None = None
    synthetic: SyntheticSpec | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if self.n_train_cells < 1:
            raise ValueError("n_train_cells must be >= 1")
        if self.bounds_from not in ("train", "all"):
            raise ValueError("bounds_from must be 'train' or 'all'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        SelectionConfig(self.n_features, self.rho_max)
        SizeSelectConfig(self.beta_improv, self.max_models)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.synthetic is not None:
            d["synthetic"] = {k: list(v) if isinstance(v, tuple) else v
                              for k, v in asdict(self.synthetic).items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if d.get("synthetic") is not None:
            s = dict(d["synthetic"])
            for k in ("knee_onset_range", "lifetime_days"):
                if k in s:
                    s[k] = tuple(s[k])
            d["synthetic"] = SyntheticSpec(**s)
        return cls(**d)


@dataclass(frozen=True)
class SweepConfig:
    base: TrialConfig
    parameter: str
    values: tuple
    n_repeats: int = 20

    def __post_init__(self):
        allowed = {f.name for f in fields(TrialConfig)} - {"samples_path", "capacity_path", "synthetic", "workers"}
        if self.parameter not in allowed:
            raise ValueError(f"cannot sweep {self.parameter!r}; choose from {sorted(allowed)}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ForecastRow:
    repeat: int
    cell_id: str
    method: str
    n_models: int
    rmse_dq: float
    rmse_capacity: float
    eol_error: float
    eol_predicted: float
    eol_observed: float
    unreachable: bool
    extrapolated: bool

    @property
    def triple(self) -> MetricTriple:
        return MetricTriple(self.rmse_dq, self.rmse_capacity, self.eol_error)


@dataclass(frozen=True)
class RepeatRecord:
    repeat: int
    seed: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    selected: tuple[str, ...]
    split_feature: str
    breaks: tuple[float, ...]
    n_models: int
    size_rmse: tuple[float, ...]
    short_selection: bool


@dataclass
class TrialReport:
    config: TrialConfig
    rows: list[ForecastRow]
    repeats: list[RepeatRecord]
    summary: FleetSummary | None = None

    def __post_init__(self):
        if self.summary is None and self.rows:
            self.summary = summarize(r.triple for r in self.rows)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in fields(ForecastRow)]
        w.writerow(names)
        for r in self.rows:
            w.writerow([_cell(getattr(r, n)) for n in names])
        return buf.getvalue()

    def repeats_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("repeat", "seed", "split_feature", "n_models", "breaks", "selected",
                    "size_rmse", "short_selection", "train_ids"))
        for r in self.repeats:
            w.writerow((r.repeat, r.seed, r.split_feature, r.n_models,
                        " ".join(map(repr, r.breaks)), " ".join(r.selected),
                        " ".join(_cell(v) for v in r.size_rmse), _cell(r.short_selection),
                        " ".join(r.train_ids)))
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "forecasts.csv").write_text(self.rows_csv(), encoding="utf-8")
        (out / "repeats.csv").write_text(self.repeats_csv(), encoding="utf-8")
        (out / "summary.json").write_text(self.summary.to_json() if self.summary else "{}", encoding="utf-8")
        (out / "config.json").write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True),
                                         encoding="utf-8")
        return out

    @classmethod
    def read(cls, out_dir) -> "TrialReport":
        """Load what :meth:`write` produced."""
        d = Path(out_dir)
        cfg = TrialConfig.from_dict(json.loads((d / "config.json").read_text(encoding="utf-8")))
        types = {f.name: f.type for f in fields(ForecastRow)}
        rows = []
        with open(d / "forecasts.csv", newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(ForecastRow(**{k: _parse(v, types[k]) for k, v in rec.items()}))
        repeats = []
        with open(d / "repeats.csv", newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                repeats.append(RepeatRecord(
                    int(rec["repeat"]), int(rec["seed"]), tuple(rec["train_ids"].split()), (),
                    tuple(rec["selected"].split()), rec["split_feature"],
                    tuple(float(v) for v in rec["breaks"].split()), int(rec["n_models"]),
                    tuple(float(v) for v in rec["size_rmse"].split()), rec["short_selection"] == "1"))
        return cls(cfg, rows, repeats)


def _parse(text: str, typ: str):
    if typ == "int":
        return int(text)
    if typ == "float":
        return float(text)
    if typ == "bool":
        return text == "1"
    return text


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def load_cells(cfg: TrialConfig) -> list[CellSeries]:
    if cfg.samples_path is not None:
        return ingest_csv(cfg.samples_path, cfg.capacity_path)
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic)[0]
    raise DataError("trial config names no data source (csv paths or synthetic spec)")


@dataclass(frozen=True, eq=False)
class FittedMethod:
    """A fitted forecaster plus what went into it."""

    model: object
    selection: SelectionResult
    bounds: PercentileBounds
    n_models: int
    breaks: BreakSet | None


def make_splitter(method: str, train: FeatureTable, selection: SelectionResult,
                  prior: BlrPrior, seed: int = 0, smoother: SmootherConfig = SmootherConfig()):
    sel = list(selection.selected)
    split = sel[0]
    x = train.features[:, split]
    if method == "plr-curvature":
        return CurvatureSplitter(x, train.delta_q, smoother, feature=split)
    if method == "plr-kmeans":
        x2 = train.features[:, sel[1]] if len(sel) > 1 else x
        return KMeansSplitter(x, x2, seed=seed, feature=split)
    if method == "plr-freesearch":
        stats = SegmentStats(with_bias(train.features[:, sel]), train.delta_q, x,
                             prior.sigma_n, prior.sigma_w)
        init = CurvatureSplitter(x, train.delta_q, smoother, feature=split)
        return FreeSearchSplitter(stats, init, feature=split)
    raise ValueError(f"no splitter for method {method!r}")


def fit_method(train: FeatureTable, bounds: PercentileBounds, cfg: TrialConfig,
               seed: int = 0, selector=select_features) -> FittedMethod:
    """Selection, splitting and fitting on training records only."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        selection = selector(train.features, train.delta_q, SelectionConfig(cfg.n_features, cfg.rho_max))
    sel = list(selection.selected)
    if cfg.method == "gpr":
        rows = np.arange(len(train))
        if rows.size > cfg.gpr_max_points:
            rows = np.sort(np.random.default_rng(seed).choice(rows.size, cfg.gpr_max_points, replace=False))
        model = fit_gpr(train.features[rows][:, sel], train.delta_q[rows], n_starts=cfg.gpr_starts,
                        seed=seed, selected=tuple(sel))
        return FittedMethod(model, selection, bounds, 0, None)
    sigma_n = estimate_sigma_n(with_bias(train.features[:, sel]), train.delta_q, cfg.sigma_w)
    prior = BlrPrior(sigma_n, cfg.sigma_w)
    splitter = make_splitter(cfg.method, train, selection, prior, seed)
    n_m, model = select_model_size(train.features, train.delta_q, sel, prior,
                                   SizeSelectConfig(cfg.beta_improv, cfg.max_models), splitter, bounds)
    return FittedMethod(model, selection, bounds, n_m, model.breaks)


def split_cells(n_cells: int, n_train: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= n_train < n_cells:
        raise DataError(f"cannot split {n_cells} cells into {n_train} training cells and a non-empty test set")
    perm = np.random.default_rng(seed).permutation(n_cells)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


_WORKER_CELLS: list[CellSeries] | None = None


def _init_worker(cells):
    global _WORKER_CELLS
    _WORKER_CELLS = cells


def _run_repeat_in_worker(args):
    cfg, i, selector = args
    return run_repeat(cfg, _WORKER_CELLS, i, selector)


def run_repeat(cfg: TrialConfig, cells: list[CellSeries], i: int, selector=select_features):
    seed = cfg.rng_seed + i
    train_idx, test_idx = split_cells(len(cells), cfg.n_train_cells, seed)
    train_cells = [cells[j] for j in train_idx]
    test_cells = [cells[j] for j in test_idx]
    train_ids = {c.cell_id for c in train_cells}
    assert train_ids.isdisjoint(c.cell_id for c in test_cells), "train/test overlap"

    bounds = compute_bounds(train_cells if cfg.bounds_from == "train" else cells)
    train = FeatureTable.concat(featurize(c, bounds, cfg.interval_hours) for c in train_cells)
    fitted = fit_method(train, bounds, cfg, seed, selector)

    rows = []
    for cell in test_cells:
        table = featurize(cell, bounds, cfg.interval_hours)
        if len(table) == 0:
            continue
        fc = forecast_cell(fitted.model, table, float(table.q_start[0]),
                           t0_days=float(cell.time[0]) / SECONDS_PER_DAY)
        observed = try_true_eol(cell)
        m = score(fc, table, observed)
        rows.append(ForecastRow(i, cell.cell_id, cfg.method, fitted.n_models, m.rmse_dq,
                                m.rmse_capacity, m.eol_error, float(fc.eol_days),
                                float("nan") if observed is None else float(observed),
                                fc.unreachable, fc.extrapolated))
    model = fitted.model
    record = RepeatRecord(
        i, seed, tuple(c.cell_id for c in train_cells), tuple(c.cell_id for c in test_cells),
        tuple(fitted.selection.names), FEATURE_NAMES[fitted.selection.split_feature],
        fitted.breaks.breaks if fitted.breaks is not None else (), fitted.n_models,
        tuple(getattr(model, "size_rmse", ())), fitted.selection.short)
    return rows, record


def run_trial(cfg: TrialConfig, cells: list[CellSeries] | None = None,
              selector=select_features) -> TrialReport:
    """Every repeat re-splits the fleet with seed ``rng_seed + repeat``."""
    if cells is None:
        cells = load_cells(cfg)
    if not cfg.n_train_cells < len(cells):
        raise DataError(f"n_train_cells={cfg.n_train_cells} leaves no test cells out of {len(cells)}")
    if cfg.workers > 1 and cfg.n_repeats > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cells,)) as pool:
            results = list(pool.map(_run_repeat_in_worker,
                                    [(cfg, i, selector) for i in range(cfg.n_repeats)]))
    else:
        results = [run_repeat(cfg, cells, i, selector) for i in range(cfg.n_repeats)]
    rows = [r for rs, _ in results for r in rs]
    return TrialReport(cfg, rows, [rec for _, rec in results])


def sweep_configs(cfg: SweepConfig) -> list[TrialConfig]:
    return [replace(cfg.base, **{cfg.parameter: v}, n_repeats=cfg.n_repeats,
                    rng_seed=cfg.base.rng_seed + j * SWEEP_STRIDE)
            for j, v in enumerate(cfg.values)]


def run_sweep(cfg: SweepConfig, cells: list[CellSeries] | None = None,
              selector=select_features) -> list[tuple[object, TrialReport]]:
    """One trial per swept value; value j uses base seed + j * 10**6."""
    if cells is None:
        cells = load_cells(cfg.base)
    return [(v, run_trial(c, cells, selector)) for v, c in zip(cfg.values, sweep_configs(cfg))]


def write_sweep(results, parameter: str, out_dir) -> Path:
    """One sub-directory per swept value plus a plot-ready ``sweep.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for j, (value, rep) in enumerate(results):
        rep.write(out / f"value_{j:02d}")
        s = rep.summary
        rows.append((value, s.count, s.rmse_dq_median, s.rmse_dq_p95, s.rmse_capacity_median,
                     s.rmse_capacity_p95, s.eol_abs_median, s.eol_abs_p95, s.eol_signed_median))
    _write_csv(out / "sweep.csv", (parameter, "count", "rmse_dq_median", "rmse_dq_p95",
                                   "rmse_capacity_median", "rmse_capacity_p95", "eol_abs_median",
                                   "eol_abs_p95", "eol_signed_median"), rows)
    return out


def comparison_rows(a: TrialReport, b: TrialReport) -> list[tuple]:
    """Join two trials on (repeat, cell) for head-to-head EoL errors."""
    other = {(r.repeat, r.cell_id): r for r in b.rows}
    out = []
    for r in a.rows:
        o = other.get((r.repeat, r.cell_id))
        if o is not None:
            out.append((r.repeat, r.cell_id, r.method, o.method, r.eol_error, o.eol_error,
                        r.rmse_capacity, o.rmse_capacity))
    return out


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def report(outputs, out_dir, bins: int = 20, plots: bool = False) -> list[Path]:
    """Write metric tables, break and sub-model histograms and, for two or
    more trials, per-cell comparisons against the first one.

    ``outputs`` is a TrialReport, a list of them, or a sweep result.
    """
    if isinstance(outputs, TrialReport):
        outputs = [outputs]
    outputs = list(outputs)
    labelled = []
    for k, item in enumerate(outputs):
        if isinstance(item, tuple):
            labelled.append((f"{item[0]}", item[1]))
        else:
            labelled.append((item.config.method if len(outputs) > 1 else "trial", item))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "summary_table.csv"
    _write_csv(p, ("label", "method", "metric", "median", "p95", "count"),
               [(lab, rep.config.method, name, med, p95, rep.summary.count)
                for lab, rep in labelled if rep.summary for name, med, p95 in rep.summary.table()])
    written.append(p)

    all_breaks = [b for _, rep in labelled for rec in rep.repeats for b in rec.breaks]
    counts, edges = break_histogram(all_breaks, bins)
    p = out / "breaks_histogram.csv"
    _write_csv(p, ("bin_lo", "bin_hi", "count"),
               [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)])
    written.append(p)

    sizes = [rec.n_models for _, rep in labelled for rec in rep.repeats if rec.n_models > 0]
    p = out / "n_models_histogram.csv"
    hist = {n: sizes.count(n) for n in sorted(set(sizes))}
    _write_csv(p, ("n_models", "count"), hist.items())
    written.append(p)

    if len(labelled) > 1 and all(isinstance(o, TrialReport) for o in outputs):
        p = out / "comparison.csv"
        base = labelled[0][1]
        rows = [row for _, rep in labelled[1:] for row in comparison_rows(base, rep)]
        _write_csv(p, ("repeat", "cell_id", "method_a", "method_b", "eol_error_a", "eol_error_b",
                       "rmse_capacity_a", "rmse_capacity_b"), rows)
        written.append(p)

    if plots:
        written.extend(_plots(out, labelled, counts, edges, hist))
    return written


def _plots(out: Path, labelled, counts, edges, hist) -> list[Path]:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        warnings.warn("matplotlib not installed; skipping plots")
        return []
    paths = []
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].bar(edges[:-1], counts, width=np.diff(edges), align="edge")
    ax[0].set_xlabel("break value")
    ax[0].set_ylabel("count")
    ax[1].bar(list(hist), list(hist.values()))
    ax[1].set_xlabel("sub-models")
    fig.tight_layout()
    p = out / "histograms.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    if len(labelled) > 1:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        xs = range(len(labelled))
        ax.plot(xs, [rep.summary.eol_abs_median for _, rep in labelled], "o-", label="median")
        ax.plot(xs, [rep.summary.eol_abs_p95 for _, rep in labelled], "s--", label="95th")
        ax.set_xticks(list(xs), [lab for lab, _ in labelled])
        ax.set_ylabel("|EoL error| (%)")
        ax.legend()
        fig.tight_layout()
        p = out / "eol_by_label.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths

