"""Repeated trials, sweeps, exports and reports."""
import csv
import json

import numpy as np
import pytest

from plrsoh.errors import DataError
from plrsoh.featurize import FEATURE_NAMES
from plrsoh.harness import (SWEEP_STRIDE, SweepConfig, TrialConfig, TrialReport, report, run_sweep,
                            run_trial, split_cells, sweep_configs, write_sweep)
from plrsoh.select import SelectionConfig, SelectionResult
from plrsoh.synthetic import SyntheticSpec, generate_synthetic


def topk_selector(features, delta_q, cfg: SelectionConfig):
    """Unconstrained top-k by |Pearson| written against np.corrcoef."""
    with np.errstate(all="ignore"):
        r = np.array([np.corrcoef(features[:, i], delta_q)[0, 1] for i in range(features.shape[1])])
    r = np.nan_to_num(r)
    order = sorted(range(r.size), key=lambda i: (-round(abs(r[i]), 12), i))
    return SelectionResult(tuple(order[:cfg.n_features]), r, np.eye(r.size), [], False, cfg)


@pytest.fixture(scope="module")
def fleet():
    return generate_synthetic(SyntheticSpec(n_cells=24, rng_seed=21))[0]


@pytest.fixture(scope="module")
def clean_fleet():
    return generate_synthetic(SyntheticSpec(n_cells=24, rng_seed=22, noise_std=0.0))[0]


def cfg(**kw):
    base = dict(n_repeats=2, n_train_cells=12, rng_seed=7)
    base.update(kw)
    return TrialConfig(**base)


class TestConfig:
    def test_validation(self):
        for bad in ({"method": "svm"}, {"n_repeats": 0}, {"n_train_cells": 0}, {"bounds_from": "test"},
                    {"rho_max": 1.5}, {"beta_improv": -1.0}, {"workers": 0}):
            with pytest.raises(ValueError):
                TrialConfig(**bad)

    def test_dict_round_trip(self):
        c = TrialConfig(method="gpr", synthetic=SyntheticSpec(n_cells=9, knee_onset_range=(0.5, 0.6)))
        assert TrialConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c

    def test_unknown_field(self):
        with pytest.raises(ValueError, match="unknown"):
            TrialConfig.from_dict({"n_repeat": 3})

    def test_sweep_parameter_checked(self):
        with pytest.raises(ValueError):
            SweepConfig(TrialConfig(), "nonsense", (1, 2))

    def test_infeasible_split(self, fleet):
        with pytest.raises(DataError):
            run_trial(cfg(n_train_cells=24), fleet)


class TestSplit:
    def test_disjoint_and_seeded(self):
        tr, te = split_cells(157, 50, 3)
        assert tr.size == 50 and te.size == 107 and not set(tr) & set(te)
        tr2, _ = split_cells(157, 50, 3)
        assert np.array_equal(tr, tr2)


class TestTrial:
    def test_deterministic(self, fleet):
        a = run_trial(cfg(), fleet)
        b = run_trial(cfg(), fleet)
        assert a.rows_csv() == b.rows_csv() and a.repeats_csv() == b.repeats_csv()

    def test_row_count_and_seed_ladder(self, fleet):
        rep = run_trial(cfg(n_repeats=3), fleet)
        assert len(rep.rows) == 3 * 12
        assert [r.seed for r in rep.repeats] == [7, 8, 9]

    def test_train_test_disjoint(self, fleet):
        rep = run_trial(cfg(), fleet)
        for rec in rep.repeats:
            tested = {r.cell_id for r in rep.rows if r.repeat == rec.repeat}
            assert not tested & set(rec.train_ids)

    @pytest.mark.parametrize("method", ["plr-curvature", "plr-kmeans", "plr-freesearch"])
    def test_noiseless_median_eol(self, clean_fleet, method):
        rep = run_trial(cfg(method=method), clean_fleet)
        assert rep.summary.eol_abs_median < 0.5

    def test_gpr_runs_on_same_splits(self, fleet):
        g = run_trial(cfg(method="gpr", n_repeats=1, gpr_starts=1, gpr_max_points=80), fleet)
        p = run_trial(cfg(n_repeats=1), fleet)
        assert g.repeats[0].train_ids == p.repeats[0].train_ids
        assert [r.cell_id for r in g.rows] == [r.cell_id for r in p.rows]
        assert all(r.n_models == 0 for r in g.rows)

    def test_workers_match_serial(self, fleet):
        assert run_trial(cfg(workers=2), fleet).rows_csv() == run_trial(cfg(), fleet).rows_csv()

    def test_bounds_from_all(self, fleet):
        rep = run_trial(cfg(n_repeats=1, bounds_from="all"), fleet)
        assert len(rep.rows) == 12

    def test_write_read_round_trip(self, tmp_path, fleet):
        rep = run_trial(cfg(), fleet)
        back = TrialReport.read(rep.write(tmp_path / "t"))
        assert back.rows_csv() == rep.rows_csv()
        assert back.config == rep.config
        assert [r.breaks for r in back.repeats] == [r.breaks for r in rep.repeats]


class TestModelSizeDistribution:
    def test_mostly_two_to_five_sub_models(self):
        cells = generate_synthetic(SyntheticSpec(n_cells=157, rng_seed=4))[0]
        rep = run_trial(TrialConfig(n_repeats=20, n_train_cells=50, rng_seed=100), cells)
        sizes = np.array([r.n_models for r in rep.repeats])
        assert np.mean((sizes >= 2) & (sizes <= 5)) >= 0.75


class TestSweep:
    def test_seed_offsets(self):
        cs = sweep_configs(SweepConfig(TrialConfig(rng_seed=3), "n_features", (1, 2, 3), 4))
        assert [c.rng_seed for c in cs] == [3, 3 + SWEEP_STRIDE, 3 + 2 * SWEEP_STRIDE]
        assert [c.n_features for c in cs] == [1, 2, 3] and all(c.n_repeats == 4 for c in cs)

    def test_rho_max_one_equals_top_k_trial(self, fleet):
        base = cfg()
        results = run_sweep(SweepConfig(base, "rho_max", (0.85, 1.0), 2), fleet)
        direct = run_trial(TrialConfig(**{**base.__dict__, "rho_max": 1.0, "rng_seed": 7 + SWEEP_STRIDE}),
                           fleet, selector=topk_selector)
        value, rep = results[1]
        assert value == 1.0
        assert rep.rows_csv() == direct.rows_csv()
        assert rep.summary == direct.summary

    def test_write_sweep(self, tmp_path, fleet):
        results = run_sweep(SweepConfig(cfg(), "n_features", (2, 3), 1), fleet)
        out = write_sweep(results, "n_features", tmp_path / "s")
        rows = list(csv.DictReader(open(out / "sweep.csv")))
        assert [r["n_features"] for r in rows] == ["2", "3"]
        assert (out / "value_01" / "forecasts.csv").exists()


class TestReport:
    def test_tables_histograms_and_comparison(self, tmp_path, fleet):
        a = run_trial(cfg(), fleet)
        b = run_trial(cfg(method="plr-kmeans"), fleet)
        report([a, b], tmp_path)
        table = list(csv.DictReader(open(tmp_path / "summary_table.csv")))
        assert len(table) == 6 and {r["metric"] for r in table} == {"rmse_dq", "rmse_capacity", "eol_error_abs"}
        hist = list(csv.DictReader(open(tmp_path / "breaks_histogram.csv")))
        total = sum(len(r.breaks) for rep in (a, b) for r in rep.repeats)
        assert sum(int(r["count"]) for r in hist) == total
        sizes = list(csv.DictReader(open(tmp_path / "n_models_histogram.csv")))
        assert sum(int(r["count"]) for r in sizes) == 4
        comp = list(csv.DictReader(open(tmp_path / "comparison.csv")))
        assert len(comp) == len(a.rows)
        assert {(r["repeat"], r["cell_id"]) for r in comp} == {(str(r.repeat), r.cell_id) for r in a.rows}

    def test_single_report_has_no_comparison(self, tmp_path, fleet):
        written = report(run_trial(cfg(n_repeats=1), fleet), tmp_path)
        assert not (tmp_path / "comparison.csv").exists() and len(written) == 3

    def test_plots(self, tmp_path, fleet):
        pytest.importorskip("matplotlib")
        a = run_trial(cfg(n_repeats=1), fleet)
        written = report([a, a], tmp_path, plots=True)
        assert (tmp_path / "histograms.png").exists() and len(written) == 6

    def test_split_feature_recorded(self, fleet):
        rep = run_trial(cfg(n_repeats=1), fleet)
        assert rep.repeats[0].split_feature in FEATURE_NAMES
