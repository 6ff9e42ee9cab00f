"""Synthetic corpora with a known piecewise-linear degradation law."""
import numpy as np
import pytest

from plrsoh.data import true_eol
from plrsoh.featurize import FEATURE_INDEX, featurize
from plrsoh.synthetic import (DESIGN_VOLTAGE_BOUNDS, GroundTruth, SyntheticSpec, export_synthetic,
                              generate_synthetic, true_loss, truth_bounds)


@pytest.fixture(scope="module")
def fleet50():
    return generate_synthetic(SyntheticSpec(n_cells=50, noise_std=0.05, rng_seed=2))


class TestDeterminism:
    def test_byte_identical_exports(self, tmp_path):
        spec = SyntheticSpec(n_cells=157, rng_seed=1)
        for name in ("a", "b"):
            export_synthetic(*generate_synthetic(spec), tmp_path / name)
        for f in ("samples.csv", "capacity.csv", "ground_truth.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_changes_output(self):
        a, _ = generate_synthetic(SyntheticSpec(n_cells=20, rng_seed=1))
        b, _ = generate_synthetic(SyntheticSpec(n_cells=20, rng_seed=2))
        assert not np.array_equal(a[0].capacity, b[0].capacity)


class TestGroundTruth:
    def test_zero_noise_matches_law(self, noiseless_fleet):
        cells, truth = noiseless_fleet
        bounds = truth_bounds(truth)
        for cell in cells:
            table = featurize(cell, bounds)
            assert np.allclose(table.delta_q, truth.delta_q(table.features), rtol=0, atol=1e-10)

    def test_law_matches_scalar_loss(self, noiseless_fleet):
        cells, truth = noiseless_fleet
        table = featurize(cells[0], truth_bounds(truth))
        g = table.features[:, FEATURE_INDEX["V_1_2"]]
        s = table.features[:, FEATURE_INDEX["V_2_3"]]
        assert np.allclose(truth.delta_q(table.features), -true_loss(g, s), atol=1e-12)

    def test_voltage_bounds_on_design(self, small_fleet):
        _, truth = small_fleet
        assert np.allclose(truth_bounds(truth)["V"], DESIGN_VOLTAGE_BOUNDS)

    def test_json_round_trip(self, small_fleet):
        _, truth = small_fleet
        back = GroundTruth.from_json(truth.to_json())
        assert back.eol_days == truth.eol_days and back.feature_names == truth.feature_names

    def test_knee_fractions_in_range(self, fleet50):
        _, truth = fleet50
        frac = np.array([truth.knee_days[c] / truth.eol_days[c] for c in truth.eol_days])
        assert np.all(frac > 0.45 - 0.02) and np.all(frac < 0.7 + 0.02)

    def test_intensity_in_unit_interval(self, fleet50):
        _, truth = fleet50
        v = np.array(list(truth.intensity.values()))
        assert np.all((v >= 0) & (v <= 1))


class TestLifetimes:
    def test_observed_lifetimes_in_window(self, fleet50):
        cells, _ = fleet50
        life = np.array([true_eol(c) for c in cells])
        assert np.all((life >= 15.0) & (life <= 40.0))

    def test_observed_close_to_analytic(self, fleet50):
        cells, truth = fleet50
        life = np.array([true_eol(c) for c in cells])
        analytic = np.array([truth.eol_days[c.cell_id] for c in cells])
        assert np.median(np.abs(life - analytic)) < 1.0


class TestSpecValidation:
    @pytest.mark.parametrize("kwargs", [
        {"knee_onset_range": (0.7, 0.4)},
        {"noise_std": -1.0},
        {"n_cells": 0},
        {"lifetime_days": (40.0, 15.0)},
        {"cycles_per_interval": 0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SyntheticSpec(**kwargs)
