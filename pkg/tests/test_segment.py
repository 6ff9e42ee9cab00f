"""Kernel smoothing, density, and the three break-point splitters."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plrsoh.errors import DegenerateFeatureError
from plrsoh.regress import with_bias
from plrsoh.segment import (BreakSet, CurvatureSplitter, FreeSearchSplitter, KMeansSplitter,
                            SegmentStats, SmootherConfig, break_histogram, curvature_breaks,
                            curvature_diagnostics, density, free_search_breaks, kernel_smooth,
                            kmeans_breaks, local_maxima, smooth_dq)

KNEE = 0.37


def two_regime(n=400, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, n))
    dq = -0.1 - 0.5 * x - 3.0 * np.maximum(x - KNEE, 0.0) + noise * rng.normal(size=n)
    return x, dq


def ridge_rmse(x, dq, breaks, sigma_n=0.1, sigma_w=10.0):
    """Direct per-segment ridge fits; the oracle for SegmentStats."""
    X = with_bias(x[:, None])
    seg = np.searchsorted(breaks, x, side="right")
    resid = np.empty_like(dq)
    lam = sigma_n ** 2 / sigma_w ** 2
    for s in np.unique(seg):
        m = seg == s
        w = np.linalg.solve(X[m].T @ X[m] + lam * np.eye(2), X[m].T @ dq[m])
        resid[m] = dq[m] - X[m] @ w
    return float(np.sqrt(np.mean(resid ** 2)))


class TestSmoothing:
    def test_constant_dq(self):
        x = np.random.default_rng(0).uniform(size=50)
        grid, f = smooth_dq(x, np.full(50, -0.3))
        assert grid.size == 201 and np.allclose(f, -0.3, rtol=0, atol=1e-15)

    def test_single_point(self):
        f = kernel_smooth([0.4], [-1.5], np.linspace(-3, 3, 11), 0.1)
        assert np.all(f == -1.5)

    def test_midpoint_symmetry(self):
        assert abs(kernel_smooth([0.0, 1.0], [0.0, 1.0], [0.5], 0.1)[0] - 0.5) < 1e-15

    def test_degenerate_feature(self):
        with pytest.raises(DegenerateFeatureError):
            smooth_dq(np.ones(5), np.arange(5.0))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 80), st.floats(0.05, 1.0), st.integers(0, 2**31 - 1))
    def test_matches_direct_formula(self, n, ell, seed):
        rng = np.random.default_rng(seed)
        x, dq = rng.uniform(size=n), rng.normal(size=n)
        pts = np.linspace(0, 1, 17)
        w = np.exp(-((pts[:, None] - x[None, :]) ** 2) / ell ** 2)
        assert np.allclose(kernel_smooth(x, dq, pts, ell), (w @ dq) / w.sum(1), rtol=1e-10, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 80), st.integers(0, 2**31 - 1))
    def test_bounded_by_data(self, n, seed):
        rng = np.random.default_rng(seed)
        x, dq = rng.uniform(size=n), rng.normal(size=n)
        if np.ptp(x) == 0:
            return
        _, f = smooth_dq(x, dq)
        assert np.all(f >= dq.min() - 1e-12) and np.all(f <= dq.max() + 1e-12)


class TestDensity:
    def test_all_points_at_one_location(self):
        assert density(np.full(7, 0.2), [0.2], 0.01)[0] == 1.0

    def test_far_grid_point(self):
        assert density([0.0, 0.1], [5.0], 0.3)[0] == 0.0

    def test_hand_count(self):
        assert density([0.0, 0.5, 1.0], [0.5], 0.3)[0] == pytest.approx(1 / 3, abs=1e-15)

    def test_radius_positive(self):
        with pytest.raises(ValueError):
            density([0.0], [0.0], 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.floats(0.01, 0.5), st.integers(0, 2**31 - 1))
    def test_matches_count(self, n, r, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=n)
        grid = np.linspace(-0.2, 1.2, 23)
        expected = [np.mean(np.abs(x - g) < r) for g in grid]
        got = density(x, grid, r)
        assert np.allclose(got, expected) and np.all((got >= 0) & (got <= 1))


class TestLocalMaxima:
    def test_plateau_reports_leftmost(self):
        assert local_maxima(np.array([0, 1, 2, 2, 2, 1, 0.0])).tolist() == [2]

    def test_edges_and_monotone(self):
        assert local_maxima(np.array([3, 2, 1, 0.0])).size == 0
        assert local_maxima(np.array([0, 2, 1, 3, 1.0])).tolist() == [1, 3]


class TestCurvature:
    def test_linear_dq_gives_no_breaks(self):
        x = np.linspace(0.0, 1.0, 300)
        for k in (1, 3):
            assert len(curvature_breaks(x, 0.2 - 0.7 * x, k=k)) == 0

    def test_recovers_knee(self):
        x, dq = two_regime(noise=0.02)
        bs = curvature_breaks(x, dq, k=1)
        assert len(bs) == 1
        assert abs(bs.breaks[0] - KNEE) <= 0.05 * np.ptp(x)

    def test_k_capped_at_available_maxima(self):
        x, dq = two_regime()
        diag = curvature_diagnostics(x, dq)
        bs = curvature_breaks(x, dq, k=1000)
        assert 1 <= len(bs) <= local_maxima(diag.score).size

    def test_k_zero(self):
        x, dq = two_regime()
        assert len(curvature_breaks(x, dq, k=0)) == 0

    def test_splitter_matches_function(self):
        x, dq = two_regime(noise=0.02)
        sp = CurvatureSplitter(x, dq)
        for k in range(4):
            assert sp(k).breaks == curvature_breaks(x, dq, k=k).breaks

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.01, 100.0), st.floats(-50.0, 50.0))
    def test_affine_equivariant(self, a, b):
        x, dq = two_regime(noise=0.02, seed=3)
        ref = np.array(curvature_breaks(x, dq, k=3).breaks)
        got = np.array(curvature_breaks(a * x + b, dq, k=3).breaks)
        assert got.size == ref.size
        assert np.allclose(got, a * ref + b, rtol=0, atol=1e-9 * a + 1e-9 * abs(b))

    def test_rho_in_unit_interval(self):
        x, dq = two_regime(noise=0.02)
        d = curvature_diagnostics(x, dq)
        assert np.all((d.rho >= 0) & (d.rho <= 1))
        assert np.allclose(d.score, d.rho * np.abs(d.f2))

    def test_diagnostics_csv(self, tmp_path):
        x, dq = two_regime()
        curvature_diagnostics(x, dq).to_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "grid,f_dq,f2,rho,f_bp" and len(lines) == 202

    def test_density_radius_override(self):
        x, dq = two_regime()
        d = curvature_diagnostics(x, dq, SmootherConfig(density_radius=0.5))
        assert d.rho.max() > 0.9


class TestKMeans:
    def blobs(self, centres, n=60, seed=0):
        rng = np.random.default_rng(seed)
        x1 = np.concatenate([c + 0.01 * rng.normal(size=n) for c in centres])
        x2 = rng.normal(size=x1.size) * 0.01
        return x1, x2

    def test_two_blobs(self):
        x1, x2 = self.blobs([0.0, 1.0])
        bs = kmeans_breaks(x1, x2, 1, seed=4)
        assert len(bs) == 1 and 0.1 < bs.breaks[0] < 0.9

    def test_three_blobs(self):
        x1, x2 = self.blobs([0.0, 0.5, 1.0])
        bs = kmeans_breaks(x1, x2, 2, seed=1)
        assert np.allclose(bs.breaks, [0.25, 0.75], atol=0.01)

    def test_k_zero(self):
        x1, x2 = self.blobs([0.0, 1.0])
        assert len(kmeans_breaks(x1, x2, 0)) == 0

    def test_seeded(self):
        x, dq = two_regime(noise=0.02)
        a = KMeansSplitter(x, dq, seed=9)(3)
        b = KMeansSplitter(x, dq, seed=9)(3)
        assert a == b

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            kmeans_breaks([0.0, 1.0], [0.0, 1.0], 2)


class TestSegmentStats:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=3, unique=True), st.integers(0, 1000))
    def test_matches_direct_fits(self, breaks, seed):
        x, dq = two_regime(n=300, noise=0.05, seed=seed)
        b = np.sort(breaks)
        stats = SegmentStats(with_bias(x[:, None]), dq, x, 0.1, 10.0)
        got = stats.rmse(b)
        counts = np.diff(np.concatenate([[0], np.searchsorted(x, b, side="left"), [x.size]]))
        if np.any(counts < 3):
            assert got == float("inf")
        else:
            assert abs(got - ridge_rmse(x, dq, b)) < 1e-9


class TestFreeSearch:
    def stats(self, noise=0.0):
        x, dq = two_regime(noise=noise)
        return x, dq, SegmentStats(with_bias(x[:, None]), dq, x, 0.1, 10.0)

    def test_not_worse_than_true_break(self):
        x, dq, stats = self.stats()
        bs = free_search_breaks(stats, 1, init=[0.5])
        assert stats.rmse(bs.breaks) <= stats.rmse([KNEE]) + 1e-9

    def test_dense_scan_oracle(self):
        x, dq, stats = self.stats()
        bs = free_search_breaks(stats, 1, init=[0.3])
        scan = min(ridge_rmse(x, dq, [b]) for b in np.linspace(0.01, 0.99, 981))
        assert ridge_rmse(x, dq, bs.breaks) <= scan + 1e-9

    def test_descent_from_optimal_init(self):
        x, dq, stats = self.stats(noise=0.03)
        start = stats.rmse([KNEE])
        bs = free_search_breaks(stats, 1, init=[KNEE])
        assert stats.rmse(bs.breaks) <= start

    def test_infeasible_init_still_finite(self):
        x, dq, stats = self.stats(noise=0.03)
        bs = free_search_breaks(stats, 2, init=[0.001, 0.002])
        assert np.isfinite(stats.rmse(bs.breaks))

    def test_breaks_ordered_and_in_range(self):
        x, dq, stats = self.stats(noise=0.03)
        for k in (1, 2, 3):
            b = free_search_breaks(stats, k).breaks
            assert all(b2 > b1 for b1, b2 in zip(b, b[1:]))
            assert x.min() < b[0] and b[-1] <= x.max()

    def test_splitter_not_worse_than_init(self):
        x, dq, stats = self.stats(noise=0.03)
        init = CurvatureSplitter(x, dq)
        fs = FreeSearchSplitter(stats, init)
        for k in (1, 2):
            assert stats.rmse(fs(k).breaks) <= stats.rmse(init(k).breaks) + 1e-15
        assert len(fs(0)) == 0


class TestParity:
    def test_methods_agree_on_separated_regimes(self):
        x, dq = two_regime(noise=0.01, seed=2)
        span = np.ptp(x)
        stats = SegmentStats(with_bias(x[:, None]), dq, x, 0.01, 10.0)
        c = curvature_breaks(x, dq, k=1).breaks[0]
        f = free_search_breaks(stats, 1).breaks[0]
        assert abs(c - f) <= 0.05 * span
        # k-means on (x, dq) still splits the regimes somewhere inside the range
        k = kmeans_breaks(x, dq, 1, seed=0).breaks[0]
        assert x.min() < k < x.max()


class TestBreakSet:
    def test_strictly_increasing(self):
        with pytest.raises(ValueError):
            BreakSet(0, (0.5, 0.5), "x")

    def test_histogram_conserves_count(self):
        b = np.random.default_rng(0).uniform(size=137)
        counts, edges = break_histogram(b, 20)
        assert counts.sum() == 137 and edges.size == 21

    def test_histogram_empty(self):
        counts, _ = break_histogram([], 5)
        assert counts.sum() == 0
