"""Compiled and numpy kernels must agree."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plrsoh import _kernels_py, kernels

compiled = pytest.importorskip("plrsoh._kernels", reason="Cython extension not built")


class TestDispatch:
    def test_backend_name(self):
        assert kernels.BACKEND in ("cython", "python")

    def test_pairs_shared(self):
        assert kernels.PAIRS == _kernels_py.PAIRS


class TestParity:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 300), st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_occupancy(self, n, n_int, seed):
        rng = np.random.default_rng(seed)
        t = np.cumsum(rng.uniform(0.1, 2.0, n))
        vals = rng.normal(size=(6, n))
        thr = np.sort(rng.normal(size=(6, 4)), axis=1)
        dt = (t[-1] - t[0]) / n_int
        a = _kernels_py.occupancy(t, vals, t[0], dt, n_int, thr)
        b = compiled.occupancy(t, vals, t[0], dt, n_int, thr)
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 400), st.integers(2, 300), st.floats(1e-3, 2.0), st.integers(0, 2**31 - 1))
    def test_smooth_density(self, n, g, ell, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, n)
        y = rng.normal(size=n)
        grid = np.linspace(-0.2, 1.2, g)
        fa, ra = _kernels_py.smooth_density(x, y, grid, ell, ell)
        fb, rb = compiled.smooth_density(x, y, grid, ell, ell)
        assert np.allclose(fa, fb, rtol=1e-12, atol=1e-12)
        assert np.array_equal(ra, rb)
