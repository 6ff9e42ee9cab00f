"""Break points on the splitting feature.

Three splitters share one contract, ``(k) -> BreakSet``:

* curvature: maxima of density x |second derivative| of a kernel-smoothed
  ΔQ(x) curve,
* kmeans: centroid midpoints of k-means on the first two selected features,
* free search: Nelder-Mead over break positions minimising training RMSE.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import minimize

from . import kernels
from .errors import ClusteringError, DegenerateFeatureError

# score maxima below this fraction of the largest |f''| a purely linear
# trend could produce from float noise are ignored
_CURVATURE_FLOOR = 1e-9


@dataclass(frozen=True)
class SmootherConfig:
    grid_size: int = 201
    lengthscale_divisor: float = 10.0
    density_radius: float | None = None  # None: same as the smoothing lengthscale

    def __post_init__(self):
        if self.grid_size < 10:
            raise ValueError("grid_size must be >= 10")
        if not self.lengthscale_divisor > 0:
            raise ValueError("lengthscale_divisor must be > 0")
        if self.density_radius is not None and not self.density_radius > 0:
            raise ValueError("density_radius must be > 0")


@dataclass(frozen=True)
class BreakSet:
    feature: int
    breaks: tuple[float, ...]
    method: str

    def __post_init__(self):
        b = tuple(float(x) for x in self.breaks)
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError("breaks must be strictly increasing")
        object.__setattr__(self, "breaks", b)

    def __len__(self) -> int:
        return len(self.breaks)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "breaks": list(self.breaks), "method": self.method}


@dataclass(frozen=True, eq=False)
class CurvatureDiagnostics:
    grid: np.ndarray
    f: np.ndarray
    f2: np.ndarray
    rho: np.ndarray
    score: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("grid", "f_dq", "f2", "rho", "f_bp"))
            for row in zip(self.grid, self.f, self.f2, self.rho, self.score):
                w.writerow([repr(float(v)) for v in row])


def kernel_smooth(x, dq, points, lengthscale: float) -> np.ndarray:
    """Squared-exponential weighted average of ``dq`` evaluated at ``points``."""
    f, _ = kernels.smooth_density(np.asarray(x, float), np.asarray(dq, float),
                                  np.atleast_1d(np.asarray(points, float)), lengthscale, lengthscale)
    return f


def _lengthscale(x, cfg: SmootherConfig) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise DegenerateFeatureError("degenerate splitting feature: all values identical")
    return lo, hi, (hi - lo) / cfg.lengthscale_divisor


def smooth_dq(x, dq, cfg: SmootherConfig = SmootherConfig()):
    """Smoothed ΔQ(x) on a uniform grid spanning the data. Returns (grid, f)."""
    lo, hi, beta = _lengthscale(x, cfg)
    grid = np.linspace(lo, hi, cfg.grid_size)
    return grid, kernel_smooth(x, dq, grid, beta)


def density(x, grid, radius: float) -> np.ndarray:
    """Fraction of data points strictly within ``radius`` of each grid point."""
    if not radius > 0:
        raise ValueError("radius must be > 0")
    x = np.sort(np.asarray(x, dtype=float))
    grid = np.asarray(grid, dtype=float)
    inside = np.searchsorted(x, grid + radius, side="left") - np.searchsorted(x, grid - radius, side="right")
    return inside / x.size


def curvature_diagnostics(x, dq, cfg: SmootherConfig = SmootherConfig()) -> CurvatureDiagnostics:
    lo, hi, beta = _lengthscale(x, cfg)
    radius = cfg.density_radius if cfg.density_radius is not None else beta
    grid = np.linspace(lo, hi, cfg.grid_size)
    f, rho = kernels.smooth_density(np.asarray(x, float), np.asarray(dq, float), grid, beta, radius)
    h = grid[1] - grid[0]
    f2 = np.zeros_like(f)
    f2[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    return CurvatureDiagnostics(grid, f, f2, rho, rho * np.abs(f2))


def local_maxima(score: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima; a flat-topped peak reports its leftmost point."""
    idx = []
    n = score.size
    i = 1
    while i < n - 1:
        if score[i] > score[i - 1]:
            j = i
            while j + 1 < n and score[j + 1] == score[i]:
                j += 1
            if j + 1 < n and score[j + 1] < score[i]:
                idx.append(i)
            i = j + 1
        else:
            i += 1
    return np.array(idx, dtype=int)


def curvature_ranked(diag: CurvatureDiagnostics) -> np.ndarray:
    """Grid indices of curvature maxima, best first."""
    peaks = local_maxima(diag.score)
    span = diag.grid[-1] - diag.grid[0]
    # |f''| that float noise on a linear trend of this size could produce
    scale = (np.ptp(diag.f) + np.abs(diag.f).max()) / (span / (diag.grid.size - 1)) ** 2
    peaks = peaks[diag.score[peaks] > _CURVATURE_FLOOR * scale]
    return peaks[np.argsort(-diag.score[peaks], kind="stable")]


def curvature_breaks(x, dq, cfg: SmootherConfig = SmootherConfig(), k: int = 1, feature: int = -1) -> BreakSet:
    """The ``k`` highest curvature-score maxima, sorted ascending (fewer if unavailable)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return BreakSet(feature, (), "curvature")
    diag = curvature_diagnostics(x, dq, cfg)
    top = curvature_ranked(diag)[:k]
    return BreakSet(feature, tuple(np.sort(diag.grid[top])), "curvature")


class CurvatureSplitter:
    """Curvature splitter with the smoothing computed once for all k."""

    method = "curvature"

    def __init__(self, x, dq, cfg: SmootherConfig = SmootherConfig(), feature: int = -1):
        self.diag = curvature_diagnostics(x, dq, cfg)
        self.ranked = curvature_ranked(self.diag)
        self.feature = feature

    def __call__(self, k: int) -> BreakSet:
        top = self.ranked[:k]
        return BreakSet(self.feature, tuple(np.sort(self.diag.grid[top])), self.method)


def kmeans_breaks(x1, x2, k: int, seed: int = 0, feature: int = -1,
                  n_init: int = 5, max_retries: int = 10) -> BreakSet:
    """k+1 clusters on (x1, x2); breaks at midpoints of sorted centroid x1."""
    if k == 0:
        return BreakSet(feature, (), "kmeans")
    pts = np.column_stack([np.asarray(x1, float), np.asarray(x2, float)])
    if k + 1 > pts.shape[0]:
        raise ValueError("k + 1 clusters need at least k + 1 points")
    # raw coordinates: rescaling would inflate a structureless second feature
    z = pts
    rng = np.random.default_rng(seed)
    best = None
    failures = 0
    while (best is None or n_init > 0) and failures <= max_retries:
        try:
            cent, labels = kmeans2(z, k + 1, minit="++", seed=rng, missing="raise")
        except Exception:  # empty cluster
            failures += 1
            continue
        if np.unique(labels).size < k + 1:
            failures += 1
            continue
        inertia = float(((z - cent[labels]) ** 2).sum())
        if best is None or inertia < best[0]:
            best = (inertia, labels)
        n_init -= 1
    if best is None:
        raise ClusteringError(f"k-means left an empty cluster after {max_retries} retries")
    labels = best[1]
    cx = np.sort([pts[labels == j, 0].mean() for j in range(k + 1)])
    cx = np.unique(cx)
    return BreakSet(feature, tuple(0.5 * (cx[1:] + cx[:-1])), "kmeans")


class KMeansSplitter:
    method = "kmeans"

    def __init__(self, x1, x2, seed: int = 0, feature: int = -1):
        self.x1, self.x2, self.seed, self.feature = x1, x2, seed, feature

    def __call__(self, k: int) -> BreakSet:
        return kmeans_breaks(self.x1, self.x2, k, seed=self.seed + k, feature=self.feature)


class SegmentStats:
    """Prefix sums of XᵀX, Xᵀy, yᵀy over rows sorted by the splitting feature.

    Fitting and scoring a piecewise Bayesian linear model at any break set
    then costs O(k d³) instead of O(n d²).
    """

    def __init__(self, design: np.ndarray, y: np.ndarray, split: np.ndarray,
                 sigma_n: float, sigma_w: float):
        order = np.argsort(split, kind="stable")
        self.split = np.asarray(split, float)[order]
        X = np.asarray(design, float)[order]
        y = np.asarray(y, float)[order]
        n, d = X.shape
        self.n, self.d = n, d
        self.sxx = np.concatenate([np.zeros((1, d, d)), np.cumsum(X[:, :, None] * X[:, None, :], axis=0)])
        self.sxy = np.concatenate([np.zeros((1, d)), np.cumsum(X * y[:, None], axis=0)])
        self.syy = np.concatenate([[0.0], np.cumsum(y * y)])
        self.inv_n2 = sigma_n ** -2
        self.prior = np.eye(d) * sigma_w ** -2
        self.lo, self.hi = float(self.split[0]), float(self.split[-1])

    def rmse(self, breaks) -> float:
        """Training RMSE at the given breaks; inf if a segment has fewer than d+1 rows."""
        b = np.asarray(breaks, float)
        cut = np.concatenate([[0], np.searchsorted(self.split, b, side="left"), [self.n]])
        counts = np.diff(cut)
        if np.any(counts < self.d + 1):
            return float("inf")
        xx = self.sxx[cut[1:]] - self.sxx[cut[:-1]]
        xy = self.sxy[cut[1:]] - self.sxy[cut[:-1]]
        yy = self.syy[cut[1:]] - self.syy[cut[:-1]]
        A = self.inv_n2 * xx + self.prior
        w = np.linalg.solve(A, (self.inv_n2 * xy)[..., None])[..., 0]
        rss = yy - 2.0 * np.einsum("si,si->s", w, xy) + np.einsum("si,sij,sj->s", w, xx, w)
        return float(np.sqrt(max(rss.sum(), 0.0) / self.n))


def free_search_breaks(stats: SegmentStats, k: int, init=None, feature: int = -1,
                       max_evals: int | None = None) -> BreakSet:
    """Nelder-Mead over ordered break positions, started from ``init``.

    Candidates that are unordered, outside the feature range, or leave a
    segment too small to fit score +inf. Returns the best point seen, so the
    result is never worse than the start.
    """
    if k < 1:
        raise ValueError("free search needs k >= 1")
    lo, hi = stats.lo, stats.hi
    span = hi - lo
    if init is None or len(init) != k:
        init = np.quantile(stats.split, np.arange(1, k + 1) / (k + 1))
    x0 = np.asarray(init, float)

    def objective(b):
        if np.any(np.diff(b) <= 0) or b[0] <= lo or b[-1] > hi:
            return float("inf")
        return stats.rmse(b)

    f0 = objective(x0)
    if not np.isfinite(f0):
        q = np.quantile(stats.split, np.arange(1, k + 1) / (k + 1))
        if objective(q) < f0:
            x0, f0 = q, objective(q)
    simplex = [x0]
    for i in range(k):
        v = x0.copy()
        step = 0.05 * span
        # step toward whichever neighbour leaves more room
        left = x0[i - 1] if i > 0 else lo
        right = x0[i + 1] if i + 1 < k else hi
        v[i] += step if right - x0[i] >= x0[i] - left else -step
        simplex.append(v)
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"initial_simplex": np.array(simplex),
                            "maxfev": max_evals or 60 + 40 * k,
                            "xatol": 1e-4 * span, "fatol": 1e-9})
    best = (res.x, res.fun) if np.isfinite(res.fun) and res.fun <= f0 else (x0, f0)
    return BreakSet(feature, tuple(np.asarray(best[0], float)), "free-search")


class FreeSearchSplitter:
    method = "free-search"

    def __init__(self, stats: SegmentStats, init_splitter=None, feature: int = -1):
        self.stats, self.init_splitter, self.feature = stats, init_splitter, feature

    def __call__(self, k: int) -> BreakSet:
        if k == 0:
            return BreakSet(self.feature, (), self.method)
        init = None
        if self.init_splitter is not None:
            cand = self.init_splitter(k)
            if len(cand) == k:
                init = cand.breaks
        return free_search_breaks(self.stats, k, init, feature=self.feature)


def break_histogram(breaks, bins: int = 20):
    """Counts of break values; every break lands in exactly one bin."""
    b = np.asarray(list(breaks), float)
    if b.size == 0:
        return np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    lo, hi = b.min(), b.max()
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(b, bins=bins, range=(lo, hi))
    return counts, edges
