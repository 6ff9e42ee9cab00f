"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` must agree with them to
floating-point rounding.
"""
import numpy as np

# 1-based threshold index pairs (a, b) defining the region [p_a, p_b).
PAIRS = ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))


def _levels(values, thresholds):
    # number of thresholds <= v; region (a, b) holds v iff a <= level < b
    lev = np.empty(values.shape, dtype=np.int64)
    for v in range(values.shape[0]):
        lev[v] = np.searchsorted(thresholds[v], values[v], side="right")
    return lev


def occupancy(times, values, t0, interval_s, n_intervals, thresholds):
    """Fraction of each interval every variable spends in each region.

    Each sample holds its value until the next sample; the last sample holds
    for zero time. Returns an ``(n_intervals, n_vars * 6)`` array ordered by
    variable, then by ``PAIRS``.
    """
    times = np.asarray(times, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    thresholds = np.atleast_2d(np.asarray(thresholds, dtype=float))
    n_vars = values.shape[0]
    out = np.zeros((n_intervals, n_vars * len(PAIRS)))
    if n_intervals <= 0 or times.size < 2:
        return out

    edges = t0 + interval_s * np.arange(n_intervals + 1)
    inner = edges[(edges > times[0]) & (edges < times[-1])]
    cuts = np.union1d(times, inner)
    start = cuts[:-1]
    dur = np.diff(cuts)
    src = np.searchsorted(times, start, side="right") - 1
    keep = (src >= 0) & (src < times.size - 1) & (start >= edges[0]) & (start < edges[-1])
    start, dur, src = start[keep], dur[keep], src[keep]
    k = np.searchsorted(edges, start, side="right") - 1

    lev = _levels(values[:, src], thresholds)
    col = 0
    for v in range(n_vars):
        for a, b in PAIRS:
            mask = (lev[v] >= a) & (lev[v] < b)
            out[:, col] = np.bincount(k[mask], weights=dur[mask], minlength=n_intervals)
            col += 1
    return out / interval_s


def smooth_density(x, y, grid, lengthscale, radius):
    """Squared-exponential weighted average of ``y`` and ball density of ``x``.

    Returns ``(f, rho)`` evaluated at each grid point. Weights are shifted by
    the nearest datum's distance before exponentiating, so grid points far
    from all data do not underflow to 0/0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    f = np.empty(grid.size)
    rho = np.empty(grid.size)
    inv_l2 = 1.0 / (lengthscale * lengthscale)
    chunk = max(1, 2_000_000 // max(x.size, 1))
    for lo in range(0, grid.size, chunk):
        g = grid[lo:lo + chunk, None]
        d = g - x[None, :]
        d2 = d * d
        w = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) * inv_l2)
        f[lo:lo + chunk] = (w @ y) / w.sum(axis=1)
        rho[lo:lo + chunk] = np.count_nonzero(np.abs(d) < radius, axis=1) / x.size
    return f, rho
