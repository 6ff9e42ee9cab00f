"""Bayesian linear sub-models and the piecewise model built from them."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DataError
from .featurize import FEATURE_NAMES, PercentileBounds
from .segment import BreakSet

SIGMA_N_FLOOR = 1e-6


@dataclass(frozen=True)
class BlrPrior:
    sigma_n: float = 0.1
    sigma_w: float = 10.0

    def __post_init__(self):
        if not (self.sigma_n > 0 and self.sigma_w > 0):
            raise ValueError("sigma_n and sigma_w must be > 0")


@dataclass(frozen=True, eq=False)
class BlrPosterior:
    """Gaussian posterior over weights; the last weight multiplies the bias column."""

    w_hat: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray
    sigma_n: float
    n_train: int
    flagged: bool = False        # not fitted on its own segment's data
    source: int | None = None    # segment whose posterior was reused

    @property
    def d(self) -> int:
        return self.w_hat.size

    def to_dict(self) -> dict:
        return {"w_hat": self.w_hat.tolist(), "precision": self.precision.tolist(),
                "covariance": self.covariance.tolist(), "sigma_n": self.sigma_n,
                "n_train": self.n_train, "flagged": self.flagged, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "BlrPosterior":
        return cls(np.array(d["w_hat"], float), np.array(d["precision"], float),
                   np.array(d["covariance"], float), float(d["sigma_n"]), int(d["n_train"]),
                   bool(d["flagged"]), d["source"])

    def reused_by(self, segment: int) -> "BlrPosterior":
        return BlrPosterior(self.w_hat, self.precision, self.covariance, self.sigma_n,
                            self.n_train, True, segment)


def with_bias(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([X, np.ones(X.shape[0])])


def fit_blr(X, y, prior: BlrPrior = BlrPrior()) -> BlrPosterior:
    """Posterior mean ŵ = σn⁻² A⁻¹ Xᵀy with precision A = σn⁻² XᵀX + σw⁻² I.

    ``X`` must already contain the bias column.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size or X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"design {X.shape} and target ({y.size},) do not match")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite entries in regression inputs")
    d = X.shape[1]
    inv_n2 = prior.sigma_n ** -2
    A = inv_n2 * (X.T @ X) + np.eye(d) * prior.sigma_w ** -2
    A = 0.5 * (A + A.T)
    cho = cho_factor(A, lower=True)
    w = cho_solve(cho, inv_n2 * (X.T @ y))
    cov = cho_solve(cho, np.eye(d))
    return BlrPosterior(w, A, 0.5 * (cov + cov.T), prior.sigma_n, X.shape[0])


def predict_blr(post: BlrPosterior, X_star):
    """Predictive mean and variance (weight uncertainty plus observation noise)."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != post.d:
        raise ValueError(f"expected {post.d} columns, got {X_star.shape[1]}")
    mean = X_star @ post.w_hat
    var = np.einsum("ij,jk,ik->i", X_star, post.covariance, X_star) + post.sigma_n ** 2
    return mean, np.maximum(var, post.sigma_n ** 2)


def estimate_sigma_n(X, y, sigma_w: float = 10.0, init: float = 0.1, passes: int = 1) -> float:
    """Residual std of a global fit, started at ``init`` and refined ``passes`` times."""
    sn = init
    for _ in range(passes + 1):
        post = fit_blr(X, y, BlrPrior(sn, sigma_w))
        resid = np.asarray(y, float) - np.asarray(X, float) @ post.w_hat
        sn = max(float(np.sqrt(np.mean(resid ** 2))), SIGMA_N_FLOOR)
    return sn


def segment_index(values, breaks) -> np.ndarray:
    """Segment owning each value: left-closed, right-open, last segment unbounded."""
    return np.searchsorted(np.asarray(breaks, float), np.asarray(values, float), side="right")


@dataclass(frozen=True, eq=False)
class PiecewiseModel:
    selected: tuple[int, ...]
    breaks: BreakSet
    segments: tuple[BlrPosterior, ...]
    prior: BlrPrior
    bounds: PercentileBounds | None = None
    size_rmse: tuple = ()    # training RMSE per candidate size, NaN where unavailable

    def __post_init__(self):
        if len(self.segments) != len(self.breaks) + 1:
            raise ValueError("segment count must equal break count + 1")

    @property
    def n_models(self) -> int:
        return len(self.segments)

    @property
    def split_feature(self) -> int:
        return self.selected[0]

    @property
    def flags(self) -> tuple[bool, ...]:
        return tuple(s.flagged for s in self.segments)

    def design(self, features) -> np.ndarray:
        return with_bias(np.atleast_2d(features)[:, list(self.selected)])

    def segment_of(self, features) -> np.ndarray:
        return segment_index(np.atleast_2d(features)[:, self.split_feature], self.breaks.breaks)

    def predict(self, features):
        """Mean and variance of ΔQ for rows of a full feature matrix."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        X = self.design(features)
        seg = self.segment_of(features)
        mean = np.empty(X.shape[0])
        var = np.empty(X.shape[0])
        for s, post in enumerate(self.segments):
            m = seg == s
            if m.any():
                mean[m], var[m] = predict_blr(post, X[m])
        return mean, var

    def rmse(self, features, delta_q) -> float:
        mean, _ = self.predict(features)
        return float(np.sqrt(np.mean((mean - np.asarray(delta_q, float)) ** 2)))

    def to_dict(self) -> dict:
        return {
            "selected": [FEATURE_NAMES[i] for i in self.selected],
            "selected_index": list(self.selected),
            "breaks": self.breaks.to_dict(),
            "prior": {"sigma_n": self.prior.sigma_n, "sigma_w": self.prior.sigma_w},
            "segments": [s.to_dict() for s in self.segments],
            "bounds": self.bounds.to_dict() if self.bounds is not None else None,
            "size_rmse": [None if math.isnan(v) else v for v in self.size_rmse],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseModel":
        b = d["breaks"]
        return cls(tuple(d["selected_index"]), BreakSet(b["feature"], tuple(b["breaks"]), b["method"]),
                   tuple(BlrPosterior.from_dict(s) for s in d["segments"]),
                   BlrPrior(**d["prior"]),
                   PercentileBounds.from_dict(d["bounds"]) if d.get("bounds") else None,
                   tuple(float("nan") if v is None else float(v) for v in d.get("size_rmse", [])))

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseModel":
        return cls.from_dict(json.loads(text))


def fit_piecewise(features, delta_q, selected, breaks: BreakSet, prior: BlrPrior,
                  bounds: PercentileBounds | None = None) -> PiecewiseModel:
    """One BLR per segment of the splitting feature (the first selected feature).

    A segment with fewer than d+1 rows, or whose design has lower rank than the
    full design, reuses the posterior of the nearest usable segment (the lower
    one on ties) and is flagged. Collinearity shared by the whole design is
    left to the prior.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    delta_q = np.asarray(delta_q, dtype=float)
    selected = tuple(int(i) for i in selected)
    X = with_bias(features[:, list(selected)])
    d = X.shape[1]
    seg = segment_index(features[:, selected[0]], breaks.breaks)
    n_seg = len(breaks) + 1
    full_rank = np.linalg.matrix_rank(X)
    fitted: list[BlrPosterior | None] = []
    for s in range(n_seg):
        m = seg == s
        if m.sum() >= d + 1 and np.linalg.matrix_rank(X[m]) == full_rank:
            fitted.append(fit_blr(X[m], delta_q[m], prior))
        else:
            fitted.append(None)
    usable = [s for s in range(n_seg) if fitted[s] is not None]
    if not usable:
        glob = fit_blr(X, delta_q, prior)
        posts = tuple(glob.reused_by(-1) for _ in range(n_seg))
    else:
        posts = []
        for s in range(n_seg):
            if fitted[s] is not None:
                posts.append(fitted[s])
            else:
                near = min(usable, key=lambda u: (abs(u - s), u))
                posts.append(fitted[near].reused_by(near))
        posts = tuple(posts)
    return PiecewiseModel(selected, breaks, posts, prior, bounds)


@dataclass(frozen=True)
class SizeSelectConfig:
    beta_improv: float = 0.01
    max_models: int = 10
    holdout_fraction: float = 0.0   # > 0 scores sizes on held-out rows instead of training rows
    seed: int = 0

    def __post_init__(self):
        if self.beta_improv < 0:
            raise ValueError("beta_improv must be >= 0")
        if self.max_models < 1:
            raise ValueError("max_models must be >= 1")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in [0, 1)")


def choose_model_size(rmse, beta_improv: float) -> int:
    """Smallest size (1-based) whose RMSE is within (1 + beta) of the best.

    Entries that are None or NaN mark sizes that could not be built.
    """
    r = np.array([np.nan if v is None else v for v in rmse], dtype=float)
    ok = np.isfinite(r)
    if not ok.any():
        raise ValueError("no candidate model size is available")
    limit = (1.0 + beta_improv) * r[ok].min()
    return int(np.flatnonzero(ok & (r <= limit))[0]) + 1


def select_model_size(features, delta_q, selected, prior: BlrPrior,
                      cfg: SizeSelectConfig, splitter, bounds: PercentileBounds | None = None):
    """Fit n_m = 1..max_models sub-models and keep the smallest one within
    ``beta_improv`` of the best training RMSE. Returns ``(n_m, model)``."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    delta_q = np.asarray(delta_q, dtype=float)
    if delta_q.size == 0:
        raise DataError("no records to fit")
    fit_rows = np.ones(delta_q.size, bool)
    if cfg.holdout_fraction > 0:
        rng = np.random.default_rng(cfg.seed)
        fit_rows[rng.permutation(delta_q.size)[: int(cfg.holdout_fraction * delta_q.size)]] = False
    score_rows = ~fit_rows if cfg.holdout_fraction > 0 else fit_rows

    rmse, models = [], []
    for n_m in range(1, cfg.max_models + 1):
        bs = splitter(n_m - 1)
        if len(bs) != n_m - 1:
            rmse.append(float("nan"))
            models.append(None)
            continue
        model = fit_piecewise(features[fit_rows], delta_q[fit_rows], selected, bs, prior, bounds)
        rmse.append(model.rmse(features[score_rows], delta_q[score_rows]))
        models.append(model)
    n_m = choose_model_size(rmse, cfg.beta_improv)
    chosen = models[n_m - 1]
    if cfg.holdout_fraction > 0:
        chosen = fit_piecewise(features, delta_q, selected, chosen.breaks, prior, bounds)
    final = PiecewiseModel(chosen.selected, chosen.breaks, chosen.segments, prior, bounds, tuple(rmse))
    return n_m, final
