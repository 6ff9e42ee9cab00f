"""Gaussian-process baseline with a squared-exponential ARD kernel."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import DataError, KernelMatrixError

JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_LOG_LIMITS = (-12.0, 12.0)
_MIN_LOG_SN = np.log(1e-6)


@dataclass(frozen=True)
class GprHyperparams:
    sigma_f: float
    sigma_l: tuple[float, ...]
    sigma_n: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_l", tuple(float(v) for v in np.atleast_1d(self.sigma_l)))
        if not (self.sigma_f > 0 and self.sigma_n > 0 and all(v > 0 for v in self.sigma_l)):
            raise ValueError("GPR hyperparameters must be strictly positive")

    @property
    def d(self) -> int:
        return len(self.sigma_l)

    def to_log(self) -> np.ndarray:
        return np.log([self.sigma_f, *self.sigma_l, self.sigma_n])

    @classmethod
    def from_log(cls, theta) -> "GprHyperparams":
        e = np.exp(np.asarray(theta, dtype=float))
        return cls(float(e[0]), tuple(e[1:-1]), float(e[-1]))


def kernel_matrix(A, B, hp: GprHyperparams) -> np.ndarray:
    """σf² exp(-Σ_k (a_k - b_k)² / σl_k²) for every pair of rows."""
    A = np.atleast_2d(np.asarray(A, dtype=float)) / np.asarray(hp.sigma_l)
    B = np.atleast_2d(np.asarray(B, dtype=float)) / np.asarray(hp.sigma_l)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return hp.sigma_f ** 2 * np.exp(-np.maximum(d2, 0.0))


def kernel(xi, xj, hp: GprHyperparams) -> float:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    if xi.shape != xj.shape or xi.size != hp.d:
        raise ValueError("input dimensions do not match the lengthscales")
    r2 = float((((xi - xj) / np.asarray(hp.sigma_l)) ** 2).sum())
    return hp.sigma_f ** 2 * float(np.exp(-r2))


def _factor(K: np.ndarray, noise_var: float):
    """Lower Cholesky factor of K + σn² I, escalating diagonal jitter on failure."""
    n = K.shape[0]
    for jitter in JITTERS:
        try:
            L = cholesky(K + (noise_var + jitter) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
        return L, jitter
    raise KernelMatrixError(f"kernel matrix not positive definite even with jitter {JITTERS[-1]}")


def log_marginal_likelihood(X, y, hp: GprHyperparams) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    L, _ = _factor(kernel_matrix(X, X, hp), hp.sigma_n ** 2)
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * y.size * np.log(2 * np.pi))


@dataclass(frozen=True, eq=False)
class GprModel:
    X: np.ndarray            # standardised training inputs
    y: np.ndarray
    hp: GprHyperparams
    x_mean: np.ndarray
    x_scale: np.ndarray
    chol: np.ndarray         # lower factor of K + (σn² + jitter) I
    alpha: np.ndarray
    jitter: float = 0.0
    selected: tuple[int, ...] | None = None   # feature columns when fed full feature rows

    def standardize(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_mean) / self.x_scale

    def predict(self, features):
        """Predictive mean and variance from full feature rows (uses ``selected``)."""
        f = np.atleast_2d(np.asarray(features, dtype=float))
        if self.selected is not None:
            f = f[:, list(self.selected)]
        return predict_gpr(self, f)

    def to_dict(self) -> dict:
        return {"method": "gpr", "sigma_f": self.hp.sigma_f, "sigma_l": list(self.hp.sigma_l),
                "sigma_n": self.hp.sigma_n, "x_mean": self.x_mean.tolist(),
                "x_scale": self.x_scale.tolist(), "X": self.X.tolist(), "y": self.y.tolist(),
                "selected": None if self.selected is None else list(self.selected)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GprModel":
        hp = GprHyperparams(d["sigma_f"], tuple(d["sigma_l"]), d["sigma_n"])
        X = np.array(d["X"], dtype=float)
        y = np.array(d["y"], dtype=float)
        return _assemble(X, y, hp, np.array(d["x_mean"]), np.array(d["x_scale"]),
                         None if d.get("selected") is None else tuple(d["selected"]))


def _assemble(Xs, y, hp, x_mean, x_scale, selected=None) -> GprModel:
    L, jitter = _factor(kernel_matrix(Xs, Xs, hp), hp.sigma_n ** 2)
    alpha = cho_solve((L, True), y)
    return GprModel(Xs, y, hp, x_mean, x_scale, L, alpha, jitter, selected)


def default_hyperparams(X, y) -> GprHyperparams:
    """Unit lengthscales on standardised inputs; signal and noise from the target spread."""
    X = np.atleast_2d(X)
    sy = float(np.std(y)) or 1.0
    return GprHyperparams(max(sy, float(np.sqrt(np.mean(np.square(y)))) or 1.0),
                          tuple([1.0] * X.shape[1]), 0.1 * sy)


def fit_gpr(X, y, init: GprHyperparams | None = None, n_starts: int = 5, seed: int = 0,
            optimize: bool = True, max_iter: int | None = None,
            selected: tuple[int, ...] | None = None) -> GprModel:
    """Fit hyperparameters by multi-start Nelder-Mead on the log marginal likelihood.

    Start 0 is ``init``; the others perturb it in log space. The best point
    seen, including ``init`` itself, is kept.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise DataError("GPR needs at least two matching rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite entries in GPR inputs")
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    Xs = (X - x_mean) / x_scale
    if init is None:
        init = default_hyperparams(Xs, y)
    if init.d != X.shape[1]:
        raise ValueError("init lengthscales do not match the input dimension")

    best_theta = init.to_log()
    if optimize:
        def nlml(theta):
            # box on log σf, log σl; σn only has its own floor
            if np.any(theta[:-1] < _LOG_LIMITS[0]) or np.any(theta > _LOG_LIMITS[1]) or theta[-1] < _MIN_LOG_SN:
                return np.inf
            try:
                return -log_marginal_likelihood(Xs, y, GprHyperparams.from_log(theta))
            except KernelMatrixError:
                return np.inf

        rng = np.random.default_rng(seed)
        best_val = nlml(best_theta)
        starts = [best_theta] + [best_theta + rng.normal(0.0, 1.0, best_theta.size)
                                 for _ in range(max(n_starts, 1) - 1)]
        for start in starts:
            res = minimize(nlml, start, method="Nelder-Mead",
                           options={"maxiter": max_iter or 60 * start.size,
                                    "xatol": 1e-4, "fatol": 1e-6})
            if np.isfinite(res.fun) and res.fun < best_val:
                best_val, best_theta = float(res.fun), res.x
    return _assemble(Xs, y, GprHyperparams.from_log(best_theta), x_mean, x_scale, selected)


def predict_gpr(model: GprModel, X_star):
    """Mean K*ᵀα and variance κ(x*,x*) - K*ᵀ(K+σn²I)⁻¹K* + σn²."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != model.X.shape[1]:
        raise ValueError(f"expected {model.X.shape[1]} columns, got {X_star.shape[1]}")
    Zs = model.standardize(X_star)
    Ks = kernel_matrix(model.X, Zs, model.hp)
    mean = Ks.T @ model.alpha
    v = solve_triangular(model.chol, Ks, lower=True)
    explained = (v * v).sum(axis=0)
    var = model.hp.sigma_f ** 2 - explained + model.hp.sigma_n ** 2
    # explained <= σf² holds exactly; clip round-off only
    return mean, np.maximum(var, model.hp.sigma_n ** 2)
