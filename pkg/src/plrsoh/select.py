"""Correlation-ranked feature selection with a pairwise-correlation cap."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .featurize import FEATURE_NAMES

# |rho| values closer than this are treated as tied (then catalog order wins)
TIE_TOL = 1e-12
_CONST_TOL = 1e-12


@dataclass(frozen=True)
class SelectionConfig:
    n_features: int = 5
    rho_max: float = 0.85

    def __post_init__(self):
        if not 1 <= self.n_features <= len(FEATURE_NAMES):
            raise ValueError(f"n_features must be in [1, {len(FEATURE_NAMES)}]")
        if not 0 < self.rho_max <= 1:
            raise ValueError("rho_max must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class SelectionResult:
    selected: tuple[int, ...]
    target_corr: np.ndarray       # rho(feature, dq) for every catalog feature
    corr: np.ndarray              # full feature-feature correlation matrix
    trace: list = field(default_factory=list)
    short: bool = False
    config: SelectionConfig = SelectionConfig()

    @property
    def names(self) -> list[str]:
        return [FEATURE_NAMES[i] for i in self.selected]

    @property
    def split_feature(self) -> int:
        return self.selected[0]

    @property
    def selected_corr(self) -> np.ndarray:
        return self.target_corr[list(self.selected)]

    def to_dict(self) -> dict:
        return {
            "selected": self.names,
            "selected_index": list(self.selected),
            "split_feature": FEATURE_NAMES[self.split_feature] if self.selected else None,
            "rho_with_dq": self.selected_corr.tolist(),
            "n_features": self.config.n_features,
            "rho_max": self.config.rho_max,
            "short": self.short,
            "trace": self.trace,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _standardized(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    centred = a - a.mean(axis=0)
    norm = np.sqrt((centred ** 2).sum(axis=0))
    scale = np.maximum(np.abs(a).max(axis=0), 1.0) * np.sqrt(a.shape[0])
    dead = norm <= _CONST_TOL * scale
    norm[dead] = 1.0
    centred[:, dead] = 0.0
    return centred / norm


def pearson(x, y) -> float:
    """Sample Pearson correlation; 0 when either vector is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two vectors of equal length >= 2")
    z = _standardized(np.column_stack([x, y]))
    return float(np.clip(z[:, 0] @ z[:, 1], -1.0, 1.0))


def correlation_matrix(features: np.ndarray) -> np.ndarray:
    z = _standardized(features)
    return np.clip(z.T @ z, -1.0, 1.0)


def rank_by_target(target_corr: np.ndarray) -> list[int]:
    mag = np.abs(target_corr)
    order = sorted(range(mag.size), key=lambda i: (-mag[i], i))
    # merge near-ties so float noise between identical columns cannot reorder them
    ranked, i = [], 0
    while i < len(order):
        j = i + 1
        while j < len(order) and mag[order[i]] - mag[order[j]] <= TIE_TOL:
            j += 1
        ranked.extend(sorted(order[i:j]))
        i = j
    return ranked


def select_features(features: np.ndarray, delta_q: np.ndarray,
                    cfg: SelectionConfig = SelectionConfig()) -> SelectionResult:
    """Greedy walk down |rho(feature, dq)|, skipping candidates too correlated
    with anything already chosen. Constant columns are never selected."""
    features = np.asarray(features, dtype=float)
    delta_q = np.asarray(delta_q, dtype=float)
    if features.shape[0] < 2:
        raise ValueError("need at least two records to select features")
    z = _standardized(np.column_stack([features, delta_q]))
    full = np.clip(z.T @ z, -1.0, 1.0)
    corr = full[:-1, :-1]
    target = full[:-1, -1]
    dead = ~np.any(z[:, :-1] != 0.0, axis=0)

    selected: list[int] = []
    trace = []
    for i in rank_by_target(target):
        name = FEATURE_NAMES[i] if i < len(FEATURE_NAMES) else str(i)
        if len(selected) == cfg.n_features:
            break
        if dead[i]:
            trace.append({"feature": name, "action": "skip", "reason": "constant"})
            continue
        clash = [j for j in selected if abs(corr[i, j]) > cfg.rho_max]
        if clash:
            j = clash[0]
            trace.append({"feature": name, "action": "skip",
                          "reason": f"|rho| {abs(corr[i, j]):.4f} with {FEATURE_NAMES[j]} > {cfg.rho_max}"})
            continue
        selected.append(i)
        trace.append({"feature": name, "action": "select", "rho_dq": float(target[i])})

    short = len(selected) < cfg.n_features
    if short:
        warnings.warn(f"only {len(selected)} of {cfg.n_features} features selectable under rho_max={cfg.rho_max}")
    return SelectionResult(tuple(selected), target, corr, trace, short, cfg)
