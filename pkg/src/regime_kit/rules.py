"""Linear decision rules fitted by weighted logistic-surrogate classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from .value import OmegaTable

log = logging.getLogger(__name__)

CV_GRID = tuple(10.0**k for k in range(-4, 1))


def sign_decision(score) -> np.ndarray:
    """sgn with ties sent to +1."""
    return np.where(np.asarray(score, float) >= 0, 1, -1).astype(np.int64)


@dataclass
class DecisionRule:
    features: list[str]
    center: np.ndarray
    scale: np.ndarray
    intercept: float
    coef: np.ndarray
    lam: float
    notes: list[str] = field(default_factory=list)

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, float).reshape(-1, len(self.features))
        return self.intercept + ((X - self.center) / self.scale) @ self.coef

    def decide_features(self, X) -> np.ndarray:
        return sign_decision(self.score(X))

    def decide(self, H, names: Sequence[str]) -> np.ndarray:
        """Decisions for a history matrix whose columns are labelled ``names``."""
        H = np.atleast_2d(np.asarray(H, float))
        idx = [list(names).index(f) for f in self.features]
        return self.decide_features(H[:, idx])

    @classmethod
    def constant(cls, features, value=1, note=None) -> "DecisionRule":
        k = len(features)
        return cls(list(features), np.zeros(k), np.ones(k), 1.0 if value >= 0 else -1.0, np.zeros(k), 0.0,
                   [note] if note else [])


def decide(rule: DecisionRule, H, names) -> np.ndarray:
    return rule.decide(H, names)


class SurrogateObjective:
    """mean_i m_i {|O+| phi(s+ g) + |O-| phi(-s- g)} + lam ||beta||^2, g = b0 + Z beta."""

    def __init__(self, Z, omega_pos, omega_neg, row_weight, lam):
        self.Z = np.column_stack([np.ones(len(Z)), np.asarray(Z, float)])
        self.op = np.asarray(omega_pos, float)
        self.on = np.asarray(omega_neg, float)
        self.wt = np.asarray(row_weight, float)
        self.lam = float(lam)
        self.pen = np.ones(self.Z.shape[1])
        self.pen[0] = 0.0

    def value_grad(self, theta):
        g = self.Z @ theta
        loss, dg = _backend.surrogate_terms(g, self.op, self.on, self.wt)
        n = len(g)
        f = loss.sum() / n + self.lam * np.sum(self.pen * theta**2)
        grad = self.Z.T @ dg / n + 2.0 * self.lam * self.pen * theta
        return float(f), grad

    def __call__(self, theta):
        return self.value_grad(theta)[0]

    def hessian(self, theta):
        g = self.Z @ theta
        xp = np.where(self.op >= 0, 1.0, -1.0) * g
        xn = -np.where(self.on >= 0, 1.0, -1.0) * g
        sp = 1.0 / (1.0 + np.exp(-np.clip(xp, -700, 700)))
        sn = 1.0 / (1.0 + np.exp(-np.clip(xn, -700, 700)))
        h = self.wt * (np.abs(self.op) * sp * (1 - sp) + np.abs(self.on) * sn * (1 - sn))
        n = len(g)
        return (self.Z.T * h) @ self.Z / n + 2.0 * self.lam * np.diag(self.pen)


def _minimize(obj: SurrogateObjective, gtol=1e-8, max_iter=200):
    """Damped Newton with backtracking; returns (theta, converged)."""
    theta = np.zeros(obj.Z.shape[1])
    f, g = obj.value_grad(theta)
    for _ in range(max_iter):
        if np.linalg.norm(g) <= gtol:
            return theta, True
        Hm = obj.hessian(theta)
        ridge = 1e-12 * max(1.0, np.trace(Hm))
        try:
            step = -np.linalg.solve(Hm + ridge * np.eye(len(theta)), g)
        except np.linalg.LinAlgError:
            step = -g
        if g @ step >= 0:
            step = -g
        t = 1.0
        while t > 1e-12:
            cand = theta + t * step
            f_new, g_new = obj.value_grad(cand)
            if f_new <= f + 1e-4 * t * (g @ step):
                break
            t *= 0.5
        else:
            return theta, np.linalg.norm(g) <= 1e-6
        theta, f, g = cand, f_new, g_new
    return theta, np.linalg.norm(g) <= gtol


def _standardize(X):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return center, scale


def _fit_fixed(X, omega: OmegaTable, lam, features, center, scale) -> DecisionRule:
    obj = SurrogateObjective((X - center) / scale, omega.pos, omega.neg, omega.miss_weight, lam)
    theta, ok = _minimize(obj)
    rule = DecisionRule(list(features), center, scale, float(theta[0]), theta[1:].copy(), float(lam))
    if not ok:
        rule.notes.append("surrogate solve stopped before gradient tolerance")
    return rule


def cv_folds(n, k=5, seed=0) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def fit_rule(omega: OmegaTable, X, features: Sequence[str], lam: float | str = "auto",
             grid=CV_GRID, n_folds=5, seed=0) -> DecisionRule:
    """Fit the sign rule on feature matrix ``X`` (rows aligned with ``omega``).

    ``lam="auto"`` chooses the ridge level by cross-validated estimated value;
    ties go to the larger level.
    """
    X = np.asarray(X, float).reshape(len(omega), -1)
    keep = omega.miss_weight > 0
    if not keep.any():
        raise ValueError("no rows with positive missingness weight")
    X, omega = X[keep], omega.subset(keep)
    if not (np.any(omega.pos) or np.any(omega.neg)):
        return DecisionRule.constant(features, 1, "all contrasts are zero; constant rule +1")
    center, scale = _standardize(X)
    if isinstance(lam, str):
        if lam.lower() != "auto":
            raise ValueError(f"unknown penalty setting {lam!r}")
        folds = cv_folds(len(X), n_folds, seed)
        scores = []
        for cand in grid:
            tot = 0.0
            for k in range(n_folds):
                tr, te = folds != k, folds == k
                if not te.any() or not tr.any():
                    continue
                r = _fit_fixed(X[tr], omega.subset(tr), cand, features, center, scale)
                om = omega.subset(te)
                tot += float(np.sum(om.miss_weight * om.at(r.decide_features(X[te]))))
            scores.append(tot / len(X))
        best = max(range(len(grid)), key=lambda i: (round(scores[i], 12), grid[i]))
        lam = grid[best]
        log.debug("rule cv scores %s -> lam %g", scores, lam)
    elif lam < 0:
        raise ValueError("penalty must be nonnegative")
    return _fit_fixed(X, omega, float(lam), features, center, scale)
