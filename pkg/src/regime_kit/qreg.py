"""Weighted smoothing-spline regression in the Sobolev RKHS.

Minimises ``sum_i w_i (y_i - b - f(h_i))^2 + lam ||f||_Q^2`` with an
unpenalised intercept ``b``.  Profiling out ``b`` replaces the weight matrix
by its weighted-centred version ``Wc = W - w w'/sum(w)``, giving the normal
equations ``(Wc K + lam I) alpha = Wc y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import cross_gram, gram_matrix

GCV_GRID = tuple(10.0**k for k in range(-6, 2))


@dataclass
class QModel:
    arm: int
    alpha: np.ndarray
    intercept: float
    points: np.ndarray
    lam: float
    weights: np.ndarray
    gcv: float | None = None

    def predict(self, points) -> np.ndarray:
        """Predictions at points already mapped into the unit cube."""
        P = np.atleast_2d(np.asarray(points, float))
        if P.shape[0] == 0:
            return np.empty(0)
        return self.intercept + cross_gram(P, self.points) @ self.alpha


def _fit_once(K, y, w, lam):
    n = len(y)
    sw = w.sum()
    Wc = np.diag(w) - np.outer(w, w) / sw
    M = Wc @ K + lam * np.eye(n)
    alpha = np.linalg.solve(M, Wc @ y)
    b = float(w @ (y - K @ alpha) / sw)
    return alpha, b, M, Wc


def _gcv_score(K, y, w, lam):
    alpha, b, M, Wc = _fit_once(K, y, w, lam)
    fitted = b + K @ alpha
    m = len(y)
    df = 1.0 + float(np.sum(K * np.linalg.solve(M, Wc).T))
    rss = float(w @ (y - fitted) ** 2) / w.sum()
    denom = (1.0 - df / m) ** 2
    return (rss / denom if denom > 0 else np.inf), alpha, b


def fit_weighted_spline(points, y, case_weights=None, lam: float | str = "auto", arm: int = 0, grid=GCV_GRID) -> QModel:
    """Fit one arm's Q-function; rows with zero case weight are dropped.

    ``lam="auto"`` picks the penalty by weighted generalized cross-validation.
    """
    P = np.atleast_2d(np.asarray(points, float))
    y = np.asarray(y, float)
    w = np.ones(len(y)) if case_weights is None else np.asarray(case_weights, float)
    if np.any(w < 0):
        raise ValueError("case weights must be nonnegative")
    keep = w > 0
    if keep.sum() == 0:
        raise ValueError("all case weights are zero")
    if keep.sum() < 2:
        raise ValueError("need at least two rows with positive weight")
    P, y, w = P[keep], y[keep], w[keep]
    if not np.isfinite(y).all():
        raise ValueError("responses must be finite")
    gm = gram_matrix(P)
    K = gm.jittered()
    gcv = None
    if isinstance(lam, str):
        if lam.lower() != "auto":
            raise ValueError(f"unknown penalty setting {lam!r}")
        best = None
        for cand in grid:
            try:
                score, alpha, b = _gcv_score(K, y, w, cand)
            except np.linalg.LinAlgError:
                continue
            if best is None or score < best[0]:
                best = (score, cand, alpha, b)
        if best is None:
            raise np.linalg.LinAlgError("spline system singular for every penalty")
        gcv, lam, alpha, b = best
    else:
        if lam < 0:
            raise ValueError("penalty must be nonnegative")
        alpha, b, _, _ = _fit_once(K, y, w, float(lam))
    return QModel(arm=arm, alpha=alpha, intercept=b, points=P, lam=float(lam), weights=w, gcv=gcv)


def fit_arm_models(points, A, y, case_weights=None, lam="auto") -> dict[int, QModel]:
    """Separate spline fits for A = +1 and A = -1."""
    A = np.asarray(A)
    y = np.asarray(y, float)
    w = np.ones(len(A)) if case_weights is None else np.asarray(case_weights, float)
    return {a: fit_weighted_spline(np.asarray(points)[A == a], y[A == a], w[A == a], lam, arm=a) for a in (1, -1)}


def build_pseudo_outcome(models: dict[int, QModel], decisions, points, observed=None) -> np.ndarray:
    """Q_hat(h, d(h)) row by row; rows with ``observed == 0`` come back as NaN."""
    d = np.asarray(decisions)
    P = np.atleast_2d(np.asarray(points, float))
    out = np.where(d == 1, models[1].predict(P), models[-1].predict(P))
    if observed is not None:
        out = np.where(np.asarray(observed) == 1, out, np.nan)
    return out
