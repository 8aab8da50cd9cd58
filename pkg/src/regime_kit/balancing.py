"""Covariate-functional balancing weights over a Sobolev RKHS.

For one treatment arm the weights minimise

    sup_q { (mean[(I_a w - 1) q])^2 - lam1 ||q||_Q^2 } / ||q||_n^2  +  lam2 mean(I_a w^2)

subject to ``w >= 1`` on the arm.  Writing ``K = V diag(d) V'`` and
``q = V c`` at the sample points, the inner supremum is the top eigenvalue of
``(1/n) v v' - diag(n lam1 / d)`` with ``v = V'(I_a w - 1)``, a diagonal plus
rank-one matrix, so each evaluation is one secular-equation solve.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .kernels import GramMatrix, gram_matrix

log = logging.getLogger(__name__)

# The sup term scales like n * lam1 / (kernel eigenvalue), so useful RKHS
# penalties sit well below the variance penalties.
RKHS_LEVELS = tuple(10.0**k for k in range(-7, -1))
VARIANCE_LEVELS = tuple(10.0**k for k in range(-3, 3))
DEFAULT_GRID = tuple(product(RKHS_LEVELS, VARIANCE_LEVELS))


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class BalanceProblem:
    points: np.ndarray
    in_arm: np.ndarray
    lam_rkhs: float
    lam_var: float
    gram: GramMatrix | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.in_arm = np.asarray(self.in_arm, dtype=bool)
        if self.in_arm.shape != (self.points.shape[0],):
            raise ValueError("arm indicator does not match the number of points")
        if not self.in_arm.any():
            raise ValueError("treatment arm is empty")
        if self.lam_rkhs <= 0 or self.lam_var <= 0:
            raise ValueError("balancing penalties must be positive")
        if self.gram is None:
            self.gram = gram_matrix(self.points)


@dataclass
class BalancingWeights:
    weights: np.ndarray
    objective: float
    sup_term: float
    max_std_imbalance: float
    iterations: int
    converged: bool
    lam_rkhs: float
    lam_var: float
    notes: list[str] = field(default_factory=list)


def imbalance(w, in_arm, q_values) -> float:
    """(mean_i[(I_i w_i - 1) q(h_i)])^2."""
    w = np.asarray(w, dtype=float)
    q = np.asarray(q_values, dtype=float)
    ind = np.asarray(in_arm, dtype=float)
    if not (w.shape == q.shape == ind.shape):
        raise ValueError("weight, arm and q vectors must have equal length")
    return float(np.mean((ind * w - 1.0) * q) ** 2)


class _Objective:
    """Balancing loss for one arm, as a function of the arm weights only."""

    def __init__(self, eig, in_arm, lam_rkhs, lam_var):
        d, V = eig
        self.n = len(in_arm)
        self.V = V
        self.arm = np.flatnonzero(in_arm)
        self.Varm = np.ascontiguousarray(V[self.arm])
        self.delta = self.n * lam_rkhs / d
        self.lam_var = lam_var
        # b = I_a w - 1; V'b = Varm' w - V'1
        self.v_one = V.T @ np.ones(self.n)

    def sup_and_grad(self, w_arm):
        v = self.Varm.T @ w_arm - self.v_one
        mu = _backend.secular_top_root(v * v, self.delta, 1.0 / self.n)
        shift = mu + self.delta
        if not np.all(shift > 0):
            # top eigenvector is a coordinate axis with v_k = 0: locally flat
            return float(mu), np.zeros_like(w_arm)
        c = v / shift
        grad = self.Varm @ (2.0 * c / (c @ c))
        return float(mu), grad

    def __call__(self, w_arm):
        mu, g = self.sup_and_grad(w_arm)
        val = mu + self.lam_var * (w_arm @ w_arm) / self.n
        return val, g + 2.0 * self.lam_var * w_arm / self.n


def balancing_objective(problem: BalanceProblem, w) -> float:
    """L^bal at a full-length weight vector (off-arm entries ignored)."""
    w = np.asarray(w, dtype=float)
    obj = _Objective(problem.gram.eigh(), problem.in_arm, problem.lam_rkhs, problem.lam_var)
    return obj(w[problem.in_arm])[0]


def _solve(obj: _Objective, rtol=1e-7, max_iter=2000, max_backtracks=50):
    """Projected gradient with Barzilai-Borwein trial steps and backtracking."""
    w = np.ones(len(obj.arm))
    f, g = obj(w)
    best = (f, w.copy())
    step = 1.0 / max(np.linalg.norm(g), 1e-12)
    notes = []
    converged = False
    w_prev = g_prev = None
    it = 0
    for it in range(1, max_iter + 1):
        if w_prev is not None:
            s = w - w_prev
            yv = g - g_prev
            sy = s @ yv
            if sy > 0:
                step = min(max((s @ s) / sy, 1e-10), 1e10)
        for _ in range(max_backtracks):
            w_new = np.maximum(w - step * g, 1.0)
            dw = w_new - w
            f_new, g_new = obj(w_new)
            if f_new <= f + g @ dw + (0.5 / step) * (dw @ dw) + 1e-15 * abs(f):
                break
            step *= 0.5
        else:
            notes.append("line search failed to decrease the objective")
            warnings.warn("balancing solve: backtracking exhausted", ConvergenceWarning, stacklevel=3)
            break
        if not np.any(dw):
            converged = True
            break
        w_prev, g_prev = w, g
        rel = abs(f - f_new) / max(abs(f_new), 1e-12)
        w, f, g = w_new, f_new, g_new
        if f < best[0]:
            best = (f, w.copy())
        if rel < rtol:
            converged = True
            break
    if not converged and not notes:
        notes.append(f"iteration limit {max_iter} reached")
    return best[1], best[0], it, converged, notes


def balance_test_functions(points: np.ndarray) -> np.ndarray:
    """Coordinate projections and pairwise coordinate products (squares included)."""
    P = np.atleast_2d(points)
    cols = [P[:, j] for j in range(P.shape[1])]
    cols += [P[:, i] * P[:, j] for i, j in combinations_with_replacement(range(P.shape[1]), 2)]
    return np.column_stack(cols)


def standardized_imbalance(w, in_arm, F) -> np.ndarray:
    """|mean((I_a w - 1) f)| / sd(f) for each column f of F."""
    b = np.asarray(in_arm, float) * np.asarray(w, float) - 1.0
    sd = F.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return np.abs(b @ F / len(b)) / sd


def solve_weights(problem: BalanceProblem, *, eig=None, rtol=1e-7, max_iter=2000) -> BalancingWeights:
    eig = problem.gram.eigh() if eig is None else eig
    obj = _Objective(eig, problem.in_arm, problem.lam_rkhs, problem.lam_var)
    w_arm, f, it, converged, notes = _solve(obj, rtol=rtol, max_iter=max_iter)
    w = np.zeros(len(problem.in_arm))
    w[problem.in_arm] = w_arm
    sup, _ = obj.sup_and_grad(w_arm)
    F = balance_test_functions(problem.points)
    return BalancingWeights(
        weights=w,
        objective=float(f),
        sup_term=sup,
        max_std_imbalance=float(standardized_imbalance(w, problem.in_arm, F).max()),
        iterations=it,
        converged=converged,
        lam_rkhs=problem.lam_rkhs,
        lam_var=problem.lam_var,
        notes=notes,
    )


def tune_balance_params(
    points,
    in_arm,
    grid: Iterable[tuple[float, float]] = DEFAULT_GRID,
    gram: GramMatrix | None = None,
) -> tuple[tuple[float, float], BalancingWeights]:
    """Pick (lam1, lam2) from ``grid`` by worst standardized imbalance.

    Ties go to the larger lam2.  Returns the pair and its weights.
    """
    grid = [tuple(map(float, g)) for g in grid]
    if not grid:
        raise ValueError("empty tuning grid")
    points = np.atleast_2d(np.asarray(points, float))
    gram = gram_matrix(points) if gram is None else gram
    eig = gram.eigh()
    best_key = None
    best = None
    for lam1, lam2 in grid:
        res = solve_weights(BalanceProblem(points, in_arm, lam1, lam2, gram=gram), eig=eig)
        key = (round(res.max_std_imbalance, 12), -lam2)
        if best_key is None or key < best_key:
            best_key, best = key, res
    return (best.lam_rkhs, best.lam_var), best


def arm_weights(
    points,
    A,
    lam: tuple[float, float] | None = None,
    grid: Sequence[tuple[float, float]] = DEFAULT_GRID,
    gram: GramMatrix | None = None,
) -> tuple[np.ndarray, dict[int, BalancingWeights]]:
    """Solve both arms and merge: w_i is the weight for patient i's own arm."""
    points = np.atleast_2d(np.asarray(points, float))
    A = np.asarray(A)
    gram = gram_matrix(points) if gram is None else gram
    w = np.zeros(len(A))
    reports = {}
    for a in (1, -1):
        arm = A == a
        if not arm.any():
            raise ValueError(f"arm {a} is empty")
        if lam is None:
            _, res = tune_balance_params(points, arm, grid, gram=gram)
        else:
            res = solve_weights(BalanceProblem(points, arm, lam[0], lam[1], gram=gram))
        w[arm] = res.weights[arm]
        reports[a] = res
    return w, reports
