"""Simulation scenarios and oracle evaluation of fitted regimes.

SIM1 is the single-stage design, SIM2 the two-stage design with nonignorable
missingness of X_{2,2}, and SIM3 adds ``alpha_ax * A1 * X11`` to the stage-2
nonresponse logit of SIM2 (so ``alpha_ax = 0`` reproduces SIM2 draw for draw).

All random draws happen up front in a fixed order, which keeps cohorts
byte-identical for a given seed and lets counterfactual outcomes share noise
across treatment paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import CohortDataset

SCENARIOS = ("SIM1", "SIM2", "SIM3")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    n: int
    seed: int = 0
    alpha_ax: float | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.scenario == "SIM3" and self.alpha_ax is None:
            raise ValueError("SIM3 requires alpha_ax")

    @property
    def T(self) -> int:
        return 1 if self.scenario == "SIM1" else 2


@dataclass
class _Draws:
    x11: np.ndarray
    x12: np.ndarray
    x21: np.ndarray
    x22: np.ndarray
    u_r1: np.ndarray
    u_a1: np.ndarray
    e1: np.ndarray
    u_r2: np.ndarray
    u_a2: np.ndarray
    e2: np.ndarray


def _draw(spec: ScenarioSpec) -> _Draws:
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    if spec.scenario == "SIM1":
        x11 = rng.standard_normal(n)
        x21 = np.zeros(n)
    else:
        z = rng.multivariate_normal([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], size=n, method="cholesky")
        x11, x21 = z[:, 0].copy(), z[:, 1].copy()
    x12 = rng.uniform(0.0, 2.0, n)
    u_r1 = rng.uniform(size=n)
    u_a1 = rng.uniform(size=n)
    e1 = rng.standard_normal(n)
    x22 = rng.uniform(0.0, 2.0, n)
    u_r2 = rng.uniform(size=n)
    u_a2 = rng.uniform(size=n)
    e2 = rng.standard_normal(n)
    return _Draws(x11, x12, x21, x22, u_r1, u_a1, e1, u_r2, u_a2, e2)


# -- structural equations --------------------------------------------------------


def _y1(scenario, a1, d: _Draws):
    blip = 1.0 - d.x12 if scenario == "SIM1" else 1.5 - d.x12
    return -2.0 + 2.0 * a1 * blip + 2.0 * d.x11**2 + d.x12 + d.e1


def _y2(a1, a2, d: _Draws):
    return -3.0 + a2 * (1.0 - a1 + d.x22) + 2.0 * d.x12 - 2.0 * d.x21**2 + d.e2


def _r1(d: _Draws):
    return (d.u_r1 < 1.0 / (1.0 + np.exp(-3.0 + d.x12))).astype(int)


def _a1(r1, d: _Draws):
    p = expit(-1.0 + 2.0 * d.x11**2 - d.x12**2 - r1)
    return np.where(d.u_a1 < p, 1, -1)


def nonresponse_logit2(spec: ScenarioSpec, a1, y1, d: _Draws):
    """eta such that P(R2 = 1 | ...) = 1 / (1 + exp(eta))."""
    eta = -1.0 + a1 - y1 + 2.0 * d.x21**2 - d.x22
    if spec.scenario == "SIM3":
        eta = eta + spec.alpha_ax * a1 * d.x11
    return eta


@dataclass
class Truth:
    """Hidden quantities retained for oracle evaluation."""

    X_full: list[np.ndarray]
    draws: _Draws
    opt_actions: np.ndarray
    pseudo_outcome: np.ndarray | None = None
    pi_pseudo: np.ndarray | None = None


def generate_scenario(spec: ScenarioSpec) -> tuple[CohortDataset, Truth]:
    d = _draw(spec)
    r1 = _r1(d)
    a1 = _a1(r1, d)
    y1 = _y1(spec.scenario, a1, d)
    x1 = np.column_stack([d.x11, d.x12])
    x1_obs = x1.copy()
    x1_obs[r1 == 0, 1] = np.nan
    d1_opt = np.where(1.0 - d.x12 >= 0, 1, -1)
    if spec.scenario == "SIM1":
        cohort = CohortDataset(X=[x1_obs], A=a1[:, None], Y=y1[:, None], combiner="last")
        return cohort, Truth(X_full=[x1], draws=d, opt_actions=d1_opt[:, None])

    eta2 = nonresponse_logit2(spec, a1, y1, d)
    r2 = (d.u_r2 < 1.0 / (1.0 + np.exp(eta2))).astype(int)
    a2 = np.where(d.u_a2 < expit(2.0 - d.x21**2 + d.x22 - r2), 1, -1)
    y2 = _y2(a1, a2, d)
    x2 = np.column_stack([d.x21, d.x22])
    x2_obs = x2.copy()
    x2_obs[r2 == 0, 1] = np.nan
    cohort = CohortDataset(
        X=[x1_obs, x2_obs], A=np.column_stack([a1, a2]), Y=np.column_stack([y1, y2]), combiner="sum"
    )
    d2_opt = np.where(1.0 - a1 + d.x22 >= 0, 1, -1)
    ypse = -2.0 - a1 + d.x22 + 2.0 * d.x12 - 2.0 * d.x21**2 + y1
    return cohort, Truth(
        X_full=[x1, x2],
        draws=d,
        opt_actions=np.column_stack([d1_opt, d2_opt]),
        pseudo_outcome=ypse,
        pi_pseudo=1.0 / (1.0 + np.exp(eta2)),
    )


def true_optimal_action(scenario: str, stage: int, h: dict) -> int:
    """Optimal treatment given history values keyed by column name."""
    if stage == 1:
        return 1 if 1.0 - h["X1_2"] >= 0 else -1
    if scenario == "SIM1":
        raise ValueError("SIM1 has a single stage")
    return 1 if 1.0 - h["A1"] + h["X2_2"] >= 0 else -1


# -- evaluation ----------------------------------------------------------------


def _names(stage):
    if stage == 1:
        return ["X1_1", "X1_2"]
    return ["X1_1", "X1_2", "A1", "Y1", "X2_1", "X2_2"]


def _apply(regime, scenario: str, d: _Draws) -> dict:
    h1 = np.column_stack([d.x11, d.x12])
    a1 = np.asarray(regime.decide(1, h1, _names(1)))
    y1 = _y1(scenario, a1, d)
    opt1 = np.where(1.0 - d.x12 >= 0, 1, -1)
    out = {"opt_pct_stage1": float(np.mean(a1 == opt1))}
    if scenario == "SIM1":
        out.update(value=float(np.mean(y1)), opt_pct=out["opt_pct_stage1"])
        return out
    h2 = np.column_stack([d.x11, d.x12, a1, y1, d.x21, d.x22])
    a2 = np.asarray(regime.decide(2, h2, _names(2)))
    y2 = _y2(a1, a2, d)
    opt2 = np.where(1.0 - a1 + d.x22 >= 0, 1, -1)
    out["opt_pct_stage2"] = float(np.mean(a2 == opt2))
    out["opt_pct"] = float(np.mean((a1 == opt1) & (a2 == opt2)))
    out["value"] = float(np.mean(y1 + y2))
    return out


def evaluate_regime(regime, spec: ScenarioSpec, eval_n: int = 100_000, seed: int = 2_000_003, train=None) -> dict:
    """Oracle value and Opt% of ``regime`` on a fresh counterfactual cohort.

    ``regime`` is anything with ``decide(stage, H, names)``.  When ``train`` is
    a ``(cohort, truth, fitted)`` triple, ``value_train`` is the mean outcome
    the regime would have produced on the training patients' own draws, and
    for two-stage scenarios the stage-1 pseudo-outcome MSE on S_2 is added.
    """
    out = _apply(regime, spec.scenario, _draw(ScenarioSpec(spec.scenario, eval_n, seed, spec.alpha_ax)))
    out["value_train"] = _apply(regime, spec.scenario, train[1].draws)["value"] if train is not None else None
    out["pseudo_mse"] = pseudo_outcome_mse(*train) if train is not None and spec.scenario != "SIM1" else None
    return out


def pseudo_outcome_mse(cohort, truth: Truth, fitted) -> float | None:
    """MSE of the fitted stage-1 pseudo-outcome against the closed form, over S_2."""
    est = getattr(fitted, "pseudo_outcomes", {}).get(1)
    if est is None or truth.pseudo_outcome is None:
        return None
    rows, values = est
    return float(np.mean((values - truth.pseudo_outcome[rows]) ** 2))


def oracle_value(spec: ScenarioSpec, rule1, rule2=None, eval_n: int = 100_000, seed: int = 2_000_003) -> float:
    """Value of explicit callables rule1(h1) / rule2(h2) by direct counterfactual simulation."""

    class _R:
        def decide(self, stage, H, names):
            return (rule1 if stage == 1 else rule2)(H)

    return evaluate_regime(_R(), spec, eval_n, seed)["value"]
