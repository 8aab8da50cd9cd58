"""Single-stage and backward-induction regime fitting with balancing weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .balancing import DEFAULT_GRID, arm_weights
from .data import CohortDataset, DataError, StageSample, build_stage_sample
from .kernels import gram_matrix
from .missingness import estimate_gamma_gmm
from .qreg import build_pseudo_outcome, fit_arm_models
from .rules import DecisionRule, fit_rule
from .value import build_omega, estimate_value

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    """Per-stage settings; dict-valued fields are keyed by stage number."""

    rule_features: dict[int, list[str]]
    balance_grid: Sequence[tuple[float, float]] = DEFAULT_GRID
    balance_lam: dict[int, tuple[float, float]] = field(default_factory=dict)
    spline_lam: float | str = "auto"
    rule_lam: float | str = "auto"
    u_columns: dict[int, list[str]] = field(default_factory=dict)
    z_columns: dict[int, list[str]] = field(default_factory=dict)
    gamma_family: str = "linear"
    gamma0: float = 1.0
    missing_weighting: str = "EE"
    cv_seed: int = 0

    def features(self, t: int) -> list[str]:
        if t not in self.rule_features:
            raise KeyError(f"no rule features configured for stage {t}")
        return list(self.rule_features[t])


@dataclass
class FittedRegime:
    rules: dict[int, DecisionRule]
    method: str = ""
    diagnostics: dict[int, dict] = field(default_factory=dict)
    pseudo_outcomes: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.rules)

    def decide(self, stage: int, H, names) -> np.ndarray:
        return self.rules[stage].decide(H, names)

    @property
    def flagged(self) -> bool:
        return any(d.get("flags") for d in self.diagnostics.values())


def _stage_fit(S: StageSample, y, miss_weight, case_weight, flavor, config: FitConfig, diag: dict):
    """Steps shared by every stage: weights, arm splines, contrasts, rule."""
    if S.n == 0:
        raise DataError(f"stage-{S.t} sample is empty")
    P = S.unit
    gram = gram_matrix(P)
    w, reports = arm_weights(P, S.A, config.balance_lam.get(S.t), config.balance_grid, gram=gram)
    diag["balance"] = {a: (rep.lam_rkhs, rep.lam_var, rep.max_std_imbalance, rep.converged) for a, rep in reports.items()}
    if not all(rep.converged for rep in reports.values()):
        diag["flags"].append("balancing solve did not converge")
    obs = miss_weight > 0
    models = None
    q_pos = q_neg = None
    if flavor == "ACFBL":
        models = fit_arm_models(P[obs], S.A[obs], y[obs], case_weight[obs], config.spline_lam)
        q_pos, q_neg = models[1].predict(P), models[-1].predict(P)
        diag["spline_lam"] = {a: m.lam for a, m in models.items()}
    omega = build_omega(S.A, w, y, q_pos, q_neg, miss_weight)
    X = S.columns(config.features(S.t))
    rule = fit_rule(omega, X, config.features(S.t), config.rule_lam, seed=config.cv_seed)
    diag["rule_lam"] = rule.lam
    diag["value_estimate"] = estimate_value(omega, rule.decide_features(X))
    diag["flags"].extend(rule.notes)
    return rule, models, P


def fit_single_stage(cohort: CohortDataset, flavor: str = "ACFBL", config: FitConfig | None = None,
                     stage: int = 1, outcome=None) -> FittedRegime:
    """CFBL or ACFBL on the complete-case sample of one stage.

    ``outcome`` (one value per cohort row) overrides the response; by default
    the final outcome is used, which requires ``stage`` to be the last stage.
    """
    flavor = flavor.upper()
    if flavor not in ("CFBL", "ACFBL"):
        raise ValueError(f"unknown flavor {flavor!r}")
    config = config or FitConfig(rule_features={stage: cohort.history_names(stage)})
    S = build_stage_sample(cohort, stage)
    if S.n == 0:
        raise DataError("complete-case sample is empty")
    if outcome is not None:
        y = np.asarray(outcome, float)[S.rows]
    elif stage == cohort.T:
        y = S.y
    else:
        raise ValueError("an outcome vector is needed when fitting a non-final stage alone")
    ones = np.ones(S.n)
    diag = {"n": S.n, "flags": []}
    rule, _, _ = _stage_fit(S, y, ones, ones, flavor, config, diag)
    return FittedRegime(rules={stage: rule}, method=flavor, diagnostics={stage: diag})


def _align(rows_from, rows_to):
    """Positions of ``rows_to`` inside the sorted index array ``rows_from``."""
    pos = np.searchsorted(rows_from, rows_to)
    if np.any(pos >= len(rows_from)) or np.any(rows_from[np.minimum(pos, len(rows_from) - 1)] != rows_to):
        raise DataError("later-stage sample is not nested in the earlier one")
    return pos


def fit_multistage(cohort: CohortDataset, config: FitConfig, flavor: str = "ACFBL") -> FittedRegime:
    """Backward induction t = T..1 with nonignorable-missingness weighting.

    With ``config.missing_weighting == "NONE"`` pseudo-outcome rows are simply
    dropped when missing (complete-case on the pseudo-outcome).
    """
    if cohort.T < 2:
        raise ValueError("multi-stage fitting needs at least two stages")
    mode = config.missing_weighting.upper()
    if mode not in ("EE", "NONE"):
        raise ValueError(f"unknown missing-data weighting {mode!r}")
    regime = FittedRegime(rules={}, method=f"{mode}-{flavor}")
    nxt = None  # (rows, pseudo values on S_{t+1})
    for t in range(cohort.T, 0, -1):
        S = build_stage_sample(cohort, t)
        if S.n == 0:
            raise DataError(f"stage-{t} sample is empty")
        diag = {"n": S.n, "flags": [], "coverage": float(S.r.mean())}
        obs = S.r == 1
        y = S.y.copy()
        if nxt is not None:
            y[:] = np.nan
            pos = _align(S.rows, nxt[0])
            if not np.array_equal(np.flatnonzero(obs), np.sort(pos)):
                raise DataError(f"stage-{t} response indicator does not match the stage-{t + 1} sample")
            y[pos] = nxt[1]
        pi = np.ones(S.n)
        if t < cohort.T and mode == "EE" and not obs.all():
            U = S.columns(config.u_columns.get(t, []))
            Z = S.columns(config.z_columns.get(t, []))
            mm = estimate_gamma_gmm(U, Z, y, S.r, gamma0=config.gamma0, family=config.gamma_family,
                                    u_columns=config.u_columns.get(t, []), z_columns=config.z_columns.get(t, []))
            pi_obs, n_floor = mm.propensity(U[obs], y[obs])
            pi[obs] = pi_obs
            diag["gamma"] = mm.gamma.tolist()
            diag["gmm"] = {"objective": mm.report.objective, "j": mm.report.j_statistic,
                           "converged": mm.report.converged, "floored": n_floor}
            if not mm.report.converged:
                diag["flags"].append("GMM did not converge; best point used")
        miss_weight = np.where(obs, 1.0 / pi, 0.0)
        rule, models, P = _stage_fit(S, y, miss_weight, miss_weight, flavor, config, diag)
        regime.rules[t] = rule
        regime.diagnostics[t] = diag
        if t > 1:
            if models is None:
                raise ValueError("pseudo-outcomes need arm models; use the ACFBL flavor")
            d = rule.decide_features(S.columns(config.features(t)))
            vals = build_pseudo_outcome(models, d, P)
            regime.pseudo_outcomes[t - 1] = (S.rows.copy(), vals)
            nxt = (S.rows, vals)
    regime.rules = dict(sorted(regime.rules.items()))
    return regime
