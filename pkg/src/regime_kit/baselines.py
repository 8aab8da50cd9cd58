"""Comparator estimators: linear Q-learning and IPW outcome-weighted learning."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .data import CohortDataset, DataError, build_stage_sample
from .dtr import FitConfig, FittedRegime, _align
from .missingness import estimate_gamma_gmm
from .rules import fit_rule, sign_decision
from .value import OmegaTable

log = logging.getLogger(__name__)

_FACTOR = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\^(\d+))?$")


@dataclass(frozen=True)
class Formula:
    """Sum of monomials in named history columns, e.g. ``1 + X1_1^2 + A1*X2_2``."""

    terms: tuple[tuple[tuple[str, int], ...], ...]
    text: str = ""

    @classmethod
    def parse(cls, text: str) -> "Formula":
        terms = []
        for raw in text.split("+"):
            raw = raw.strip()
            if not raw:
                raise ValueError(f"empty term in formula {text!r}")
            if raw == "1":
                terms.append(())
                continue
            factors = []
            for f in raw.split("*"):
                m = _FACTOR.match(f.strip())
                if not m:
                    raise ValueError(f"cannot parse factor {f!r} in formula {text!r}")
                factors.append((m.group(1), int(m.group(2) or 1)))
            terms.append(tuple(factors))
        return cls(tuple(terms), text)

    def columns(self) -> set[str]:
        return {nm for t in self.terms for nm, _ in t}

    def design(self, H, names: Sequence[str]) -> np.ndarray:
        H = np.atleast_2d(np.asarray(H, float))
        names = list(names)
        out = np.ones((H.shape[0], len(self.terms)))
        for j, term in enumerate(self.terms):
            for nm, pw in term:
                if nm not in names:
                    raise KeyError(f"formula column {nm!r} not in history")
                out[:, j] *= H[:, names.index(nm)] ** pw
        return out


@dataclass(frozen=True)
class QSpec:
    main: Formula
    blip: Formula

    @classmethod
    def parse(cls, main: str, blip: str) -> "QSpec":
        return cls(Formula.parse(main), Formula.parse(blip))


BUILTIN_Q_MODELS = {
    ("SIM1", "CORRECT"): {1: ("1 + X1_1^2 + X1_2", "1 + X1_2")},
    ("SIM1", "INCORRECT"): {1: ("1 + X1_1", "1 + X1_2")},
    ("SIM2", "CORRECT"): {
        2: ("1 + Y1 + X1_2 + X2_1^2", "1 + A1 + X2_2"),
        1: ("1 + X1_1^2 + X1_2", "1 + X1_2"),
    },
    ("SIM2", "INCORRECT"): {
        2: ("1 + X2_1", "1 + A1 + X2_2"),
        1: ("1 + X1_1", "1 + X1_2"),
    },
}
BUILTIN_Q_MODELS[("SIM3", "CORRECT")] = BUILTIN_Q_MODELS[("SIM2", "CORRECT")]
BUILTIN_Q_MODELS[("SIM3", "INCORRECT")] = BUILTIN_Q_MODELS[("SIM2", "INCORRECT")]


def builtin_q_specs(scenario: str, which: str) -> dict[int, QSpec]:
    key = (scenario.upper(), which.upper())
    if key not in BUILTIN_Q_MODELS:
        raise KeyError(f"no built-in Q-model for {key}")
    return {t: QSpec.parse(*f) for t, f in BUILTIN_Q_MODELS[key].items()}


@dataclass
class BlipRule:
    """Decision sgn(blip(h)' psi) for a fitted linear Q-model."""

    blip: Formula
    psi: np.ndarray
    notes: list[str] = field(default_factory=list)

    def decide(self, H, names) -> np.ndarray:
        return sign_decision(self.blip.design(H, names) @ self.psi)


@dataclass
class LinearQFit:
    beta: np.ndarray
    psi: np.ndarray
    rank_deficient: bool


def fit_linear_q(spec: QSpec, H, names, A, y, weights=None) -> LinearQFit:
    """(Weighted) least squares of y on [main(h), a * blip(h)]; least-norm if rank deficient."""
    M = spec.main.design(H, names)
    Bm = spec.blip.design(H, names) * np.asarray(A, float)[:, None]
    X = np.column_stack([M, Bm])
    w = np.ones(len(y)) if weights is None else np.asarray(weights, float)
    sw = np.sqrt(w)
    coef, _, rank, _ = np.linalg.lstsq(X * sw[:, None], np.asarray(y, float) * sw, rcond=None)
    return LinearQFit(coef[: M.shape[1]], coef[M.shape[1]:], rank < X.shape[1])


def fit_parametric_q_learning(cohort: CohortDataset, specs: dict[int, QSpec], missing_weighting: str = "NONE",
                              config: FitConfig | None = None) -> FittedRegime:
    """Backward linear Q-learning; ``EE`` weights pseudo-outcome rows by 1/pi_hat."""
    mode = missing_weighting.upper()
    if mode not in ("EE", "NONE"):
        raise ValueError(f"unknown missing-data weighting {mode!r}")
    if set(specs) != set(range(1, cohort.T + 1)):
        raise ValueError("need one Q-model per stage")
    config = config or FitConfig(rule_features={})
    regime = FittedRegime(rules={}, method=f"{mode}-QL")
    nxt = None
    for t in range(cohort.T, 0, -1):
        S = build_stage_sample(cohort, t)
        if S.n == 0:
            raise DataError(f"stage-{t} sample is empty")
        diag = {"n": S.n, "flags": []}
        obs = S.r == 1
        y = S.y.copy()
        if nxt is not None:
            y[:] = np.nan
            y[_align(S.rows, nxt[0])] = nxt[1]
        w = obs.astype(float)
        if t < cohort.T and mode == "EE" and not obs.all():
            U = S.columns(config.u_columns.get(t, []))
            Z = S.columns(config.z_columns.get(t, []))
            mm = estimate_gamma_gmm(U, Z, y, S.r, gamma0=config.gamma0, family=config.gamma_family)
            pi, n_floor = mm.propensity(U[obs], y[obs])
            w[obs] = 1.0 / pi
            diag["gamma"] = mm.gamma.tolist()
            diag["gmm"] = {"objective": mm.report.objective, "converged": mm.report.converged, "floored": n_floor}
            if not mm.report.converged:
                diag["flags"].append("GMM did not converge; best point used")
        fit = fit_linear_q(specs[t], S.H[obs], S.names, S.A[obs], y[obs], w[obs])
        if fit.rank_deficient:
            diag["flags"].append("rank-deficient design; least-norm solution")
        diag["beta"], diag["psi"] = fit.beta.tolist(), fit.psi.tolist()
        regime.rules[t] = BlipRule(specs[t].blip, fit.psi)
        regime.diagnostics[t] = diag
        if t > 1:
            main = specs[t].main.design(S.H, S.names) @ fit.beta
            blip = specs[t].blip.design(S.H, S.names) @ fit.psi
            vals = main + np.abs(blip)
            regime.pseudo_outcomes[t - 1] = (S.rows.copy(), vals)
            nxt = (S.rows, vals)
    regime.rules = dict(sorted(regime.rules.items()))
    return regime


def fit_logistic(X, a, ridge=1e-8, max_iter=100, tol=1e-10) -> np.ndarray:
    """P(a = +1 | x) logistic regression by Newton-Raphson."""
    X = np.atleast_2d(np.asarray(X, float))
    yb = (np.asarray(a) == 1).astype(float)
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        p = expit(X @ beta)
        g = X.T @ (p - yb) + ridge * beta
        Hm = (X.T * (p * (1 - p))) @ X + ridge * np.eye(X.shape[1])
        step = np.linalg.lstsq(Hm, g, rcond=None)[0]
        beta -= step
        if np.max(np.abs(step)) < tol:
            break
    return beta


def fit_owl_ipw(cohort: CohortDataset, features: Sequence[str], propensity: str | None = None,
                known_propensity=None, stage: int = 1, rule_lam="auto", clip=(0.01, 0.99),
                outcome=None, cv_seed: int = 0) -> FittedRegime:
    """Outcome-weighted learning with Omega(a) = I(A=a) y / P_hat(A=a | h).

    ``propensity`` is a formula for the logistic model of P(A=+1 | h);
    ``known_propensity`` (scalar or per-row) bypasses estimation.
    """
    S = build_stage_sample(cohort, stage)
    if S.n == 0:
        raise DataError("complete-case sample is empty")
    if outcome is not None:
        y = np.asarray(outcome, float)[S.rows]
    elif stage == cohort.T:
        y = S.y
    else:
        raise ValueError("an outcome vector is needed when fitting a non-final stage alone")
    diag = {"n": S.n, "flags": []}
    if known_propensity is not None:
        p = np.broadcast_to(np.asarray(known_propensity, float), (S.n,)).copy()
    else:
        form = Formula.parse(propensity or "1 + " + " + ".join(S.names))
        X = form.design(S.H, S.names)
        beta = fit_logistic(X, S.A)
        p = expit(X @ beta)
        diag["propensity_coef"] = beta.tolist()
    lo, hi = clip
    n_clip = int(np.sum((p < lo) | (p > hi)))
    p = np.clip(p, lo, hi)
    diag["clipped"] = n_clip
    p_own = np.where(S.A == 1, p, 1.0 - p)
    w = 1.0 / p_own
    diag["weights"] = w
    pos = np.where(S.A == 1, w * y, 0.0)
    neg = np.where(S.A == -1, w * y, 0.0)
    omega = OmegaTable(pos, neg, np.ones(S.n), "IPW")
    rule = fit_rule(omega, S.columns(features), features, rule_lam, seed=cv_seed)
    diag["rule_lam"] = rule.lam
    return FittedRegime(rules={stage: rule}, method="OWL-IPW", diagnostics={stage: diag})
