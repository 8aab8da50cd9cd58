"""Nonignorable missingness propensity for pseudo-outcomes.

The response model is ``P(r = 1 | u, y) = 1 / (1 + exp{eta(u) + Gamma(y; gamma)})``.
``eta`` is profiled out by kernel smoothing over the instrument-free
coordinates ``u``; ``gamma`` is estimated by two-step GMM using moment
functions of the nonresponse instruments ``z``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .kernels import silverman_bandwidth, smoothing_matrix

log = logging.getLogger(__name__)

PROPENSITY_FLOOR = 0.01
_EXP_CAP = 700.0


class GammaFamily:
    """Parametric tilt Gamma(y; gamma); larger values mean lower response."""

    def __init__(self, name: str = "linear"):
        if name not in ("linear", "power", "log"):
            raise ValueError(f"unknown Gamma family {name!r}")
        self.name = name
        self.dim = 2 if name == "power" else 1

    def __call__(self, gamma, y) -> np.ndarray:
        g = np.atleast_1d(np.asarray(gamma, float))
        y = np.asarray(y, float)
        if self.name == "linear":
            return g[0] * y
        if self.name == "power":
            return g[0] * y + g[1] * y * y
        if np.any(y <= 0):
            raise ValueError("log family needs positive outcomes")
        return g[0] * np.log(y)

    def __repr__(self):
        return f"GammaFamily({self.name!r})"


def _safe_exp(x):
    return np.exp(np.clip(x, -_EXP_CAP, _EXP_CAP))


@dataclass
class ProfileState:
    """Kernel pieces shared across gamma evaluations for one stage sample."""

    U: np.ndarray
    y: np.ndarray
    r: np.ndarray
    bandwidth: np.ndarray
    family: GammaFamily

    def __post_init__(self):
        self.U = np.asarray(self.U, float).reshape(len(self.r), -1)
        self.r = np.asarray(self.r).astype(int)
        self.y = np.where(self.r == 1, np.asarray(self.y, float), 0.0)
        if self.r.sum() == 0:
            raise ValueError("no observed pseudo-outcomes")

    def exp_eta(self, gamma, U0) -> tuple[np.ndarray, np.ndarray]:
        """exp(eta_hat) at the rows of ``U0`` and a flag for zero denominators."""
        Km = smoothing_matrix(self.U, np.asarray(U0, float).reshape(-1, self.U.shape[1]), self.bandwidth)
        return self._ratio(Km, gamma)

    def _ratio(self, Km, gamma):
        num = Km @ (1.0 - self.r)
        tilt = np.where(self.r == 1, _safe_exp(self.family(gamma, self.y)), 0.0)
        den = Km @ tilt
        zero = den <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
        return out, zero


def profile_eta(gamma, U, y, r, u0, bandwidth, family: GammaFamily | str = "linear") -> float:
    """exp{eta_hat_gamma(u0)}; a zero denominator returns 0 (propensity 1)."""
    fam = family if isinstance(family, GammaFamily) else GammaFamily(family)
    st = ProfileState(U, y, r, np.atleast_1d(np.asarray(bandwidth, float)), fam)
    val, _ = st.exp_eta(gamma, np.atleast_2d(np.asarray(u0, float)))
    return float(val[0])


def raw_propensity(exp_eta, tilt_values) -> np.ndarray:
    """1 / (1 + exp(eta) exp(Gamma)), without flooring."""
    return 1.0 / (1.0 + np.asarray(exp_eta) * _safe_exp(tilt_values))


@dataclass
class GMMReport:
    objective: float
    j_statistic: float
    converged: bool
    step1_gamma: np.ndarray
    n_moments: int
    notes: list[str] = field(default_factory=list)


@dataclass
class MissingnessModel:
    u_columns: list[str]
    z_columns: list[str]
    family: GammaFamily
    gamma: np.ndarray
    bandwidth: np.ndarray
    report: GMMReport
    state: ProfileState = field(repr=False)
    floor: float = PROPENSITY_FLOOR

    def propensity(self, U, y) -> tuple[np.ndarray, int]:
        """Floored propensities at (u, y) pairs and the number of floor events."""
        U = np.asarray(U, float).reshape(-1, self.state.U.shape[1])
        ee, _ = self.state.exp_eta(self.gamma, U)
        pi = raw_propensity(ee, self.family(self.gamma, y))
        floored = int(np.sum(pi < self.floor))
        return np.maximum(pi, self.floor), floored


def propensity_eval(model: MissingnessModel, u, y) -> float:
    pi, _ = model.propensity(np.atleast_2d(np.asarray(u, float)), np.atleast_1d(float(y)))
    return float(pi[0])


class _Moments:
    def __init__(self, state: ProfileState, L: np.ndarray):
        self.state = state
        self.L = L
        self.obs = state.r == 1
        # only observed rows carry a nonzero r / pi term, and only observed
        # columns enter the denominator
        Km = smoothing_matrix(state.U, state.U[self.obs], state.bandwidth)
        self.num = Km @ (1.0 - state.r)
        self.Kobs = np.ascontiguousarray(Km[:, self.obs])
        self.y_obs = state.y[self.obs]

    def contributions(self, gamma) -> np.ndarray:
        tilt = self.state.family(gamma, self.y_obs)
        den = self.Kobs @ _safe_exp(tilt)
        ee = np.where(den > 0, self.num / np.where(den > 0, den, 1.0), 0.0)
        inv = np.zeros(len(self.state.r))
        # r / pi = r (1 + exp(eta) exp(Gamma))
        inv[self.obs] = 1.0 + ee * _safe_exp(tilt)
        return self.L * (inv - 1.0)[:, None]

    def mean(self, gamma) -> np.ndarray:
        return self.contributions(gamma).mean(axis=0)


def instrument_matrix(Z) -> np.ndarray:
    """Default moment functions l(z) = (1, z)."""
    Z = np.asarray(Z, float)
    Z = Z.reshape(len(Z), -1)
    return np.column_stack([np.ones(len(Z)), Z])


def _gmm_minimize(fun, starts, tol=1e-8):
    best = None
    ok_any = False
    for s in starts:
        res = optimize.minimize(fun, s, method="Nelder-Mead",
                                options={"xatol": tol, "fatol": tol * 1e-4, "maxiter": 4000, "maxfev": 8000})
        ok_any |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pol = optimize.minimize(fun, best.x, method="BFGS", options={"gtol": tol})
    x, f = (pol.x, pol.fun) if np.isfinite(pol.fun) and pol.fun <= best.fun else (best.x, best.fun)
    return np.atleast_1d(x), float(f), ok_any


def estimate_gamma_gmm(
    U,
    Z,
    y,
    r,
    gamma0=None,
    family: GammaFamily | str = "linear",
    bandwidth=None,
    L=None,
    u_columns=(),
    z_columns=(),
) -> MissingnessModel:
    """Two-step GMM for gamma with identity then inverse-covariance weighting.

    ``L`` overrides the default instrument functions ``(1, z)``.
    """
    fam = family if isinstance(family, GammaFamily) else GammaFamily(family)
    r = np.asarray(r).astype(int)
    U = np.asarray(U, float).reshape(len(r), -1)
    L = instrument_matrix(Z) if L is None else np.asarray(L, float).reshape(len(r), -1)
    if L.shape[1] < fam.dim + 1:
        raise ValueError(f"under-identified: {L.shape[1]} moments for {fam.dim} parameter(s) need at least {fam.dim + 1}")
    c = silverman_bandwidth(U) if bandwidth is None else np.atleast_1d(np.asarray(bandwidth, float))
    if np.any(c <= 0):
        raise ValueError("bandwidths must be positive")
    state = ProfileState(U, y, r, c, fam)
    mom = _Moments(state, L)
    g0 = np.ones(fam.dim) if gamma0 is None else np.atleast_1d(np.asarray(gamma0, float))
    starts = [g0]
    for s in (np.zeros(fam.dim), -g0):
        if not any(np.array_equal(s, t) for t in starts):
            starts.append(s)
    notes = []

    def q_identity(g):
        m = mom.mean(g)
        return float(m @ m)

    g1, _, ok1 = _gmm_minimize(q_identity, starts)
    G = mom.contributions(g1)
    S = np.cov(G, rowvar=False, bias=True).reshape(L.shape[1], L.shape[1])
    try:
        W = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        W = np.linalg.pinv(S)
        notes.append("moment covariance singular; pseudo-inverse used")

    def q_opt(g):
        m = mom.mean(g)
        return float(m @ W @ m)

    starts2 = [g1] + [s for s in starts if not np.array_equal(s, g1)]
    g2, f2, ok2 = _gmm_minimize(q_opt, starts2)
    converged = ok1 and ok2
    if not converged:
        notes.append("simplex search did not report convergence")
    report = GMMReport(objective=f2, j_statistic=len(r) * f2, converged=converged, step1_gamma=g1,
                       n_moments=L.shape[1], notes=notes)
    return MissingnessModel(list(u_columns), list(z_columns), fam, g2, c, report, state)
