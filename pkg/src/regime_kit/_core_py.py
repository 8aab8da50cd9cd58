"""Pure numpy implementations of the numerical hot spots.

These mirror the compiled routines in ``_core.pyx`` one for one and are used
whenever the extension is not built (or ``REGIME_KIT_PURE=1`` is set).
"""

import math

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _k1(x):
    return x - 0.5


def _k2(x):
    k1 = x - 0.5
    return 0.5 * (k1 * k1 - 1.0 / 12.0)


def _k4(x):
    k1 = x - 0.5
    k1sq = k1 * k1
    return (k1sq * k1sq - 0.5 * k1sq + 7.0 / 240.0) / 24.0


def sobolev_gram(X, Y):
    """Second-order Sobolev tensor-product kernel between rows of X and Y."""
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    out = np.ones((X.shape[0], Y.shape[0]))
    for j in range(X.shape[1]):
        s = X[:, j][:, None]
        u = Y[:, j][None, :]
        out *= 1.0 + _k1(s) * _k1(u) + _k2(s) * _k2(u) - _k4(np.abs(s - u))
    return out


def gaussian_smoother(U, V, bandwidth):
    """Product Gaussian kernel prod_j phi((u_j - v_j) / c_j) / c_j."""
    U = np.ascontiguousarray(U, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    c = np.asarray(bandwidth, dtype=float)
    expo = np.zeros((U.shape[0], V.shape[0]))
    for j in range(U.shape[1]):
        d = (U[:, j][:, None] - V[:, j][None, :]) / c[j]
        expo -= 0.5 * d * d
    return np.exp(expo) / np.prod(c * _SQRT_2PI)


def secular_top_root(s, delta, rho, tol=1e-14, max_iter=200):
    """Largest eigenvalue of rho * v v' - diag(delta) given s = v**2.

    The largest root of 1 = rho * sum_k s_k / (mu + delta_k) is found by
    Newton's method on 1/psi(mu) - 1, which is concave and increasing to the
    right of the pole, so iterates started left of the root stay left of it.
    """
    s = np.asarray(s, dtype=float)
    delta = np.asarray(delta, dtype=float)
    lo = max(-delta.min(), float(np.max(rho * s - delta)))
    if not np.any(s > 0):
        return lo
    mu = lo
    for _ in range(max_iter):
        q = s / (mu + delta)
        psi = rho * q.sum()
        F = 1.0 / psi - 1.0
        if F >= 0.0 and mu == lo:
            return mu
        dF = rho * np.sum(q / (mu + delta)) / (psi * psi)
        step = -F / dF
        mu += step
        if abs(step) <= tol * max(1.0, abs(mu)):
            break
    return float(mu)


def surrogate_terms(score, omega_pos, omega_neg, row_weight):
    """Per-row logistic surrogate loss and its derivative in the score.

    loss_i = wt_i * (|O+| phi(sgn(O+) g) + |O-| phi(-sgn(O-) g)),
    phi(x) = log(1 + exp(-x)).
    """
    g = np.asarray(score, dtype=float)
    sp = np.where(omega_pos >= 0, 1.0, -1.0)
    sn = np.where(omega_neg >= 0, 1.0, -1.0)
    xp = sp * g
    xn = -sn * g
    loss = np.abs(omega_pos) * np.logaddexp(0.0, -xp) + np.abs(omega_neg) * np.logaddexp(0.0, -xn)
    # d/dg |O| phi(s g) = O * phi'(s g), phi'(x) = -expit(-x)
    dpos = -omega_pos * _expit(-xp)
    dneg = omega_neg * _expit(-xn)
    return row_weight * loss, row_weight * (dpos + dneg)


def _expit(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
