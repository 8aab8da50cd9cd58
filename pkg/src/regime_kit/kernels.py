"""Reproducing kernels on the unit cube and local smoothing kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend

DOMAIN_TOL = 1e-9
PSD_RTOL = 1e-8


class KernelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Sobolev tensor-product RKHS of order ``order`` on [0, 1]^dim.

    Only order 2 has a closed-form kernel here; other orders are rejected.
    """

    dim: int
    order: int = 2

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.order != 2:
            raise NotImplementedError("only the second-order Sobolev kernel is available")


def _check_unit(P: np.ndarray) -> np.ndarray:
    if P.size and (P.min() < -DOMAIN_TOL or P.max() > 1 + DOMAIN_TOL):
        raise KernelDomainError("kernel inputs must lie in [0, 1]")
    return np.clip(P, 0.0, 1.0)


def sobolev_kernel(x, y, spec: KernelSpec | None = None) -> float:
    """K(x, y) = prod_j [1 + k1(x_j)k1(y_j) + k2(x_j)k2(y_j) - k4(|x_j - y_j|)]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if spec is not None and (x.size != spec.dim or y.size != spec.dim):
        raise ValueError(f"expected points of dimension {spec.dim}")
    x = _check_unit(x)
    y = _check_unit(y)
    return float(_backend.sobolev_gram(x[None, :], y[None, :])[0, 0])


def cross_gram(X, Y, spec: KernelSpec | None = None) -> np.ndarray:
    X = _check_unit(np.atleast_2d(np.asarray(X, dtype=float)))
    Y = _check_unit(np.atleast_2d(np.asarray(Y, dtype=float)))
    if X.shape[1] != Y.shape[1]:
        raise ValueError("point sets differ in dimension")
    return _backend.sobolev_gram(X, Y)


@dataclass(frozen=True)
class GramMatrix:
    K: np.ndarray
    points: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def jittered(self) -> np.ndarray:
        """K + 1e-10 * trace/n * I, the form every factorization works on."""
        jit = 1e-10 * np.trace(self.K) / self.n
        return self.K + jit * np.eye(self.n)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenpairs of the jittered matrix, eigenvalues clipped at the jitter level."""
        d, V = np.linalg.eigh(self.jittered())
        if d[0] < -PSD_RTOL * d[-1]:
            raise np.linalg.LinAlgError(f"Gram matrix is not PSD (min eigenvalue {d[0]:.3e})")
        floor = 1e-10 * np.trace(self.K) / self.n
        return np.maximum(d, floor), V


def gram_matrix(points, spec: KernelSpec | None = None) -> GramMatrix:
    P = _check_unit(np.atleast_2d(np.asarray(points, dtype=float)))
    if spec is not None and P.shape[1] != spec.dim:
        raise ValueError(f"expected points of dimension {spec.dim}")
    K = _backend.sobolev_gram(P, P)
    K = 0.5 * (K + K.T)
    return GramMatrix(K=K, points=P)


def smoothing_weight(u, u0, bandwidth) -> float:
    """prod_j phi((u_j - u0_j) / c_j) / c_j with phi the standard normal density."""
    c = np.atleast_1d(np.asarray(bandwidth, dtype=float))
    if np.any(c <= 0):
        raise ValueError("bandwidths must be positive")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    return float(_backend.gaussian_smoother(u[None, :], u0[None, :], c)[0, 0])


def smoothing_matrix(U, U0, bandwidth) -> np.ndarray:
    """Matrix of :func:`smoothing_weight` values, rows indexed by ``U0``."""
    c = np.atleast_1d(np.asarray(bandwidth, dtype=float))
    if np.any(c <= 0):
        raise ValueError("bandwidths must be positive")
    U = np.atleast_2d(np.asarray(U, dtype=float))
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    return _backend.gaussian_smoother(U0, U, c)


def silverman_bandwidth(U) -> np.ndarray:
    """1.06 * sd * m^(-1/5) per column; zero-spread columns fall back to 1."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    m = U.shape[0]
    sd = U.std(axis=0, ddof=1) if m > 1 else np.zeros(U.shape[1])
    c = 1.06 * sd * m ** (-0.2)
    return np.where(c > 0, c, 1.0)
