import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from regime_kit.kernels import (
    KernelDomainError,
    KernelSpec,
    cross_gram,
    gram_matrix,
    silverman_bandwidth,
    smoothing_matrix,
    smoothing_weight,
    sobolev_kernel,
)


def _bernoulli_kernel(s, u):
    """Independent oracle from sympy's Bernoulli polynomials."""
    x = sp.Symbol("x")

    def k(r, v):
        return sp.bernoulli(r, x).subs(x, sp.Rational(v)) / sp.factorial(r)

    return float(1 + k(1, s) * k(1, u) + k(2, s) * k(2, u) - k(4, abs(sp.Rational(s) - sp.Rational(u))))


def test_midpoint_value():
    assert sobolev_kernel([0.5], [0.5]) == pytest.approx(1 + 1 / 576 + 1 / 720, abs=1e-12)
    assert sobolev_kernel([0.5], [0.5]) == pytest.approx(1.0031250, abs=1e-7)


@pytest.mark.parametrize("s,u", [("0", "0"), ("1/3", "3/4"), ("1/10", "9/10"), ("1", "0"), ("2/7", "2/7")])
def test_matches_bernoulli_oracle(s, u):
    got = sobolev_kernel([float(sp.Rational(s))], [float(sp.Rational(u))])
    assert got == pytest.approx(_bernoulli_kernel(s, u), abs=1e-13)


def test_tensor_product(rng):
    a, b, c, d = rng.uniform(size=4)
    assert sobolev_kernel([a, b], [c, d]) == pytest.approx(sobolev_kernel([a], [c]) * sobolev_kernel([b], [d]), rel=1e-13)


def test_gram_factorizes_over_coordinates(rng):
    P = rng.uniform(size=(20, 3))
    K = gram_matrix(P).K
    prod = np.ones((20, 20))
    for j in range(3):
        prod *= gram_matrix(P[:, [j]]).K
    assert np.allclose(K, prod, rtol=1e-13)


def test_symmetry_and_single_point(rng):
    x, y = rng.uniform(size=(2, 4))
    assert sobolev_kernel(x, y) == sobolev_kernel(y, x)
    g = gram_matrix(x[None, :])
    assert g.K.shape == (1, 1) and g.K[0, 0] == pytest.approx(sobolev_kernel(x, x))
    K = gram_matrix(rng.uniform(size=(50, 2))).K
    assert np.array_equal(K, K.T)


def test_domain_errors():
    with pytest.raises(KernelDomainError):
        sobolev_kernel([1.1], [0.5])
    assert sobolev_kernel([1 + 1e-12], [0.5]) == sobolev_kernel([1.0], [0.5])
    with pytest.raises(NotImplementedError):
        KernelSpec(dim=2, order=3)


def test_gram_psd_on_random_sets():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, p = rng.integers(2, 60), rng.integers(1, 5)
        K = gram_matrix(rng.uniform(size=(n, p))).K
        d = np.linalg.eigvalsh(K)
        assert d[0] >= -1e-8 * d[-1]


@given(arrays(np.float64, (8, 2), elements=st.floats(0, 1)))
def test_gram_psd_property(P):
    d = np.linalg.eigvalsh(gram_matrix(P).K)
    assert d[0] >= -1e-8 * d[-1]


def test_constant_function_reproduction():
    grid = np.linspace(0, 1, 15)[:, None]
    g = gram_matrix(grid)
    alpha = np.linalg.solve(g.jittered(), np.ones(15))
    assert alpha @ np.ones(15) <= 1 + 1e-3
    new = np.linspace(0.03, 0.97, 11)[:, None]
    assert np.allclose(cross_gram(new, grid) @ alpha, 1.0, atol=1e-6)


def test_smoothing_weight_examples(rng):
    assert smoothing_weight([0.3], [0.3], [1.0]) == pytest.approx(1 / np.sqrt(2 * np.pi), abs=1e-12)
    u, v = rng.normal(size=(2, 2))
    c = np.array([0.4, 0.9])
    assert smoothing_weight(u, v, c) == pytest.approx(smoothing_weight(v, u, c))
    assert smoothing_weight(u, u, 2 * c) == pytest.approx(smoothing_weight(u, u, c) / 4)
    with pytest.raises(ValueError):
        smoothing_weight(u, v, [0.0, 1.0])


def test_smoothing_matrix_orientation(rng):
    U, U0 = rng.normal(size=(7, 2)), rng.normal(size=(3, 2))
    M = smoothing_matrix(U, U0, [0.5, 0.7])
    assert M.shape == (3, 7)
    assert M[2, 4] == pytest.approx(smoothing_weight(U[4], U0[2], [0.5, 0.7]))


def test_silverman_rule(rng):
    U = rng.normal(size=(500, 2))
    c = silverman_bandwidth(U)
    assert np.allclose(c, 1.06 * U.std(axis=0, ddof=1) * 500 ** -0.2)
    assert silverman_bandwidth(np.ones((5, 1)))[0] == 1.0
