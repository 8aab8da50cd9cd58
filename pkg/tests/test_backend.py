import numpy as np
import pytest

from regime_kit import _backend, _core_py

compiled = pytest.importorskip("regime_kit._core")


def test_selected_backend_reported():
    assert _backend.BACKEND in ("cython", "python")


def test_gram_equivalence(rng):
    X, Y = rng.uniform(size=(40, 3)), rng.uniform(size=(25, 3))
    assert np.allclose(compiled.sobolev_gram(X, Y), _core_py.sobolev_gram(X, Y), rtol=1e-13, atol=1e-15)


def test_smoother_equivalence(rng):
    U, V = rng.normal(size=(30, 2)), rng.normal(size=(20, 2))
    c = np.array([0.5, 1.3])
    assert np.allclose(compiled.gaussian_smoother(U, V, c), _core_py.gaussian_smoother(U, V, c), rtol=1e-13)


def test_secular_root_equivalence_and_dense_oracle(rng):
    for _ in range(20):
        k = int(rng.integers(2, 30))
        v = rng.normal(size=k)
        delta = rng.uniform(0.01, 5, size=k)
        rho = rng.uniform(0.1, 2)
        a = compiled.secular_top_root(v * v, delta, rho)
        b = _core_py.secular_top_root(v * v, delta, rho)
        dense = np.linalg.eigvalsh(rho * np.outer(v, v) - np.diag(delta))[-1]
        assert a == pytest.approx(b, rel=1e-12, abs=1e-14)
        assert a == pytest.approx(dense, rel=1e-9, abs=1e-12)


def test_surrogate_equivalence(rng):
    n = 50
    g, op, on, wt = rng.normal(size=n) * 5, rng.normal(size=n), rng.normal(size=n), rng.uniform(size=n)
    op[0] = 0.0
    la, ga = compiled.surrogate_terms(g, op, on, wt)
    lb, gb = _core_py.surrogate_terms(g, op, on, wt)
    assert np.allclose(la, lb, rtol=1e-13) and np.allclose(ga, gb, rtol=1e-13)
