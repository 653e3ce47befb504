import numpy as np
import pytest

from ekreduce.background import twisted_structure
from ekreduce.operators import (
    almost_complex_hessian, anti_invariant_part, dJdu_form, error_tensor, invariant_part,
)
from ekreduce.sym_matrix import is_complex_structure, project_j, standard_j


def _field(n, seed):
    rng = np.random.default_rng(seed)
    d = 2 * n
    a = rng.normal(size=d)
    Q = rng.normal(size=(d, d))
    Q = Q + Q.T

    def grad(x):
        return np.cos(x @ a) * a + Q @ x

    def hess(x):
        return -np.sin(x @ a) * np.outer(a, a) + Q

    return grad, hess


def _fd_dJdu(J, grad, x, step=1e-4):
    """d(-J^T du) by central differences: the full 2-form coefficients."""
    alpha = lambda y: -J(y).T @ grad(y)
    d = x.size
    D = np.array([(alpha(x + step * e) - alpha(x - step * e)) / (2 * step) for e in np.eye(d)])
    return D - D.T


@pytest.mark.parametrize("n", [2, 3])
def test_twisted_structure_is_complex(n):
    J, dJ = twisted_structure(n, 0.3, 0)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-0.5, 0.5, size=(10, 2 * n)):
        assert is_complex_structure(J(x), tol=1e-12)
    assert np.allclose(J(np.zeros(2 * n)), standard_j(n))
    x = rng.uniform(-0.5, 0.5, size=2 * n)
    for a in range(2 * n):
        e = np.zeros(2 * n)
        e[a] = 1e-6
        assert np.allclose(dJ(x)[a], (J(x + e) - J(x - e)) / 2e-6, atol=1e-8)


def test_error_tensor_vanishes_for_constant_j(rng):
    n, d = 2, 4
    J = standard_j(n)
    dJ = np.zeros((d, d, d))
    Du = rng.normal(size=d)
    D2 = rng.normal(size=(d, d))
    D2 = D2 + D2.T
    assert np.array_equal(error_tensor(Du, J, dJ), np.zeros((d, d)))
    assert np.array_equal(almost_complex_hessian(D2, Du, J, dJ), project_j(D2, J))
    assert np.array_equal(anti_invariant_part(Du, J, dJ), np.zeros((d, d)))


def test_zero_gradient(rng):
    J, dJ = twisted_structure(2, 0.3, 1)
    x = rng.uniform(-0.4, 0.4, size=4)
    D2 = rng.normal(size=(4, 4))
    D2 = D2 + D2.T
    assert np.array_equal(almost_complex_hessian(D2, np.zeros(4), J(x), dJ(x)), project_j(D2, J(x)))
    assert np.array_equal(anti_invariant_part(np.zeros(4), J(x), dJ(x)), np.zeros((4, 4)))


def test_error_tensor_linear_in_gradient(rng):
    J, dJ = twisted_structure(2, 0.3, 2)
    x = rng.uniform(-0.4, 0.4, size=4)
    a, b = rng.normal(size=4), rng.normal(size=4)
    lhs = error_tensor(2 * a - 3 * b, J(x), dJ(x))
    rhs = 2 * error_tensor(a, J(x), dJ(x)) - 3 * error_tensor(b, J(x), dJ(x))
    assert np.allclose(lhs, rhs, atol=1e-13)


@pytest.mark.parametrize("n,seed", [(2, 0), (2, 5), (3, 1)])
def test_decomposition_reconstructs_fd_two_form(n, seed):
    J, dJ = twisted_structure(n, 0.3, seed)
    grad, hess = _field(n, seed)
    rng = np.random.default_rng(seed)
    for x in rng.uniform(-0.4, 0.4, size=(5, 2 * n)):
        W_fd = _fd_dJdu(J, grad, x)
        W = dJdu_form(hess(x), grad(x), J(x), dJ(x))
        parts = invariant_part(hess(x), grad(x), J(x), dJ(x)) + anti_invariant_part(grad(x), J(x), dJ(x))
        assert np.max(np.abs(W - W_fd)) <= 1e-6
        assert np.max(np.abs(parts - W_fd)) <= 1e-6


@pytest.mark.parametrize("n,seed", [(2, 3), (3, 4)])
def test_error_tensor_matches_fd_invariant_part(n, seed):
    J, dJ = twisted_structure(n, 0.3, seed)
    grad, hess = _field(n, seed)
    rng = np.random.default_rng(seed)
    for x in rng.uniform(-0.4, 0.4, size=(5, 2 * n)):
        W = _fd_dJdu(J, grad, x)
        Jx = J(x)
        W11 = 0.5 * (W + Jx.T @ W @ Jx)
        # the symmetric form (X, Y) -> W11(X, JY) / 2 is p(D^2 u) + E
        E_fd = 0.5 * W11 @ Jx - project_j(hess(x), Jx)
        assert np.max(np.abs(error_tensor(grad(x), Jx, dJ(x)) - E_fd)) <= 1e-6


def test_anti_invariant_part_ignores_hessian(rng):
    J, dJ = twisted_structure(2, 0.3, 6)
    x = rng.uniform(-0.4, 0.4, size=4)
    Du = rng.normal(size=4)
    base = anti_invariant_part(Du, J(x), dJ(x))
    for _ in range(5):
        D2 = rng.normal(size=(4, 4))
        D2 = D2 + D2.T
        full = dJdu_form(D2, Du, J(x), dJ(x))
        inv = invariant_part(D2, Du, J(x), dJ(x))
        assert np.array_equal(anti_invariant_part(Du, J(x), dJ(x)), base)
        assert np.allclose(full - inv, base, atol=1e-12)
    assert np.allclose(base, -base.T)
