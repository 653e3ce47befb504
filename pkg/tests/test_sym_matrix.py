import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ekreduce.errors import MetricNotPositive, NotJInvariant
from ekreduce.sym_matrix import (
    as_herm, generalized_eigenvalues, generalized_eigh, iota, iota_inverse, is_complex_structure,
    j_invariance_defect, operator_norm, project_j, standard_j,
)
from oracles import block_embed, inv_sqrt_herm, random_herm, random_hpd, random_spd


def test_standard_j_is_complex_structure():
    for n in range(1, 6):
        assert is_complex_structure(standard_j(n))
    assert not is_complex_structure(np.eye(4))


def test_iota_identity_and_block_form(rng):
    assert np.array_equal(iota(np.eye(3, dtype=complex)), np.eye(6))
    H = random_herm(rng, 4)
    assert np.array_equal(iota(H), block_embed(H))


def test_iota_symmetric_and_j_invariant(rng):
    H = np.array([random_herm(rng, 3) for _ in range(50)])
    M = iota(H)
    assert np.array_equal(M, np.swapaxes(M, -1, -2))
    assert np.max(j_invariance_defect(M)) < 1e-14


def test_iota_det_squares(rng):
    for _ in range(200):
        n = rng.integers(1, 7)
        H = random_herm(rng, n)
        d = np.linalg.det(H).real
        assert np.linalg.det(iota(H)) == pytest.approx(d**2, rel=1e-10, abs=1e-300)


def test_iota_linear(rng):
    H1, H2 = random_herm(rng, 3), random_herm(rng, 3)
    a, b = 0.7, -2.5
    assert np.allclose(iota(a * H1 + b * H2), a * iota(H1) + b * iota(H2), atol=1e-14)


def test_iota_preserves_order(rng):
    for _ in range(100):
        n = rng.integers(1, 6)
        H1 = random_herm(rng, n)
        H2 = H1 + random_hpd(rng, n, lo=0.0)
        assert np.linalg.eigvalsh(iota(H2) - iota(H1)).min() >= -1e-12
        # and the reverse direction: an unordered pair stays unordered
        H3 = H1 - random_hpd(rng, n, lo=0.1)
        assert np.linalg.eigvalsh(iota(H3) - iota(H1)).max() < 0


def test_iota_inverse_examples(rng):
    assert np.allclose(iota_inverse(np.eye(6)), np.eye(3))
    assert np.allclose(iota_inverse(2 * np.eye(2)), [[2.0]])
    for _ in range(100):
        n = rng.integers(1, 6)
        H = random_herm(rng, n)
        assert np.max(np.abs(iota_inverse(iota(H)) - H)) <= 1e-13
        M = iota(H)
        assert np.max(np.abs(iota(iota_inverse(M)) - M)) <= 1e-12


def test_iota_inverse_rejects_non_invariant():
    with pytest.raises(NotJInvariant):
        iota_inverse(np.diag([1.0, 0.0]))


def test_project_j_examples(rng):
    assert np.allclose(project_j(np.diag([1.0, 0.0])), 0.5 * np.eye(2))
    M = iota(random_herm(rng, 3))
    assert np.allclose(project_j(M), M, atol=1e-14)
    J = standard_j(3)
    R = rng.normal(size=(6, 6))
    R = R + R.T
    anti = 0.5 * (R - J.T @ R @ J)
    assert np.allclose(project_j(anti), 0, atol=1e-14)


@given(arrays(np.float64, (6, 6), elements=st.floats(-10, 10)))
def test_project_j_idempotent(a):
    N = 0.5 * (a + a.T)
    P = project_j(N)
    assert np.max(np.abs(project_j(P) - P)) <= 1e-13 * (1 + np.abs(N).max())
    assert j_invariance_defect(P) <= 1e-13 * (1 + np.abs(N).max())


@given(arrays(np.float64, (4, 4), elements=st.floats(-5, 5)), arrays(np.float64, (4, 4), elements=st.floats(-5, 5)),
       st.floats(-3, 3), st.floats(-3, 3))
def test_project_j_linear(a, b, s, t):
    A, B = a + a.T, b + b.T
    assert np.allclose(project_j(s * A + t * B), s * project_j(A) + t * project_j(B), atol=1e-12)


def test_projection_norm_sandwich(rng):
    for _ in range(500):
        d = 2 * rng.integers(1, 6)
        P = random_spd(rng, d)
        pP = project_j(P)
        nP = operator_norm(P)
        assert np.linalg.eigvalsh(pP).min() >= -1e-12 * nP
        assert 0.5 * nP - 1e-12 <= operator_norm(pP) <= nP + 1e-12


def test_operator_norm_examples(rng):
    assert operator_norm(np.diag([3.0, -5.0])) == 5.0
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    assert operator_norm(q @ np.diag([3.0, -5.0]) @ q.T) == pytest.approx(5.0, abs=1e-14)
    assert operator_norm(np.zeros((4, 4))) == 0.0


def test_generalized_eigenvalues_examples():
    assert np.allclose(generalized_eigenvalues(np.diag([1.0, 3.0]), np.eye(2)), [3, 1])
    assert np.allclose(generalized_eigenvalues(np.eye(3), 2 * np.eye(3)), [0.5] * 3)


def test_generalized_eigenvalues_against_symmetric_reduction(rng):
    for _ in range(100):
        n = rng.integers(1, 6)
        h, g = random_herm(rng, n), random_hpd(rng, n)
        s = inv_sqrt_herm(g)
        ref = np.sort(np.linalg.eigvalsh(s @ h @ s))[::-1]
        got = generalized_eigenvalues(h, g)
        assert np.all(np.diff(got) <= 0)
        assert np.max(np.abs(got - ref)) <= 1e-10 * (1 + np.abs(ref).max())


def test_generalized_eigenvalues_congruence_invariant(rng):
    n = 4
    h, g = random_herm(rng, n), random_hpd(rng, n)
    C = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 3 * np.eye(n)
    h2 = C.T @ h @ C.conj()
    g2 = C.T @ g @ C.conj()
    assert np.allclose(generalized_eigenvalues(h2, g2), generalized_eigenvalues(h, g), atol=1e-9)


def test_generalized_eigh_vectors_orthonormal(rng):
    h, g = random_herm(rng, 3), random_hpd(rng, 3)
    w, W = generalized_eigh(h, g)
    assert np.allclose(W.conj().T @ g @ W, np.eye(3), atol=1e-12)
    assert np.allclose(h @ W, g @ W @ np.diag(w), atol=1e-12)


def test_generalized_eigenvalues_rejects_bad_metric():
    with pytest.raises(MetricNotPositive):
        generalized_eigenvalues(np.eye(2), np.diag([1.0, 0.0]))
    with pytest.raises(MetricNotPositive):
        generalized_eigenvalues(np.eye(2), -np.eye(2))


def test_as_herm_exact():
    a = np.array([[1, 2 + 1j], [3, 4]])
    H = as_herm(a)
    assert np.array_equal(H, H.conj().T)
