"""Hermitian n x n <-> real symmetric 2n x 2n matrix algebra.

Matrices are plain numpy arrays. Every function accepts a leading batch shape,
so ``iota`` of an ``(M, n, n)`` stack returns an ``(M, 2n, 2n)`` stack.

Conventions: real coordinates ``z^i = x^i + sqrt(-1) x^{n+i}``; the standard
complex structure sends ``e_i`` to ``e_{n+i}``, i.e. ``J = [[0, -I], [I, 0]]``,
and a Hermitian ``H = A + sqrt(-1) B`` embeds as ``[[A, B], [-B, A]]``.
"""

import numpy as np

from .errors import MetricNotPositive, NotJInvariant

J_INVARIANCE_RTOL = 1e-10
METRIC_MIN_EIG = 1e-12


def standard_j(n):
    """The standard complex structure on R^{2n} as a real 2n x 2n matrix."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def is_complex_structure(J, tol=1e-12):
    J = np.asarray(J, dtype=float)
    eye = np.eye(J.shape[-1])
    return bool(np.max(np.abs(J @ J + eye)) <= tol)


def as_sym(a):
    """Symmetrize-and-halve; the canonical way to build a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def as_herm(a):
    a = np.asarray(a, dtype=complex)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def iota(H):
    """Embed Hermitian matrices as J-invariant symmetric matrices."""
    H = np.asarray(H)
    A = np.real(H)
    B = np.imag(H)
    top = np.concatenate([A, B], axis=-1)
    bottom = np.concatenate([-B, A], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def _conj_by(N, J):
    return np.swapaxes(J, -1, -2) @ N @ J


def project_j(N, J=None):
    """``p(N) = (N + J^T N J) / 2``, the J-invariant part of ``N``."""
    N = np.asarray(N, dtype=float)
    if J is None:
        J = standard_j(N.shape[-1] // 2)
    return 0.5 * (N + _conj_by(N, J))


def j_invariance_defect(M, J=None):
    M = np.asarray(M, dtype=float)
    if J is None:
        J = standard_j(M.shape[-1] // 2)
    return np.max(np.abs(_conj_by(M, J) - M), axis=(-1, -2))


def iota_inverse(M, J=None):
    """Inverse of :func:`iota` on J-invariant matrices.

    Raises :class:`NotJInvariant` when ``||J^T M J - M|| > 1e-10 (||M|| + 1)``.
    ``J`` must be the standard structure (or omitted).
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[-1]
    if d % 2:
        raise ValueError("dimension must be even")
    n = d // 2
    if J is not None and not np.allclose(J, standard_j(n), atol=1e-14):
        raise ValueError("iota_inverse is defined for the standard complex structure")
    defect = j_invariance_defect(M)
    scale = operator_norm(M) + 1.0
    if np.any(defect > J_INVARIANCE_RTOL * scale):
        raise NotJInvariant(f"J-invariance defect {np.max(defect):.3e}")
    return M[..., :n, :n] + 1j * M[..., :n, n:]


def operator_norm(N):
    """Largest absolute eigenvalue of a symmetric (or Hermitian) matrix."""
    N = np.asarray(N)
    if N.shape[-1] == 0:
        return np.zeros(N.shape[:-2])
    w = np.linalg.eigvalsh(N)
    return np.max(np.abs(w), axis=-1)


def _check_metric(g):
    w = np.linalg.eigvalsh(g)
    if np.any(w[..., 0] <= METRIC_MIN_EIG):
        raise MetricNotPositive(f"metric minimum eigenvalue {np.min(w[..., 0]):.3e}")


def generalized_eigh(h, g):
    """Eigenvalues (descending) and g-orthonormal eigenvectors of ``g^{-1} h``.

    Reduces by the Cholesky factor ``g = L L^*`` to the Hermitian matrix
    ``L^{-1} h L^{-*}``. Returns ``(values, W)`` with ``W[..., :, i]`` the i-th
    eigenvector, normalised so that ``W^* g W = I``.
    """
    h = as_herm(h)
    g = as_herm(g)
    _check_metric(g)
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    reduced = as_herm(Linv @ h @ np.conj(np.swapaxes(Linv, -1, -2)))
    w, v = np.linalg.eigh(reduced)
    w = w[..., ::-1]
    v = v[..., ::-1]
    W = np.conj(np.swapaxes(Linv, -1, -2)) @ v
    return w, W


def generalized_eigenvalues(h, g):
    """Eigenvalues of ``g^{-1} h`` in descending order (real, since h is Hermitian)."""
    return generalized_eigh(h, g)[0]
