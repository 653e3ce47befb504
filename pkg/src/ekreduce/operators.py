"""The six equation families as triples (F, S, T) plus their admissible sets.

Every family is written as ``F(S(x) + T(D^2 u, x), x) = f(x)`` on a chart.
``S(x) = iota(2 h(x))``; ``T`` is the J-projection (Monge-Ampère, Hessian,
quotient) or the (n-1)-psh transform. For the eigenvalue families the
eigenvalues are those of ``g(x)^{-1} H`` with ``H = iota^{-1}(p(N)) / 2``, so
that ``N = iota(2 (h + u_ij))`` gives back the eigenvalues of
``g^{-1} (h + u_ij)``.

Batched: ``N`` may be ``(..., 2n, 2n)`` and ``x`` ``(..., 2n)``.
"""

import json
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .background import flat_background, sample_ball, sample_pairs
from .errors import ConfigError, OutsideDomain
from .sym_matrix import as_herm, as_sym, generalized_eigh, iota, operator_norm, project_j, standard_j
from .symfun import sigma_all, reduced_table

FAMILIES = ("ma", "hessian", "quotient", "psh-ma", "psh-hessian", "psh-quotient")
DILATION = 1.1


@dataclass(frozen=True)
class EquationSpec:
    family: str
    n: int
    k: Optional[int] = None
    l: Optional[int] = None
    almost_complex: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        n, k, l = self.n, self.k, self.l
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ConfigError("n must be a positive integer")
        if self.psh and n < 2:
            raise ConfigError("psh families need n >= 2")
        if self.base == "hessian":
            if k is None or not 2 <= k <= n - 1:
                raise ConfigError(f"hessian needs 2 <= k <= n-1, got k={k}, n={n}")
        if self.base == "quotient":
            if l is None:
                object.__setattr__(self, "l", n)
                l = n
            if k is None or not 1 < k < l <= n:
                raise ConfigError(f"quotient needs 1 < k < l <= n, got k={k}, l={l}, n={n}")

    @property
    def base(self):
        return self.family.replace("psh-", "")

    @property
    def psh(self):
        return self.family.startswith("psh-")

    @property
    def dim(self):
        return 2 * self.n

    def to_dict(self):
        return asdict(self)


# ----------------------------------------------------------- admissible sets


def _random_orthogonal(rng, d, count):
    q, r = np.linalg.qr(rng.normal(size=(count, d, d)))
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]


def _random_unitary(rng, n, count):
    z = rng.normal(size=(count, n, n)) + 1j * rng.normal(size=(count, n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def hermitian_part(N):
    """``iota^{-1}(p(N)) / 2`` for the standard structure, without the invariance check."""
    N = np.asarray(N, dtype=float)
    n = N.shape[-1] // 2
    P = project_j(N)
    return 0.5 * as_herm(P[..., :n, :n] + 1j * P[..., :n, n:])


def relative_eigenvalues(N, g):
    """Descending eigenvalues of ``g^{-1} H`` with ``H = iota^{-1}(p(N)) / 2``."""
    return generalized_eigh(hermitian_part(N), g)[0]


def _from_eigen(lam, g, rng):
    """J-invariant ``N`` whose eigenvalues relative to ``g`` are the rows of ``lam``."""
    count, n = lam.shape
    L = np.linalg.cholesky(as_herm(g))
    U = _random_unitary(rng, n, count)
    H = L @ U @ (lam[..., None] * np.conj(np.swapaxes(U, -1, -2))) @ np.conj(L.T)
    return iota(2.0 * as_herm(H))


@dataclass(frozen=True)
class EigenBox:
    """``lo I <= N <= hi I``, or with a reference metric: J-invariant N with
    relative eigenvalues in ``[lo, hi]``."""

    lo: float
    hi: float
    reference_metric: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ConfigError("EigenBox needs 0 < lo < hi")

    kind = "eigen-box"

    def contains(self, N, dilation=1.0, tol=1e-12):
        N = np.asarray(N, dtype=float)
        lo, hi = self.lo / dilation, self.hi * dilation
        if self.reference_metric is None:
            w = np.linalg.eigvalsh(as_sym(N))
        else:
            w = relative_eigenvalues(N, self.reference_metric)
        ok = np.all((w >= lo - tol) & (w <= hi + tol), axis=-1)
        if self.reference_metric is not None:
            ok = ok & _j_ok(N)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def margin(self, N, dilation=1.0):
        """Per-matrix slack to the box boundary (>= 0 inside)."""
        N = np.asarray(N, dtype=float)
        if self.reference_metric is None:
            w = np.linalg.eigvalsh(as_sym(N))
        else:
            w = relative_eigenvalues(N, self.reference_metric)
        return np.minimum(w.min(axis=-1) - self.lo / dilation, self.hi * dilation - w.max(axis=-1))

    def sample(self, count, dim, rng):
        if self.reference_metric is None:
            Q = _random_orthogonal(rng, dim, count)
            w = rng.uniform(self.lo, self.hi, size=(count, dim))
            corners = rng.integers(0, 2, size=(count, dim)).astype(bool)
            # a quarter of the samples sit on the box boundary
            edge = rng.uniform(size=count) < 0.25
            w = np.where(edge[:, None], np.where(corners, self.hi, self.lo), w)
            return as_sym(Q @ (w[..., None] * np.swapaxes(Q, -1, -2)))
        lam = rng.uniform(self.lo, self.hi, size=(count, dim // 2))
        return _from_eigen(lam, self.reference_metric, rng)

    def describe(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "relative": self.reference_metric is not None}


@dataclass(frozen=True)
class ConeBox:
    """J-invariant N with relative eigenvalues in ``[-2 K0, 2 K0]`` and
    ``sigma_j^{1/j} >= 1 / (2 K0)`` for ``j <= k``."""

    K0: float
    k: int
    reference_metric: np.ndarray = field(default=None)

    kind = "cone-box"

    def _metric(self, n):
        return np.eye(n) if self.reference_metric is None else self.reference_metric

    def lam_ok(self, lam, dilation=1.0, tol=1e-12):
        bound = 2.0 * self.K0 * dilation
        s = sigma_all(lam)[..., 1 : self.k + 1]
        j = np.arange(1, self.k + 1)
        with np.errstate(invalid="ignore"):
            roots = np.where(s > 0, np.abs(s) ** (1.0 / j), -1.0)
        ok = np.all(np.abs(lam) <= bound + tol, axis=-1)
        return ok & np.all(roots >= 1.0 / bound - tol, axis=-1)

    def margin(self, N, dilation=1.0):
        N = np.asarray(N, dtype=float)
        lam = relative_eigenvalues(N, self._metric(N.shape[-1] // 2))
        bound = 2.0 * self.K0 * dilation
        s = sigma_all(lam)[..., 1 : self.k + 1]
        j = np.arange(1, self.k + 1)
        with np.errstate(invalid="ignore"):
            roots = np.where(s > 0, np.abs(s) ** (1.0 / j), -1.0)
        return np.minimum(bound - np.abs(lam).max(axis=-1), roots.min(axis=-1) - 1.0 / bound)

    def contains(self, N, dilation=1.0, tol=1e-12):
        N = np.asarray(N, dtype=float)
        lam = relative_eigenvalues(N, self._metric(N.shape[-1] // 2))
        ok = self.lam_ok(lam, dilation, tol) & _j_ok(N)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def sample(self, count, dim, rng):
        n = dim // 2
        out = []
        while sum(len(o) for o in out) < count:
            lam = rng.uniform(-2 * self.K0, 2 * self.K0, size=(4 * count, n))
            out.append(lam[self.lam_ok(lam)])
        lam = np.concatenate(out)[:count]
        return _from_eigen(lam, self._metric(n), rng)

    def describe(self):
        return {"kind": self.kind, "K0": self.K0, "k": self.k}


def _j_ok(N, rtol=1e-8):
    J = standard_j(N.shape[-1] // 2)
    defect = np.max(np.abs(J.T @ N @ J - N), axis=(-2, -1))
    return defect <= rtol * (np.max(np.abs(N), axis=(-2, -1)) + 1.0)


def default_set(spec, background=None, C0=4.0, K0=2.0):
    """Default admissible set: eigenvalue box for the determinant families,
    a cone box for Hessian, a relative eigenvalue box for quotients."""
    bg = background or flat_background(spec.n)
    g0 = bg.g(np.zeros(spec.dim))
    if spec.base == "ma":
        return EigenBox(1.0 / C0, C0)
    if spec.base == "hessian":
        return ConeBox(K0, spec.k, g0)
    return EigenBox(1.0 / K0, K0, g0)


# --------------------------------------------------------------- S, T and F


def _G(background, x):
    return iota(2.0 * background.g(x))


def psh_map(P, G):
    """``(tr(G^{-1} P) G / 2 - P) / (n - 1)`` for an already projected P."""
    d = P.shape[-1]
    n = d // 2
    tr = np.trace(np.linalg.solve(G, P), axis1=-2, axis2=-1)
    return (0.5 * tr[..., None, None] * G - P) / (n - 1)


def psh_map_adjoint(X, G):
    d = X.shape[-1]
    n = d // 2
    tr = np.trace(X @ G, axis1=-2, axis2=-1)
    return (0.5 * tr[..., None, None] * project_j(np.linalg.inv(G)) - project_j(X)) / (n - 1)


def build_T(spec, x, N, background=None):
    bg = background or flat_background(spec.n)
    x = np.asarray(x, dtype=float)
    J = bg.J(x) if spec.almost_complex else None
    P = project_j(N, J)
    if spec.psh:
        return psh_map(P, _G(bg, x))
    return P


def adjoint_T(spec, x, X, background=None):
    """The adjoint of ``T(., x)`` under the trace pairing (integrable case)."""
    bg = background or flat_background(spec.n)
    if spec.psh:
        return psh_map_adjoint(X, _G(bg, x))
    return project_j(X)


def build_S(spec, x, background=None, Du=None):
    """``iota(2 h(x))``; in the almost complex case plus ``T``-image of the E term."""
    bg = background or flat_background(spec.n)
    x = np.asarray(x, dtype=float)
    S = iota(2.0 * bg.h(x))
    if spec.almost_complex and Du is not None:
        E = error_tensor(Du, bg.J(x), bg.dJ(x))
        S = S + (psh_map(E, _G(bg, x)) if spec.psh else E)
    return S


def _value_from_lam(spec, lam):
    s = sigma_all(lam)
    if spec.base == "hessian":
        k = spec.k
        ok = np.all(s[..., 1 : k + 1] > 0, axis=-1)
        return ok, np.where(ok, np.abs(s[..., k]) ** (1.0 / k), np.nan)
    k, l = spec.k, spec.l
    ok = np.all(s[..., 1 : l + 1] > 0, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.abs(s[..., l] / s[..., k]) ** (1.0 / (l - k))
    return ok, np.where(ok, val, np.nan)


def _grad_from_lam(spec, lam, value):
    s = sigma_all(lam)
    table = reduced_table(lam)
    if spec.base == "hessian":
        k = spec.k
        return (value / (k * s[..., k]))[..., None] * table[..., k - 1]
    k, l = spec.k, spec.l
    ratio = table[..., l - 1] / s[..., l, None] - table[..., k - 1] / s[..., k, None]
    return (value / (l - k))[..., None] * ratio


def _eigen_parts(spec, N, x, bg):
    g = bg.g(np.asarray(x, dtype=float))
    return generalized_eigh(hermitian_part(N), g)


def _raise_outside(ok, what):
    if not np.all(ok):
        bad = np.argwhere(~np.atleast_1d(ok))
        raise OutsideDomain(f"{what} at batch index {tuple(bad[0])}")


def evaluate_F(spec, N, x, background=None):
    """F at (N, x). Raises OutsideDomain where the formula is undefined."""
    bg = background or flat_background(spec.n)
    N = as_sym(N)
    if spec.base == "ma":
        w = np.linalg.eigvalsh(N)
        _raise_outside(w[..., 0] > 0, "matrix not positive definite")
        out = np.exp(np.mean(np.log(w), axis=-1))
    else:
        lam = _eigen_parts(spec, N, x, bg)[0]
        ok, out = _value_from_lam(spec, lam)
        _raise_outside(ok, "eigenvalues outside the admissible cone")
    return float(out) if np.ndim(out) == 0 else out


def F_gradient(spec, N, x, background=None):
    """DF(N, x) as a symmetric matrix, so that ``dF = tr(DF dN)``.

    Monge-Ampère: ``(1/2n) det(N)^{1/2n} N^{-1}``. Eigenvalue families:
    ``iota(sum_i F_i w_i w_i^*) / 4`` with ``w_i`` the g-orthonormal eigenvectors.
    """
    bg = background or flat_background(spec.n)
    N = as_sym(N)
    if spec.base == "ma":
        w, V = np.linalg.eigh(N)
        _raise_outside(w[..., 0] > 0, "matrix not positive definite")
        val = np.exp(np.mean(np.log(w), axis=-1))
        coef = val[..., None] / (N.shape[-1] * w)
        return (V * coef[..., None, :]) @ np.swapaxes(V, -1, -2)
    lam, W = _eigen_parts(spec, N, x, bg)
    ok, val = _value_from_lam(spec, lam)
    _raise_outside(ok, "eigenvalues outside the admissible cone")
    grad = _grad_from_lam(spec, lam, val)
    Gc = (W * grad[..., None, :]) @ np.conj(np.swapaxes(W, -1, -2))
    return 0.25 * iota(as_herm(Gc))


def F_and_gradient(spec, N, x, background=None):
    """``(F, DF, ok)`` without raising; entries where ``ok`` is False are nan."""
    bg = background or flat_background(spec.n)
    N = as_sym(N)
    if spec.base == "ma":
        w, V = np.linalg.eigh(N)
        ok = w[..., 0] > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(ok, np.exp(np.mean(np.log(np.where(ok[..., None], w, 1.0)), axis=-1)), np.nan)
            coef = val[..., None] / (N.shape[-1] * w)
        return val, (V * coef[..., None, :]) @ np.swapaxes(V, -1, -2), ok
    lam, W = _eigen_parts(spec, N, x, bg)
    ok, val = _value_from_lam(spec, lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = _grad_from_lam(spec, lam, val)
    Gc = (W * grad[..., None, :]) @ np.conj(np.swapaxes(W, -1, -2))
    return val, 0.25 * iota(as_herm(Gc)), ok


def fd_gradient(func, N, step=1e-5):
    """Central-difference gradient of a scalar function on symmetric matrices.

    ``func`` maps ``(..., d, d)`` to ``(...)``. Returns the symmetric matrix G
    with ``func(N + t E) ~ func(N) + t tr(G E)``.
    """
    N = np.asarray(N, dtype=float)
    d = N.shape[-1]
    out = np.zeros_like(N)
    for a in range(d):
        for b in range(a, d):
            E = np.zeros((d, d))
            E[a, b] = E[b, a] = 1.0
            diff = (func(N + step * E) - func(N - step * E)) / (2 * step)
            if a == b:
                out[..., a, a] = diff
            else:
                out[..., a, b] = out[..., b, a] = 0.5 * diff
    return out


def equation_rhs(spec, x, background=None, psi=None):
    """Right-hand side f(x); ``psi`` overrides the background's psi values."""
    bg = background or flat_background(spec.n)
    x = np.asarray(x, dtype=float)
    psi = bg.psi(x) if psi is None else np.asarray(psi, dtype=float)
    n = spec.n
    if spec.base == "ma":
        detg = np.real(np.linalg.det(bg.g(x)))
        return 2.0 * np.exp(psi / n) * detg ** (1.0 / n)
    if spec.base == "hessian":
        k = spec.k
        return comb(n, k) ** (1.0 / k) * np.exp(psi / k)
    k, l = spec.k, spec.l
    return np.exp(-psi / (l - k)) * (comb(n, l) / comb(n, k)) ** (1.0 / (l - k))


def psi_from_value(spec, x, value, background=None):
    """Invert :func:`equation_rhs`: the psi for which ``f(x) = value``."""
    bg = background or flat_background(spec.n)
    value = np.asarray(value, dtype=float)
    n = spec.n
    if spec.base == "ma":
        detg = np.real(np.linalg.det(bg.g(np.asarray(x, dtype=float))))
        return n * np.log(value / 2.0) - np.log(detg)
    if spec.base == "hessian":
        k = spec.k
        return k * np.log(value) - np.log(comb(n, k))
    k, l = spec.k, spec.l
    return -(l - k) * np.log(value) + np.log(comb(n, l) / comb(n, k))


def reduced_matrix(spec, background, D2u, x, Du=None):
    """``S(x) + T(D2u, x)``; ``Du`` only matters in the almost complex case."""
    return build_S(spec, x, background, Du) + build_T(spec, x, D2u, background)


def evaluate_residual(spec, background, D2u, Du, x, psi=None):
    """``F(S + T(D2u, x), x) - f(x)``."""
    N = reduced_matrix(spec, background, D2u, x, Du)
    return evaluate_F(spec, N, x, background) - equation_rhs(spec, x, background, psi)


# --------------------------------------------------- almost complex tensors


def dJdu_form(D2u, Du, J, dJ):
    """Antisymmetric coefficients ``W`` of ``dJdu = W_il dx^i (x) dx^l`` (full 2-form).

    ``J[k, l] = J^k_l`` and ``dJ[a, k, l] = d_a J^k_l``.
    """
    c = -np.einsum("...kl,...ki->...il", J, D2u) - np.einsum("...ikl,...k->...il", dJ, Du)
    return c - np.swapaxes(c, -1, -2)


def _conj(W, J):
    return np.swapaxes(J, -1, -2) @ W @ J


def invariant_part(D2u, Du, J, dJ):
    """The (1,1) part of dJdu as antisymmetric coefficients, from the closed form."""
    a = -np.einsum("...kl,...ki->...il", J, D2u)
    a = a - np.einsum("...ai,...bl,...kb,...ka->...il", J, J, J, D2u)
    a = a - np.einsum("...ikl,...k->...il", dJ, Du)
    a = a - np.einsum("...ai,...bl,...akb,...k->...il", J, J, dJ, Du)
    a = 0.5 * a
    return a - np.swapaxes(a, -1, -2)


def anti_invariant_part(Du, J, dJ):
    """The (2,0)+(0,2) part of dJdu; a function of Du only."""
    a = -np.einsum("...ikl,...k->...il", dJ, Du)
    a = a + np.einsum("...ai,...bl,...akb,...k->...il", J, J, dJ, Du)
    a = 0.5 * a
    return a - np.swapaxes(a, -1, -2)


def error_tensor(Du, J, dJ):
    """First-order term E with ``H(u) = p(D^2 u, J) + E``; linear in Du."""
    t1 = np.einsum("...lj,...ikl,...k->...ij", J, dJ, Du)
    t3 = np.einsum("...lj,...lki,...k->...ij", J, dJ, Du)
    return 0.25 * (-t1 - np.swapaxes(t1, -1, -2) + t3 + np.swapaxes(t3, -1, -2))


def almost_complex_hessian(D2u, Du, J, dJ):
    """``p(D^2 u, J) + E``: the symmetric form ``(X, Y) -> (dJdu)^{1,1}(X, J Y)``."""
    return project_j(D2u, J) + error_tensor(Du, J, dJ)


def quotient_lower_bound(n, k, K_prime, C):
    """Lower bound for the smallest eigenvalue when ``sigma_1 <= K'`` and
    ``sigma_k / sigma_n <= C`` (all eigenvalues positive)."""
    return 1.0 / (C * K_prime ** (n - k - 1))


# ------------------------------------------------------------ certification


@dataclass
class SamplePlan:
    samples: int = 2000
    pairs: int = 1000
    seed: int = 0
    radius: Optional[float] = None


@dataclass
class StructureReport:
    lambda_hat: float
    Lambda_hat: float
    concavity_margin: float
    holder_K_hat: float
    passed: bool
    holder_F: float = 0.0
    holder_S: float = 0.0
    holder_T: float = 0.0
    linearity_error: float = 0.0
    positivity_margin: float = 0.0
    T_sandwich: float = 0.0
    radius: float = 1.0
    K: float = 10.0
    analytic_envelope: Optional[tuple] = None
    failures: list = field(default_factory=list)
    seed: int = 0
    samples: int = 0
    pairs: int = 0
    spec: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def ma_analytic_bounds(n, C0):
    return (1.0 / (2 * n)) / C0**2, (1.0 / (2 * n)) * C0**2


def t_sandwich_constant(spec):
    """K with ``K^{-1} ||P|| <= ||T(P, x)|| <= K ||P||`` for P >= 0 (flat metric)."""
    return 2.0 * (spec.n - 1) if spec.psh and spec.n > 2 else 2.0


def _chart_points(count, spec, radius, rng):
    return sample_ball(count, spec.dim, radius, rng)


def ellipticity_bounds(spec, setE, sample_count, background=None, seed=0, radius=1.0, F=None):
    """Min and max eigenvalue of DF over sampled (A, x) with A in setE."""
    if sample_count < 1:
        raise ConfigError("ellipticity_bounds needs at least one sample")
    bg = background or flat_background(spec.n)
    rng = np.random.default_rng(seed)
    A = setE.sample(sample_count, spec.dim, rng)
    x = _chart_points(sample_count, spec, radius, rng)
    if F is None:
        DF = F_gradient(spec, A, x, bg)
    else:
        DF = fd_gradient(lambda M: F(M, x), A)
    w = np.linalg.eigvalsh(DF)
    return float(w[..., 0].min()), float(w[..., -1].max())


def _metric_drift(background, x, g0):
    """``max |mu^{-1/2} - 1|`` over eigenvalues mu of ``g0^{-1/2} g(x) g0^{-1/2}``."""
    w, v = np.linalg.eigh(as_herm(g0))
    s = (v * w**-0.5) @ np.conj(v.T)
    mu = np.linalg.eigvalsh(as_herm(s @ background.g(x) @ s))
    return float(np.max(np.abs(mu**-0.5 - 1.0))), float(mu.min()), float(mu.max())


def _radius_ok(spec, setE, eps, mu_min, mu_max):
    if isinstance(setE, ConeBox):
        # Weyl: relative eigenvalues move by at most (2 eps + eps^2) ||H'|| <= eta
        n, B = spec.n, 2.0 * setE.K0
        eta = (2 * eps + eps**2) * B
        if B + eta > 4.0 * setE.K0:
            return False
        return all(
            comb(n, j) * ((B + eta) ** j - B**j) <= (2.0 * setE.K0) ** -j - (4.0 * setE.K0) ** -j
            for j in range(1, setE.k + 1)
        )
    # positive eigenvalues scale by a factor in [1/mu_max, 1/mu_min]
    return mu_max <= 2.0 and mu_min >= 0.5


def chart_radius(spec, background, setE, samples=400, seed=0):
    """Largest dyadic r <= 1 such that every member of setE keeps its relative
    eigenvalues within the factor-2 relaxation of the set on ``B_r``.

    Certified from a perturbation bound in the metric drift, so it holds for
    all of setE (the points x are sampled). MA-type families: always 1.
    """
    if spec.base == "ma" or setE.reference_metric is None:
        return 1.0
    rng = np.random.default_rng(seed)
    g0 = setE.reference_metric
    r = 1.0
    for _ in range(40):
        x = np.concatenate([np.zeros((1, spec.dim)), _chart_points(samples, spec, r, rng)])
        if _radius_ok(spec, setE, *_metric_drift(background, x, g0)):
            return r
        r *= 0.5
    return r


def check_structure(spec, background=None, setE=None, plan=None, F_override=None):
    """Sampled certification of ellipticity, concavity and the x-regularity of F, S, T.

    ``F_override(N, x)`` replaces F (used to exercise the failure paths).
    """
    bg = background or flat_background(spec.n)
    setE = setE or default_set(spec, bg)
    plan = plan or SamplePlan()
    if plan.samples < 1 or plan.pairs < 1:
        raise ConfigError("sample plan must request at least one sample and one pair")
    rng = np.random.default_rng(plan.seed)
    radius = plan.radius or chart_radius(spec, bg, setE, seed=plan.seed)
    d = spec.dim
    failures = []
    undefined = []

    def _F_default(M, y):
        val, _, ok = F_and_gradient(spec, M, y, bg)
        if not np.all(ok):
            undefined.append(int(np.size(ok) - np.count_nonzero(ok)))
        return val

    F = F_override or _F_default

    lam_hat, Lam_hat = ellipticity_bounds(
        spec, setE, plan.samples, bg, seed=plan.seed, radius=radius, F=F_override
    )

    # concavity on E
    A = setE.sample(plan.samples, d, rng)
    B = setE.sample(plan.samples, d, rng)
    x = _chart_points(plan.samples, spec, radius, rng)
    conc = F(0.5 * (A + B), x) - 0.5 * F(A, x) - 0.5 * F(B, x)
    concavity = float(np.min(conc))

    # Hölder quotients in x
    xs, ys = sample_pairs(plan.pairs, d, radius, rng)
    dist = np.linalg.norm(xs - ys, axis=1) ** bg.beta
    keep = dist > 0
    xs, ys, dist = xs[keep], ys[keep], dist[keep]
    Np = setE.sample(len(xs), d, rng)
    holder_F = float(np.max(np.abs(F(Np, xs) - F(Np, ys)) / dist))
    S_diff = build_S(spec, xs, bg) - build_S(spec, ys, bg)
    holder_S = float(np.max(operator_norm(S_diff) / dist))
    Ng = as_sym(rng.normal(size=(len(xs), d, d)))
    T_diff = build_T(spec, xs, Ng, bg) - build_T(spec, ys, Ng, bg)
    holder_T = float(np.max(operator_norm(T_diff) / ((operator_norm(Ng) + 1.0) * dist)))

    # linearity and positivity of T
    N1 = as_sym(rng.normal(size=(plan.samples, d, d)))
    N2 = as_sym(rng.normal(size=(plan.samples, d, d)))
    a, b = rng.normal(size=(2, plan.samples, 1, 1))
    lin = build_T(spec, x, a * N1 + b * N2, bg) - a * build_T(spec, x, N1, bg) - b * build_T(spec, x, N2, bg)
    scale = np.abs(a) * operator_norm(N1)[..., None, None] + np.abs(b) * operator_norm(N2)[..., None, None] + 1.0
    linearity = float(np.max(np.abs(lin) / scale))

    R = rng.normal(size=(plan.samples, d, d))
    P = R @ np.swapaxes(R, -1, -2)
    TP = build_T(spec, x, P, bg)
    nP = operator_norm(P)
    positivity = float(np.min(np.linalg.eigvalsh(TP)[..., 0] / nP))
    ratio = operator_norm(TP) / nP
    t_sandwich = float(max(ratio.max(), 1.0 / ratio.min()))

    K = bg.K
    holder_K = max(holder_F, holder_S, holder_T)
    if undefined:
        failures.append(f"F undefined at {sum(undefined)} sampled points (left the admissible cone)")
    if not lam_hat > 0:
        failures.append("ellipticity: DF not positive definite on sampled set")
    if concavity < -1e-10:
        failures.append(f"concavity: margin {concavity:.3e}")
    if holder_K > 1.1 * K:
        failures.append(f"holder: fitted constant {holder_K:.3e} exceeds K={K}")
    if linearity > 1e-12:
        failures.append(f"linearity of T: error {linearity:.3e}")
    if positivity < -1e-12:
        failures.append(f"positivity of T: margin {positivity:.3e}")
    if t_sandwich > 1.1 * max(K, t_sandwich_constant(spec)):
        failures.append(f"T norm sandwich constant {t_sandwich:.3e}")
    envelope = None
    if spec.base == "ma" and F_override is None and isinstance(setE, EigenBox) and setE.reference_metric is None:
        C0 = max(setE.hi, 1.0 / setE.lo)
        envelope = ma_analytic_bounds(spec.n, C0)
        if not (envelope[0] - 1e-12 <= lam_hat and Lam_hat <= envelope[1] + 1e-12):
            failures.append("ellipticity estimates leave the analytic envelope")

    return StructureReport(
        lambda_hat=lam_hat,
        Lambda_hat=Lam_hat,
        concavity_margin=concavity,
        holder_K_hat=holder_K,
        passed=not failures,
        holder_F=holder_F,
        holder_S=holder_S,
        holder_T=holder_T,
        linearity_error=linearity,
        positivity_margin=positivity,
        T_sandwich=t_sandwich,
        radius=radius,
        K=K,
        analytic_envelope=envelope,
        failures=failures,
        seed=plan.seed,
        samples=plan.samples,
        pairs=plan.pairs,
        spec=spec.to_dict(),
    )
