"""Periodic finite differences and a damped Newton solver for the reduced equation.

The unknown lives on the flat torus ``[0, L)^{2n}`` with ``m`` points per
axis; background coefficients are sampled at the torus points mapped into the
chart ball. The discrete equation solved is

    F(S(x) + T(D_h^2 u, x), x) = f(x) + c,     mean(u) = 0,

where the scalar ``c`` is an unknown compatibility constant: on a torus the
data ``f`` is only solvable up to such a constant, and ``c`` is O(h^2) for
data manufactured from a smooth solution.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from ._kernels import apply_stencil_operator, hessian_stencil
from .background import flat_background, torus_to_chart
from .errors import ConfigError, LineSearchFailed, MaxIterations, NotAdmissible
from .operators import (
    DILATION,
    F_and_gradient,
    adjoint_T,
    build_S,
    build_T,
    default_set,
    equation_rhs,
    psi_from_value,
)

MAGIC = b"HFG1"
CHUNK = 1 << 15


@dataclass(frozen=True)
class PeriodicGrid:
    real_dim: int
    m: int
    period: float = 2 * np.pi

    def __post_init__(self):
        if self.real_dim < 1:
            raise ConfigError("real_dim must be positive")
        if self.m < 3:
            raise ConfigError("need at least 3 points per axis")

    @property
    def h(self):
        return self.period / self.m

    @property
    def size(self):
        return self.m**self.real_dim

    @property
    def shape(self):
        return (self.m,) * self.real_dim

    def multi_index(self, start=0, stop=None):
        stop = self.size if stop is None else stop
        flat = np.arange(start, stop)
        return np.stack(np.unravel_index(flat, self.shape), axis=-1)

    def coords(self, start=0, stop=None):
        return self.multi_index(start, stop) * self.h

    def flat_index(self, multi):
        return int(np.ravel_multi_index(tuple(np.asarray(multi) % self.m), self.shape))

    def chart(self, start=0, stop=None):
        """Chart points for grid points ``start..stop-1`` (requires even real_dim)."""
        return torus_to_chart(self.coords(start, stop), self.period, self.real_dim // 2)


@dataclass
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.size:
            raise ConfigError(f"field has {self.values.size} values, grid has {self.grid.size}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field values must be finite")

    def mean_zero(self):
        return ScalarField(self.grid, self.values - self.values.mean())

    def shifted(self, c):
        return ScalarField(self.grid, self.values + c)

    def as_array(self):
        return self.values.reshape(self.grid.shape)


def write_field(path, field):
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", g.real_dim, g.m))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path, period=2 * np.pi):
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != MAGIC:
            raise ConfigError(f"{path}: not an HFG1 field file")
        real_dim, m = struct.unpack("<II", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = PeriodicGrid(real_dim, m, period)
    if data.size != grid.size:
        raise ConfigError(f"{path}: expected {grid.size} values, found {data.size}")
    return ScalarField(grid, data.astype(float))


# ----------------------------------------------------------------- stencils


def _point(grid, p):
    return grid.flat_index(p) if np.ndim(p) else int(p)


def real_hessian_fd(u, p=None):
    """Central-difference Hessian at grid point ``p`` (flat or multi index), or at all points."""
    g = u.grid
    if p is None:
        return hessian_stencil(u.values, g.m, g.real_dim, g.h)
    q = _point(g, p)
    return hessian_stencil(u.values, g.m, g.real_dim, g.h, q, q + 1)[0]


def complex_hessian(D2):
    """``u_ij`` from a real Hessian in coordinates ``z^i = x^i + sqrt(-1) x^{n+i}``."""
    D2 = np.asarray(D2, dtype=float)
    n = D2.shape[-1] // 2
    A = D2[..., :n, :n] + D2[..., n:, n:]
    B = D2[..., :n, n:] - D2[..., n:, :n]
    return 0.25 * (A + 1j * B)


def complex_hessian_fd(u, p=None):
    return complex_hessian(real_hessian_fd(u, p))


def laplacian(u, background=None, p=None):
    """``tr(g^{-1} u_ij)``; for ``g = I`` this is ``(1/4) sum_a d^2 u / dx_a^2``."""
    g = u.grid
    n = g.real_dim // 2
    bg = background or flat_background(n)
    if p is None:
        out = np.empty(g.size)
        for start in range(0, g.size, CHUNK):
            stop = min(start + CHUNK, g.size)
            H = complex_hessian(hessian_stencil(u.values, g.m, g.real_dim, g.h, start, stop))
            out[start:stop] = _trace_g(bg.g(g.chart(start, stop)), H)
        return out
    q = _point(g, p)
    H = complex_hessian_fd(u, q)
    return float(_trace_g(bg.g(g.chart(q, q + 1))[0], H))


def _trace_g(gm, H):
    from .sym_matrix import _check_metric

    _check_metric(gm)
    return np.real(np.trace(np.linalg.solve(gm, H), axis1=-2, axis2=-1))


# ------------------------------------------------------ manufactured fields


@dataclass(frozen=True)
class TrigField:
    """``sum_q amp_q cos(k_q . x + phase_q)`` with integer wave vectors."""

    amps: tuple
    waves: tuple
    phases: tuple

    @classmethod
    def standard(cls, n, amplitude):
        """``amplitude (cos x_1 + cos x_{n+1})``."""
        d = 2 * n
        e1 = tuple(int(i == 0) for i in range(d))
        en = tuple(int(i == n) for i in range(d))
        return cls((amplitude, amplitude), (e1, en), (0.0, 0.0))

    def _arg(self, x):
        K = np.asarray(self.waves, dtype=float)
        return np.asarray(x, dtype=float) @ K.T + np.asarray(self.phases)

    def value(self, x):
        return np.cos(self._arg(x)) @ np.asarray(self.amps)

    def gradient(self, x):
        K = np.asarray(self.waves, dtype=float)
        return -(np.sin(self._arg(x)) * np.asarray(self.amps)) @ K

    def hessian(self, x):
        K = np.asarray(self.waves, dtype=float)
        w = np.cos(self._arg(x)) * np.asarray(self.amps)
        return -np.einsum("...q,qa,qb->...ab", w, K, K)

    def sample(self, grid):
        return ScalarField(grid, self.value(grid.coords()))


@dataclass
class ManufactureReport:
    min_margin: float
    psi_min: float
    psi_max: float
    points: int

    def to_dict(self):
        return asdict(self)


def manufacture(spec, background, u_star, grid=None, setE=None):
    """The psi for which ``u_star`` solves the equation; returns ``(psi, report)``.

    ``u_star`` is a :class:`TrigField` (analytic Hessian, needs ``grid``) or a
    :class:`ScalarField` (stencil Hessian: ``u_star`` is then an exact
    discrete solution). Raises :class:`NotAdmissible` at the first grid point
    where the reduced matrix leaves the admissible set.
    """
    bg = background or flat_background(spec.n)
    if isinstance(u_star, ScalarField):
        grid = u_star.grid
    elif grid is None:
        raise ConfigError("a TrigField needs a grid")
    _check_grid(spec, grid)
    setE = setE or default_set(spec, bg)
    psi = np.empty(grid.size)
    margin = np.inf
    for start in range(0, grid.size, CHUNK):
        stop = min(start + CHUNK, grid.size)
        x = grid.chart(start, stop)
        if isinstance(u_star, ScalarField):
            D2 = hessian_stencil(u_star.values, grid.m, grid.real_dim, grid.h, start, stop)
        else:
            D2 = u_star.hessian(grid.coords(start, stop))
        N = build_S(spec, x, bg) + build_T(spec, x, D2, bg)
        marg = setE.margin(N)
        inside = setE.contains(N)
        if not np.all(inside):
            first = start + int(np.argmin(inside))
            raise NotAdmissible(
                f"manufactured solution not admissible at grid point {first}",
                point=tuple(int(i) for i in grid.multi_index(first, first + 1)[0]),
            )
        margin = min(margin, float(marg.min()))
        val, _, _ = F_and_gradient(spec, N, x, bg)
        psi[start:stop] = psi_from_value(spec, x, val, bg)
    return psi, ManufactureReport(margin, float(psi.min()), float(psi.max()), grid.size)


# ------------------------------------------------------------------ solver


@dataclass
class SolveReport:
    iterations: int
    residual: float
    damping: list
    K_measured: float
    converged: bool
    compat_constant: float = 0.0
    residual_history: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    box_check: dict = field(default_factory=dict)
    grid_m: int = 0
    real_dim: int = 0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_grid(spec, grid):
    if grid.real_dim != spec.dim:
        raise ConfigError(f"grid dimension {grid.real_dim} does not match 2n = {spec.dim}")
    if grid.m < 8:
        raise ConfigError("solver grids need m >= 8")


class Discretization:
    """Pointwise assembly of the discrete residual and its linearization."""

    def __init__(self, spec, background, grid, f, setE=None):
        if spec.almost_complex:
            raise ConfigError("the grid solver handles integrable structures only")
        _check_grid(spec, grid)
        self.spec = spec
        self.bg = background or flat_background(spec.n)
        self.grid = grid
        self.f = np.asarray(f, dtype=float).ravel()
        self.setE = setE or default_set(spec, self.bg)

    def evaluate(self, u, c, want_coef=True):
        """Return ``(residual, coef, bad_point)``; ``bad_point`` is None when admissible."""
        g = self.grid
        d = g.real_dim
        r = np.empty(g.size)
        coef = np.empty((g.size, d, d)) if want_coef else None
        for start in range(0, g.size, CHUNK):
            stop = min(start + CHUNK, g.size)
            x = g.chart(start, stop)
            D2 = hessian_stencil(u, g.m, d, g.h, start, stop)
            N = build_S(self.spec, x, self.bg) + build_T(self.spec, x, D2, self.bg)
            inside = self.setE.contains(N, DILATION)
            val, DF, ok = F_and_gradient(self.spec, N, x, self.bg)
            good = inside & ok
            if not np.all(good):
                return None, None, start + int(np.argmin(good))
            r[start:stop] = val - self.f[start:stop] - c
            if want_coef:
                coef[start:stop] = adjoint_T(self.spec, x, DF, self.bg)
        return r, coef, None

    def residual(self, u, c=0.0):
        """Residual field; raises NotAdmissible where the reduction leaves the solver set."""
        r, _, bad = self.evaluate(np.asarray(u, dtype=float).ravel(), c, want_coef=False)
        if bad is not None:
            raise NotAdmissible("iterate not admissible",
                                point=tuple(int(i) for i in self.grid.multi_index(bad, bad + 1)[0]))
        return r

    def jacobian_apply(self, coef, v):
        """Directional derivative of the residual in u along ``v``."""
        g = self.grid
        return apply_stencil_operator(v, coef, g.m, g.real_dim, g.h)

    def symbol(self, coef):
        """Fourier symbol of ``-sum_ab mean(coef)_ab D^2_ab`` (positive off the zero mode)."""
        g = self.grid
        d = g.real_dim
        C = coef.mean(axis=0)
        theta = 2 * np.pi * np.fft.fftfreq(g.m)
        rtheta = 2 * np.pi * np.fft.rfftfreq(g.m)
        axes = [theta] * (d - 1) + [rtheta]
        mesh = np.meshgrid(*axes, indexing="ij")
        P = np.zeros(mesh[0].shape)
        for a in range(d):
            P += C[a, a] * 4.0 * np.sin(mesh[a] / 2) ** 2
            for b in range(a + 1, d):
                P += 2.0 * C[a, b] * np.sin(mesh[a]) * np.sin(mesh[b])
        P /= g.h**2
        P.flat[0] = 1.0
        return P


def _bordered_solve(disc, coef, r, rtol, restart=60, maxiter=20):
    g = disc.grid
    M = g.size
    shape = g.shape
    P = disc.symbol(coef)

    def matvec(z):
        v, dc = z[:M], z[M]
        out = np.empty(M + 1)
        out[:M] = disc.jacobian_apply(coef, v) - dc
        out[M] = v.mean()
        return out

    def precond(z):
        r1, r2 = z[:M], z[M]
        mean1 = r1.mean()
        spec = np.fft.rfftn((r1 - mean1).reshape(shape)) / (-P)
        spec.flat[0] = 0.0
        v = np.fft.irfftn(spec, s=shape, axes=range(len(shape))).ravel() + r2
        return np.concatenate([v, [-mean1]])

    A = LinearOperator((M + 1, M + 1), matvec=matvec, dtype=float)
    Mop = LinearOperator((M + 1, M + 1), matvec=precond, dtype=float)
    b = np.concatenate([-r, [0.0]])
    count = [0]

    def cb(_):
        count[0] += 1

    sol, info = gmres(A, b, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter, M=Mop,
                      callback=cb, callback_type="pr_norm")
    return sol[:M], float(sol[M]), count[0]


def newton_solve(spec, background, u0, psi=None, f=None, tol=1e-10, max_iter=20, setE=None,
                 linear_rtol=1e-10, min_step=1e-6):
    """Damped Newton for the discrete reduced equation with a mean-zero gauge.

    Exactly one of ``psi`` (array over the grid) or ``f`` must be given.
    Returns ``(u, SolveReport)``; raises LineSearchFailed or MaxIterations
    (with the partial report attached as ``.report``).
    """
    bg = background or flat_background(spec.n)
    grid = u0.grid
    if (psi is None) == (f is None):
        raise ConfigError("give exactly one of psi or f")
    if f is None:
        psi = psi.values if isinstance(psi, ScalarField) else np.asarray(psi, dtype=float)
        f = equation_rhs(spec, grid.chart(), bg, psi.ravel())
    disc = Discretization(spec, bg, grid, f, setE)
    u = u0.values - u0.values.mean()
    c = 0.0
    r, coef, bad = disc.evaluate(u, c)
    if bad is not None:
        raise NotAdmissible("initial guess not admissible",
                            point=tuple(int(i) for i in grid.multi_index(bad, bad + 1)[0]))
    report = SolveReport(0, float(np.abs(r).max()), [], 0.0, False, grid_m=grid.m, real_dim=grid.real_dim)
    report.residual_history.append(report.residual)
    for it in range(max_iter + 1):
        res = float(np.abs(r).max())
        if res <= tol:
            report.converged = True
            break
        if it == max_iter:
            _finish(report, disc, u, c, res)
            err = MaxIterations(f"no convergence after {max_iter} Newton steps (residual {res:.3e})")
            err.report = report
            raise err
        v, dc, lin = _bordered_solve(disc, coef, r, linear_rtol)
        report.linear_iterations.append(lin)
        alpha = 1.0
        while True:
            u_new = u + alpha * v
            u_new -= u_new.mean()
            c_new = c + alpha * dc
            r_new, coef_new, bad = disc.evaluate(u_new, c_new)
            if bad is None:
                res_new = float(np.abs(r_new).max())
                if res_new < res or res_new <= tol:
                    break
            alpha *= 0.5
            if alpha < min_step:
                _finish(report, disc, u, c, res)
                err = LineSearchFailed(f"no admissible decreasing step at Newton iteration {it}")
                err.report = report
                raise err
        u, c, r, coef = u_new, c_new, r_new, coef_new
        report.damping.append(alpha)
        report.iterations += 1
        report.residual_history.append(res_new)
    _finish(report, disc, u, c, float(np.abs(r).max()))
    return ScalarField(grid, u), report


def _finish(report, disc, u, c, res):
    field_u = ScalarField(disc.grid, u)
    lap = laplacian(field_u, disc.bg)
    report.residual = res
    report.compat_constant = float(c)
    report.K_measured = float(max(np.abs(u).max(), lap.max()))
    if disc.spec.family == "ma":
        report.box_check = ma_box_check(disc, field_u, c, report.K_measured)


def ma_box_check(disc, u, c, K):
    """A-priori eigenvalue box for Monge-Ampère: with ``lam`` the eigenvalues of
    ``2(h + u_ij)`` relative to g, ``sum lam <= 2(tr_g h + K) =: U`` and
    ``prod lam = (f + c)^n / det g``, so ``C0 = max(U, U^{n-1} det g / (f + c)^n)``.
    """
    g = disc.grid
    n = disc.spec.n
    x = g.chart()
    gm = disc.bg.g(x)
    hm = disc.bg.h(x)
    detg = np.real(np.linalg.det(gm))
    trh = np.real(np.trace(np.linalg.solve(gm, hm), axis1=-2, axis2=-1))
    U = 2.0 * (trh.max() + K)
    fmin = float(np.min(disc.f + c))
    C0 = max(U, U ** (n - 1) * detg.max() / fmin**n)
    lam_min, lam_max = np.inf, -np.inf
    for start in range(0, g.size, CHUNK):
        stop = min(start + CHUNK, g.size)
        H = complex_hessian(hessian_stencil(u.values, g.m, g.real_dim, g.h, start, stop))
        from .sym_matrix import generalized_eigenvalues

        lam = generalized_eigenvalues(2.0 * (hm[start:stop] + H), gm[start:stop])
        lam_min = min(lam_min, float(lam.min()))
        lam_max = max(lam_max, float(lam.max()))
    holds = 1.0 / C0 <= lam_min and lam_max <= C0
    return {"C0": float(C0), "lam_min": lam_min, "lam_max": lam_max, "holds": bool(holds)}


def solve_manufactured(spec, m, amplitude, background=None, tol=1e-10, max_iter=20, discrete=False):
    """Manufacture psi from ``amplitude (cos x_1 + cos x_{n+1})`` and solve from u = 0.

    Returns ``(u, report, error)`` with ``error = ||u - u*||_inf`` after
    removing the mean of ``u*``.
    """
    bg = background or flat_background(spec.n)
    grid = PeriodicGrid(spec.dim, m)
    trig = TrigField.standard(spec.n, amplitude)
    u_star = trig.sample(grid).mean_zero()
    psi, _ = manufacture(spec, bg, u_star if discrete else trig, grid)
    u, report = newton_solve(spec, bg, ScalarField(grid, np.zeros(grid.size)), psi=psi, tol=tol, max_iter=max_iter)
    return u, report, float(np.abs(u.values - u_star.values).max())
