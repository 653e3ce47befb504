"""Norms and decay rates of grid fields, and refinement experiments.

Hölder quotients use the torus distance between lattice points. "Half domain"
means the points whose coordinates all lie in ``[L/4, 3L/4)``, the interior
analogue of the half ball.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from ._kernels import hessian_stencil, holder_pair_max
from .background import background_from_descriptor
from .errors import ConfigError, LineSearchFailed, MaxIterations, NotAdmissible, TooFewPoints
from .grid import PeriodicGrid, ScalarField, TrigField, laplacian, manufacture, newton_solve
from .operators import EquationSpec

log = logging.getLogger(__name__)

PAIR_BLOCK = 4096
CSV_COLUMNS = [
    "grid_m", "h", "sup_u", "sup_lap", "psi_holder", "u_c2alpha",
    "decay_alpha_median", "solve_iters", "converged",
]


def sup_norm(u):
    values = u.values if isinstance(u, ScalarField) else np.asarray(u)
    return float(np.max(np.abs(values)))


def half_domain(grid):
    """Flat indices of the half-domain points."""
    idx = grid.multi_index()
    lo, hi = grid.m / 4, 3 * grid.m / 4
    inside = np.all((idx >= lo) & (idx < hi), axis=1)
    return np.flatnonzero(inside)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


def _pair_block(points, grid, seed, block):
    """Block ``block`` of the deterministic pair stream over ``points``.

    Half the pairs are uniform; the other half join a point to a lattice
    neighbour at a log-uniform offset, so small separations are probed too.
    Blocks do not depend on the budget, so larger budgets see supersets.
    """
    rng = np.random.default_rng([seed, block])
    half = PAIR_BLOCK // 2
    uni = rng.choice(points, size=(half, 2))
    p = rng.choice(points, size=PAIR_BLOCK - half)
    reach = np.floor(2.0 ** rng.uniform(0, np.log2(max(grid.m / 2, 1.0)), size=p.size)).astype(np.int64)
    step = rng.integers(-1, 2, size=(p.size, grid.real_dim)) * reach[:, None]
    idx = np.stack(np.unravel_index(p, grid.shape), axis=-1)
    q = np.ravel_multi_index(tuple(((idx + step) % grid.m).T), grid.shape)
    member = np.isin(q, points)
    loc = np.stack([p, np.where(member, q, p)], axis=-1)
    return np.concatenate([uni, loc])


def holder_seminorm(u, alpha, pair_budget=20000, seed=0, points=None):
    """Max of ``|u(p) - u(q)| / dist(p, q)**alpha`` over lattice pairs.

    All pairs are used when there are at most ``pair_budget`` of them;
    otherwise the first ``pair_budget`` pairs of a seeded stream.
    ``points`` restricts to a subset of flat indices.
    """
    _check_alpha(alpha)
    grid = u.grid
    points = np.arange(grid.size) if points is None else np.asarray(points, dtype=np.int64)
    idx = grid.multi_index()
    total = points.size * (points.size - 1) // 2
    if total == 0:
        return 0.0
    if total <= pair_budget:
        i, j = np.triu_indices(points.size, k=1)
        pairs = np.stack([points[i], points[j]], axis=-1)
        return holder_pair_max(u.values, idx, pairs, grid.m, grid.h, alpha)
    best = 0.0
    for block in range(-(-pair_budget // PAIR_BLOCK)):
        pairs = _pair_block(points, grid, seed, block)[: pair_budget - block * PAIR_BLOCK]
        best = max(best, holder_pair_max(u.values, idx, pairs, grid.m, grid.h, alpha))
    return best


def c2alpha_norm(u, background=None, alpha=0.5, pair_budget=20000, seed=0):
    """``sup|u| + sup |D^2 u| + max_ab [D^2_ab u]_alpha`` over the half domain.

    ``|D^2 u|`` is the spectral norm of the stencil Hessian. ``background`` is
    accepted for interface symmetry; the norm is taken in flat coordinates.
    """
    _check_alpha(alpha)
    grid = u.grid
    pts = half_domain(grid)
    H = hessian_stencil(u.values, grid.m, grid.real_dim, grid.h)
    sup_h = float(np.max(np.abs(np.linalg.eigvalsh(H[pts]))))
    semi = 0.0
    for a in range(grid.real_dim):
        for b in range(a, grid.real_dim):
            entry = ScalarField(grid, H[:, a, b])
            semi = max(semi, holder_seminorm(entry, alpha, pair_budget, seed, pts))
    return float(np.max(np.abs(u.values[pts]))) + sup_h + semi


# ------------------------------------------------------------ decay exponent


def _quadratic_design(y):
    d = y.shape[1]
    cols = [np.ones(len(y))] + [y[:, a] for a in range(d)]
    cols += [y[:, a] * y[:, b] for a, b in combinations_with_replacement(range(d), 2)]
    return np.stack(cols, axis=1)


def quadratic_fit_residual(y, values, reweights=5):
    """Approximate min-max residual of a degree-2 fit.

    Least squares, then Lawson reweighting towards the largest residuals;
    the smallest max residual seen is returned.
    """
    A = _quadratic_design(y)
    w = np.ones(len(y))
    best = np.inf
    for _ in range(reweights + 1):
        sw = np.sqrt(w)
        coef = np.linalg.lstsq(A * sw[:, None], values * sw, rcond=None)[0]
        res = np.abs(values - A @ coef)
        best = min(best, float(res.max()))
        if res.max() == 0:
            break
        w = w * res / res.max()
        w /= w.sum()
        w = np.maximum(w, 1e-300)
    return best


def decay_exponent(u, center, radii, reweights=5, floor=None):
    """Empirical alpha in ``max_{B_r} |u - P_r| ~ r^{2 + alpha}``.

    ``center`` is a multi index or flat index; ``radii`` (at least 3) are in
    coordinate units. Returns ``inf`` when the residuals are at roundoff.
    """
    grid = u.grid
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size < 3:
        raise ConfigError("need at least 3 radii")
    c = np.asarray(np.unravel_index(center, grid.shape)) if np.ndim(center) == 0 else np.asarray(center)
    disp = (grid.multi_index() - c + grid.m // 2) % grid.m - grid.m // 2
    y = disp * grid.h
    dist = np.linalg.norm(y, axis=1)
    ncoef = comb(grid.real_dim + 2, 2)
    scale = np.max(np.abs(u.values))
    floor = 1e-11 * max(scale, 1e-300) if floor is None else floor
    res = []
    for r in radii:
        sel = dist <= r * (1 + 1e-12)
        if sel.sum() < 2 * ncoef:
            raise TooFewPoints(f"ball of radius {r:.3g} holds {sel.sum()} points, need {2 * ncoef}")
        if r >= 0.5 * grid.period:
            raise ConfigError(f"radius {r:.3g} wraps around the torus")
        res.append(quadratic_fit_residual(y[sel] / r, u.values[sel], reweights))
    res = np.asarray(res)
    keep = res > floor
    if keep.sum() < 2:
        return np.inf
    slope = np.polyfit(np.log(radii[keep]), np.log(res[keep]), 1)[0]
    return float(slope - 2.0)


def _lattice_ball_count(d, r):
    """Number of points of Z^d with norm <= r."""
    k = int(np.floor(r))
    axis = np.arange(-k, k + 1) ** 2
    sq = np.zeros(1, dtype=np.int64)
    for _ in range(d):
        sq = (sq[:, None] + axis[None, :]).ravel()
        sq = sq[sq <= r * r + 1e-9]
    return sq.size


def default_radii(grid):
    """Four radii ``r0 * (1, 4/3, 5/3, 2)`` where ``r0`` (a multiple of h/2,
    at least 1.5 h) is the smallest ball holding twice the quadratic coefficients."""
    need = 2 * comb(grid.real_dim + 2, 2)
    r0 = 1.5
    while _lattice_ball_count(grid.real_dim, r0) < need:
        r0 += 0.5
    return grid.h * r0 * np.array([1.0, 4 / 3, 5 / 3, 2.0])


def interior_centers(grid, count, seed):
    rng = np.random.default_rng(seed)
    pts = half_domain(grid)
    return np.sort(rng.choice(pts, size=min(count, pts.size), replace=False))


# ------------------------------------------------------------- experiments


@dataclass
class NormReport:
    sup_u: float
    sup_laplacian: float
    psi_holder: float
    u_c2alpha: float
    decay_exponents: list = field(default_factory=list)

    @property
    def decay_median(self):
        return float(np.median(self.decay_exponents)) if self.decay_exponents else float("nan")

    def to_dict(self):
        out = asdict(self)
        out["decay_median"] = self.decay_median
        return out


def measure(u, psi, background=None, alpha=0.5, alpha0=0.5, centers=20, seed=0, pair_budget=20000):
    grid = u.grid
    psi = psi if isinstance(psi, ScalarField) else ScalarField(grid, psi)
    radii = default_radii(grid)
    try:
        decays = [decay_exponent(u, c, radii) for c in interior_centers(grid, centers, seed)]
    except (TooFewPoints, ConfigError) as exc:
        # grid too coarse for the fitting balls
        log.warning("m=%d: no decay exponents (%s)", grid.m, exc)
        decays = []
    return NormReport(
        sup_u=sup_norm(u),
        sup_laplacian=float(np.max(laplacian(u, background))),
        psi_holder=holder_seminorm(psi, alpha0, pair_budget, seed),
        u_c2alpha=c2alpha_norm(u, background, alpha, pair_budget, seed),
        decay_exponents=decays,
    )


@dataclass
class ExperimentConfig:
    spec: EquationSpec
    background: dict = field(default_factory=lambda: {"kind": "flat"})
    grid_sizes: list = field(default_factory=lambda: [8, 12, 16, 24])
    alpha: float = 0.5
    alpha0: float = 0.5
    seed: int = 0
    output: str = None
    amplitude: float = 0.1
    tol: float = 1e-10
    max_iter: int = 20
    centers: int = 20
    pair_budget: int = 20000

    def __post_init__(self):
        if isinstance(self.spec, dict):
            self.spec = EquationSpec(**self.spec)
        sizes = list(self.grid_sizes)
        if not sizes:
            raise ConfigError("grid_sizes is empty")
        if any(int(m) != m for m in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("grid_sizes must be strictly increasing integers")
        self.grid_sizes = [int(m) for m in sizes]
        _check_alpha(self.alpha)
        _check_alpha(self.alpha0)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        out = asdict(self)
        out["spec"] = self.spec.to_dict()
        return out


def _row(m, h, report=None, norms=None, iters=0):
    nan = float("nan")
    return {
        "grid_m": m,
        "h": h,
        "sup_u": norms.sup_u if norms else nan,
        "sup_lap": norms.sup_laplacian if norms else nan,
        "psi_holder": norms.psi_holder if norms else nan,
        "u_c2alpha": norms.u_c2alpha if norms else nan,
        "decay_alpha_median": norms.decay_median if norms else nan,
        "solve_iters": report.iterations if report else iters,
        "converged": bool(report.converged) if report else False,
    }


def run_experiment(config, amplitude=None):
    """Solve the manufactured problem on every grid and measure it.

    Returns the list of CSV rows (dicts); solver failures yield a row with
    ``converged = False`` and the run continues. Writes ``config.output``
    when set.
    """
    spec = config.spec
    bg = background_from_descriptor(spec.n, config.background)
    amp = config.amplitude if amplitude is None else amplitude
    rows = []
    for m in config.grid_sizes:
        grid = PeriodicGrid(spec.dim, m)
        if grid.size > 500_000:
            log.warning("grid m=%d has %d points; this will be slow", m, grid.size)
        try:
            psi, _ = manufacture(spec, bg, TrigField.standard(spec.n, amp), grid)
            u, report = newton_solve(spec, bg, ScalarField(grid, np.zeros(grid.size)), psi=psi,
                                     tol=config.tol, max_iter=config.max_iter)
            norms = measure(u, psi, bg, config.alpha, config.alpha0, config.centers, config.seed,
                            config.pair_budget)
            rows.append(_row(m, grid.h, report, norms))
        except (NotAdmissible, LineSearchFailed, MaxIterations) as exc:
            log.warning("grid m=%d failed: %s", m, exc)
            rep = getattr(exc, "report", None)
            rows.append(_row(m, grid.h, iters=rep.iterations if rep else 0))
    if config.output:
        write_csv(config.output, rows)
    return rows


def run_sweep(config, amplitudes):
    """``run_experiment`` over a family of manufactured amplitudes (adds an ``amplitude`` column)."""
    rows = []
    for amp in amplitudes:
        for row in run_experiment(ExperimentConfig(**{**asdict(config), "spec": config.spec, "output": None}), amp):
            rows.append({"amplitude": amp, **row})
    if config.output:
        write_csv(config.output, rows, ["amplitude"] + CSV_COLUMNS)
    return rows


def write_csv(path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
