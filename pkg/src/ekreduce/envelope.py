"""Concave envelope of F over an admissible set, and the globalized operator Phi.

``Fbar(N, x) = inf { L(N) : L affine, DL in H, L >= F(., x) on E }`` where H
is the spectral box of symmetric matrices with eigenvalues in
``[lam, Lam]``. By minimax this equals

    max_{B in E}  F(B, x) + lam tr((N - B)^+) - Lam tr((N - B)^-)

which is what the "spectral" route evaluates exactly for determinant-type F
on an eigenvalue box (the optimal B is diagonal in the eigenbasis of N). The
"dual" route works for any F: it discretizes E by a Sobol sample plus the
box corners and runs projected subgradient descent over A in H on

    tr(A N) + max_{B in sample} (F(B, x) - tr(A B)).
"""

import json
import threading
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq
from scipy.stats import qmc

from .background import flat_background, sample_pairs
from .errors import ConfigError, OptimizerDiverged
from .operators import (
    DILATION,
    ConeBox,
    EigenBox,
    F_gradient,
    build_S,
    build_T,
    default_set,
    ellipticity_bounds,
    evaluate_F,
    fd_gradient,
)
from .sym_matrix import as_herm, as_sym, iota, operator_norm

CACHE_QUANTUM = 1e-9


@dataclass(frozen=True)
class GradientSet:
    lam: float
    Lam: float

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ConfigError("GradientSet needs 0 < lambda <= Lambda")

    def contains(self, A, tol=1e-12):
        w = np.linalg.eigvalsh(as_sym(A))
        ok = (w[..., 0] >= self.lam - tol) & (w[..., -1] <= self.Lam + tol)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def project(self, A):
        w, V = np.linalg.eigh(as_sym(A))
        w = np.clip(w, self.lam, self.Lam)
        return (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)

    def min_trace(self, M):
        """``min_{A in H} tr(A M) = lam tr(M^+) - Lam tr(M^-)``."""
        w = np.linalg.eigvalsh(as_sym(M))
        return phi_sum(w, self.lam, self.Lam)


def phi_sum(w, lam, Lam):
    return np.sum(lam * np.maximum(w, 0.0) + Lam * np.minimum(w, 0.0), axis=-1)


@dataclass
class DualSettings:
    samples: int = 4096
    iterations: int = 500
    step: Optional[float] = None
    tol: float = 1e-8
    seed: int = 0


@dataclass
class EnvelopeContext:
    """Everything needed to evaluate Fbar.

    ``F(B, x)`` is batched over B. For the spectral route F must equal
    ``scale(x) * det(B)^{1/2n} + offset(x)`` on the (non-relative) EigenBox.
    """

    n: int
    setE: object
    gradient_set: GradientSet
    F: Callable
    dF: Optional[Callable] = None
    route: str = "dual"
    scale: Optional[Callable] = None
    offset: Optional[Callable] = None
    K: float = 10.0
    beta: float = 0.5
    dual: DualSettings = field(default_factory=DualSettings)
    use_cache: bool = True

    def __post_init__(self):
        if self.route not in ("spectral", "dual"):
            raise ConfigError(f"unknown envelope route {self.route!r}")
        if self.route == "spectral" and not (
            isinstance(self.setE, EigenBox) and self.setE.reference_metric is None
        ):
            raise ConfigError("the spectral route needs a plain EigenBox")
        self._cache = {}
        self._lock = threading.Lock()
        self._sample = None
        self._sample_F = {}

    @property
    def dim(self):
        return 2 * self.n

    # ------------------------------------------------------------ dual data

    def dual_sample(self):
        if self._sample is None:
            self._sample = dual_sample_set(self.setE, self.dim, self.dual.samples, self.dual.seed)
        return self._sample

    def sample_values(self, x):
        key = _quantize(x)
        vals = self._sample_F.get(key)
        if vals is None:
            D = self.dual_sample()
            vals = np.asarray(self.F(D, np.broadcast_to(x, (len(D), self.dim))), dtype=float)
            self._sample_F[key] = vals
        return vals

    def clear_cache(self):
        with self._lock:
            self._cache.clear()
            self._sample_F.clear()


def _quantize(a):
    return np.round(np.asarray(a, dtype=float) / CACHE_QUANTUM).astype(np.int64).tobytes()


def _ma_F(n, scale, offset):
    def F(B, x):
        w = np.linalg.eigvalsh(as_sym(B))
        val = np.exp(np.mean(np.log(np.maximum(w, 1e-300)), axis=-1))
        if scale is not None:
            val = scale(x) * val
        if offset is not None:
            val = val + offset(x)
        return val

    return F


def ma_context(n, C0=4.0, K=10.0, beta=0.5, scale=None, offset=None, route="spectral", gradient_set=None, dual=None):
    """Envelope of ``scale(x) det(B)^{1/2n} + offset(x)`` over ``C0^{-1} I <= B <= C0 I``.

    The default gradient set is the analytic ellipticity range
    ``[(1/2n) C0^{-2}, (1/2n) C0^2]`` (valid for ``scale == 1``).
    """
    setE = EigenBox(1.0 / C0, C0)
    H = gradient_set or GradientSet((1.0 / (2 * n)) / C0**2, (1.0 / (2 * n)) * C0**2)
    F = _ma_F(n, scale, offset)

    def dF(B, x):
        w, V = np.linalg.eigh(as_sym(B))
        val = np.exp(np.mean(np.log(w), axis=-1))
        if scale is not None:
            val = scale(x) * val
        coef = val[..., None] / (2 * n * w)
        return (V * coef[..., None, :]) @ np.swapaxes(V, -1, -2)

    return EnvelopeContext(
        n=n, setE=setE, gradient_set=H, F=F, dF=dF, route=route, scale=scale, offset=offset,
        K=K, beta=beta, dual=dual or DualSettings(),
    )


def family_context(spec, background=None, setE=None, gradient_set=None, route=None, dual=None, samples=2000, seed=0):
    """Envelope context for an equation family on its default admissible set.

    Monge-Ampère type families use the exact spectral route. The others use
    the sampled dual with a gradient set widened by 10% around the sampled
    ellipticity range.
    """
    bg = background or flat_background(spec.n)
    setE = setE or default_set(spec, bg)
    if spec.base == "ma" and isinstance(setE, EigenBox) and setE.reference_metric is None:
        C0 = max(setE.hi, 1.0 / setE.lo)
        return ma_context(spec.n, C0=C0, K=bg.K, beta=bg.beta, route=route or "spectral",
                          gradient_set=gradient_set, dual=dual)
    if gradient_set is None:
        lo, hi = ellipticity_bounds(spec, setE, samples, bg, seed=seed)
        gradient_set = GradientSet(lo / DILATION, hi * DILATION)
    return EnvelopeContext(
        n=spec.n,
        setE=setE,
        gradient_set=gradient_set,
        F=lambda B, x: evaluate_F(spec, B, x, bg),
        dF=lambda B, x: F_gradient(spec, B, x, bg),
        route=route or "dual",
        K=bg.K,
        beta=bg.beta,
        dual=dual or DualSettings(),
    )


# ------------------------------------------------------------ sample sets


def _skew_from(params, d):
    out = np.zeros(params.shape[:-1] + (d, d))
    iu = np.triu_indices(d, 1)
    out[..., iu[0], iu[1]] = params
    return out - np.swapaxes(out, -1, -2)


def _herm_from(params, n):
    out = np.zeros(params.shape[:-1] + (n, n), dtype=complex)
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    out[..., iu[0], iu[1]] = params[..., :m] + 1j * params[..., m : 2 * m]
    out = out + np.conj(np.swapaxes(out, -1, -2))
    idx = np.arange(n)
    out[..., idx, idx] = params[..., 2 * m :]
    return out


def _corners(lo, hi, dim):
    grid = np.array(np.meshgrid(*([[lo, hi]] * dim), indexing="ij")).reshape(dim, -1).T
    return grid


def _relative_from(lam, U, g):
    L = np.linalg.cholesky(as_herm(g))
    H = L @ U @ (lam[..., None] * np.conj(np.swapaxes(U, -1, -2))) @ np.conj(L.T)
    return iota(2.0 * as_herm(H))


def dual_sample_set(setE, dim, count, seed=0):
    """Deterministic low-discrepancy sample of E plus the corners of its eigenvalue box."""
    n = dim // 2
    if isinstance(setE, EigenBox) and setE.reference_metric is None:
        nskew = dim * (dim - 1) // 2
        pts = qmc.Sobol(dim + nskew, scramble=True, seed=seed).random(count)
        w = setE.lo + (setE.hi - setE.lo) * pts[:, :dim]
        Q = expm(_skew_from(np.pi * (2 * pts[:, dim:] - 1), dim))
        body = as_sym(Q @ (w[..., None] * np.swapaxes(Q, -1, -2)))
        corners = np.array([np.diag(c) for c in _corners(setE.lo, setE.hi, dim)])
        return np.concatenate([body, corners])

    g = setE.reference_metric if setE.reference_metric is not None else np.eye(n)
    if isinstance(setE, ConeBox):
        lo, hi = -2 * setE.K0, 2 * setE.K0
        accept = setE.lam_ok
    else:
        lo, hi = setE.lo, setE.hi

        def accept(lam):
            return np.ones(len(lam), bool)

    sob = qmc.Sobol(n + n * n, scramble=True, seed=seed)
    chunks, got = [], 0
    while got < count:
        pts = sob.random(max(count, 1024))
        lam = lo + (hi - lo) * pts[:, :n]
        keep = accept(lam)
        chunks.append(pts[keep])
        got += int(keep.sum())
    pts = np.concatenate(chunks)[:count]
    lam = lo + (hi - lo) * pts[:, :n]
    U = expm(1j * _herm_from(np.pi * (2 * pts[:, n:] - 1), n))
    body = _relative_from(lam, U, g)
    corners = _corners(lo, hi, n)
    corners = corners[accept(corners)]
    eye = np.broadcast_to(np.eye(n, dtype=complex), (len(corners), n, n))
    return np.concatenate([body, _relative_from(corners, eye, g)])


# --------------------------------------------------------------- evaluation


def _spectral_value(nu, lo, hi, lam, Lam, w=1.0, offset=0.0):
    """Exact ``max_b w prod(b)^{1/d} + sum phi(nu - b)`` over ``b in [lo, hi]^d``."""
    d = nu.size

    def b_of(s):
        return np.clip(np.clip(nu, s / (d * Lam), s / (d * lam)), lo, hi)

    def gap(s):
        return w * np.exp(np.mean(np.log(b_of(s)))) - s

    a, b = w * lo, w * hi
    ga, gb = gap(a), gap(b)
    if ga <= 0:
        s = a
    elif gb >= 0:
        s = b
    else:
        s = brentq(gap, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    bb = b_of(s)
    return w * np.exp(np.mean(np.log(bb))) + phi_sum(nu - bb, lam, Lam) + offset


def _start_matrix(ctx, N, x):
    D = ctx.dual_sample()
    if ctx.setE.contains(N, DILATION):
        B = N
    else:
        idx = int(np.argmin(np.sum((D - N) ** 2, axis=(-2, -1))))
        B = D[idx]
    try:
        if ctx.dF is not None:
            A = ctx.dF(B, x)
        else:
            A = fd_gradient(lambda M: ctx.F(M, x), B)
    except ValueError:
        A = 0.5 * (ctx.gradient_set.lam + ctx.gradient_set.Lam) * np.eye(ctx.dim)
    return ctx.gradient_set.project(A)


def _dual_value(ctx, N, x):
    D = ctx.dual_sample()
    vals = ctx.sample_values(x)
    if ctx.setE.contains(N):
        # N itself as a support point makes the value exact on E for concave F
        D = np.concatenate([D, N[None]])
        vals = np.append(vals, float(ctx.F(N, x)))
    Dflat = D.reshape(len(D), -1)
    H = ctx.gradient_set
    d = ctx.dim
    A = _start_matrix(ctx, N, x)
    step0 = ctx.dual.step or 0.5 * max(H.Lam - H.lam, 1e-3 * H.Lam) * np.sqrt(d)
    Nflat = N.ravel()
    best = np.inf
    for t in range(1, ctx.dual.iterations + 1):
        inner = vals - Dflat @ A.ravel()
        j = int(np.argmax(inner))
        obj = float(Nflat @ A.ravel() + inner[j])
        if obj < best:
            best = obj
        grad = N - D[j]
        gn = np.linalg.norm(grad)
        if gn <= ctx.dual.tol:
            break
        A = H.project(A - (step0 / np.sqrt(t)) * grad / gn)
    if not np.isfinite(best):
        raise OptimizerDiverged("dual envelope objective is not finite")
    return best


def envelope_eval(ctx, N, x):
    """Fbar(N, x) for a single symmetric N and chart point x."""
    N = as_sym(N)
    x = np.asarray(x, dtype=float)
    if N.ndim > 2:
        flatN = N.reshape((-1,) + N.shape[-2:])
        flatx = np.broadcast_to(x, N.shape[:-2] + (ctx.dim,)).reshape(-1, ctx.dim)
        out = np.array([envelope_eval(ctx, a, b) for a, b in zip(flatN, flatx)])
        return out.reshape(N.shape[:-2])
    key = None
    if ctx.use_cache:
        key = (_quantize(N), _quantize(x))
        with ctx._lock:
            hit = ctx._cache.get(key)
        if hit is not None:
            return hit
    if ctx.route == "spectral":
        H = ctx.gradient_set
        w = 1.0 if ctx.scale is None else float(ctx.scale(x))
        o = 0.0 if ctx.offset is None else float(ctx.offset(x))
        nu = np.linalg.eigvalsh(N)
        val = float(_spectral_value(nu, ctx.setE.lo, ctx.setE.hi, H.lam, H.Lam, w, o))
    else:
        val = _dual_value(ctx, N, x)
    if key is not None:
        with ctx._lock:
            ctx._cache[key] = val
    return val


def support_value(ctx, A, x):
    """``max_{B in sample} F(B, x) - tr(A B)`` over the dual sample set."""
    D = ctx.dual_sample()
    return float(np.max(ctx.sample_values(x) - D.reshape(len(D), -1) @ np.ravel(A)))


def sampled_primal(ctx, N, x):
    """Lower bound ``max_{B in sample} F(B) + min_{A in H} tr(A (N - B))``."""
    D = ctx.dual_sample()
    return float(np.max(ctx.sample_values(x) + ctx.gradient_set.min_trace(N - D)))


def phi_eval(ctx, spec, background, N, x):
    """``Phi(N, x) = Fbar(S(x) + T(N, x), x)``."""
    bg = background or flat_background(spec.n)
    M = build_S(spec, x, bg) + build_T(spec, x, N, bg)
    return envelope_eval(ctx, M, x)


def phi_constants(ctx, K):
    """``(lam / K, 2 K n Lam, 5 Lam K n)``: ellipticity and Hölder constants of Phi."""
    H = ctx.gradient_set
    n = ctx.n
    return H.lam / K, 2 * K * n * H.Lam, 5 * H.Lam * K * n


def normalization_shift(ctx, spec, background=None, f0=None, lam_phi=None):
    """Solve ``Phi(t0 I, 0) = f(0)`` for t0 and check ``|t0| <= |Phi(0,0) - f(0)| / lam``.

    Returns ``(t0, bound)``. The bound uses ``lam_phi`` (default: the gradient
    set's lower eigenvalue divided by the T norm constant 2).
    """
    from .operators import equation_rhs

    bg = background or flat_background(spec.n)
    x0 = np.zeros(spec.dim)
    f0 = float(equation_rhs(spec, x0, bg)) if f0 is None else f0
    eye = np.eye(spec.dim)

    def h(t):
        return phi_eval(ctx, spec, bg, t * eye, x0) - f0

    h0 = h(0.0)
    lam_phi = lam_phi or ctx.gradient_set.lam / 2.0
    bound = abs(h0) / lam_phi
    if h0 == 0:
        return 0.0, bound
    span = max(bound, 1e-6) * 1.01
    t0 = brentq(h, -span, span, xtol=1e-12, rtol=1e-12)
    return float(t0), bound


# ------------------------------------------------------------ certification


@dataclass
class EnvelopeReport:
    trials: int
    seed: int
    tol: float
    margins: dict
    passed: bool
    worst: dict = field(default_factory=dict)
    gradient_set: tuple = ()
    route: str = ""

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _random_sym(rng, d, lo, hi):
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    q = q * np.sign(np.diag(r))
    w = rng.uniform(lo, hi, size=d)
    return as_sym(q @ np.diag(w) @ q.T)


def verify_envelope(ctx, trials=500, seed=0, tol=1e-6, radius=1.0):
    """Randomized check of the four envelope properties.

    (i) concavity and ``Fbar = F`` on E; (ii) Lipschitz constant ``2 n Lam``;
    (iii) ``lam ||P|| <= Fbar(N + P) - Fbar(N) <= 2 n Lam ||P||`` for P >= 0;
    (iv) ``|Fbar(N, x) - Fbar(N, y)| <= K |x - y|^beta``.
    Margins are slacks (>= 0 means satisfied); the worst triple is recorded.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    d = ctx.dim
    H = ctx.gradient_set
    lip = 2 * ctx.n * H.Lam
    span = max(ctx.setE.hi, 2.0) if isinstance(ctx.setE, EigenBox) else 4.0 * getattr(ctx.setE, "K0", 1.0)
    names = ("concavity", "equality", "lipschitz", "ellipticity_lower", "ellipticity_upper", "holder")
    margins = {k: np.inf for k in names}
    worst = {}

    def record(name, value, triple):
        if value < margins[name]:
            margins[name] = float(value)
            worst[name] = triple

    inside = ctx.setE.sample(trials, d, rng)
    xs, ys = sample_pairs(trials, d, radius, rng)
    for t in range(trials):
        x, y = xs[t], ys[t]
        N1 = _random_sym(rng, d, -span, 2 * span)
        N2 = _random_sym(rng, d, -span, 2 * span)
        f1, f2 = envelope_eval(ctx, N1, x), envelope_eval(ctx, N2, x)
        mid = envelope_eval(ctx, 0.5 * (N1 + N2), x)
        record("concavity", mid - 0.5 * (f1 + f2), {"N1": N1, "N2": N2, "x": x})

        B = inside[t]
        eq = abs(envelope_eval(ctx, B, x) - float(ctx.F(B, x)))
        record("equality", -eq, {"N": B, "x": x})

        X = as_sym(rng.normal(size=(d, d)))
        X *= rng.uniform(0.01, 1.0) / operator_norm(X)
        diff = abs(envelope_eval(ctx, N1 + X, x) - f1)
        record("lipschitz", lip * operator_norm(X) - diff, {"N": N1, "X": X, "x": x})

        R = rng.normal(size=(d, d))
        P = R @ R.T
        P *= rng.uniform(0.01, 1.0) / operator_norm(P)
        inc = envelope_eval(ctx, N1 + P, x) - f1
        nP = operator_norm(P)
        record("ellipticity_lower", inc - H.lam * nP, {"N": N1, "P": P, "x": x})
        record("ellipticity_upper", lip * nP - inc, {"N": N1, "P": P, "x": x})

        dist = np.linalg.norm(x - y) ** ctx.beta
        dx = abs(f1 - envelope_eval(ctx, N1, y))
        record("holder", ctx.K * dist - dx, {"N": N1, "x": x, "y": y})

    passed = all(v >= -tol for v in margins.values())
    return EnvelopeReport(
        trials=trials, seed=seed, tol=tol, margins=margins, passed=passed,
        worst={k: v for k, v in worst.items() if margins[k] < -tol},
        gradient_set=(H.lam, H.Lam), route=ctx.route,
    )


@dataclass
class PhiReport:
    increment_min: float
    increment_max: float
    holder_max: float
    constants: tuple
    K: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def verify_phi(ctx, spec, background=None, trials=200, seed=0, K=None, slack=0.1):
    """Fit Phi's ellipticity and Hölder constants and compare them one-sidedly
    with ``(lam / K, 2 K n Lam, 5 Lam K n)`` inside a ``slack`` margin."""
    bg = background or flat_background(spec.n)
    K = K or 2.0
    rng = np.random.default_rng(seed)
    d = spec.dim
    lo, hi, hol = np.inf, 0.0, 0.0
    xs, ys = sample_pairs(trials, d, 1.0, rng)
    for t in range(trials):
        x = xs[t]
        N = as_sym(rng.normal(size=(d, d)))
        R = rng.normal(size=(d, d))
        P = R @ R.T
        P *= rng.uniform(0.01, 0.1) / operator_norm(P)
        base = phi_eval(ctx, spec, bg, N, x)
        ratio = (phi_eval(ctx, spec, bg, N + P, x) - base) / operator_norm(P)
        lo, hi = min(lo, ratio), max(hi, ratio)
        dist = np.linalg.norm(x - ys[t]) ** ctx.beta
        if dist > 0:
            q = abs(base - phi_eval(ctx, spec, bg, N, ys[t])) / ((operator_norm(N) + 1) * dist)
            hol = max(hol, q)
    consts = phi_constants(ctx, K)
    passed = lo >= (1 - slack) * consts[0] and hi <= (1 + slack) * consts[1] and hol <= (1 + slack) * consts[2]
    return PhiReport(float(lo), float(hi), float(hol), consts, float(K), bool(passed))
