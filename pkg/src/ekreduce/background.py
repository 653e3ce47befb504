"""Background geometry on a coordinate chart: metric g, form chi = h, J, psi.

All samplers are vectorised: they take points of shape ``(..., 2n)`` and
return ``(..., n, n)`` complex Hermitian matrices (g, h), ``(..., 2n, 2n)``
real matrices (J), ``(..., 2n, 2n, 2n)`` derivatives
``dJ[..., a, k, l] = d_a J^k_l``, or ``(...)`` scalars (psi).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sym_matrix import as_herm, standard_j


@dataclass(frozen=True)
class BackgroundData:
    n: int
    g: Callable
    h: Callable
    J: Callable
    dJ: Callable
    psi: Callable
    K: float = 10.0
    beta: float = 0.5
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def integrable(self):
        return self.params.get("integrable", True)

    def descriptor(self):
        return {"kind": self.name, **{k: v for k, v in self.params.items() if k != "integrable"}}


def _const_matrix(mat):
    mat = np.asarray(mat)

    def sampler(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(mat, x.shape[:-1] + mat.shape).copy()

    return sampler


def _zero_scalar(x):
    return np.zeros(np.asarray(x).shape[:-1])


def flat_background(n, chi=1.0, psi=None, K=10.0, beta=0.5):
    """Euclidean metric, ``chi = chi * g``, standard J, ``psi`` default zero."""
    eye = np.eye(n, dtype=complex)
    d = 2 * n
    return BackgroundData(
        n=n,
        g=_const_matrix(eye),
        h=_const_matrix(chi * eye),
        J=_const_matrix(standard_j(n)),
        dJ=_const_matrix(np.zeros((d, d, d))),
        psi=psi if psi is not None else _zero_scalar,
        K=K,
        beta=beta,
        name="flat",
        params={"chi": chi},
    )


def _random_herm(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a = as_herm(a)
    return a / np.linalg.norm(a, 2)


def smooth_background(n, amplitude=0.1, seed=0, chi=1.0, K=10.0, beta=0.5):
    """Smoothly varying g, h and psi built from a few random Fourier modes.

    ``g = I + amplitude * sum_q sin(w_q . x + phase_q) B_q / Q`` stays positive
    definite for ``amplitude < 1``.
    """
    rng = np.random.default_rng(seed)
    d = 2 * n
    modes = 3
    wg = rng.normal(size=(modes, d))
    wh = rng.normal(size=(modes, d))
    wp = rng.normal(size=(modes, d))
    pg, ph, pp = (rng.uniform(0, 2 * np.pi, size=modes) for _ in range(3))
    Bg = np.array([_random_herm(rng, n) for _ in range(modes)])
    Bh = np.array([_random_herm(rng, n) for _ in range(modes)])
    eye = np.eye(n)

    def g(x):
        x = np.asarray(x, dtype=float)
        s = np.sin(x @ wg.T + pg) / modes
        return eye + amplitude * np.einsum("...q,qij->...ij", s, Bg)

    def h(x):
        x = np.asarray(x, dtype=float)
        s = np.cos(x @ wh.T + ph) / modes
        return chi * eye + amplitude * np.einsum("...q,qij->...ij", s, Bh)

    def psi(x):
        x = np.asarray(x, dtype=float)
        return amplitude * np.sin(x @ wp.T + pp).mean(axis=-1)

    return BackgroundData(
        n=n,
        g=g,
        h=h,
        J=_const_matrix(standard_j(n)),
        dJ=_const_matrix(np.zeros((d, d, d))),
        psi=psi,
        K=K,
        beta=beta,
        name="smooth",
        params={"amplitude": amplitude, "seed": seed, "chi": chi},
    )


def twisted_structure(n, amplitude=0.3, seed=0):
    """A non-integrable almost complex structure ``J(x) = P(x) J0 P(x)^{-1}``.

    ``P(x) = I + amplitude * sum_a sin(x_a) C_a``, so ``J(0) = J0`` (standard)
    and ``dJ`` is available in closed form. Returns ``(J, dJ)`` samplers.
    """
    rng = np.random.default_rng(seed)
    d = 2 * n
    C = rng.normal(size=(d, d, d)) * amplitude / np.sqrt(d)
    J0 = standard_j(n)

    def P(x):
        return np.eye(d) + np.einsum("...a,aij->...ij", np.sin(x), C)

    def J(x):
        x = np.asarray(x, dtype=float)
        p = P(x)
        return p @ J0 @ np.linalg.inv(p)

    def dJ(x):
        x = np.asarray(x, dtype=float)
        p = P(x)
        pinv = np.linalg.inv(p)
        j = p @ J0 @ pinv
        dP = np.einsum("...a,aij->...aij", np.cos(x), C)
        dPp = dP @ pinv[..., None, :, :]
        return dPp @ j[..., None, :, :] - j[..., None, :, :] @ dPp

    return J, dJ


def almost_complex_background(n, amplitude=0.3, seed=0, chi=1.0, K=10.0, beta=0.5):
    """Flat g and chi with the non-integrable J of :func:`twisted_structure`."""
    base = flat_background(n, chi=chi, K=K, beta=beta)
    J, dJ = twisted_structure(n, amplitude, seed)
    return BackgroundData(
        n=n, g=base.g, h=base.h, J=J, dJ=dJ, psi=base.psi, K=K, beta=beta,
        name="almost-complex",
        params={"amplitude": amplitude, "seed": seed, "chi": chi, "integrable": False},
    )


def weierstrass(t, exponent=0.1, terms=24):
    """``sum_q 2^{-q exponent} cos(2^q t)``, normalised to sup 1: Hölder of
    order ``exponent`` at every point and no better."""
    q = np.arange(terms)
    weights = 2.0 ** (-q * exponent)
    weights /= weights.sum()
    return np.cos(np.asarray(t, dtype=float)[..., None] * 2.0**q) @ weights


def rough_background(n, roughness=0.5, exponent=0.1, terms=24, K=10.0, beta=0.9):
    """Metric ``g = diag(1 + roughness W(x_1), 1, ..., 1)`` with a Weierstrass-type
    ``W(t) = sum_q 2^{-q exponent} cos(2^q t) / sum_q 2^{-q exponent}``.

    W is only Hölder of order ``exponent`` at every point, well below the
    ``beta`` the background claims. Non-scalar so that the psh transform sees it.
    """
    base = flat_background(n, K=K, beta=beta)
    eye = np.eye(n)

    def g(x):
        x = np.asarray(x, dtype=float)
        w = weierstrass(x[..., 0], exponent, terms)
        out = np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()
        out[..., 0, 0] += roughness * w
        return out

    return BackgroundData(
        n=n, g=g, h=base.h, J=base.J, dJ=base.dJ, psi=base.psi, K=K, beta=beta,
        name="rough",
        params={"roughness": roughness, "exponent": exponent, "terms": terms, "K": K, "beta": beta},
    )


def background_from_descriptor(n, desc):
    """Build a background from a JSON-style descriptor ``{"kind": ..., ...}``."""
    desc = dict(desc or {"kind": "flat"})
    kind = desc.pop("kind", "flat")
    builders = {
        "flat": flat_background,
        "smooth": smooth_background,
        "almost-complex": almost_complex_background,
        "rough": rough_background,
    }
    if kind not in builders:
        raise ValueError(f"unknown background kind {kind!r}")
    return builders[kind](n, **desc)


# ------------------------------------------------------------------ helpers


def sample_ball(count, dim, radius, rng):
    """Uniform samples from the Euclidean ball of the given radius."""
    v = rng.normal(size=(count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(count, 1)) ** (1.0 / dim)
    return v * r


def sample_pairs(count, dim, radius, rng):
    """Point pairs for Hölder fitting: half independent uniform pairs, half pairs
    at log-uniform separations in ``[1e-4, 1] * radius``."""
    half = count // 2
    x1 = sample_ball(half, dim, radius, rng)
    y1 = sample_ball(half, dim, radius, rng)
    x2 = sample_ball(count - half, dim, radius, rng)
    v = rng.normal(size=x2.shape)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    sep = radius * 10.0 ** rng.uniform(-4, 0, size=(count - half, 1))
    y2 = x2 + sep * v
    norms = np.linalg.norm(y2, axis=1, keepdims=True)
    y2 = np.where(norms > radius, y2 * radius / norms, y2)
    return np.concatenate([x1, x2]), np.concatenate([y1, y2])


def torus_to_chart(coords, period, n):
    """Map torus coordinates in ``[0, period)^{2n}`` into the chart ball ``B_0.9``."""
    coords = np.asarray(coords, dtype=float)
    half = 0.5 * period
    return 0.9 * (coords - half) / (half * np.sqrt(2 * n))


def validate_background(bg, count=1000, seed=0):
    """Sampled check of the background invariants: metric bounds and Hölder quotients.

    Returns a dict with the metric eigenvalue range, the fitted Hölder
    constants of g, h and J at exponent ``bg.beta``, and an ``ok`` flag
    (``1/K <= g <= K`` and every constant ``<= 1.1 K``).
    """
    rng = np.random.default_rng(seed)
    d = 2 * bg.n
    x, y = sample_pairs(count, d, 1.0, rng)
    gw = np.linalg.eigvalsh(bg.g(x))
    dist = np.linalg.norm(x - y, axis=1) ** bg.beta
    keep = dist > 0
    x, y, dist = x[keep], y[keep], dist[keep]

    def quotient(f):
        diff = f(x) - f(y)
        return float(np.max(np.linalg.norm(diff, ord=2, axis=(-2, -1)) / dist))

    out = {
        "g_min": float(gw.min()),
        "g_max": float(gw.max()),
        "holder_g": quotient(bg.g),
        "holder_h": quotient(bg.h),
        "holder_J": quotient(bg.J),
    }
    K = bg.K
    out["ok"] = bool(
        out["g_min"] >= 1.0 / K
        and out["g_max"] <= K
        and max(out["holder_g"], out["holder_h"], out["holder_J"]) <= 1.1 * K
    )
    return out
