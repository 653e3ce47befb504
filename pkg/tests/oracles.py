"""Independent reference computations used by the tests.

Nothing here calls into the code under test except for plain data types.
"""

from itertools import combinations

import numpy as np


def sigma_enum(k, lam):
    """sigma_k by explicit subset enumeration."""
    lam = list(lam)
    if k == 0:
        return 1.0
    return float(sum(np.prod([lam[i] for i in c]) for c in combinations(range(len(lam)), k)))


def random_herm(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_hpd(rng, n, lo=0.2):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a @ a.conj().T / n + lo * np.eye(n)


def random_spd(rng, d):
    r = rng.normal(size=(d, d))
    return r @ r.T


def block_embed(H):
    A, B = H.real, H.imag
    return np.block([[A, B], [-B, A]])


def inv_sqrt_herm(g):
    w, v = np.linalg.eigh(g)
    return v @ np.diag(w**-0.5) @ v.conj().T


def central_diff(f, x, step):
    """Gradient of a scalar function of a vector by central differences."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2 * step)
    return out


def sym_directional(f, N, E, step=1e-6):
    return (f(N + step * E) - f(N - step * E)) / (2 * step)


def stencil_second(fn, h):
    """Exact value of the 3-point second difference of cos(t) at t = 0."""
    return -(2.0 / h**2) * (1.0 - np.cos(h)) * fn
