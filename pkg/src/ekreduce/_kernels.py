"""Grid and batch kernels, each with a numba and a numpy implementation.

Grid arrays are C-ordered with shape ``(m,) * d`` (axis 0 slowest) and are
passed around flattened. Every public function dispatches on
:func:`ekreduce._accel.numba_enabled`; the ``*_numba`` / ``*_numpy`` variants
are importable directly for tests and benchmarks.
"""

import numpy as np

from ._accel import njit, numba_enabled


# ---------------------------------------------------------------- stencils


@njit
def _hessian_numba(u, m, d, h, start, stop):
    out = np.empty((stop - start, d, d))
    idx = np.empty(d, np.int64)
    strides = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= m
    inv_h2 = 1.0 / (h * h)
    inv_4h2 = 0.25 * inv_h2
    up = np.empty(d, np.int64)
    dn = np.empty(d, np.int64)
    for p in range(start, stop):
        q = p - start
        r = p
        for a in range(d - 1, -1, -1):
            idx[a] = r % m
            r //= m
        for a in range(d):
            up[a] = ((idx[a] + 1) % m - idx[a]) * strides[a]
            dn[a] = ((idx[a] + m - 1) % m - idx[a]) * strides[a]
        u0 = u[p]
        for a in range(d):
            pa = p + up[a]
            ma = p + dn[a]
            out[q, a, a] = (u[pa] - 2.0 * u0 + u[ma]) * inv_h2
            for b in range(a + 1, d):
                val = (u[pa + up[b]] - u[pa + dn[b]] - u[ma + up[b]] + u[ma + dn[b]]) * inv_4h2
                out[q, a, b] = val
                out[q, b, a] = val
    return out


def _hessian_numpy(u, m, d, h, start=0, stop=None):
    stop = u.size if stop is None else stop
    p = np.arange(start, stop)
    idx = np.stack(np.unravel_index(p, (m,) * d))
    strides = m ** np.arange(d - 1, -1, -1)
    up = ((idx + 1) % m - idx) * strides[:, None]
    dn = ((idx + m - 1) % m - idx) * strides[:, None]
    out = np.empty((p.size, d, d))
    u0 = u[p]
    for a in range(d):
        pa, ma = p + up[a], p + dn[a]
        out[:, a, a] = (u[pa] - 2.0 * u0 + u[ma]) / h**2
        for b in range(a + 1, d):
            val = (u[pa + up[b]] - u[pa + dn[b]] - u[ma + up[b]] + u[ma + dn[b]]) / (4.0 * h**2)
            out[:, a, b] = val
            out[:, b, a] = val
    return out


@njit
def _apply_numba(v, coef, m, d, h):
    size = v.size
    out = np.empty(size)
    idx = np.empty(d, np.int64)
    strides = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= m
    inv_h2 = 1.0 / (h * h)
    inv_4h2 = 0.25 * inv_h2
    up = np.empty(d, np.int64)
    dn = np.empty(d, np.int64)
    for p in range(size):
        r = p
        for a in range(d - 1, -1, -1):
            idx[a] = r % m
            r //= m
        for a in range(d):
            up[a] = ((idx[a] + 1) % m - idx[a]) * strides[a]
            dn[a] = ((idx[a] + m - 1) % m - idx[a]) * strides[a]
        v0 = v[p]
        acc = 0.0
        for a in range(d):
            pa = p + up[a]
            ma = p + dn[a]
            acc += coef[p, a, a] * (v[pa] - 2.0 * v0 + v[ma]) * inv_h2
            for b in range(a + 1, d):
                mixed = (v[pa + up[b]] - v[pa + dn[b]] - v[ma + up[b]] + v[ma + dn[b]]) * inv_4h2
                acc += (coef[p, a, b] + coef[p, b, a]) * mixed
        out[p] = acc
    return out


def _apply_numpy(v, coef, m, d, h, chunk=1 << 15):
    out = np.empty(v.size)
    for start in range(0, v.size, chunk):
        stop = min(start + chunk, v.size)
        out[start:stop] = np.einsum("pab,pab->p", coef[start:stop], _hessian_numpy(v, m, d, h, start, stop))
    return out


def hessian_stencil(u, m, d, h, start=0, stop=None):
    """Central-difference Hessians at grid points ``start..stop-1`` (default all),
    shape ``(stop - start, d, d)``."""
    u = np.ascontiguousarray(u, dtype=np.float64).ravel()
    stop = u.size if stop is None else stop
    if numba_enabled():
        return _hessian_numba(u, m, d, float(h), start, stop)
    return _hessian_numpy(u, m, d, h, start, stop)


def apply_stencil_operator(v, coef, m, d, h):
    """Evaluate ``sum_ab coef[p, a, b] * (D_h^2 v)(p)_ab`` at every grid point."""
    v = np.ascontiguousarray(v, dtype=np.float64).ravel()
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    if numba_enabled():
        return _apply_numba(v, coef, m, d, h)
    return _apply_numpy(v, coef, m, d, h)


# ------------------------------------------------- elementary symmetric polys


@njit
def _esym_numba(lam):
    count, n = lam.shape
    out = np.zeros((count, n + 1))
    for p in range(count):
        out[p, 0] = 1.0
        for i in range(n):
            x = lam[p, i]
            for j in range(i + 1, 0, -1):
                out[p, j] += x * out[p, j - 1]
    return out


def _esym_numpy(lam):
    count, n = lam.shape
    out = np.zeros((count, n + 1))
    out[:, 0] = 1.0
    for i in range(n):
        x = lam[:, i]
        out[:, 1 : i + 2] = out[:, 1 : i + 2] + x[:, None] * out[:, 0 : i + 1]
    return out


def elementary_symmetric(lam):
    """All of ``sigma_0 .. sigma_n`` for a batch of tuples, shape ``(count, n + 1)``.

    Uses the prefix-product recurrence for ``prod_i (1 + lam_i t)``.
    """
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if lam.ndim != 2:
        raise ValueError("expected a (count, n) array")
    if numba_enabled():
        return _esym_numba(lam)
    return _esym_numpy(lam)


# --------------------------------------------------------- Hölder quotients


@njit
def _holder_numba(values, idx, pairs, m, h, alpha):
    best = 0.0
    d = idx.shape[1]
    for t in range(pairs.shape[0]):
        p = pairs[t, 0]
        q = pairs[t, 1]
        if p == q:
            continue
        dist2 = 0.0
        for a in range(d):
            k = abs(idx[p, a] - idx[q, a])
            if m - k < k:
                k = m - k
            dist2 += (k * h) ** 2
        quot = abs(values[p] - values[q]) / dist2 ** (0.5 * alpha)
        if quot > best:
            best = quot
    return best


def _holder_numpy(values, idx, pairs, m, h, alpha):
    p, q = pairs[:, 0], pairs[:, 1]
    keep = p != q
    p, q = p[keep], q[keep]
    if p.size == 0:
        return 0.0
    k = np.abs(idx[p] - idx[q])
    k = np.minimum(k, m - k)
    dist = np.sqrt(((k * h) ** 2).sum(axis=1))
    return float(np.max(np.abs(values[p] - values[q]) / dist**alpha))


def holder_pair_max(values, idx, pairs, m, h, alpha):
    """Max of ``|v(p) - v(q)| / dist(p, q)**alpha`` over index pairs, torus metric."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    pairs = np.ascontiguousarray(pairs, dtype=np.int64)
    if numba_enabled():
        return float(_holder_numba(values, idx, pairs, m, float(h), float(alpha)))
    return _holder_numpy(values, idx, pairs, m, h, alpha)
