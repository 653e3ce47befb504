"""Elementary symmetric polynomials, Garding cones and the sigma_k lemma bounds."""

from dataclasses import asdict, dataclass
from math import comb

import numpy as np

from ._kernels import elementary_symmetric
from .errors import IndexOutOfRange


def eigen_tuple(values):
    """Return ``values`` as a float array sorted in descending order."""
    return np.sort(np.asarray(values, dtype=float), axis=-1)[..., ::-1]


def sigma_all(lam):
    """``(sigma_0, ..., sigma_n)`` for a tuple or a batch ``(..., n)`` of tuples."""
    lam = np.asarray(lam, dtype=float)
    batch = lam.shape[:-1]
    flat = lam.reshape(int(np.prod(batch)), lam.shape[-1])
    out = elementary_symmetric(flat)
    return out.reshape(batch + (lam.shape[-1] + 1,))


def sigma(k, lam):
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise IndexOutOfRange(f"k={k} outside [0, {n}]")
    vals = sigma_all(lam)[..., k]
    return float(vals) if vals.ndim == 0 else vals


def _drop(lam, i):
    n = lam.shape[-1]
    if not 0 <= i < n:
        raise IndexOutOfRange(f"index {i} outside [0, {n})")
    return np.delete(lam, i, axis=-1)


def sigma_reduced(j, i, lam):
    """``sigma_j(lam | i)``: sigma_j of the tuple with entry ``i`` set to zero."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= j <= n - 1:
        raise IndexOutOfRange(f"j={j} outside [0, {n - 1}]")
    return sigma(j, _drop(lam, i))


def reduced_table(lam):
    """``table[..., i, j] = sigma_j(lam | i)`` for all i and j in [0, n-1]."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    rows = [sigma_all(np.delete(lam, i, axis=-1)) for i in range(n)]
    return np.stack(rows, axis=-2)


def sigma_gradient(k, lam):
    """Gradient of sigma_k; component i is ``sigma_{k-1}(lam | i)``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise IndexOutOfRange(f"k={k} outside [1, {n}]")
    return reduced_table(lam)[..., k - 1]


def in_gamma_cone(k, lam):
    """True iff ``sigma_j(lam) > 0`` for every ``j <= k``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise IndexOutOfRange(f"k={k} outside [1, {n}]")
    ok = np.all(sigma_all(lam)[..., 1 : k + 1] > 0, axis=-1)
    return bool(ok) if np.ndim(ok) == 0 else ok


def maclaurin_means(lam):
    """``(sigma_j / C(n, j))**(1/j)`` for j = 1..n; nan where sigma_j <= 0."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    s = sigma_all(lam)[..., 1:]
    j = np.arange(1, n + 1)
    binom = np.array([comb(n, int(t)) for t in j], dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(s > 0, np.abs(s / binom) ** (1.0 / j), np.nan)


# ------------------------------------------------------------------- lemma


def certified_k0(A, n, k):
    """An explicit constant for the sigma_k lemma as a function of (A, n, k).

    Chains used, for lam in Gamma_k with sigma_k^{1/k} >= 1/A and sigma_1 <= A:

    * Maclaurin: sigma_j^{1/j} >= C(n,j)^{1/j} C(n,k)^{-1/k} / A.
    * Upper: sigma_{j-1}(lam|i) <= (n-j+1) sigma_{j-1} <= (n-j+1) C(n,j-1) (A/n)^{j-1}.
    * Lower: sigma_{j-1}(lam|i) >= sigma_{j-1}(lam|1) >= (j/n) sigma_j / lam_1, lam_1 < A.
    * Entries: -(n-2) A <= lam_i <= A.
    """
    cands = [float(A), float(max(n - 2, 0) * A)]
    ck = comb(n, k) ** (1.0 / k)
    for j in range(1, k + 1):
        low = comb(n, j) ** (1.0 / j) / ck / A
        cands.append(1.0 / low)
        if j >= 2:
            cands.append((n - j + 1) * comb(n, j - 1) * (A / n) ** (j - 1))
            cands.append(1.0 / ((j / n) * low**j / A))
    return max(cands)


@dataclass
class LemmaReport:
    hypotheses_hold: bool
    A_used: float
    K0_empirical: float
    K0_certified: float
    conclusion_margins: tuple
    uno_holds: bool
    due_holds: bool
    due_ratio: float

    def to_dict(self):
        return asdict(self)


def lemma_bounds(lam, k, A):
    """Check the hypotheses of the sigma_k lemma for one tuple and measure its conclusions.

    ``K0_empirical`` is the smallest constant making all three conclusions hold
    for this tuple. ``conclusion_margins`` are the slacks of the three
    conclusions evaluated at ``K0_certified`` (see :func:`certified_k0`), so
    they are a real check and not zero by construction. When the hypotheses
    fail the report carries ``hypotheses_hold=False`` and nan margins.
    """
    lam = eigen_tuple(lam)
    n = lam.size
    if not 2 <= k <= n:
        raise IndexOutOfRange(f"k={k} outside [2, {n}]")
    s = sigma_all(lam)
    table = reduced_table(lam)
    cone = bool(np.all(s[1 : k + 1] > 0))
    hyp = cone and s[k] ** (1.0 / k) >= 1.0 / A and s[1] <= A
    k0_cert = certified_k0(A, n, k)
    if not hyp:
        nan = float("nan")
        return LemmaReport(False, float(A), nan, k0_cert, (nan, nan, nan), False, False, nan)

    roots = np.array([s[j] ** (1.0 / j) for j in range(1, k + 1)])
    red = table[:, 1:k]  # sigma_{j-1}(lam|i), j = 2..k
    k0_emp = max(1.0 / roots.min(), red.max(), 1.0 / red.min(), np.abs(lam).max())

    m1 = roots.min() - 1.0 / k0_cert
    m2 = min(k0_cert - red.max(), red.min() - 1.0 / k0_cert)
    m3 = k0_cert - np.abs(lam).max()

    uno = True
    for j in range(2, k + 1):
        upper = (n - j + 1) * s[j - 1]
        mac = (n - j + 1) * comb(n, j - 1) * (s[1] / n) ** (j - 1)
        tol = 1e-12 * max(1.0, abs(mac))
        uno &= bool(np.all(table[:, j - 1] <= upper + tol)) and upper <= mac + tol
    prods = np.array([np.prod(table[:, j - 1]) for j in range(2, k + 1)])
    due = bool(np.all(prods > 0))
    ratio = min(
        prods[j - 2] / s[j] ** (n * (j - 1) / j) for j in range(2, k + 1)
    )
    return LemmaReport(
        True, float(A), float(k0_emp), k0_cert, (float(m1), float(m2), float(m3)), bool(uno), due, float(ratio)
    )


def sample_lemma_tuples(n, k, A, count, rng):
    """Draw ``count`` tuples satisfying the lemma hypotheses (rejection sampling)."""
    out = []
    while len(out) < count:
        batch = 4 * count
        scale = rng.uniform(0.05, 1.0, size=(batch, 1)) * A / n
        lam = rng.normal(loc=0.6, scale=1.0, size=(batch, n)) * scale
        s = sigma_all(lam)
        ok = np.all(s[:, 1 : k + 1] > 0, axis=1)
        ok &= s[:, 1] <= A
        with np.errstate(invalid="ignore"):
            ok &= np.where(ok, np.abs(s[:, k]) ** (1.0 / k), 0.0) >= 1.0 / A
        out.extend(eigen_tuple(lam[ok]))
    return np.array(out[:count])
