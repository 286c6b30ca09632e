"""Hot inner loops, each with a numba version and a pure-numpy twin.

The module-level names (``omega_inverse_cdf``, ``peel_hull_layers``,
``acg_envelope_b``) dispatch to numba unless ``COVSHARE_DISABLE_NUMBA`` is
set.  Both twins stay importable so tests and the benchmark can compare them.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# log-density drop that delimits the sampling window for omega
OMEGA_WINDOW_DROP = 40.0
_BISECT_ITERS = 80


# --------------------------------------------------------------------------
# omega full conditional: log f(w) = (n/2) * (log(1 - w) + c * w) on [0, 1)
# --------------------------------------------------------------------------


def _omega_logf(w, c, n):
    return 0.5 * n * (math.log1p(-w) + c * w)


def _omega_window(c, n):
    """Interval around the mode outside which the density is below exp(-DROP)."""
    mode = (c - 1.0) / c if c > 1.0 else 0.0
    top = _omega_logf(mode, c, n)
    lo = 0.0
    if mode > 0.0 and top - _omega_logf(0.0, c, n) > OMEGA_WINDOW_DROP:
        a, b = 0.0, mode
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (a + b)
            if top - _omega_logf(mid, c, n) > OMEGA_WINDOW_DROP:
                a = mid
            else:
                b = mid
        lo = a
    a, b = mode, 1.0
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (a + b)
        if mid >= 1.0:
            break
        if top - _omega_logf(mid, c, n) > OMEGA_WINDOW_DROP:
            b = mid
        else:
            a = mid
    return lo, b


def omega_inverse_cdf_numpy(c, n, grid, u):
    lo, hi = _omega_window(c, n)
    h = (hi - lo) / grid
    mids = lo + h * (np.arange(grid) + 0.5)
    logf = 0.5 * n * (np.log1p(-mids) + c * mids)
    w = np.exp(logf - logf.max())
    cdf = np.cumsum(w)
    target = u * cdf[-1]
    j = int(np.searchsorted(cdf, target, side="left"))
    j = min(j, grid - 1)
    prev = cdf[j - 1] if j > 0 else 0.0
    frac = (target - prev) / w[j] if w[j] > 0 else 0.5
    out = lo + h * (j + min(max(frac, 0.0), 1.0))
    return min(out, np.nextafter(1.0, 0.0))


_omega_logf_nb = njit(cache=True)(_omega_logf)


@njit(cache=True)
def _omega_window_nb(c, n):
    mode = (c - 1.0) / c if c > 1.0 else 0.0
    top = _omega_logf_nb(mode, c, n)
    lo = 0.0
    if mode > 0.0 and top - _omega_logf_nb(0.0, c, n) > OMEGA_WINDOW_DROP:
        a, b = 0.0, mode
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (a + b)
            if top - _omega_logf_nb(mid, c, n) > OMEGA_WINDOW_DROP:
                a = mid
            else:
                b = mid
        lo = a
    a, b = mode, 1.0
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (a + b)
        if mid >= 1.0:
            break
        if top - _omega_logf_nb(mid, c, n) > OMEGA_WINDOW_DROP:
            b = mid
        else:
            a = mid
    return lo, b


@njit(cache=True)
def omega_inverse_cdf_numba(c, n, grid, u):
    lo, hi = _omega_window_nb(c, n)
    h = (hi - lo) / grid
    logf = np.empty(grid)
    top = -np.inf
    for j in range(grid):
        m = lo + h * (j + 0.5)
        logf[j] = 0.5 * n * (math.log1p(-m) + c * m)
        if logf[j] > top:
            top = logf[j]
    w = np.empty(grid)
    total = 0.0
    for j in range(grid):
        w[j] = math.exp(logf[j] - top)
        total += w[j]
    target = u * total
    acc = 0.0
    j = grid - 1
    prev = -1.0
    for i in range(grid):
        if acc + w[i] >= target:
            j = i
            prev = acc
            break
        acc += w[i]
    if prev < 0.0:
        prev = total - w[grid - 1]
    frac = (target - prev) / w[j] if w[j] > 0 else 0.5
    frac = min(max(frac, 0.0), 1.0)
    out = lo + h * (j + frac)
    return min(out, np.nextafter(1.0, 0.0))


# --------------------------------------------------------------------------
# convex hull peeling of a planar sample
# --------------------------------------------------------------------------


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _hull_numpy(xs, ys, order):
    """Monotone chain over indices in ``order`` (lexicographically sorted)."""
    lower = []
    for i in order:
        while len(lower) >= 2 and _cross(
            xs[lower[-2]], ys[lower[-2]], xs[lower[-1]], ys[lower[-1]], xs[i], ys[i]
        ) <= 0:
            lower.pop()
        lower.append(i)
    upper = []
    for i in order[::-1]:
        while len(upper) >= 2 and _cross(
            xs[upper[-2]], ys[upper[-2]], xs[upper[-1]], ys[upper[-1]], xs[i], ys[i]
        ) <= 0:
            upper.pop()
        upper.append(i)
    if len(order) == 1:
        return [order[0]]
    return lower[:-1] + upper[:-1]


def peel_hull_layers_numpy(xs, ys, min_keep):
    """Peel whole hull-vertex layers while at least ``min_keep`` points survive.

    Returns (alive mask, number of layers removed).
    """
    order = list(np.lexsort((ys, xs)))
    alive = np.ones(len(xs), dtype=np.bool_)
    n_alive = len(xs)
    layers = 0
    while n_alive > 0:
        hull = _hull_numpy(xs, ys, order)
        drop = set(hull)
        if n_alive - len(drop) < min_keep:
            break
        for i in drop:
            alive[i] = False
        order = [i for i in order if alive[i]]
        n_alive -= len(drop)
        layers += 1
    return alive, layers


@njit(cache=True)
def _hull_nb(xs, ys, order, m, stack):
    k = 0
    for t in range(m):
        i = order[t]
        while k >= 2:
            a = stack[k - 2]
            b = stack[k - 1]
            if (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]) <= 0:
                k -= 1
            else:
                break
        stack[k] = i
        k += 1
    if m == 1:
        return 1
    base = k
    for t in range(m - 2, -1, -1):
        i = order[t]
        while k >= base + 1:
            a = stack[k - 2]
            b = stack[k - 1]
            if (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]) <= 0:
                k -= 1
            else:
                break
        stack[k] = i
        k += 1
    # lower[:-1] + upper[:-1]: the last lower point is the first upper point
    return k - 1


@njit(cache=True)
def _peel_nb(xs, ys, order, min_keep):
    n = xs.shape[0]
    alive = np.ones(n, dtype=np.bool_)
    stack = np.empty(2 * n + 2, dtype=np.int64)
    cur = order.copy()
    m = n
    layers = 0
    while m > 0:
        k = _hull_nb(xs, ys, cur, m, stack)
        dropped = 0
        mark = np.zeros(n, dtype=np.bool_)
        for t in range(k):
            if not mark[stack[t]]:
                mark[stack[t]] = True
                dropped += 1
        if m - dropped < min_keep:
            break
        w = 0
        for t in range(m):
            i = cur[t]
            if mark[i]:
                alive[i] = False
            else:
                cur[w] = i
                w += 1
        m = w
        layers += 1
    return alive, layers


def peel_hull_layers_numba(xs, ys, min_keep):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    order = np.lexsort((ys, xs)).astype(np.int64)
    return _peel_nb(xs, ys, order, int(min_keep))


# --------------------------------------------------------------------------
# angular-central-Gaussian envelope: b solves sum 1 / (b + 2 lam_i) = 1
# --------------------------------------------------------------------------

_ACG_ITERS = 100


def acg_envelope_b_numpy(lam, n_flat, lam_flat, d):
    """Bisection on (0, d]; ``n_flat`` extra eigenvalues all equal ``lam_flat``."""
    lam = np.asarray(lam, dtype=np.float64)
    lo, hi = 0.0, float(d)
    for _ in range(_ACG_ITERS):
        mid = 0.5 * (lo + hi)
        if np.sum(1.0 / (mid + 2.0 * lam)) + n_flat / (mid + 2.0 * lam_flat) > 1.0:
            lo = mid
        else:
            hi = mid
    return max(0.5 * (lo + hi), 1e-300)


@njit(cache=True)
def _acg_b_nb(lam, n_flat, lam_flat, d):
    lo, hi = 0.0, d
    for _ in range(_ACG_ITERS):
        mid = 0.5 * (lo + hi)
        tot = n_flat / (mid + 2.0 * lam_flat)
        for i in range(lam.shape[0]):
            tot += 1.0 / (mid + 2.0 * lam[i])
        if tot > 1.0:
            lo = mid
        else:
            hi = mid
    return max(0.5 * (lo + hi), 1e-300)


def acg_envelope_b_numba(lam, n_flat, lam_flat, d):
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    return _acg_b_nb(lam, float(n_flat), float(lam_flat), float(d))


if USE_NUMBA:
    omega_inverse_cdf = omega_inverse_cdf_numba
    peel_hull_layers = peel_hull_layers_numba
    acg_envelope_b = acg_envelope_b_numba
else:
    omega_inverse_cdf = omega_inverse_cdf_numpy
    peel_hull_layers = peel_hull_layers_numpy
    acg_envelope_b = acg_envelope_b_numpy
