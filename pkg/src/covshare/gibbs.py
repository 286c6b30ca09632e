"""Gibbs sampler for one group's projected spiked covariance given V.

Everything a sweep needs is s-dimensional: with A = V^T S V,
tr(Sigma^{-1} S) = (tr S - sum_i omega_i o_i^T A o_i) / sigma2.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular
from scipy.optimize import brentq

from . import kernels
from .model import (
    FullBasis,
    GroupSpikeParams,
    ModelError,
    NumericalError,
    SubspaceBasis,
    projected_scatter,
)


class DegeneratePosteriorError(NumericalError):
    """A conditional has no proper density (e.g. nonpositive inverse-gamma rate)."""


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 2
    seed: int = 0
    omega_grid: int = 1024

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.omega_grid < 256:
            raise ValueError("omega_grid must be >= 256")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass
class GibbsChain:
    """Posterior draws stored column-wise; ``draws`` rebuilds the records."""

    sigma2: np.ndarray  # (m,)
    eigvecs: np.ndarray  # (m, s, r)
    omega: np.ndarray  # (m, r)
    iterations: np.ndarray  # (m,) sweep index of each kept draw
    group_id: int = 0
    config: ChainConfig = field(default_factory=ChainConfig)

    def __len__(self):
        return self.sigma2.shape[0]

    def draw(self, i):
        return GroupSpikeParams(self.sigma2[i], self.eigvecs[i], self.omega[i])

    @property
    def draws(self):
        return [self.draw(i) for i in range(len(self))]

    @property
    def lambdas(self):
        return self.omega / (1.0 - self.omega)


@dataclass(frozen=True)
class AngleRatioSummary:
    angle: float
    log_ratio: float


@dataclass(frozen=True)
class PosteriorRegion:
    vertices: np.ndarray  # (m, 2), counter-clockwise
    coverage_target: float
    retained_count: int
    total_count: int

    def contains(self, point, tol=1e-12):
        return point_in_convex_polygon(self.vertices, point, tol)


# ---------------------------------------------------------------------------
# conditionals
# ---------------------------------------------------------------------------


def _quad_forms(a, o):
    return np.sum(o * (a @ o), axis=0)


def _sigma2_draw(rng, tr_s, a, o, omega, n, p):
    rate = 0.5 * (tr_s - float(np.dot(omega, _quad_forms(a, o)))) if omega.size else 0.5 * tr_s
    if not rate > 0:
        raise DegeneratePosteriorError(f"inverse-gamma rate {rate:g} is not positive")
    return rate / rng.gamma(0.5 * n * p)


def sample_sigma2(rng, v, o, omega, data_k):
    """Draw sigma2 ~ inverse-gamma(n p / 2, tr[S (I - U Omega U^T)] / 2)."""
    a = projected_scatter(v, data_k)
    o = np.asarray(o, dtype=float).reshape(v.s, -1)
    return _sigma2_draw(
        rng, np.trace(data_k.scatter), a, o, np.atleast_1d(omega).astype(float), data_k.n, v.p
    )


def _vonmises_circle(rng, b, kappa_scale):
    """Angle theta with density prop. to exp(kappa_scale * x^T b x), x = (cos, sin)."""
    half = 0.5 * (b[0, 0] - b[1, 1])
    rho = math.hypot(half, b[0, 1])
    phi = math.atan2(b[0, 1], half)
    kappa = kappa_scale * rho
    if kappa < 0:
        kappa, phi = -kappa, phi + math.pi
    psi = rng.vonmises(0.0, kappa) if kappa > 0 else rng.uniform(-math.pi, math.pi)
    theta = 0.5 * (psi + phi)
    if rng.random() < 0.5:
        theta += math.pi
    return theta


def _acg_bingham(rng, c, batch=16):
    """x on the unit sphere with density prop. to exp(x^T c x), via the
    angular-central-Gaussian envelope."""
    d = c.shape[0]
    evals, evecs = np.linalg.eigh(c)
    lam = evals[-1] - evals  # >= 0, smallest is 0
    if lam.max() <= 1e-12:
        y = rng.standard_normal(d)
        return y / np.linalg.norm(y)
    b = kernels.acg_envelope_b(lam, 0, 0.0, d)
    om = 1.0 + 2.0 * lam / b
    log_m = -0.5 * (d - b) + 0.5 * d * math.log(d / b)
    sd = 1.0 / np.sqrt(om)
    while True:
        y = rng.standard_normal((batch, d)) * sd
        x = y / np.linalg.norm(y, axis=1, keepdims=True)
        log_ratio = -(x * x) @ lam + 0.5 * d * np.log((x * x) @ om) - log_m
        u = rng.random(batch)
        ok = np.nonzero(np.log(u) < log_ratio)[0]
        if ok.size:
            return evecs @ x[ok[0]]


# above this dimension the envelope is factored by Cholesky instead of eigh
_CHOL_DIM = 48
_MAX_BATCHES = 2000


def _compressed_top(evals, evecs, u):
    """Largest eigenvalue of a = Q diag(evals) Q^T compressed to u^perp.

    With w = Q^T u, each d_i whose w_i vanishes stays an eigenvalue; the rest
    are roots of sum_i w_i^2 / (d_i - mu) = 0, the largest lying between the
    two largest weighted d_i.  A small upward margin keeps it an upper bound.
    """
    w2 = (evecs.T @ u) ** 2
    scale = max(abs(evals[-1]), 1e-300)
    live = w2 > 1e-24
    best = float(evals[~live].max()) if (~live).any() else -np.inf
    d, w2 = evals[live], w2[live]
    if d.size >= 2:
        d_lo, d_hi = d[-2], d[-1]
        gap = d_hi - d_lo
        if gap <= 1e-12 * scale:
            root = d_hi
        else:

            def f(mu):
                return float(np.sum(w2 / (d - mu)))

            lo, hi = d_lo + 1e-14 * gap, d_hi - 1e-14 * gap
            # f increases on (d_lo, d_hi), so a bracket end bounds the root
            if f(lo) >= 0.0:
                root = lo
            elif f(hi) <= 0.0:
                root = d_hi
            else:
                root = brentq(f, lo, hi, xtol=1e-13 * scale, rtol=1e-14)
        best = max(best, float(root))
    return float(min(best + 1e-10 * scale, evals[-1]))


def _acg_bingham_chol(rng, c, approx_evals, batch=16, top=None):
    """ACG rejection sampler that avoids a full eigendecomposition of c.

    The envelope bound holds for every b in (0, d], so b is tuned from
    ``approx_evals`` (interlacing eigenvalues of the uncompressed matrix);
    only the top eigenvalue of c is computed exactly.
    """
    d = c.shape[0]
    top_given = top is not None
    if not top_given:
        top = float(
            eigh(c, eigvals_only=True, subset_by_index=[d - 1, d - 1], check_finite=False)[0]
        )
    approx = np.sort(np.asarray(approx_evals, dtype=float))[:d]
    lam = np.clip(top - approx, 0.0, None)
    b = kernels.acg_envelope_b(lam - lam.min(), 0, 0.0, d)
    omega_mat = (1.0 + 2.0 * top / b) * np.eye(d) - (2.0 / b) * c
    chol = cholesky(omega_mat, lower=True, check_finite=False)
    log_m = -0.5 * (d - b) + 0.5 * d * math.log(d / b)
    for _ in range(_MAX_BATCHES):
        y = solve_triangular(chol.T, rng.standard_normal((d, batch)), lower=False, check_finite=False)
        x = y / np.linalg.norm(y, axis=0)
        lx = top - np.sum(x * (c @ x), axis=0)  # x^T (top I - c) x >= 0
        log_ratio = -lx + 0.5 * d * np.log1p(2.0 * lx / b) - log_m
        ok = np.nonzero(np.log(rng.random(batch)) < log_ratio)[0]
        if ok.size:
            return x[:, ok[0]]
    # a loose supplied top starves the sampler; retry with the exact one
    return _acg_bingham_chol(rng, c, approx_evals, batch) if top_given else _stuck(d)


def _stuck(d):
    raise DegeneratePosteriorError(f"ACG envelope accepted nothing in dimension {d}")


def _acg_bingham_lowrank(rng, ug, ev, d, exclude, batch=16):
    """Bingham draw on a d-dimensional sphere whose matrix is ug diag(ev) ug^T.

    ``ug`` (p x q) spans the non-flat directions; the remaining d - q
    directions are flat and orthogonal to both ``ug`` and ``exclude``.  Only
    the squared length of the flat part enters the acceptance ratio, so it is
    drawn as a scaled chi-square and given a uniform direction afterwards.
    """
    p, q = ug.shape
    f = d - q
    top = max(float(ev.max()) if q else 0.0, 0.0)
    lam = top - ev
    b = kernels.acg_envelope_b(lam, f, top, d)
    om = 1.0 + 2.0 * lam / b
    om_f = 1.0 + 2.0 * top / b
    log_m = -0.5 * (d - b) + 0.5 * d * math.log(d / b)
    sd = 1.0 / np.sqrt(om)
    while True:
        y = rng.standard_normal((batch, q)) * sd
        t = rng.chisquare(f, batch) / om_f if f > 0 else np.zeros(batch)
        norm2 = np.sum(y * y, axis=1) + t
        x2 = (y * y) / norm2[:, None]
        t2 = t / norm2
        log_ratio = -(x2 @ lam + t2 * top) + 0.5 * d * np.log(x2 @ om + t2 * om_f) - log_m
        ok = np.nonzero(np.log(rng.random(batch)) < log_ratio)[0]
        if ok.size:
            i = ok[0]
            col = ug @ (y[i] / math.sqrt(norm2[i]))
            if f > 0:
                z = rng.standard_normal(p)
                z -= ug @ (ug.T @ z)
                if exclude.shape[1]:
                    z -= exclude @ (exclude.T @ z)
                col = col + math.sqrt(t2[i]) * z / np.linalg.norm(z)
            return col


def _null_basis(o_others, s):
    if o_others.shape[1] == 0:
        return np.eye(s)
    q = np.linalg.qr(o_others, mode="complete")[0]
    return q[:, o_others.shape[1]:]


def _bingham_sweep(rng, a, omega, o, factor=None, evals=None, evecs=None):
    """One Gibbs sweep for O with density prop. to etr(Omega O^T a O).

    ``factor`` (s x q with a = F F^T) switches the column updates to the
    low-rank sampler, which costs O(s q^2) instead of O(s^3).  ``evals`` are
    the eigenvalues of a, used only to tune the envelope in high dimension;
    with ``evecs`` as well, the envelope's top eigenvalue for r = 2 comes
    from a secular equation instead of an eigensolver.
    """
    s, r = o.shape
    o = o.copy()
    if r == 0:
        return o
    if r == s:
        if s == 1:
            return o * (1.0 if rng.random() < 0.5 else -1.0)
        for i in range(s - 1):
            for j in range(i + 1, s):
                n2 = o[:, [i, j]]
                b = n2.T @ a @ n2
                theta = _vonmises_circle(rng, b, omega[i] - omega[j])
                x = np.array([math.cos(theta), math.sin(theta)])
                y = np.array([-x[1], x[0]])
                if rng.random() < 0.5:
                    y = -y
                o[:, i] = n2 @ x
                o[:, j] = n2 @ y
        return o
    if factor is not None:
        for j in range(r):
            others = np.delete(o, j, axis=1)
            h = others.T @ factor
            g = factor - others @ h
            # eigenpairs of G G^T from the q x q Gram matrix
            ev, w = np.linalg.eigh(g.T @ g)
            keep = ev > 1e-12 * max(ev[-1], 1e-300)
            ug = (g @ w[:, keep]) / np.sqrt(ev[keep])
            col = _acg_bingham_lowrank(rng, ug, omega[j] * ev[keep], s - others.shape[1], others)
            o[:, j] = col / np.linalg.norm(col)
        return o
    for j in range(r):
        others = np.delete(o, j, axis=1)
        if others.shape[1] == 1 and s - 1 > _CHOL_DIM:
            # one reflector maps e_1 to the other column: O(s^2) compression
            u = others[:, 0]
            hv = u.copy()
            hv[0] += math.copysign(1.0, u[0]) if u[0] != 0 else 1.0
            beta = 2.0 / float(hv @ hv)
            pv = beta * (a @ hv)
            qv = pv - (0.5 * beta * float(hv @ pv)) * hv
            b = (a - np.outer(hv, qv) - np.outer(qv, hv))[1:, 1:]
            if evals is None:
                evals = np.linalg.eigvalsh(a)
            top = None if evecs is None else omega[j] * _compressed_top(evals, evecs, u)
            x = _acg_bingham_chol(rng, omega[j] * 0.5 * (b + b.T), omega[j] * evals, top=top)
            z = np.concatenate(([0.0], x))
            col = z - beta * float(hv @ z) * hv
            o[:, j] = col / np.linalg.norm(col)
            continue
        nb = _null_basis(others, s)
        b = nb.T @ a @ nb
        if nb.shape[1] == 2:
            theta = _vonmises_circle(rng, b, omega[j])
            x = np.array([math.cos(theta), math.sin(theta)])
        elif nb.shape[1] > _CHOL_DIM:
            if evals is None:
                evals = np.linalg.eigvalsh(a)
            x = _acg_bingham_chol(rng, omega[j] * b, omega[j] * evals)
        else:
            x = _acg_bingham(rng, omega[j] * b)
        col = nb @ x
        o[:, j] = col / np.linalg.norm(col)
    return o


def sample_bingham_O(rng, a_matrix, omega, r, o=None):
    """One column-wise Gibbs sweep for O ~ Bingham(Omega, a_matrix) on V_{s,r}.

    Without a current state ``o`` the sweep starts from a uniform draw.
    """
    a = np.asarray(a_matrix, dtype=float)
    a = 0.5 * (a + a.T)
    s = a.shape[0]
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.shape[0] != r or r > s:
        raise ModelError("need len(omega) == r <= s")
    if o is None:
        o = np.linalg.qr(rng.standard_normal((s, r)))[0] if r else np.zeros((s, 0))
    return _bingham_sweep(rng, a, omega, np.asarray(o, dtype=float))


def sample_omega(rng, c, n, grid=1024):
    """Draw from density prop. to (1 - w)^{n/2} exp(c w n / 2) on [0, 1)."""
    if n < 1 or not np.isfinite(c):
        raise ModelError("need n >= 1 and finite c")
    return float(kernels.omega_inverse_cdf(float(c), float(n), int(grid), rng.random()))


def sample_omega_pooled(rng, j, v2, groups, grid=1024):
    """Shared diagonal entry of D: product of per-group omega conditionals.

    ``groups`` holds (GroupDataset, sigma2) pairs; ``v2`` is the p x (s - r)
    shared block of the basis and ``j`` selects its column.  The product
    collapses to a single conditional with n = sum n_k and the n-weighted
    mean of the c_kj.
    """
    v2 = np.asarray(v2, dtype=float)
    col = v2[:, j] if v2.ndim == 2 else v2
    n_tot, cn = 0, 0.0
    for data_k, sigma2_k in groups:
        c_kj = float(col @ data_k.scatter @ col) / (data_k.n * sigma2_k)
        if not np.isfinite(c_kj):
            raise ModelError("non-finite c_kj")
        n_tot += data_k.n
        cn += data_k.n * c_kj
    return sample_omega(rng, cn / n_tot, n_tot, grid)


def _canonicalize(o, omega):
    order = np.argsort(-omega, kind="stable")
    o = o[:, order]
    omega = omega[order]
    for j in range(o.shape[1]):
        nz = np.nonzero(np.abs(o[:, j]) > 1e-300)[0]
        if nz.size and o[nz[0], j] < 0:
            o[:, j] = -o[:, j]
    return o, omega


def _sweep(rng, a, tr_s, n, p, sigma2, o, omega, grid, factor=None, evals=None, evecs=None):
    sigma2 = _sigma2_draw(rng, tr_s, a, o, omega, n, p)
    scale = 1.0 / (2.0 * sigma2)
    o = _bingham_sweep(
        rng,
        a * scale,
        omega,
        o,
        None if factor is None else factor * math.sqrt(scale),
        None if evals is None else evals * scale,
        evecs,
    )
    c = _quad_forms(a, o) / (n * sigma2)
    omega = np.array(
        [kernels.omega_inverse_cdf(float(ci), float(n), grid, rng.random()) for ci in c]
    )
    o, omega = _canonicalize(o, omega)
    return sigma2, o, omega


def gibbs_step(rng, state, v, data_k, grid=1024):
    """Systematic-scan sweep sigma2 -> O -> omega, then sort omega descending."""
    a = projected_scatter(v, data_k)
    sigma2, o, omega = _sweep(
        rng,
        a,
        np.trace(data_k.scatter),
        data_k.n,
        v.p,
        state.sigma2,
        np.array(state.eigvecs),
        np.array(state.omega),
        grid,
    )
    return GroupSpikeParams(sigma2, o, omega)


def initial_state(v, data_k, r):
    """Start at the top-r eigenvectors of V^T S V with omega at its conditional mode."""
    a = projected_scatter(v, data_k)
    evals, evecs = np.linalg.eigh(a)
    o = evecs[:, ::-1][:, :r]
    resid = np.trace(data_k.scatter) - np.trace(a)
    sigma2 = resid / (data_k.n * (v.p - v.s)) if v.p > v.s else 0.0
    if not sigma2 > 0:
        sigma2 = np.trace(data_k.scatter) / (data_k.n * v.p)
    c = evals[::-1][:r] / (data_k.n * sigma2)
    omega = np.clip(np.where(c > 1, (c - 1) / np.maximum(c, 1e-300), 0.0), 0.0, 1 - 1e-9)
    o, omega = _canonicalize(o, omega)
    return GroupSpikeParams(sigma2, o, omega)


def _low_rank_factor(a, r):
    """F with a = F F^T when a is rank deficient enough to pay off, else None."""
    s = a.shape[0]
    if r >= s or s < 8:
        return None
    ev, vec = np.linalg.eigh(a)
    keep = ev > 1e-12 * max(ev[-1], 1e-300)
    if keep.sum() > s // 2:
        return None
    return vec[:, keep] * np.sqrt(ev[keep])


def run_chain(data_k, v, r, config=None, group_id=0, init=None):
    """Run one group's chain; the generator is seeded with seed XOR group_id."""
    config = config or ChainConfig()
    if not 0 <= r <= v.s:
        raise ModelError(f"need 0 <= r <= s, got r={r}, s={v.s}")
    if data_k.p != v.p:
        raise ModelError("data and basis disagree on p")
    rng = np.random.default_rng(config.seed ^ group_id)
    state = init or initial_state(v, data_k, r)
    a = projected_scatter(v, data_k)
    tr_s = float(np.trace(data_k.scatter))
    n, p, grid = data_k.n, v.p, config.omega_grid
    sigma2, o, omega = state.sigma2, np.array(state.eigvecs), np.array(state.omega)
    factor = _low_rank_factor(a, r)
    evals = evecs = None
    if factor is None and v.s > _CHOL_DIM:
        evals, evecs = np.linalg.eigh(a)

    keep = list(range(config.burn_in + config.thin - 1, config.n_iter, config.thin))
    m = len(keep)
    out_s2 = np.empty(m)
    out_o = np.empty((m, v.s, r))
    out_w = np.empty((m, r))
    t = 0
    for it in range(config.n_iter):
        sigma2, o, omega = _sweep(rng, a, tr_s, n, p, sigma2, o, omega, grid, factor, evals, evecs)
        if t < m and it == keep[t]:
            out_s2[t] = sigma2
            out_o[t] = o
            out_w[t] = omega
            t += 1
    return GibbsChain(out_s2, out_o, out_w, np.asarray(keep, dtype=np.int64), group_id, config)


# ---------------------------------------------------------------------------
# posterior summaries
# ---------------------------------------------------------------------------


def stein_estimator(chain, v, p=None):
    """Inverse of the posterior-mean precision, E[Sigma^{-1} | S]^{-1}.

    The mean precision is c I - V A V^T with c = mean(1/sigma2) and
    A = mean(O Omega O^T / sigma2), so only an s x s inverse is needed.
    """
    if len(chain) == 0:
        raise ModelError("empty chain")
    p = p or v.p
    inv_s2 = 1.0 / chain.sigma2
    c = inv_s2.mean()
    a = np.einsum("m,mir,mr,mjr->ij", inv_s2, chain.eigvecs, chain.omega, chain.eigvecs)
    a /= len(chain)
    inner = c * np.eye(v.s) - 0.5 * (a + a.T)
    ev = np.linalg.eigvalsh(inner)
    if ev[0] <= 1e-14 * max(abs(ev[-1]), 1e-300):
        raise ModelError("posterior-mean precision is singular")
    if isinstance(v, FullBasis):
        out = np.linalg.inv(inner)
        return 0.5 * (out + out.T)
    vv = v.v
    out = (np.eye(p) - vv @ vv.T) / c + vv @ np.linalg.solve(inner, vv.T)
    return 0.5 * (out + out.T)


def _fold(theta):
    theta = np.where(theta > 0.5 * np.pi, theta - np.pi, theta)
    return np.where(theta <= -0.5 * np.pi, theta + np.pi, theta)


def angle_logratio(params):
    """Angle of the first eigenvector against the first basis axis, folded to
    (-pi/2, pi/2], and log(lambda_1 / lambda_2)."""
    if params.r != 2:
        raise ModelError(f"angle/log-ratio summary needs r = 2, got r = {params.r}")
    o = params.eigvecs
    angle = float(_fold(np.arctan2(o[1, 0], o[0, 0])))
    lam = params.lambdas
    with np.errstate(divide="ignore"):
        ratio = float(np.log(lam[0]) - np.log(lam[1])) if lam[1] > 0 else math.inf
    return AngleRatioSummary(angle, ratio)


def chain_angle_logratio(chain):
    """Vectorized angle/log-ratio over a chain; returns two arrays."""
    if chain.omega.shape[1] != 2:
        raise ModelError("angle/log-ratio summary needs r = 2")
    o = chain.eigvecs
    angle = _fold(np.arctan2(o[:, 1, 0], o[:, 0, 0]))
    lam = chain.lambdas
    with np.errstate(divide="ignore"):
        ratio = np.log(lam[:, 0]) - np.log(lam[:, 1])
    return angle, ratio


def hull_vertices(points):
    """Counter-clockwise convex hull vertices (monotone chain)."""
    pts = np.asarray(points, dtype=float)
    order = list(np.lexsort((pts[:, 1], pts[:, 0])))
    idx = kernels._hull_numpy(pts[:, 0], pts[:, 1], order)
    verts = pts[idx]
    # drop exact duplicates (degenerate samples)
    _, first = np.unique(verts, axis=0, return_index=True)
    return verts[np.sort(first)]


def hull_peel_region(points, target=0.95):
    """Peel convex-hull vertex layers while at least ``target`` of the sample
    survives; the region is the hull of the survivors."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ModelError("points must be an (m, 2) array")
    if not 0 < target < 1:
        raise ModelError("target must lie strictly between 0 and 1")
    if pts.shape[0] < 10:
        raise ModelError("need at least 10 points")
    if not np.all(np.isfinite(pts)):
        raise ModelError("points must be finite")
    total = pts.shape[0]
    min_keep = int(math.ceil(target * total - 1e-9))
    alive, _ = kernels.peel_hull_layers(pts[:, 0].copy(), pts[:, 1].copy(), min_keep)
    survivors = pts[alive]
    return PosteriorRegion(hull_vertices(survivors), target, int(alive.sum()), total)


def point_in_convex_polygon(vertices, point, tol=1e-12):
    """Closed-polygon membership (boundary counts as inside)."""
    vs = np.asarray(vertices, dtype=float)
    x, y = float(point[0]), float(point[1])
    scale = max(1.0, np.abs(vs).max(initial=0.0), abs(x), abs(y))
    eps = tol * scale * scale
    if len(vs) == 1:
        return bool(np.hypot(x - vs[0, 0], y - vs[0, 1]) <= tol * scale)
    if len(vs) == 2:
        (ax, ay), (bx, by) = vs
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        dot = (x - ax) * (bx - ax) + (y - ay) * (by - ay)
        return bool(abs(cross) <= eps and -eps <= dot <= (bx - ax) ** 2 + (by - ay) ** 2 + eps)
    nxt = np.roll(vs, -1, axis=0)
    cross = (nxt[:, 0] - vs[:, 0]) * (y - vs[:, 1]) - (nxt[:, 1] - vs[:, 1]) * (x - vs[:, 0])
    return bool(np.all(cross >= -eps))


def procrustes_align(v_hat, v_ref):
    """Orthogonal R minimizing ||V_hat R - V_ref||_F (polar factor of V_hat^T V_ref)."""
    a = v_hat.v if isinstance(v_hat, SubspaceBasis) else np.asarray(v_hat, dtype=float)
    b = v_ref.v if isinstance(v_ref, SubspaceBasis) else np.asarray(v_ref, dtype=float)
    if a.shape != b.shape:
        raise ModelError("bases must have the same shape")
    u, _, wt = np.linalg.svd(a.T @ b)
    return u @ wt


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def chain_records(chain):
    """One dict per draw: sigma2, omega, O flattened column-major."""
    for i in range(len(chain)):
        yield {
            "iteration": int(chain.iterations[i]),
            "sigma2": float(chain.sigma2[i]),
            "omega": [float(w) for w in chain.omega[i]],
            "O": [float(x) for x in chain.eigvecs[i].ravel(order="F")],
        }
