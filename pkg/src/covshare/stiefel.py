"""Maximization of weighted trace objectives on the Stiefel manifold.

F(V) = 1/2 sum_k tr(B_k V^T S_k V), optimized by curvilinear search along
Cayley-transform curves, which keep V^T V = I exactly (up to rounding).
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .model import ModelError, SubspaceBasis


class OptimizerError(RuntimeError):
    """Non-finite objective or an unusable Cayley system."""


class CayleyStepError(OptimizerError):
    """The 2s x 2s system of a Cayley step is singular for this step size."""


@dataclass(frozen=True)
class TraceObjective:
    terms: Tuple[Tuple[np.ndarray, np.ndarray], ...]

    def __init__(self, terms: Sequence):
        checked = []
        p = None
        for scatter, weight in terms:
            scatter = np.asarray(scatter, dtype=float)
            weight = np.atleast_2d(np.asarray(weight, dtype=float))
            if p is None:
                p = scatter.shape[0]
            if scatter.shape != (p, p):
                raise ModelError("all scatter matrices must share dimension p")
            if np.abs(weight - weight.T).max(initial=0.0) > 1e-10 * max(
                1.0, np.abs(weight).max(initial=0.0)
            ):
                raise ModelError("weight matrices must be symmetric")
            checked.append((scatter, 0.5 * (weight + weight.T)))
        object.__setattr__(self, "terms", tuple(checked))

    def value(self, v):
        total = 0.0
        for scatter, weight in self.terms:
            total += np.sum(weight * (v.T @ scatter @ v))
        return 0.5 * total

    def value_and_gradient(self, v):
        total = 0.0
        grad = np.zeros_like(v)
        for scatter, weight in self.terms:
            sv = scatter @ v
            total += np.sum(weight * (v.T @ sv))
            grad += sv @ weight
        return 0.5 * total, grad

    def is_flat(self, tol=1e-14):
        return all(np.abs(w).max(initial=0.0) <= tol for _, w in self.terms)


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6  # relative: stop when ||grad_R|| <= grad_tol * (1 + |F|)
    step_init: float = 1e-2
    armijo_c: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if min(self.max_iters, self.max_backtracks) < 1:
            raise ValueError("max_iters and max_backtracks must be positive")
        if self.grad_tol <= 0 or self.step_init <= 0:
            raise ValueError("grad_tol and step_init must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")


def _raw(v):
    return v.v if isinstance(v, SubspaceBasis) else np.asarray(v, dtype=float)


def euclidean_gradient(obj, v):
    """G = sum_k S_k V B_k."""
    return obj.value_and_gradient(_raw(v))[1]


def _cayley(v, grad, tau):
    p, s = v.shape
    if tau == 0:
        return v.copy()
    # W = grad V^T - V grad^T = U Z^T with U = [grad, V], Z = [V, -grad]
    u = np.hstack([grad, v])
    z = np.hstack([v, -grad])
    small = np.eye(2 * s) + 0.5 * tau * (z.T @ u)
    try:
        cond = np.linalg.cond(small)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError
        rhs = np.linalg.solve(small, z.T @ v)
    except np.linalg.LinAlgError as exc:
        raise CayleyStepError(f"singular Cayley system at tau={tau:g}") from exc
    return v - tau * (u @ rhs)


def cayley_step(v, grad, tau):
    """(I + tau/2 W)^{-1} (I - tau/2 W) V with W = grad V^T - V grad^T.

    ``grad`` is the gradient of the function being *decreased*.  Only a
    2s x 2s system is solved.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    v0 = _raw(v)
    out = _cayley(v0, np.asarray(grad, dtype=float), float(tau))
    if tau == 0:
        return v if isinstance(v, SubspaceBasis) else SubspaceBasis(v0)
    return SubspaceBasis(_reorthonormalize(out))


def _reorthonormalize(v):
    # polar-factor cleanup once rounding drift exceeds 1e-12
    err = np.linalg.norm(v.T @ v - np.eye(v.shape[1]))
    if err <= 1e-12:
        return v
    u, _, vt = np.linalg.svd(v, full_matrices=False)
    return u @ vt


def riemannian_gradient(v, grad):
    return grad - v @ (grad.T @ v)


def maximize(obj, v0, opts=None):
    """Monotone Armijo/Barzilai-Borwein ascent along Cayley curves.

    Returns (basis, objective trace).  The trace starts with F(v0) and is
    nondecreasing.
    """
    opts = opts or OptimizerOptions()
    v = _raw(v0).copy()
    f, g = obj.value_and_gradient(v)
    if not np.isfinite(f):
        raise OptimizerError("objective is not finite at the starting point")
    trace = [f]
    if obj.is_flat():
        return (v0 if isinstance(v0, SubspaceBasis) else SubspaceBasis(v)), trace

    # minimize -F
    gm = -g
    tau = opts.step_init
    prev_v = prev_rg = None
    for it in range(opts.max_iters):
        rg = riemannian_gradient(v, gm)
        rg_norm = np.linalg.norm(rg)
        if rg_norm <= opts.grad_tol * (1.0 + abs(f)):
            break
        if prev_v is not None:
            sk = v - prev_v
            yk = rg - prev_rg
            sy = abs(np.sum(sk * yk))
            if sy > 0:
                if it % 2:
                    tau = np.sum(sk * sk) / sy
                else:
                    tau = sy / max(np.sum(yk * yk), 1e-300)
                if not np.isfinite(tau) or tau <= 0:
                    tau = opts.step_init
        # dF(Y(tau))/dtau at 0 is ||W||_F^2 / 2, with ||U Z^T||^2 = tr(U^T U Z^T Z)
        u = np.hstack([gm, v])
        z = np.hstack([v, -gm])
        slope = 0.5 * np.sum((u.T @ u) * (z.T @ z))
        accepted = False
        for _ in range(opts.max_backtracks):
            try:
                cand = _cayley(v, gm, tau)
            except CayleyStepError:
                tau *= 0.5
                continue
            f_new, g_new = obj.value_and_gradient(cand)
            if not np.isfinite(f_new):
                raise OptimizerError("objective became non-finite during line search")
            if f_new >= f + opts.armijo_c * tau * slope:
                accepted = True
                break
            tau *= 0.5
        if not accepted or f_new < f:
            break
        prev_v, prev_rg = v, rg
        v = _reorthonormalize(cand)
        if v is cand:
            f, g = f_new, g_new
        else:
            f, g = obj.value_and_gradient(v)
        gm = -g
        trace.append(f)
    return SubspaceBasis(_reorthonormalize(v)), trace
