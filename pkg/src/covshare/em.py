"""Empirical-Bayes EM for the shared subspace span(V) and the goodness-of-fit
statistic gamma.

Under Jeffreys priors on M_k = sigma2_k (Psi_k + I) and sigma2_k, the
marginal likelihood of V is closed form and the E-step expectations are

    E[M_k^{-1} | V]  = n_k (V^T S_k V)^{-1}
    E[1/sigma2_k | V] = n_k (p - s) / tr((I - V V^T) S_k).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh

from .model import GroupDataset, ModelError, NumericalError, SubspaceBasis, projected_scatter
from .stiefel import OptimizerOptions, TraceObjective, maximize


class DegenerateProjectionError(NumericalError):
    """V^T S_k V is singular for some group."""


class DegenerateNoiseError(NumericalError):
    """tr((I - V V^T) S_k) is not positive for some group."""


class GoodnessOfFitError(NumericalError):
    """The gamma denominator is not positive."""


@dataclass(frozen=True)
class EStepExpectations:
    inv_m: List[np.ndarray]
    inv_sigma2: np.ndarray


@dataclass
class EmOptions:
    max_iters: int = 200
    tol: float = 1e-8
    inner: OptimizerOptions = field(default_factory=OptimizerOptions)
    # stop before a group's projected scatter collapses below its noise floor
    noise_floor_guard: bool = True


@dataclass
class EmFitResult:
    v_hat: SubspaceBasis
    objective_trace: List[float]
    iterations: int
    converged: bool
    stop_reason: str = "tolerance"


def _check_groups(data, p=None):
    data = list(data)
    if not data:
        raise ModelError("need at least one group")
    p = p or data[0].p
    for k, d in enumerate(data):
        if d.p != p:
            raise ModelError(f"group {k} has p={d.p}, expected {p}")
    return data


def _group_terms(v, d, k):
    a = projected_scatter(v, d)
    resid = np.trace(d.scatter) - np.trace(a)
    # relative guard: V^T S V numerically singular
    ev = np.linalg.eigvalsh(a)
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300) or ev[-1] <= 0:
        raise DegenerateProjectionError(f"group {k}: V^T S V is singular")
    if resid <= 1e-14 * max(np.trace(d.scatter), 1e-300):
        raise DegenerateNoiseError(f"group {k}: tr((I - VV^T) S) is not positive")
    return a, resid


def e_step(v, data):
    data = _check_groups(data, v.p)
    p, s = v.p, v.s
    inv_m, inv_sigma2 = [], []
    for k, d in enumerate(data):
        a, resid = _group_terms(v, d, k)
        im = d.n * np.linalg.inv(a)
        inv_m.append(0.5 * (im + im.T))
        inv_sigma2.append(d.n * (p - s) / resid)
    return EStepExpectations(inv_m, np.asarray(inv_sigma2))


def m_step_objective(expectations, data):
    s = expectations.inv_m[0].shape[0]
    terms = []
    for d, im, isg in zip(data, expectations.inv_m, expectations.inv_sigma2):
        terms.append((d.scatter, isg * np.eye(s) - im))
    return TraceObjective(terms)


def m_step(expectations, data, v_prev, opts=None):
    data = _check_groups(data, v_prev.p)
    obj = m_step_objective(expectations, data)
    v_new, _ = maximize(obj, v_prev, opts)
    if obj.value(v_new.v) < obj.value(v_prev.v):
        return v_prev
    return v_new


def log_marginal_likelihood(v, data):
    data = _check_groups(data, v.p)
    p, s = v.p, v.s
    total = 0.0
    for k, d in enumerate(data):
        a, resid = _group_terms(v, d, k)
        total -= 0.5 * d.n * np.linalg.slogdet(a)[1]
        total -= 0.5 * d.n * (p - s) * np.log(resid)
    return total


def below_noise_floor(v, data, margin=0.1):
    """Groups whose smallest projected eigenvalue falls under the noise floor.

    Under the model V^T Sigma_k V >= sigma2_k I, so min eig(V^T S_k V) should
    not drop below about n_k sigma2_k (1 - sqrt(s / n_k))^2.  With n_k < p the
    marginal likelihood is unbounded along directions in the null space of
    one S_k; EM iterates heading there cross this floor first.  The plug-in
    sigma2 is inflated by signal outside span(V), so only a drop below
    ``margin`` times the floor counts.
    """
    out = []
    s = v.s
    for k, d in enumerate(data):
        a = projected_scatter(v, d)
        floor = margin * d.n * sigma2_plugin(v, d) * max(1.0 - np.sqrt(s / d.n), 0.0) ** 2
        if np.linalg.eigvalsh(a)[0] < floor:
            out.append(k)
    return out


def initial_basis(data, s):
    """Top-s eigenvectors of the pooled scatter."""
    pooled = sum(d.scatter for d in data)
    p = pooled.shape[0]
    _, vecs = eigh(pooled, subset_by_index=[p - s, p - 1])
    return SubspaceBasis.from_matrix(vecs[:, ::-1])


def fit(data, s, opts=None, v0=None):
    """Alternate E- and M-steps until the marginal likelihood stalls."""
    opts = opts or EmOptions()
    data = _check_groups(data)
    p = data[0].p
    if not 0 < s < p:
        raise ModelError(f"need 0 < s < p, got s={s}, p={p}")
    v = v0 if v0 is not None else initial_basis(data, s)
    if v.s != s or v.p != p:
        raise ModelError("initial basis has the wrong shape")
    ll = log_marginal_likelihood(v, data)
    trace = [ll]
    converged = False
    reason = "max_iters"
    # groups already under the floor at the start are not held to it
    exempt = set(below_noise_floor(v, data)) if opts.noise_floor_guard else set()
    it = 0
    for it in range(1, opts.max_iters + 1):
        exp_ = e_step(v, data)
        v_new = m_step(exp_, data, v, opts.inner)
        try:
            if opts.noise_floor_guard and set(below_noise_floor(v_new, data)) - exempt:
                reason = "noise_floor"
                it -= 1
                break
            ll_new = log_marginal_likelihood(v_new, data)
        except (DegenerateProjectionError, DegenerateNoiseError):
            reason = "degenerate"
            it -= 1
            break
        if ll_new < ll:
            # EM guarantees ascent; a drop is rounding in an already stalled fit
            converged = abs(ll_new - ll) <= 1e-8 * (1.0 + abs(ll))
            reason = "tolerance" if converged else "no_ascent"
            break
        v = v_new
        trace.append(ll_new)
        done = abs(ll_new - ll) <= opts.tol * (1.0 + abs(ll_new))
        ll = ll_new
        if done:
            converged = True
            reason = "tolerance"
            break
    return EmFitResult(v, trace, it, converged, reason)


def sigma2_plugin(v, data_k):
    """tr((I - V V^T) S) / (n (p - s))."""
    _, resid = _group_terms(v, data_k, 0)
    return resid / (data_k.n * (v.p - v.s))


def top_eigenvalue_sum(scatter, s):
    p = scatter.shape[0]
    if p > 2000:
        from scipy.sparse.linalg import eigsh

        vals = eigsh(scatter, k=min(s + 5, p - 1), which="LA", tol=1e-10)[0]
        return float(np.sort(vals)[::-1][:s].sum())
    return float(eigh(scatter, eigvals_only=True, subset_by_index=[p - s, p - 1]).sum())


def goodness_of_fit(data_k, v, sigma2=None, squared_norms=True):
    """Share of the group's top-s signal variance captured by span(V).

    With ``squared_norms`` (default) the Frobenius norms ||Y V||_F are read
    as squared, so the numerator is tr(V^T S V)/n.  ``squared_norms=False``
    evaluates the unsquared norms literally.
    """
    if sigma2 is None:
        sigma2 = sigma2_plugin(v, data_k)
    n, p, s = data_k.n, v.p, v.s
    num = np.trace(projected_scatter(v, data_k))
    top = top_eigenvalue_sum(data_k.scatter, s)
    if not squared_norms:
        num, top = np.sqrt(max(num, 0.0)), np.sqrt(max(top, 0.0))
    denom = top / n - sigma2 * p * s / n
    if denom <= 0:
        raise GoodnessOfFitError(
            f"gamma denominator is {denom:.4g} <= 0; try a smaller s or re-estimate sigma2"
        )
    return (num / n) / denom
