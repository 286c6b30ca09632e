"""Synthetic data, losses and asymptotic benchmarks."""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .model import (
    GroupDataset,
    GroupSpikeParams,
    ModelError,
    SubspaceBasis,
    assemble_sigma,
)

SUBSPACE_MODES = ("shared_random", "identical_covariance", "full_rank_independent")


def sample_uniform_stiefel(rng, p, s):
    """Haar-distributed p x s orthonormal matrix (QR of a Gaussian, sign-fixed)."""
    if not 0 < s <= p:
        raise ModelError(f"need 0 < s <= p, got p={p}, s={s}")
    q, r = np.linalg.qr(rng.standard_normal((p, s)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


@dataclass
class GenConfig:
    p: int = 200
    s: int = 2
    r: int = 2
    k_groups: int = 5
    n_per_group: int = 50
    lambdas: Sequence = (250.0, 25.0)  # length r, or one row per group
    sigma2: Sequence = 1.0  # scalar or per group
    subspace_mode: str = "shared_random"
    seed: int = 0
    eigvecs: Optional[Sequence] = None  # optional fixed s x r O_k per group

    def __post_init__(self):
        if not self.r <= self.s <= self.p:
            raise ModelError("need r <= s <= p")
        if self.subspace_mode not in SUBSPACE_MODES:
            raise ModelError(f"unknown subspace_mode {self.subspace_mode!r}")
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim == 1:
            lam = np.tile(lam, (self.k_groups, 1))
        if lam.shape != (self.k_groups, self.r):
            raise ModelError("lambdas must have length r or shape (k_groups, r)")
        if np.any(lam <= 0) or np.any(np.diff(lam, axis=1) > 0):
            raise ModelError("lambdas must be positive and descending")
        self.lambdas = lam
        s2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (self.k_groups,)).copy()
        if np.any(s2 <= 0):
            raise ModelError("sigma2 must be positive")
        self.sigma2 = s2


@dataclass
class Truth:
    v: Optional[SubspaceBasis]  # None for full-rank data (V = I_p)
    params: List[GroupSpikeParams]
    sigmas: List[np.ndarray]
    group_eigvecs: List[np.ndarray] = field(default_factory=list)  # U_k, p x r


def _draw_rows(rng, n, u, lam, sigma2):
    """n rows of N(0, sigma2 (U diag(lam) U^T + I)) without forming Sigma^{1/2}."""
    z = rng.standard_normal((n, u.shape[0]))
    y = z + ((z @ u) * (np.sqrt(1.0 + lam) - 1.0)) @ u.T
    return np.sqrt(sigma2) * y


def generate_groups(config):
    """Return (datasets, truth) for the configured data model."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    p, s, r, kg = cfg.p, cfg.s, cfg.r, cfg.k_groups
    datasets, params, sigmas, us = [], [], [], []
    v = None
    if cfg.subspace_mode != "full_rank_independent":
        v = SubspaceBasis(sample_uniform_stiefel(rng, p, s)) if s < p else None
    shared_o = None
    if cfg.subspace_mode == "identical_covariance":
        shared_o = sample_uniform_stiefel(rng, s, r)
    for k in range(kg):
        lam = cfg.lambdas[k]
        if cfg.subspace_mode == "full_rank_independent":
            u = sample_uniform_stiefel(rng, p, r)
            vk = SubspaceBasis.from_matrix(u) if r < p else None
            o = np.eye(r)
        else:
            if cfg.eigvecs is not None:
                o = np.asarray(cfg.eigvecs[k], dtype=float)
            elif shared_o is not None:
                o = shared_o
            else:
                o = sample_uniform_stiefel(rng, s, r)
            vk = v
            u = (v.v if v is not None else np.eye(p)) @ o
        par = GroupSpikeParams.from_lambdas(cfg.sigma2[k], o, lam)
        sigma = (
            assemble_sigma(vk, par)
            if vk is not None
            else cfg.sigma2[k] * (np.eye(p) + (u * lam) @ u.T)
        )
        y = _draw_rows(rng, cfg.n_per_group, u, lam, cfg.sigma2[k])
        s_k = y.T @ y
        datasets.append(GroupDataset(0.5 * (s_k + s_k.T), cfg.n_per_group, y))
        params.append(par)
        sigmas.append(sigma)
        us.append(u)
    return datasets, Truth(v, params, sigmas, us)


# ---------------------------------------------------------------------------
# losses and accuracy
# ---------------------------------------------------------------------------


def _check_pd(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"{name} must be square")
    if np.abs(a - a.T).max() > 1e-8 * max(1.0, np.abs(a).max()):
        raise ModelError(f"{name} must be symmetric")
    try:
        return np.linalg.cholesky(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"{name} is not positive definite") from exc


def steins_loss(sigma_true, sigma_hat):
    """tr(Sigma^{-1} Sigma_hat) - log|Sigma^{-1} Sigma_hat| - p."""
    lt = _check_pd(sigma_true, "sigma_true")
    _check_pd(sigma_hat, "sigma_hat")
    # eigenvalues of L^{-1} Sigma_hat L^{-T} are those of Sigma^{-1} Sigma_hat
    x = np.linalg.solve(lt, np.linalg.solve(lt, sigma_hat).T)
    ev = np.linalg.eigvalsh(0.5 * (x + x.T))
    return float(max(np.sum(ev - np.log(ev) - 1.0), 0.0))


def average_steins_loss(truths, estimates):
    truths, estimates = list(truths), list(estimates)
    if len(truths) != len(estimates):
        raise ModelError("truths and estimates differ in length")
    if not truths:
        raise ModelError("no groups")
    return float(np.mean([steins_loss(t, e) for t, e in zip(truths, estimates)]))


def subspace_accuracy(v_hat, v_true):
    """tr(Vh Vh^T V V^T) / s."""
    a = v_hat.v if isinstance(v_hat, SubspaceBasis) else np.asarray(v_hat, dtype=float)
    b = v_true.v if isinstance(v_true, SubspaceBasis) else np.asarray(v_true, dtype=float)
    if a.shape != b.shape:
        raise ModelError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.clip(np.sum((a.T @ b) ** 2) / a.shape[1], 0.0, 1.0))


class BenchmarkValue(NamedTuple):
    value: float
    clamped: bool


def pooled_accuracy_terms(lambdas, gamma_ratio, k_groups):
    """Per-eigenvalue limits (1 - g/(K(l-1)^2)) / (1 + g/(K(l-1))), where l is
    a population eigenvalue of Sigma in noise units; terms below the
    detection edge l <= 1 + sqrt(g/K) are clamped to 0 and flagged."""
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    g = float(gamma_ratio) / k_groups
    terms = np.zeros_like(lam)
    flags = lam <= 1.0 + np.sqrt(g)
    ok = ~flags
    d = lam[ok] - 1.0
    terms[ok] = (1.0 - g / d**2) / (1.0 + g / d)
    return np.clip(terms, 0.0, 1.0), flags


def pooled_accuracy_benchmark(lambdas, gamma_ratio, k_groups=1, return_flag=False):
    terms, flags = pooled_accuracy_terms(lambdas, gamma_ratio, k_groups)
    value = float(terms.mean())
    if return_flag:
        return BenchmarkValue(value, bool(flags.any()))
    return value


class BiasPrediction(NamedTuple):
    value: float
    detectable: bool


def eigenvalue_bias_prediction(lam, sigma2, alpha, simplified=False):
    """Limit of a sample spike eigenvalue: lam (1 + sigma2 alpha / (lam - 1)).

    ``lam`` is the population eigenvalue (noise units).  Below the detection
    edge 1 + sqrt(alpha) the value returned is the bulk edge
    sigma2 (1 + sqrt(alpha))^2 and ``detectable`` is False.
    """
    if simplified:
        return BiasPrediction(float(lam + sigma2 * alpha), True)
    if alpha == 0:
        return BiasPrediction(float(lam), True)
    if lam <= 1.0 + np.sqrt(alpha):
        return BiasPrediction(float(sigma2 * (1.0 + np.sqrt(alpha)) ** 2), False)
    return BiasPrediction(float(lam * (1.0 + sigma2 * alpha / (lam - 1.0))), True)
