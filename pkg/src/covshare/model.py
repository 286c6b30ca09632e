"""Domain types and exact likelihood computations for the shared-subspace
spiked covariance model

    Sigma_k = V Psi_k V^T + sigma2_k I,   Psi_k = O_k Lambda_k O_k^T.

Spike sizes are stored as omega = lambda / (1 + lambda).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ModelError(ValueError):
    """Invalid model inputs (shape, range or degeneracy)."""


class NumericalError(ModelError):
    """A computation hit a degenerate or non-finite quantity."""


class SingularModelError(ModelError):
    """An omega entry equal to one: the covariance has an infinite spike."""


ORTHO_TOL = 1e-10


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ModelError(f"{name} must be a 2-d array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class GroupDataset:
    """Scatter matrix S = Y^T Y of one group with its degrees of freedom n."""

    scatter: np.ndarray
    n: int
    raw: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        s = _as_matrix(self.scatter, "scatter")
        if s.shape[0] != s.shape[1]:
            raise ModelError(f"scatter must be square, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ModelError("scatter has non-finite entries")
        scale = max(np.abs(s).max(), 1e-300)
        if np.abs(s - s.T).max() > 1e-10 * scale:
            raise ModelError("scatter is not symmetric")
        s = 0.5 * (s + s.T)
        tr = np.trace(s)
        if s.shape[0] and np.linalg.eigvalsh(s)[0] < -1e-8 * max(tr, 0.0):
            raise ModelError("scatter is not positive semidefinite")
        if int(self.n) != self.n or self.n < 1:
            raise ModelError(f"n must be a positive integer, got {self.n}")
        s.setflags(write=False)
        object.__setattr__(self, "scatter", s)
        object.__setattr__(self, "n", int(self.n))
        if self.raw is not None:
            raw = _as_matrix(self.raw, "raw")
            gram = raw.T @ raw
            if raw.shape[1] != s.shape[0] or np.linalg.norm(gram - s) > 1e-8 * max(
                np.linalg.norm(s), 1e-300
            ):
                raise ModelError("raw data does not reproduce the scatter matrix")
            raw.setflags(write=False)
            object.__setattr__(self, "raw", raw)

    @property
    def p(self):
        return self.scatter.shape[0]


@dataclass(frozen=True)
class SubspaceBasis:
    """p x s matrix with orthonormal columns; only span(v) is identified."""

    v: np.ndarray

    def __post_init__(self):
        v = _as_matrix(self.v, "v")
        p, s = v.shape
        if not 0 < s < p:
            raise ModelError(f"need 0 < s < p, got p={p}, s={s}")
        if np.linalg.norm(v.T @ v - np.eye(s)) > ORTHO_TOL:
            raise ModelError("basis columns are not orthonormal")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def p(self):
        return self.v.shape[0]

    @property
    def s(self):
        return self.v.shape[1]

    @classmethod
    def from_matrix(cls, a):
        """Orthonormalize an arbitrary full-column-rank matrix."""
        q, r = np.linalg.qr(np.asarray(a, dtype=float))
        return cls(q * np.where(np.diag(r) < 0, -1.0, 1.0))


@dataclass(frozen=True)
class FullBasis:
    """V = I_p: the unrestricted model with s = p."""

    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ModelError("need p >= 1")

    @property
    def s(self):
        return self.p

    @property
    def v(self):
        return np.eye(self.p)


@dataclass(frozen=True)
class GroupSpikeParams:
    """Projected spiked covariance of one group: (sigma2, O, omega)."""

    sigma2: float
    eigvecs: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        o = _as_matrix(self.eigvecs, "eigvecs")
        w = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ModelError(f"sigma2 must be positive, got {self.sigma2}")
        if w.ndim != 1 or w.shape[0] != o.shape[1]:
            raise ModelError("omega length must match the number of eigenvector columns")
        if o.shape[1] > o.shape[0]:
            raise ModelError("eigvecs must have r <= s columns")
        if np.linalg.norm(o.T @ o - np.eye(o.shape[1])) > ORTHO_TOL:
            raise ModelError("eigvecs columns are not orthonormal")
        if np.any(w < 0) or np.any(w >= 1) or not np.all(np.isfinite(w)):
            if np.any(w == 1):
                raise SingularModelError("omega = 1 gives an infinite spike")
            raise ModelError("omega entries must lie in [0, 1)")
        if np.any(np.diff(w) > 0):
            raise ModelError("omega must be sorted in decreasing order")
        o = o.copy()
        o.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "eigvecs", o)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def r(self):
        return self.omega.shape[0]

    @property
    def lambdas(self):
        return omega_to_lambda(self.omega)

    @classmethod
    def from_lambdas(cls, sigma2, eigvecs, lambdas):
        return cls(sigma2, eigvecs, lambda_to_omega(lambdas))


@dataclass(frozen=True)
class PartitionedPsi:
    """Psi = blockdiag(O Lambda O^T, D): a group block on the first r basis
    columns and a diagonal block D shared by every group."""

    group_block: GroupSpikeParams
    shared_diag: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.shared_diag, dtype=float))
        if d.ndim != 1 or np.any(d <= 0):
            raise ModelError("shared_diag entries must be positive")
        object.__setattr__(self, "shared_diag", d)

    @property
    def s(self):
        return self.group_block.eigvecs.shape[0] + self.shared_diag.shape[0]

    def psi(self):
        r = self.group_block.eigvecs.shape[0]
        out = np.zeros((self.s, self.s))
        o = self.group_block.eigvecs
        out[:r, :r] = (o * self.group_block.lambdas) @ o.T
        out[r:, r:] = np.diag(self.shared_diag)
        return out


@dataclass(frozen=True)
class ModelConfig:
    p: int
    s: int
    r: int
    k_groups: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.p, self.s, self.k_groups) < 1 or self.r < 0:
            raise ModelError("p, s, k_groups must be positive and r nonnegative")
        if not self.r <= self.s < self.p:
            raise ModelError(f"need r <= s < p, got r={self.r}, s={self.s}, p={self.p}")
        if self.seed < 0:
            raise ModelError("seed must be unsigned")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def scatter_from_data(raw):
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ModelError("data must be a 2-d array")
    if not np.all(np.isfinite(raw)):
        bad = np.argwhere(~np.isfinite(raw))[0]
        raise ModelError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
    n, p = raw.shape
    if n < 1 or p < 2:
        raise ModelError(f"need n >= 1 rows and p >= 2 columns, got {raw.shape}")
    s = raw.T @ raw
    return GroupDataset(0.5 * (s + s.T), n, raw)


def lambda_to_omega(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ModelError("lambda must be finite and nonnegative")
    return lam / (lam + 1.0)


def omega_to_lambda(omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0) or np.any(omega >= 1):
        raise ModelError("omega must lie in [0, 1)")
    return omega / (1.0 - omega)


def omega_lambda(omega=None, lam=None):
    """Convert between the two spike parameterizations (exactly one argument)."""
    if (omega is None) == (lam is None):
        raise ModelError("pass exactly one of omega or lam")
    return omega_to_lambda(omega) if lam is None else lambda_to_omega(lam)


def _check_dims(v, params):
    if v.s != params.eigvecs.shape[0]:
        raise ModelError(
            f"basis has s={v.s} columns but eigvecs have {params.eigvecs.shape[0]} rows"
        )


def group_eigvecs(v, params):
    """U_k = V O_k (p x r)."""
    _check_dims(v, params)
    return v.v @ params.eigvecs


def assemble_sigma(v, params):
    u = group_eigvecs(v, params)
    out = (u * params.lambdas) @ u.T
    out[np.diag_indices_from(out)] += 1.0
    out *= params.sigma2
    return 0.5 * (out + out.T)


def precision_woodbury(params, v):
    """Sigma^{-1} = (I - U Omega U^T) / sigma2."""
    if np.any(params.omega >= 1):
        raise SingularModelError("omega = 1 gives a singular precision")
    u = group_eigvecs(v, params)
    out = -(u * params.omega) @ u.T
    out[np.diag_indices_from(out)] += 1.0
    out /= params.sigma2
    return 0.5 * (out + out.T)


def log_det_sigma(params, p):
    """log|Sigma| = p log sigma2 + sum log(1 + lambda_i) = p log sigma2 - sum log(1 - omega_i)."""
    return p * np.log(params.sigma2) - np.sum(np.log1p(-params.omega))


def projected_scatter(v, data):
    """V^T S V, symmetrized."""
    if isinstance(v, FullBasis):
        return 0.5 * (data.scatter + data.scatter.T)
    a = v.v.T @ data.scatter @ v.v
    return 0.5 * (a + a.T)


def wishart_loglik(params, v, data):
    """Wishart log-likelihood in Sigma, additive constant dropped.

    tr(Sigma^{-1} S) only needs tr(S) and the projection V^T S V.
    """
    a = projected_scatter(v, data)
    o = params.eigvecs
    quad = np.einsum("ij,ik,kj->j", o, a, o) if o.shape[1] else np.zeros(0)
    tr_term = (np.trace(data.scatter) - np.dot(params.omega, quad)) / params.sigma2
    return -0.5 * data.n * log_det_sigma(params, v.p) - 0.5 * tr_term
