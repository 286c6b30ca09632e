"""Rank selection by singular-value hard thresholding with unknown noise level.

threshold = omega(beta) * median singular value,
omega(beta) ~= 0.56 beta^3 - 0.95 beta^2 + 1.82 beta + 1.43,
beta = min(n, p) / max(n, p).  Values strictly above the threshold count.
"""

from dataclasses import dataclass

import numpy as np

from .model import GroupDataset, ModelError


@dataclass(frozen=True)
class RankEstimate:
    rank: int
    threshold: float
    median_sv: float
    beta: float


def omega_beta(beta):
    return 0.56 * beta**3 - 0.95 * beta**2 + 1.82 * beta + 1.43


def gavish_donoho_rank(singular_values, n, p):
    sv = np.sort(np.asarray(singular_values, dtype=float).ravel())[::-1]
    if sv.size == 0:
        raise ModelError("no singular values given")
    if not np.any(sv > 0):
        raise ModelError("need at least one positive singular value")
    beta = min(n, p) / max(n, p)
    med = float(np.median(sv))
    if med <= 0:
        raise ModelError("median singular value is zero; threshold undefined")
    thr = omega_beta(beta) * med
    rank = int(np.count_nonzero(sv > thr))
    return RankEstimate(min(rank, min(n, p)), thr, med, beta)


def singular_values_from_scatter(scatter, n):
    """The min(n, p) singular values of Y, from the eigenvalues of S = Y^T Y."""
    p = scatter.shape[0]
    ev = np.linalg.eigvalsh(scatter)[::-1][: min(n, p)]
    return np.sqrt(np.clip(ev, 0.0, None))


def estimate_group_rank(data_k):
    if data_k.raw is not None:
        sv = np.linalg.svd(data_k.raw, compute_uv=False)
    else:
        sv = singular_values_from_scatter(data_k.scatter, data_k.n)
    return gavish_donoho_rank(sv, data_k.n, data_k.p)


def estimate_shared_dimension(data):
    """Threshold the stacked (sum n_k) x p data matrix.

    The stacked matrix's Gram matrix is sum_k S_k, so scatters suffice.
    """
    data = list(data)
    if not data:
        raise ModelError("need at least one group")
    p = data[0].p
    if any(d.p != p for d in data):
        raise ModelError("groups disagree on p")
    if len(data) == 1:
        return estimate_group_rank(data[0])
    n = sum(d.n for d in data)
    if all(d.raw is not None for d in data):
        sv = np.linalg.svd(np.vstack([d.raw for d in data]), compute_uv=False)
    else:
        sv = singular_values_from_scatter(sum(d.scatter for d in data), n)
    return gavish_donoho_rank(sv, n, p)


def pooled_dataset(data):
    """Single group with S = sum S_k and n = sum n_k."""
    data = list(data)
    raw = np.vstack([d.raw for d in data]) if all(d.raw is not None for d in data) else None
    return GroupDataset(sum(d.scatter for d in data), sum(d.n for d in data), raw)
