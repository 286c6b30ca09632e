"""Replicated simulation experiments: risk table, posterior-region coverage
and subspace accuracy as a function of the number of groups."""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from . import em, gibbs, ranks
from .gibbs import ChainConfig
from .model import FullBasis, ModelError, SubspaceBasis
from .sim import (
    GenConfig,
    average_steins_loss,
    generate_groups,
    pooled_accuracy_benchmark,
    subspace_accuracy,
)

DATA_MODELS = {
    "s=r=2": "shared_random",
    "s=r=2,Sigma_k=Sigma": "identical_covariance",
    "s=p": "full_rank_independent",
}
INFERENTIAL_MODELS = ("adaptive", "pooled", "s_hat=p")


@dataclass
class ExperimentReport:
    """Per-replication rows plus per-cell summaries."""

    name: str
    rows: List[Dict] = field(default_factory=list)
    summary: Dict[str, Dict] = field(default_factory=dict)
    replications: int = 0
    wall_clock: float = 0.0
    meta: Dict = field(default_factory=dict)

    def write_csv(self, path):
        if not self.rows:
            raise ValueError("report has no rows")
        cols = list(self.rows[0].keys())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _fmt(v) for k, v in row.items()})

    def to_json(self, include_timing=True):
        out = {
            "experiment": self.name,
            "replications": self.replications,
            "cells": self.summary,
            "meta": self.meta,
        }
        if include_timing:
            out["wall_clock_seconds"] = round(self.wall_clock, 3)
        return out

    def write_json(self, path, include_timing=True):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(include_timing), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def summarize(values):
    x = np.asarray(values, dtype=float)
    return {
        "mean": float(x.mean()),
        "q025": float(np.quantile(x, 0.025)),
        "q975": float(np.quantile(x, 0.975)),
        "count": int(x.size),
    }


def worker_count(default=1):
    env = os.environ.get("COVSHARE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return default


def _map(fn, jobs, n_workers):
    """Run jobs, preserving order; results are reduced by replication index."""
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        return list(ex.map(fn, jobs))


def _seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def adaptive_estimates(datasets, chain_config):
    """Ranks per group, pooled shared dimension, EM for V, one chain per group."""
    p = datasets[0].p
    r_hat = [ranks.estimate_group_rank(d).rank for d in datasets]
    s_hat = min(max(ranks.estimate_shared_dimension(datasets).rank, 1, max(r_hat)), p - 1)
    v = em.fit(datasets, s_hat).v_hat
    out = []
    for k, d in enumerate(datasets):
        ch = gibbs.run_chain(d, v, min(r_hat[k], s_hat), chain_config, group_id=k)
        out.append(gibbs.stein_estimator(ch, v))
    return out, {"s_hat": s_hat, "r_hat": r_hat}


def pooled_estimates(datasets, chain_config):
    """One spiked covariance (V = I_p) for the pooled scatter (sum S_k, sum n_k)."""
    p = datasets[0].p
    pooled = ranks.pooled_dataset(datasets)
    r = min(ranks.estimate_group_rank(pooled).rank, p - 1)
    full = FullBasis(p)
    ch = gibbs.run_chain(pooled, full, r, chain_config, group_id=0)
    est = gibbs.stein_estimator(ch, full)
    return [est] * len(datasets), {"r_hat": r}


def independent_estimates(datasets, chain_config):
    """s_hat = p: each group is its own spiked model with V = I_p and r_hat_k
    spikes, so the chain averages over eigenvectors in all p dimensions."""
    p = datasets[0].p
    full = FullBasis(p)
    out, rs = [], []
    for k, d in enumerate(datasets):
        r = min(ranks.estimate_group_rank(d).rank, p - 1)
        ch = gibbs.run_chain(d, full, r, chain_config, group_id=k)
        out.append(gibbs.stein_estimator(ch, full))
        rs.append(r)
    return out, {"r_hat": rs}


ESTIMATORS = {
    "adaptive": adaptive_estimates,
    "pooled": pooled_estimates,
    "s_hat=p": independent_estimates,
}


# ---------------------------------------------------------------------------
# risk table
# ---------------------------------------------------------------------------

TABLE1_DEFAULTS = dict(p=200, r=2, lambdas=(250.0, 25.0), sigma2=1.0, n_per_group=50, k_groups=10)
# desk-scale chains; the Stein estimator settles well within this length
TABLE1_CHAIN = dict(n_iter=1000, burn_in=250, thin=1)


def _table1_job(job):
    rep, data_label, overrides, chain_kw, seed = job
    cfg = dict(TABLE1_DEFAULTS)
    cfg.update(overrides)
    mode = DATA_MODELS[data_label]
    s = cfg["p"] if mode == "full_rank_independent" else cfg["r"]
    gen = GenConfig(
        p=cfg["p"],
        s=s,
        r=cfg["r"],
        k_groups=cfg["k_groups"],
        n_per_group=cfg["n_per_group"],
        lambdas=cfg["lambdas"],
        sigma2=cfg["sigma2"],
        subspace_mode=mode,
        seed=_seed(seed, rep, list(DATA_MODELS).index(data_label)),
    )
    datasets, truth = generate_groups(gen)
    rows = []
    for j, name in enumerate(INFERENTIAL_MODELS):
        chain_cfg = ChainConfig(seed=_seed(seed, rep, 100 + j), **chain_kw)
        t0 = time.perf_counter()
        est, info = ESTIMATORS[name](datasets, chain_cfg)
        loss = average_steins_loss(truth.sigmas, est)
        rows.append(
            {
                "replication": rep,
                "data_model": data_label,
                "inferential_model": name,
                "loss": loss,
                "s_hat": info.get("s_hat", ""),
                "seconds": round(time.perf_counter() - t0, 3),
            }
        )
    return rows


def run_table1(overrides=None, replications=10, seed=0, chain=None, n_workers=None):
    """Average Stein's loss of three inferential models on three data models."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    overrides = dict(overrides or {})
    chain_kw = dict(TABLE1_CHAIN if chain is None else chain)
    n_workers = n_workers or worker_count()
    jobs = [
        (rep, label, overrides, chain_kw, seed)
        for rep in range(replications)
        for label in DATA_MODELS
    ]
    t0 = time.perf_counter()
    results = _map(_table1_job, jobs, n_workers)
    rows = [row for rs in results for row in rs]
    rows.sort(key=lambda r: (r["replication"], list(DATA_MODELS).index(r["data_model"])))
    for row in rows:
        row.pop("seconds")
    report = ExperimentReport("table1", rows, replications=replications)
    for label in DATA_MODELS:
        for name in INFERENTIAL_MODELS:
            vals = [
                r["loss"]
                for r in rows
                if r["data_model"] == label and r["inferential_model"] == name
            ]
            report.summary[f"{label}|{name}"] = summarize(vals)
    report.wall_clock = time.perf_counter() - t0
    cfg = dict(TABLE1_DEFAULTS)
    cfg.update(overrides)
    report.meta = {"config": _jsonable(cfg), "chain": chain_kw, "seed": seed}
    return report


def table1_matrix(report):
    """3 x 3 array of mean losses, rows = data models, columns = inferential models."""
    return np.array(
        [
            [report.summary[f"{d}|{m}"]["mean"] for m in INFERENTIAL_MODELS]
            for d in DATA_MODELS
        ]
    )


# ---------------------------------------------------------------------------
# coverage of hull-peeled posterior regions
# ---------------------------------------------------------------------------

COVERAGE_GROUPS = (
    # (eigenvalue ratio, orientation of the first eigenvector)
    (10.0, math.pi / 4),
    (10.0, -math.pi / 4),
    (3.0, -math.pi / 4),
    (3.0, 0.0),
    (1.0, 0.0),
)


COVERAGE_CHAIN = dict(n_iter=3000, burn_in=500, thin=1)


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def truth_angle_logratio(v_aligned, sigma_true, sigma2_true):
    """Orientation and log eigenvalue ratio of V^T Sigma V - sigma2 I."""
    m = v_aligned.T @ sigma_true @ v_aligned - sigma2_true * np.eye(2)
    ev, vec = np.linalg.eigh(0.5 * (m + m.T))
    ev, vec = ev[::-1], vec[:, ::-1]
    angle = float(gibbs._fold(np.arctan2(vec[1, 0], vec[0, 0])))
    with np.errstate(divide="ignore"):
        ratio = float(np.log(ev[0] / ev[1])) if ev[1] > 0 else math.inf
    return angle, ratio


def _coverage_job(job):
    rep, lam1, chain_kw, seed, target = job
    groups = COVERAGE_GROUPS
    lambdas = np.array([[lam1, lam1 / ratio] for ratio, _ in groups])
    gen = GenConfig(
        p=200,
        s=2,
        r=2,
        k_groups=len(groups),
        n_per_group=50,
        lambdas=lambdas,
        sigma2=1.0,
        subspace_mode="shared_random",
        seed=_seed(seed, rep),
        eigvecs=[_rotation(theta) for _, theta in groups],
    )
    datasets, truth = generate_groups(gen)
    v_hat = em.fit(datasets, 2).v_hat
    rot = gibbs.procrustes_align(v_hat, truth.v)
    v_al = SubspaceBasis(v_hat.v @ rot)
    rows = []
    chain_cfg = ChainConfig(seed=_seed(seed, rep, 7), **chain_kw)
    for k, (ratio, theta) in enumerate(groups):
        ch = gibbs.run_chain(datasets[k], v_al, 2, chain_cfg, group_id=k)
        angle, logr = gibbs.chain_angle_logratio(ch)
        t_angle, t_ratio = truth_angle_logratio(v_al.v, truth.sigmas[k], 1.0)
        covered = ""
        if ratio != 1.0:
            finite = np.isfinite(logr)
            region = gibbs.hull_peel_region(np.column_stack([angle[finite], logr[finite]]), target)
            covered = int(region.contains((t_angle, t_ratio)))
        rows.append(
            {
                "replication": rep,
                "group": k,
                "ratio": ratio,
                "orientation": theta,
                "true_angle": t_angle,
                "true_log_ratio": t_ratio,
                "covered": covered,
            }
        )
    return rows


def run_coverage(replications=200, seed=0, lam1=100.0, chain=None, target=0.95, n_workers=None, min_replications=50):
    """Frequentist coverage of 95% hull-peeled regions for (angle, log ratio)."""
    if replications < min_replications:
        raise ValueError(f"replications must be >= {min_replications}")
    chain_kw = dict(COVERAGE_CHAIN if chain is None else chain)
    n_workers = n_workers or worker_count()
    jobs = [(rep, lam1, chain_kw, seed, target) for rep in range(replications)]
    t0 = time.perf_counter()
    rows = [row for rs in _map(_coverage_job, jobs, n_workers) for row in rs]
    report = ExperimentReport("coverage", rows, replications=replications)
    for k, (ratio, theta) in enumerate(COVERAGE_GROUPS):
        if ratio == 1.0:
            report.summary[f"group{k}"] = {"ratio": ratio, "excluded": True}
            continue
        hits = np.array([r["covered"] for r in rows if r["group"] == k], dtype=float)
        cov = float(hits.mean())
        report.summary[f"group{k}"] = {
            "ratio": ratio,
            "orientation": theta,
            "coverage": cov,
            "std_error": float(math.sqrt(cov * (1 - cov) / hits.size)),
            "count": int(hits.size),
        }
    report.wall_clock = time.perf_counter() - t0
    report.meta = {"lam1": lam1, "target": target, "chain": chain_kw, "seed": seed}
    return report


# ---------------------------------------------------------------------------
# subspace accuracy versus number of groups
# ---------------------------------------------------------------------------

LAMBDA_SETS = {
    "isotropic": (25.0, 25.0),
    "moderate": (75.0, 25.0),
    "high": (250.0, 5.0),
}


def _accuracy_job(job):
    rep, k, label, lambdas, p, n, seed = job
    gen = GenConfig(
        p=p,
        s=2,
        r=2,
        k_groups=k,
        n_per_group=n,
        lambdas=lambdas,
        subspace_mode="shared_random",
        seed=_seed(seed, rep, k, list(LAMBDA_SETS).index(label) if label in LAMBDA_SETS else 99),
    )
    datasets, truth = generate_groups(gen)
    v_hat = em.fit(datasets, 2).v_hat
    # the benchmark is stated in population eigenvalues of Sigma (noise units)
    bench = pooled_accuracy_benchmark(np.asarray(lambdas) + 1.0, p / n, k)
    return {
        "K": k,
        "lambda_set": label,
        "replication": rep,
        "accuracy": subspace_accuracy(v_hat, truth.v),
        "benchmark": bench,
    }


def run_accuracy_vs_k(k_values=(1, 2, 4, 8), lambda_sets=None, replications=20, seed=0, p=200, n=50, n_workers=None):
    """Mean tr(Vh Vh^T V V^T)/s per (K, eigenvalue set) next to the pooled benchmark."""
    lambda_sets = dict(lambda_sets or LAMBDA_SETS)
    if not k_values or not lambda_sets:
        raise ValueError("k_values and lambda_sets must be nonempty")
    n_workers = n_workers or worker_count()
    jobs = [
        (rep, k, label, lam, p, n, seed)
        for label, lam in lambda_sets.items()
        for k in k_values
        for rep in range(replications)
    ]
    t0 = time.perf_counter()
    rows = _map(_accuracy_job, jobs, n_workers)
    report = ExperimentReport("accuracy", rows, replications=replications)
    for label in lambda_sets:
        for k in k_values:
            acc = [r["accuracy"] for r in rows if r["K"] == k and r["lambda_set"] == label]
            bench = [r["benchmark"] for r in rows if r["K"] == k and r["lambda_set"] == label]
            cell = summarize(acc)
            cell["benchmark"] = bench[0]
            report.summary[f"{label}|K={k}"] = cell
    report.wall_clock = time.perf_counter() - t0
    report.meta = {
        "lambda_sets": {k: list(v) for k, v in lambda_sets.items()},
        "p": p,
        "n": n,
        "seed": seed,
    }
    return report


def accuracy_plot_rows(report):
    """Plot-ready rows: K, lambda_set, accuracy (mean), benchmark."""
    out = []
    for key, cell in report.summary.items():
        label, kpart = key.split("|")
        out.append(
            {
                "K": int(kpart[2:]),
                "lambda_set": label,
                "accuracy": cell["mean"],
                "benchmark": cell["benchmark"],
            }
        )
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
