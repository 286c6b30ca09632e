import csv
import json
import math

import numpy as np
import pytest

from covshare import experiments as ex

SMALL = dict(p=20, k_groups=3, n_per_group=30)
SHORT = dict(n_iter=60, burn_in=20, thin=1)


@pytest.fixture(scope="module")
def small_table():
    return ex.run_table1(SMALL, replications=2, seed=4, chain=SHORT)


def test_table1_layout(small_table):
    assert len(small_table.rows) == 2 * 3 * 3
    assert set(small_table.summary) == {
        f"{d}|{m}" for d in ex.DATA_MODELS for m in ex.INFERENTIAL_MODELS
    }
    m = ex.table1_matrix(small_table)
    assert m.shape == (3, 3) and np.all(m > 0)
    assert all(r["s_hat"] != "" for r in small_table.rows if r["inferential_model"] == "adaptive")


def test_table1_is_reproducible(small_table):
    again = ex.run_table1(SMALL, replications=2, seed=4, chain=SHORT)
    assert again.rows == small_table.rows


def test_parallel_matches_serial(small_table):
    par = ex.run_table1(SMALL, replications=2, seed=4, chain=SHORT, n_workers=2)
    assert par.rows == small_table.rows


def test_report_files(small_table, tmp_path):
    small_table.write_csv(tmp_path / "t.csv")
    small_table.write_json(tmp_path / "t.json", include_timing=False)
    with open(tmp_path / "t.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(small_table.rows)
    assert float(rows[0]["loss"]) == small_table.rows[0]["loss"]
    summary = json.loads((tmp_path / "t.json").read_text())
    assert "wall_clock_seconds" not in summary
    assert summary["replications"] == 2


def test_coverage_layout():
    rep = ex.run_coverage(replications=2, seed=1, chain=SHORT, min_replications=1)
    assert len(rep.rows) == 2 * len(ex.COVERAGE_GROUPS)
    assert rep.summary["group4"] == {"ratio": 1.0, "excluded": True}
    assert all(r["covered"] == "" for r in rep.rows if r["ratio"] == 1.0)
    assert all(r["covered"] in (0, 1) for r in rep.rows if r["ratio"] != 1.0)


def test_coverage_needs_replications():
    with pytest.raises(ValueError):
        ex.run_coverage(replications=10)


def test_truth_angle_and_ratio():
    c, s = math.cos(0.3), math.sin(0.3)
    o = np.array([[c, -s], [s, c]])
    sigma = o @ np.diag([11.0, 2.0]) @ o.T + np.eye(2)
    angle, ratio = ex.truth_angle_logratio(np.eye(2), sigma, 1.0)
    assert angle == pytest.approx(0.3)
    assert ratio == pytest.approx(math.log(5.5))


def test_accuracy_layout():
    rep = ex.run_accuracy_vs_k(k_values=(1, 2), lambda_sets={"iso": (25.0, 25.0)}, replications=2, p=30, n=20)
    rows = ex.accuracy_plot_rows(rep)
    assert [(r["K"], r["lambda_set"]) for r in rows] == [(1, "iso"), (2, "iso")]
    assert set(rows[0]) == {"K", "lambda_set", "accuracy", "benchmark"}
    assert all(0 <= r["accuracy"] <= 1 for r in rows)
    assert rows[1]["benchmark"] > rows[0]["benchmark"]


def test_worker_count(monkeypatch):
    monkeypatch.setenv("COVSHARE_THREADS", "3")
    assert ex.worker_count() == 3
    monkeypatch.setenv("COVSHARE_THREADS", "junk")
    assert ex.worker_count() == 1
