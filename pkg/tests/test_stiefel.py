import math

import numpy as np
import pytest

from covshare.model import ModelError, SubspaceBasis
from covshare.stiefel import (
    OptimizerOptions,
    TraceObjective,
    cayley_step,
    euclidean_gradient,
    maximize,
)


def rand_basis(rng, p, s):
    return SubspaceBasis.from_matrix(rng.standard_normal((p, s)))


def rand_scatter(rng, p, n=None):
    y = rng.standard_normal((n or 2 * p, p)) * np.linspace(3.0, 0.5, p)
    return y.T @ y


def test_gradient_identity_weight():
    rng = np.random.default_rng(0)
    s, v = rand_scatter(rng, 5), rand_basis(rng, 5, 2)
    np.testing.assert_allclose(euclidean_gradient(TraceObjective([(s, np.eye(2))]), v), s @ v.v)


def test_gradient_zero_weight():
    rng = np.random.default_rng(1)
    obj = TraceObjective([(rand_scatter(rng, 5), np.zeros((2, 2)))])
    assert not np.any(euclidean_gradient(obj, rand_basis(rng, 5, 2)))


def test_gradient_vs_finite_differences():
    rng = np.random.default_rng(2)
    p, s = 6, 2
    b1 = np.array([[1.0, 0.4], [0.4, -0.3]])
    obj = TraceObjective([(rand_scatter(rng, p), b1), (rand_scatter(rng, p), np.diag([0.2, 2.0]))])
    x = rng.standard_normal((p, s))
    g = euclidean_gradient(obj, x)
    h = 1e-6
    fd = np.zeros_like(x)
    for i in range(p):
        for j in range(s):
            e = np.zeros_like(x)
            e[i, j] = h
            fd[i, j] = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_nonsymmetric_weight_rejected():
    with pytest.raises(ModelError):
        TraceObjective([(np.eye(3), np.array([[1.0, 2.0], [0.0, 1.0]]))])


class TestCayley:
    def test_zero_step(self):
        rng = np.random.default_rng(3)
        v = rand_basis(rng, 8, 2)
        out = cayley_step(v, rng.standard_normal((8, 2)), 0.0)
        np.testing.assert_array_equal(out.v, v.v)

    @pytest.mark.parametrize("tau", [1e-3, 0.1, 1.0, 10.0, 1e3])
    def test_orthogonality(self, tau):
        rng = np.random.default_rng(4)
        v = rand_basis(rng, 8, 2)
        out = cayley_step(v, rng.standard_normal((8, 2)), tau)
        assert np.linalg.norm(out.v.T @ out.v - np.eye(2)) <= 1e-9

    @pytest.mark.parametrize("g1,g2,tau", [(0.3, 1.0, 0.5), (-2.0, -0.7, 2.0), (1.0, 4.0, 0.01)])
    def test_two_by_two_rotation(self, g1, g2, tau):
        # W = g2 J with J the quarter turn; the Cayley map is the rotation by -2 atan(tau g2 / 2)
        v = np.array([[1.0], [0.0]])
        out = cayley_step(v, np.array([[g1], [g2]]), tau).v[:, 0]
        phi = 2 * math.atan(tau * g2 / 2)
        np.testing.assert_allclose(out, [math.cos(phi), -math.sin(phi)], atol=1e-13)

    def test_negative_step(self):
        with pytest.raises(ValueError):
            cayley_step(np.eye(3)[:, :1], np.ones((3, 1)), -1.0)


class TestMaximize:
    def test_identity_weight_finds_top_eigenspace(self):
        rng = np.random.default_rng(5)
        p, s = 20, 3
        sm = rand_scatter(rng, p, 50)
        obj = TraceObjective([(sm, np.eye(s))])
        v, trace = maximize(obj, rand_basis(rng, p, s), OptimizerOptions(max_iters=2000, grad_tol=1e-10))
        ev, vec = np.linalg.eigh(sm)
        top = vec[:, -s:]
        assert trace[-1] == pytest.approx(0.5 * ev[-s:].sum(), rel=1e-9)
        cosines = np.linalg.svd(top.T @ v.v, compute_uv=False)
        assert cosines.min() > 1 - 1e-6

    def test_trace_is_monotone(self):
        rng = np.random.default_rng(6)
        obj = TraceObjective([(rand_scatter(rng, 10), np.diag([3.0, 1.0]))])
        _, trace = maximize(obj, rand_basis(rng, 10, 2))
        assert np.all(np.diff(trace) >= -1e-12 * abs(trace[-1]))

    def test_flat_objective_returns_start(self):
        rng = np.random.default_rng(7)
        v0 = rand_basis(rng, 6, 2)
        v, trace = maximize(TraceObjective([(rand_scatter(rng, 6), np.zeros((2, 2)))]), v0)
        assert v is v0
        assert len(trace) == 1

    def test_two_term_against_restart_oracle(self):
        # best of 200 BFGS restarts over the polar parameterization, computed
        # independently and frozen
        oracle_best = 177.0093472473736
        rng = np.random.default_rng(5)
        p, s = 10, 2
        y1 = rng.standard_normal((15, p)) * np.linspace(3, 0.5, p)
        y2 = rng.standard_normal((15, p)) * np.linspace(0.5, 3, p)
        obj = TraceObjective(
            [
                (y1.T @ y1, np.diag([2.0, 0.5])),
                (y2.T @ y2, np.array([[1.0, 0.3], [0.3, -0.4]])),
            ]
        )
        best = max(
            obj.value(maximize(obj, rand_basis(np.random.default_rng(i), p, s))[0].v)
            for i in range(5)
        )
        assert best == pytest.approx(oracle_best, abs=1e-4)

    def test_result_is_orthonormal(self):
        rng = np.random.default_rng(8)
        obj = TraceObjective([(rand_scatter(rng, 30), np.diag([5.0, 2.0, -1.0]))])
        v, _ = maximize(obj, rand_basis(rng, 30, 3))
        assert np.linalg.norm(v.v.T @ v.v - np.eye(3)) < 1e-12

    def test_options_validated(self):
        with pytest.raises(ValueError):
            OptimizerOptions(max_iters=0)
        with pytest.raises(ValueError):
            OptimizerOptions(armijo_c=1.5)
