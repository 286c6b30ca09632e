import math

import numpy as np
import pytest

from covshare.model import (
    FullBasis,
    GroupDataset,
    GroupSpikeParams,
    ModelConfig,
    ModelError,
    PartitionedPsi,
    SingularModelError,
    SubspaceBasis,
    assemble_sigma,
    lambda_to_omega,
    log_det_sigma,
    omega_lambda,
    omega_to_lambda,
    precision_woodbury,
    projected_scatter,
    scatter_from_data,
    wishart_loglik,
)


def random_params(rng, p, s, r, sigma2=1.7):
    v = SubspaceBasis.from_matrix(rng.standard_normal((p, s)))
    o = np.linalg.qr(rng.standard_normal((s, r)))[0]
    lam = np.sort(rng.uniform(0.5, 20.0, r))[::-1]
    return v, GroupSpikeParams.from_lambdas(sigma2, o, lam)


def dense_sigma(v, params):
    u = v.v @ params.eigvecs
    return params.sigma2 * (u @ np.diag(params.lambdas) @ u.T + np.eye(v.p))


def e1_setup(lam=3.0, sigma2=1.0):
    v = SubspaceBasis(np.array([[1.0], [0.0]]))
    return v, GroupSpikeParams.from_lambdas(sigma2, np.array([[1.0]]), [lam])


class TestScatter:
    def test_hand_product(self):
        d = scatter_from_data([[1, 2], [3, 4]])
        np.testing.assert_array_equal(d.scatter, [[10, 14], [14, 20]])
        assert d.n == 2

    def test_identity_rows(self):
        d = scatter_from_data(np.eye(2))
        np.testing.assert_array_equal(d.scatter, np.eye(2))
        assert d.n == 2

    def test_zero_matrix(self):
        d = scatter_from_data(np.zeros((3, 4)))
        np.testing.assert_array_equal(d.scatter, np.zeros((4, 4)))
        assert d.n == 3

    def test_nonfinite_reports_location(self):
        with pytest.raises(ModelError, match="row 1, column 0"):
            scatter_from_data([[1.0, 2.0], [np.nan, 1.0]])

    def test_symmetry_is_exact(self):
        y = np.random.default_rng(0).standard_normal((7, 5))
        s = scatter_from_data(y).scatter
        assert np.array_equal(s, s.T)


class TestValidation:
    def test_asymmetric_scatter(self):
        with pytest.raises(ModelError, match="symmetric"):
            GroupDataset(np.array([[1.0, 0.5], [0.0, 1.0]]), 3)

    def test_indefinite_scatter(self):
        with pytest.raises(ModelError, match="semidefinite"):
            GroupDataset(np.diag([1.0, -1.0]), 3)

    def test_rank_deficient_scatter_accepted(self):
        y = np.random.default_rng(1).standard_normal((2, 6))
        assert GroupDataset(y.T @ y, 2).p == 6

    @pytest.mark.parametrize("n", [0, -1, 2.5])
    def test_bad_n(self, n):
        with pytest.raises(ModelError):
            GroupDataset(np.eye(2), n)

    def test_raw_must_match(self):
        with pytest.raises(ModelError, match="reproduce"):
            GroupDataset(np.eye(2), 2, raw=2 * np.eye(2))

    def test_basis_checks(self):
        with pytest.raises(ModelError, match="orthonormal"):
            SubspaceBasis(np.array([[1.0], [1.0]]))
        with pytest.raises(ModelError, match="0 < s < p"):
            SubspaceBasis(np.eye(3))

    def test_from_matrix_spans_input(self):
        a = np.random.default_rng(2).standard_normal((6, 2))
        b = SubspaceBasis.from_matrix(a).v
        np.testing.assert_allclose(b @ b.T @ a, a, atol=1e-12)

    def test_params_checks(self):
        o = np.eye(2)
        with pytest.raises(ModelError, match="decreasing"):
            GroupSpikeParams(1.0, o, [0.2, 0.5])
        with pytest.raises(SingularModelError):
            GroupSpikeParams(1.0, o, [1.0, 0.5])
        with pytest.raises(ModelError, match="sigma2"):
            GroupSpikeParams(0.0, o, [0.5, 0.2])
        with pytest.raises(ModelError, match="orthonormal"):
            GroupSpikeParams(1.0, np.ones((2, 2)), [0.5, 0.2])

    def test_model_config(self):
        ModelConfig(p=10, s=3, r=2)
        with pytest.raises(ModelError):
            ModelConfig(p=10, s=10, r=2)
        with pytest.raises(ModelError):
            ModelConfig(p=10, s=2, r=3)

    def test_immutable(self):
        d = GroupDataset(np.eye(2), 2)
        with pytest.raises(ValueError):
            d.scatter[0, 0] = 5.0


class TestOmegaLambda:
    @pytest.mark.parametrize("lam,omega", [(1.0, 0.5), (0.0, 0.0), (99.0, 0.99)])
    def test_values(self, lam, omega):
        assert lambda_to_omega(lam) == pytest.approx(omega, abs=1e-15)
        assert omega_to_lambda(omega) == pytest.approx(lam, rel=1e-12)

    def test_round_trip(self):
        lam = np.logspace(-6, 6, 50)
        np.testing.assert_allclose(omega_to_lambda(lambda_to_omega(lam)), lam, rtol=1e-9)

    def test_dispatch(self):
        assert omega_lambda(lam=3.0) == pytest.approx(0.75)
        assert omega_lambda(omega=0.75) == pytest.approx(3.0)
        with pytest.raises(ModelError):
            omega_lambda()
        with pytest.raises(ModelError):
            omega_to_lambda(1.0)


class TestAssembleAndPrecision:
    def test_no_spikes(self):
        rng = np.random.default_rng(3)
        v = SubspaceBasis.from_matrix(rng.standard_normal((5, 2)))
        par = GroupSpikeParams(2.0, np.eye(2), [0.0, 0.0])
        np.testing.assert_allclose(assemble_sigma(v, par), 2 * np.eye(5), atol=1e-14)
        np.testing.assert_allclose(precision_woodbury(par, v), 0.5 * np.eye(5), atol=1e-14)

    def test_axis_spike(self):
        v, par = e1_setup()
        np.testing.assert_allclose(assemble_sigma(v, par), np.diag([4.0, 1.0]))
        np.testing.assert_allclose(precision_woodbury(par, v), np.diag([0.25, 1.0]))

    @pytest.mark.parametrize("seed", range(5))
    def test_woodbury_vs_dense_inverse(self, seed):
        v, par = random_params(np.random.default_rng(seed), p=10, s=4, r=3)
        dense = np.linalg.inv(dense_sigma(v, par))
        np.testing.assert_allclose(precision_woodbury(par, v), dense, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(assemble_sigma(v, par), dense_sigma(v, par), rtol=1e-12)

    def test_dimension_mismatch(self):
        v, _ = e1_setup()
        par = GroupSpikeParams(1.0, np.eye(2), [0.5, 0.2])
        with pytest.raises(ModelError):
            assemble_sigma(v, par)


class TestLogDet:
    def test_values(self):
        v, par = e1_setup()
        assert log_det_sigma(par, 2) == pytest.approx(math.log(4.0))
        assert log_det_sigma(GroupSpikeParams(1.0, np.eye(1), [0.0]), 4) == 0.0
        assert log_det_sigma(GroupSpikeParams(2.0, np.eye(1), [0.0]), 3) == pytest.approx(
            3 * math.log(2)
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_vs_dense(self, seed):
        v, par = random_params(np.random.default_rng(10 + seed), p=8, s=3, r=2)
        assert log_det_sigma(par, 8) == pytest.approx(
            np.linalg.slogdet(dense_sigma(v, par))[1], rel=1e-12
        )


class TestWishart:
    def test_identity_case(self):
        p = 4
        v = SubspaceBasis(np.eye(p)[:, :1])
        par = GroupSpikeParams(1.0, np.eye(1), [0.0])
        assert wishart_loglik(par, v, GroupDataset(np.eye(p), 1)) == pytest.approx(-p / 2)

    @pytest.mark.parametrize("seed", range(3))
    def test_vs_dense(self, seed):
        rng = np.random.default_rng(20 + seed)
        v, par = random_params(rng, p=8, s=3, r=2)
        y = rng.standard_normal((12, 8))
        data = GroupDataset(y.T @ y, 12)
        sig = dense_sigma(v, par)
        ref = -0.5 * 12 * np.linalg.slogdet(sig)[1] - 0.5 * np.trace(np.linalg.solve(sig, data.scatter))
        assert wishart_loglik(par, v, data) == pytest.approx(ref, rel=1e-11)

    def test_scaling_linearity(self):
        rng = np.random.default_rng(30)
        v, par = random_params(rng, p=6, s=2, r=2)
        y = rng.standard_normal((9, 6))
        s = y.T @ y
        a = 3.5
        base = wishart_loglik(par, v, GroupDataset(s, 9))
        scaled = wishart_loglik(par, v, GroupDataset(a * s, 9))
        tr = np.trace(precision_woodbury(par, v) @ s)
        assert scaled - base == pytest.approx(-tr * (a - 1) / 2, rel=1e-10)


class TestFullBasisAndPartition:
    def test_full_basis(self):
        fb = FullBasis(4)
        assert fb.s == fb.p == 4
        np.testing.assert_array_equal(fb.v, np.eye(4))
        d = GroupDataset(np.diag([1.0, 2.0, 3.0, 4.0]), 5)
        np.testing.assert_array_equal(projected_scatter(fb, d), d.scatter)

    def test_partitioned_psi(self):
        block = GroupSpikeParams.from_lambdas(1.0, np.eye(2), [3.0, 1.0])
        psi = PartitionedPsi(block, [0.5]).psi()
        np.testing.assert_allclose(psi, np.diag([3.0, 1.0, 0.5]))
        with pytest.raises(ModelError):
            PartitionedPsi(block, [0.0])
