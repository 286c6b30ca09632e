import os
import subprocess
import sys

import numpy as np
import pytest

from covshare import kernels
from covshare._accel import NUMBA_AVAILABLE

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.0, 5.0, 60.0, 5e3])
@pytest.mark.parametrize("n", [1.0, 17.0, 1000.0])
def test_omega_twins_agree(c, n):
    for u in np.random.default_rng(int(c * 7 + n)).random(50):
        a = kernels.omega_inverse_cdf_numpy(c, n, 1024, u)
        b = kernels.omega_inverse_cdf_numba(c, n, 1024, u)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-13)


def test_omega_inverse_is_monotone():
    us = np.linspace(0.001, 0.999, 200)
    xs = [kernels.omega_inverse_cdf_numpy(3.0, 40.0, 1024, u) for u in us]
    assert np.all(np.diff(xs) >= 0)


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_peel_twins_agree(seed):
    rng = np.random.default_rng(seed)
    xs, ys = rng.standard_normal(400), rng.standard_normal(400)
    if seed % 2:  # ties and duplicates
        xs, ys = np.round(xs, 1), np.round(ys, 1)
    a, la = kernels.peel_hull_layers_numpy(xs, ys, 360)
    b, lb = kernels.peel_hull_layers_numba(xs, ys, 360)
    np.testing.assert_array_equal(a, b)
    assert la == lb > 0


@needs_numba
def test_acg_twins_agree():
    rng = np.random.default_rng(0)
    for d in (3, 10, 80):
        lam = np.abs(rng.standard_normal(d - 2)) * 20
        lam[0] = 0.0
        a = kernels.acg_envelope_b_numpy(lam, 2, 7.0, d)
        b = kernels.acg_envelope_b_numba(lam, 2, 7.0, d)
        assert a == pytest.approx(b, rel=1e-12)
        assert np.sum(1 / (a + 2 * lam)) + 2 / (a + 14.0) == pytest.approx(1.0, rel=1e-9)


def test_disable_flag_selects_numpy():
    code = (
        "from covshare import kernels, backend;"
        "print(backend(), kernels.omega_inverse_cdf is kernels.omega_inverse_cdf_numpy)"
    )
    env = dict(os.environ, COVSHARE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
