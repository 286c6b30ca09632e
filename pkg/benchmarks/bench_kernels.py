"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both twins are called directly, so COVSHARE_DISABLE_NUMBA does not matter
here.  The first numba call (compilation or cache load) is excluded.
"""

import argparse
import timeit

import numpy as np

from covshare import kernels


def _cases(rng):
    xs, ys = rng.standard_normal(2000), rng.standard_normal(2000)
    lam = np.abs(rng.standard_normal(199)) * 50.0
    return {
        "omega_inverse_cdf": (
            lambda: kernels.omega_inverse_cdf_numpy(40.0, 50.0, 1024, 0.37),
            lambda: kernels.omega_inverse_cdf_numba(40.0, 50.0, 1024, 0.37),
            200,
        ),
        "peel_hull_layers (n=2000)": (
            lambda: kernels.peel_hull_layers_numpy(xs, ys, 1900),
            lambda: kernels.peel_hull_layers_numba(xs, ys, 1900),
            3,
        ),
        "acg_envelope_b (d=199)": (
            lambda: kernels.acg_envelope_b_numpy(lam - lam.min(), 0, 0.0, 199),
            lambda: kernels.acg_envelope_b_numba(lam - lam.min(), 0, 0.0, 199),
            200,
        ),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy (ms)':>12s} {'numba (ms)':>12s} {'speedup':>9s}")
    for name, (f_np, f_nb, number) in _cases(rng).items():
        f_nb()  # compile or load from cache
        t_np = min(timeit.repeat(f_np, number=number, repeat=args.repeat)) / number
        t_nb = min(timeit.repeat(f_nb, number=number, repeat=args.repeat)) / number
        print(f"{name:28s} {t_np * 1e3:12.4f} {t_nb * 1e3:12.4f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
