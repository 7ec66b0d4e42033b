"""Wall-clock comparison of the numba kernels and their numpy twins.

    python benchmarks/bench_kernels.py [--paths 20000] [--repeat 3]

Numba timings exclude compilation (one warm-up call per kernel).
"""
import argparse
import time

import numpy as np

from levyobstacle import SimConfig, _backend, calibrate_drift, simulate_batch, variance_gamma
from levyobstacle._lsm_kernels import normal_equations
from levyobstacle.coefficients import DriftSpec, JumpCoefficient
from levyobstacle.jump_sde import build_sampler


def best_of(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    model = variance_gamma(0.1, 0.2, -0.14)
    b = calibrate_drift(model, 0.05)
    sampler = build_sampler(model, 1e-3)
    cfg = SimConfig(dt=0.01, n_paths=args.paths, seed=1)
    cases = {
        "simulate (constant drift)": lambda: simulate_batch(model, b, None, 0.0, cfg, sampler),
        "simulate (tanh drift/amplitude)": lambda: simulate_batch(
            model, DriftSpec.tanh(b, 0.5), JumpCoefficient.tanh(1.0, 0.2), 0.0, cfg, sampler),
    }
    rng = np.random.default_rng(0)
    z, p, y = (rng.standard_normal(args.paths * 10) for _ in range(3))
    cases["regression normal equations"] = lambda: normal_equations(z, p, y, 3, True)

    old = _backend.get_backend()
    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    try:
        for name, fn in cases.items():
            _backend.set_backend("numba")
            fn()  # compile
            t_nb = best_of(fn, args.repeat)
            _backend.set_backend("numpy")
            t_np = best_of(fn, args.repeat)
            print(f"{name:34s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}x")
    finally:
        _backend.set_backend(old)


if __name__ == "__main__":
    main()
