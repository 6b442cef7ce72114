"""Timing comparison of the compiled dynamics kernels against the pure-Python
fallback.

Run twice, once per backend:

    python3 benchmarks/bench_kernels.py
    PERTURBRL_NO_NUMBA=1 python3 benchmarks/bench_kernels.py

Both paths execute the same arithmetic in the same order, so outputs are
bit-identical; only throughput differs.
"""

import time

import numpy as np

from perturbrl import _kernels, dynamics


def bench(label, fn, n_steps=20_000):
    fn()  # trigger any compilation before timing
    t0 = time.perf_counter()
    fn(n_steps)
    elapsed = time.perf_counter() - t0
    print(f"{label:24s} {n_steps / elapsed / 1e3:10.1f} k steps/s "
          f"({elapsed * 1e6 / n_steps:8.3f} us/step)")


def run_cartpole(n_steps=100):
    p = dynamics.CartPoleParams()
    state = np.array([0.0, 0.1, 0.0, 0.0])
    for _ in range(n_steps):
        state = dynamics.cartpole_step(state, 1.0, (0.0, 0.0), p, 0.02)
    return state


def run_quadrotor(n_steps=100):
    p = dynamics.QuadrotorParams()
    h = p.hover_thrust()
    state = np.array([0.5, 0.5, 0.0, 0.0, 0.0, 0.0])
    for _ in range(n_steps):
        state = dynamics.quadrotor_step(state, (h, 1.01 * h), (0.0, 0.0), p, 0.02)
    return state


def main():
    backend = "numba" if _kernels.USE_NUMBA else "pure python"
    print(f"backend: {backend}")
    bench("cartpole rk4 step", run_cartpole)
    bench("quadrotor rk4 step", run_quadrotor)
    print("final cartpole state: ", run_cartpole(250))
    print("final quadrotor state:", run_quadrotor(250))


if __name__ == "__main__":
    main()
