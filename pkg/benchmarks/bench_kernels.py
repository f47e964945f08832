#!/usr/bin/env python3
"""Benchmark the compiled conv kernels against the numpy fallback.

Run after building the extension (python setup.py build_ext --inplace):

    python benchmarks/bench_kernels.py

Prints per-op timings at desk-model shapes plus a full training-step
comparison; also cross-checks that both backends agree numerically.
"""

import os
import time

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np

from ecotrain.kernels import available_backends, reference

SHAPES = [
    ("stem 16x3x16x16 k3 s2 p1", (16, 3, 16, 16), (8, 3, 3, 3), 2, 1),
    ("block 16x8x8x8 k3 s1 p1", (16, 8, 8, 8), (8, 8, 3, 3), 1, 1),
    ("wide 32x16x16x16 k3 s1 p1", (32, 16, 16, 16), (16, 16, 3, 3), 1, 1),
]


def timeit(fn, *args, reps=200):
    fn(*args)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps * 1e3


def bench_ops(compiled):
    rng = np.random.default_rng(0)
    print(f"{'shape':28s} {'op':10s} {'numpy ms':>9s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, xs, ws, stride, pad in SHAPES:
        x = rng.normal(size=xs)
        w = rng.normal(size=ws)
        y = reference.conv2d_forward(x, w, stride, pad)
        gy = rng.normal(size=y.shape)
        ops = [
            ("forward", reference.conv2d_forward, compiled.conv2d_forward,
             (x, w, stride, pad)),
            ("grad_in", reference.conv2d_backward_input, compiled.conv2d_backward_input,
             (w, gy, xs[2], xs[3], stride, pad)),
            ("grad_w", reference.conv2d_backward_weight, compiled.conv2d_backward_weight,
             (x, gy, ws[2], stride, pad)),
        ]
        for opname, f_np, f_cy, args in ops:
            assert np.allclose(f_np(*args), f_cy(*args), atol=1e-10)
            t_np = timeit(f_np, *args)
            t_cy = timeit(f_cy, *args)
            print(f"{name:28s} {opname:10s} {t_np:9.3f} {t_cy:12.3f} {t_np / t_cy:7.2f}x")


def bench_training_step():
    from ecotrain import harness

    print("\nfull training step (200 iterations each):")
    for backend in ("numpy", "compiled"):
        os.environ["ECOTRAIN_KERNELS"] = backend
        # subprocess so the import-time backend selection takes effect
        import subprocess
        import sys
        code = (
            "import os, time\n"
            "from ecotrain import harness, kernels\n"
            "cfg = harness.make_config(scenario='smb', seed=0, iterations=200,\n"
            "                          eval_every=10**6, train_size=600, eval_size=100)\n"
            "t0 = time.time()\n"
            "res = harness.run(cfg, '/tmp/ecotrain_bench_' + kernels.BACKEND)\n"
            "dt = 1000 * (time.time() - t0) / res.processed_steps\n"
            "print(f'  {kernels.BACKEND:9s} {dt:6.2f} ms/step')\n"
        )
        subprocess.run([sys.executable, "-c", code], check=True,
                       env={**os.environ, "ECOTRAIN_KERNELS": backend})


def main():
    backends = available_backends()
    print("available backends:", ", ".join(backends))
    if "compiled" not in backends:
        print("compiled extension not built; run: python setup.py build_ext --inplace")
        return
    from ecotrain.kernels import _conv

    bench_ops(_conv)
    bench_training_step()


if __name__ == "__main__":
    main()
