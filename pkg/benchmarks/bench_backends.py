"""Time the numba kernels against their numpy fallbacks.

Usage::

    python benchmarks/bench_backends.py [--repeat 20] [--hours 24]

Each kernel is called once per backend before timing so JIT compilation is
excluded. The last row times one dense log-likelihood evaluation, which
exercises the kernels together with the Cholesky factorization.
"""

import argparse
import time

import numpy as np

from windgp import _accel, synth
from windgp.inference import log_likelihood
from windgp.kernels import KernelFamily
from windgp.params import ParameterVector


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_hours, r):
    n_sites = 27  # the study geometry
    xs = r.uniform(size=(n_sites * 20, 2))
    ts = r.uniform(size=n_hours * 20)
    q = np.sort(r.uniform(size=100_000))
    w, gamma = np.array([-0.7, 1.2]), np.array([0.3, 0.6])
    gt = synth.study_truth(KernelFamily.SE, synth.W1_LAYERS, seed=0)
    gt.grid = synth.study_grid(n_hours)
    gt.n_days = 30
    panel = synth.sample_panel(gt)
    theta = ParameterVector(gt.spec, gt.sigma2)
    return {
        f"pairwise_corr M32 {len(xs)}x{len(xs)}": lambda: _accel.pairwise_corr(xs, xs, 1, 0.4),
        f"periodic_matrix {len(ts)}x{len(ts)}": lambda: _accel.periodic_matrix(ts, ts, 1.0, 0.5),
        f"rbf_layer {len(xs) * 50} points": lambda: _accel.rbf_layer(np.tile(xs, (50, 1)), w, gamma, 0.25),
        f"ks_sup n={len(q)}": lambda: _accel.ks_sup(q),
        f"log_likelihood dense M={n_sites} T={n_hours} N=30": lambda: log_likelihood(theta, panel, path="dense"),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--hours", type=int, default=24)
    args = p.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend can be timed")
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    table = {}
    saved = _accel.USE_NUMBA
    try:
        for backend in backends:
            _accel.USE_NUMBA = backend == "numba"
            for name, fn in cases(args.hours, np.random.default_rng(0)).items():
                table.setdefault(name, {})[backend] = best_time(fn, args.repeat)
    finally:
        _accel.USE_NUMBA = saved
    width = max(len(k) for k in table)
    print(f"{'case':<{width}}  {'numpy ms':>10}  {'numba ms':>10}  {'speedup':>8}")
    for name, t in table.items():
        nb = t.get("numba")
        speed = f"{t['numpy'] / nb:8.2f}" if nb else f"{'-':>8}"
        nb_s = f"{nb * 1e3:10.3f}" if nb else f"{'-':>10}"
        print(f"{name:<{width}}  {t['numpy'] * 1e3:10.3f}  {nb_s}  {speed}")


if __name__ == "__main__":
    main()
