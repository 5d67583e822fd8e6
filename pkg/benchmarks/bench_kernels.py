"""Time the theta-scheme kernels: compiled extension vs pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--paths 50] [--delta 0.001]

Drivers are generated once and shared by every backend, so only the
per-path integration is timed. Results are checked for bitwise agreement.
"""

import argparse
import time

import numpy as np

from tclevy import kernels
from tclevy.models import builtin_cubic, builtin_linear
from tclevy.noise import make_panel, uniform_jumps
from tclevy.schemes import ThetaConfig, st_path
from tclevy.subordinator import StableSpec, generate_path


def drivers(alpha, delta, n_paths, jumps):
    out = []
    for i in range(n_paths):
        sub = generate_path(StableSpec(alpha, delta, 1.0), 0, i)
        out.append((sub, make_panel(sub.n_steps, delta, jumps, 0, i)))
    return out


def bench(model, paths, cfg, backend):
    t0 = time.perf_counter()
    finals = [st_path(model, sub, panel, cfg, backend=backend).st_values[-1] for sub, panel in paths]
    return time.perf_counter() - t0, np.array(finals)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=50)
    ap.add_argument("--delta", type=float, default=1e-3)
    ap.add_argument("--alpha", type=float, default=0.8)
    args = ap.parse_args()

    jumps = uniform_jumps(1.0, 0.5)
    models = {"linear": builtin_linear(-1.0, 0.5, 0.2, jumps, 1.0),
              "cubic": builtin_cubic(1.0, 0.5, 0.2, jumps, 1.0)}
    paths = drivers(args.alpha, args.delta, args.paths, jumps)
    steps = sum(s.n_steps for s, _ in paths)
    backends = [b for b in ("compiled", "python") if b in kernels.available()] + ["generic"]
    print(f"{args.paths} paths, {steps} steps in total, delta={args.delta}")
    print(f"{'model':8s} {'backend':9s} {'ms/path':>9s} {'us/step':>9s} {'speedup':>8s}")
    for name, model in models.items():
        cfg = ThetaConfig(1.0, args.delta)
        timings = {}
        ref = None
        for b in backends:
            sec, finals = bench(model, paths, cfg, b)
            timings[b] = sec
            if ref is None:
                ref = finals
            elif not np.array_equal(ref, finals):
                print(f"  warning: {b} differs from {backends[0]}")
        slowest = max(timings.values())
        for b, sec in timings.items():
            print(f"{name:8s} {b:9s} {1e3 * sec / args.paths:9.2f} {1e6 * sec / steps:9.3f} "
                  f"{slowest / sec:7.1f}x")


if __name__ == "__main__":
    main()
