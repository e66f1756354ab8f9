"""Time one Metropolis sweep with each backend.

Compares the compiled low-rank kernel, the pure-Python low-rank kernel and the
reference path that refactorizes M_hat for every proposal.  All three consume
the same random numbers, so the script also reports how far their inverses
drift apart.

    python benchmarks/bench_kernels.py --d 2 --L 4 6 8 --sweeps 200
"""
import argparse
import time

import numpy as np

from hypsigma import _kernels
from hypsigma import mc_sampler as mc
from hypsigma.dual_action import ModelParams
from hypsigma.lattice import build_lattice


def time_backend(lat, params, sweeps, width, seed, method, kernel):
    rng = np.random.default_rng(seed)
    config = mc.ThetaConfig.initial(lat)
    t0 = time.perf_counter()
    for _ in range(sweeps):
        mc.metropolis_sweep(config, params, width, rng, method=method, kernel=kernel)
    return (time.perf_counter() - t0) / sweeps, config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--L", type=int, nargs="+", default=[3, 4, 6])
    ap.add_argument("--N", type=int, default=40)
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--width", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    params = ModelParams(N=args.N, lam=args.lam)
    backends = [("python", "fast", _kernels.python.sweep_lowrank), ("reference", "reference", None)]
    if _kernels.compiled is not None:
        backends.insert(0, ("cython", "fast", _kernels.compiled.sweep_lowrank))
    else:
        print("compiled extension not available; timing Python paths only")

    print(f"{'L':>4} {'V':>5} " + " ".join(f"{name + ' [ms]':>15}" for name, _, _ in backends)
          + f" {'speedup':>9} {'max |dG|':>10}")
    for L in args.L:
        lat = build_lattice(args.d, L)
        times, configs = [], []
        for _, method, kernel in backends:
            t, cfg = time_backend(lat, params, args.sweeps, args.width, args.seed, method, kernel)
            times.append(t)
            configs.append(cfg)
        dG = max(float(np.max(np.abs(c.G - configs[-1].G))) for c in configs[:-1])
        print(f"{L:>4} {lat.V:>5} " + " ".join(f"{1e3 * t:>15.4f}" for t in times)
              + f" {times[1] / times[0]:>9.1f} {dG:>10.2e}")


if __name__ == "__main__":
    main()
