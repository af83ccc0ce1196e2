"""Time the compiled and pure-Python kernels on the same workloads.

    python benchmarks/bench_kernels.py [--jobs 50000] [--repeat 3]

Both backends consume the same random stream, so the script also checks
that their outputs agree exactly.
"""
import argparse
import time

import numpy as np

from fjsim import _backend, dists
from fjsim.analytic import SystemParams
from fjsim.multigroup import POLICIES
from fjsim.simcore import ForkJoinConfig, simulate

WORKLOADS = [
    ("fork-join (10,5) exp", dict(n=10, k=5), {}),
    ("fork-join (10,10) exp", dict(n=10, k=10), {}),
    ("fork-join (10,5) pareto 2.5", dict(n=10, k=5), dict(service=dists.pareto_for_mean(1 / 15, 2.5))),
    ("split-merge (10,5) exp", dict(n=10, k=5), dict(mode="split_merge")),
    ("routed m=40 lwl", dict(n=10, k=5, lam=4.0), dict(groups=4, policy=POLICIES["lwl"], d=4)),
]


def _time(config, jobs, backend, sim_kw, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = simulate(config, jobs, dists.RngStream(1), backend=backend, **sim_kw)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--jobs", type=int, default=50_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.compiled is None:
        print("compiled kernels not built; only the fallback can be timed")
    print(f"{'workload':32s} {'python s':>9s} {'cython s':>9s} {'speedup':>8s}  same")
    for label, p, kw in WORKLOADS:
        kw = dict(kw)
        sim_kw = {key: kw.pop(key) for key in ("groups", "policy", "d") if key in kw}
        cfg = ForkJoinConfig(SystemParams(p["n"], p["k"], p.get("lam", 1.0), 3.0), **kw)
        t_py, out_py = _time(cfg, args.jobs, "python", sim_kw, args.repeat)
        if _backend.compiled is None:
            print(f"{label:32s} {t_py:9.3f} {'-':>9s} {'-':>8s}")
            continue
        t_c, out_c = _time(cfg, args.jobs, "cython", sim_kw, args.repeat)
        same = np.array_equal(out_py.join, out_c.join)
        print(f"{label:32s} {t_py:9.3f} {t_c:9.3f} {t_py / t_c:7.1f}x  {same}")


if __name__ == "__main__":
    main()
