"""Frequency coverage of the fitted intervals for the bundled examples."""

import argparse
import time

import numpy as np

from gbp import fit, load_baseball, load_hospital, load_schools, resolve_spec, run_coverage

LOADERS = {"hospital": load_hospital, "schools": load_schools, "baseball": load_baseball}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("datasets", nargs="*", default=list(LOADERS), choices=list(LOADERS))
    ap.add_argument("--nsim", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()
    for name in args.datasets:
        res = fit(LOADERS[name]())
        t0 = time.perf_counter()
        rep = run_coverage(res, resolve_spec(res, nsim=args.nsim, seed=args.seed), threads=args.threads)
        secs = time.perf_counter() - t0
        print(f"== {name}: nsim {rep.nsim_effective}, {secs:.1f} s")
        print(f"  overall RB coverage {rep.overall_rb:.4f} (se {rep.se_overall_rb:.4f})")
        print(f"  group RB range [{rep.coverage_rb.min():.4f}, {rep.coverage_rb.max():.4f}]")
        ratio = (rep.se_coverage_s / np.maximum(rep.se_coverage_rb, 1e-300)) ** 2
        print(f"  group 1 variance ratio simple/RB {ratio[0]:.1f}")


if __name__ == "__main__":
    main()
