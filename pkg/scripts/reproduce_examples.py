"""Fit the three bundled examples and print their headline numbers."""

import argparse
import time

from gbp import fit, load_baseball, load_hospital, load_schools
from gbp.cli import fmt


def main():
    argparse.ArgumentParser(description=__doc__).parse_args()
    for name, loader in (("hospital", load_hospital), ("schools", load_schools), ("baseball", load_baseball)):
        t0 = time.perf_counter()
        res = fit(loader())
        secs = time.perf_counter() - t0
        print(f"== {name} ({secs * 1000:.1f} ms)")
        print(f"post.mode.alpha {fmt(res.alpha_hat)}  post.sd.alpha {fmt(res.alpha_sd)}  "
              f"A_or_r {fmt(res.A_or_r)}")
        for row in res.regression_table():
            print("  " + "  ".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in row.items()))
        print(f"  mean shrinkage {fmt(res.mean_row()['shrinkage'])}")
        print(f"  group 1: shrinkage {fmt(res.shrinkage[0])}  post.mean {fmt(res.post_mean[0])}  "
              f"interval ({fmt(res.low[0])}, {fmt(res.upp[0])})")


if __name__ == "__main__":
    main()
