"""Exact posterior draws for the baseball example, compared with the fitted means."""

import argparse

import numpy as np

from gbp import fit, load_baseball
from gbp.ar_sampler import ar_sample, build_envelope
from gbp.stat_math import RngStream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--psi", type=float, default=1.3)
    args = ap.parse_args()
    d = load_baseball()
    res = fit(d)
    env = build_envelope(d, psi=args.psi, start=res)
    s = ar_sample(d, env, args.n, stream=RngStream(args.seed, 0))
    print(f"draws {s.n}  acceptance rate {s.acceptance_rate:.3f}  refill rounds {s.refill_rounds}")
    print(f"alpha: mode {res.alpha_hat:.3f}  sample median {np.median(s.alpha_draws):.3f}")
    mean, se = s.p_draws.mean(axis=1), s.p_draws.std(axis=1, ddof=1) / np.sqrt(s.n)
    print(f"{'player':>6} {'A-R mean':>9} {'MC se':>7} {'fitted':>7} {'z':>6}")
    for j in range(d.k):
        z = (mean[j] - res.post_mean[j]) / se[j]
        print(f"{j + 1:>6} {mean[j]:9.4f} {se[j]:7.4f} {res.post_mean[j]:7.4f} {z:6.2f}")


if __name__ == "__main__":
    main()
