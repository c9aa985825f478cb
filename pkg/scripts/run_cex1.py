#!/usr/bin/env python3
"""Divergence experiment: finite lower orders, harmonically growing top order.

Builds the tail-heavy discrete law and the bump-scaled conjugate, prints the
partial sums of d^k v / dy^k at y = 1 across truncations, and compares each
decade's growth of the (n+1)-st order against the harmonic prediction.
"""

import argparse
import time

import numpy as np

from cmdual.counterexamples import Cex1Instance, cex1_divergence, cex1_verify_finite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--order", type=int, default=2)
    ap.add_argument("--max-trunc", type=int, default=10**6)
    args = ap.parse_args()

    t0 = time.time()
    inst = Cex1Instance(order=args.order, n_trunc=args.max_trunc)
    print(f"law: P(Z=1/2) = {inst.base_prob:.6f}, eps = {inst.eps:.6f}, "
          f"E[Z] = {inst.mean():.2e}... = 1 + {inst.mean() - 1.0:.2e}")

    truncs = [10**k for k in range(3, int(np.log10(args.max_trunc)) + 1)]
    print(f"\nfinite orders at y = 1 (k = 1..{args.order}):")
    for N in truncs:
        vals = cex1_verify_finite(inst, N)
        cells = "  ".join(f"v^({k})={v:+.12f}" for k, v in vals.items())
        print(f"  N = {N:>8d}: {cells}")

    print(f"\norder {args.order + 1} partial sums (diverging):")
    rep = cex1_divergence(inst, truncs)
    for N, s in zip(rep.truncations, rep.partial_sums):
        print(f"  N = {N:>8d}: S_N = {s:.6f}")
    print("\nper-decade increments vs harmonic prediction:")
    for inc, oracle in zip(rep.increments, rep.oracle_increments):
        print(f"  {inc:.6f}  vs  {oracle:.6f}  "
              f"(ratio {inc / oracle:.4f})")
    print(f"\ndiverges: {rep.diverges}   [{time.time() - t0:.1f}s]")


if __name__ == "__main__":
    main()
