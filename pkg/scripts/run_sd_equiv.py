#!/usr/bin/env python3
"""Sweep random one-period markets and audit the three maximality conditions.

Whenever some vertex passes the conditional (linear, hence full-polytope)
criterion, the infinite-order and second-order verdicts must agree with it
on every vertex; markets without such a vertex are reported separately.
"""

import argparse

import numpy as np

from cmdual.solver import FiniteMarket, sd_equivalence_audit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--markets", type=int, default=100)
    ap.add_argument("--max-states", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    done = gated = agree = 0
    while done < args.markets:
        k = 2 if rng.random() < 0.4 else int(rng.integers(3, args.max_states + 1))
        probs = rng.dirichlet(np.ones(k))
        payoffs = np.round(rng.uniform(0.2, 2.5, size=k), 3)
        if payoffs.min() >= 1.0 or payoffs.max() <= 1.0:
            continue
        report = sd_equivalence_audit(FiniteMarket(tuple(probs),
                                                   tuple(payoffs), 1.0))
        done += 1
        if report.maximal_exists:
            gated += 1
            agree += report.all_agree
            if not report.all_agree:
                print(f"DISAGREEMENT: probs={probs} payoffs={payoffs}")
    print(f"{done} markets audited; {gated} had a vertex-maximal deflator; "
          f"verdicts agreed on {agree}/{gated} of those")


if __name__ == "__main__":
    main()
