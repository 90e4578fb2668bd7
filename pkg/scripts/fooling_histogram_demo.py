#!/usr/bin/env python3
"""Overconfidence comparison on synthetic in-world and far-out queries.

Builds a world tree on a labelled synthetic dataset, then queries it with a
mix of in-distribution points and "fooling-like" points far outside anything
seen. Prints the softmax confidence column next to the tree-backed column,
in the threshold-table shape used for overconfidence reporting.

Usage: python scripts/fooling_histogram_demo.py
"""

import sys

import numpy as np

from clusterflow.geometry import softmax
from clusterflow.inference import confidence_histogram, guess_many
from clusterflow.seeding import SeedConfig
from clusterflow.tree import Activation, BuildConfig, build

THRESHOLDS = [0.95, 0.90, 0.50, 0.20]


def main():
    rng = np.random.default_rng(0)
    dim, per_class = 12, 250
    data = []
    for c, label in enumerate(["shark", "tabby", "daisy", "bottle"]):
        center = np.zeros(dim)
        center[c * 3:(c + 1) * 3] = 8.0
        for i in range(per_class):
            data.append(Activation.make(rng.normal(center, 1.0), {label},
                                        f"{label}{i}"))
    tree = build(data, BuildConfig(rng_seed=1,
                                   seed_config=SeedConfig(k_max=4, rng_seed=1)))

    n_fool = 200
    fooling = [rng.uniform(-1, 1, dim) * 1e4 for _ in range(n_fool)]

    # a raw softmax layer is maximally confident on these
    raw_top = [float(softmax(v).max()) for v in fooling]
    guesses = guess_many(tree, fooling)
    hist = confidence_histogram(guesses, THRESHOLDS)

    print(f"{'confidence':<12}{'softmax only':>14}{'with tree':>12}")
    for t, frac in hist.rows:
        raw_frac = sum(1 for c in raw_top if c > t) / n_fool
        print(f"p > {t:<8.2f}{raw_frac * 100:>13.1f}%{frac * 100:>11.1f}%")
    raw_nan = 0.0
    print(f"p = NaN     {raw_nan:>13.1f}%{hist.nan_fraction * 100:>11.1f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
