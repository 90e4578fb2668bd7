#!/usr/bin/env python3
"""Build a tree over an incomplete, multi-label tabular dataset.

Generates a solvent-database-style table (600 rows x 22 numeric properties,
~30% cells empty, 1-3 functional-group labels per row), writes it as CSV,
builds with partial-dimensional boxes through the same path the CLI uses,
and prints the tree statistics.

Usage: python scripts/solvent_style_build.py [--rows 600] [--keep-csv out.csv]
"""

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

from clusterflow.dataio import DatasetManifest, load_tabular
from clusterflow.geometry import BoxMode
from clusterflow.seeding import SeedConfig
from clusterflow.tree import BuildConfig, ClusterStatus, build

GROUPS = ["alkane", "alcohol", "ketone", "ester", "amine", "ether",
          "aromatic", "halide", "sulfide", "nitrile"]


def synthesize(path: Path, rows: int, rng) -> None:
    header = ",".join(f"prop{i}" for i in range(22)) + ",labels"
    lines = [header]
    for i in range(rows):
        family = i % len(GROUPS)
        feats = rng.normal(family * 4.0, 1.2, 22)
        cells = ["" if rng.random() < 0.30 else f"{v:.5f}" for v in feats]
        labels = {GROUPS[family]}
        while rng.random() < 0.35:
            labels.add(GROUPS[int(rng.integers(len(GROUPS)))])
        lines.append(",".join(cells) + "," + ";".join(sorted(labels)))
    path.write_text("\n".join(lines) + "\n")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=600)
    parser.add_argument("--rng-seed", type=int, default=0)
    parser.add_argument("--keep-csv", help="write the generated table here")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.rng_seed)
    if args.keep_csv:
        csv_path = Path(args.keep_csv)
        synthesize(csv_path, args.rows, rng)
    else:
        tmp = tempfile.NamedTemporaryFile(suffix=".csv", delete=False)
        csv_path = Path(tmp.name)
        synthesize(csv_path, args.rows, rng)

    data = load_tabular(DatasetManifest(feature_file=str(csv_path), dim=22))
    missing = sum(int(np.isnan(a.features).sum()) for a in data)
    print(f"loaded {len(data)} rows, {missing} missing cells "
          f"({100 * missing / (len(data) * 22):.1f}%)")

    cfg = BuildConfig(box_mode=BoxMode.PARTIAL, rng_seed=args.rng_seed,
                      seed_config=SeedConfig(k_max=6, rng_seed=args.rng_seed))
    tree = build(data, cfg)

    depths = {id(tree.root): 0}
    for node in tree.walk():
        for child in node.children:
            depths[id(child)] = depths[id(node)] + 1
    statuses = {s: 0 for s in ClusterStatus}
    for node in tree.walk():
        statuses[node.status] += 1
    print(f"width at top layer: {len(tree.root.children)}  "
          f"depth: {max(depths.values())}")
    print(f"pure: {statuses[ClusterStatus.PURE]}  "
          f"mixed: {statuses[ClusterStatus.MIXED]}  "
          f"irreducible: {statuses[ClusterStatus.IRREDUCIBLE]}  "
          f"rejects: {len(tree.rejects)}")
    if args.keep_csv:
        print(f"table kept at {csv_path}")
    else:
        csv_path.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())
