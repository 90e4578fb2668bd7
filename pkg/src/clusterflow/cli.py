"""Command-line interface: build, assign, reason, surprise, convert.

Exit codes: 0 success, 1 user or input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .dataio import (
    DatasetManifest,
    load_activations,
    load_label_dictionary,
    load_tabular,
    load_tree,
    read_hdf5_activations,
    save_activations,
    save_tree,
)
from .errors import ArityError, ClusterFlowError, DimensionError
from .experiments import ClassSplit, run_familiarity_protocol, surprise as run_surprise
from .geometry import BoxMode, Metric
from .inference import confidence_histogram, guess_many
from .reasoning import classify_triple, generalize_n
from .seeding import SeedConfig
from .tree import BuildConfig, ClusterStatus, build

DEFAULT_THRESHOLDS = "0.95,0.90,0.50,0.20"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # user errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_build_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metric", choices=[m.value for m in Metric], default="l2")
    p.add_argument("--box-mode", choices=[m.value for m in BoxMode], default="lower")
    p.add_argument("--expand", type=float, default=0.10,
                   help="box expansion fraction (default 0.10)")
    p.add_argument("--seed-alg", choices=["kmeans", "kmeanspp", "detk"], default="detk")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--max-depth", type=int, default=32)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="cap on worker parallelism")


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--labels-file", help="companion label file keyed by row id")
    p.add_argument("--label-column", default="labels")
    p.add_argument("--label-sep", default=";")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--missing-token", default="")
    p.add_argument("--id-column")
    p.add_argument("--label-dict", help="label id -> human name file")


def _config(args) -> BuildConfig:
    return BuildConfig(
        metric=Metric(args.metric),
        box_mode=BoxMode(args.box_mode),
        expand_fraction=args.expand,
        seed_config=SeedConfig(algorithm=args.seed_alg, k=args.k, k_max=args.kmax,
                               rng_seed=args.rng_seed),
        batch_size=args.batch_size,
        max_depth=args.max_depth,
        rng_seed=args.rng_seed,
    )


def _load_input(path: str, args) -> list:
    """Sniff the input format: CFA1 dump, hierarchical container, or text."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"CFA1":
        return load_activations(path)
    if head == b"\x89HDF":
        return read_hdf5_activations(path)
    manifest = DatasetManifest(
        feature_file=path,
        label_file=getattr(args, "labels_file", None),
        label_column=getattr(args, "label_column", "labels"),
        label_separator=getattr(args, "label_sep", ";"),
        delimiter=getattr(args, "delimiter", ","),
        missing_token=getattr(args, "missing_token", ""),
        id_column=getattr(args, "id_column", None),
    )
    return load_tabular(manifest)


def _print_rows(rows, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "delimited":
        for row in rows:
            print("\t".join(str(c) for c in row), file=out)
        return
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)), file=out)


def _fmt_conf(c: float) -> str:
    return "NaN" if math.isnan(c) else f"{c:.6f}"


# ---------------------------------------------------------------------------
# subcommands

def cmd_build(args) -> int:
    data = _load_input(args.input, args)
    label_dict = load_label_dictionary(args.label_dict) if args.label_dict else {}
    tree = build(data, _config(args), label_dictionary=label_dict)
    save_tree(tree, args.out)

    nodes = list(tree.walk())
    depths = {id(tree.root): 0}
    for node in nodes:
        for child in node.children:
            depths[id(child)] = depths[id(node)] + 1
    by_status = {s: 0 for s in ClusterStatus}
    for node in nodes:
        by_status[node.status] += 1
    missing = int(sum(np.isnan(a.features).sum() for a in data))
    print(f"built tree over {len(data)} activations ({tree.dim} dims)")
    print(f"  nodes: {len(nodes)}  depth: {max(depths.values())}  "
          f"width at top layer: {len(tree.root.children)}")
    print(f"  pure: {by_status[ClusterStatus.PURE]}  "
          f"mixed: {by_status[ClusterStatus.MIXED]}  "
          f"irreducible: {by_status[ClusterStatus.IRREDUCIBLE]}")
    print(f"  rejects: {len(tree.rejects)}  missing cells: {missing}")
    print(f"  tree written to {args.out}")
    return 0


def cmd_assign(args) -> int:
    tree = load_tree(args.tree)
    data = _load_input(args.input, args)
    for a in data:
        if a.features.shape[0] != tree.dim:
            raise DimensionError(
                f"{a.source_id!r} has dim {a.features.shape[0]}, tree needs {tree.dim}")
    metric = Metric(args.metric) if args.metric_set else None
    guesses = guess_many(tree, [a.features for a in data],
                         top_k=args.top_k, metric=metric)

    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for a, g in zip(data, guesses):
            labels = ";".join(label for label, _ in g.ranked) or "-"
            confs = ";".join(_fmt_conf(c) for _, c in g.ranked) or "NaN"
            print(f"{a.source_id}\t{labels}\t{confs}\t{str(g.out_of_world).lower()}",
                  file=sink)
    finally:
        if args.out:
            sink.close()

    if args.thresholds:
        thresholds = [float(t) for t in args.thresholds.split(",")]
        hist = confidence_histogram(guesses, thresholds)
        rows = [("confidence", "fraction")]
        rows += [(f"p > {t:.2f}", f"{frac * 100:.1f}%") for t, frac in hist.rows]
        rows += [("p = NaN", f"{hist.nan_fraction * 100:.1f}%")]
        if args.format == "plotdata":
            path = Path(args.out or "assign").with_suffix(".confidence.dat")
            with open(path, "w") as fh:
                for t, frac in hist.rows:
                    print(f"{t} {frac}", file=fh)
                print(f"# nan {hist.nan_fraction}", file=fh)
            print(f"confidence series written to {path}")
        else:
            _print_rows(rows, args.format)
    return 0


def cmd_reason(args) -> int:
    data = _load_input(args.input, args)
    if len(data) < 2:
        raise ArityError("reasoning needs at least 2 items")
    pair_rows = []
    if len(data) == 3:
        verdict = classify_triple(data, _config(args))
        print(f"verdict: {verdict.kind.value}")
        print(f"rejects: {verdict.rejects}")
        print(f"world cluster: {verdict.c0_status.value}")
        odd = verdict.odd_source_ids(data)
        print(f"odd one out: {', '.join(odd) if odd else '-'}")
        shared = verdict.shared
    else:
        verdict = generalize_n(data)
        print(f"verdict: {verdict.kind.value}")
        print(f"rejects: {verdict.rejects}")
        group = ", ".join(data[i].source_id for i in verdict.largest_pure_subgroup)
        print(f"largest pure subgroup: {group or '-'}")
        shared = verdict.shared
    for (i, j), labels in sorted(shared.items()):
        names = ",".join(sorted(labels)) or "-"
        pair_rows.append((f"{data[i].source_id}:{data[j].source_id}", names))
    _print_rows([("pair", "shared labels")] + pair_rows, args.format)
    return 0


def _split_from(args, train_path, test_path) -> ClassSplit:
    train = _load_input(train_path, args)
    test = _load_input(test_path, args)
    counts = {}
    for a in train:
        for label in a.labels:
            counts[label] = counts.get(label, 0) + 1
    label = max(sorted(counts), key=lambda l: counts[l])
    return ClassSplit.make(label, train, test)


def cmd_surprise(args) -> int:
    paired = args.train_a and args.train_b
    if not paired and not (args.train and args.test):
        raise ClusterFlowError(
            "need either --train/--test or --train-a/--test-a/--train-b/--test-b")
    if not paired:
        data = _load_input(args.train, args)
        test = _load_input(args.test, args)
        tree = build(data, _config(args))
        rep = run_surprise(tree, test)
        rows = [("familiar", "novel", "n_test", "n_outside", "surprise"),
                (rep.familiar_label, rep.novel_label, rep.n_test, rep.n_outside,
                 f"{rep.surprise:.2f}%")]
        _print_rows(rows, args.format if args.format != "plotdata" else "table")
        return 0

    first = _split_from(args, args.train_a, args.test_a)
    second = _split_from(args, args.train_b, args.test_b)
    report = run_familiarity_protocol(first, second, _config(args),
                                      joint_control=args.joint,
                                      threads=args.threads)
    rows = [("direction", "familiar surprise", "novel surprise")]
    for d in (report.direction_first, report.direction_second):
        rows.append((f"familiar={d.familiar_label}",
                     f"{d.surprise_familiar.surprise:.2f}%",
                     f"{d.surprise_novel.surprise:.2f}%"))
    _print_rows(rows, args.format if args.format != "plotdata" else "table")
    for asym in (report.asymmetry_familiar, report.asymmetry_novel):
        print(f"asymmetry on {asym.stimulus} stimuli: {asym.asymmetry:+.2f}% "
              f"(+ toward {asym.first_label})")
    if report.joint is not None:
        print(f"joint-cluster control: inaccuracy {report.joint.first_label} "
              f"{report.joint.inaccuracy_first:.2f}% vs {report.joint.second_label} "
              f"{report.joint.inaccuracy_second:.2f}%  "
              f"asymmetry {report.joint.asymmetry:+.2f}%")
    if args.format == "plotdata":
        prefix = Path(args.out or "surprise")
        series = {
            "familiar": [report.direction_first.surprise_familiar.surprise,
                         report.direction_second.surprise_familiar.surprise],
            "novel": [report.direction_first.surprise_novel.surprise,
                      report.direction_second.surprise_novel.surprise],
        }
        for name, values in series.items():
            path = prefix.with_suffix(f".{name}.dat")
            with open(path, "w") as fh:
                for x, y in enumerate(values):
                    print(f"{x} {y}", file=fh)
            print(f"{name} series written to {path}")
    return 0


def cmd_convert(args) -> int:
    data = read_hdf5_activations(args.input)
    save_activations(args.out, data)
    print(f"wrote {len(data)} records to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="clusterflow",
                     description="hypercuboid cluster trees over labelled vectors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a tree and write it to disk")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_input_flags(p)
    _add_build_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("assign", help="guess labels for vectors against a tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--thresholds", nargs="?", const=DEFAULT_THRESHOLDS,
                   help=f"confidence histogram thresholds (default {DEFAULT_THRESHOLDS})")
    p.add_argument("--format", choices=["table", "delimited", "plotdata"],
                   default="table")
    _add_input_flags(p)
    _add_build_flags(p)
    p.set_defaults(func=cmd_assign, metric_set=False)

    p = sub.add_parser("reason", help="set / same-same-different / antiset verdicts")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["table", "delimited", "plotdata"],
                   default="table")
    _add_input_flags(p)
    _add_build_flags(p)
    p.set_defaults(func=cmd_reason)

    p = sub.add_parser("surprise", help="surprise and asymmetry protocols")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--train-a")
    p.add_argument("--test-a")
    p.add_argument("--train-b")
    p.add_argument("--test-b")
    p.add_argument("--joint", action="store_true",
                   help="add the order-free joint-cluster control")
    p.add_argument("--out", help="prefix for plotdata series files")
    p.add_argument("--format", choices=["table", "delimited", "plotdata"],
                   default="table")
    _add_input_flags(p)
    _add_build_flags(p)
    p.set_defaults(func=cmd_surprise)

    p = sub.add_parser("convert", help="convert an hdf5 container to a CFA1 dump")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "metric", None) is not None and hasattr(args, "metric_set"):
        # assign: only override the tree's metric when the flag was given
        args.metric_set = "--metric" in (argv if argv is not None else sys.argv[1:])
    try:
        return args.func(args)
    except ClusterFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - invariant violation
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
