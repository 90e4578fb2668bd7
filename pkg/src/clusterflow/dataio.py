"""Dataset ingestion and persistence.

Three on-disk formats:

* tabular: delimited text with a header row; empty cells (or a configured
  missing token) become missing entries; labels live in a multi-valued
  column or a companion file keyed by row id.
* activation dump: versioned little-endian binary stream (magic ``CFA1``),
  a JSON text header carrying dim / count / label table, then one
  length-prefixed record per activation. Dumps are dense: no missing values.
* tree file: versioned nested JSON, bit-exact across save/load/save.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DimensionError,
    LabelError,
    MissingDataError,
    ParseError,
    VersionError,
)
from .geometry import BoundingBox, BoxMode, DimStats, Metric
from .seeding import SeedConfig
from .tree import Activation, BuildConfig, Cluster, ClusterStatus, ClusterTree

__all__ = ["DatasetManifest", "load_tabular", "load_activations",
           "save_activations", "read_hdf5_activations", "load_label_dictionary",
           "save_tree", "load_tree", "dumps_tree"]

DUMP_MAGIC = b"CFA1"
TREE_FORMAT = "clusterflow-tree"
TREE_VERSION = 1


# ---------------------------------------------------------------------------
# tabular

@dataclass(frozen=True)
class DatasetManifest:
    """Where a tabular dataset lives and how to read it."""

    feature_file: str
    label_file: Optional[str] = None
    label_column: str = "labels"
    label_separator: str = ";"
    delimiter: str = ","
    missing_token: str = ""
    id_column: Optional[str] = None
    dim: Optional[int] = None
    label_dictionary: Optional[str] = None


def _parse_cell(cell: str, missing_token: str, row: int) -> Optional[float]:
    cell = cell.strip()
    if cell == "" or cell == missing_token:
        return None
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"cannot parse feature value {cell!r}", row=row) from None


def _split_labels(raw: str, sep: str):
    return [part.strip() for part in raw.split(sep) if part.strip()]


def _load_label_file(path, delimiter: str, sep: str) -> dict:
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"label file {path} is empty")
        for i, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise ParseError("label row needs id and labels", row=i)
            table[row[0].strip()] = _split_labels(row[1], sep)
    return table


def load_tabular(manifest: DatasetManifest) -> list:
    """Parse a delimited feature file into activations.

    Missing cells become missing entries; multi-label cells are split on the
    configured separator. Raises ParseError with the offending row number on
    ragged rows and LabelError when a row ends up with no label.
    """
    path = Path(manifest.feature_file)
    if not path.exists():
        raise ParseError(f"feature file {path} does not exist")
    label_table = None
    if manifest.label_file is not None:
        label_table = _load_label_file(manifest.label_file, manifest.delimiter,
                                       manifest.label_separator)

    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=manifest.delimiter)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path} is empty")
        header = [h.strip() for h in header]

        id_col = None
        if manifest.id_column is not None:
            if manifest.id_column not in header:
                raise ParseError(f"id column {manifest.id_column!r} not in header")
            id_col = header.index(manifest.id_column)
        else:
            for candidate in ("id", "source_id"):
                if candidate in header:
                    id_col = header.index(candidate)
                    break
        label_col = None
        if label_table is None:
            if manifest.label_column not in header:
                raise ParseError(f"label column {manifest.label_column!r} not in header")
            label_col = header.index(manifest.label_column)

        feature_cols = [i for i in range(len(header))
                        if i != id_col and i != label_col]
        dim = len(feature_cols)
        if dim == 0:
            raise ParseError("no feature columns in header")
        if manifest.dim is not None and manifest.dim != dim:
            raise ParseError(f"header has {dim} feature columns, manifest says {manifest.dim}")

        activations = []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, found {len(row)}", row=i)
            source_id = row[id_col].strip() if id_col is not None else f"row{i - 2}"
            values = [_parse_cell(row[c], manifest.missing_token, i)
                      for c in feature_cols]
            if label_table is not None:
                labels = label_table.get(source_id, [])
            else:
                labels = _split_labels(row[label_col], manifest.label_separator)
            if not labels:
                raise LabelError(f"row {i} ({source_id}) carries no label")
            activations.append(Activation.make(values, labels, source_id))
    return activations


def load_label_dictionary(path) -> dict:
    """Two-column id -> human-readable-name file (tab or comma separated)."""
    table = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("\t" if "\t" in line else ",")
        table[key.strip()] = value.strip()
    return table


# ---------------------------------------------------------------------------
# activation dump (CFA1)

def save_activations(path, activations, extra_header: Optional[dict] = None) -> None:
    """Write the canonical dense activation dump.

    Layout: magic ``CFA1``, u32 header length, JSON header (dim, count,
    label table), then per record: u32 id length, id bytes, dim f64 values,
    u32 label count, u32 label-table indexes. All integers and floats are
    little-endian; vectors must be complete.
    """
    activations = list(activations)
    dim = activations[0].features.shape[0] if activations else 0
    labels = sorted({l for a in activations for l in a.labels})
    index = {l: i for i, l in enumerate(labels)}
    header = {"dim": dim, "count": len(activations), "labels": labels}
    if extra_header:
        header.update(extra_header)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in activations:
            if a.features.shape[0] != dim:
                raise DimensionError(
                    f"activation {a.source_id!r} has dim {a.features.shape[0]}, dump is {dim}")
            if np.isnan(a.features).any():
                raise MissingDataError(
                    f"activation {a.source_id!r} has missing entries; dumps are dense")
            ident = a.source_id.encode("utf-8")
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(a.features.astype("<f8").tobytes())
            ids = sorted(index[l] for l in a.labels)
            fh.write(struct.pack("<I", len(ids)))
            fh.write(struct.pack(f"<{len(ids)}I", *ids) if ids else b"")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ParseError(f"truncated dump while reading {what}")
    return data


def load_activations(path) -> list:
    """Read a ``CFA1`` dump back into activations."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DUMP_MAGIC:
            raise VersionError(f"unknown dump magic {magic!r}")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        try:
            header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad dump header: {exc}") from None
        try:
            dim = int(header["dim"])
            count = int(header["count"])
            labels = list(header["labels"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"dump header missing fields: {exc}") from None

        activations = []
        for _ in range(count):
            (idlen,) = struct.unpack("<I", _read_exact(fh, 4, "id length"))
            ident = _read_exact(fh, idlen, "id").decode("utf-8")
            vals = np.frombuffer(
                _read_exact(fh, 8 * dim, "features"), dtype="<f8").astype(np.float64)
            (nlab,) = struct.unpack("<I", _read_exact(fh, 4, "label count"))
            raw = struct.unpack(f"<{nlab}I", _read_exact(fh, 4 * nlab, "labels")) \
                if nlab else ()
            try:
                names = [labels[i] for i in raw]
            except IndexError:
                raise ParseError(f"label index out of range in record {ident!r}") from None
            activations.append(Activation.make(vals, names, ident))
        if fh.read(1):
            raise ParseError("trailing bytes after final record")
    return activations


def read_hdf5_activations(path) -> list:
    """Optional interop: read features / source_ids / labels datasets from a
    hierarchical container and return activations."""
    import h5py

    def _text(x):
        return x.decode("utf-8") if isinstance(x, bytes) else str(x)

    with h5py.File(path, "r") as fh:
        for name in ("features", "source_ids", "labels"):
            if name not in fh:
                raise ParseError(f"hdf5 file lacks dataset {name!r}")
        feats = np.asarray(fh["features"], dtype=np.float64)
        ids = [_text(x) for x in fh["source_ids"][()]]
        labels = [_text(x) for x in fh["labels"][()]]
    if not (feats.shape[0] == len(ids) == len(labels)):
        raise ParseError("hdf5 datasets disagree on record count")
    return [
        Activation.make(feats[i], _split_labels(labels[i], ";"), ids[i])
        for i in range(feats.shape[0])
    ]


# ---------------------------------------------------------------------------
# tree file

def _stats_to_dict(stats: DimStats) -> dict:
    return {
        "n": stats.n,
        "present": stats.present.tolist(),
        "mean": stats._mean.tolist(),
        "m2": stats._m2.tolist(),
        "min": stats._min.tolist(),
        "max": stats._max.tolist(),
    }


def _stats_from_dict(d: dict, dim: int) -> DimStats:
    stats = DimStats(dim)
    stats.n = int(d["n"])
    stats.present = np.asarray(d["present"], dtype=np.int64)
    stats._mean = np.asarray(d["mean"], dtype=np.float64)
    stats._m2 = np.asarray(d["m2"], dtype=np.float64)
    stats._min = np.asarray(d["min"], dtype=np.float64)
    stats._max = np.asarray(d["max"], dtype=np.float64)
    return stats


def _node_to_dict(node: Cluster, include_member_ids: bool) -> dict:
    dims = node.box.active_dims
    out = {
        "id": node.node_id,
        "mode": node.box.mode.value,
        "dims": dims.tolist(),
        "lo": node.box.lo[dims].tolist(),
        "hi": node.box.hi[dims].tolist(),
        "status": node.status.value,
        "common_labels": sorted(node.common_labels),
        "label_histogram": node.label_histogram,
        "stats": _stats_to_dict(node.stats) if node.stats is not None else None,
        "n_members": node.n_members,
        "children": [_node_to_dict(c, include_member_ids) for c in node.children],
    }
    if include_member_ids:
        out["member_ids"] = list(node.member_ids)
    return out


def _node_from_dict(d: dict, mode: BoxMode, dim: int) -> Cluster:
    dims = np.asarray(d["dims"], dtype=np.int64)
    active = np.zeros(dim, dtype=bool)
    active[dims] = True
    lo = np.full(dim, np.nan)
    hi = np.full(dim, np.nan)
    lo[dims] = np.asarray(d["lo"], dtype=np.float64)
    hi[dims] = np.asarray(d["hi"], dtype=np.float64)
    node = Cluster(
        box=BoundingBox(mode, dim, active, lo, hi),
        members=[],
        children=[_node_from_dict(c, mode, dim) for c in d["children"]],
        status=ClusterStatus(d["status"]),
        common_labels=frozenset(d["common_labels"]),
        label_histogram=dict(d["label_histogram"]),
        stats=_stats_from_dict(d["stats"], dim) if d["stats"] is not None else None,
        node_id=d["id"],
        member_ids=tuple(d.get("member_ids", ())),
    )
    return node


def _config_to_dict(cfg: BuildConfig) -> dict:
    sc = cfg.seed_config
    return {
        "metric": cfg.metric.value,
        "box_mode": cfg.box_mode.value,
        "expand_fraction": cfg.expand_fraction,
        "batch_size": cfg.batch_size,
        "max_depth": cfg.max_depth,
        "rng_seed": cfg.rng_seed,
        "seed_config": {
            "algorithm": sc.algorithm, "k": sc.k, "k_max": sc.k_max,
            "max_iters": sc.max_iters, "rng_seed": sc.rng_seed,
            "tolerance": sc.tolerance,
        },
    }


def _config_from_dict(d: dict) -> BuildConfig:
    return BuildConfig(
        metric=Metric(d["metric"]),
        box_mode=BoxMode(d["box_mode"]),
        expand_fraction=float(d["expand_fraction"]),
        seed_config=SeedConfig(**d["seed_config"]),
        batch_size=int(d["batch_size"]),
        max_depth=int(d["max_depth"]),
        rng_seed=int(d["rng_seed"]),
    )


def dumps_tree(tree: ClusterTree, include_member_ids: bool = True) -> str:
    """Canonical single-string form of a tree; identical trees give identical
    strings, which makes build determinism directly checkable."""
    doc = {
        "format": TREE_FORMAT,
        "version": TREE_VERSION,
        "dim": tree.dim,
        "build_config": _config_to_dict(tree.build_config),
        "global_stats": _stats_to_dict(tree.global_stats),
        "label_dictionary": tree.label_dictionary,
        "rejects": list(tree.rejects),
        "root": _node_to_dict(tree.root, include_member_ids),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save_tree(tree: ClusterTree, path, include_member_ids: bool = True) -> None:
    Path(path).write_text(dumps_tree(tree, include_member_ids) + "\n")


def load_tree(path) -> ClusterTree:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad tree file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != TREE_FORMAT:
        raise VersionError("not a cluster tree file")
    if doc.get("version") != TREE_VERSION:
        raise VersionError(f"unsupported tree version {doc.get('version')!r}")
    try:
        dim = int(doc["dim"])
        cfg = _config_from_dict(doc["build_config"])
        tree = ClusterTree(
            root=_node_from_dict(doc["root"], cfg.box_mode, dim),
            build_config=cfg,
            global_stats=_stats_from_dict(doc["global_stats"], dim),
            label_dictionary=dict(doc["label_dictionary"]),
            rejects=tuple(doc["rejects"]),
            dim=dim,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed tree file: {exc}") from None
    return tree
