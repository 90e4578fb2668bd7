"""Writer for the CFA1 activation dump format.

Layout: magic ``CFA1``, u32 header length, JSON text header with ``dim``,
``count`` and the ``labels`` table, then one record per activation:
u32 id length, id bytes (utf-8), dim little-endian f64 features, u32 label
count, u32 label-table indexes. Writes go to a temp file in the target
directory and are renamed into place, so a crash never leaves a partial dump
under the final name.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"CFA1"


def write_dump(path, records) -> int:
    """Write ``(source_id, vector, labels)`` records; returns the count.

    Vectors must share one width and contain only finite values.
    """
    records = list(records)
    dim = len(records[0][1]) if records else 0
    label_table = sorted({l for _, _, labels in records for l in labels})
    index = {l: i for i, l in enumerate(label_table)}
    header = {"dim": dim, "count": len(records), "labels": label_table}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or ".", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for source_id, vector, labels in records:
                vec = np.asarray(vector, dtype=np.float64)
                if vec.shape != (dim,):
                    raise ValueError(
                        f"record {source_id!r} has width {vec.shape}, dump is {dim}")
                if not np.isfinite(vec).all():
                    raise ValueError(f"record {source_id!r} has non-finite values")
                ident = str(source_id).encode("utf-8")
                fh.write(struct.pack("<I", len(ident)))
                fh.write(ident)
                fh.write(vec.astype("<f8").tobytes())
                ids = sorted(index[l] for l in labels)
                fh.write(struct.pack("<I", len(ids)))
                if ids:
                    fh.write(struct.pack(f"<{len(ids)}I", *ids))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return len(records)


def write_label_dictionary(path, table: dict) -> None:
    """Two-column id -> human-readable-name sidecar."""
    lines = [f"{key}\t{value}" for key, value in sorted(table.items())]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")
