"""Capture pre-softmax class vectors from a torchvision classifier.

For every decodable image under the image root, one record is emitted:
the file's path (relative to the root) as source id, the class-layer vector,
and labels from one of three sources: the top-level directory name, a
manifest file, or the model's own top-k classes. Records are written as a
CFA1 dump, optionally with a label-dictionary sidecar for model-derived
labels.

The capture point is the final pre-softmax layer (the classifier output);
``layer`` redirects the capture to any named module for exploration.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision import models as tv_models
from torchvision import transforms

from .dump import write_dump, write_label_dictionary

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp"}

# classic zoo preprocessing, used when no published weight transforms exist
FALLBACK_TRANSFORM = transforms.Compose([
    transforms.Resize(256),
    transforms.CenterCrop(224),
    transforms.ToTensor(),
    transforms.Normalize(mean=[0.485, 0.456, 0.406],
                         std=[0.229, 0.224, 0.225]),
])


@dataclass(frozen=True)
class ExportJob:
    model: str
    images: str
    out: str
    label_source: str = "dirs"      # dirs | manifest | topk
    top_k: int = 5
    manifest: Optional[str] = None
    weights: str = "pretrained"     # pretrained | none
    layer: Optional[str] = None
    batch_size: int = 16

    def __post_init__(self):
        if self.label_source not in ("dirs", "manifest", "topk"):
            raise ValueError(f"unknown label source {self.label_source!r}")
        if self.label_source == "manifest" and not self.manifest:
            raise ValueError("manifest label source needs a manifest path")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class ExportResult:
    dump_path: str
    count: int
    vector_width: int
    skipped: list = field(default_factory=list)
    skip_log: Optional[str] = None
    label_dictionary_path: Optional[str] = None


def load_model(job: ExportJob):
    """Instantiate the zoo model plus its published preprocessing and, when
    available, its class-name table."""
    categories = None
    if job.weights == "pretrained":
        weights = tv_models.get_model_weights(job.model).DEFAULT
        model = tv_models.get_model(job.model, weights=weights)
        preprocess = weights.transforms()
        categories = weights.meta.get("categories")
    else:
        model = tv_models.get_model(job.model, weights=None)
        preprocess = FALLBACK_TRANSFORM
    model.eval()
    return model, preprocess, categories


def _collect_images(root: Path):
    return sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def _read_manifest(path) -> dict:
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)  # header
        for row in reader:
            if len(row) >= 2:
                labels = [l.strip() for l in row[1].split(";") if l.strip()]
                table[row[0].strip()] = labels
    return table


class _Capture:
    """Run the model; either take its output (the class layer) or the output
    of a named inner module."""

    def __init__(self, model, layer: Optional[str]):
        self.model = model
        self.grabbed = None
        if layer is not None:
            modules = dict(model.named_modules())
            if layer not in modules:
                raise ValueError(
                    f"model has no module named {layer!r}; "
                    f"try one of {sorted(modules)[:10]}...")
            modules[layer].register_forward_hook(self._hook)
        self.layer = layer

    def _hook(self, module, args, output):
        self.grabbed = output

    def __call__(self, batch: torch.Tensor) -> torch.Tensor:
        out = self.model(batch)
        if self.layer is not None:
            out = self.grabbed
        return torch.flatten(out, start_dim=1)


def export(job: ExportJob) -> ExportResult:
    """Run the job and write the dump. Undecodable images are skipped with a
    warning and listed in a sidecar log next to the dump."""
    root = Path(job.images)
    if not root.is_dir():
        raise FileNotFoundError(f"image directory {root} does not exist")
    model, preprocess, categories = load_model(job)
    capture = _Capture(model, job.layer)
    manifest = _read_manifest(job.manifest) if job.label_source == "manifest" else {}

    paths = _collect_images(root)
    records = []
    skipped = []
    used_topk_ids = {}

    def flush(batch_paths, tensors):
        if not tensors:
            return
        with torch.no_grad():
            vectors = capture(torch.stack(tensors)).cpu().numpy().astype(np.float64)
        for path, vec in zip(batch_paths, vectors):
            rel = path.relative_to(root).as_posix()
            if job.label_source == "dirs":
                if path.parent == root:
                    skipped.append((rel, "no class directory"))
                    print(f"warning: {rel}: not inside a class directory",
                          file=sys.stderr)
                    continue
                labels = [path.relative_to(root).parts[0]]
            elif job.label_source == "manifest":
                labels = manifest.get(rel) or manifest.get(path.name) or []
                if not labels:
                    skipped.append((rel, "not in manifest"))
                    print(f"warning: {rel}: no manifest entry", file=sys.stderr)
                    continue
            else:
                top = np.argsort(vec)[::-1][:job.top_k]
                labels = [f"class{int(i)}" for i in top]
                for i in top:
                    if categories:
                        used_topk_ids[f"class{int(i)}"] = categories[int(i)]
            records.append((rel, vec, labels))

    batch_paths, tensors = [], []
    for path in paths:
        try:
            with Image.open(path) as img:
                tensor = preprocess(img.convert("RGB"))
        except (UnidentifiedImageError, OSError) as exc:
            rel = path.relative_to(root).as_posix()
            skipped.append((rel, f"undecodable: {exc}"))
            print(f"warning: skipping {rel}: {exc}", file=sys.stderr)
            continue
        batch_paths.append(path)
        tensors.append(tensor)
        if len(tensors) == job.batch_size:
            flush(batch_paths, tensors)
            batch_paths, tensors = [], []
    flush(batch_paths, tensors)

    count = write_dump(job.out, records)
    width = len(records[0][1]) if records else 0

    skip_log = None
    if skipped:
        skip_log = str(job.out) + ".skipped.log"
        Path(skip_log).write_text(
            "".join(f"{rel}\t{reason}\n" for rel, reason in skipped))

    dict_path = None
    if used_topk_ids:
        dict_path = str(job.out) + ".labels.tsv"
        write_label_dictionary(dict_path, used_topk_ids)

    return ExportResult(dump_path=str(job.out), count=count, vector_width=width,
                        skipped=skipped, skip_log=skip_log,
                        label_dictionary_path=dict_path)
