"""Command line for the activation exporter."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cf-export",
        description="dump pre-softmax class vectors of a torchvision "
                    "classifier in the CFA1 activation format")
    parser.add_argument("--model", required=True,
                        help="torchvision model name, e.g. squeezenet1_0")
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--out", required=True, help="output dump path")
    parser.add_argument("--labels", choices=["dirs", "manifest", "topk"],
                        default="dirs", help="label source (default dirs)")
    parser.add_argument("--top-k", type=int, default=5,
                        help="labels per record in topk mode")
    parser.add_argument("--manifest", help="filename -> labels csv for "
                                           "--labels manifest")
    parser.add_argument("--weights", choices=["pretrained", "none"],
                        default="pretrained",
                        help="'none' uses a randomly initialised network")
    parser.add_argument("--layer", help="capture a named inner module "
                                        "instead of the class layer")
    parser.add_argument("--batch-size", type=int, default=16)
    args = parser.parse_args(argv)

    try:
        job = ExportJob(model=args.model, images=args.images, out=args.out,
                        label_source=args.labels, top_k=args.top_k,
                        manifest=args.manifest, weights=args.weights,
                        layer=args.layer, batch_size=args.batch_size)
        result = export(job)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.count} records (width {result.vector_width}) "
          f"to {result.dump_path}")
    if result.skip_log:
        print(f"skipped {len(result.skipped)} images, see {result.skip_log}")
    if result.label_dictionary_path:
        print(f"label dictionary at {result.label_dictionary_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
