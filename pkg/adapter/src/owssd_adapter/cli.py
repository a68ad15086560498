"""Command line front end: convert annotation sources, extract features."""

from __future__ import annotations

import argparse
import json
import sys

from .convert import VOC15_CLASSES, VOC_CLASSES, convert_annotations
from .errors import FormatError, InputError
from .extract import SOURCE_FORMATS, ExtractionJob, extract_features

_CLASS_PRESETS = {"voc": VOC_CLASSES, "voc15": VOC15_CLASSES}


def _parse_classes(value: str) -> tuple[str, ...]:
    if value in _CLASS_PRESETS:
        return _CLASS_PRESETS[value]
    names = tuple(n for n in (p.strip() for p in value.split(",")) if n)
    if not names:
        raise InputError(f"empty class list: {value!r}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owssd-adapter",
        description="turn detection datasets into files the training "
                    "pipeline reads: annotations, proposals, box features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="annotation source to annotations/proposals file")
    conv.add_argument("--format", required=True, choices=("voc", "coco"))
    conv.add_argument("--source", required=True, help="XML file/dir or COCO JSON")
    conv.add_argument("--out", required=True)
    conv.add_argument("--split", default="labeled", choices=("labeled", "unlabeled"))
    conv.add_argument("--keep-classes", default=None,
                      help="comma list or preset name (voc, voc15); others dropped")
    conv.add_argument("--catalog", default=None,
                      help="fixed emitted class list (comma list or preset)")
    conv.add_argument("--emit", default="annotations", choices=("annotations", "proposals"))

    ext = sub.add_parser("extract", help="pooled CNN features for every box")
    ext.add_argument("--images", required=True, help="directory of image files")
    ext.add_argument("--source", required=True,
                     help="where the boxes come from (see --source-format)")
    ext.add_argument("--source-format", default="owssd", choices=SOURCE_FORMATS)
    ext.add_argument("--out", required=True)
    ext.add_argument("--weights", default="auto", choices=("auto", "imagenet", "random"))
    ext.add_argument("--seed", type=int, default=0)
    ext.add_argument("--batch-size", type=int, default=1,
                     help="decoded images kept in memory at once")
    ext.add_argument("--device", default="cpu")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            keep = _parse_classes(args.keep_classes) if args.keep_classes else None
            catalog = _parse_classes(args.catalog) if args.catalog else None
            summary = convert_annotations(
                args.format, args.source, args.out,
                split=args.split, keep_classes=keep, catalog=catalog, emit=args.emit,
            )
        else:
            job = ExtractionJob(
                image_dir=args.images,
                source_path=args.source,
                source_format=args.source_format,
                weights=args.weights,
                seed=args.seed,
                batch_size=args.batch_size,
                device=args.device,
            )
            summary = extract_features(job, args.out)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except Exception as e:  # anything else is a bug worth a traceback marker
        print(f"unexpected error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
