"""Writers for the consumer's file formats.

These are standalone re-implementations of the documented schemas, so
this package only ever talks to the detection pipeline through files
it can validate on its own side. Output is deterministic: sorted keys,
repr-shortest floats, no timestamps.

Schemas:
  owssd.annotations.v1   one JSON document: classes, image table, boxes
  owssd.features.v1      JSONL: header with dim, then one record per box
  owssd.proposals.v1     JSONL: header, then scored class-optional boxes
"""

from __future__ import annotations

import json
import math
from typing import Any, Iterable, Optional, Sequence

from .errors import InputError

ANNOTATIONS_SCHEMA = "owssd.annotations.v1"
FEATURES_SCHEMA = "owssd.features.v1"
PROPOSALS_SCHEMA = "owssd.proposals.v1"

SPLITS = ("labeled", "unlabeled")


def dump_json_doc(path: str, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def dump_jsonl(path: str, header: dict, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, allow_nan=False) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def _corner_list(corners: Sequence[float]) -> list[float]:
    x1, y1, x2, y2 = (float(v) for v in corners)
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise InputError(f"box coordinates must be finite, got {list(corners)}")
    if not (x2 > x1 and y2 > y1):
        raise InputError(f"box corners must satisfy x2 > x1 and y2 > y1, got {list(corners)}")
    return [x1, y1, x2, y2]


def write_annotations_file(
    path: str,
    classes: Sequence[str],
    images: Sequence[dict],
    boxes: Sequence[dict],
    meta: Optional[dict] = None,
) -> None:
    """images: {image_id, width, height, split}; boxes: {image_id, corners, class}."""
    doc: dict = {
        "schema": ANNOTATIONS_SCHEMA,
        "classes": list(classes),
        "images": [
            {
                "image_id": im["image_id"],
                # floats on the wire keep reruns byte-stable on the consumer side
                "width": float(im["width"]),
                "height": float(im["height"]),
                "split": im["split"],
            }
            for im in images
        ],
        "boxes": [
            {
                "image_id": b["image_id"],
                "box": _corner_list(b["corners"]),
                "class": b["class"],
            }
            for b in boxes
        ],
    }
    if meta is not None:
        doc["meta"] = meta
    dump_json_doc(path, doc)


def write_proposals_file(path: str, rows: Sequence[dict], meta: Optional[dict] = None) -> None:
    """rows: {image_id, corners, score, class (may be None)}."""
    header: dict = {"schema": PROPOSALS_SCHEMA}
    if meta is not None:
        header["meta"] = meta

    def records():
        for r in rows:
            score = float(r["score"])
            if not (0.0 <= score <= 1.0):
                raise InputError(f"proposal score must lie in [0, 1], got {score}")
            yield {
                "image_id": r["image_id"],
                "box": _corner_list(r["corners"]),
                "score": score,
                "class": r.get("class"),
            }

    dump_jsonl(path, header, records())


def write_features_file(path: str, dim: int, rows: Iterable[dict],
                        meta: Optional[dict] = None) -> None:
    """rows: {image_id, corners, class, score, source, feature (list of floats)}."""
    if not (isinstance(dim, int) and dim >= 1):
        raise InputError(f"dim must be a positive integer, got {dim!r}")
    header: dict = {"schema": FEATURES_SCHEMA, "dim": dim}
    if meta is not None:
        header["meta"] = meta

    def records():
        for r in rows:
            feature = [float(v) for v in r["feature"]]
            if len(feature) != dim:
                raise InputError(
                    f"feature length {len(feature)} does not match the declared dim {dim}"
                )
            if not all(math.isfinite(v) for v in feature):
                raise InputError(f"non-finite feature values for image {r['image_id']!r}")
            yield {
                "image_id": r["image_id"],
                "box": _corner_list(r["corners"]),
                "class": r.get("class"),
                "score": r.get("score"),
                "source": r["source"],
                "feature": feature,
            }

    dump_jsonl(path, header, records())
