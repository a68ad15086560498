"""Pooled box features from real images, written as a portable file.

The job reads boxes from a VOC/COCO source or from files the consumer
itself emits (annotation documents or proposal lists), runs each image
once through the frozen trunk, pools every box, and streams records in
the exact order the boxes arrived. Reruns on the same inputs produce
byte-identical files; torch is pinned to one thread to keep reductions
deterministic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .backbone import FEATURE_DIM, load_backbone, load_image_tensor, pool_boxes
from .convert import (
    SourceBox,
    SourceImage,
    parse_coco,
    parse_voc,
    read_owssd_annotations,
    read_owssd_proposals,
)
from .errors import FormatError, InputError
from .sink import ANNOTATIONS_SCHEMA, PROPOSALS_SCHEMA, write_features_file

_IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp")

SOURCE_FORMATS = ("voc", "coco", "owssd")


@dataclass
class ExtractionJob:
    image_dir: str
    source_path: str
    source_format: str = "owssd"
    backbone: str = "resnet18-layer3"
    feature_dim: int = FEATURE_DIM
    batch_size: int = 1
    device: str = "cpu"
    weights: str = "auto"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.source_format not in SOURCE_FORMATS:
            raise InputError(
                f"source_format must be one of {SOURCE_FORMATS}, got {self.source_format!r}"
            )
        if self.feature_dim != FEATURE_DIM:
            raise InputError(
                f"the available backbone emits {FEATURE_DIM}-dim features, "
                f"feature_dim={self.feature_dim} is not producible"
            )
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise InputError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not os.path.isdir(self.image_dir):
            raise FileNotFoundError(f"no such image directory: {self.image_dir}")


def _sniff_owssd(path: str) -> str:
    """Distinguish an annotation document from a proposals JSONL by schema."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    neither = FormatError(
        f"{path} declares neither {ANNOTATIONS_SCHEMA!r} nor {PROPOSALS_SCHEMA!r}"
    )
    try:
        header = json.loads(first)
    except json.JSONDecodeError:
        header = None
    if isinstance(header, dict):
        # a complete object on line one: a JSONL header or a compact document
        if header.get("schema") == PROPOSALS_SCHEMA:
            return "proposals"
        if header.get("schema") == ANNOTATIONS_SCHEMA:
            return "annotations"
        raise neither
    # pretty-printed document: the schema key may sit anywhere, so parse it all
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"not a readable source file: {path}: {e}") from e
    if isinstance(doc, dict) and doc.get("schema") == ANNOTATIONS_SCHEMA:
        return "annotations"
    raise neither


def _load_boxes(job: ExtractionJob) -> tuple[list[SourceImage], list[SourceBox], str]:
    """Returns (declared images or [], boxes in input order, record source tag)."""
    if job.source_format == "voc":
        images, boxes = parse_voc(job.source_path)
        return images, boxes, "gt"
    if job.source_format == "coco":
        images, boxes = parse_coco(job.source_path)
        return images, boxes, "gt"
    kind = _sniff_owssd(job.source_path)
    if kind == "annotations":
        images, boxes = read_owssd_annotations(job.source_path)
        return images, boxes, "gt"
    return [], read_owssd_proposals(job.source_path), "proposal"


def _resolve_image(image_dir: str, image_id: str, file_name: Optional[str]) -> str:
    """Find the pixel file: declared name first, then extension guessing."""
    candidates = []
    if file_name:
        candidates.append(os.path.join(image_dir, file_name))
    candidates.extend(os.path.join(image_dir, image_id + ext) for ext in _IMAGE_EXTS)
    for path in candidates:
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"no image file for {image_id!r} under {image_dir} "
        f"(tried {[os.path.basename(c) for c in candidates]})"
    )


def extract_features(job: ExtractionJob, out_path: str) -> dict:
    """Run the job and write a features file; returns a summary dict."""
    torch.set_num_threads(1)
    images, boxes, source_tag = _load_boxes(job)
    declared = {im.image_id: im for im in images}
    file_names = {im.image_id: im.file_name for im in images}

    # resolve every referenced image before touching the backbone so a
    # missing file fails fast instead of after minutes of pooling
    paths: dict[str, str] = {}
    for b in boxes:
        if b.image_id not in paths:
            paths[b.image_id] = _resolve_image(
                job.image_dir, b.image_id, file_names.get(b.image_id)
            )

    trunk, bmeta = load_backbone(job.backbone, job.weights, job.seed, job.device)

    # decoded images are cached up to batch_size at a time; records keep
    # the input order no matter how boxes interleave across images
    cache: dict[str, tuple[torch.Tensor, int, int]] = {}

    def tensor_for(image_id: str):
        if image_id not in cache:
            tensor, width, height = load_image_tensor(paths[image_id], job.device)
            dec = declared.get(image_id)
            if dec is not None and (float(dec.width) != float(width)
                                    or float(dec.height) != float(height)):
                raise FormatError(
                    f"{image_id!r} declared as {dec.width}x{dec.height} but the "
                    f"pixel file is {width}x{height}"
                )
            while len(cache) >= job.batch_size:
                cache.pop(next(iter(cache)))
            cache[image_id] = (tensor, width, height)
        return cache[image_id]

    rows = []
    for b in boxes:
        tensor, width, height = tensor_for(b.image_id)
        x1, y1, x2, y2 = b.corners
        if not (x2 > x1 and y2 > y1):
            raise FormatError(f"degenerate box {list(b.corners)} in image {b.image_id!r}")
        if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
            raise FormatError(
                f"box {list(b.corners)} exceeds the {width}x{height} pixel "
                f"bounds of image {b.image_id!r}"
            )
        feat = pool_boxes(trunk, tensor, np.asarray([b.corners], dtype=np.float64))[0]
        rows.append({
            "image_id": b.image_id,
            "corners": b.corners,
            "class": b.class_name,
            "score": b.score if source_tag == "proposal" else None,
            "source": source_tag,
            "feature": feat.tolist(),
        })

    meta = dict(bmeta)
    meta.update(job.meta)
    write_features_file(out_path, FEATURE_DIM, rows, meta)
    return {
        "n_images": len({b.image_id for b in boxes}),
        "n_boxes": len(rows),
        "dim": FEATURE_DIM,
        "source": source_tag,
        "out": out_path,
    }
