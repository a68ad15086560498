"""Annotation sources: VOC XML and COCO JSON in, portable schemas out.

Coordinates are taken verbatim from the source. VOC's pixel convention
(1-based, inclusive xmax/ymax up to the image width) already satisfies
the consumer's bounds rule, so no off-by-one adjustment is applied and
none would survive the "geometry preserved exactly" contract anyway.
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import FormatError, InputError
from .sink import (
    ANNOTATIONS_SCHEMA,
    PROPOSALS_SCHEMA,
    SPLITS,
    write_annotations_file,
    write_proposals_file,
)

# canonical 20-class list, alphabetical; the 15-class open-world split
# keeps the first fifteen and treats the rest as never-labeled
VOC_CLASSES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat",
    "chair", "cow", "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)
VOC15_CLASSES = VOC_CLASSES[:15]


@dataclass(frozen=True)
class SourceImage:
    image_id: str
    file_name: str
    width: float
    height: float


@dataclass(frozen=True)
class SourceBox:
    image_id: str
    corners: tuple[float, float, float, float]
    class_name: Optional[str]
    score: Optional[float] = None


def _stem(file_name: str) -> str:
    return os.path.splitext(os.path.basename(file_name))[0]


def _text(node: ET.Element, tag: str, path: str) -> str:
    child = node.find(tag)
    if child is None or child.text is None or not child.text.strip():
        raise FormatError(f"missing <{tag}> in {path}")
    return child.text.strip()


def parse_voc(source: str) -> tuple[list[SourceImage], list[SourceBox]]:
    """Read one VOC XML file or a directory of them (sorted by name)."""
    if os.path.isdir(source):
        paths = sorted(
            os.path.join(source, n) for n in os.listdir(source) if n.endswith(".xml")
        )
        if not paths:
            raise FormatError(f"no .xml files in directory {source}")
    elif os.path.exists(source):
        paths = [source]
    else:
        raise FileNotFoundError(f"no such annotation source: {source}")

    images: list[SourceImage] = []
    boxes: list[SourceBox] = []
    for path in paths:
        try:
            root = ET.parse(path).getroot()
        except ET.ParseError as e:
            raise FormatError(f"unparseable XML in {path}: {e}") from e
        file_name = _text(root, "filename", path)
        size = root.find("size")
        if size is None:
            raise FormatError(f"missing <size> in {path}")
        try:
            width = float(_text(size, "width", path))
            height = float(_text(size, "height", path))
        except ValueError as e:
            raise FormatError(f"non-numeric image size in {path}: {e}") from e
        image_id = _stem(file_name)
        images.append(SourceImage(image_id, file_name, width, height))
        for obj in root.findall("object"):
            name = _text(obj, "name", path)
            bnd = obj.find("bndbox")
            if bnd is None:
                raise FormatError(f"object without <bndbox> in {path}")
            try:
                corners = tuple(
                    float(_text(bnd, t, path)) for t in ("xmin", "ymin", "xmax", "ymax")
                )
            except ValueError as e:
                raise FormatError(f"non-numeric box corner in {path}: {e}") from e
            boxes.append(SourceBox(image_id, corners, name))
    return images, boxes


def parse_coco(source: str) -> tuple[list[SourceImage], list[SourceBox]]:
    """Read a COCO detection JSON; xywh boxes become corner boxes."""
    if not os.path.exists(source):
        raise FileNotFoundError(f"no such annotation source: {source}")
    with open(source, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"not valid JSON: {source}: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError(f"expected a JSON object in {source}")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise FormatError(f"missing or non-list {key!r} section in {source}")

    categories: dict[int, str] = {}
    for cat in doc["categories"]:
        if not isinstance(cat, dict) or "id" not in cat or "name" not in cat:
            raise FormatError(f"category entries need id and name in {source}")
        categories[cat["id"]] = str(cat["name"])

    images: list[SourceImage] = []
    id_map: dict[int, str] = {}
    for im in doc["images"]:
        if not isinstance(im, dict):
            raise FormatError(f"image entries must be objects in {source}")
        try:
            file_name = str(im["file_name"])
            width = float(im["width"])
            height = float(im["height"])
            raw_id = im["id"]
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(
                f"image entries need id, file_name, width, height in {source}: {e}"
            ) from e
        image_id = _stem(file_name)
        id_map[raw_id] = image_id
        images.append(SourceImage(image_id, file_name, width, height))

    boxes: list[SourceBox] = []
    for a in doc["annotations"]:
        if not isinstance(a, dict):
            raise FormatError(f"annotation entries must be objects in {source}")
        if a.get("image_id") not in id_map:
            raise FormatError(
                f"annotation references unknown image id {a.get('image_id')!r} in {source}"
            )
        if a.get("category_id") not in categories:
            raise FormatError(
                f"annotation references unknown category id {a.get('category_id')!r} in {source}"
            )
        bbox = a.get("bbox")
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise FormatError(f"bbox must be [x, y, w, h] in {source}, got {bbox!r}")
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            raise FormatError(f"degenerate bbox {bbox} in {source}")
        boxes.append(
            SourceBox(id_map[a["image_id"]], (x, y, x + w, y + h), categories[a["category_id"]])
        )
    return images, boxes


def read_owssd_annotations(path: str) -> tuple[list[SourceImage], list[SourceBox]]:
    """Standalone reader for the consumer's own annotation documents."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"not valid JSON: {path}: {e}") from e
    if not isinstance(doc, dict) or doc.get("schema") != ANNOTATIONS_SCHEMA:
        raise FormatError(f"expected schema {ANNOTATIONS_SCHEMA!r} in {path}")
    images = []
    for im in doc.get("images", []):
        images.append(
            SourceImage(str(im["image_id"]), str(im["image_id"]),
                        float(im["width"]), float(im["height"]))
        )
    boxes = []
    for b in doc.get("boxes", []):
        x1, y1, x2, y2 = (float(v) for v in b["box"])
        boxes.append(SourceBox(str(b["image_id"]), (x1, y1, x2, y2), str(b["class"])))
    return images, boxes


def read_owssd_proposals(path: str) -> list[SourceBox]:
    """Standalone reader for the consumer's proposal files."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    boxes: list[SourceBox] = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as e:
            raise FormatError(f"unreadable header in {path}: {e}") from e
        if not isinstance(header, dict) or header.get("schema") != PROPOSALS_SCHEMA:
            raise FormatError(f"expected schema {PROPOSALS_SCHEMA!r} in {path}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"bad record at {path}:{lineno}: {e}") from e
            x1, y1, x2, y2 = (float(v) for v in rec["box"])
            boxes.append(
                SourceBox(str(rec["image_id"]), (x1, y1, x2, y2),
                          rec.get("class"), float(rec["score"]))
            )
    return boxes


_PARSERS = {"voc": parse_voc, "coco": parse_coco}


def _bounds_check(images: Sequence[SourceImage], boxes: Iterable[SourceBox]) -> None:
    table = {im.image_id: im for im in images}
    for b in boxes:
        im = table.get(b.image_id)
        if im is None:
            raise FormatError(f"box references undeclared image {b.image_id!r}")
        x1, y1, x2, y2 = b.corners
        if not (x2 > x1 and y2 > y1):
            raise FormatError(f"degenerate box {list(b.corners)} in image {b.image_id!r}")
        if x1 < 0 or y1 < 0 or x2 > im.width or y2 > im.height:
            raise FormatError(
                f"box {list(b.corners)} exceeds image {b.image_id!r} bounds "
                f"({im.width} x {im.height}); coordinates are emitted verbatim, "
                "so the source must already be consistent"
            )


def convert_annotations(
    source_format: str,
    source: str,
    out_path: str,
    *,
    split: str = "labeled",
    keep_classes: Optional[Sequence[str]] = None,
    catalog: Optional[Sequence[str]] = None,
    emit: str = "annotations",
    meta: Optional[dict] = None,
) -> dict:
    """Convert VOC or COCO ground truth into a consumer-readable file.

    keep_classes drops boxes of every other class before anything else
    happens (the open-world recipe: hide the tail classes from labeled
    data). catalog, when given, fixes the emitted class list; a
    surviving box with a class outside it is an error. emit selects
    "annotations" (default) or "proposals", the latter re-emitting the
    kept boxes as score-1.0 class-agnostic candidates.
    """
    if source_format not in _PARSERS:
        raise InputError(
            f"source_format must be one of {sorted(_PARSERS)}, got {source_format!r}"
        )
    if split not in SPLITS:
        raise InputError(f"split must be one of {SPLITS}, got {split!r}")
    if emit not in ("annotations", "proposals"):
        raise InputError(f"emit must be 'annotations' or 'proposals', got {emit!r}")

    images, boxes = _PARSERS[source_format](source)
    if keep_classes is not None:
        keep = set(keep_classes)
        boxes = [b for b in boxes if b.class_name in keep]
    observed = sorted({b.class_name for b in boxes})
    if catalog is not None:
        stray = [c for c in observed if c not in set(catalog)]
        if stray:
            raise FormatError(f"classes outside the supplied catalog: {stray!r}")
        classes = tuple(catalog)
    else:
        classes = tuple(observed)
    _bounds_check(images, boxes)

    if emit == "annotations":
        write_annotations_file(
            out_path,
            classes,
            [{"image_id": im.image_id, "width": im.width, "height": im.height,
              "split": split} for im in images],
            [{"image_id": b.image_id, "corners": b.corners, "class": b.class_name}
             for b in boxes],
            meta,
        )
    else:
        write_proposals_file(
            out_path,
            [{"image_id": b.image_id, "corners": b.corners, "score": 1.0, "class": None}
             for b in boxes],
            meta,
        )
    return {
        "n_images": len(images),
        "n_boxes": len(boxes),
        "classes": list(classes),
        "out": out_path,
    }
