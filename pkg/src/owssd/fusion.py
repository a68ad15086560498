"""Pseudo-label fusion: merge teacher detections with explored OOD boxes.

The teacher contributes in-distribution pseudo-labels above a
confidence threshold. OOD boxes pass through non-maximum suppression
and then take precedence: any teacher label overlapping a surviving
OOD box too strongly is dropped, on the reasoning that a confident
novel-object claim beats a possibly confused known-class claim there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import (
    UNKNOWN_LABEL,
    ClassCatalog,
    Detection,
    GroundTruthScene,
    ScoredBox,
    group_by_image,
    iou,
    nms,
)
from .dataio import AnnotationSet, write_annotations
from .errors import InputError

PROVENANCE_TEACHER = "teacher"
PROVENANCE_EXPLORER = "ood-explorer"


@dataclass(frozen=True)
class FusionConfig:
    """Thresholds steering the merge.

    conf_threshold: minimum teacher score for an ID pseudo-label.
    overlap_iou: an ID label is dropped when its IoU with any surviving
        OOD label strictly exceeds this.
    ood_nms_iou: suppression threshold applied among OOD labels.
    filtering_enabled: turn the overlap-based dropping off to keep all
        teacher labels alongside OOD labels.
    """

    conf_threshold: float = 0.9
    overlap_iou: float = 0.5
    ood_nms_iou: float = 0.5
    filtering_enabled: bool = True

    def __post_init__(self) -> None:
        for name in ("conf_threshold", "overlap_iou", "ood_nms_iou"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise InputError(f"{name} must lie in [0, 1], got {v!r}")


@dataclass(frozen=True)
class PseudoLabelSet:
    """Fused pseudo-labels for one image, by origin."""

    image_id: str
    id_labels: tuple[ScoredBox, ...]
    ood_labels: tuple[ScoredBox, ...]
    id_provenance: str = PROVENANCE_TEACHER
    ood_provenance: str = PROVENANCE_EXPLORER

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("image_id must be a non-empty string")


def select_teacher_pseudolabels(
    detections: Sequence[Detection], conf_threshold: float, catalog: ClassCatalog
) -> list[Detection]:
    """Teacher detections at or above the confidence threshold, order preserved.

    Every detection must carry one of the catalog's ID classes; the
    teacher has no business emitting the open-world label.
    """
    if not (isinstance(conf_threshold, (int, float)) and 0.0 <= conf_threshold <= 1.0):
        raise InputError(f"conf_threshold must lie in [0, 1], got {conf_threshold!r}")
    for d in detections:
        if d.class_label is None or not catalog.is_id(d.class_label):
            raise InputError(
                f"teacher detection in image {d.image_id!r} has class {d.class_label!r}, "
                f"expected one of the catalog's ID classes"
            )
    return [d for d in detections if d.score >= conf_threshold]


def fuse(
    id_labels: Sequence[Detection],
    ood_labels: Sequence[Detection],
    cfg: FusionConfig,
    image_id: Optional[str] = None,
    ood_label: str = UNKNOWN_LABEL,
) -> PseudoLabelSet:
    """Merge one image's ID pseudo-labels with its OOD boxes.

    OOD boxes are deduplicated with NMS and relabeled to ``ood_label``;
    they are never confidence-filtered here. With filtering enabled,
    an ID label whose IoU with any surviving OOD label strictly
    exceeds cfg.overlap_iou is dropped. ID labels keep their classes
    and relative order; without OOD labels they pass through unchanged.
    """
    ids_seen = {d.image_id for d in id_labels} | {d.image_id for d in ood_labels}
    if image_id is not None:
        ids_seen.add(image_id)
    if len(ids_seen) > 1:
        raise InputError(f"fuse expects labels of a single image, got {sorted(ids_seen)!r}")
    if not ids_seen:
        raise InputError("fuse needs an image_id when both label lists are empty")
    img = next(iter(ids_seen))

    for d in id_labels:
        if d.class_label is None or d.class_label == ood_label:
            raise InputError(
                f"ID pseudo-label in image {img!r} must carry a known class, "
                f"got {d.class_label!r}"
            )
    ood_boxes = [ScoredBox(d.box, d.score, ood_label) for d in ood_labels]
    kept_ood = nms(ood_boxes, cfg.ood_nms_iou)
    if cfg.filtering_enabled:
        kept_id = [
            d.scored
            for d in id_labels
            if all(iou(d.box, o.box) <= cfg.overlap_iou for o in kept_ood)
        ]
    else:
        kept_id = [d.scored for d in id_labels]
    return PseudoLabelSet(img, tuple(kept_id), tuple(kept_ood))


def fuse_images(
    id_labels: Iterable[Detection],
    ood_labels: Iterable[Detection],
    cfg: FusionConfig,
    ood_label: str = UNKNOWN_LABEL,
) -> list[PseudoLabelSet]:
    """Fuse per image over the union of images named by either side, sorted by id."""
    by_img_id = group_by_image(id_labels)
    by_img_ood = group_by_image(ood_labels)
    out = []
    for img in sorted(set(by_img_id) | set(by_img_ood)):
        out.append(
            fuse(by_img_id.get(img, []), by_img_ood.get(img, []), cfg, img, ood_label)
        )
    return out


def pseudo_labels_as_detections(fused: Iterable[PseudoLabelSet]) -> list[Detection]:
    """Flatten fused pseudo-labels back into scored detections for evaluation."""
    out = []
    for ps in fused:
        for sb in ps.id_labels + ps.ood_labels:
            out.append(Detection(ps.image_id, sb.box, sb.score, sb.class_label))
    return out


def emit_training_set(
    base: AnnotationSet,
    fused: Sequence[PseudoLabelSet],
    catalog: ClassCatalog,
    path: Optional[str] = None,
    meta: Optional[dict] = None,
) -> AnnotationSet:
    """Combine labeled ground truth with fused pseudo-labels into one dataset.

    Labeled images keep their ground-truth boxes (which must all be ID
    classes); unlabeled images get their fused pseudo-labels, scores
    dropped. A fused set for a labeled image is ignored: real
    annotation beats pseudo-annotation. The result declares the ID
    classes plus the open-world label and passes the full annotation
    validity checks (and is written to ``path`` when given).
    """
    known_images = {im.image_id: im for im in base.images}
    fused_by_img: dict[str, PseudoLabelSet] = {}
    for ps in fused:
        if ps.image_id not in known_images:
            raise InputError(f"fused labels reference undeclared image {ps.image_id!r}")
        if ps.image_id in fused_by_img:
            raise InputError(f"duplicate fused label set for image {ps.image_id!r}")
        fused_by_img[ps.image_id] = ps

    classes = catalog.id_classes + (catalog.ood_label,)
    scene_map = base.scene_map()
    scenes = []
    for im in base.images:
        if im.split == "labeled":
            boxes = scene_map[im.image_id].boxes
            for _, cls in boxes:
                if not catalog.is_id(cls):
                    raise InputError(
                        f"labeled image {im.image_id!r} annotates class {cls!r}, "
                        f"which is not an ID class; clean the labeled split first"
                    )
            scenes.append(GroundTruthScene(im.image_id, boxes))
        else:
            ps = fused_by_img.get(im.image_id)
            boxes = []
            if ps is not None:
                for sb in ps.id_labels:
                    boxes.append((sb.box, sb.class_label))
                for sb in ps.ood_labels:
                    boxes.append((sb.box, catalog.ood_label))
            scenes.append(GroundTruthScene(im.image_id, tuple(boxes)))
    out = AnnotationSet(classes, base.images, tuple(scenes))
    if path is not None:
        write_annotations(path, out, meta)
    return out
