"""Open-world detection and OOD-decision metrics.

Detection quality follows the classic interpolated-precision protocol:
per-class average precision at a fixed IoU threshold, plus per-class
recall under a per-image detection budget. The open-world bucket is
treated as one more class, so reports split group means into All / ID /
OOD. Decision quality (F1, FPR) and ranking quality (AUROC) treat OOD
as the positive class throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import ClassCatalog, GroundTruthScene, ScoredBox, iou
from .errors import InputError


@dataclass(frozen=True)
class GroupMeans:
    """Arithmetic means over eligible classes: everything, ID only, OOD only.

    A group with no eligible class (no ground-truth instances) is None.
    """

    all: Optional[float]
    id: Optional[float]
    ood: Optional[float]

    def as_dict(self) -> dict:
        return {"all": self.all, "id": self.id, "ood": self.ood}


@dataclass(frozen=True)
class EvalReport:
    """Detection evaluation results; AP and AR parts may be filled separately."""

    iou_threshold: float
    n_images: int
    n_gt_boxes: int
    n_detections: int
    skipped_classes: tuple[str, ...] = ()
    per_class_ap: Optional[dict] = None
    ap: Optional[GroupMeans] = None
    per_class_recall: Optional[dict] = None
    ar: Optional[GroupMeans] = None
    max_dets: Optional[int] = None

    def as_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "n_images": self.n_images,
            "n_gt_boxes": self.n_gt_boxes,
            "n_detections": self.n_detections,
            "skipped_classes": list(self.skipped_classes),
            "per_class_ap": self.per_class_ap,
            "ap": self.ap.as_dict() if self.ap else None,
            "per_class_recall": self.per_class_recall,
            "ar": self.ar.as_dict() if self.ar else None,
            "max_dets": self.max_dets,
        }


def _check_inputs(
    detections: Mapping[str, Sequence[ScoredBox]],
    scenes: Sequence[GroundTruthScene],
    catalog: ClassCatalog,
) -> dict[str, GroundTruthScene]:
    scene_map: dict[str, GroundTruthScene] = {}
    for s in scenes:
        if s.image_id in scene_map:
            raise InputError(f"duplicate ground-truth scene for image {s.image_id!r}")
        scene_map[s.image_id] = s
    allowed = set(catalog.eval_classes)
    for s in scenes:
        for _, cls in s.boxes:
            if cls not in allowed:
                raise InputError(
                    f"ground-truth class {cls!r} in image {s.image_id!r} is not in the catalog; "
                    f"map novel classes to {catalog.ood_label!r} before evaluating"
                )
    for img, dets in detections.items():
        if img not in scene_map:
            raise InputError(f"detections reference image {img!r} absent from ground truth")
        for d in dets:
            if d.class_label is None or d.class_label not in allowed:
                raise InputError(
                    f"detection in image {img!r} has class {d.class_label!r}, "
                    f"expected one of the catalog classes or {catalog.ood_label!r}"
                )
    return scene_map


def _match_class(
    class_dets: list[tuple[str, int, ScoredBox]],
    gt_by_image: dict[str, list],
    iou_threshold: float,
) -> tuple[np.ndarray, int]:
    """Greedy matching: detections in score order claim the best free GT box.

    ``class_dets`` holds (image_id, original index, box) and must
    already be sorted by (-score, image_id, index). A detection matches
    the unmatched same-image GT box of highest IoU among those with
    IoU >= threshold (ties: lowest GT index). Returns the TP flags in
    the given order and the number of matched GT boxes.
    """
    matched: dict[str, np.ndarray] = {
        img: np.zeros(len(boxes), dtype=bool) for img, boxes in gt_by_image.items()
    }
    tp = np.zeros(len(class_dets), dtype=bool)
    n_matched = 0
    for i, (img, _, det) in enumerate(class_dets):
        gts = gt_by_image.get(img, [])
        if not gts:
            continue
        best_j = -1
        best_iou = 0.0
        flags = matched[img]
        for j, gb in enumerate(gts):
            if flags[j]:
                continue
            v = iou(det.box, gb)
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            flags[best_j] = True
            tp[i] = True
            n_matched += 1
    return tp, n_matched


def _ap_from_flags(tp: np.ndarray, npos: int) -> float:
    """All-point interpolated AP from ordered TP flags."""
    if len(tp) == 0:
        return 0.0
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    recall = tps / npos
    precision = tps / (tps + fps)
    # Interpolate: precision at recall r is the max precision at any recall >= r.
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, interp):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def _group_means(per_class: dict, catalog: ClassCatalog) -> GroupMeans:
    id_vals = [v for c, v in per_class.items() if c in catalog.id_classes]
    ood_vals = [v for c, v in per_class.items() if c == catalog.ood_label]
    all_vals = list(per_class.values())

    def mean(vals):
        return float(np.mean(vals)) if vals else None

    return GroupMeans(all=mean(all_vals), id=mean(id_vals), ood=mean(ood_vals))


def _sorted_class_dets(
    detections: Mapping[str, Sequence[ScoredBox]], cls: str
) -> list[tuple[str, int, ScoredBox]]:
    rows = [
        (img, i, d)
        for img, dets in detections.items()
        for i, d in enumerate(dets)
        if d.class_label == cls
    ]
    rows.sort(key=lambda r: (-r[2].score, r[0], r[1]))
    return rows


def voc_ap50(
    detections: Mapping[str, Sequence[ScoredBox]],
    scenes: Sequence[GroundTruthScene],
    catalog: ClassCatalog,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Per-class all-point-interpolated AP and group means.

    Classes with zero ground-truth instances are skipped and excluded
    from every mean; their detections are simply ignored. A class with
    ground truth but no detections scores AP 0.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise InputError(f"iou_threshold must lie in (0, 1], got {iou_threshold!r}")
    scene_map = _check_inputs(detections, scenes, catalog)
    per_class: dict[str, float] = {}
    skipped: list[str] = []
    n_gt = sum(len(s.boxes) for s in scenes)
    n_det = sum(len(v) for v in detections.values())
    for cls in catalog.eval_classes:
        gt_by_image = {
            s.image_id: [b for b, c in s.boxes if c == cls] for s in scenes
        }
        npos = sum(len(v) for v in gt_by_image.values())
        if npos == 0:
            skipped.append(cls)
            continue
        rows = _sorted_class_dets(detections, cls)
        tp, _ = _match_class(rows, gt_by_image, iou_threshold)
        per_class[cls] = _ap_from_flags(tp, npos)
    return EvalReport(
        iou_threshold=iou_threshold,
        n_images=len(scene_map),
        n_gt_boxes=n_gt,
        n_detections=n_det,
        skipped_classes=tuple(skipped),
        per_class_ap=per_class,
        ap=_group_means(per_class, catalog),
    )


def average_recall(
    detections: Mapping[str, Sequence[ScoredBox]],
    scenes: Sequence[GroundTruthScene],
    catalog: ClassCatalog,
    max_dets: int = 100,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Per-class recall under a per-image detection budget, plus group means.

    Each image keeps only its ``max_dets`` highest-scoring detections
    across all classes (ties by input index) before matching.
    """
    if not isinstance(max_dets, int) or max_dets < 1:
        raise InputError(f"max_dets must be an integer >= 1, got {max_dets!r}")
    if not (0.0 < iou_threshold <= 1.0):
        raise InputError(f"iou_threshold must lie in (0, 1], got {iou_threshold!r}")
    scene_map = _check_inputs(detections, scenes, catalog)
    capped: dict[str, list[ScoredBox]] = {}
    for img, dets in detections.items():
        order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))[:max_dets]
        capped[img] = [dets[i] for i in sorted(order)]  # keep input order within image
    per_class: dict[str, float] = {}
    skipped: list[str] = []
    n_gt = sum(len(s.boxes) for s in scenes)
    n_det = sum(len(v) for v in detections.values())
    for cls in catalog.eval_classes:
        gt_by_image = {
            s.image_id: [b for b, c in s.boxes if c == cls] for s in scenes
        }
        npos = sum(len(v) for v in gt_by_image.values())
        if npos == 0:
            skipped.append(cls)
            continue
        rows = _sorted_class_dets(capped, cls)
        _, n_matched = _match_class(rows, gt_by_image, iou_threshold)
        per_class[cls] = n_matched / npos
    return EvalReport(
        iou_threshold=iou_threshold,
        n_images=len(scene_map),
        n_gt_boxes=n_gt,
        n_detections=n_det,
        skipped_classes=tuple(skipped),
        per_class_recall=per_class,
        ar=_group_means(per_class, catalog),
        max_dets=max_dets,
    )


def evaluate_detections(
    detections: Mapping[str, Sequence[ScoredBox]],
    scenes: Sequence[GroundTruthScene],
    catalog: ClassCatalog,
    max_dets: int = 100,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """AP and AR in one report."""
    ap_rep = voc_ap50(detections, scenes, catalog, iou_threshold)
    ar_rep = average_recall(detections, scenes, catalog, max_dets, iou_threshold)
    return EvalReport(
        iou_threshold=iou_threshold,
        n_images=ap_rep.n_images,
        n_gt_boxes=ap_rep.n_gt_boxes,
        n_detections=ap_rep.n_detections,
        skipped_classes=ap_rep.skipped_classes,
        per_class_ap=ap_rep.per_class_ap,
        ap=ap_rep.ap,
        per_class_recall=ar_rep.per_class_recall,
        ar=ar_rep.ar,
        max_dets=max_dets,
    )


@dataclass(frozen=True)
class BinaryOodEval:
    """Confusion counts and derived rates for OOD-vs-ID decisions.

    OOD is the positive class. Rates with a zero denominator are
    reported as 0.0 and named in ``undefined_rates``.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    fpr: float
    undefined_rates: tuple[str, ...] = ()
    auroc: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "undefined_rates": list(self.undefined_rates),
            "auroc": self.auroc,
        }


def binary_ood_eval(
    decisions: Sequence[tuple[bool, bool]], auroc_value: Optional[float] = None
) -> BinaryOodEval:
    """Score (predicted_is_ood, true_is_ood) pairs; OOD is positive."""
    if len(decisions) == 0:
        raise InputError("decisions must not be empty")
    tp = fp = tn = fn = 0
    for pred, truth in decisions:
        if pred and truth:
            tp += 1
        elif pred and not truth:
            fp += 1
        elif not pred and truth:
            fn += 1
        else:
            tn += 1
    undefined = []

    def rate(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = rate(tp, tp + fp, "precision")
    recall = rate(tp, tp + fn, "recall")
    f1 = rate(2 * tp, 2 * tp + fp + fn, "f1")
    fpr = rate(fp, fp + tn, "fpr")
    return BinaryOodEval(
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall, f1=f1, fpr=fpr,
        undefined_rates=tuple(undefined),
        auroc=auroc_value,
    )


def auroc(scored: Sequence[tuple[float, bool]]) -> float:
    """Area under the ROC curve for (score, is_ood) pairs; higher score = more OOD.

    Rank-based: equals the probability that a random OOD sample
    outscores a random ID sample, ties counting one half. Needs at
    least one sample of each kind.
    """
    if len(scored) == 0:
        raise InputError("scored must not be empty")
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    truth = np.array([bool(t) for _, t in scored])
    if not np.isfinite(scores).all():
        raise InputError("scores must be finite")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUROC needs at least one OOD and one ID sample")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # ranks are 1-based; tied scores share the average rank
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    rank_sum_pos = float(ranks[truth].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)
