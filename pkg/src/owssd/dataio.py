"""File schemas, loaders/writers, and the synthetic scene generator.

Every file format carries an explicit schema tag and is written
deterministically (sorted keys, floats via repr, no timestamps), so
reruns with identical inputs produce byte-identical files. Loaders
validate strictly and name the offending line.

JSONL formats (header line, then one record per line):
  owssd.features.v1     box-level feature vectors
  owssd.proposals.v1    class-agnostic or open-world-labeled boxes
  owssd.detections.v1   class-labeled scored boxes
JSON documents:
  owssd.annotations.v1  images, class list, ground-truth boxes
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from ._ser import as_float_list, dump_json_doc, dump_jsonl, iter_jsonl, load_json_doc, require
from .core import BoundingBox, Detection, GroundTruthScene
from .errors import DimensionError, InputError, InvalidBoxError, SchemaError

FEATURES_SCHEMA = "owssd.features.v1"
PROPOSALS_SCHEMA = "owssd.proposals.v1"
DETECTIONS_SCHEMA = "owssd.detections.v1"
ANNOTATIONS_SCHEMA = "owssd.annotations.v1"

FEATURE_SOURCES = ("gt", "proposal", "teacher")
SPLITS = ("labeled", "unlabeled")


@dataclass(frozen=True, eq=False)
class FeatureRecord:
    """One box-level feature vector with its provenance."""

    image_id: str
    box: BoundingBox
    source: str
    feature: np.ndarray
    class_name: Optional[str] = None
    score: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("image_id must be a non-empty string")
        if self.source not in FEATURE_SOURCES:
            raise InputError(f"source must be one of {FEATURE_SOURCES}, got {self.source!r}")
        f = np.asarray(self.feature, dtype=np.float64)
        if f.ndim != 1 or f.size < 1:
            raise DimensionError(f"feature must be a 1-D vector, got shape {f.shape}")
        if not np.isfinite(f).all():
            raise InputError("feature values must be finite")
        object.__setattr__(self, "feature", f)
        if self.class_name is not None and not self.class_name:
            raise InputError("class_name must be None or a non-empty string")
        if self.score is not None:
            if not (isinstance(self.score, (int, float)) and math.isfinite(self.score)):
                raise InputError(f"score must be a finite number, got {self.score!r}")
            if not 0.0 <= self.score <= 1.0:
                raise InputError(f"score must lie in [0, 1], got {self.score!r}")


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """A homogeneous collection of feature records of one dimension."""

    dim: int
    records: tuple[FeatureRecord, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.dim, int) or self.dim < 1:
            raise InputError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "records", tuple(self.records))
        for i, r in enumerate(self.records):
            if r.feature.shape[0] != self.dim:
                raise DimensionError(
                    f"record {i} has dimension {r.feature.shape[0]}, feature set declares {self.dim}"
                )

    def matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.dim))
        return np.stack([r.feature for r in self.records])

    def by_class(self, *, source: Optional[str] = None) -> dict[str, np.ndarray]:
        """Feature matrices keyed by class name (sorted), skipping unlabeled records."""
        groups: dict[str, list[np.ndarray]] = {}
        for r in self.records:
            if r.class_name is None:
                continue
            if source is not None and r.source != source:
                continue
            groups.setdefault(r.class_name, []).append(r.feature)
        return {c: np.stack(groups[c]) for c in sorted(groups)}


@dataclass(frozen=True)
class ImageInfo:
    image_id: str
    width: float
    height: float
    split: str = "labeled"

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("image_id must be a non-empty string")
        for v in (self.width, self.height):
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InputError(f"image dimensions must be positive finite numbers, got {v!r}")
        if self.split not in SPLITS:
            raise InputError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass(frozen=True)
class AnnotationSet:
    """Ground truth for a dataset: class list, image table, per-image scenes.

    Invariants: image ids are unique, every scene belongs to a declared
    image (one scene per image, same order), every box's class is in
    the class list, and every box lies within its image bounds.
    """

    classes: tuple[str, ...]
    images: tuple[ImageInfo, ...]
    scenes: tuple[GroundTruthScene, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "scenes", tuple(self.scenes))
        if any(not c for c in self.classes):
            raise InputError("class names must be non-empty strings")
        if len(set(self.classes)) != len(self.classes):
            raise InputError("duplicate names in the class list")
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate image ids")
        if [s.image_id for s in self.scenes] != ids:
            raise InputError("scenes must align one-to-one with the image table, same order")
        class_set = set(self.classes)
        for im, scene in zip(self.images, self.scenes):
            for box, cls in scene.boxes:
                if cls not in class_set:
                    raise InputError(
                        f"box in image {im.image_id!r} uses undeclared class {cls!r}"
                    )
                if box.x2 > im.width or box.y2 > im.height:
                    raise InputError(
                        f"box {box.as_list()} exceeds bounds of image {im.image_id!r} "
                        f"({im.width} x {im.height})"
                    )

    def scene_map(self) -> dict[str, GroundTruthScene]:
        return {s.image_id: s for s in self.scenes}

    def restrict_to_split(self, split: str) -> "AnnotationSet":
        if split not in SPLITS:
            raise InputError(f"split must be one of {SPLITS}, got {split!r}")
        keep = [(im, sc) for im, sc in zip(self.images, self.scenes) if im.split == split]
        return AnnotationSet(
            self.classes,
            tuple(im for im, _ in keep),
            tuple(sc for _, sc in keep),
        )


def _box_from_json(val, *, path=None, line=None) -> BoundingBox:
    coords = as_float_list(val, "box", path=path, line=line)
    require(len(coords) == 4, "box must have exactly 4 coordinates", path=path, line=line)
    try:
        return BoundingBox(*coords)
    except InvalidBoxError as e:
        where = f" [{path}:{line}]" if path else ""
        raise InvalidBoxError(f"{e}{where}") from e


def _opt_str(rec: dict, key: str, *, path=None, line=None) -> Optional[str]:
    v = rec.get(key)
    if v is None:
        return None
    require(isinstance(v, str) and v != "", f"{key} must be null or a non-empty string",
            path=path, line=line)
    return v


def _req_str(rec: dict, key: str, *, path=None, line=None) -> str:
    v = rec.get(key)
    require(isinstance(v, str) and v != "", f"{key} must be a non-empty string", path=path, line=line)
    return v


def _req_score(rec: dict, *, path=None, line=None) -> float:
    v = rec.get("score")
    require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
            and 0.0 <= v <= 1.0, "score must be a number in [0, 1]", path=path, line=line)
    return float(v)


def _header(schema: str, meta: Optional[dict], extra: Optional[dict] = None) -> dict:
    h: dict = {"schema": schema}
    if extra:
        h.update(extra)
    if meta is not None:
        h["meta"] = meta
    return h


def write_features(path: str, features: FeatureSet, meta: Optional[dict] = None) -> None:
    def records():
        for r in features.records:
            yield {
                "image_id": r.image_id,
                "box": r.box.as_list(),
                "class": r.class_name,
                "score": r.score,
                "source": r.source,
                "feature": r.feature.tolist(),
            }

    dump_jsonl(path, _header(FEATURES_SCHEMA, meta, {"dim": features.dim}), records())


def load_features(path: str) -> FeatureSet:
    dim = None
    records: list[FeatureRecord] = []
    for lineno, rec in iter_jsonl(path, FEATURES_SCHEMA):
        if lineno == 1:
            d = rec.get("dim")
            require(isinstance(d, int) and not isinstance(d, bool) and d >= 1,
                    "header must declare a positive integer dim", path=path, line=1)
            dim = d
            continue
        feature = as_float_list(rec.get("feature"), "feature", path=path, line=lineno)
        if len(feature) != dim:
            raise DimensionError(
                f"feature has dimension {len(feature)}, header declares {dim} [{path}:{lineno}]"
            )
        source = rec.get("source")
        require(source in FEATURE_SOURCES, f"source must be one of {FEATURE_SOURCES}",
                path=path, line=lineno)
        score = rec.get("score")
        if score is not None:
            require(isinstance(score, (int, float)) and not isinstance(score, bool)
                    and math.isfinite(score) and 0.0 <= score <= 1.0,
                    "score must be null or a number in [0, 1]", path=path, line=lineno)
            score = float(score)
        records.append(
            FeatureRecord(
                image_id=_req_str(rec, "image_id", path=path, line=lineno),
                box=_box_from_json(rec.get("box"), path=path, line=lineno),
                source=source,
                feature=np.array(feature),
                class_name=_opt_str(rec, "class", path=path, line=lineno),
                score=score,
            )
        )
    return FeatureSet(dim=dim, records=tuple(records))


def _detection_rows(dets: Iterable[Detection]):
    for d in dets:
        yield {
            "image_id": d.image_id,
            "box": d.box.as_list(),
            "score": float(d.score),
            "class": d.class_label,
        }


def write_proposals(path: str, proposals: Sequence[Detection], meta: Optional[dict] = None) -> None:
    dump_jsonl(path, _header(PROPOSALS_SCHEMA, meta), _detection_rows(proposals))


def write_detections(path: str, detections: Sequence[Detection], meta: Optional[dict] = None) -> None:
    for d in detections:
        if d.class_label is None:
            raise InputError(f"detections require a class label (image {d.image_id!r})")
    dump_jsonl(path, _header(DETECTIONS_SCHEMA, meta), _detection_rows(detections))


def _load_boxes(path: str, schema: str, *, class_required: bool) -> list[Detection]:
    out: list[Detection] = []
    for lineno, rec in iter_jsonl(path, schema):
        if lineno == 1:
            continue
        cls = (_req_str(rec, "class", path=path, line=lineno) if class_required
               else _opt_str(rec, "class", path=path, line=lineno))
        out.append(
            Detection(
                image_id=_req_str(rec, "image_id", path=path, line=lineno),
                box=_box_from_json(rec.get("box"), path=path, line=lineno),
                score=_req_score(rec, path=path, line=lineno),
                class_label=cls,
            )
        )
    return out


def load_proposals(path: str) -> list[Detection]:
    return _load_boxes(path, PROPOSALS_SCHEMA, class_required=False)


def load_detections(path: str) -> list[Detection]:
    return _load_boxes(path, DETECTIONS_SCHEMA, class_required=True)


def load_boxed_records(path: str) -> list[Detection]:
    """Load either a proposals or a detections file, whichever the header says."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    try:
        header = json.loads(first)
        schema = header.get("schema") if isinstance(header, dict) else None
    except json.JSONDecodeError:
        schema = None
    if schema == DETECTIONS_SCHEMA:
        return load_detections(path)
    if schema == PROPOSALS_SCHEMA:
        return load_proposals(path)
    raise SchemaError(
        f"expected {PROPOSALS_SCHEMA!r} or {DETECTIONS_SCHEMA!r}, got {schema!r}", path=path, line=1
    )


def write_annotations(path: str, ann: AnnotationSet, meta: Optional[dict] = None) -> None:
    doc = {
        "schema": ANNOTATIONS_SCHEMA,
        "classes": list(ann.classes),
        "images": [
            # floats on the wire, so a load-save cycle is byte-stable
            {"image_id": im.image_id, "width": float(im.width),
             "height": float(im.height), "split": im.split}
            for im in ann.images
        ],
        "boxes": [
            {"image_id": s.image_id, "box": b.as_list(), "class": c}
            for s in ann.scenes
            for b, c in s.boxes
        ],
    }
    if meta is not None:
        doc["meta"] = meta
    dump_json_doc(path, doc)


def load_annotations(path: str) -> AnnotationSet:
    doc = load_json_doc(path, ANNOTATIONS_SCHEMA)
    classes = doc.get("classes")
    require(isinstance(classes, list) and all(isinstance(c, str) and c for c in classes),
            "classes must be a list of non-empty strings", path=path)
    raw_images = doc.get("images")
    require(isinstance(raw_images, list), "images must be a list", path=path)
    images = []
    for i, im in enumerate(raw_images):
        require(isinstance(im, dict), f"images[{i}] must be an object", path=path)
        w, h = im.get("width"), im.get("height")
        require(all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0
                    for v in (w, h)),
                f"images[{i}] needs positive width and height", path=path)
        split = im.get("split", "labeled")
        require(split in SPLITS, f"images[{i}] split must be one of {SPLITS}", path=path)
        images.append(ImageInfo(_req_str(im, "image_id", path=path), float(w), float(h), split))
    raw_boxes = doc.get("boxes")
    require(isinstance(raw_boxes, list), "boxes must be a list", path=path)
    by_image: dict[str, list[tuple[BoundingBox, str]]] = {im.image_id: [] for im in images}
    for i, rec in enumerate(raw_boxes):
        require(isinstance(rec, dict), f"boxes[{i}] must be an object", path=path)
        img_id = _req_str(rec, "image_id", path=path)
        require(img_id in by_image, f"boxes[{i}] references undeclared image {img_id!r}", path=path)
        box = _box_from_json(rec.get("box"), path=path)
        by_image[img_id].append((box, _req_str(rec, "class", path=path)))
    scenes = tuple(GroundTruthScene(im.image_id, tuple(by_image[im.image_id])) for im in images)
    try:
        return AnnotationSet(tuple(classes), tuple(images), scenes)
    except InputError as e:
        raise SchemaError(f"inconsistent annotations: {e}", path=path) from e


def filter_proposals(items: Sequence, min_score: float) -> list:
    """Drop records whose score is below ``min_score``.

    Works on anything with a ``score`` attribute (proposals, feature
    records). Records with a null score are kept: they carry no
    confidence to threshold on.
    """
    if not (isinstance(min_score, (int, float)) and 0.0 <= min_score <= 1.0):
        raise InputError(f"min_score must lie in [0, 1], got {min_score!r}")
    return [it for it in items if it.score is None or it.score >= min_score]


def oracle_proposals(ann: AnnotationSet, ood_classes: Iterable[str]) -> list[Detection]:
    """Ground-truth boxes of the given classes, re-emitted as score-1.0 proposals.

    An upper-bound stand-in for a real proposal source: downstream
    recall of these proposals bounds what any explorer could achieve.
    """
    ood = set(ood_classes)
    unknown = ood - set(ann.classes)
    if unknown:
        raise InputError(f"not annotation classes: {sorted(unknown)!r}")
    out = []
    for scene in ann.scenes:
        for box, cls in scene.boxes:
            if cls in ood:
                out.append(Detection(scene.image_id, box, 1.0, None))
    return out


# ---------------------------------------------------------------------------
# Synthetic open-world scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic open-world scene generator.

    Classes are Gaussian blobs in feature space whose centers sit on a
    sphere of radius ``center_scale``. In-distribution objects appear
    on labeled and unlabeled images; novel-class objects appear only on
    unlabeled images. A simulated teacher detector emits noisy
    detections on unlabeled images: jittered boxes for ID objects, and
    with probability ``ood_confusion_rate`` a wrong ID label for a
    novel object.
    """

    n_id_classes: int = 15
    n_ood_classes: int = 5
    dim: int = 32
    samples_per_class: int = 100
    center_scale: float = 1.0
    noise_sigma: float = 0.1
    min_center_separation: float = 0.0
    objects_per_image: int = 4
    image_width: float = 640.0
    image_height: float = 480.0
    labeled_fraction: float = 0.5
    teacher_jitter_sigma: float = 2.0
    teacher_tp_score: tuple[float, float] = (0.75, 1.0)
    teacher_fp_score: tuple[float, float] = (0.5, 0.95)
    ood_confusion_rate: float = 0.3
    proposal_jitter_sigma: float = 2.0
    proposal_score: tuple[float, float] = (0.5, 1.0)
    background_per_image: int = 0
    background_score: tuple[float, float] = (0.1, 0.7)
    background_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        def positive_int(name, v, minimum=1):
            if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
                raise InputError(f"{name} must be an integer >= {minimum}, got {v!r}")

        positive_int("n_id_classes", self.n_id_classes)
        positive_int("n_ood_classes", self.n_ood_classes, 0)
        positive_int("dim", self.dim)
        positive_int("samples_per_class", self.samples_per_class)
        positive_int("objects_per_image", self.objects_per_image)
        positive_int("background_per_image", self.background_per_image, 0)
        if not self.center_scale > 0:
            raise InputError("center_scale must be positive")
        for name, v in (("noise_sigma", self.noise_sigma),
                        ("min_center_separation", self.min_center_separation),
                        ("teacher_jitter_sigma", self.teacher_jitter_sigma),
                        ("proposal_jitter_sigma", self.proposal_jitter_sigma),
                        ("background_sigma", self.background_sigma)):
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise InputError(f"{name} must be a non-negative finite number, got {v!r}")
        for name, v in (("labeled_fraction", self.labeled_fraction),
                        ("ood_confusion_rate", self.ood_confusion_rate)):
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise InputError(f"{name} must lie in [0, 1], got {v!r}")
        for name, rng_ in (("teacher_tp_score", self.teacher_tp_score),
                           ("teacher_fp_score", self.teacher_fp_score),
                           ("proposal_score", self.proposal_score),
                           ("background_score", self.background_score)):
            lo, hi = rng_
            if not (0.0 <= lo <= hi <= 1.0):
                raise InputError(f"{name} must be 0 <= lo <= hi <= 1, got {rng_!r}")
        if min(self.image_width, self.image_height) < 8:
            raise InputError("image dimensions must be at least 8")


@dataclass(frozen=True, eq=False)
class SyntheticBundle:
    """Everything the generator produced; see write_bundle for the file layout."""

    config: SyntheticConfig
    annotations: AnnotationSet
    labeled_features: FeatureSet
    proposal_features: FeatureSet
    teacher_detections: tuple[Detection, ...]
    id_class_names: tuple[str, ...]
    ood_class_names: tuple[str, ...]
    centers: Mapping[str, np.ndarray]


def _random_box(rng, W: float, H: float) -> BoundingBox:
    w = rng.uniform(0.08, 0.25) * W
    h = rng.uniform(0.08, 0.25) * H
    x1 = rng.uniform(0.0, W - w)
    y1 = rng.uniform(0.0, H - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def _jitter_box(rng, box: BoundingBox, sigma: float, W: float, H: float) -> BoundingBox:
    """Perturb center and size by N(0, sigma); sigma 0 returns the box unchanged."""
    if sigma == 0.0:
        return box
    cx = (box.x1 + box.x2) / 2 + sigma * rng.standard_normal()
    cy = (box.y1 + box.y2) / 2 + sigma * rng.standard_normal()
    w = max(2.0, (box.x2 - box.x1) + sigma * rng.standard_normal())
    h = max(2.0, (box.y2 - box.y1) + sigma * rng.standard_normal())
    w = min(w, W)
    h = min(h, H)
    cx = min(max(cx, w / 2), W - w / 2)
    cy = min(max(cy, h / 2), H - h / 2)
    return BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticBundle:
    """Deterministically build an open-world toy dataset from one seed.

    Draw order is fixed: class centers, then per-instance features and
    boxes, then teacher detections, then proposals. Novel-class objects
    are placed only on unlabeled images, so labeled scenes contain
    in-distribution boxes only.
    """
    rng = np.random.default_rng(cfg.seed)
    id_names = tuple(f"id_{i:02d}" for i in range(cfg.n_id_classes))
    ood_names = tuple(f"ood_{i:02d}" for i in range(cfg.n_ood_classes))
    all_names = id_names + ood_names

    centers: dict[str, np.ndarray] = {}
    placed: list[np.ndarray] = []
    for name in all_names:
        for attempt in range(10000):
            d = rng.standard_normal(cfg.dim)
            norm = np.linalg.norm(d)
            if norm == 0:
                continue
            c = d / norm * cfg.center_scale
            if all(np.linalg.norm(c - p) >= cfg.min_center_separation for p in placed):
                break
        else:
            raise InputError(
                f"could not place center for {name!r} with min_center_separation="
                f"{cfg.min_center_separation}; loosen the separation or the scale"
            )
        centers[name] = c
        placed.append(c)

    total = len(all_names) * cfg.samples_per_class
    n_images = max(1, -(-total // cfg.objects_per_image))
    n_labeled = round(cfg.labeled_fraction * n_images)
    n_unlabeled = n_images - n_labeled
    if cfg.n_ood_classes > 0 and n_unlabeled == 0:
        raise InputError(
            "labeled_fraction leaves no unlabeled images, but novel classes need them"
        )
    pad = len(str(max(n_images - 1, 1)))
    images = tuple(
        ImageInfo(
            f"img_{i:0{pad}d}",
            cfg.image_width,
            cfg.image_height,
            "labeled" if i < n_labeled else "unlabeled",
        )
        for i in range(n_images)
    )
    unlabeled_ids = [im.image_id for im in images if im.split == "unlabeled"]

    # One instance = (class name, image id, box, feature), in draw order.
    # Placement interleaves classes across images (stride = class count), so
    # every class straddles the labeled/unlabeled boundary instead of
    # clumping on one side of it.
    instances: list[tuple[str, str, BoundingBox, np.ndarray]] = []
    W, H = cfg.image_width, cfg.image_height
    for ci, name in enumerate(all_names):
        is_ood = name in ood_names
        for s in range(cfg.samples_per_class):
            if is_ood:
                slot = s * cfg.n_ood_classes + (ci - cfg.n_id_classes)
                img = unlabeled_ids[slot % len(unlabeled_ids)]
            else:
                slot = s * cfg.n_id_classes + ci
                img = images[slot % n_images].image_id
            feat = centers[name] + cfg.noise_sigma * rng.standard_normal(cfg.dim)
            instances.append((name, img, _random_box(rng, W, H), feat))

    split_of = {im.image_id: im.split for im in images}

    teacher: list[Detection] = []
    for name, img, box, _ in instances:
        if split_of[img] != "unlabeled":
            continue
        if name in ood_names:
            if rng.uniform() < cfg.ood_confusion_rate:
                fake = id_names[rng.integers(len(id_names))]
                jbox = _jitter_box(rng, box, cfg.teacher_jitter_sigma, W, H)
                lo, hi = cfg.teacher_fp_score
                teacher.append(Detection(img, jbox, float(rng.uniform(lo, hi)), fake))
        else:
            jbox = _jitter_box(rng, box, cfg.teacher_jitter_sigma, W, H)
            lo, hi = cfg.teacher_tp_score
            teacher.append(Detection(img, jbox, float(rng.uniform(lo, hi)), name))

    proposal_records: list[FeatureRecord] = []
    for name, img, box, _ in instances:
        if split_of[img] != "unlabeled":
            continue
        jbox = _jitter_box(rng, box, cfg.proposal_jitter_sigma, W, H)
        lo, hi = cfg.proposal_score
        score = float(rng.uniform(lo, hi))
        feat = centers[name] + cfg.noise_sigma * rng.standard_normal(cfg.dim)
        proposal_records.append(
            FeatureRecord(img, jbox, "proposal", feat, class_name=name, score=score)
        )
    for img in unlabeled_ids:
        for _ in range(cfg.background_per_image):
            bbox = _random_box(rng, W, H)
            lo, hi = cfg.background_score
            score = float(rng.uniform(lo, hi))
            feat = cfg.background_sigma * rng.standard_normal(cfg.dim)
            proposal_records.append(FeatureRecord(img, bbox, "proposal", feat, score=score))

    labeled_records = tuple(
        FeatureRecord(img, box, "gt", feat, class_name=name)
        for name, img, box, feat in instances
        if split_of[img] == "labeled"
    )

    by_image: dict[str, list[tuple[BoundingBox, str]]] = {im.image_id: [] for im in images}
    for name, img, box, _ in instances:
        by_image[img].append((box, name))
    scenes = tuple(GroundTruthScene(im.image_id, tuple(by_image[im.image_id])) for im in images)
    ann = AnnotationSet(all_names, images, scenes)

    return SyntheticBundle(
        config=cfg,
        annotations=ann,
        labeled_features=FeatureSet(cfg.dim, labeled_records),
        proposal_features=FeatureSet(cfg.dim, tuple(proposal_records)),
        teacher_detections=tuple(teacher),
        id_class_names=id_names,
        ood_class_names=ood_names,
        centers=centers,
    )


BUNDLE_FILES = {
    "annotations": "annotations.json",
    "labeled_features": "features_labeled.jsonl",
    "proposal_features": "features_proposals.jsonl",
    "teacher_detections": "detections_teacher.jsonl",
}


def write_bundle(outdir: str, bundle: SyntheticBundle, meta: Optional[dict] = None) -> dict[str, str]:
    """Write the generator's four files into ``outdir``; returns name -> path."""
    import os

    os.makedirs(outdir, exist_ok=True)
    paths = {k: os.path.join(outdir, v) for k, v in BUNDLE_FILES.items()}
    write_annotations(paths["annotations"], bundle.annotations, meta)
    write_features(paths["labeled_features"], bundle.labeled_features, meta)
    write_features(paths["proposal_features"], bundle.proposal_features, meta)
    write_detections(paths["teacher_detections"], bundle.teacher_detections, meta)
    return paths
