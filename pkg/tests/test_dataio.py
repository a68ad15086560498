"""File formats, loaders, and the synthetic scene generator."""

import json

import numpy as np
import pytest

from owssd import (
    AnnotationSet,
    BoundingBox,
    Detection,
    DimensionError,
    FeatureRecord,
    FeatureSet,
    GroundTruthScene,
    ImageInfo,
    InputError,
    InvalidBoxError,
    SchemaError,
    SyntheticConfig,
    filter_proposals,
    generate_synthetic,
    load_annotations,
    load_detections,
    load_features,
    load_proposals,
    oracle_proposals,
    write_annotations,
    write_detections,
    write_features,
    write_proposals,
)
from owssd.dataio import load_boxed_records, write_bundle


def box(x1, y1, x2, y2):
    return BoundingBox(x1, y1, x2, y2)


def small_feature_set():
    recs = (
        FeatureRecord("img_a", box(0, 0, 10, 10), "gt",
                      np.array([0.1, 1 / 3, -2.5]), class_name="cat"),
        FeatureRecord("img_a", box(5, 5, 9, 9), "proposal",
                      np.array([1e-9, 2.0, 3.0]), score=0.75),
        FeatureRecord("img_b", box(1, 1, 4, 4), "teacher",
                      np.array([-1.0, 0.0, 1.0]), class_name="dog", score=1.0),
    )
    return FeatureSet(3, recs)


class TestFeatureFiles:
    def test_round_trip_exact(self, tmp_path):
        fs = small_feature_set()
        p = str(tmp_path / "f.jsonl")
        write_features(p, fs, meta={"note": "x"})
        fs2 = load_features(p)
        assert fs2.dim == 3
        assert len(fs2.records) == 3
        for a, b in zip(fs.records, fs2.records):
            assert a.image_id == b.image_id
            assert a.box == b.box
            assert a.source == b.source
            assert a.class_name == b.class_name
            assert a.score == b.score
            assert np.array_equal(a.feature, b.feature)  # repr floats: exact

    def test_header_declares_schema_and_dim(self, tmp_path):
        p = tmp_path / "f.jsonl"
        write_features(str(p), small_feature_set())
        header = json.loads(p.read_text().splitlines()[0])
        assert header["schema"] == "owssd.features.v1"
        assert header["dim"] == 3

    def test_rewrite_is_byte_identical(self, tmp_path):
        fs = small_feature_set()
        p1, p2 = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        write_features(p1, fs)
        write_features(p2, load_features(p1))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_dim_mismatch_names_the_line(self, tmp_path):
        p = tmp_path / "f.jsonl"
        lines = [
            json.dumps({"schema": "owssd.features.v1", "dim": 3}),
            json.dumps({"image_id": "a", "box": [0, 0, 1, 1], "class": None,
                        "score": None, "source": "gt", "feature": [1.0, 2.0, 3.0]}),
            json.dumps({"image_id": "a", "box": [0, 0, 1, 1], "class": None,
                        "score": None, "source": "gt", "feature": [1.0, 2.0]}),
        ]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(DimensionError) as exc:
            load_features(str(p))
        assert ":3]" in str(exc.value)  # offending line number

    def test_bad_box_names_the_line(self, tmp_path):
        p = tmp_path / "f.jsonl"
        lines = [
            json.dumps({"schema": "owssd.features.v1", "dim": 2}),
            json.dumps({"image_id": "a", "box": [5, 0, 1, 1], "class": None,
                        "score": None, "source": "gt", "feature": [1.0, 2.0]}),
        ]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(InvalidBoxError) as exc:
            load_features(str(p))
        assert ":2]" in str(exc.value)

    def test_wrong_schema_rejected(self, tmp_path):
        p = tmp_path / "f.jsonl"
        p.write_text(json.dumps({"schema": "owssd.detections.v1"}) + "\n")
        with pytest.raises(SchemaError):
            load_features(str(p))

    def test_bad_source_rejected(self, tmp_path):
        p = tmp_path / "f.jsonl"
        lines = [
            json.dumps({"schema": "owssd.features.v1", "dim": 1}),
            json.dumps({"image_id": "a", "box": [0, 0, 1, 1], "class": None,
                        "score": None, "source": "oracle", "feature": [1.0]}),
        ]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError):
            load_features(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_features(str(tmp_path / "nope.jsonl"))

    def test_by_class_filters_source(self):
        fs = small_feature_set()
        assert set(fs.by_class()) == {"cat", "dog"}
        assert set(fs.by_class(source="gt")) == {"cat"}
        assert fs.by_class(source="gt")["cat"].shape == (1, 3)

    def test_feature_set_enforces_dim(self):
        rec = FeatureRecord("a", box(0, 0, 1, 1), "gt", np.ones(4))
        with pytest.raises(DimensionError):
            FeatureSet(3, (rec,))


class TestBoxFiles:
    def detections(self):
        return [
            Detection("img_a", box(0, 0, 10, 10), 0.9, "cat"),
            Detection("img_b", box(3, 3, 8, 8), 0.25, "dog"),
        ]

    def test_detections_round_trip(self, tmp_path):
        p = str(tmp_path / "d.jsonl")
        write_detections(p, self.detections())
        assert load_detections(p) == self.detections()

    def test_detections_require_class(self, tmp_path):
        with pytest.raises(InputError):
            write_detections(str(tmp_path / "d.jsonl"),
                             [Detection("a", box(0, 0, 1, 1), 0.5, None)])

    def test_proposals_allow_null_class(self, tmp_path):
        props = [Detection("a", box(0, 0, 1, 1), 0.5, None),
                 Detection("a", box(2, 2, 3, 3), 0.7, "cat")]
        p = str(tmp_path / "p.jsonl")
        write_proposals(p, props)
        assert load_proposals(p) == props

    def test_boxed_records_dispatch_on_header(self, tmp_path):
        pd = str(tmp_path / "d.jsonl")
        pp = str(tmp_path / "p.jsonl")
        write_detections(pd, self.detections())
        write_proposals(pp, [Detection("a", box(0, 0, 1, 1), 0.5, None)])
        assert load_boxed_records(pd) == self.detections()
        assert load_boxed_records(pp)[0].class_label is None
        stray = tmp_path / "x.jsonl"
        stray.write_text(json.dumps({"schema": "owssd.features.v1", "dim": 2}) + "\n")
        with pytest.raises(SchemaError):
            load_boxed_records(str(stray))

    def test_score_validated(self, tmp_path):
        p = tmp_path / "d.jsonl"
        lines = [
            json.dumps({"schema": "owssd.detections.v1"}),
            json.dumps({"image_id": "a", "box": [0, 0, 1, 1], "score": 1.5,
                        "class": "cat"}),
        ]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError):
            load_detections(str(p))


class TestAnnotations:
    def annotations(self):
        images = (ImageInfo("img_a", 100, 100, "labeled"),
                  ImageInfo("img_b", 100, 100, "unlabeled"))
        scenes = (
            GroundTruthScene("img_a", ((box(0, 0, 10, 10), "cat"),)),
            GroundTruthScene("img_b", ((box(5, 5, 20, 20), "dog"),
                                       (box(30, 30, 40, 40), "cat"))),
        )
        return AnnotationSet(("cat", "dog"), images, scenes)

    def test_round_trip(self, tmp_path):
        ann = self.annotations()
        p = str(tmp_path / "a.json")
        write_annotations(p, ann, meta={"origin": "test"})
        ann2 = load_annotations(p)
        assert ann2 == ann

    def test_rewrite_is_byte_identical(self, tmp_path):
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_annotations(p1, self.annotations())
        write_annotations(p2, load_annotations(p1))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_invariants(self):
        images = (ImageInfo("img_a", 100, 100),)
        ok_scene = (GroundTruthScene("img_a", ((box(0, 0, 10, 10), "cat"),)),)
        with pytest.raises(InputError):  # undeclared class
            AnnotationSet(("dog",), images, ok_scene)
        with pytest.raises(InputError):  # box outside image bounds
            AnnotationSet(("cat",), images,
                          (GroundTruthScene("img_a", ((box(0, 0, 101, 10), "cat"),)),))
        with pytest.raises(InputError):  # scenes misaligned
            AnnotationSet(("cat",), images,
                          (GroundTruthScene("img_x", ()),))
        with pytest.raises(InputError):  # duplicate image ids
            AnnotationSet(("cat",), images + images, ok_scene + ok_scene)

    def test_loader_wraps_inconsistency_as_schema_error(self, tmp_path):
        p = tmp_path / "a.json"
        write_annotations(str(p), self.annotations())
        doc = json.loads(p.read_text())
        doc["boxes"][0]["class"] = "bird"  # undeclared
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_annotations(str(p))

    def test_loader_rejects_box_for_unknown_image(self, tmp_path):
        p = tmp_path / "a.json"
        write_annotations(str(p), self.annotations())
        doc = json.loads(p.read_text())
        doc["boxes"][0]["image_id"] = "img_z"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_annotations(str(p))

    def test_restrict_to_split(self):
        ann = self.annotations()
        lab = ann.restrict_to_split("labeled")
        assert [im.image_id for im in lab.images] == ["img_a"]
        assert len(lab.scenes) == 1


class TestProposalHelpers:
    def test_filter_keeps_null_scores(self):
        items = [Detection("a", box(0, 0, 1, 1), 0.5, None),
                 Detection("a", box(0, 0, 1, 1), 0.2, None),
                 Detection("a", box(2, 2, 3, 3), 0.9, None)]
        kept = filter_proposals(items, 0.5)
        assert kept == [items[0], items[2]]
        unscored = FeatureRecord("a", box(0, 0, 1, 1), "proposal", np.ones(2))
        assert filter_proposals([unscored], 0.99) == [unscored]
        with pytest.raises(InputError):
            filter_proposals(items, 1.5)

    def test_oracle_proposals(self):
        images = (ImageInfo("img_a", 100, 100), ImageInfo("img_b", 100, 100))
        scenes = (
            GroundTruthScene("img_a", ((box(0, 0, 10, 10), "cat"),
                                       (box(20, 20, 30, 30), "novel"))),
            GroundTruthScene("img_b", ((box(5, 5, 15, 15), "novel"),)),
        )
        ann = AnnotationSet(("cat", "novel"), images, scenes)
        out = oracle_proposals(ann, ["novel"])
        assert [(d.image_id, d.box) for d in out] == [
            ("img_a", box(20, 20, 30, 30)),
            ("img_b", box(5, 5, 15, 15)),
        ]
        assert all(d.score == 1.0 and d.class_label is None for d in out)
        with pytest.raises(InputError):
            oracle_proposals(ann, ["ghost"])


class TestSyntheticConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(InputError):
            SyntheticConfig(n_id_classes=0)
        with pytest.raises(InputError):
            SyntheticConfig(noise_sigma=-1.0)
        with pytest.raises(InputError):
            SyntheticConfig(labeled_fraction=1.5)
        with pytest.raises(InputError):
            SyntheticConfig(teacher_tp_score=(0.9, 0.2))
        with pytest.raises(InputError):
            SyntheticConfig(center_scale=0.0)

    def test_all_labeled_with_ood_classes_fails(self):
        cfg = SyntheticConfig(n_id_classes=2, n_ood_classes=1, dim=2,
                              samples_per_class=4, labeled_fraction=1.0)
        with pytest.raises(InputError):
            generate_synthetic(cfg)


def tiny_config(**kw):
    base = dict(n_id_classes=3, n_ood_classes=2, dim=4, samples_per_class=6,
                noise_sigma=0.05, seed=123)
    base.update(kw)
    return SyntheticConfig(**base)


class TestGenerator:
    def test_deterministic(self):
        a = generate_synthetic(tiny_config())
        b = generate_synthetic(tiny_config())
        assert a.annotations == b.annotations
        assert len(a.labeled_features.records) == len(b.labeled_features.records)
        for ra, rb in zip(a.labeled_features.records, b.labeled_features.records):
            assert np.array_equal(ra.feature, rb.feature)
        assert a.teacher_detections == b.teacher_detections

    def test_seed_changes_output(self):
        a = generate_synthetic(tiny_config())
        b = generate_synthetic(tiny_config(seed=124))
        assert a.annotations != b.annotations or a.teacher_detections != b.teacher_detections

    def test_ood_only_on_unlabeled_images(self):
        bundle = generate_synthetic(tiny_config())
        split = {im.image_id: im.split for im in bundle.annotations.images}
        for scene in bundle.annotations.scenes:
            if split[scene.image_id] == "labeled":
                for _, cls in scene.boxes:
                    assert cls in bundle.id_class_names

    def test_every_id_class_on_both_splits(self):
        # Interleaved placement: no class may be confined to one split.
        bundle = generate_synthetic(tiny_config())
        split = {im.image_id: im.split for im in bundle.annotations.images}
        seen: dict[str, set[str]] = {}
        for scene in bundle.annotations.scenes:
            for _, cls in scene.boxes:
                seen.setdefault(cls, set()).add(split[scene.image_id])
        for cls in bundle.id_class_names:
            assert seen[cls] == {"labeled", "unlabeled"}

    def test_labeled_features_match_annotations(self):
        bundle = generate_synthetic(tiny_config())
        ann_labeled = bundle.annotations.restrict_to_split("labeled")
        n_boxes = sum(len(s.boxes) for s in ann_labeled.scenes)
        assert len(bundle.labeled_features.records) == n_boxes
        assert all(r.source == "gt" for r in bundle.labeled_features.records)

    def test_noiseless_teacher_reproduces_id_boxes(self):
        cfg = tiny_config(teacher_jitter_sigma=0.0, ood_confusion_rate=0.0)
        bundle = generate_synthetic(cfg)
        split = {im.image_id: im.split for im in bundle.annotations.images}
        # Emission follows instance draw order, not scene order, so
        # compare as sets keyed by (image, box); boxes carry the class.
        expected = {
            (s.image_id, *b.as_list()): cls
            for s in bundle.annotations.scenes
            if split[s.image_id] == "unlabeled"
            for b, cls in s.boxes
            if cls in bundle.id_class_names
        }
        got = {(d.image_id, *d.box.as_list()): d.class_label
               for d in bundle.teacher_detections}
        assert got == expected
        lo, hi = cfg.teacher_tp_score
        assert all(lo <= d.score <= hi for d in bundle.teacher_detections)
        assert all(d.class_label in bundle.id_class_names for d in bundle.teacher_detections)

    def test_confused_teacher_mislabels_some_ood(self):
        cfg = tiny_config(ood_confusion_rate=1.0, samples_per_class=10)
        bundle = generate_synthetic(cfg)
        split = {im.image_id: im.split for im in bundle.annotations.images}
        n_unlabeled_ood = sum(
            1 for s in bundle.annotations.scenes if split[s.image_id] == "unlabeled"
            for _, cls in s.boxes if cls in bundle.ood_class_names
        )
        n_unlabeled_id = sum(
            1 for s in bundle.annotations.scenes if split[s.image_id] == "unlabeled"
            for _, cls in s.boxes if cls in bundle.id_class_names
        )
        # rate 1.0: every unlabeled OOD box yields a (wrongly ID-labeled) detection
        assert len(bundle.teacher_detections) == n_unlabeled_id + n_unlabeled_ood
        assert all(d.class_label in bundle.id_class_names for d in bundle.teacher_detections)

    def test_proposals_cover_unlabeled_objects(self):
        bundle = generate_synthetic(tiny_config())
        split = {im.image_id: im.split for im in bundle.annotations.images}
        n_unlabeled = sum(
            len(s.boxes) for s in bundle.annotations.scenes
            if split[s.image_id] == "unlabeled"
        )
        assert len(bundle.proposal_features.records) == n_unlabeled
        assert all(r.source == "proposal" and r.score is not None
                   for r in bundle.proposal_features.records)

    def test_background_proposals_added(self):
        cfg = tiny_config(background_per_image=2)
        bundle = generate_synthetic(cfg)
        unscored_class = [r for r in bundle.proposal_features.records if r.class_name is None]
        n_unlabeled_imgs = sum(
            1 for im in bundle.annotations.images if im.split == "unlabeled"
        )
        assert len(unscored_class) == 2 * n_unlabeled_imgs

    def test_min_separation_honored(self):
        cfg = tiny_config(min_center_separation=0.8)
        bundle = generate_synthetic(cfg)
        names = sorted(bundle.centers)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                assert np.linalg.norm(bundle.centers[a] - bundle.centers[b]) >= 0.8

    def test_impossible_separation_fails(self):
        with pytest.raises(InputError):
            generate_synthetic(tiny_config(min_center_separation=5.0))

    def test_write_bundle_files(self, tmp_path):
        bundle = generate_synthetic(tiny_config())
        paths = write_bundle(str(tmp_path), bundle)
        assert sorted(paths) == ["annotations", "labeled_features",
                                 "proposal_features", "teacher_detections"]
        ann = load_annotations(paths["annotations"])
        assert ann == bundle.annotations
        feats = load_features(paths["labeled_features"])
        assert len(feats.records) == len(bundle.labeled_features.records)
        dets = load_detections(paths["teacher_detections"])
        assert dets == list(bundle.teacher_detections)
