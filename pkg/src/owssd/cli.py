"""Command-line pipeline driver.

One executable with subcommands covering the full desk-scale loop:

  synth       generate a synthetic open-world dataset (four files)
  train-ood   train the per-class autoencoder ensemble
  calibrate   pick the decision threshold mu on held-out labeled data
  classify    keep and relabel the OOD proposals
  fuse        merge teacher detections with OOD boxes into pseudo-labels
  eval-det    AP/AR of class-labeled detections against ground truth
  eval-ood    decision and ranking quality of the ensemble (and baselines)
  sweep-mu    decision quality across a grid of thresholds

Settings come from defaults, then an optional JSON config file
(--config or OWSSD_CONFIG), then flags; flags always win. Reruns with
identical inputs and flags write byte-identical outputs. Exit codes:
2 bad input, 3 missing file, 4 schema violation, 5 training failure,
6 calibration failure, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._ser import dump_json_doc
from .baselines import calibrate_scorer_threshold, fit_common_ae, fit_knn
from .core import ClassCatalog, Detection, GroundTruthScene, group_by_image
from .dataio import (
    SyntheticConfig,
    filter_proposals,
    generate_synthetic,
    load_annotations,
    load_boxed_records,
    load_detections,
    load_features,
    load_proposals,
    write_bundle,
    write_proposals,
)
from .ensemble import (
    calibrate_threshold,
    classify_proposals,
    load_ensemble,
    save_ensemble,
    split_for_calibration,
    sweep_thresholds,
    train_ensemble,
)
from .errors import (
    CalibrationError,
    InputError,
    OwssdError,
    SchemaError,
    TrainingError,
)
from .fusion import (
    FusionConfig,
    emit_training_set,
    fuse_images,
    pseudo_labels_as_detections,
    select_teacher_pseudolabels,
)
from .metrics import auroc, binary_ood_eval, evaluate_detections
from .nnet import AeArchitecture, TrainConfig, auto_architecture

log = logging.getLogger("owssd")

_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_FUSION_KEYS = {f.name for f in dataclasses.fields(FusionConfig)}
_SYNTH_KEYS = {f.name for f in dataclasses.fields(SyntheticConfig)}
_EVAL_KEYS = {"max_dets", "iou_threshold", "split"}
_TOP_KEYS = {
    "seed",
    "id_classes",
    "arch",
    "mu",
    "mu_candidates",
    "holdout_fraction",
    "k",
    "min_proposal_score",
    "source",
    "train",
    "fusion",
    "synthetic",
    "eval",
}

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "id_classes": None,
    "arch": "auto",
    "mu": None,
    "mu_candidates": None,
    "holdout_fraction": 0.2,
    "k": 5,
    "min_proposal_score": 0.0,
    "source": "gt",
    "train": {},
    "fusion": {},
    "synthetic": {},
    "eval": {"max_dets": 100, "iou_threshold": 0.5, "split": "all"},
}


def _load_config_file(path: Optional[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such config file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as e:
            raise InputError(f"config file is not valid JSON: {e}")
    if not isinstance(user, dict):
        raise InputError("config file must hold a JSON object")
    unknown = set(user) - _TOP_KEYS
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    for section, allowed in (("train", _TRAIN_KEYS), ("fusion", _FUSION_KEYS),
                             ("synthetic", _SYNTH_KEYS), ("eval", _EVAL_KEYS)):
        if section in user:
            if not isinstance(user[section], dict):
                raise InputError(f"config section {section!r} must be an object")
            bad = set(user[section]) - allowed
            if bad:
                raise InputError(f"unknown keys in config section {section!r}: {sorted(bad)}")
            cfg[section].update(user[section])
    for key in _TOP_KEYS - {"train", "fusion", "synthetic", "eval"}:
        if key in user:
            cfg[key] = user[key]
    return cfg


def _seed_for(cfg: dict, args, section: Optional[str] = None) -> int:
    """Flag > section-level seed > top-level seed."""
    if getattr(args, "seed", None) is not None:
        return args.seed
    if section and "seed" in cfg[section]:
        return cfg[section]["seed"]
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise InputError(f"seed must be an integer, got {seed!r}")
    return seed


def _train_config(cfg: dict, args) -> TrainConfig:
    kwargs = dict(cfg["train"])
    kwargs["seed"] = _seed_for(cfg, args, "train")
    return TrainConfig(**kwargs)


def _fusion_config(cfg: dict, args) -> FusionConfig:
    kwargs = dict(cfg["fusion"])
    if getattr(args, "conf_thresh", None) is not None:
        kwargs["conf_threshold"] = args.conf_thresh
    if getattr(args, "overlap_iou", None) is not None:
        kwargs["overlap_iou"] = args.overlap_iou
    if getattr(args, "nms_iou", None) is not None:
        kwargs["ood_nms_iou"] = args.nms_iou
    if getattr(args, "no_filtering", False):
        kwargs["filtering_enabled"] = False
    return FusionConfig(**kwargs)


def _synth_config(cfg: dict, args) -> SyntheticConfig:
    kwargs = dict(cfg["synthetic"])
    for tup_key in ("teacher_tp_score", "teacher_fp_score", "proposal_score", "background_score"):
        if tup_key in kwargs and isinstance(kwargs[tup_key], list):
            kwargs[tup_key] = tuple(kwargs[tup_key])
    kwargs["seed"] = _seed_for(cfg, args, "synthetic")
    return SyntheticConfig(**kwargs)


def _parse_arch(spec: str, dim: int) -> AeArchitecture:
    if spec == "auto":
        return auto_architecture(dim)
    try:
        dims = tuple(int(p) for p in spec.split(","))
    except ValueError:
        raise InputError(f"--arch must be 'auto' or comma-separated integers, got {spec!r}")
    arch = AeArchitecture(dims)
    if arch.feature_dim != dim:
        raise InputError(
            f"--arch input width {arch.feature_dim} does not match the feature dimension {dim}"
        )
    return arch


def _effective_arch(cfg: dict, args, dim: int) -> AeArchitecture:
    spec = getattr(args, "arch", None) or cfg["arch"]
    if isinstance(spec, list):
        spec = ",".join(str(d) for d in spec)
    return _parse_arch(spec, dim)


def _parse_csv_floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise InputError(f"{what} must be comma-separated numbers, got {text!r}")
    if not vals:
        raise InputError(f"{what} must not be empty")
    return vals


def _resolve_catalog(cfg: dict, args, fallback_classes) -> ClassCatalog:
    """Explicit --id-classes, else config, else sorted fallback names."""
    flag = getattr(args, "id_classes", None)
    if flag:
        return ClassCatalog(tuple(p for p in flag.split(",") if p))
    if cfg["id_classes"]:
        ids = cfg["id_classes"]
        if not isinstance(ids, list) or not all(isinstance(c, str) for c in ids):
            raise InputError("config id_classes must be a list of strings")
        return ClassCatalog(tuple(ids))
    names = sorted(set(fallback_classes))
    if not names:
        raise InputError(
            "cannot derive the ID class list; pass --id-classes or set id_classes in the config"
        )
    return ClassCatalog(tuple(names))


def _meta(command: str, args, cfg: dict, extra: Optional[dict] = None) -> dict:
    """Reproducibility stamp embedded in every output file. No timestamps."""
    arg_echo = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "command") and v is not None and not callable(v)
    }
    m = {
        "tool": "owssd",
        "version": __version__,
        "command": command,
        "args": arg_echo,
        "config": cfg,
    }
    if extra:
        m.update(extra)
    return m


def _percent(v: Optional[float]) -> str:
    return "-" if v is None else f"{100.0 * v:7.2f}"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg: dict) -> int:
    scfg = _synth_config(cfg, args)
    bundle = generate_synthetic(scfg)
    meta = _meta("synth", args, cfg)
    paths = write_bundle(args.out, bundle, meta)
    n_ann = sum(len(s.boxes) for s in bundle.annotations.scenes)
    log.info("synthetic dataset: %d images, %d annotated boxes", len(bundle.annotations.images), n_ann)
    log.info("labeled features: %d records", len(bundle.labeled_features.records))
    log.info("proposal features: %d records", len(bundle.proposal_features.records))
    log.info("teacher detections: %d records", len(bundle.teacher_detections))
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def cmd_train_ood(args, cfg: dict) -> int:
    features = load_features(args.features)
    by_class = features.by_class(source=args.source or cfg["source"])
    if not by_class:
        raise InputError(
            f"no class-labeled records with source {args.source or cfg['source']!r} in {args.features}"
        )
    catalog = _resolve_catalog(cfg, args, by_class.keys())
    holdout = args.holdout if args.holdout is not None else cfg["holdout_fraction"]
    tcfg = _train_config(cfg, args)
    train_map, _ = split_for_calibration(
        {c: by_class[c] for c in catalog.id_classes if c in by_class},
        holdout,
        tcfg.seed,
    )
    arch = _effective_arch(cfg, args, features.dim)
    log.info(
        "training %d members, arch %s, %d epochs, holdout %.3f",
        len(catalog.id_classes), list(arch.layer_dims), tcfg.epochs, holdout,
    )
    model = train_ensemble(train_map, arch, tcfg, catalog, n_workers=args.threads or 1)
    if cfg["mu"] is not None:
        model = model.with_mu(float(cfg["mu"]))
    model.meta.update(
        {
            "holdout_fraction": holdout,
            "split_seed": tcfg.seed,
            "source": args.source or cfg["source"],
        }
    )
    save_ensemble(args.out, model)
    log.info("ensemble written to %s (mu=%s)", args.out, model.mu)
    print(f"ensemble: {args.out}")
    return 0


def cmd_calibrate(args, cfg: dict) -> int:
    if os.path.abspath(args.out) == os.path.abspath(args.ensemble):
        raise InputError("calibrate never overwrites its input; pick a different --out")
    model = load_ensemble(args.ensemble)
    features = load_features(args.features)
    by_class = features.by_class(source=args.source or cfg["source"])
    holdout = args.holdout
    if holdout is None:
        holdout = model.meta.get("holdout_fraction", cfg["holdout_fraction"])
    seed = args.seed if args.seed is not None else model.meta.get("split_seed", cfg["seed"])
    _, holdout_map = split_for_calibration(by_class, holdout, seed)
    if not holdout_map:
        raise CalibrationError(
            "the holdout split is empty; raise --holdout or provide more samples"
        )
    candidates = None
    if args.candidates:
        candidates = _parse_csv_floats(args.candidates, "--candidates")
    elif cfg["mu_candidates"]:
        candidates = [float(c) for c in cfg["mu_candidates"]]
    report = calibrate_threshold(model, holdout_map, candidates)
    calibrated = model.with_mu(report.chosen_mu)
    calibrated.meta.update({"calibrated": True})
    save_ensemble(args.out, calibrated)
    if args.report:
        doc = {"schema": "owssd.report.v1", "kind": "calibration", **report.as_dict(),
               "meta": _meta("calibrate", args, cfg)}
        dump_json_doc(args.report, doc)
    log.info("chosen mu=%s (pseudo-OOD F1=%.4f)", report.chosen_mu, max(report.f1))
    print(f"chosen_mu: {report.chosen_mu!r}")
    print(f"ensemble: {args.out}")
    return 0


def cmd_classify(args, cfg: dict) -> int:
    model = load_ensemble(args.ensemble)
    if args.mu is not None:
        model = model.with_mu(args.mu)
    elif cfg["mu"] is not None:
        model = model.with_mu(float(cfg["mu"]))
    features = load_features(args.features)
    min_score = (
        args.min_proposal_score
        if args.min_proposal_score is not None
        else cfg["min_proposal_score"]
    )
    kept = filter_proposals(list(features.records), min_score)
    unscored = [r for r in kept if r.score is None]
    if unscored:
        raise InputError(
            f"{len(unscored)} records have no score; classify expects scored proposals"
        )
    ood = classify_proposals(model, kept)
    write_proposals(args.out, ood, _meta("classify", args, cfg, {"mu": model.mu}))
    log.info(
        "classified %d proposals (of %d after score filter): %d OOD",
        len(kept), len(features.records), len(ood),
    )
    print(f"ood_proposals: {args.out} ({len(ood)} records)")
    return 0


def cmd_fuse(args, cfg: dict) -> int:
    teacher = load_detections(args.teacher)
    ood = load_proposals(args.ood)
    base = load_annotations(args.annotations)
    catalog = _resolve_catalog(
        cfg, args, [d.class_label for d in teacher if d.class_label is not None]
    )
    for d in ood:
        if d.class_label not in (None, catalog.ood_label):
            raise InputError(
                f"OOD proposals must be unlabeled or labeled {catalog.ood_label!r}, "
                f"got {d.class_label!r}"
            )
    fcfg = _fusion_config(cfg, args)
    selected = select_teacher_pseudolabels(teacher, fcfg.conf_threshold, catalog)
    fused = fuse_images(selected, ood, fcfg, catalog.ood_label)
    meta = _meta("fuse", args, cfg)
    training_set = emit_training_set(base, fused, catalog, args.out, meta)
    n_id = sum(len(ps.id_labels) for ps in fused)
    n_ood = sum(len(ps.ood_labels) for ps in fused)
    if args.out_labels:
        from .dataio import write_detections

        write_detections(args.out_labels, pseudo_labels_as_detections(fused), meta)
    log.info(
        "fused %d images: %d ID pseudo-labels, %d OOD pseudo-labels (teacher kept %d/%d)",
        len(fused), n_id, n_ood, len(selected), len(teacher),
    )
    n_boxes = sum(len(s.boxes) for s in training_set.scenes)
    print(f"training_set: {args.out} ({n_boxes} boxes)")
    return 0


def _gt_scenes_for_eval(base, catalog: ClassCatalog, split: str):
    """Scenes restricted to a split, novel classes folded into the OOD label."""
    ann = base if split == "all" else base.restrict_to_split(split)
    scenes = []
    for s in ann.scenes:
        boxes = tuple(
            (b, c if catalog.is_id(c) else catalog.ood_label) for b, c in s.boxes
        )
        scenes.append(GroundTruthScene(s.image_id, boxes))
    return scenes


def cmd_eval_det(args, cfg: dict) -> int:
    base = load_annotations(args.annotations)
    detections: list[Detection] = []
    for path in args.detections:
        detections.extend(load_boxed_records(path))
    catalog = _resolve_catalog(
        cfg,
        args,
        [d.class_label for d in detections
         if d.class_label is not None and d.class_label != "unknown"],
    )
    split = args.split or cfg["eval"]["split"]
    if split not in ("all", "labeled", "unlabeled"):
        raise InputError(f"--split must be all, labeled, or unlabeled, got {split!r}")
    scenes = _gt_scenes_for_eval(base, catalog, split)
    scene_ids = {s.image_id for s in scenes}
    in_split = [d for d in detections if d.image_id in scene_ids]
    dropped = len(detections) - len(in_split)
    if dropped:
        log.info("ignoring %d detections on images outside the %r split", dropped, split)
    for d in in_split:
        if d.class_label is None:
            raise InputError(
                f"detections for evaluation must be class-labeled (image {d.image_id!r})"
            )
    by_image = {
        img: [d.scored for d in dets] for img, dets in group_by_image(in_split).items()
    }
    max_dets = args.max_dets if args.max_dets is not None else cfg["eval"]["max_dets"]
    iou_thr = args.iou if args.iou is not None else cfg["eval"]["iou_threshold"]
    report = evaluate_detections(by_image, scenes, catalog, max_dets, iou_thr)

    print(f"{'class':<24}{'AP':>9}{'AR':>9}")
    for cls in catalog.eval_classes:
        if cls in report.skipped_classes:
            continue
        ap = report.per_class_ap.get(cls)
        ar = report.per_class_recall.get(cls)
        print(f"{cls:<24}{_percent(ap):>9}{_percent(ar):>9}")
    print(f"{'mean (all)':<24}{_percent(report.ap.all):>9}{_percent(report.ar.all):>9}")
    print(f"{'mean (id)':<24}{_percent(report.ap.id):>9}{_percent(report.ar.id):>9}")
    print(f"{'mean (ood)':<24}{_percent(report.ap.ood):>9}{_percent(report.ar.ood):>9}")
    if report.skipped_classes:
        print(f"skipped (no ground truth): {', '.join(report.skipped_classes)}")
    if args.out:
        doc = {"schema": "owssd.report.v1", "kind": "eval-det", **report.as_dict(),
               "split": split, "meta": _meta("eval-det", args, cfg)}
        dump_json_doc(args.out, doc)
    return 0


def _ood_truth(features, catalog: ClassCatalog):
    """(matrix, truth flags, n_skipped): class in catalog = ID, other = OOD, None = skipped."""
    rows = []
    truth = []
    skipped = 0
    for r in features.records:
        if r.class_name is None:
            skipped += 1
            continue
        rows.append(r.feature)
        truth.append(not catalog.is_id(r.class_name))
    if not rows:
        raise InputError("no class-labeled records to evaluate")
    return np.stack(rows), np.array(truth, dtype=bool), skipped


def cmd_eval_ood(args, cfg: dict) -> int:
    model = load_ensemble(args.ensemble)
    if args.mu is not None:
        model = model.with_mu(args.mu)
    elif cfg["mu"] is not None:
        model = model.with_mu(float(cfg["mu"]))
    features = load_features(args.features)
    X, truth, skipped = _ood_truth(features, model.catalog)
    errs = model.errors_matrix(X)
    thresholds = np.array([model.threshold_for(c) for c in model.catalog.id_classes])
    pred_ood = ~(errs < thresholds[:, None]).any(axis=0)
    scores = errs.min(axis=0)
    auroc_value = None
    if truth.any() and (~truth).any():
        auroc_value = auroc(list(zip(scores.tolist(), truth.tolist())))
    else:
        log.warning("only one kind of sample present; AUROC undefined")
    result = binary_ood_eval(list(zip(pred_ood.tolist(), truth.tolist())), auroc_value)
    out_doc = {
        "schema": "owssd.report.v1",
        "kind": "eval-ood",
        "mu": model.mu,
        "n_evaluated": int(truth.shape[0]),
        "n_skipped_unlabeled": skipped,
        "ensemble": result.as_dict(),
    }

    def show(name, r):
        a = "-" if r.get("auroc") is None else f"{r['auroc']:.4f}"
        print(
            f"{name:<12} f1={r['f1']:.4f} precision={r['precision']:.4f} "
            f"recall={r['recall']:.4f} fpr={r['fpr']:.4f} auroc={a}"
        )

    show("ensemble", out_doc["ensemble"])

    if args.compare_baselines:
        if not args.train_features:
            raise InputError("--compare-baselines needs --train-features (labeled features)")
        train_fs = load_features(args.train_features)
        by_class = train_fs.by_class(source=args.source or cfg["source"])
        missing = [c for c in model.catalog.id_classes if c not in by_class]
        if missing:
            raise InputError(f"training features lack classes {missing!r}")
        by_class = {c: by_class[c] for c in model.catalog.id_classes}
        holdout = args.holdout if args.holdout is not None else cfg["holdout_fraction"]
        seed = args.seed if args.seed is not None else model.meta.get("split_seed", cfg["seed"])
        k = args.k if args.k is not None else cfg["k"]
        tcfg = _train_config(cfg, args)
        arch = _effective_arch(cfg, args, train_fs.dim)
        pooled = np.concatenate([by_class[c] for c in model.catalog.id_classes])

        for name, fit_fn, final_scorer in (
            ("knn", lambda Z: fit_knn(Z, k), fit_knn(pooled, k)),
            (
                "common-ae",
                lambda Z: fit_common_ae(Z, arch, tcfg),
                fit_common_ae(pooled, arch, tcfg),
            ),
        ):
            cal = calibrate_scorer_threshold(fit_fn, by_class, holdout, seed)
            s = final_scorer.scores(X)
            pred = s >= cal.threshold
            a = None
            if truth.any() and (~truth).any():
                a = auroc(list(zip(s.tolist(), truth.tolist())))
            res = binary_ood_eval(list(zip(pred.tolist(), truth.tolist())), a)
            row = res.as_dict()
            row["threshold"] = cal.threshold
            row["describe"] = final_scorer.describe()
            out_doc[name] = row
            show(name, row)

    if args.out:
        out_doc["meta"] = _meta("eval-ood", args, cfg)
        dump_json_doc(args.out, out_doc)
    return 0


def cmd_sweep_mu(args, cfg: dict) -> int:
    model = load_ensemble(args.ensemble)
    features = load_features(args.features)
    X, truth, skipped = _ood_truth(features, model.catalog)
    mus = _parse_csv_floats(args.mus, "--mus") if args.mus else [0.05, 0.1, 0.2]
    rows = sweep_thresholds(model, X, truth.tolist(), mus)
    print(f"{'mu':>10}{'f1':>9}{'precision':>11}{'recall':>9}{'fpr':>9}")
    for row in rows:
        print(
            f"{row['mu']:>10.4g}{row['f1']:>9.4f}{row['precision']:>11.4f}"
            f"{row['recall']:>9.4f}{row['fpr']:>9.4f}"
        )
    if args.out:
        doc = {
            "schema": "owssd.report.v1",
            "kind": "sweep-mu",
            "rows": rows,
            "n_evaluated": int(truth.shape[0]),
            "n_skipped_unlabeled": skipped,
            "meta": _meta("sweep-mu", args, cfg),
        }
        dump_json_doc(args.out, doc)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=os.environ.get("OWSSD_CONFIG"),
                        help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, default=None, help="override every seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap for member training (default: cpu count)")
    common.add_argument("--log-level", default=os.environ.get("OWSSD_LOG_LEVEL", "INFO"),
                        help="logging verbosity (DEBUG, INFO, WARNING, ERROR)")

    p = argparse.ArgumentParser(prog="owssd", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"owssd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[common],
                        help="generate a synthetic open-world dataset")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train-ood", parents=[common],
                        help="train the per-class autoencoder ensemble")
    sp.add_argument("--features", required=True, help="labeled feature file")
    sp.add_argument("--out", required=True, help="ensemble output path")
    sp.add_argument("--arch", default=None,
                    help="'auto' or comma-separated layer widths, e.g. 32,16,8,16,32")
    sp.add_argument("--holdout", type=float, default=None,
                    help="fraction reserved per class for calibration")
    sp.add_argument("--source", default=None, choices=["gt", "proposal", "teacher"],
                    help="which feature records to train on (default gt)")
    sp.add_argument("--id-classes", default=None, help="comma-separated catalog override")
    sp.set_defaults(func=cmd_train_ood)

    sp = sub.add_parser("calibrate", parents=[common],
                        help="pick mu on held-out labeled features")
    sp.add_argument("--ensemble", required=True)
    sp.add_argument("--features", required=True, help="the same labeled feature file")
    sp.add_argument("--out", required=True, help="calibrated ensemble output path")
    sp.add_argument("--report", default=None, help="optional calibration report JSON")
    sp.add_argument("--candidates", default=None, help="comma-separated mu candidates")
    sp.add_argument("--holdout", type=float, default=None,
                    help="holdout fraction (default: from the ensemble file)")
    sp.add_argument("--source", default=None, choices=["gt", "proposal", "teacher"])
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("classify", parents=[common],
                        help="keep OOD proposals, relabeled for the open world")
    sp.add_argument("--ensemble", required=True)
    sp.add_argument("--features", required=True, help="proposal feature file")
    sp.add_argument("--out", required=True, help="OOD proposals output path")
    sp.add_argument("--mu", type=float, default=None, help="override the stored threshold")
    sp.add_argument("--min-proposal-score", type=float, default=None,
                    help="drop proposals scored below this before classification")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("fuse", parents=[common],
                        help="merge teacher detections with OOD proposals")
    sp.add_argument("--teacher", required=True, help="teacher detections file")
    sp.add_argument("--ood", required=True, help="OOD proposals file (classify output)")
    sp.add_argument("--annotations", required=True, help="ground-truth annotations file")
    sp.add_argument("--out", required=True, help="fused training annotations output")
    sp.add_argument("--out-labels", default=None,
                    help="optional pseudo-labels dump as a detections file")
    sp.add_argument("--conf-thresh", type=float, default=None,
                    help="teacher confidence threshold")
    sp.add_argument("--overlap-iou", type=float, default=None,
                    help="drop ID labels overlapping OOD labels beyond this IoU")
    sp.add_argument("--nms-iou", type=float, default=None, help="NMS IoU among OOD labels")
    sp.add_argument("--no-filtering", action="store_true",
                    help="keep all teacher labels regardless of OOD overlap")
    sp.add_argument("--id-classes", default=None)
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("eval-det", parents=[common],
                        help="AP/AR of detections against ground truth")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--detections", required=True, action="append",
                    help="detections or labeled-proposals file; repeatable")
    sp.add_argument("--out", default=None, help="report JSON output")
    sp.add_argument("--split", default=None, choices=["all", "labeled", "unlabeled"])
    sp.add_argument("--max-dets", type=int, default=None, help="per-image detection budget")
    sp.add_argument("--iou", type=float, default=None, help="matching IoU threshold")
    sp.add_argument("--id-classes", default=None)
    sp.set_defaults(func=cmd_eval_det)

    sp = sub.add_parser("eval-ood", parents=[common],
                        help="OOD decision and ranking quality on labeled features")
    sp.add_argument("--ensemble", required=True)
    sp.add_argument("--features", required=True, help="evaluation feature file")
    sp.add_argument("--out", default=None, help="report JSON output")
    sp.add_argument("--mu", type=float, default=None, help="override the stored threshold")
    sp.add_argument("--compare-baselines", action="store_true",
                    help="also fit and score the KNN and pooled-autoencoder baselines")
    sp.add_argument("--train-features", default=None,
                    help="labeled feature file for fitting the baselines")
    sp.add_argument("--k", type=int, default=None, help="neighbor count for the KNN baseline")
    sp.add_argument("--arch", default=None, help="architecture for the pooled autoencoder")
    sp.add_argument("--holdout", type=float, default=None)
    sp.add_argument("--source", default=None, choices=["gt", "proposal", "teacher"])
    sp.set_defaults(func=cmd_eval_ood)

    sp = sub.add_parser("sweep-mu", parents=[common],
                        help="decision quality across a grid of thresholds")
    sp.add_argument("--ensemble", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--mus", default=None, help="comma-separated thresholds (default 0.05,0.1,0.2)")
    sp.add_argument("--out", default=None, help="report JSON output")
    sp.set_defaults(func=cmd_sweep_mu)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    level = getattr(logging, str(args.log_level).upper(), None)
    if level is None:
        print(f"error[input]: unknown log level {args.log_level!r}", file=sys.stderr)
        return 2
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config_file(args.config)
        return args.func(args, cfg)
    except InputError as e:
        print(f"error[input]: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error[missing-file]: {e}", file=sys.stderr)
        return 3
    except SchemaError as e:
        print(f"error[schema]: {e}", file=sys.stderr)
        return 4
    except TrainingError as e:
        print(f"error[training]: {e}", file=sys.stderr)
        return 5
    except CalibrationError as e:
        print(f"error[calibration]: {e}", file=sys.stderr)
        return 6
    except OwssdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 7
    except Exception as e:  # pragma: no cover - last-resort guard
        print(f"error[internal]: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
