"""Per-class autoencoder ensemble for out-of-distribution detection.

One autoencoder is trained per in-distribution class on that class's
features only. A feature is claimed by a member when its reconstruction
error falls strictly below the threshold mu; a feature no member claims
is out-of-distribution. The ensemble's scalar OOD score is the minimum
reconstruction error across members (low = familiar to some class).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from ._ser import dump_json_doc, load_json_doc, require
from .core import ClassCatalog, Detection
from .dataio import FeatureRecord
from .errors import CalibrationError, DimensionError, InputError, SchemaError, TrainingError
from .nnet import (
    AeArchitecture,
    MlpAutoencoder,
    TrainConfig,
    init_autoencoder,
    model_from_dict,
    model_to_dict,
    reconstruction_errors,
    train,
)

ENSEMBLE_SCHEMA = "owssd.ensemble.v1"

DEFAULT_MU = 0.1


def derive_member_seed(seed: int, index: int) -> int:
    """Stable per-member seed from the run seed and the member's catalog index.

    splitmix64 finalizer over the combined value: well-spread seeds,
    independent of how many members exist or in which order they train.
    """
    z = (seed * 0x9E3779B97F4A7C15 + index + 1) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return int(z)


@dataclass(frozen=True)
class OodVerdict:
    """Outcome of classifying one feature vector.

    ``claims`` lists the classes whose member reconstructed the feature
    below threshold, in catalog order; ``is_ood`` is true iff no member
    claimed it. ``errors`` holds every member's reconstruction error.
    """

    is_ood: bool
    claims: tuple[str, ...]
    errors: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.is_ood != (len(self.claims) == 0):
            raise InputError("is_ood must hold exactly when no class claims the sample")
        if any(e < 0 or not math.isfinite(e) for e in self.errors.values()):
            raise InputError("reconstruction errors must be finite and non-negative")
        missing = set(self.claims) - set(self.errors)
        if missing:
            raise InputError(f"claims without recorded errors: {sorted(missing)!r}")


class EnsembleModel:
    """A catalog, one trained autoencoder per ID class, and decision thresholds."""

    def __init__(
        self,
        catalog: ClassCatalog,
        members: Mapping[str, MlpAutoencoder],
        mu: float = DEFAULT_MU,
        mu_overrides: Optional[Mapping[str, float]] = None,
        meta: Optional[dict] = None,
    ):
        if set(members) != set(catalog.id_classes):
            raise InputError(
                f"members {sorted(members)!r} must cover exactly the catalog classes "
                f"{sorted(catalog.id_classes)!r}"
            )
        if not (isinstance(mu, (int, float)) and math.isfinite(mu) and mu > 0):
            raise InputError(f"mu must be a positive finite number, got {mu!r}")
        mu_overrides = dict(mu_overrides or {})
        for c, v in mu_overrides.items():
            if c not in catalog.id_classes:
                raise InputError(f"mu override for unknown class {c!r}")
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InputError(f"mu override for {c!r} must be positive, got {v!r}")
        dims = {members[c].feature_dim for c in catalog.id_classes}
        if len(dims) != 1:
            raise InputError(f"members disagree on feature dimension: {sorted(dims)}")
        self.catalog = catalog
        self.members = {c: members[c] for c in catalog.id_classes}  # catalog order
        self.mu = float(mu)
        self.mu_overrides = mu_overrides
        self.meta = dict(meta or {})

    @property
    def feature_dim(self) -> int:
        return next(iter(self.members.values())).feature_dim

    def threshold_for(self, class_name: str) -> float:
        if class_name not in self.members:
            raise InputError(f"no member for class {class_name!r}")
        return self.mu_overrides.get(class_name, self.mu)

    def with_mu(self, mu: float) -> "EnsembleModel":
        return EnsembleModel(self.catalog, self.members, mu, self.mu_overrides, self.meta)

    def errors_matrix(self, X) -> np.ndarray:
        """Reconstruction errors, shape (n_members, n_samples), rows in catalog order."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise DimensionError(
                f"expected shape (n, {self.feature_dim}), got {X.shape}"
            )
        return np.stack([reconstruction_errors(m, X) for m in self.members.values()])


def train_ensemble(
    features_by_class: Mapping[str, np.ndarray],
    arch: AeArchitecture,
    cfg: TrainConfig,
    catalog: Optional[ClassCatalog] = None,
    n_workers: int = 1,
) -> EnsembleModel:
    """Train one member per catalog class on that class's features alone.

    Each member gets its own seed derived from (cfg.seed, catalog
    index), so results do not depend on worker scheduling and adding a
    later class never changes earlier members. The catalog defaults to
    the sorted class names of the feature map.
    """
    if catalog is None:
        if not features_by_class:
            raise InputError("features_by_class must not be empty")
        catalog = ClassCatalog(tuple(sorted(features_by_class)))
    if not isinstance(n_workers, int) or n_workers < 1:
        raise InputError(f"n_workers must be an integer >= 1, got {n_workers!r}")
    prepared: dict[str, np.ndarray] = {}
    for c in catalog.id_classes:
        if c not in features_by_class:
            raise InputError(f"no training features for catalog class {c!r}")
        X = np.asarray(features_by_class[c], dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError(f"class {c!r} needs a non-empty (n, D) feature array")
        if X.shape[1] != arch.feature_dim:
            raise DimensionError(
                f"class {c!r} features have dimension {X.shape[1]}, "
                f"architecture expects {arch.feature_dim}"
            )
        prepared[c] = X

    def fit_one(item):
        idx, c = item
        seed = derive_member_seed(cfg.seed, idx)
        member_cfg = replace(cfg, seed=seed)
        try:
            model, _ = train(init_autoencoder(arch, seed), prepared[c], member_cfg)
        except TrainingError as e:
            raise TrainingError(f"member {c!r}: {e}") from e
        return c, model

    items = list(enumerate(catalog.id_classes))
    if n_workers == 1 or len(items) == 1:
        results = [fit_one(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(fit_one, items))
    return EnsembleModel(catalog, dict(results), DEFAULT_MU)


def classify_feature(model: EnsembleModel, x) -> OodVerdict:
    """Run every member on one feature; OOD iff no member claims it.

    A member claims the sample when its reconstruction error is
    strictly below the member's threshold.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.feature_dim:
        raise DimensionError(
            f"expected a feature vector of dimension {model.feature_dim}, got shape {x.shape}"
        )
    errors = {}
    claims = []
    for c, member in model.members.items():
        r = float(reconstruction_errors(member, x[None, :])[0])
        errors[c] = r
        if r < model.threshold_for(c):
            claims.append(c)
    return OodVerdict(is_ood=not claims, claims=tuple(claims), errors=errors)


def ood_score(model: EnsembleModel, x) -> float:
    """Scalar novelty score: the smallest member reconstruction error."""
    verdict = classify_feature(model, x)
    return min(verdict.errors.values())


def classify_proposals(
    model: EnsembleModel, proposals: Sequence[FeatureRecord]
) -> list[Detection]:
    """Keep only OOD proposals, relabeled with the open-world class.

    Equivalent to filtering on classify_feature(...).is_ood per record;
    the batch path exists for speed, not different semantics.
    """
    if not proposals:
        return []
    for i, r in enumerate(proposals):
        if r.feature.shape[0] != model.feature_dim:
            raise DimensionError(
                f"proposal {i} has dimension {r.feature.shape[0]}, "
                f"ensemble expects {model.feature_dim}"
            )
        if r.score is None:
            raise InputError(f"proposal {i} has no score; proposals must be scored")
    X = np.stack([r.feature for r in proposals])
    errs = model.errors_matrix(X)
    thresholds = np.array([model.threshold_for(c) for c in model.catalog.id_classes])
    claimed = (errs < thresholds[:, None]).any(axis=0)
    out = []
    for i, r in enumerate(proposals):
        if not claimed[i]:
            out.append(Detection(r.image_id, r.box, r.score, model.catalog.ood_label))
    return out


def split_for_calibration(
    features_by_class: Mapping[str, np.ndarray],
    holdout_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Split each class into (train, holdout) with a seeded shuffle.

    The holdout gets round(fraction * n) samples, clamped so both sides
    keep at least one sample when the class has two or more; singleton
    classes go entirely to train. Classes are processed in sorted name
    order, so the split depends only on (data, fraction, seed).
    """
    if not (isinstance(holdout_fraction, (int, float)) and 0.0 <= holdout_fraction < 1.0):
        raise InputError(f"holdout_fraction must lie in [0, 1), got {holdout_fraction!r}")
    rng = np.random.default_rng(seed)
    train_map: dict[str, np.ndarray] = {}
    holdout_map: dict[str, np.ndarray] = {}
    for c in sorted(features_by_class):
        X = np.asarray(features_by_class[c], dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError(f"class {c!r} needs a non-empty (n, D) feature array")
        n = X.shape[0]
        perm = rng.permutation(n)
        if holdout_fraction == 0.0 or n < 2:
            k = 0
        else:
            k = min(max(int(round(holdout_fraction * n)), 1), n - 1)
        train_map[c] = X[perm[k:]]
        if k:
            holdout_map[c] = X[perm[:k]]
    return train_map, holdout_map


def default_mu_candidates() -> tuple[float, ...]:
    """Log-spaced grid over [0.001, 1] plus the conventional trio 0.05/0.1/0.2."""
    grid = np.logspace(-3.0, 0.0, 13)
    return tuple(np.unique(np.concatenate([grid, [0.05, 0.1, 0.2]])))


@dataclass(frozen=True)
class CalibrationReport:
    """Per-candidate pseudo-OOD detection quality and the winning threshold.

    Built from (member, sample) pairs: a sample of class c is a
    pseudo-OOD positive for every member of a different class and an
    in-distribution negative for its own member.
    """

    candidates: tuple[float, ...]
    f1: tuple[float, ...]
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    chosen_mu: float
    n_pairs: int
    n_positive: int

    def as_dict(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "f1": list(self.f1),
            "fpr": list(self.fpr),
            "tpr": list(self.tpr),
            "chosen_mu": self.chosen_mu,
            "n_pairs": self.n_pairs,
            "n_positive": self.n_positive,
        }


def calibrate_threshold(
    model: EnsembleModel,
    labeled_by_class: Mapping[str, np.ndarray],
    candidates: Optional[Sequence[float]] = None,
) -> CalibrationReport:
    """Pick mu by maximizing pseudo-OOD F1 over held-out labeled features.

    No real OOD data is needed: for each member, samples of every other
    class stand in as OOD. F1 treats OOD as the positive class; ties
    between candidates resolve to the smaller mu. The model is not
    modified; apply the result with model.with_mu(report.chosen_mu).
    """
    if len(model.catalog.id_classes) < 2:
        raise CalibrationError(
            "pseudo-OOD calibration needs at least two classes; set mu explicitly instead"
        )
    if candidates is None:
        candidates = default_mu_candidates()
    cand = [float(c) for c in candidates]
    if not cand:
        raise InputError("candidates must not be empty")
    if any(not (math.isfinite(c) and c > 0) for c in cand):
        raise InputError("candidates must be positive finite numbers")
    cand = sorted(set(cand))

    class_names = sorted(labeled_by_class)
    if not class_names:
        raise CalibrationError("no labeled features to calibrate on")
    missing = [c for c in model.catalog.id_classes if c not in labeled_by_class]
    if missing:
        raise CalibrationError(f"no labeled features for classes {missing!r}")
    blocks = []
    labels = []
    for c in class_names:
        X = np.asarray(labeled_by_class[c], dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError(f"class {c!r} needs a non-empty (n, D) feature array")
        blocks.append(X)
        labels.extend([c] * X.shape[0])
    X_all = np.concatenate(blocks)
    errs = model.errors_matrix(X_all)  # (n_members, n_samples)
    member_names = list(model.catalog.id_classes)
    truth_ood = np.array(
        [[lbl != m for lbl in labels] for m in member_names]
    )  # pair is pseudo-OOD iff sample class differs from the member's

    f1s, fprs, tprs = [], [], []
    best_idx = 0
    best_f1 = -1.0
    for i, mu in enumerate(cand):
        pred_ood = errs >= mu
        tp = int(np.sum(pred_ood & truth_ood))
        fp = int(np.sum(pred_ood & ~truth_ood))
        fn = int(np.sum(~pred_ood & truth_ood))
        tn = int(np.sum(~pred_ood & ~truth_ood))
        f1 = (2 * tp / (2 * tp + fp + fn)) if (2 * tp + fp + fn) > 0 else 0.0
        fpr = fp / (fp + tn) if (fp + tn) > 0 else 0.0
        tpr = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        f1s.append(f1)
        fprs.append(fpr)
        tprs.append(tpr)
        if f1 > best_f1:  # strict: ties keep the smaller candidate
            best_f1 = f1
            best_idx = i
    return CalibrationReport(
        candidates=tuple(cand),
        f1=tuple(f1s),
        fpr=tuple(fprs),
        tpr=tuple(tprs),
        chosen_mu=cand[best_idx],
        n_pairs=int(truth_ood.size),
        n_positive=int(truth_ood.sum()),
    )


def sweep_thresholds(
    model: EnsembleModel, X, is_ood_truth: Sequence[bool], mus: Sequence[float]
) -> list[dict]:
    """Ensemble OOD decision quality at each candidate mu, against known truth.

    Returns one row per mu with F1, precision, recall (= TPR) and FPR,
    OOD being the positive class. Errors are computed once and reused.
    """
    truth = np.asarray(list(is_ood_truth), dtype=bool)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != truth.shape[0]:
        raise InputError("X and is_ood_truth must have matching lengths")
    mus = [float(m) for m in mus]
    if len(mus) == 0:
        raise InputError("mus must not be empty")
    for m in mus:
        if not (isinstance(m, (int, float)) and math.isfinite(m) and m > 0):
            raise InputError(f"mu candidates must be positive finite numbers, got {m!r}")
    errs = model.errors_matrix(X)
    min_err = errs.min(axis=0)
    rows = []
    for mu in mus:
        pred_ood = min_err >= mu  # no member error below mu => nothing claims it
        tp = int(np.sum(pred_ood & truth))
        fp = int(np.sum(pred_ood & ~truth))
        fn = int(np.sum(~pred_ood & truth))
        tn = int(np.sum(~pred_ood & ~truth))
        rows.append(
            {
                "mu": float(mu),
                "f1": (2 * tp / (2 * tp + fp + fn)) if (2 * tp + fp + fn) > 0 else 0.0,
                "precision": tp / (tp + fp) if (tp + fp) > 0 else 0.0,
                "recall": tp / (tp + fn) if (tp + fn) > 0 else 0.0,
                "fpr": fp / (fp + tn) if (fp + tn) > 0 else 0.0,
                "tp": tp,
                "fp": fp,
                "fn": fn,
                "tn": tn,
            }
        )
    return rows


def save_ensemble(path: str, model: EnsembleModel) -> None:
    doc = {
        "schema": ENSEMBLE_SCHEMA,
        "classes": list(model.catalog.id_classes),
        "ood_label": model.catalog.ood_label,
        "dim": model.feature_dim,
        "mu": model.mu,
        "mu_overrides": dict(model.mu_overrides),
        "normalized": any(m.normalized for m in model.members.values()),
        "members": {c: model_to_dict(m) for c, m in model.members.items()},
        "meta": model.meta,
    }
    dump_json_doc(path, doc)


def load_ensemble(path: str) -> EnsembleModel:
    doc = load_json_doc(path, ENSEMBLE_SCHEMA)
    classes = doc.get("classes")
    require(isinstance(classes, list) and classes
            and all(isinstance(c, str) and c for c in classes),
            "classes must be a non-empty list of strings", path=path)
    ood_label = doc.get("ood_label", "unknown")
    require(isinstance(ood_label, str) and ood_label, "ood_label must be a non-empty string",
            path=path)
    members_doc = doc.get("members")
    require(isinstance(members_doc, dict), "members must be an object", path=path)
    require(set(members_doc) == set(classes), "members must cover exactly the class list",
            path=path)
    mu = doc.get("mu")
    require(isinstance(mu, (int, float)) and not isinstance(mu, bool) and math.isfinite(mu) and mu > 0,
            "mu must be a positive number", path=path)
    overrides = doc.get("mu_overrides", {})
    require(isinstance(overrides, dict), "mu_overrides must be an object", path=path)
    meta = doc.get("meta", {})
    require(isinstance(meta, dict), "meta must be an object", path=path)
    members = {c: model_from_dict(members_doc[c], path=path) for c in classes}
    try:
        model = EnsembleModel(
            ClassCatalog(tuple(classes), ood_label), members, float(mu), overrides, meta
        )
    except InputError as e:
        raise SchemaError(f"inconsistent ensemble: {e}", path=path) from e
    dim = doc.get("dim")
    require(dim == model.feature_dim, f"declared dim {dim!r} disagrees with members", path=path)
    return model
