"""Reference OOD scorers to compare the per-class ensemble against.

All scorers share one contract: ``score(x)`` is a scalar that grows
with novelty, and ``is_ood(x, t)`` is simply ``score(x) >= t``, so
raising the threshold never flips a sample from ID to OOD.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ._ser import dump_json_doc, load_json_doc, require
from .ensemble import EnsembleModel, split_for_calibration
from .errors import DimensionError, InputError
from .nnet import (
    AeArchitecture,
    MlpAutoencoder,
    TrainConfig,
    init_autoencoder,
    reconstruction_errors,
    train,
)

KNN_SCHEMA = "owssd.knn.v1"


class OodScorer(ABC):
    """Anything that maps a feature vector to a novelty score (larger = more OOD)."""

    @abstractmethod
    def score(self, x) -> float: ...

    @abstractmethod
    def describe(self) -> str: ...

    @property
    @abstractmethod
    def feature_dim(self) -> int: ...

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError(f"expected a (n, D) array, got shape {X.shape}")
        return np.array([self.score(x) for x in X])

    def is_ood(self, x, threshold: float) -> bool:
        if not (isinstance(threshold, (int, float)) and math.isfinite(threshold)):
            raise InputError(f"threshold must be a finite number, got {threshold!r}")
        return self.score(x) >= threshold


def _check_vector(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimensionError(f"expected a feature vector of dimension {dim}, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise InputError("feature values must be finite")
    return x


class KnnScorer(OodScorer):
    """Mean Euclidean distance to the k nearest reference features."""

    def __init__(self, references: np.ndarray, k: int):
        refs = np.asarray(references, dtype=np.float64)
        if refs.ndim != 2 or refs.shape[0] < 1:
            raise InputError(f"references must be a non-empty (n, D) array, got shape {refs.shape}")
        if not np.isfinite(refs).all():
            raise InputError("reference features must be finite")
        if not isinstance(k, int) or isinstance(k, bool) or not 1 <= k <= refs.shape[0]:
            raise InputError(
                f"k must be an integer in [1, {refs.shape[0]}] (the reference count), got {k!r}"
            )
        self.references = refs
        self.k = k

    @property
    def feature_dim(self) -> int:
        return self.references.shape[1]

    def score(self, x) -> float:
        x = _check_vector(x, self.feature_dim)
        d = np.sqrt(((self.references - x) ** 2).sum(axis=1))
        if self.k < d.shape[0]:
            d = np.partition(d, self.k - 1)[: self.k]
        return float(d.mean())

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise DimensionError(
                f"expected shape (n, {self.feature_dim}), got {X.shape}"
            )
        # (n, m) distance matrix in one shot; fine at the scales this package targets.
        d2 = ((X[:, None, :] - self.references[None, :, :]) ** 2).sum(axis=2)
        d = np.sqrt(np.maximum(d2, 0.0))
        if self.k < d.shape[1]:
            d = np.partition(d, self.k - 1, axis=1)[:, : self.k]
        return d.mean(axis=1)

    def describe(self) -> str:
        return f"knn(k={self.k}, n_refs={self.references.shape[0]}, dim={self.feature_dim})"


def fit_knn(features, k: int = 5) -> KnnScorer:
    """Memorize the in-distribution features as the reference set."""
    return KnnScorer(np.asarray(features, dtype=np.float64), k)


def knn_score(scorer: KnnScorer, x) -> float:
    return scorer.score(x)


def save_knn(path: str, scorer: KnnScorer) -> None:
    dump_json_doc(
        path,
        {
            "schema": KNN_SCHEMA,
            "k": scorer.k,
            "dim": scorer.feature_dim,
            "references": scorer.references.tolist(),
        },
    )


def load_knn(path: str) -> KnnScorer:
    doc = load_json_doc(path, KNN_SCHEMA)
    k = doc.get("k")
    require(isinstance(k, int) and not isinstance(k, bool) and k >= 1,
            "k must be a positive integer", path=path)
    refs = doc.get("references")
    require(isinstance(refs, list) and refs, "references must be a non-empty list", path=path)
    dim = doc.get("dim")
    mat = []
    from ._ser import as_float_list

    for i, row in enumerate(refs):
        vals = as_float_list(row, f"references[{i}]", path=path)
        require(len(vals) == dim, f"references[{i}] must have dimension {dim}", path=path)
        mat.append(vals)
    try:
        return KnnScorer(np.array(mat), k)
    except InputError as e:
        from .errors import SchemaError

        raise SchemaError(f"inconsistent knn artifact: {e}", path=path) from e


class CommonAeScorer(OodScorer):
    """Reconstruction error of a single autoencoder trained on all ID classes pooled."""

    def __init__(self, model: MlpAutoencoder):
        self.model = model

    @property
    def feature_dim(self) -> int:
        return self.model.feature_dim

    def score(self, x) -> float:
        x = _check_vector(x, self.feature_dim)
        return float(reconstruction_errors(self.model, x[None, :])[0])

    def scores(self, X) -> np.ndarray:
        return reconstruction_errors(self.model, X)

    def describe(self) -> str:
        return f"common-ae(layer_dims={list(self.model.arch.layer_dims)})"


def fit_common_ae(features, arch: AeArchitecture, cfg: TrainConfig) -> CommonAeScorer:
    """Train one autoencoder on the pooled features of every ID class."""
    model, _ = train(init_autoencoder(arch, cfg.seed), features, cfg)
    return CommonAeScorer(model)


class EnsembleScorer(OodScorer):
    """The per-class ensemble cast into the scorer contract (min member error)."""

    def __init__(self, model: EnsembleModel):
        self.model = model

    @property
    def feature_dim(self) -> int:
        return self.model.feature_dim

    def score(self, x) -> float:
        x = _check_vector(x, self.feature_dim)
        return float(self.model.errors_matrix(x[None, :]).min())

    def scores(self, X) -> np.ndarray:
        return self.model.errors_matrix(X).min(axis=0)

    def describe(self) -> str:
        return f"ensemble({len(self.model.members)} members, dim={self.feature_dim})"


@dataclass(frozen=True)
class ScorerCalibration:
    """Chosen decision threshold for a scorer and its pseudo-OOD quality."""

    threshold: float
    f1: float
    fpr: float
    tpr: float
    n_positive: int
    n_negative: int
    n_candidates: int

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "f1": self.f1,
            "fpr": self.fpr,
            "tpr": self.tpr,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "n_candidates": self.n_candidates,
        }


def calibrate_scorer_threshold(
    fit_fn: Callable[[np.ndarray], OodScorer],
    features_by_class: Mapping[str, np.ndarray],
    holdout_fraction: float = 0.2,
    seed: int = 0,
    candidates: Optional[Sequence[float]] = None,
) -> ScorerCalibration:
    """Leave-one-class-out threshold search for scorers without per-class members.

    For each class in turn, a scorer is fit on the pooled training
    split of every other class; that class's held-out samples then act
    as pseudo-OOD positives while the other classes' held-out samples
    act as ID negatives. Candidate thresholds default to every observed
    score; F1 (OOD positive) decides, ties going to the smaller
    threshold.
    """
    classes = sorted(features_by_class)
    if len(classes) < 2:
        raise InputError("leave-one-class-out calibration needs at least two classes")
    train_map, holdout_map = split_for_calibration(features_by_class, holdout_fraction, seed)
    missing = [c for c in classes if c not in holdout_map]
    if missing:
        raise InputError(
            f"classes with no held-out samples (too few samples?): {missing!r}"
        )
    pairs: list[tuple[float, bool]] = []
    for held_out in classes:
        pooled = np.concatenate([train_map[c] for c in classes if c != held_out])
        scorer = fit_fn(pooled)
        for c in classes:
            s = scorer.scores(holdout_map[c])
            pairs.extend((float(v), c == held_out) for v in s)
    scores = np.array([s for s, _ in pairs])
    truth = np.array([t for _, t in pairs])
    if candidates is None:
        cand = np.unique(scores)
    else:
        cand = np.unique(np.asarray([float(c) for c in candidates]))
        if cand.size == 0:
            raise InputError("candidates must not be empty")
    best = None
    for thr in cand:
        pred = scores >= thr
        tp = int(np.sum(pred & truth))
        fp = int(np.sum(pred & ~truth))
        fn = int(np.sum(~pred & truth))
        tn = int(np.sum(~pred & ~truth))
        f1 = (2 * tp / (2 * tp + fp + fn)) if (2 * tp + fp + fn) > 0 else 0.0
        fpr = fp / (fp + tn) if (fp + tn) > 0 else 0.0
        tpr = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        if best is None or f1 > best[1]:  # strict: ties keep the smaller threshold
            best = (float(thr), f1, fpr, tpr)
    thr, f1, fpr, tpr = best
    return ScorerCalibration(
        threshold=thr,
        f1=f1,
        fpr=fpr,
        tpr=tpr,
        n_positive=int(truth.sum()),
        n_negative=int((~truth).sum()),
        n_candidates=int(cand.size),
    )
