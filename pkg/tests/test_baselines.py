"""Reference OOD scorers and leave-one-class-out threshold calibration."""

import numpy as np
import pytest

from owssd import (
    AeArchitecture,
    ClassCatalog,
    DimensionError,
    EnsembleModel,
    EnsembleScorer,
    InputError,
    KnnScorer,
    TrainConfig,
    calibrate_scorer_threshold,
    fit_common_ae,
    fit_knn,
    knn_score,
    load_knn,
    save_knn,
)
from owssd.baselines import CommonAeScorer
from test_ensemble import centered_member


class TestKnn:
    def test_hand_computed_mean_distance(self):
        scorer = fit_knn([[0.0], [1.0], [3.0]], k=2)
        # nearest two to 0: distances 0 and 1
        assert scorer.score([0.0]) == pytest.approx(0.5, abs=0)
        # nearest two to 3: distances 0 and 2
        assert scorer.score([3.0]) == pytest.approx(1.0, abs=0)

    def test_k_equals_n_uses_all(self):
        scorer = fit_knn([[0.0], [2.0]], k=2)
        assert scorer.score([1.0]) == pytest.approx(1.0)

    def test_k_validated(self):
        with pytest.raises(InputError):
            fit_knn([[0.0], [1.0]], k=3)  # k > n
        with pytest.raises(InputError):
            fit_knn([[0.0]], k=0)
        with pytest.raises(InputError):
            fit_knn(np.zeros((0, 2)), k=1)

    def test_vectorized_matches_loop(self):
        rng = np.random.default_rng(0)
        refs = rng.standard_normal((50, 8))
        scorer = fit_knn(refs, k=5)
        X = rng.standard_normal((20, 8))
        fast = scorer.scores(X)
        slow = [scorer.score(x) for x in X]
        assert fast == pytest.approx(slow, abs=1e-12)

    def test_dimension_checked(self):
        scorer = fit_knn(np.zeros((3, 4)), k=1)
        with pytest.raises(DimensionError):
            scorer.score(np.zeros(3))
        with pytest.raises(DimensionError):
            scorer.scores(np.zeros((2, 3)))

    def test_is_ood_inclusive_threshold(self):
        scorer = fit_knn([[0.0]], k=1)
        assert scorer.is_ood([2.0], threshold=2.0)  # score == threshold -> OOD
        assert not scorer.is_ood([2.0], threshold=2.0001)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        scorer = fit_knn(rng.standard_normal((7, 3)), k=2)
        p = str(tmp_path / "knn.json")
        save_knn(p, scorer)
        loaded = load_knn(p)
        assert loaded.k == 2
        assert np.array_equal(loaded.references, scorer.references)
        x = rng.standard_normal(3)
        assert knn_score(loaded, x) == knn_score(scorer, x)

    def test_describe(self):
        assert "k=2" in fit_knn(np.zeros((3, 4)), k=2).describe()


class TestCommonAe:
    def test_score_is_reconstruction_error(self):
        member = centered_member(1.0)  # R(x) = mean((x - 1)^2)
        scorer = CommonAeScorer(member)
        assert scorer.score(np.full(4, 3.0)) == pytest.approx(4.0, abs=0)
        assert scorer.feature_dim == 4

    def test_fit_trains_on_pooled_data(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((60, 4)) * 0.1
        scorer = fit_common_ae(X, AeArchitecture((4, 2, 4)),
                               TrainConfig(epochs=30, batch_size=8, seed=0))
        near = scorer.scores(X).mean()
        far = scorer.score(np.full(4, 5.0))
        assert far > near

    def test_scores_batch(self):
        scorer = CommonAeScorer(centered_member(0.0))
        X = np.array([[1.0, 1, 1, 1], [2.0, 2, 2, 2]])
        assert scorer.scores(X) == pytest.approx([1.0, 4.0], abs=0)


class TestEnsembleScorer:
    def test_min_member_error(self):
        cat = ClassCatalog(("a", "b"))
        m = EnsembleModel(cat, {"a": centered_member(0.0),
                                "b": centered_member(4.0)})
        scorer = EnsembleScorer(m)
        # x = 1: errors are 1 (a) and 9 (b)
        assert scorer.score(np.full(4, 1.0)) == pytest.approx(1.0, abs=0)
        assert "members" in scorer.describe()


class TestLooCalibration:
    def separable_features(self):
        return {
            "a": 0.0 + 0.05 * np.random.default_rng(1).standard_normal((20, 4)),
            "b": 5.0 + 0.05 * np.random.default_rng(2).standard_normal((20, 4)),
            "c": -5.0 + 0.05 * np.random.default_rng(3).standard_normal((20, 4)),
        }

    def test_separable_classes_reach_perfect_f1(self):
        cal = calibrate_scorer_threshold(
            lambda feats: fit_knn(feats, k=3), self.separable_features(), seed=0
        )
        assert cal.f1 == 1.0
        assert cal.tpr == 1.0
        assert cal.fpr == 0.0
        assert cal.n_positive > 0 and cal.n_negative > 0

    def test_needs_two_classes(self):
        with pytest.raises(InputError):
            calibrate_scorer_threshold(lambda f: fit_knn(f, k=1),
                                       {"a": np.zeros((4, 2))})

    def test_singleton_class_cannot_hold_out(self):
        feats = {"a": np.zeros((1, 2)), "b": np.ones((5, 2))}
        with pytest.raises(InputError) as exc:
            calibrate_scorer_threshold(lambda f: fit_knn(f, k=1), feats)
        assert "held-out" in str(exc.value)

    def test_explicit_candidates(self):
        cal = calibrate_scorer_threshold(
            lambda feats: fit_knn(feats, k=3),
            self.separable_features(),
            candidates=[0.001, 2.0, 50.0],
        )
        assert cal.threshold == 2.0  # the only candidate inside the gap
        assert cal.n_candidates == 3
        with pytest.raises(InputError):
            calibrate_scorer_threshold(lambda f: fit_knn(f, k=1),
                                       self.separable_features(), candidates=[])

    def test_deterministic(self):
        feats = self.separable_features()
        a = calibrate_scorer_threshold(lambda f: fit_knn(f, k=3), feats, seed=4)
        b = calibrate_scorer_threshold(lambda f: fit_knn(f, k=3), feats, seed=4)
        assert a == b
