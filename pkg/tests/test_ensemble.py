"""Per-class autoencoder ensemble: voting, calibration, persistence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owssd import (
    AeArchitecture,
    BoundingBox,
    CalibrationError,
    ClassCatalog,
    DimensionError,
    EnsembleModel,
    FeatureRecord,
    InputError,
    MlpAutoencoder,
    TrainConfig,
    TrainingError,
    calibrate_threshold,
    classify_feature,
    classify_proposals,
    default_mu_candidates,
    derive_member_seed,
    load_ensemble,
    ood_score,
    save_ensemble,
    split_for_calibration,
    sweep_thresholds,
    train_ensemble,
)
from owssd.ensemble import OodVerdict


def centered_member(center, dim=4):
    """Member whose reconstruction error is exactly mean((x - center)^2).

    Zero weights reconstruct the normalization mean, so the model acts
    as a radial scorer around ``center``.
    """
    arch = AeArchitecture((dim, dim, dim))
    ws = [np.zeros((dim, dim)), np.zeros((dim, dim))]
    bs = [np.zeros(dim), np.zeros(dim)]
    return MlpAutoencoder(arch, ws, bs, np.full(dim, float(center)), np.ones(dim))


def two_member_model(mu=0.1):
    cat = ClassCatalog(("alpha", "beta"))
    members = {"alpha": centered_member(0.0), "beta": centered_member(4.0)}
    return EnsembleModel(cat, members, mu=mu)


class TestMemberSeeds:
    def test_deterministic_and_distinct(self):
        s1 = derive_member_seed(0, 0)
        assert s1 == derive_member_seed(0, 0)
        seeds = {derive_member_seed(7, i) for i in range(100)}
        assert len(seeds) == 100
        assert all(0 <= s < 2**64 for s in seeds)

    def test_independent_of_other_members(self):
        # Member 3's seed does not depend on how many members exist.
        assert derive_member_seed(42, 3) == derive_member_seed(42, 3)
        assert derive_member_seed(42, 3) != derive_member_seed(43, 3)


class TestModelValidation:
    def test_members_must_match_catalog(self):
        cat = ClassCatalog(("alpha", "beta"))
        with pytest.raises(InputError):
            EnsembleModel(cat, {"alpha": centered_member(0.0)})
        with pytest.raises(InputError):
            EnsembleModel(cat, {"alpha": centered_member(0.0),
                                "beta": centered_member(1.0),
                                "gamma": centered_member(2.0)})

    def test_mu_positive(self):
        with pytest.raises(InputError):
            two_member_model(mu=0.0)
        with pytest.raises(InputError):
            two_member_model(mu=-1.0)

    def test_override_rules(self):
        cat = ClassCatalog(("alpha", "beta"))
        members = {"alpha": centered_member(0.0), "beta": centered_member(4.0)}
        m = EnsembleModel(cat, members, mu=0.5, mu_overrides={"beta": 0.2})
        assert m.threshold_for("alpha") == 0.5
        assert m.threshold_for("beta") == 0.2
        with pytest.raises(InputError):
            EnsembleModel(cat, members, mu=0.5, mu_overrides={"gamma": 0.2})
        with pytest.raises(InputError):
            m.threshold_for("gamma")

    def test_with_mu_returns_new_model(self):
        m = two_member_model(mu=0.1)
        m2 = m.with_mu(0.3)
        assert m.mu == 0.1 and m2.mu == 0.3
        assert m2.members is not None

    def test_verdict_consistency_enforced(self):
        with pytest.raises(InputError):
            OodVerdict(is_ood=True, claims=("alpha",), errors={"alpha": 0.1})
        with pytest.raises(InputError):
            OodVerdict(is_ood=False, claims=(), errors={"alpha": 0.1})


class TestVoting:
    def test_boundary_error_is_not_a_claim(self):
        # x = 0.5 everywhere against the zero-centered member: R = 0.25
        # exactly. At mu = 0.25 the strict < rule must refuse the claim.
        m = two_member_model(mu=0.25)
        x = np.full(4, 0.5)
        v = classify_feature(m, x)
        assert v.errors["alpha"] == 0.25
        assert "alpha" not in v.claims
        v2 = classify_feature(m.with_mu(0.2500001), x)
        assert "alpha" in v2.claims
        assert not v2.is_ood

    def test_any_member_claim_wins(self):
        m = two_member_model(mu=0.5)
        near_beta = np.full(4, 4.1)
        v = classify_feature(m, near_beta)
        assert v.claims == ("beta",)
        assert not v.is_ood

    def test_far_from_all_is_ood(self):
        m = two_member_model(mu=0.5)
        v = classify_feature(m, np.full(4, 2.0))  # 4.0 from alpha, 4.0 from beta
        assert v.is_ood
        assert v.claims == ()
        assert set(v.errors) == {"alpha", "beta"}

    def test_claims_in_catalog_order(self):
        cat = ClassCatalog(("zeta", "alpha"))  # deliberately unsorted
        members = {"zeta": centered_member(0.0), "alpha": centered_member(0.0)}
        m = EnsembleModel(cat, members, mu=1.0)
        v = classify_feature(m, np.zeros(4))
        assert v.claims == ("zeta", "alpha")

    def test_ood_score_is_min_error(self):
        m = two_member_model()
        x = np.full(4, 1.0)
        assert ood_score(m, x) == pytest.approx(min(
            classify_feature(m, x).errors.values()))

    def test_dimension_check(self):
        m = two_member_model()
        with pytest.raises(DimensionError):
            classify_feature(m, np.zeros(5))


class TestClassifyProposals:
    def records(self, X):
        return [
            FeatureRecord(f"img_{i}", BoundingBox(0, 0, 1 + i, 1 + i), "proposal",
                          x, score=0.5)
            for i, x in enumerate(X)
        ]

    def test_matches_per_sample_filter(self):
        m = two_member_model(mu=0.5)
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 5, size=(40, 4))
        recs = self.records(X)
        batch = classify_proposals(m, recs)
        expected = [r for r in recs if classify_feature(m, r.feature).is_ood]
        assert [(d.image_id, d.box) for d in batch] == [
            (r.image_id, r.box) for r in expected
        ]
        assert all(d.class_label == "unknown" for d in batch)
        assert all(d.score == 0.5 for d in batch)

    def test_requires_scores(self):
        m = two_member_model()
        rec = FeatureRecord("img", BoundingBox(0, 0, 1, 1), "proposal", np.zeros(4))
        with pytest.raises(InputError) as exc:
            classify_proposals(m, [rec])
        assert "score" in str(exc.value)

    def test_dimension_error_names_proposal(self):
        m = two_member_model()
        good = FeatureRecord("img", BoundingBox(0, 0, 1, 1), "proposal",
                             np.zeros(4), score=0.5)
        bad = FeatureRecord("img", BoundingBox(0, 0, 1, 1), "proposal",
                            np.zeros(3), score=0.5)
        with pytest.raises(DimensionError) as exc:
            classify_proposals(m, [good, bad])
        assert "1" in str(exc.value)

    def test_empty_input(self):
        assert classify_proposals(two_member_model(), []) == []


def blob(center, n, dim, seed, sigma=0.05):
    rng = np.random.default_rng(seed)
    return center + sigma * rng.standard_normal((n, dim))


class TestTrainEnsemble:
    def test_catalog_defaults_to_sorted_keys(self):
        feats = {
            "b": blob(1.0, 8, 4, 1),
            "a": blob(-1.0, 8, 4, 2),
        }
        m = train_ensemble(feats, AeArchitecture((4, 2, 4)),
                           TrainConfig(epochs=2, seed=0))
        assert m.catalog.id_classes == ("a", "b")

    def test_sentinel_class_does_not_disturb_existing_members(self):
        feats = {
            "alpha": blob(1.0, 12, 4, 1),
            "beta": blob(-1.0, 12, 4, 2),
        }
        arch = AeArchitecture((4, 2, 4))
        cfg = TrainConfig(epochs=5, batch_size=4, seed=9)
        base = train_ensemble(feats, arch, cfg)
        feats["zz_sentinel"] = blob(3.0, 12, 4, 3)  # sorts after alpha/beta
        extended = train_ensemble(feats, arch, cfg)
        for c in ("alpha", "beta"):
            for wa, wb in zip(base.members[c].weights, extended.members[c].weights):
                assert np.array_equal(wa, wb)
            for ba, bb in zip(base.members[c].biases, extended.members[c].biases):
                assert np.array_equal(ba, bb)

    def test_worker_count_does_not_change_result(self):
        feats = {f"c{i}": blob(i, 10, 4, i) for i in range(4)}
        arch = AeArchitecture((4, 2, 4))
        cfg = TrainConfig(epochs=3, batch_size=4, seed=5)
        seq = train_ensemble(feats, arch, cfg, n_workers=1)
        par = train_ensemble(feats, arch, cfg, n_workers=4)
        for c in feats:
            assert all(np.array_equal(a, b) for a, b in
                       zip(seq.members[c].weights, par.members[c].weights))

    def test_missing_class_features_rejected(self):
        cat = ClassCatalog(("a", "b"))
        with pytest.raises(InputError):
            train_ensemble({"a": blob(0, 4, 4, 0)}, AeArchitecture((4, 2, 4)),
                           TrainConfig(epochs=1), catalog=cat)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            train_ensemble({"a": blob(0, 4, 3, 0)}, AeArchitecture((4, 2, 4)),
                           TrainConfig(epochs=1))

    def test_training_failure_names_the_class(self):
        feats = {"alpha": blob(0, 8, 4, 0) * 10}
        cfg = TrainConfig(epochs=50, batch_size=2, seed=0, optimizer="sgd",
                          learning_rate=1e12)
        with np.errstate(all="ignore"), pytest.raises(TrainingError) as exc:
            train_ensemble(feats, AeArchitecture((4, 2, 4)), cfg)
        assert "alpha" in str(exc.value)


class TestSplit:
    def test_fraction_and_determinism(self):
        feats = {"a": np.arange(40, dtype=float).reshape(10, 4)}
        tr1, ho1 = split_for_calibration(feats, 0.2, seed=3)
        tr2, ho2 = split_for_calibration(feats, 0.2, seed=3)
        assert np.array_equal(tr1["a"], tr2["a"])
        assert np.array_equal(ho1["a"], ho2["a"])
        assert tr1["a"].shape == (8, 4)
        assert ho1["a"].shape == (2, 4)

    def test_singleton_class_goes_to_train(self):
        feats = {"a": np.ones((1, 4))}
        tr, ho = split_for_calibration(feats, 0.5, seed=0)
        assert tr["a"].shape == (1, 4)
        assert "a" not in ho

    def test_zero_fraction(self):
        feats = {"a": np.ones((5, 4))}
        tr, ho = split_for_calibration(feats, 0.0, seed=0)
        assert tr["a"].shape == (5, 4)
        assert ho == {}

    def test_both_sides_nonempty_when_possible(self):
        feats = {"a": np.ones((2, 4))}
        tr, ho = split_for_calibration(feats, 0.99, seed=0)
        assert tr["a"].shape[0] == 1
        assert ho["a"].shape[0] == 1

    def test_fraction_validated(self):
        with pytest.raises(InputError):
            split_for_calibration({"a": np.ones((2, 2))}, 1.0)
        with pytest.raises(InputError):
            split_for_calibration({"a": np.ones((2, 2))}, -0.1)

    @given(st.integers(2, 30), st.floats(0.05, 0.9), st.integers(0, 5))
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, frac, seed):
        X = np.arange(n * 3, dtype=float).reshape(n, 3)
        tr, ho = split_for_calibration({"c": X}, frac, seed=seed)
        rows = {tuple(r) for r in tr["c"]} | {tuple(r) for r in ho.get("c", np.zeros((0, 3)))}
        assert rows == {tuple(r) for r in X}
        assert tr["c"].shape[0] >= 1
        n_ho = 0 if "c" not in ho else ho["c"].shape[0]
        assert tr["c"].shape[0] + n_ho == n


class TestCalibration:
    def test_separable_case_maximizes_f1_in_gap(self):
        m = two_member_model()
        labeled = {
            "alpha": blob(0.0, 20, 4, 1, sigma=0.2),
            "beta": blob(4.0, 20, 4, 2, sigma=0.2),
        }
        # own-class errors ~0.04, cross-class errors ~16
        rep = calibrate_threshold(m, labeled, candidates=[0.01, 1.0, 100.0])
        assert rep.chosen_mu == 1.0
        assert max(rep.f1) == 1.0
        assert rep.n_pairs == 2 * 40
        assert rep.n_positive == 40

    def test_ties_resolve_to_smaller_mu(self):
        m = two_member_model()
        labeled = {
            "alpha": blob(0.0, 10, 4, 1, sigma=0.01),
            "beta": blob(4.0, 10, 4, 2, sigma=0.01),
        }
        rep = calibrate_threshold(m, labeled, candidates=[0.5, 1.0, 2.0])
        assert rep.chosen_mu == 0.5  # all three are perfect in the gap

    def test_needs_two_classes(self):
        cat = ClassCatalog(("solo",))
        m = EnsembleModel(cat, {"solo": centered_member(0.0)})
        with pytest.raises(CalibrationError):
            calibrate_threshold(m, {"solo": np.zeros((3, 4))})

    def test_missing_class_features(self):
        m = two_member_model()
        with pytest.raises(CalibrationError):
            calibrate_threshold(m, {"alpha": np.zeros((3, 4))})

    def test_candidate_validation(self):
        m = two_member_model()
        labeled = {"alpha": np.zeros((2, 4)), "beta": np.full((2, 4), 4.0)}
        with pytest.raises(InputError):
            calibrate_threshold(m, labeled, candidates=[])
        with pytest.raises(InputError):
            calibrate_threshold(m, labeled, candidates=[-0.5])

    def test_default_candidates(self):
        cands = default_mu_candidates()
        assert 0.1 in cands and 0.05 in cands and 0.2 in cands
        assert cands[0] == pytest.approx(0.001)
        assert cands[-1] == pytest.approx(1.0)
        assert list(cands) == sorted(cands)


class TestSweep:
    def test_rates_non_increasing_in_mu(self):
        m = two_member_model()
        rng = np.random.default_rng(0)
        X_id = blob(0.0, 30, 4, 1, sigma=0.3)
        X_ood = rng.uniform(1.5, 2.5, size=(30, 4))
        X = np.vstack([X_id, X_ood])
        truth = [False] * 30 + [True] * 30
        rows = sweep_thresholds(m, X, truth, mus=[0.05, 0.1, 0.2, 1.0, 10.0])
        recalls = [r["recall"] for r in rows]
        fprs = [r["fpr"] for r in rows]
        assert all(a >= b for a, b in zip(recalls, recalls[1:]))
        assert all(a >= b for a, b in zip(fprs, fprs[1:]))

    def test_row_contents(self):
        m = two_member_model()
        X = np.vstack([np.zeros((2, 4)), np.full((2, 4), 2.0)])
        rows = sweep_thresholds(m, X, [False, False, True, True], mus=[0.5])
        r = rows[0]
        assert r["mu"] == 0.5
        assert r["tp"] == 2 and r["tn"] == 2 and r["fp"] == 0 and r["fn"] == 0
        assert r["f1"] == 1.0 and r["recall"] == 1.0 and r["fpr"] == 0.0

    def test_validation(self):
        m = two_member_model()
        with pytest.raises(InputError):
            sweep_thresholds(m, np.zeros((2, 4)), [True, False], mus=[])
        with pytest.raises(InputError):
            sweep_thresholds(m, np.zeros((2, 4)), [True], mus=[0.1])
        with pytest.raises(InputError):
            sweep_thresholds(m, np.zeros((2, 4)), [True, False], mus=[0.0])


class TestPersistence:
    def test_round_trip(self, tmp_path):
        feats = {"a": blob(1.0, 10, 4, 1), "b": blob(-1.0, 10, 4, 2)}
        m = train_ensemble(feats, AeArchitecture((4, 2, 4)),
                           TrainConfig(epochs=3, seed=0))
        m = m.with_mu(0.07)
        m.meta["note"] = "unit"
        p = str(tmp_path / "ens.json")
        save_ensemble(p, m)
        m2 = load_ensemble(p)
        assert m2.catalog == m.catalog
        assert m2.mu == 0.07
        assert m2.meta == {"note": "unit"}
        for c in feats:
            assert all(np.array_equal(x, y) for x, y in
                       zip(m.members[c].weights, m2.members[c].weights))

    def test_dim_cross_check(self, tmp_path):
        import json

        feats = {"a": blob(0.0, 6, 4, 1), "b": blob(1.0, 6, 4, 2)}
        m = train_ensemble(feats, AeArchitecture((4, 2, 4)),
                           TrainConfig(epochs=1, seed=0))
        p = tmp_path / "ens.json"
        save_ensemble(str(p), m)
        doc = json.loads(p.read_text())
        doc["dim"] = 8
        p.write_text(json.dumps(doc))
        from owssd import SchemaError

        with pytest.raises(SchemaError):
            load_ensemble(str(p))
