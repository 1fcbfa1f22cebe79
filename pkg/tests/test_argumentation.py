import numpy as np
import pytest

from conftest import make_catalog, space_from_tables

from argrec.argumentation import (
    build_taf,
    check_feedback_monotonicity,
    check_weak_balance,
    check_weak_monotonicity,
    mute,
    taf_to_json,
)
from argrec.model import ModelConfig, predict
from argrec.synthetic import random_catalog, random_situation, random_space


class TestBuildTaf:
    def test_sign_partition(self, worked_instance):
        space, cat, cfg = worked_instance
        taf = build_taf(predict(0, 0, {}, space, cat, cfg), cat)
        assert taf.supports == {0}
        assert taf.attacks == {1}
        assert taf.neutrals == frozenset()
        assert taf.rec_strength == pytest.approx(0.125)

    def test_zero_rating_is_neutral(self, worked_instance):
        space, cat, cfg = worked_instance
        space.features[0] = 0.0
        taf = build_taf(predict(0, 0, {}, space, cat, cfg), cat)
        assert 0 in taf.neutrals

    def test_epsilon_band(self, worked_instance):
        space, cat, cfg = worked_instance
        space.features[0] = [0.005, 0.0]
        taf = build_taf(predict(0, 0, {}, space, cat, cfg), cat, neutral_eps=0.01)
        assert 0 in taf.neutrals
        taf0 = build_taf(predict(0, 0, {}, space, cat, cfg), cat, neutral_eps=0.0)
        assert 0 in taf0.supports

    def test_negative_eps_rejected(self, worked_instance):
        space, cat, cfg = worked_instance
        with pytest.raises(ValueError):
            build_taf(predict(0, 0, {}, space, cat, cfg), cat, neutral_eps=-0.1)

    def test_partition_covers_item_features(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            cat = random_catalog(rng)
            cfg = ModelConfig(dim=3)
            space = random_space(rng, cat, 3)
            item = int(rng.integers(cat.n_items))
            b = predict(0, item, random_situation(rng, cat), space, cat, cfg)
            taf = build_taf(b, cat)
            feats = set(cat.item_feature_list(item))
            assert taf.supports | taf.attacks | taf.neutrals == feats
            assert len(taf.supports) + len(taf.attacks) + len(taf.neutrals) == len(feats)
            assert taf.supports.isdisjoint(taf.attacks)
            assert taf.supports.isdisjoint(taf.neutrals)
            assert taf.attacks.isdisjoint(taf.neutrals)

    def test_strengths_mirror_breakdown_bitwise(self):
        rng = np.random.default_rng(1)
        cat = random_catalog(rng)
        cfg = ModelConfig(dim=3)
        space = random_space(rng, cat, 3)
        b = predict(0, 0, random_situation(rng, cat), space, cat, cfg)
        taf = build_taf(b, cat)
        assert taf.strength == b.feature_ratings
        assert taf.rec_strength == b.rating

    def test_export_schema(self, worked_instance):
        space, cat, cfg = worked_instance
        taf = build_taf(predict(0, 0, {}, space, cat, cfg), cat)
        doc = taf_to_json(taf, cat)
        assert doc["item"] == "i0"
        assert doc["rec_strength"] == pytest.approx(0.125)
        assert {a["polarity"] for a in doc["arguments"]} == {"+", "-"}
        arg = next(a for a in doc["arguments"] if a["feature"] == "a")
        assert arg["weight"] == pytest.approx(0.5)
        assert arg["strength"] == pytest.approx(0.5)


class TestMute:
    def test_empty_mute_is_identity(self, worked_instance):
        space, cat, cfg = worked_instance
        base = predict(0, 0, {}, space, cat, cfg)
        muted = mute(0, 0, {}, space, cat, cfg, set())
        assert muted.rating == base.rating
        assert muted.feature_ratings == base.feature_ratings

    def test_muting_attacker_raises(self, worked_instance):
        space, cat, cfg = worked_instance
        muted = mute(0, 0, {}, space, cat, cfg, {1})
        assert muted.rating == pytest.approx(0.25, abs=1e-12)
        assert muted.feature_ratings[1] == 0.0

    def test_muting_supporter_lowers(self, worked_instance):
        space, cat, cfg = worked_instance
        muted = mute(0, 0, {}, space, cat, cfg, {0})
        assert muted.rating == pytest.approx(-0.125, abs=1e-12)

    def test_muting_everything_zeroes(self, worked_instance):
        space, cat, cfg = worked_instance
        muted = mute(0, 0, {}, space, cat, cfg, {0, 1})
        assert muted.rating == 0.0

    def test_mute_preserves_importances(self, worked_instance):
        space, cat, cfg = worked_instance
        base = predict(0, 0, {}, space, cat, cfg)
        muted = mute(0, 0, {}, space, cat, cfg, {1})
        assert muted.type_importance == base.type_importance

    def test_mute_idempotent(self):
        rng = np.random.default_rng(2)
        cat = random_catalog(rng)
        cfg = ModelConfig(dim=3)
        space = random_space(rng, cat, 3)
        item = 0
        feats = cat.item_feature_list(item)
        mutes = {feats[0]}
        once = mute(0, item, {}, space, cat, cfg, mutes)
        # the muted instance re-muted with the same set is unchanged
        twice = mute(0, item, {}, space, cat, cfg, mutes)
        assert once.rating == twice.rating
        assert once.feature_ratings == twice.feature_ratings

    def test_mute_off_item_rejected(self, worked_instance):
        space, cat, cfg = worked_instance
        with pytest.raises(ValueError, match="not on item"):
            mute(0, 0, {}, space, cat, cfg, {42})


class TestAxiomSuites:
    def test_weak_balance_clean(self):
        report = check_weak_balance(trials=300, seed=0)
        assert report.passed
        assert report.trials == 300

    def test_weak_monotonicity_clean(self):
        report = check_weak_monotonicity(trials=300, seed=1)
        assert report.passed

    def test_feedback_monotonicity_clean(self):
        report = check_feedback_monotonicity(trials=300, seed=2)
        assert report.passed

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            check_weak_balance(trials=0)

    def test_balance_covers_all_polarities(self, worked_instance):
        space, cat, cfg = worked_instance
        # single supporter
        single = make_catalog({"i0": {"ta": ["a"]}})
        s_space = space_from_tables(single, users=[[1.0, 0.0]], features=[[0.5, 0.0]],
                                    types=[[1.0, 1.0]])
        b = predict(0, 0, {}, s_space, single, cfg)
        assert b.rating == pytest.approx(0.5) and b.rating > 0
        # single attacker
        s_space.features[0] = [-0.3, 0.0]
        b = predict(0, 0, {}, s_space, single, cfg)
        assert b.rating == pytest.approx(-0.3) and b.rating < 0
        # single neutral
        s_space.features[0] = [0.0, 0.0]
        b = predict(0, 0, {}, s_space, single, cfg)
        assert b.rating == 0.0

    def test_feedback_delta_rule(self, worked_instance):
        space, cat, cfg = worked_instance
        base = predict(0, 0, {}, space, cat, cfg)
        # raise the attacker by 0.5: rating climbs by 0.5 * 0.5 / 1
        up = predict(0, 0, {}, space, cat, cfg, overrides={(0, 1): base.feature_ratings[1] + 0.5})
        assert up.rating - base.rating == pytest.approx(0.25, abs=1e-12)
        assert up.rating == pytest.approx(0.375, abs=1e-12)
        # delta zero changes nothing
        same = predict(0, 0, {}, space, cat, cfg, overrides={(0, 1): base.feature_ratings[1]})
        assert same.rating == base.rating
        # lower the supporter by 0.2
        down = predict(0, 0, {}, space, cat, cfg, overrides={(0, 0): base.feature_ratings[0] - 0.2})
        assert down.rating - base.rating == pytest.approx(-0.1, abs=1e-12)

    def test_sign_flip_is_caught(self, monkeypatch):
        import argrec.argumentation as arg

        real_predict = arg.predict

        def flipped(*args, **kwargs):
            b = real_predict(*args, **kwargs)
            b.rating = -b.rating
            return b

        monkeypatch.setattr(arg, "predict", flipped)
        report = check_weak_balance(trials=50, seed=3)
        assert not report.passed
        assert report.counterexamples
        dump = report.counterexamples[0]
        assert {"variant", "user", "item", "polarity", "rating"} <= set(dump)
