import numpy as np
import pytest

from conftest import make_catalog, space_from_tables

from argrec.argumentation import build_taf
from argrec.explanation import (
    FeedbackStore,
    JournalEntry,
    apply_feedback,
    classify_scenario,
    contrastive_explanation,
    plan_feedback,
    template_explanation,
)
from argrec.model import ModelConfig, predict
from argrec.synthetic import random_catalog, random_situation, random_space


class TestScenario:
    @pytest.mark.parametrize(
        "rating,expected",
        [(0.9, "strong_recommendation"), (0.5, "strong_recommendation"),
         (0.2, "weak_recommendation"), (0.0, "weak_recommendation"),
         (-0.4, "not_recommended")],
    )
    def test_thresholds(self, rating, expected):
        assert classify_scenario(rating, 0.0, 0.5) == expected

    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            classify_scenario(0.0, 0.5, 0.5)


def build_item(features):
    """One item with one feature per entry: (name, type, rating). User vec is (1, 0)."""
    items = {"i0": {}}
    for name, type_name, _ in features:
        items["i0"].setdefault(type_name, []).append(name)
    cat = make_catalog(items)
    rows = []
    for type_name, names in items["i0"].items():
        for name in names:
            rating = next(r for n, _, r in features if n == name)
            rows.append([rating, 0.0])
    space = space_from_tables(cat, users=[[1.0, 0.0]], features=rows,
                              types=[[0.5, 0.5]] * cat.n_types)
    return cat, space


class TestTemplates:
    def explain(self, features, **kwargs):
        cat, space = build_item(features)
        cfg = ModelConfig(dim=2)
        b = predict(0, 0, {}, space, cat, cfg)
        taf = build_taf(b, cat)
        return template_explanation(b, taf, cat, **kwargs), b

    def test_strong_cites_top_two_supporters(self):
        exp, _ = self.explain(
            [("a", "t1", 0.6), ("c", "t2", 0.4), ("d", "t3", 0.1)],
            scenario="strong_recommendation",
        )
        assert [arg.feature for arg in exp.cited] == ["a", "c"]
        assert all(arg.polarity == "+" for arg in exp.cited)
        assert "a (t1)" in exp.text and "c (t2)" in exp.text

    def test_weak_cites_supporter_then_attacker(self):
        exp, _ = self.explain(
            [("a", "t1", 0.3), ("b", "t2", -0.25)], scenario="weak_recommendation"
        )
        assert [arg.feature for arg in exp.cited] == ["a", "b"]
        assert [arg.polarity for arg in exp.cited] == ["+", "-"]
        assert "although you dislike b" in exp.text

    def test_not_recommended_cites_two_attackers(self):
        exp, _ = self.explain(
            [("a", "t1", -0.6), ("b", "t2", -0.7), ("c", "t3", 0.1)],
            scenario="not_recommended",
        )
        assert [arg.feature for arg in exp.cited] == ["b", "a"]

    def test_single_feature_strong_cites_one(self):
        exp, _ = self.explain([("a", "t1", 0.8)], scenario="strong_recommendation")
        assert [arg.feature for arg in exp.cited] == ["a"]

    def test_cited_are_item_features_with_taf_polarity(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            cat = random_catalog(rng)
            cfg = ModelConfig(dim=3)
            space = random_space(rng, cat, 3)
            item = int(rng.integers(cat.n_items))
            b = predict(0, item, random_situation(rng, cat), space, cat, cfg)
            taf = build_taf(b, cat)
            exp = template_explanation(b, taf, cat)
            feats = set(cat.item_feature_list(item))
            for arg in exp.cited:
                assert arg.feature_idx in feats
                assert arg.polarity == taf.polarity(arg.feature_idx)

    def test_context_included_when_available(self):
        cat = make_catalog({"i0": {"t": ["a"]}}, schema={"mood": ["calm"], "place": ["home"]})
        cd = cat.condition_index("place", "home")
        space = space_from_tables(
            cat, users=[[1.0, 0.0]], features=[[0.4, 0.0]],
            types=[[0.5, 0.5]], factors=[[0.1, 0.0], [2.0, 0.0]],
        )
        cfg = ModelConfig(dim=2)
        sit = {0: cat.condition_index("mood", "calm"), 1: cd}
        b = predict(0, 0, sit, space, cat, cfg)
        exp = template_explanation(b, build_taf(b, cat), cat)
        assert exp.top_context[0] == "place"
        assert exp.top_context[1] == "home"
        assert "place = home" in exp.text

    def test_no_features_rejected(self, worked_instance):
        space, cat, cfg = worked_instance
        b = predict(0, 0, {}, space, cat, cfg)
        b.feature_ratings = {}
        with pytest.raises(ValueError, match="no features"):
            template_explanation(b, build_taf(b, cat), cat)

    def test_export_schema(self):
        exp, _ = self.explain([("a", "t1", 0.9)])
        doc = exp.to_dict()
        assert set(doc) == {"scenario", "context", "arguments", "text"}
        assert doc["arguments"][0]["feature"] == "a"


def two_item_catalog():
    cat = make_catalog(
        {"A": {"genre": ["action"]}, "B": {"genre": ["drama"]}},
    )
    space = space_from_tables(
        cat, users=[[1.0, 0.0]], features=[[0.8, 0.0], [-0.5, 0.0]],
        types=[[0.5, 0.5]],
    )
    return cat, space


class TestContrastive:
    def test_two_movie_example(self):
        cat, space = two_item_catalog()
        cfg = ModelConfig(dim=2)
        exp = contrastive_explanation(0, {}, [0, 1], space, cat, cfg)
        assert exp.contrast["recommended"] == "A"
        assert exp.contrast["rejected"] == "B"
        assert exp.contrast["preferred_feature"] == "action"
        assert exp.contrast["contrasted_feature"] == "drama"
        assert not exp.contrast["cross_type_fallback"]
        assert exp.text == (
            "We recommend A instead of B because you prefer action. "
            "A is action while B is drama."
        )

    def test_tie_breaks_to_lowest_item(self):
        cat = make_catalog({"A": {"t": ["x"]}, "B": {"t": ["y"]}, "C": {"t": ["z"]}})
        space = space_from_tables(
            cat, users=[[1.0, 0.0]],
            features=[[0.5, 0.0], [0.5, 0.0], [-0.5, 0.0]], types=[[0.5, 0.5]],
        )
        exp = contrastive_explanation(0, {}, [0, 1, 2], space, cat, ModelConfig(dim=2))
        assert exp.contrast["recommended"] == "A"

    def test_fallback_across_types_flagged(self):
        cat = make_catalog({"A": {"genre": ["action"]}, "B": {"price": ["steep"]}})
        space = space_from_tables(
            cat, users=[[1.0, 0.0]], features=[[0.8, 0.0], [-0.5, 0.0]],
            types=[[0.5, 0.5]] * cat.n_types,
        )
        exp = contrastive_explanation(0, {}, [0, 1], space, cat, ModelConfig(dim=2))
        assert exp.contrast["cross_type_fallback"]
        assert "(Compared across feature types.)" in exp.text

    def test_requires_two_candidates(self):
        cat, space = two_item_catalog()
        with pytest.raises(ValueError, match="at least 2"):
            contrastive_explanation(0, {}, [0], space, cat, ModelConfig(dim=2))

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        cat = random_catalog(rng, n_items=6)
        space = random_space(rng, cat, 3)
        cfg = ModelConfig(dim=3)
        sit = random_situation(rng, cat)
        a = contrastive_explanation(0, sit, range(6), space, cat, cfg)
        b = contrastive_explanation(0, sit, range(6), space, cat, cfg)
        assert a.text == b.text


class TestFeedback:
    def test_dislike_from_positive(self):
        store = FeedbackStore()
        new = apply_feedback(store, 0, 5, "dislike", step=0.5, model_rating=0.4)
        assert new == pytest.approx(-0.5)
        assert store.get(0, 5) == pytest.approx(-0.5)

    def test_like_from_negative(self):
        store = FeedbackStore()
        new = apply_feedback(store, 0, 5, "like", step=0.5, model_rating=-0.2)
        assert new == pytest.approx(0.5)

    def test_successive_dislikes(self):
        store = FeedbackStore()
        apply_feedback(store, 0, 5, "dislike", step=0.5, model_rating=0.4)
        new = apply_feedback(store, 0, 5, "dislike", step=0.5, model_rating=0.4)
        assert new == pytest.approx(-1.0)
        assert len(store.journal) == 2

    def test_clamped_at_bounds(self):
        store = FeedbackStore()
        for _ in range(5):
            new = apply_feedback(store, 0, 5, "dislike", step=0.5, model_rating=0.0)
        assert new == -1.5

    def test_rejects_bad_inputs(self):
        store = FeedbackStore()
        with pytest.raises(ValueError):
            apply_feedback(store, 0, 5, "meh")
        with pytest.raises(ValueError):
            apply_feedback(store, 0, 5, "like", step=0.0)

    def test_plan_does_not_mutate(self):
        store = FeedbackStore()
        entry = plan_feedback(store, 0, 5, "dislike", model_rating=0.4)
        assert store.get(0, 5) is None
        store.commit(entry)
        assert store.get(0, 5) == entry.new

    def test_journal_replay(self):
        store = FeedbackStore()
        apply_feedback(store, 0, 5, "dislike", model_rating=0.4, ts=1.0)
        apply_feedback(store, 1, 2, "like", model_rating=-0.1, ts=2.0)
        apply_feedback(store, 0, 5, "dislike", model_rating=0.4, ts=3.0)
        replayed = FeedbackStore.replay([e.to_dict() for e in store.journal])
        assert replayed.snapshot() == store.snapshot()

    def test_dislike_lowers_every_containing_item(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            cat = random_catalog(rng, n_items=5)
            cfg = ModelConfig(dim=3)
            space = random_space(rng, cat, 3)
            sit = random_situation(rng, cat)
            user = int(rng.integers(cat.n_users))
            feature = int(rng.integers(cat.n_features))
            containing = cat.items_with_feature(feature)
            if not containing:
                continue
            base = {
                i: predict(user, i, sit, space, cat, cfg).rating for i in containing
            }
            model_p = predict(user, containing[0], sit, space, cat, cfg).feature_ratings[feature]
            store = FeedbackStore()
            apply_feedback(store, user, feature, "dislike", model_rating=model_p)
            overrides = store.snapshot()
            for i in containing:
                after = predict(user, i, sit, space, cat, cfg, overrides=overrides).rating
                assert after < base[i]

    def test_like_raises_every_containing_item(self):
        rng = np.random.default_rng(4)
        cat = random_catalog(rng, n_items=5)
        cfg = ModelConfig(dim=3)
        space = random_space(rng, cat, 3)
        sit = random_situation(rng, cat)
        feature = int(rng.integers(cat.n_features))
        containing = cat.items_with_feature(feature)
        if not containing:
            pytest.skip("no containing items for this draw")
        model_p = predict(0, containing[0], sit, space, cat, cfg).feature_ratings[feature]
        store = FeedbackStore()
        apply_feedback(store, 0, feature, "like", model_rating=model_p)
        overrides = store.snapshot()
        for i in containing:
            before = predict(0, i, sit, space, cat, cfg).rating
            after = predict(0, i, sit, space, cat, cfg, overrides=overrides).rating
            assert after > before

    def test_journal_entry_roundtrip(self):
        entry = JournalEntry(ts=1.5, user_idx=3, feature_idx=7, old=0.2, new=-0.3)
        assert JournalEntry.from_dict(entry.to_dict()) == entry
