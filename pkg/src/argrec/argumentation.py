"""Interaction-tailored argumentation view of predictions, plus axiom checkers.

For one (user, item, situation) prediction, the item's features become
arguments that attack, support, or neutralize the recommendation argument,
partitioned by the sign of the user's predicted rating towards each feature.
The checkers exercise the formal guarantees on randomized models: a lone
supporter/attacker/neutral forces the sign of the item strength (weak
balance), muting a feature moves the item strength in the opposite direction
of its polarity (weak monotonicity), and raising/lowering one feature rating
moves the item rating by exactly its weight times the change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Mapping

import numpy as np

from .data import Catalog
from .model import (
    ContextualSituation,
    EmbeddingSpace,
    ModelConfig,
    PredictionBreakdown,
    predict,
)
from .synthetic import random_catalog, random_situation, random_space

REC_ARGUMENT = "rec"


@dataclass
class Taf:
    """Tripolar argumentation frame for one prediction.

    ``attacks``/``supports``/``neutrals`` partition the item's features; each
    listed feature stands in that relation to the recommendation argument.
    """

    item_idx: int
    situation: dict[int, int]
    attacks: frozenset[int]
    supports: frozenset[int]
    neutrals: frozenset[int]
    strength: dict[int, float]  # per feature argument
    rec_strength: float
    neutral_eps: float
    weights: dict[int, float]
    feature_types: dict[int, int]

    @property
    def arguments(self) -> set:
        return set(self.strength) | {REC_ARGUMENT}

    def polarity(self, feature_idx: int) -> str:
        if feature_idx in self.supports:
            return "+"
        if feature_idx in self.attacks:
            return "-"
        return "0"


def build_taf(breakdown: PredictionBreakdown, catalog: Catalog, neutral_eps: float = 0.0) -> Taf:
    """Partition the item's features by the sign of their predicted rating.

    ``neutral_eps`` widens the neutral band for display purposes; the formal
    properties hold for the exact-zero band (eps = 0).
    """
    if neutral_eps < 0:
        raise ValueError("neutral_eps must be non-negative")
    attacks, supports, neutrals = set(), set(), set()
    for at, p in breakdown.feature_ratings.items():
        if p > neutral_eps:
            supports.add(at)
        elif p < -neutral_eps:
            attacks.add(at)
        else:
            neutrals.add(at)
    return Taf(
        item_idx=breakdown.item_idx,
        situation=dict(breakdown.situation),
        attacks=frozenset(attacks),
        supports=frozenset(supports),
        neutrals=frozenset(neutrals),
        strength=dict(breakdown.feature_ratings),
        rec_strength=breakdown.rating,
        neutral_eps=neutral_eps,
        weights=breakdown.feature_weights(),
        feature_types=dict(breakdown.feature_types),
    )


def taf_to_json(taf: Taf, catalog: Catalog) -> dict:
    """Export schema consumed by the UI."""
    args = []
    for at in sorted(taf.strength):
        args.append(
            {
                "feature": catalog.features.names[at],
                "type": catalog.types.names[taf.feature_types[at]],
                "polarity": taf.polarity(at),
                "strength": taf.strength[at],
                "weight": taf.weights[at],
            }
        )
    return {
        "item": catalog.items.names[taf.item_idx],
        "rec_strength": taf.rec_strength,
        "context": {
            catalog.factors.names[f]: catalog.condition_names[cd]
            for f, cd in sorted(taf.situation.items())
        },
        "neutral_eps": taf.neutral_eps,
        "arguments": args,
    }


def mute(
    user_idx: int,
    item_idx: int,
    situation: ContextualSituation,
    space: EmbeddingSpace,
    catalog: Catalog,
    config: ModelConfig,
    mutes: AbstractSet[int],
    overrides: Mapping[tuple[int, int], float] | None = None,
) -> PredictionBreakdown:
    """Re-run the forward pass with the given features forced to rating 0.

    Importances are left untouched; only the feature ratings change.
    """
    return predict(
        user_idx, item_idx, situation, space, catalog, config,
        overrides=overrides, mutes=frozenset(mutes),
    )


@dataclass
class AxiomReport:
    """Outcome of one randomized axiom suite."""

    name: str
    trials: int
    counterexamples: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "passed": self.passed,
            "counterexamples": self.counterexamples,
        }


# A trained model to check instead of fresh random draws.
CheckedModel = tuple[EmbeddingSpace, Catalog, ModelConfig]


def _random_instance(rng, n_features: tuple[int, int], zero_feature_prob: float = 0.15):
    """Random (space, catalog, config, user, item, situation) for one trial."""
    variant = ("ca-fata", "fata", "avg-ca-fata", "avg-fata")[int(rng.integers(4))]
    catalog = random_catalog(
        rng,
        n_users=3,
        n_items=2,
        n_factors=int(rng.integers(1, 3)),
        conditions_per_factor=2,
        n_types=3,
        features_per_type=4,
        types_per_item=(1, 3),
        features_per_item_type=(n_features[0], n_features[1]),
    )
    dim = int(rng.integers(2, 6))
    config = ModelConfig(dim=dim, variant=variant, seed=0)
    space = random_space(rng, catalog, dim)
    # occasionally zero a feature vector so the exact-neutral case is exercised
    for at in range(catalog.n_features):
        if rng.random() < zero_feature_prob:
            space.features[at] = 0.0
    user = int(rng.integers(catalog.n_users))
    item = int(rng.integers(catalog.n_items))
    situation = random_situation(rng, catalog) if config.context_aware else {}
    return space, catalog, config, user, item, situation


def _model_instance(rng, model: CheckedModel):
    """One (user, item, situation) draw on a given trained model."""
    space, catalog, config = model
    user = int(rng.integers(catalog.n_users))
    item = int(rng.integers(catalog.n_items))
    situation = (
        random_situation(rng, catalog)
        if config.context_aware and catalog.n_factors
        else {}
    )
    return space, catalog, config, user, item, situation


def _single_feature_view(catalog: Catalog, item: int, rng) -> Catalog:
    """A catalog view where one item keeps a single randomly chosen feature.

    Shares every id table with the original; only the item composition lists
    are replaced, so the view is cheap and read-only safe.
    """
    pos = int(rng.integers(len(catalog.item_types[item])))
    feats = catalog.item_features[item][pos]
    at = feats[int(rng.integers(len(feats)))]
    view = Catalog(
        users=catalog.users,
        items=catalog.items,
        features=catalog.features,
        types=catalog.types,
        factors=catalog.factors,
        conditions=catalog.conditions,
        item_types=list(catalog.item_types),
        item_features=list(catalog.item_features),
        feature_type=catalog.feature_type,
        condition_factor=catalog.condition_factor,
        condition_names=catalog.condition_names,
        factor_conditions=catalog.factor_conditions,
    )
    view.item_types[item] = [catalog.item_types[item][pos]]
    view.item_features[item] = [[at]]
    return view


def _instance_dump(catalog, config, user, item, situation, extra: dict) -> dict:
    return {
        "variant": config.variant,
        "user": user,
        "item": item,
        "situation": {int(k): int(v) for k, v in situation.items()},
        "item_types": catalog.item_types[item],
        "item_features": catalog.item_features[item],
        **extra,
    }


def check_weak_balance(trials: int, seed: int = 0, model: CheckedModel | None = None) -> AxiomReport:
    """Single-feature items: the lone argument's polarity forces the sign of the rating.

    With ``model`` given, each trial restricts one of that model's items to a
    single randomly chosen feature instead of drawing a fresh random model.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = AxiomReport(name="weak_balance", trials=trials)
    for _ in range(trials):
        if model is None:
            space, catalog, config, user, item, situation = _random_instance(
                rng, n_features=(1, 1), zero_feature_prob=0.2
            )
            # keep only the item's first type so a single argument remains
            catalog.item_types[item] = catalog.item_types[item][:1]
            catalog.item_features[item] = catalog.item_features[item][:1]
        else:
            space, catalog, config, user, item, situation = _model_instance(rng, model)
            catalog = _single_feature_view(catalog, item, rng)
        breakdown = predict(user, item, situation, space, catalog, config)
        taf = build_taf(breakdown, catalog, neutral_eps=0.0)
        (at,) = breakdown.feature_ratings
        ok = (
            (at in taf.supports and taf.rec_strength > 0)
            or (at in taf.attacks and taf.rec_strength < 0)
            or (at in taf.neutrals and taf.rec_strength == 0)
        )
        if not ok:
            report.counterexamples.append(
                _instance_dump(
                    catalog, config, user, item, situation,
                    {"polarity": taf.polarity(at), "rating": taf.rec_strength,
                     "feature_rating": breakdown.feature_ratings[at]},
                )
            )
    return report


def check_weak_monotonicity(trials: int, seed: int = 0, model: CheckedModel | None = None) -> AxiomReport:
    """Muting an attacker raises, a supporter lowers, a neutral preserves the rating."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = AxiomReport(name="weak_monotonicity", trials=trials)
    for _ in range(trials):
        if model is None:
            space, catalog, config, user, item, situation = _random_instance(rng, n_features=(1, 3))
        else:
            space, catalog, config, user, item, situation = _model_instance(rng, model)
        base = predict(user, item, situation, space, catalog, config)
        feats = sorted(base.feature_ratings)
        at = feats[int(rng.integers(len(feats)))]
        taf = build_taf(base, catalog, neutral_eps=0.0)
        assert all(p > 0 for p in base.type_importance.values())
        muted = mute(user, item, situation, space, catalog, config, {at})
        before, after = base.rating, muted.rating
        if at in taf.attacks:
            ok = after > before
        elif at in taf.supports:
            ok = after < before
        else:
            ok = abs(after - before) <= 1e-12
        if not ok:
            report.counterexamples.append(
                _instance_dump(
                    catalog, config, user, item, situation,
                    {"muted_feature": at, "polarity": taf.polarity(at),
                     "rating_before": before, "rating_after": after},
                )
            )
    return report


def check_feedback_monotonicity(trials: int, seed: int = 0, tol: float = 1e-9,
                                model: CheckedModel | None = None) -> AxiomReport:
    """Shifting one feature rating by delta moves the item rating by weight * delta."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = AxiomReport(name="feedback_monotonicity", trials=trials)
    for _ in range(trials):
        if model is None:
            space, catalog, config, user, item, situation = _random_instance(
                rng, n_features=(1, 3), zero_feature_prob=0.0
            )
        else:
            space, catalog, config, user, item, situation = _model_instance(rng, model)
        base = predict(user, item, situation, space, catalog, config)
        feats = sorted(base.feature_ratings)
        at = feats[int(rng.integers(len(feats)))]
        delta = float(rng.uniform(0.05, 1.0)) * (1.0 if rng.random() < 0.5 else -1.0)
        overrides = {(user, at): base.feature_ratings[at] + delta}
        shifted = predict(user, item, situation, space, catalog, config, overrides=overrides)
        expected = base.feature_weights()[at] * delta
        observed = shifted.rating - base.rating
        direction_ok = (observed > 0) == (delta > 0) and observed != 0
        if not direction_ok or abs(observed - expected) > tol:
            report.counterexamples.append(
                _instance_dump(
                    catalog, config, user, item, situation,
                    {"feature": at, "delta": delta,
                     "expected_change": expected, "observed_change": observed},
                )
            )
    return report
