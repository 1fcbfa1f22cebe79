"""Template, contrastive, and interactive explanations on top of predictions."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .argumentation import Taf, build_taf
from .data import Catalog
from .model import (
    ContextualSituation,
    EmbeddingSpace,
    ModelConfig,
    PredictionBreakdown,
    predict,
)

STRONG = "strong_recommendation"
WEAK = "weak_recommendation"
NOT_RECOMMENDED = "not_recommended"
SCENARIOS = (STRONG, WEAK, NOT_RECOMMENDED)

DEFAULT_THRESHOLDS = (0.0, 0.5)
DEFAULT_FEEDBACK_STEP = 0.5
FEEDBACK_BOUNDS = (-1.5, 1.5)


def classify_scenario(rating: float, low: float = 0.0, high: float = 0.5) -> str:
    """Map a predicted rating to one of the three recommendation scenarios."""
    if not low < high:
        raise ValueError("thresholds must satisfy low < high")
    if rating >= high:
        return STRONG
    if rating >= low:
        return WEAK
    return NOT_RECOMMENDED


@dataclass
class CitedArgument:
    feature_idx: int
    feature: str
    type: str
    polarity: str
    strength: float
    weight: float

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "type": self.type,
            "polarity": self.polarity,
            "strength": self.strength,
            "weight": self.weight,
        }


@dataclass
class Explanation:
    scenario: str
    top_context: tuple[str, str, float] | None
    cited: list[CitedArgument]
    text: str
    contrast: dict | None = None

    def to_dict(self) -> dict:
        doc = {
            "scenario": self.scenario,
            "context": None
            if self.top_context is None
            else {
                "factor": self.top_context[0],
                "condition": self.top_context[1],
                "importance": self.top_context[2],
            },
            "arguments": [arg.to_dict() for arg in self.cited],
            "text": self.text,
        }
        if self.contrast is not None:
            doc["contrast"] = self.contrast
        return doc


def _cited(at: int, breakdown: PredictionBreakdown, taf: Taf, catalog: Catalog) -> CitedArgument:
    return CitedArgument(
        feature_idx=at,
        feature=catalog.features.names[at],
        type=catalog.types.names[breakdown.feature_types[at]],
        polarity=taf.polarity(at),
        strength=breakdown.feature_ratings[at],
        weight=breakdown.feature_weights()[at],
    )


def _top_context(breakdown: PredictionBreakdown, catalog: Catalog) -> tuple[str, str, float] | None:
    if not breakdown.factor_importance:
        return None
    best = min(
        breakdown.factor_importance,
        key=lambda f: (-breakdown.factor_importance[f], f),
    )
    cond = breakdown.situation.get(best)
    cond_name = catalog.condition_names[cond] if cond is not None else "?"
    return (catalog.factors.names[best], cond_name, breakdown.factor_importance[best])


def _phrase(args: Sequence[CitedArgument]) -> str:
    parts = [f"{a.feature} ({a.type})" for a in args]
    if len(parts) == 1:
        return parts[0]
    return " and ".join([", ".join(parts[:-1]), parts[-1]])


def template_explanation(
    breakdown: PredictionBreakdown,
    taf: Taf,
    catalog: Catalog,
    scenario: str | None = None,
    thresholds: tuple[float, float] = DEFAULT_THRESHOLDS,
    rank_by: str = "contribution",
) -> Explanation:
    """Render the scenario template for one prediction.

    Strong recommendations cite the two supporters with the largest weighted
    contribution, weak ones pair the strongest supporter with the strongest
    attacker, and rejections cite the two strongest attackers. ``rank_by`` may
    be "contribution" (weight times rating, the effect on the final score) or
    "strength" (the raw rating).
    """
    if not breakdown.feature_ratings:
        raise ValueError("cannot explain an item with no features")
    if rank_by not in ("contribution", "strength"):
        raise ValueError("rank_by must be 'contribution' or 'strength'")
    if scenario is None:
        scenario = classify_scenario(breakdown.rating, *thresholds)

    weights = breakdown.feature_weights()

    def score(at: int) -> float:
        p = breakdown.feature_ratings[at]
        return weights[at] * p if rank_by == "contribution" else p

    supporters = sorted(taf.supports, key=lambda at: (-score(at), at))
    attackers = sorted(taf.attacks, key=lambda at: (score(at), at))

    item = catalog.items.names[breakdown.item_idx]
    if scenario == STRONG:
        chosen = supporters[:2]
        text = f"We recommend {item} because you like {_phrase_or(chosen, breakdown, taf, catalog)}."
    elif scenario == WEAK:
        chosen = supporters[:1] + attackers[:1]
        if supporters and attackers:
            text = (
                f"We weakly recommend {item}: you like "
                f"{catalog.features.names[supporters[0]]} "
                f"({catalog.types.names[breakdown.feature_types[supporters[0]]]}), "
                f"although you dislike {catalog.features.names[attackers[0]]} "
                f"({catalog.types.names[breakdown.feature_types[attackers[0]]]})."
            )
        else:
            text = f"We weakly recommend {item} based on {_phrase_or(chosen, breakdown, taf, catalog)}."
    else:
        chosen = attackers[:2]
        text = f"We do not recommend {item} because you dislike {_phrase_or(chosen, breakdown, taf, catalog)}."

    cited = [_cited(at, breakdown, taf, catalog) for at in chosen]
    top_context = _top_context(breakdown, catalog)
    if top_context is not None:
        factor, condition, _ = top_context
        text += f" Your most influential contextual factor is {factor} = {condition}."
    return Explanation(scenario=scenario, top_context=top_context, cited=cited, text=text)


def _phrase_or(chosen, breakdown, taf, catalog) -> str:
    if not chosen:
        return "its overall feature profile"
    return _phrase([_cited(at, breakdown, taf, catalog) for at in chosen])


def contrastive_explanation(
    user_idx: int,
    situation: ContextualSituation,
    candidate_items: Sequence[int],
    space: EmbeddingSpace,
    catalog: Catalog,
    config: ModelConfig,
    overrides: Mapping[tuple[int, int], float] | None = None,
) -> Explanation:
    """Contrast the best candidate against the worst one along the decisive type.

    Picks the top-rated candidate and its highest importance-weighted feature,
    then the lowest-rated candidate and that candidate's worst feature of the
    same type (falling back to its globally worst feature when the type is
    absent, flagged in the result). Ties break towards the lowest item or
    feature index.
    """
    candidates = sorted(set(int(i) for i in candidate_items))
    if len(candidates) < 2:
        raise ValueError("contrastive explanation needs at least 2 candidate items")

    breakdowns = {
        i: predict(user_idx, i, situation, space, catalog, config, overrides=overrides)
        for i in candidates
    }
    i_rec = min(candidates, key=lambda i: (-breakdowns[i].rating, i))
    rec = breakdowns[i_rec]

    def weighted(b: PredictionBreakdown, at: int) -> float:
        return b.type_importance[b.feature_types[at]] * b.feature_ratings[at]

    at_pro = min(rec.feature_ratings, key=lambda at: (-weighted(rec, at), at))
    t_pro = rec.feature_types[at_pro]

    rest = [i for i in candidates if i != i_rec]
    i_con = min(rest, key=lambda i: (breakdowns[i].rating, i))
    con = breakdowns[i_con]
    same_type = [at for at in con.feature_ratings if con.feature_types[at] == t_pro]
    fallback = not same_type
    pool = same_type if same_type else sorted(con.feature_ratings)
    at_con = min(pool, key=lambda at: (weighted(con, at), at))

    rec_name = catalog.items.names[i_rec]
    con_name = catalog.items.names[i_con]
    pro_name = catalog.features.names[at_pro]
    con_feat_name = catalog.features.names[at_con]
    text = (
        f"We recommend {rec_name} instead of {con_name} because you prefer {pro_name}. "
        f"{rec_name} is {pro_name} while {con_name} is {con_feat_name}."
    )
    if fallback:
        text += " (Compared across feature types.)"

    rec_taf = build_taf(rec, catalog)
    con_taf = build_taf(con, catalog)
    return Explanation(
        scenario=classify_scenario(rec.rating, *DEFAULT_THRESHOLDS),
        top_context=_top_context(rec, catalog),
        cited=[_cited(at_pro, rec, rec_taf, catalog), _cited(at_con, con, con_taf, catalog)],
        text=text,
        contrast={
            "recommended": rec_name,
            "rejected": con_name,
            "recommended_rating": rec.rating,
            "rejected_rating": con.rating,
            "preferred_feature": pro_name,
            "preferred_type": catalog.types.names[t_pro],
            "contrasted_feature": con_feat_name,
            "cross_type_fallback": fallback,
        },
    )


@dataclass
class JournalEntry:
    ts: float
    user_idx: int
    feature_idx: int
    old: float
    new: float

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "user": self.user_idx,
            "feature": self.feature_idx,
            "old": self.old,
            "new": self.new,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "JournalEntry":
        return cls(doc["ts"], doc["user"], doc["feature"], doc["old"], doc["new"])


class FeedbackStore:
    """Per-(user, feature) rating overrides with an append-only journal.

    Single writer, many readers: writes are serialized by an internal lock and
    readers work from snapshot() copies, never the live map.
    """

    def __init__(self):
        self._overrides: dict[tuple[int, int], float] = {}
        self.journal: list[JournalEntry] = []
        self._lock = threading.RLock()

    def get(self, user_idx: int, feature_idx: int, default: float | None = None):
        with self._lock:
            return self._overrides.get((user_idx, feature_idx), default)

    def snapshot(self) -> dict[tuple[int, int], float]:
        with self._lock:
            return dict(self._overrides)

    def commit(self, entry: JournalEntry) -> JournalEntry:
        with self._lock:
            self.journal.append(entry)
            self._overrides[(entry.user_idx, entry.feature_idx)] = entry.new
        return entry

    def record(self, user_idx: int, feature_idx: int, old: float, new: float,
               ts: float | None = None) -> JournalEntry:
        return self.commit(JournalEntry(
            ts=time.time() if ts is None else ts,
            user_idx=user_idx,
            feature_idx=feature_idx,
            old=old,
            new=new,
        ))

    @classmethod
    def replay(cls, entries: Iterable[JournalEntry | dict]) -> "FeedbackStore":
        store = cls()
        for entry in entries:
            if isinstance(entry, dict):
                entry = JournalEntry.from_dict(entry)
            store.journal.append(entry)
            store._overrides[(entry.user_idx, entry.feature_idx)] = entry.new
        return store

    @classmethod
    def replay_file(cls, path) -> "FeedbackStore":
        entries = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(json.loads(line))
        return cls.replay(entries)


def plan_feedback(
    store: FeedbackStore,
    user_idx: int,
    feature_idx: int,
    direction: str,
    step: float = DEFAULT_FEEDBACK_STEP,
    model_rating: float = 0.0,
    ts: float | None = None,
) -> JournalEntry:
    """Compute the journal entry a like/dislike would produce, without applying it."""
    if direction not in ("like", "dislike"):
        raise ValueError(f"direction must be 'like' or 'dislike', got {direction!r}")
    if step <= 0:
        raise ValueError("step must be positive")
    current = store.get(user_idx, feature_idx, model_rating)
    if direction == "dislike":
        new = min(current, 0.0) - step
    else:
        new = max(current, 0.0) + step
    new = min(max(new, FEEDBACK_BOUNDS[0]), FEEDBACK_BOUNDS[1])
    return JournalEntry(
        ts=time.time() if ts is None else ts,
        user_idx=user_idx,
        feature_idx=feature_idx,
        old=current,
        new=new,
    )


def apply_feedback(
    store: FeedbackStore,
    user_idx: int,
    feature_idx: int,
    direction: str,
    step: float = DEFAULT_FEEDBACK_STEP,
    model_rating: float = 0.0,
    ts: float | None = None,
) -> float:
    """Push one feature's effective rating down (dislike) or up (like).

    ``model_rating`` is the model's current rating for the pair and is only
    consulted when no override exists yet. A dislike moves the effective
    rating to min(current, 0) - step, a like to max(current, 0) + step, so the
    new value always lies strictly on the requested side of the old one (until
    the [-1.5, 1.5] bound binds). Returns the new override value.
    """
    entry = plan_feedback(store, user_idx, feature_idx, direction, step, model_rating, ts)
    store.commit(entry)
    return entry.new
