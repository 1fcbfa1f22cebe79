"""Forward pass of the factor-attribution recommender, embedding tables, checkpoints.

The prediction for (user, item, situation) decomposes into meaningful pieces:
contextual-factor importances, a situation-specific user vector, per-item
feature-type importances, per-feature ratings, and per-type contributions whose
importance-weighted sum is the final rating. Every piece is recorded on the
returned PredictionBreakdown.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Mapping

import numpy as np

from .data import Catalog, RatingScale

VARIANTS = ("ca-fata", "fata", "avg-ca-fata", "avg-fata")
CHECKPOINT_FORMAT_VERSION = 1

# A contextual situation: one condition index per factor index.
ContextualSituation = Mapping[int, int]


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 32
    variant: str = "ca-fata"
    leaky_relu_slope: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (0.0 < self.leaky_relu_slope < 1.0):
            raise ValueError("leaky_relu_slope must lie in (0, 1)")

    @property
    def context_aware(self) -> bool:
        return self.variant in ("ca-fata", "avg-ca-fata")

    @property
    def learned_type_importance(self) -> bool:
        return self.variant in ("ca-fata", "fata")


@dataclass
class EmbeddingSpace:
    """All learned vectors, one d-dimensional table per entity kind."""

    users: np.ndarray
    features: np.ndarray
    types: np.ndarray
    factors: np.ndarray
    conditions: np.ndarray

    TABLES = ("users", "features", "types", "factors", "conditions")

    @property
    def dim(self) -> int:
        return self.users.shape[1]

    def table(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def copy(self) -> "EmbeddingSpace":
        return EmbeddingSpace(*(self.table(t).copy() for t in self.TABLES))


@dataclass
class MfSpace:
    """Embedding tables of the plain user x item factorization baseline."""

    users: np.ndarray
    items: np.ndarray

    @property
    def dim(self) -> int:
        return self.users.shape[1]

    def copy(self) -> "MfSpace":
        return MfSpace(self.users.copy(), self.items.copy())


def init_embeddings(catalog: Catalog, config: ModelConfig) -> EmbeddingSpace:
    """Seeded uniform(-1/sqrt(d), 1/sqrt(d)) initialization of every table."""
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(config.dim)

    def draw(rows: int) -> np.ndarray:
        return rng.uniform(-bound, bound, size=(rows, config.dim))

    return EmbeddingSpace(
        users=draw(catalog.n_users),
        features=draw(catalog.n_features),
        types=draw(catalog.n_types),
        factors=draw(catalog.n_factors),
        conditions=draw(catalog.n_conditions),
    )


def init_mf_embeddings(catalog: Catalog, dim: int, seed: int) -> MfSpace:
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    return MfSpace(
        users=rng.uniform(-bound, bound, size=(catalog.n_users, dim)),
        items=rng.uniform(-bound, bound, size=(catalog.n_items, dim)),
    )


def leaky_relu(x, slope: float):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x, slope: float):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, slope)


def softmax(x) -> np.ndarray:
    """Shift-invariant softmax over the last axis."""
    x = np.asarray(x, dtype=float)
    z = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def validate_situation(situation: ContextualSituation, catalog: Catalog) -> None:
    for factor_idx, cond_idx in situation.items():
        if not (0 <= factor_idx < catalog.n_factors):
            raise ValueError(f"unknown contextual factor index {factor_idx}")
        if not (0 <= cond_idx < catalog.n_conditions):
            raise ValueError(f"unknown condition index {cond_idx}")
        if catalog.condition_factor[cond_idx] != factor_idx:
            raise ValueError(
                f"condition {cond_idx} does not belong to factor {factor_idx}"
            )


def context_factor_importance(
    user_idx: int,
    space: EmbeddingSpace,
    catalog: Catalog,
    slope: float = 0.01,
) -> tuple[dict[int, float], dict[int, float]]:
    """Score every contextual factor for a user and normalize to importances.

    Returns (raw scores, importances); importances are a softmax of the
    LeakyReLU-activated scores over the whole schema, so they are positive and
    sum to one.
    """
    if catalog.n_factors == 0:
        raise ValueError("schema has no contextual factors; use the context-free path")
    u = space.users[user_idx]
    beta = space.factors @ u
    pi = softmax(leaky_relu(beta, slope))
    return (
        {j: float(beta[j]) for j in range(catalog.n_factors)},
        {j: float(pi[j]) for j in range(catalog.n_factors)},
    )


def contextual_user_embedding(
    user_idx: int,
    situation: ContextualSituation,
    space: EmbeddingSpace,
    catalog: Catalog,
    config: ModelConfig,
) -> np.ndarray:
    """User vector adapted to a situation: u plus the importance-weighted condition sum."""
    u = space.users[user_idx]
    if not config.context_aware or not situation:
        return u.copy()
    validate_situation(situation, catalog)
    _, pi = context_factor_importance(user_idx, space, catalog, config.leaky_relu_slope)
    cs_vec = np.zeros_like(u)
    for factor_idx in sorted(situation):
        cs_vec = cs_vec + pi[factor_idx] * space.conditions[situation[factor_idx]]
    return u + cs_vec


def feature_type_importance(
    u_cs: np.ndarray,
    item_idx: int,
    space: EmbeddingSpace,
    catalog: Catalog,
    config: ModelConfig,
) -> tuple[dict[int, float], dict[int, float]]:
    """Importance of each of the item's own feature types to the (contextual) user.

    Normalization runs over exactly the item's types. The averaged variants
    return uniform importances and no raw scores.
    """
    if not (0 <= item_idx < catalog.n_items):
        raise ValueError(f"unknown item index {item_idx}")
    type_idxs = catalog.item_types[item_idx]
    if not type_idxs:
        raise ValueError(f"item {item_idx} has no feature types")
    if not config.learned_type_importance:
        share = 1.0 / len(type_idxs)
        return {}, {t: share for t in type_idxs}
    gamma = space.types[type_idxs] @ u_cs
    pi = softmax(leaky_relu(gamma, config.leaky_relu_slope))
    return (
        {t: float(g) for t, g in zip(type_idxs, gamma)},
        {t: float(p) for t, p in zip(type_idxs, pi)},
    )


def feature_rating(u_cs: np.ndarray, feature_idx: int, space: EmbeddingSpace) -> float:
    """Predicted rating of the (contextual) user towards one feature: raw inner product."""
    return float(u_cs @ space.features[feature_idx])


@dataclass
class PredictionBreakdown:
    """Full trace of one forward pass."""

    user_idx: int
    item_idx: int
    situation: dict[int, int]
    variant: str
    factor_scores: dict[int, float]
    factor_importance: dict[int, float]
    contextual_user: np.ndarray
    type_scores: dict[int, float]
    type_importance: dict[int, float]
    feature_ratings: dict[int, float]
    feature_types: dict[int, int]
    type_feature_counts: dict[int, int]
    type_contributions: dict[int, float]
    rating: float

    def feature_weights(self) -> dict[int, float]:
        """Weight of each feature on the final rating: type importance / type size."""
        return {
            at: self.type_importance[t] / self.type_feature_counts[t]
            for at, t in self.feature_types.items()
        }

    def attributions(self) -> dict[int, float]:
        """Per-feature additive contributions; they sum to the predicted rating."""
        weights = self.feature_weights()
        return {at: weights[at] * p for at, p in self.feature_ratings.items()}


def predict(
    user_idx: int,
    item_idx: int,
    situation: ContextualSituation,
    space: EmbeddingSpace,
    catalog: Catalog,
    config: ModelConfig,
    overrides: Mapping[tuple[int, int], float] | None = None,
    mutes: AbstractSet[int] | None = None,
) -> PredictionBreakdown:
    """Predict the rating of (user, item) under a situation, tracing every step.

    ``overrides`` replaces the rating of (user, feature) pairs before type
    contributions are aggregated; ``mutes`` then forces listed features to 0.
    Importances are never recomputed for overridden or muted features.
    """
    if not (0 <= user_idx < len(space.users)):
        raise ValueError(f"unknown user index {user_idx}")
    if not (0 <= item_idx < catalog.n_items):
        raise ValueError(f"unknown item index {item_idx}")
    item_features = set(catalog.item_feature_list(item_idx))
    if mutes:
        missing = set(mutes) - item_features
        if missing:
            raise ValueError(f"cannot mute features {sorted(missing)}: not on item {item_idx}")

    use_context = config.context_aware and bool(situation) and catalog.n_factors > 0
    if use_context:
        factor_scores, factor_importance = context_factor_importance(
            user_idx, space, catalog, config.leaky_relu_slope
        )
        validate_situation(situation, catalog)
        u = space.users[user_idx]
        cs_vec = np.zeros_like(u)
        for factor_idx in sorted(situation):
            cs_vec = cs_vec + factor_importance[factor_idx] * space.conditions[situation[factor_idx]]
        u_cs = u + cs_vec
    else:
        factor_scores, factor_importance = {}, {}
        u_cs = space.users[user_idx].copy()

    type_scores, type_importance = feature_type_importance(u_cs, item_idx, space, catalog, config)

    feature_ratings: dict[int, float] = {}
    feature_types: dict[int, int] = {}
    type_feature_counts: dict[int, int] = {}
    type_contributions: dict[int, float] = {}
    rating = 0.0
    for t, feats in zip(catalog.item_types[item_idx], catalog.item_features[item_idx]):
        total = 0.0
        for at in feats:
            p = feature_rating(u_cs, at, space)
            if overrides is not None:
                p = overrides.get((user_idx, at), p)
            if mutes and at in mutes:
                p = 0.0
            feature_ratings[at] = p
            feature_types[at] = t
            total += p
        type_feature_counts[t] = len(feats)
        contr = total / len(feats)
        type_contributions[t] = contr
        rating += type_importance[t] * contr

    return PredictionBreakdown(
        user_idx=user_idx,
        item_idx=item_idx,
        situation=dict(situation),
        variant=config.variant,
        factor_scores=factor_scores,
        factor_importance=factor_importance,
        contextual_user=u_cs,
        type_scores=type_scores,
        type_importance=type_importance,
        feature_ratings=feature_ratings,
        feature_types=feature_types,
        type_feature_counts=type_feature_counts,
        type_contributions=type_contributions,
        rating=rating,
    )


def predict_mf_baseline(user_idx: int, item_idx: int, mf_space: MfSpace) -> float:
    """Rating of the factorization baseline: inner product of user and item vectors."""
    return float(mf_space.users[user_idx] @ mf_space.items[item_idx])


@dataclass
class Checkpoint:
    """A trained model bundled with everything needed to serve it."""

    kind: str  # "factor" or "mf"
    catalog: Catalog
    scale: RatingScale
    config: ModelConfig | None = None
    space: EmbeddingSpace | None = None
    mf_space: MfSpace | None = None

    @property
    def variant(self) -> str:
        return "mf" if self.kind == "mf" else self.config.variant

    def rating(
        self,
        user_idx: int,
        item_idx: int,
        situation: ContextualSituation,
        overrides: Mapping[tuple[int, int], float] | None = None,
    ) -> float:
        if self.kind == "mf":
            return predict_mf_baseline(user_idx, item_idx, self.mf_space)
        return predict(
            user_idx, item_idx, situation, self.space, self.catalog, self.config, overrides
        ).rating


def save_checkpoint(path: Path | str, checkpoint: Checkpoint) -> None:
    doc: dict = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": checkpoint.kind,
        "catalog": checkpoint.catalog.to_dict(),
        "scale": {"raw_min": checkpoint.scale.raw_min, "raw_max": checkpoint.scale.raw_max},
    }
    if checkpoint.kind == "mf":
        doc["model"] = {"dim": checkpoint.mf_space.dim}
        doc["embeddings"] = {
            "users": checkpoint.mf_space.users.tolist(),
            "items": checkpoint.mf_space.items.tolist(),
        }
    else:
        cfg = checkpoint.config
        doc["model"] = {
            "dim": cfg.dim,
            "variant": cfg.variant,
            "leaky_relu_slope": cfg.leaky_relu_slope,
            "seed": cfg.seed,
        }
        doc["embeddings"] = {
            name: checkpoint.space.table(name).tolist() for name in EmbeddingSpace.TABLES
        }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path: Path | str) -> Checkpoint:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    catalog = Catalog.from_dict(doc["catalog"])
    scale = RatingScale(doc["scale"]["raw_min"], doc["scale"]["raw_max"])
    emb = doc["embeddings"]
    if doc["kind"] == "mf":
        mf = MfSpace(
            users=np.asarray(emb["users"], dtype=float),
            items=np.asarray(emb["items"], dtype=float),
        )
        return Checkpoint(kind="mf", catalog=catalog, scale=scale, mf_space=mf)
    cfg = ModelConfig(
        dim=doc["model"]["dim"],
        variant=doc["model"]["variant"],
        leaky_relu_slope=doc["model"]["leaky_relu_slope"],
        seed=doc["model"]["seed"],
    )
    space = EmbeddingSpace(
        **{name: np.asarray(emb[name], dtype=float).reshape(-1, cfg.dim) for name in EmbeddingSpace.TABLES}
    )
    return Checkpoint(kind="factor", catalog=catalog, scale=scale, config=cfg, space=space)
