"""Random catalogs, models, and planted datasets for checks and desk-scale runs."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .data import Catalog, Dataset, RatingScale, UNKNOWN_CONDITION
from .model import EmbeddingSpace, ModelConfig, ContextualSituation


def random_catalog(
    rng: np.random.Generator,
    n_users: int = 8,
    n_items: int = 6,
    n_factors: int = 2,
    conditions_per_factor: int = 3,
    n_types: int = 3,
    features_per_type: int = 4,
    types_per_item: tuple[int, int] = (1, 3),
    features_per_item_type: tuple[int, int] = (1, 3),
) -> Catalog:
    """A valid random catalog: every item has >= 1 type with >= 1 feature."""
    cat = Catalog()
    for u in range(n_users):
        cat.users.add(f"u{u}")
    for f in range(n_factors):
        idx = cat.add_factor(f"factor{f}")
        for c in range(conditions_per_factor):
            cat.add_condition(idx, f"c{c}")
        cat.add_condition(idx, UNKNOWN_CONDITION)
    for t in range(n_types):
        cat.types.add(f"type{t}")
    for t in range(n_types):
        for q in range(features_per_type):
            at = cat.features.add(f"type{t}_f{q}")
            assert at == len(cat.feature_type)
            cat.feature_type.append(t)

    type_pools = [
        [at for at in range(cat.n_features) if cat.feature_type[at] == t]
        for t in range(n_types)
    ]
    for i in range(n_items):
        cat.items.add(f"i{i}")
        k = int(rng.integers(types_per_item[0], min(types_per_item[1], n_types) + 1))
        chosen = sorted(rng.choice(n_types, size=k, replace=False).tolist())
        cat.item_types.append(chosen)
        feats = []
        for t in chosen:
            m = int(rng.integers(
                features_per_item_type[0],
                min(features_per_item_type[1], len(type_pools[t])) + 1,
            ))
            feats.append(sorted(rng.choice(type_pools[t], size=m, replace=False).tolist()))
        cat.item_features.append(feats)
    return cat


def random_space(
    rng: np.random.Generator,
    catalog: Catalog,
    dim: int,
    user_scale: float = 1.0,
    feature_scale: float = 1.0,
    type_scale: float = 1.0,
    factor_scale: float = 1.0,
    condition_scale: float = 1.0,
) -> EmbeddingSpace:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) tables, optionally rescaled per table."""
    bound = 1.0 / math.sqrt(dim)

    def draw(rows: int, scale: float) -> np.ndarray:
        return rng.uniform(-bound, bound, size=(rows, dim)) * scale

    return EmbeddingSpace(
        users=draw(catalog.n_users, user_scale),
        features=draw(catalog.n_features, feature_scale),
        types=draw(catalog.n_types, type_scale),
        factors=draw(catalog.n_factors, factor_scale),
        conditions=draw(catalog.n_conditions, condition_scale),
    )


def random_situation(rng: np.random.Generator, catalog: Catalog) -> dict[int, int]:
    """A complete assignment: one condition per factor."""
    return {
        f: int(rng.choice(catalog.factor_conditions[f]))
        for f in range(catalog.n_factors)
    }


def planted_dataset(
    rng: np.random.Generator,
    catalog: Catalog,
    space: EmbeddingSpace,
    config: ModelConfig,
    interactions_per_user: int = 20,
    noise_sd: float = 0.05,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> Dataset:
    """Ratings generated by a teacher model plus Gaussian noise, clipped to [-1, 1]."""
    from .training import Batch, ItemTensors, _forward

    users_col = []
    items_col = []
    ctx_col = []
    for u in range(catalog.n_users):
        m = min(interactions_per_user, catalog.n_items)
        chosen = rng.choice(catalog.n_items, size=m, replace=False)
        for i in chosen:
            users_col.append(u)
            items_col.append(int(i))
            sit = random_situation(rng, catalog)
            ctx_col.append([sit[f] for f in range(catalog.n_factors)])
    users = np.asarray(users_col, dtype=np.int64)
    items = np.asarray(items_col, dtype=np.int64)
    context = np.asarray(ctx_col, dtype=np.int64).reshape(len(users), catalog.n_factors)

    tensors = ItemTensors(catalog)
    batch = Batch(users, items, context, np.zeros(len(users)))
    ratings, _ = _forward(space, tensors, batch, config)
    ratings = np.clip(ratings + rng.normal(0.0, noise_sd, size=len(users)), -1.0, 1.0)

    n = len(users)
    n_test = int(round(ratios[2] * n))
    n_valid = int(round(ratios[1] * n))
    perm = rng.permutation(n)
    return Dataset(
        user_idx=users,
        item_idx=items,
        context=context,
        rating=ratings,
        scale=RatingScale(-1.0, 1.0),
        train_idx=np.sort(perm[n_test + n_valid:]),
        valid_idx=np.sort(perm[n_test:n_test + n_valid]),
        test_idx=np.sort(perm[:n_test]),
    )


def write_app_usage_fixture(
    out_dir: Path | str,
    seed: int = 0,
    n_users: int = 180,
    n_items: int = 220,
    interactions_per_user: int = 70,
    noise_sd_raw: float = 0.25,
    raw_max: float = 4.46,
) -> dict[str, Path]:
    """Write a desk-scale app-usage corpus (counts + features + context schema).

    The files mimic a context-aware app-usage log: seven contextual factors,
    five feature types, usage counts whose log transform follows a planted
    context-dependent teacher model plus noise. Returns the file paths.
    """
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    factors = {
        "daytime": ["morning", "noon", "afternoon", "evening", "night"],
        "weekday": ["workday", "weekend"],
        "isweekend": ["yes", "no"],
        "homework": ["home", "work", "elsewhere"],
        "weather": ["sunny", "rainy", "cloudy"],
        "country": ["us", "fr", "jp", "br"],
        "city": ["big", "small"],
    }
    type_features = {
        "category": [f"cat_{i}" for i in range(10)],
        "developer": [f"dev_{i}" for i in range(16)],
        "language": [f"lang_{i}" for i in range(6)],
        "price_band": ["free", "cheap", "premium"],
        "rating_band": ["low", "mid", "high"],
    }

    cat = Catalog()
    for u in range(n_users):
        cat.users.add(f"user{u}")
    for name, conds in factors.items():
        f = cat.add_factor(name)
        for c in conds:
            cat.add_condition(f, c)
        cat.add_condition(f, UNKNOWN_CONDITION)
    for t, feats in type_features.items():
        ti = cat.types.add(t)
        for name in feats:
            at = cat.features.add(name)
            cat.feature_type.append(ti)
    type_names = list(type_features)
    pools = [
        [cat.features.index(name) for name in type_features[t]] for t in type_names
    ]
    triples = []
    for i in range(n_items):
        item = f"app{i}"
        cat.items.add(item)
        k = int(rng.integers(2, len(type_names) + 1))
        chosen = sorted(rng.choice(len(type_names), size=k, replace=False).tolist())
        cat.item_types.append(chosen)
        feats = []
        for t in chosen:
            m = int(rng.integers(1, min(3, len(pools[t])) + 1))
            picked = sorted(rng.choice(pools[t], size=m, replace=False).tolist())
            feats.append(picked)
            for at in picked:
                triples.append((item, type_names[t], cat.features.names[at]))
        cat.item_features.append(feats)

    # context-dependent teacher with pronounced type preferences
    config = ModelConfig(dim=16, variant="ca-fata", seed=seed)
    space = random_space(
        rng, cat, config.dim,
        user_scale=2.2, feature_scale=2.6, type_scale=7.0, condition_scale=2.2, factor_scale=2.0,
    )
    from .training import Batch, ItemTensors, _forward

    tensors = ItemTensors(cat)
    rows = []
    scale = RatingScale(0.0, raw_max)
    for u in range(n_users):
        m = min(interactions_per_user, n_items)
        chosen_items = rng.choice(n_items, size=m, replace=False)
        sits = [random_situation(rng, cat) for _ in chosen_items]
        users_a = np.full(m, u, dtype=np.int64)
        items_a = np.asarray(chosen_items, dtype=np.int64)
        ctx_a = np.asarray(
            [[s[f] for f in range(cat.n_factors)] for s in sits], dtype=np.int64
        )
        ratings, _ = _forward(space, tensors, Batch(users_a, items_a, ctx_a, np.zeros(m)), config)
        scaled = np.clip(ratings, -0.98, 0.98)
        raw = (scaled + 1.0) / 2.0 * raw_max
        raw = np.clip(raw + rng.normal(0.0, noise_sd_raw, size=m), 0.0, raw_max)
        counts = np.expm1(raw)
        for i, sit, count in zip(chosen_items, sits, counts):
            ctx_named = {
                cat.factors.names[f]: cat.condition_names[sit[f]]
                for f in range(cat.n_factors)
            }
            rows.append((f"user{u}", f"app{i}", float(count), ctx_named))

    interactions_path = out_dir / "interactions.csv"
    with interactions_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        factor_names = list(factors)
        writer.writerow(["user", "item", "value"] + factor_names)
        for user, item, count, ctx in rows:
            writer.writerow([user, item, f"{count:.6f}"] + [ctx[f] for f in factor_names])

    triples_path = out_dir / "features.tsv"
    with triples_path.open("w") as fh:
        for item, type_name, feature in triples:
            fh.write(f"{item}\t{type_name}\t{feature}\n")

    schema_path = out_dir / "schema.json"
    schema_path.write_text(json.dumps(factors, sort_keys=True))
    return {
        "interactions": interactions_path,
        "features": triples_path,
        "schema": schema_path,
    }
