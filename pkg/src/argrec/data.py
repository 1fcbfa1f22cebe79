"""Loading, validation, and preprocessing of interaction logs and item catalogs."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

UNKNOWN_CONDITION = "unknown"
DATASET_FORMAT_VERSION = 1


class IngestError(ValueError):
    """Malformed or inconsistent input data."""


class IdTable:
    """Bidirectional mapping between external string ids and dense integer indexes."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self.names)
            self._index[name] = idx
            self.names.append(name)
        return idx

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown id {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.names)


@dataclass
class RawInteraction:
    """One (user, item) event with its contextual situation and raw value."""

    user_id: str
    item_id: str
    value: float
    context: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RatingScale:
    """Linear mapping between the raw rating range and [-1, 1]."""

    raw_min: float
    raw_max: float

    def __post_init__(self):
        if not (self.raw_min < self.raw_max):
            raise ValueError(f"raw_min must be < raw_max, got [{self.raw_min}, {self.raw_max}]")


@dataclass
class Catalog:
    """Items grouped by feature type, plus the context schema and all id tables.

    Conditions are stored under namespaced keys ``<factor>=<condition>`` because
    different factors may reuse a display name (every factor gets a reserved
    ``unknown`` condition); ``condition_names`` keeps the display names.
    """

    users: IdTable = field(default_factory=IdTable)
    items: IdTable = field(default_factory=IdTable)
    features: IdTable = field(default_factory=IdTable)
    types: IdTable = field(default_factory=IdTable)
    factors: IdTable = field(default_factory=IdTable)
    conditions: IdTable = field(default_factory=IdTable)
    item_types: list[list[int]] = field(default_factory=list)
    item_features: list[list[list[int]]] = field(default_factory=list)
    feature_type: list[int] = field(default_factory=list)
    condition_factor: list[int] = field(default_factory=list)
    condition_names: list[str] = field(default_factory=list)
    factor_conditions: list[list[int]] = field(default_factory=list)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def n_conditions(self) -> int:
        return len(self.conditions)

    def add_factor(self, name: str) -> int:
        idx = self.factors.add(name)
        if idx == len(self.factor_conditions):
            self.factor_conditions.append([])
        return idx

    def add_condition(self, factor_idx: int, name: str) -> int:
        key = f"{self.factors.names[factor_idx]}={name}"
        idx = self.conditions.add(key)
        if idx == len(self.condition_names):
            self.condition_names.append(name)
            self.condition_factor.append(factor_idx)
            self.factor_conditions[factor_idx].append(idx)
        return idx

    def condition_index(self, factor_name: str, condition_name: str) -> int:
        return self.conditions.index(f"{factor_name}={condition_name}")

    def item_feature_list(self, item_idx: int) -> list[int]:
        return [at for feats in self.item_features[item_idx] for at in feats]

    def items_with_feature(self, feature_idx: int) -> list[int]:
        out = []
        for item_idx in range(self.n_items):
            if any(feature_idx in feats for feats in self.item_features[item_idx]):
                out.append(item_idx)
        return out

    def to_dict(self) -> dict:
        return {
            "users": self.users.names,
            "items": self.items.names,
            "features": self.features.names,
            "types": self.types.names,
            "factors": self.factors.names,
            "condition_names": self.condition_names,
            "condition_factor": self.condition_factor,
            "item_types": self.item_types,
            "item_features": self.item_features,
            "feature_type": self.feature_type,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Catalog":
        cat = cls(
            users=IdTable(doc["users"]),
            items=IdTable(doc["items"]),
            features=IdTable(doc["features"]),
            types=IdTable(doc["types"]),
        )
        for name in doc["factors"]:
            cat.add_factor(name)
        for name, factor_idx in zip(doc["condition_names"], doc["condition_factor"]):
            cat.add_condition(factor_idx, name)
        cat.item_types = [list(ts) for ts in doc["item_types"]]
        cat.item_features = [[list(fs) for fs in item] for item in doc["item_features"]]
        cat.feature_type = list(doc["feature_type"])
        return cat

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: Path | str) -> "Catalog":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_catalog(feature_triples_path: Path | str, context_schema_path: Path | str) -> Catalog:
    """Build a Catalog from an item/type/feature TSV and a context-schema JSON.

    Duplicate triples are dropped with a warning; a feature claimed by two
    different types, or a malformed row, is an error naming the line.
    """
    cat = Catalog()
    schema = json.loads(Path(context_schema_path).read_text())
    if not isinstance(schema, dict):
        raise IngestError(f"{context_schema_path}: schema must be a JSON object")
    for factor_name, condition_names in schema.items():
        f = cat.add_factor(str(factor_name))
        if not isinstance(condition_names, list):
            raise IngestError(f"{context_schema_path}: conditions of {factor_name!r} must be a list")
        for cond in condition_names:
            cat.add_condition(f, str(cond))
        # reserved value for interactions that do not record this factor
        cat.add_condition(f, UNKNOWN_CONDITION)

    seen: set[tuple[str, str, str]] = set()
    dupes = 0
    per_item: dict[str, dict[str, list[str]]] = {}
    path = Path(feature_triples_path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise IngestError(f"{path}:{lineno}: expected item<TAB>type<TAB>feature")
            item, type_name, feature = parts
            if (item, type_name, feature) in seen:
                dupes += 1
                continue
            seen.add((item, type_name, feature))
            owner = per_item.setdefault(item, {})
            owner.setdefault(type_name, []).append(feature)
            t = cat.types.add(type_name)
            at = cat.features.add(feature)
            if at == len(cat.feature_type):
                cat.feature_type.append(t)
            elif cat.feature_type[at] != t:
                raise IngestError(
                    f"{path}:{lineno}: feature {feature!r} already belongs to type "
                    f"{cat.types.names[cat.feature_type[at]]!r}"
                )
    if dupes:
        logger.warning("dropped %d duplicate feature triples", dupes)
    if not per_item:
        raise IngestError("catalog has no items")

    for item, by_type in per_item.items():
        cat.items.add(item)
        type_idxs = []
        feats = []
        for type_name, feature_names in by_type.items():
            type_idxs.append(cat.types.index(type_name))
            feats.append([cat.features.index(f) for f in feature_names])
        cat.item_types.append(type_idxs)
        cat.item_features.append(feats)
    return cat


def load_interactions(path: Path | str, catalog: Catalog) -> list[RawInteraction]:
    """Read the interactions CSV (``user,item,value,<factor>...``) against a catalog.

    Rows whose item is absent from the catalog are dropped (dirty logs are
    normal); blank context cells map to the reserved ``unknown`` condition.
    """
    path = Path(path)
    out: list[RawInteraction] = []
    dropped = 0
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}: empty interactions file")
        if header[:3] != ["user", "item", "value"]:
            raise IngestError(f"{path}: header must start with user,item,value")
        factor_cols = header[3:]
        for col in factor_cols:
            if col not in catalog.factors:
                raise IngestError(f"{path}: unknown contextual factor column {col!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            user, item, raw_value = row[0], row[1], row[2]
            try:
                value = float(raw_value)
            except ValueError:
                raise IngestError(f"{path}:{lineno}: value {raw_value!r} is not a number") from None
            if not math.isfinite(value):
                raise IngestError(f"{path}:{lineno}: value must be finite")
            context = {}
            for col, cell in zip(factor_cols, row[3:]):
                cond = cell.strip() or UNKNOWN_CONDITION
                if f"{col}={cond}" not in catalog.conditions:
                    raise IngestError(f"{path}:{lineno}: unknown condition {cell!r} for factor {col!r}")
                context[col] = cond
            if item not in catalog.items:
                dropped += 1
                continue
            out.append(RawInteraction(user, item, value, context))
    if dropped:
        logger.info("dropped %d interactions whose item is not in the catalog", dropped)
    return out


def log_transform_counts(interactions: Sequence[RawInteraction]) -> list[RawInteraction]:
    """Replace usage counts by ln(1 + count); counts must be non-negative."""
    out = []
    for inter in interactions:
        if inter.value < 0:
            raise ValueError(f"negative count {inter.value} for ({inter.user_id}, {inter.item_id})")
        out.append(RawInteraction(inter.user_id, inter.item_id, math.log1p(inter.value), dict(inter.context)))
    return out


def k_core_filter(interactions: Sequence[RawInteraction], k: int) -> list[RawInteraction]:
    """Iteratively drop users and items with fewer than k interactions until stable."""
    if k < 1:
        raise ValueError("k must be >= 1")
    current = list(interactions)
    while True:
        user_counts = Counter(i.user_id for i in current)
        item_counts = Counter(i.item_id for i in current)
        kept = [
            i for i in current
            if user_counts[i.user_id] >= k and item_counts[i.item_id] >= k
        ]
        if len(kept) == len(current):
            return kept
        current = kept


def scale_rating(value, scale: RatingScale):
    """Linearly map a raw rating onto [-1, 1]."""
    arr = np.asarray(value, dtype=float)
    if np.any(arr < scale.raw_min) or np.any(arr > scale.raw_max):
        raise ValueError(f"value outside rating scale [{scale.raw_min}, {scale.raw_max}]")
    scaled = 2.0 * (arr - scale.raw_min) / (scale.raw_max - scale.raw_min) - 1.0
    return float(scaled) if np.isscalar(value) or arr.ndim == 0 else scaled


def inverse_scale(scaled, scale: RatingScale):
    """Map a [-1, 1] rating back onto the raw scale."""
    arr = np.asarray(scaled, dtype=float)
    raw = (arr + 1.0) / 2.0 * (scale.raw_max - scale.raw_min) + scale.raw_min
    return float(raw) if np.isscalar(scaled) or arr.ndim == 0 else raw


@dataclass
class Dataset:
    """Encoded interactions (dense ids, complete situations, scaled ratings) plus splits."""

    user_idx: np.ndarray
    item_idx: np.ndarray
    context: np.ndarray  # (n, n_factors) condition index per factor column
    rating: np.ndarray   # scaled to [-1, 1]
    scale: RatingScale
    train_idx: np.ndarray
    valid_idx: np.ndarray
    test_idx: np.ndarray

    def __len__(self) -> int:
        return len(self.rating)

    def split(self, name: str) -> np.ndarray:
        return {"train": self.train_idx, "valid": self.valid_idx, "test": self.test_idx}[name]

    def arrays(self, name: str):
        idx = self.split(name)
        return self.user_idx[idx], self.item_idx[idx], self.context[idx], self.rating[idx]

    def to_dict(self) -> dict:
        return {
            "format_version": DATASET_FORMAT_VERSION,
            "user_idx": self.user_idx.tolist(),
            "item_idx": self.item_idx.tolist(),
            "context": self.context.tolist(),
            "rating": self.rating.tolist(),
            "scale": {"raw_min": self.scale.raw_min, "raw_max": self.scale.raw_max},
            "train_idx": self.train_idx.tolist(),
            "valid_idx": self.valid_idx.tolist(),
            "test_idx": self.test_idx.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Dataset":
        if doc.get("format_version") != DATASET_FORMAT_VERSION:
            raise IngestError(f"unsupported dataset format_version {doc.get('format_version')!r}")
        return cls(
            user_idx=np.asarray(doc["user_idx"], dtype=np.int64),
            item_idx=np.asarray(doc["item_idx"], dtype=np.int64),
            context=np.asarray(doc["context"], dtype=np.int64).reshape(len(doc["user_idx"]), -1),
            rating=np.asarray(doc["rating"], dtype=float),
            scale=RatingScale(doc["scale"]["raw_min"], doc["scale"]["raw_max"]),
            train_idx=np.asarray(doc["train_idx"], dtype=np.int64),
            valid_idx=np.asarray(doc["valid_idx"], dtype=np.int64),
            test_idx=np.asarray(doc["test_idx"], dtype=np.int64),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: Path | str) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


def split_dataset(
    interactions: Sequence[RawInteraction],
    catalog: Catalog,
    scale: RatingScale,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Dataset:
    """Encode interactions and split train/valid/test.

    Deterministic for a fixed seed. Users with >= 3 interactions are guaranteed
    at least one training example; users are registered in the catalog here, in
    order of first appearance.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if not interactions:
        raise ValueError("no interactions to split")

    n = len(interactions)
    factor_names = catalog.factors.names
    user_idx = np.empty(n, dtype=np.int64)
    item_idx = np.empty(n, dtype=np.int64)
    context = np.empty((n, len(factor_names)), dtype=np.int64)
    rating = np.empty(n, dtype=float)
    for row, inter in enumerate(interactions):
        user_idx[row] = catalog.users.add(inter.user_id)
        item_idx[row] = catalog.items.index(inter.item_id)
        rating[row] = scale_rating(inter.value, scale)
        for j, factor in enumerate(factor_names):
            cond = inter.context.get(factor, UNKNOWN_CONDITION)
            context[row, j] = catalog.condition_index(factor, cond)

    rng = np.random.default_rng(seed)
    n_test = int(round(ratios[2] * n))
    n_valid = int(round(ratios[1] * n))

    by_user: dict[int, list[int]] = {}
    for row in range(n):
        by_user.setdefault(int(user_idx[row]), []).append(row)
    forced_train = []
    forced = np.zeros(n, dtype=bool)
    for u in sorted(by_user):
        rows = by_user[u]
        if len(rows) >= 3:
            pick = rows[int(rng.integers(len(rows)))]
            forced_train.append(pick)
            forced[pick] = True

    pool = np.flatnonzero(~forced)
    perm = pool[rng.permutation(len(pool))]
    test = perm[:n_test]
    valid = perm[n_test:n_test + n_valid]
    train = np.concatenate([perm[n_test + n_valid:], np.asarray(forced_train, dtype=np.int64)])
    return Dataset(
        user_idx=user_idx,
        item_idx=item_idx,
        context=context,
        rating=rating,
        scale=scale,
        train_idx=np.sort(train),
        valid_idx=np.sort(valid),
        test_idx=np.sort(test),
    )
