import numpy as np
import pytest

from argrec.data import Catalog, IdTable
from argrec.model import EmbeddingSpace, ModelConfig


def make_catalog(
    items: dict[str, dict[str, list[str]]],
    schema: dict[str, list[str]] | None = None,
    users: list[str] = ("u0",),
) -> Catalog:
    """Hand-build a catalog from nested dicts: {item: {type: [features]}}."""
    cat = Catalog()
    for u in users:
        cat.users.add(u)
    for factor, conds in (schema or {}).items():
        f = cat.add_factor(factor)
        for c in conds:
            cat.add_condition(f, c)
    for item, by_type in items.items():
        cat.items.add(item)
        type_idxs, feats = [], []
        for type_name, feature_names in by_type.items():
            t = cat.types.add(type_name)
            type_idxs.append(t)
            row = []
            for name in feature_names:
                at = cat.features.add(name)
                if at == len(cat.feature_type):
                    cat.feature_type.append(t)
                row.append(at)
            feats.append(row)
        cat.item_types.append(type_idxs)
        cat.item_features.append(feats)
    return cat


def space_from_tables(catalog, *, users=None, features=None, types=None,
                      factors=None, conditions=None, dim=2):
    """EmbeddingSpace with explicit rows; missing tables default to zeros."""

    def table(rows, n):
        if rows is None:
            return np.zeros((n, dim))
        arr = np.asarray(rows, dtype=float).reshape(n, dim)
        return arr

    return EmbeddingSpace(
        users=table(users, catalog.n_users),
        features=table(features, catalog.n_features),
        types=table(types, catalog.n_types),
        factors=table(factors, catalog.n_factors),
        conditions=table(conditions, catalog.n_conditions),
    )


@pytest.fixture
def worked_instance():
    """The 2-d instance with two equally weighted types: one supporter, one attacker.

    u = (1, 0); both type vectors equal so type importance is (0.5, 0.5);
    feature a = (0.5, 0) rates 0.5, feature b = (-0.25, 0) rates -0.25;
    the prediction is 0.5*0.5 + 0.5*(-0.25) = 0.125.
    """
    catalog = make_catalog({"i0": {"ta": ["a"], "tb": ["b"]}})
    space = space_from_tables(
        catalog,
        users=[[1.0, 0.0]],
        features=[[0.5, 0.0], [-0.25, 0.0]],
        types=[[0.3, 0.7], [0.3, 0.7]],
    )
    config = ModelConfig(dim=2, variant="ca-fata", seed=0)
    return space, catalog, config
