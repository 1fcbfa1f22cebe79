"""Write the fixture checkpoint the UI integration tests serve.

Three single-type items for user alice rated 0.9 (star, driven solely by the
feature "action"), 0.55 (solid), and -0.4 (meh): disliking "action" overrides
its rating to -0.5 and must demote star below solid.
"""

import sys

import numpy as np

from argrec.data import Catalog, RatingScale
from argrec.model import Checkpoint, EmbeddingSpace, ModelConfig, save_checkpoint


def build() -> Checkpoint:
    cat = Catalog()
    for user in ("alice", "bob"):
        cat.users.add(user)
    mood = cat.add_factor("mood")
    for cond in ("calm", "busy"):
        cat.add_condition(mood, cond)
    genre = cat.types.add("genre")
    for item, feature in (("star", "action"), ("solid", "comedy"), ("meh", "drama")):
        cat.items.add(item)
        at = cat.features.add(feature)
        cat.feature_type.append(genre)
        cat.item_types.append([genre])
        cat.item_features.append([[at]])

    space = EmbeddingSpace(
        users=np.array([[1.0, 0.0], [0.5, 0.5]]),
        features=np.array([[0.9, 0.0], [0.55, 0.0], [-0.4, 0.0]]),
        types=np.array([[0.5, 0.5]]),
        factors=np.array([[0.1, 0.0]]),
        conditions=np.zeros((cat.n_conditions, 2)),
    )
    return Checkpoint(
        kind="factor",
        catalog=cat,
        scale=RatingScale(1.0, 5.0),
        config=ModelConfig(dim=2, variant="ca-fata", seed=0),
        space=space,
    )


if __name__ == "__main__":
    save_checkpoint(sys.argv[1], build())
    print(sys.argv[1])
