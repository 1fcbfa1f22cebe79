"""SGD fitting of the embedding tables against scaled ratings, plus evaluation.

Training uses hand-derived gradients through the full forward pass (both
softmaxes and the LeakyReLU included) so they can be audited coordinate by
coordinate against central finite differences. The batch kernels here are a
vectorized counterpart of model.predict and are property-tested against it.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Catalog, Dataset, RatingScale, inverse_scale
from .model import (
    EmbeddingSpace,
    MfSpace,
    ModelConfig,
    init_embeddings,
    init_mf_embeddings,
    leaky_relu,
    leaky_relu_grad,
)

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 0.05
    l2_reg: float = 1e-5
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.l2_reg < 0 or self.early_stop_patience < 0:
            raise ValueError("learning_rate, l2_reg, early_stop_patience must be non-negative")


@dataclass(frozen=True)
class EvalReport:
    rmse_raw: float
    mae_raw: float
    rmse_scaled: float
    mae_scaled: float
    n_test: int
    variant: str
    # diagnostic: fraction of per-feature ratings outside [-1, 1] on the eval set
    rating_overflow_frac: float = 0.0

    def to_dict(self) -> dict:
        return {
            "rmse_raw": self.rmse_raw,
            "mae_raw": self.mae_raw,
            "rmse_scaled": self.rmse_scaled,
            "mae_scaled": self.mae_scaled,
            "n_test": self.n_test,
            "variant": self.variant,
            "rating_overflow_frac": self.rating_overflow_frac,
        }


@dataclass
class Batch:
    """A slice of encoded interactions."""

    users: np.ndarray
    items: np.ndarray
    context: np.ndarray  # (b, n_factors)
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.users)


class ItemTensors:
    """Padded per-item type/feature layout for vectorized batches."""

    def __init__(self, catalog: Catalog):
        n_items = catalog.n_items
        t_max = max(len(ts) for ts in catalog.item_types)
        f_max = max(
            (len(fs) for item in catalog.item_features for fs in item), default=1
        )
        self.type_ids = np.zeros((n_items, t_max), dtype=np.int64)
        self.type_mask = np.zeros((n_items, t_max), dtype=bool)
        self.feat_ids = np.zeros((n_items, t_max, f_max), dtype=np.int64)
        self.feat_mask = np.zeros((n_items, t_max, f_max), dtype=bool)
        self.feat_counts = np.ones((n_items, t_max), dtype=float)
        for i in range(n_items):
            for j, (t, feats) in enumerate(zip(catalog.item_types[i], catalog.item_features[i])):
                self.type_ids[i, j] = t
                self.type_mask[i, j] = True
                self.feat_counts[i, j] = len(feats)
                for q, at in enumerate(feats):
                    self.feat_ids[i, j, q] = at
                    self.feat_mask[i, j, q] = True


def _forward(space: EmbeddingSpace, tensors: ItemTensors, batch: Batch, config: ModelConfig):
    """Vectorized forward pass over a batch; returns (ratings, cache)."""
    slope = config.leaky_relu_slope
    U = space.users[batch.users]
    use_context = config.context_aware and batch.context.shape[1] > 0
    if use_context:
        beta = U @ space.factors.T                      # (b, C)
        pi = _softmax_rows(leaky_relu(beta, slope))
        CD = space.conditions[batch.context]            # (b, C, d)
        cs_vec = np.einsum("bc,bcd->bd", pi, CD)
        X = U + cs_vec
    else:
        beta = pi = CD = None
        X = U

    tids = tensors.type_ids[batch.items]                # (b, T)
    tmask = tensors.type_mask[batch.items]
    if config.learned_type_importance:
        TV = space.types[tids]                          # (b, T, d)
        gamma = np.einsum("bd,btd->bt", X, TV)
        act = np.where(tmask, leaky_relu(gamma, slope), -np.inf)
        rho = _softmax_rows(act)
    else:
        TV = gamma = None
        rho = tmask / tmask.sum(axis=1, keepdims=True)

    fids = tensors.feat_ids[batch.items]                # (b, T, F)
    fmask = tensors.feat_mask[batch.items]
    counts = tensors.feat_counts[batch.items]           # (b, T)
    AV = space.features[fids]                           # (b, T, F, d)
    P = np.einsum("bd,btfd->btf", X, AV) * fmask
    contr = P.sum(axis=2) / counts
    ratings = (rho * contr * tmask).sum(axis=1)

    cache = {
        "U": U, "X": X, "beta": beta, "pi": pi, "CD": CD,
        "tids": tids, "tmask": tmask, "TV": TV, "gamma": gamma, "rho": rho,
        "fids": fids, "fmask": fmask, "counts": counts, "AV": AV, "P": P,
        "contr": contr, "ratings": ratings, "use_context": use_context,
    }
    return ratings, cache


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    z = np.exp(x - m)
    return z / z.sum(axis=-1, keepdims=True)


def _backward(
    space: EmbeddingSpace,
    batch: Batch,
    cache: dict,
    d_ratings: np.ndarray,
    config: ModelConfig,
) -> dict[str, np.ndarray]:
    """Dense gradients of sum(d_ratings * ratings) w.r.t. every embedding table."""
    slope = config.leaky_relu_slope
    g = d_ratings
    grads = {name: np.zeros_like(space.table(name)) for name in EmbeddingSpace.TABLES}

    rho, contr, tmask = cache["rho"], cache["contr"], cache["tmask"]
    fmask, counts, X = cache["fmask"], cache["counts"], cache["X"]

    # features and their pull on the contextual user vector
    dP = (g[:, None, None] * (rho / counts)[:, :, None]) * fmask
    np.add.at(grads["features"], cache["fids"][fmask], dP[fmask, None] * X[np.where(fmask)[0]])
    dX = np.einsum("btf,btfd->bd", dP, cache["AV"])

    if config.learned_type_importance:
        drho = (g[:, None] * contr) * tmask
        dot = (drho * rho).sum(axis=1, keepdims=True)
        db = rho * (drho - dot)
        dgamma = db * leaky_relu_grad(cache["gamma"], slope) * tmask
        np.add.at(grads["types"], cache["tids"][tmask], dgamma[tmask, None] * X[np.where(tmask)[0]])
        dX = dX + np.einsum("bt,btd->bd", dgamma, cache["TV"])

    dU = dX
    if cache["use_context"]:
        pi, CD, beta, U = cache["pi"], cache["CD"], cache["beta"], cache["U"]
        dcd = pi[:, :, None] * dX[:, None, :]           # (b, C, d)
        flat = batch.context.reshape(-1)
        np.add.at(grads["conditions"], flat, dcd.reshape(len(flat), -1))
        m = np.einsum("bd,bcd->bc", dX, CD)
        mbar = (m * pi).sum(axis=1, keepdims=True)
        dbeta = pi * (m - mbar) * leaky_relu_grad(beta, slope)
        grads["factors"] += dbeta.T @ U
        dU = dU + dbeta @ space.factors

    np.add.at(grads["users"], batch.users, dU)
    return grads


def _touched_rows(batch: Batch, cache: dict, config: ModelConfig, space: EmbeddingSpace) -> dict[str, np.ndarray]:
    touched = {
        "users": np.unique(batch.users),
        "features": np.unique(cache["fids"][cache["fmask"]]),
        "types": np.unique(cache["tids"][cache["tmask"]])
        if config.learned_type_importance
        else np.empty(0, dtype=np.int64),
        "factors": np.arange(len(space.factors)) if cache["use_context"] else np.empty(0, dtype=np.int64),
        "conditions": np.unique(batch.context) if cache["use_context"] else np.empty(0, dtype=np.int64),
    }
    return touched


def loss(batch: Batch, space: EmbeddingSpace, catalog: Catalog, config: ModelConfig, l2_reg: float,
         tensors: ItemTensors | None = None) -> float:
    """Mean squared error on the batch plus l2 over the embedding rows it touches."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    tensors = tensors or ItemTensors(catalog)
    ratings, cache = _forward(space, tensors, batch, config)
    mse = float(np.mean((ratings - batch.targets) ** 2))
    reg = 0.0
    if l2_reg:
        for name, rows in _touched_rows(batch, cache, config, space).items():
            if len(rows):
                reg += float(np.sum(space.table(name)[rows] ** 2))
    return mse + l2_reg * reg


def gradients(batch: Batch, space: EmbeddingSpace, catalog: Catalog, config: ModelConfig, l2_reg: float,
              tensors: ItemTensors | None = None) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-table sparse gradients of loss(): {table: (row indexes, gradient rows)}."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    tensors = tensors or ItemTensors(catalog)
    ratings, cache = _forward(space, tensors, batch, config)
    d_ratings = 2.0 * (ratings - batch.targets) / len(batch)
    dense = _backward(space, batch, cache, d_ratings, config)
    out = {}
    for name, rows in _touched_rows(batch, cache, config, space).items():
        if len(rows) == 0:
            continue
        rows_grad = dense[name][rows]
        if l2_reg:
            rows_grad = rows_grad + 2.0 * l2_reg * space.table(name)[rows]
        out[name] = (rows, rows_grad)
    return out


def _batch_ratings(space, tensors, users, items, context, config, chunk: int = 8192) -> np.ndarray:
    preds = np.empty(len(users), dtype=float)
    for start in range(0, len(users), chunk):
        sl = slice(start, start + chunk)
        b = Batch(users[sl], items[sl], context[sl], np.zeros(len(users[sl])))
        preds[sl], _ = _forward(space, tensors, b, config)
    return preds


def _rmse_raw(space, tensors, dataset: Dataset, split: str, config: ModelConfig) -> float:
    users, items, context, targets = dataset.arrays(split)
    preds = np.clip(_batch_ratings(space, tensors, users, items, context, config), -1.0, 1.0)
    err = inverse_scale(preds, dataset.scale) - inverse_scale(targets, dataset.scale)
    return float(np.sqrt(np.mean(err ** 2)))


def train(
    dataset: Dataset,
    catalog: Catalog,
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_path: Path | str | None = None,
) -> tuple[EmbeddingSpace, list[dict]]:
    """Mini-batch SGD with L2 weight decay and early stopping on validation RMSE.

    Deterministic for fixed seeds: fixed shuffle order, sequential updates.
    Returns the best-validation embeddings and the per-epoch training log.
    """
    if len(dataset.train_idx) == 0:
        raise ValueError("dataset has an empty train split")
    tensors = ItemTensors(catalog)
    space = init_embeddings(catalog, model_config)
    rng = np.random.default_rng(train_config.seed)
    users, items, context, targets = dataset.arrays("train")
    n = len(users)
    lr = train_config.learning_rate
    l2 = train_config.l2_reg
    has_valid = len(dataset.valid_idx) > 0

    best_rmse = np.inf
    best_space = space.copy()
    bad_epochs = 0
    log: list[dict] = []
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, train_config.batch_size):
            take = perm[start:start + train_config.batch_size]
            batch = Batch(users[take], items[take], context[take], targets[take])
            ratings, cache = _forward(space, tensors, batch, model_config)
            resid = ratings - batch.targets
            d_ratings = 2.0 * resid / len(batch)
            dense = _backward(space, batch, cache, d_ratings, model_config)
            batch_loss = float(np.mean(resid ** 2))
            for name, rows in _touched_rows(batch, cache, model_config, space).items():
                if len(rows) == 0:
                    continue
                table = space.table(name)
                grad_rows = dense[name][rows]
                if l2:
                    batch_loss += l2 * float(np.sum(table[rows] ** 2))
                    grad_rows = grad_rows + 2.0 * l2 * table[rows]
                table[rows] -= lr * grad_rows
            epoch_loss += batch_loss * len(batch)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f"training diverged at epoch {epoch}: loss={epoch_loss}")

        valid_rmse = (
            _rmse_raw(space, tensors, dataset, "valid", model_config) if has_valid else epoch_loss
        )
        wall_ms = (time.perf_counter() - t0) * 1000.0
        log.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "valid_rmse_raw": valid_rmse,
                "wall_ms": wall_ms,
            }
        )
        logger.debug("epoch %d loss %.6f valid %.6f", epoch, epoch_loss, valid_rmse)
        if valid_rmse < best_rmse:
            best_rmse = valid_rmse
            best_space = space.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > train_config.early_stop_patience:
                break

    if log_path is not None:
        with Path(log_path).open("w") as fh:
            for record in log:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return best_space, log


def evaluate(
    space: EmbeddingSpace,
    dataset: Dataset,
    catalog: Catalog,
    config: ModelConfig,
    split: str = "test",
) -> EvalReport:
    """RMSE/MAE on raw and scaled scales; predictions are clamped to [-1, 1] first."""
    users, items, context, targets = dataset.arrays(split)
    if len(users) == 0:
        raise ValueError(f"{split} split is empty")
    tensors = ItemTensors(catalog)
    overflow_n = 0
    total_n = 0
    preds = np.empty(len(users), dtype=float)
    for start in range(0, len(users), 8192):
        sl = slice(start, start + 8192)
        b = Batch(users[sl], items[sl], context[sl], targets[sl])
        ratings, cache = _forward(space, tensors, b, config)
        preds[sl] = ratings
        P, fmask = cache["P"], cache["fmask"]
        overflow_n += int(np.sum(np.abs(P[fmask]) > 1.0))
        total_n += int(fmask.sum())
    preds = np.clip(preds, -1.0, 1.0)
    return _metrics(
        preds, targets, dataset.scale, config.variant,
        overflow_frac=overflow_n / max(total_n, 1),
    )


def _metrics(pred_scaled, target_scaled, scale: RatingScale, variant: str, overflow_frac=0.0) -> EvalReport:
    pred_scaled = np.asarray(pred_scaled, dtype=float)
    target_scaled = np.asarray(target_scaled, dtype=float)
    err_scaled = pred_scaled - target_scaled
    err_raw = inverse_scale(pred_scaled, scale) - inverse_scale(target_scaled, scale)
    return EvalReport(
        rmse_raw=float(np.sqrt(np.mean(err_raw ** 2))),
        mae_raw=float(np.mean(np.abs(err_raw))),
        rmse_scaled=float(np.sqrt(np.mean(err_scaled ** 2))),
        mae_scaled=float(np.mean(np.abs(err_scaled))),
        n_test=len(pred_scaled),
        variant=variant,
        rating_overflow_frac=float(overflow_frac),
    )


def train_mf(
    dataset: Dataset,
    catalog: Catalog,
    dim: int,
    train_config: TrainConfig,
    log_path: Path | str | None = None,
) -> tuple[MfSpace, list[dict]]:
    """SGD for the plain user x item baseline, same loop contract as train()."""
    if len(dataset.train_idx) == 0:
        raise ValueError("dataset has an empty train split")
    mf = init_mf_embeddings(catalog, dim, train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    users, items, _, targets = dataset.arrays("train")
    n = len(users)
    lr, l2 = train_config.learning_rate, train_config.l2_reg
    has_valid = len(dataset.valid_idx) > 0

    best_rmse = np.inf
    best = mf.copy()
    bad_epochs = 0
    log: list[dict] = []
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, train_config.batch_size):
            take = perm[start:start + train_config.batch_size]
            bu, bi, by = users[take], items[take], targets[take]
            preds = np.einsum("bd,bd->b", mf.users[bu], mf.items[bi])
            resid = preds - by
            d = 2.0 * resid / len(take)
            gu = np.zeros_like(mf.users)
            gi = np.zeros_like(mf.items)
            np.add.at(gu, bu, d[:, None] * mf.items[bi])
            np.add.at(gi, bi, d[:, None] * mf.users[bu])
            batch_loss = float(np.mean(resid ** 2))
            for table, grad, rows in ((mf.users, gu, np.unique(bu)), (mf.items, gi, np.unique(bi))):
                rows_grad = grad[rows]
                if l2:
                    batch_loss += l2 * float(np.sum(table[rows] ** 2))
                    rows_grad = rows_grad + 2.0 * l2 * table[rows]
                table[rows] -= lr * rows_grad
            epoch_loss += batch_loss * len(take)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f"training diverged at epoch {epoch}: loss={epoch_loss}")

        if has_valid:
            vu, vi, _, vy = dataset.arrays("valid")
            vp = np.clip(np.einsum("bd,bd->b", mf.users[vu], mf.items[vi]), -1.0, 1.0)
            err = inverse_scale(vp, dataset.scale) - inverse_scale(vy, dataset.scale)
            valid_rmse = float(np.sqrt(np.mean(err ** 2)))
        else:
            valid_rmse = epoch_loss
        log.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "valid_rmse_raw": valid_rmse,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            }
        )
        if valid_rmse < best_rmse:
            best_rmse = valid_rmse
            best = mf.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > train_config.early_stop_patience:
                break

    if log_path is not None:
        with Path(log_path).open("w") as fh:
            for record in log:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return best, log


def evaluate_mf(mf: MfSpace, dataset: Dataset, split: str = "test") -> EvalReport:
    users, items, _, targets = dataset.arrays(split)
    if len(users) == 0:
        raise ValueError(f"{split} split is empty")
    preds = np.clip(np.einsum("bd,bd->b", mf.users[users], mf.items[items]), -1.0, 1.0)
    return _metrics(preds, targets, dataset.scale, "mf")
