"""Per-user contextual-factor importance vectors and their k-means clustering."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .data import Catalog
from .model import EmbeddingSpace, ModelConfig, leaky_relu


@dataclass
class ImportanceMatrix:
    """One row of contextual-factor importances per user; rows sum to 1."""

    rows: np.ndarray  # (n_users, n_factors)
    users: list[str]
    factors: list[str]


def export_importance(space: EmbeddingSpace, catalog: Catalog, config: ModelConfig) -> ImportanceMatrix:
    """Every user's contextual-factor importance vector, as one matrix."""
    if not config.context_aware:
        raise ValueError(f"variant {config.variant!r} has no context parameters")
    if catalog.n_factors == 0:
        raise ValueError("schema has no contextual factors")
    beta = space.users @ space.factors.T
    act = leaky_relu(beta, config.leaky_relu_slope)
    z = np.exp(act - act.max(axis=1, keepdims=True))
    rows = z / z.sum(axis=1, keepdims=True)
    return ImportanceMatrix(rows=rows, users=list(catalog.users.names), factors=list(catalog.factors.names))


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float]


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[int(rng.integers(n))]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[pick]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(matrix: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, deterministic per seed.

    Empty clusters are re-seeded from the point farthest from its assigned
    centroid, which never increases the inertia; the per-iteration inertia
    trace is returned so callers can verify it is non-increasing.
    """
    points = np.asarray(matrix, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("matrix must be a non-empty 2-D array")
    if not (1 <= k <= len(points)):
        raise ValueError(f"k must lie in [1, {len(points)}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(points, k, rng)

    history: list[float] = []
    assignments = np.zeros(len(points), dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        new_assignments = d2.argmin(axis=1)
        min_d2 = d2[np.arange(len(points)), new_assignments]
        for j in range(k):
            members = new_assignments == j
            if not members.any():
                far = int(min_d2.argmax())
                centroids[j] = points[far]
                new_assignments[far] = j
                min_d2[far] = 0.0
        inertia = float(min_d2.sum())
        history.append(inertia)
        converged = bool(history[:-1]) and np.array_equal(new_assignments, assignments)
        assignments = new_assignments
        for j in range(k):
            members = points[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        if converged:
            break
    return KMeansResult(
        assignments=assignments,
        centroids=centroids,
        inertia=history[-1],
        inertia_history=history,
    )


def cluster_report(assignments: np.ndarray, matrix: np.ndarray, factors: list[str]) -> list[dict]:
    """Mean importance of each factor within each cluster."""
    matrix = np.asarray(matrix, dtype=float)
    if len(assignments) != len(matrix):
        raise ValueError("assignments and matrix disagree on the number of users")
    rows = []
    for cluster in sorted(set(int(c) for c in assignments)):
        members = matrix[np.asarray(assignments) == cluster]
        means = members.mean(axis=0)
        rows.append(
            {
                "cluster": cluster,
                "size": int(len(members)),
                **{factor: float(m) for factor, m in zip(factors, means)},
            }
        )
    return rows


def report_to_csv(report: list[dict], factors: list[str]) -> str:
    buf = io.StringIO()
    buf.write(",".join(["cluster", "size"] + factors) + "\n")
    for row in report:
        cells = [str(row["cluster"]), str(row["size"])] + [f"{row[f]:.6f}" for f in factors]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def format_report(report: list[dict], factors: list[str]) -> str:
    header = ["cluster", "size"] + factors
    widths = [max(len(h), 8) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in report:
        cells = [str(row["cluster"]), str(row["size"])] + [f"{row[f]:.4f}" for f in factors]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def importance_csv(matrix: ImportanceMatrix, assignments: np.ndarray | None = None) -> str:
    """Per-user CSV: ``user,<factor importances>[,cluster]``."""
    buf = io.StringIO()
    header = ["user"] + [f"{f}_pi" for f in matrix.factors]
    if assignments is not None:
        header.append("cluster")
    buf.write(",".join(header) + "\n")
    for row, user in enumerate(matrix.users):
        cells = [user] + [f"{v:.8f}" for v in matrix.rows[row]]
        if assignments is not None:
            cells.append(str(int(assignments[row])))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def inertia_sweep(matrix: np.ndarray, ks: range, seed: int = 0) -> dict[int, float]:
    return {k: kmeans(matrix, k, seed=seed).inertia for k in ks if k <= len(matrix)}
