import numpy as np
import pytest

from conftest import make_catalog, space_from_tables

from argrec.analysis import (
    cluster_report,
    export_importance,
    importance_csv,
    inertia_sweep,
    kmeans,
    report_to_csv,
)
from argrec.model import ModelConfig, context_factor_importance
from argrec.synthetic import random_catalog, random_space


class TestExportImportance:
    def test_single_factor_rows_are_one(self):
        cat = make_catalog({"i": {"t": ["f"]}}, schema={"cf": ["a"]},
                           users=["u0", "u1", "u2"])
        space = space_from_tables(cat, users=[[1, 0], [0, 1], [2, 2]],
                                  factors=[[0.5, -0.5]])
        m = export_importance(space, cat, ModelConfig(dim=2))
        assert m.rows.shape == (3, 1)
        assert np.allclose(m.rows, 1.0)

    def test_rows_sum_to_one_and_match_single_calls(self):
        rng = np.random.default_rng(0)
        cat = random_catalog(rng, n_users=12, n_factors=4)
        space = random_space(rng, cat, 5)
        cfg = ModelConfig(dim=5)
        m = export_importance(space, cat, cfg)
        assert np.allclose(m.rows.sum(axis=1), 1.0, atol=1e-9)
        for u in (0, 5, 11):
            _, pi = context_factor_importance(u, space, cat, cfg.leaky_relu_slope)
            assert np.allclose(m.rows[u], [pi[j] for j in range(cat.n_factors)], atol=1e-12)

    def test_seven_factor_rows(self):
        rng = np.random.default_rng(1)
        cat = random_catalog(rng, n_users=5, n_factors=7)
        space = random_space(rng, cat, 4)
        m = export_importance(space, cat, ModelConfig(dim=4))
        assert m.rows.shape == (5, 7)
        assert len(m.factors) == 7

    def test_context_free_variant_rejected(self):
        rng = np.random.default_rng(2)
        cat = random_catalog(rng)
        space = random_space(rng, cat, 3)
        with pytest.raises(ValueError, match="context"):
            export_importance(space, cat, ModelConfig(dim=3, variant="fata"))


class TestKmeans:
    def test_k1_matches_analytic_centroid(self):
        rng = np.random.default_rng(0)
        points = rng.normal(size=(40, 3))
        result = kmeans(points, 1, seed=0)
        mean = points.mean(axis=0)
        assert np.max(np.abs(result.centroids[0] - mean)) < 1e-9
        assert result.inertia == pytest.approx(((points - mean) ** 2).sum(), rel=1e-9)

    def test_two_blobs_recovered(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 0.05, size=(30, 2))
        b = rng.normal(5.0, 0.05, size=(25, 2))
        points = np.vstack([a, b])
        result = kmeans(points, 2, seed=3)
        labels = result.assignments
        assert len(set(labels[:30].tolist())) == 1
        assert len(set(labels[30:].tolist())) == 1
        assert labels[0] != labels[-1]
        assert result.inertia < kmeans(points, 1, seed=3).inertia

    def test_k_equals_n_zero_inertia(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(8, 2))
        result = kmeans(points, 8, seed=0)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)

    def test_k_bounds(self):
        points = np.zeros((3, 2))
        with pytest.raises(ValueError):
            kmeans(points, 4, seed=0)
        with pytest.raises(ValueError):
            kmeans(points, 0, seed=0)

    def test_inertia_monotone_nonincreasing(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            points = rng.normal(size=(rng.integers(10, 60), rng.integers(2, 6)))
            k = int(rng.integers(1, min(8, len(points))))
            result = kmeans(points, k, seed=trial)
            history = result.inertia_history
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(30, 3))
        r1 = kmeans(points, 3, seed=7)
        r2 = kmeans(points, 3, seed=7)
        assert np.array_equal(r1.assignments, r2.assignments)
        assert np.array_equal(r1.centroids, r2.centroids)


class TestClusterReport:
    def test_single_cluster_is_column_means(self):
        matrix = np.array([[0.2, 0.8], [0.6, 0.4]])
        report = cluster_report(np.array([0, 0]), matrix, ["f1", "f2"])
        assert report == [{"cluster": 0, "size": 2, "f1": pytest.approx(0.4),
                           "f2": pytest.approx(0.6)}]

    def test_singleton_clusters_echo_rows(self):
        matrix = np.array([[0.1, 0.9], [0.7, 0.3]])
        report = cluster_report(np.array([0, 1]), matrix, ["f1", "f2"])
        assert report[0]["f1"] == pytest.approx(0.1)
        assert report[1]["f1"] == pytest.approx(0.7)

    def test_reflects_constructed_difference(self):
        matrix = np.vstack([np.tile([0.9, 0.1], (5, 1)), np.tile([0.1, 0.9], (5, 1))])
        assignments = np.array([0] * 5 + [1] * 5)
        report = cluster_report(assignments, matrix, ["fa", "fb"])
        assert report[0]["fa"] > report[1]["fa"]
        assert report[1]["fb"] > report[0]["fb"]

    def test_csv_renderings(self):
        matrix = np.array([[0.25, 0.75], [0.75, 0.25]])
        report = cluster_report(np.array([0, 1]), matrix, ["fa", "fb"])
        csv_text = report_to_csv(report, ["fa", "fb"])
        assert csv_text.splitlines()[0] == "cluster,size,fa,fb"
        assert len(csv_text.splitlines()) == 3


class TestExportCsv:
    def test_per_user_csv(self):
        rng = np.random.default_rng(5)
        cat = random_catalog(rng, n_users=4, n_factors=2)
        space = random_space(rng, cat, 3)
        m = export_importance(space, cat, ModelConfig(dim=3))
        result = kmeans(m.rows, 2, seed=0)
        text = importance_csv(m, result.assignments)
        lines = text.splitlines()
        assert lines[0].startswith("user,") and lines[0].endswith(",cluster")
        assert len(lines) == 5

    def test_sweep(self):
        rng = np.random.default_rng(6)
        points = rng.normal(size=(20, 3))
        sweep = inertia_sweep(points, range(2, 5), seed=0)
        assert set(sweep) == {2, 3, 4}
        assert sweep[4] <= sweep[2] + 1e-9
