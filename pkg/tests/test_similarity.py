"""Divergence metrics against brute-force oracles, and weighting pipeline
properties."""
import math
from itertools import permutations

import numpy as np
import pytest

from fedsynth.data import ColumnKind
from fedsynth.encoders import CategoricalStats, GmmParams
from fedsynth.similarity import (
    DivergenceMatrix,
    client_weights,
    divergence_matrix,
    jsd,
    uniform_weights,
    wd_empirical,
)


def jsd_oracle(p, q):
    # direct transcription of the definition, scalar loops only
    m = [(a + b) / 2.0 for a, b in zip(p, q)]
    kl_pm = sum(a * math.log2(a / c) for a, c in zip(p, m) if a > 0)
    kl_qm = sum(b * math.log2(b / c) for b, c in zip(q, m) if b > 0)
    return math.sqrt(max(0.0, (kl_pm + kl_qm) / 2.0))


def wd_oracle_equal(u, v):
    # optimal transport on equal-size point sets by exhaustive assignment
    n = len(u)
    best = min(
        sum(abs(a - b) for a, b in zip(u, perm)) for perm in permutations(v)
    )
    return best / n


def wd_oracle_replicated(u, v):
    # replicate both samples to lcm size, then sorted pairing
    n, m = len(u), len(v)
    size = math.lcm(n, m)
    uu = np.repeat(np.sort(np.asarray(u, dtype=np.float64)), size // n)
    vv = np.repeat(np.sort(np.asarray(v, dtype=np.float64)), size // m)
    return float(np.mean(np.abs(uu - vv)))


def random_simplex(rng, k):
    raw = rng.random(k) + 1e-3
    return raw / raw.sum()


class TestJsd:
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            k = int(rng.integers(2, 9))
            p, q = random_simplex(rng, k), random_simplex(rng, k)
            assert jsd(p, q) == pytest.approx(jsd_oracle(p, q), abs=1e-12)

    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert jsd(p, p) == 0.0

    def test_disjoint_support_is_one(self):
        assert jsd([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            p, q = random_simplex(rng, 5), random_simplex(rng, 5)
            assert jsd(p, q) == pytest.approx(jsd(q, p), abs=1e-15)
            assert 0.0 <= jsd(p, q) <= 1.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            jsd([0.5, 0.5], [1.0])
        with pytest.raises(ValueError):
            jsd([0.7, 0.4], [0.5, 0.5])
        with pytest.raises(ValueError):
            jsd([1.5, -0.5], [0.5, 0.5])


class TestWdEmpirical:
    def test_equal_sizes_match_assignment_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            n = int(rng.integers(1, 7))
            u, v = rng.normal(size=n), rng.normal(size=n)
            assert wd_empirical(u, v) == pytest.approx(
                wd_oracle_equal(u, v), abs=1e-12
            )

    def test_unequal_sizes_match_replication_oracle(self):
        rng = np.random.default_rng(22)
        for _ in range(30):
            n, m = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            u, v = rng.normal(size=n), rng.normal(size=m)
            assert wd_empirical(u, v) == pytest.approx(
                wd_oracle_replicated(u, v), abs=1e-12
            )

    def test_identity_and_symmetry(self):
        rng = np.random.default_rng(23)
        u, v = rng.normal(size=40), rng.normal(size=25)
        assert wd_empirical(u, u) == 0.0
        assert wd_empirical(u, v) == pytest.approx(wd_empirical(v, u), abs=1e-12)

    def test_pure_shift_equals_offset(self):
        rng = np.random.default_rng(24)
        u = rng.normal(size=64)
        assert wd_empirical(u, u + 3.5) == pytest.approx(3.5, abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(25)
        u, v = rng.normal(size=30), rng.normal(size=50)
        assert wd_empirical(u + 7.0, v + 7.0) == pytest.approx(
            wd_empirical(u, v), abs=1e-10
        )

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            wd_empirical(np.array([]), np.array([1.0]))


def _cat(column, counts):
    return CategoricalStats(column=column, counts=counts)


def _gmm(means, stds, weights):
    return GmmParams(
        weights=tuple(weights), means=tuple(means), stds=tuple(stds)
    )


class TestDivergenceMatrix:
    COLUMNS = [("cat", ColumnKind.CATEGORICAL), ("val", ColumnKind.CONTINUOUS)]

    def _global(self):
        return {
            "cat": _cat("cat", {"a": 50, "b": 50}),
            "val": _gmm([0.0], [1.0], [1.0]),
        }

    def test_identical_categorical_scores_zero(self):
        stats = {
            "cat": _cat("cat", {"a": 10, "b": 10}),
            "val": _gmm([0.0], [1.0], [1.0]),
        }
        mat = divergence_matrix(self.COLUMNS, self._global(), [stats], sample_n=500)
        assert mat.entries[0, 0] == 0.0
        assert mat.entries.shape == (1, 2)
        assert mat.columns == ("cat", "val")
        assert mat.client_ids == (0,)

    def test_identical_mixtures_score_identically(self):
        a = {
            "cat": _cat("cat", {"a": 30, "b": 10}),
            "val": _gmm([2.0], [0.5], [1.0]),
        }
        b = {
            "cat": _cat("cat", {"a": 3, "b": 1}),
            "val": _gmm([2.0], [0.5], [1.0]),
        }
        mat = divergence_matrix(self.COLUMNS, self._global(), [a, b], sample_n=500)
        assert mat.entries[0, 0] == mat.entries[1, 0]
        assert mat.entries[0, 1] == mat.entries[1, 1]

    def test_farther_mixture_scores_higher(self):
        near = {
            "cat": _cat("cat", {"a": 50, "b": 50}),
            "val": _gmm([0.5], [1.0], [1.0]),
        }
        far = {
            "cat": _cat("cat", {"a": 50, "b": 50}),
            "val": _gmm([8.0], [1.0], [1.0]),
        }
        mat = divergence_matrix(
            self.COLUMNS, self._global(), [near, far], sample_n=2000
        )
        assert mat.entries[1, 1] > mat.entries[0, 1]

    def test_client_order_permutes_rows(self):
        a = {
            "cat": _cat("cat", {"a": 90, "b": 10}),
            "val": _gmm([1.0], [0.3], [1.0]),
        }
        b = {
            "cat": _cat("cat", {"a": 10, "b": 90}),
            "val": _gmm([-4.0], [2.0], [1.0]),
        }
        fwd = divergence_matrix(self.COLUMNS, self._global(), [a, b], sample_n=500)
        rev = divergence_matrix(self.COLUMNS, self._global(), [b, a], sample_n=500)
        np.testing.assert_array_equal(fwd.entries, rev.entries[::-1])

    def test_missing_category_uses_global_support(self):
        # client never saw "b"; frequency vector is still over {a, b}
        stats = {
            "cat": _cat("cat", {"a": 20}),
            "val": _gmm([0.0], [1.0], [1.0]),
        }
        mat = divergence_matrix(self.COLUMNS, self._global(), [stats], sample_n=500)
        assert mat.entries[0, 0] == pytest.approx(
            jsd_oracle([1.0, 0.0], [0.5, 0.5]), abs=1e-12
        )

    def test_rejects_empty_client_list(self):
        with pytest.raises(ValueError):
            divergence_matrix(self.COLUMNS, self._global(), [])

    def test_entries_must_be_non_negative(self):
        with pytest.raises(ValueError):
            DivergenceMatrix(np.array([[-0.1]]), (0,), ("x",))


class TestClientWeights:
    def _matrix(self, entries):
        entries = np.asarray(entries, dtype=np.float64)
        p, q = entries.shape
        return DivergenceMatrix(
            entries, tuple(range(p)), tuple(f"c{j}" for j in range(q))
        )

    def test_weights_form_simplex(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            p, q = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            mat = self._matrix(rng.random((p, q)))
            counts = rng.integers(1, 1000, size=p)
            trace = client_weights(mat, counts)
            assert trace.weights.sum() == pytest.approx(1.0, abs=1e-12)
            assert (trace.weights > 0).all()

    def test_trace_arithmetic(self):
        mat = self._matrix([[0.2, 0.4], [0.6, 0.1]])
        trace = client_weights(mat, [100, 300])
        np.testing.assert_allclose(
            trace.normalized, [[0.25, 0.8], [0.75, 0.2]], atol=1e-12
        )
        np.testing.assert_allclose(trace.row_sums, [1.05, 0.95], atol=1e-12)
        # min-max complement then count-share product
        np.testing.assert_allclose(trace.fused, [0.25 * 0.0, 0.75 * 1.0], atol=1e-12)
        expected = np.exp(trace.fused - trace.fused.max())
        np.testing.assert_allclose(
            trace.weights, expected / expected.sum(), atol=1e-15
        )

    def test_additive_fusion(self):
        mat = self._matrix([[0.2], [0.8]])
        trace = client_weights(mat, [500, 500], fusion="additive")
        np.testing.assert_allclose(trace.fused, [0.5 + 1.0, 0.5 + 0.0], atol=1e-12)

    def test_equal_rows_equal_counts_is_uniform(self):
        mat = self._matrix([[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]])
        trace = client_weights(mat, [50, 50, 50])
        np.testing.assert_allclose(trace.weights, np.full(3, 1 / 3), atol=1e-12)

    def test_zero_column_becomes_uniform_share(self):
        mat = self._matrix([[0.0, 0.5], [0.0, 0.5]])
        trace = client_weights(mat, [10, 10])
        np.testing.assert_allclose(trace.normalized[:, 0], [0.5, 0.5], atol=1e-12)

    def test_more_divergent_client_weighs_less(self):
        mat = self._matrix([[0.1, 0.1], [0.9, 0.9]])
        trace = client_weights(mat, [200, 200])
        assert trace.weights[0] > trace.weights[1]

    def test_larger_shard_weighs_more(self):
        mat = self._matrix([[0.5], [0.5]])
        trace = client_weights(mat, [100, 900])
        assert trace.weights[1] > trace.weights[0]

    def test_single_client_gets_full_weight(self):
        mat = self._matrix([[0.4, 0.2]])
        trace = client_weights(mat, [123])
        np.testing.assert_allclose(trace.weights, [1.0], atol=1e-15)

    def test_rejects_bad_arguments(self):
        mat = self._matrix([[0.5], [0.5]])
        with pytest.raises(ValueError):
            client_weights(mat, [10, 10], fusion="geometric")
        with pytest.raises(ValueError):
            client_weights(mat, [10])
        with pytest.raises(ValueError):
            client_weights(mat, [10, 0])


def test_uniform_weights():
    np.testing.assert_allclose(uniform_weights(4), np.full(4, 0.25), atol=1e-15)
    with pytest.raises(ValueError):
        uniform_weights(0)
