"""Statistical divergence between client and global columns, and the
client-weighting pipeline built on top of it.

The federator scores every (client, column) pair: Jensen-Shannon distance
between category frequency vectors for categorical columns, empirical
1-Wasserstein distance between seeded mixture draws for continuous columns.
Scores are column-normalized, summed per client, turned into a similarity
complement, fused with each client's share of the total rows and passed
through a softmax to yield aggregation weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ColumnKind
from .encoders import CategoricalStats, GmmParams, sample_gmm
from .seeding import derived_rng

WD_SAMPLE_N = 10_000

FUSIONS = ("multiplicative", "additive")


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon distance (base-2 logs) between two distributions.

    Inputs must be non-negative vectors of equal length summing to 1; zeros
    are allowed. The result lies in [0, 1], hitting 1 on disjoint support.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if (vec < 0).any():
            raise ValueError(f"{name} has negative entries")
        if abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {vec.sum()}, expected 1")
    m = 0.5 * (p + q)

    def _kl(a: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    return math.sqrt(max(0.0, 0.5 * (_kl(p) + _kl(q))))


def wd_empirical(u: np.ndarray, v: np.ndarray) -> float:
    """Empirical 1-Wasserstein distance via the quantile-function form.

    Integrates |F_u^(-1) - F_v^(-1)| over the merged quantile breakpoints of
    both samples; for equal sizes this reduces to the mean absolute
    difference of the sorted samples.
    """
    u = np.sort(np.asarray(u, dtype=np.float64).ravel())
    v = np.sort(np.asarray(v, dtype=np.float64).ravel())
    if u.size == 0 or v.size == 0:
        raise ValueError("empty sample")
    n, m = u.size, v.size
    edges = np.unique(
        np.concatenate([np.arange(1, n) / n, np.arange(1, m) / m, [0.0, 1.0]])
    )
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    iu = np.minimum((mids * n).astype(np.int64), n - 1)
    iv = np.minimum((mids * m).astype(np.int64), m - 1)
    return float(np.sum(widths * np.abs(u[iu] - v[iv])))


@dataclass(frozen=True)
class DivergenceMatrix:
    """Client-by-column divergence scores plus the labels for both axes."""

    entries: np.ndarray  # shape (P, Q)
    client_ids: tuple[int, ...]
    columns: tuple[str, ...]

    def __post_init__(self) -> None:
        p, q = self.entries.shape
        if p != len(self.client_ids) or q != len(self.columns):
            raise ValueError("entries shape does not match axis labels")
        if (self.entries < 0).any():
            raise ValueError("divergence entries must be non-negative")


@dataclass(frozen=True)
class WeightTrace:
    """Every intermediate of the weighting pipeline, for audit and reporting."""

    normalized: np.ndarray  # column-normalized divergences, shape (P, Q)
    row_sums: np.ndarray  # per-client total divergence, shape (P,)
    fused: np.ndarray  # ratio-and-similarity fusion, shape (P,)
    weights: np.ndarray  # softmax output, shape (P,)

    def to_json_dict(self) -> dict:
        return {
            "normalized": self.normalized.tolist(),
            "row_sums": self.row_sums.tolist(),
            "fused": self.fused.tolist(),
            "weights": self.weights.tolist(),
        }


def _frequencies(stats: CategoricalStats, categories: tuple[str, ...]) -> np.ndarray:
    counts = np.array([stats.counts.get(c, 0) for c in categories], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError(f"column {stats.column!r}: empty frequency vector")
    return counts / total


def divergence_matrix(
    columns: list[tuple[str, ColumnKind]],
    global_stats: dict[str, object],
    client_stats: list[dict[str, object]],
    sample_n: int = WD_SAMPLE_N,
    seed: int = 0,
) -> DivergenceMatrix:
    """Score every (client, column) pair against the global statistics.

    Categorical entries compare frequency vectors over the global category
    list. Continuous entries compare ``sample_n`` draws from the client
    mixture with ``sample_n`` draws from the global mixture; both draws use
    one seed derived per column, so clients with identical mixtures receive
    identical scores and entries can be computed in any order or in parallel
    without changing the result.
    """
    if not client_stats:
        raise ValueError("no clients")
    if sample_n < 1:
        raise ValueError("sample_n must be >= 1")
    entries = np.zeros((len(client_stats), len(columns)), dtype=np.float64)
    for j, (name, kind) in enumerate(columns):
        g = global_stats[name]
        if kind is ColumnKind.CATEGORICAL:
            assert isinstance(g, CategoricalStats)
            categories = tuple(sorted(g.counts))
            g_freq = _frequencies(g, categories)
            for i, stats in enumerate(client_stats):
                local = stats[name]
                assert isinstance(local, CategoricalStats)
                entries[i, j] = jsd(_frequencies(local, categories), g_freq)
        else:
            assert isinstance(g, GmmParams)
            global_draw = sample_gmm(g, sample_n, rng=derived_rng(seed, "wd", name, "global"))
            for i, stats in enumerate(client_stats):
                local = stats[name]
                assert isinstance(local, GmmParams)
                local_draw = sample_gmm(
                    local, sample_n, rng=derived_rng(seed, "wd", name, "local")
                )
                entries[i, j] = wd_empirical(local_draw, global_draw)
    return DivergenceMatrix(
        entries,
        tuple(range(len(client_stats))),
        tuple(name for name, _ in columns),
    )


def client_weights(
    matrix: DivergenceMatrix,
    row_counts: list[int] | np.ndarray,
    fusion: str = "multiplicative",
) -> WeightTrace:
    """Turn a divergence matrix and per-client row counts into weights.

    Pipeline: (1) normalize each column to sum 1 across clients, columns that
    are identically zero becoming uniform; (2) sum per client; (3) rescale the
    sums to [0, 1] across clients and complement, so the most divergent
    client scores 0 similarity and the least divergent 1 (all clients score 1
    when their sums are equal); (4) fuse similarity with each client's row
    share, multiplicatively by default; (5) softmax with max-shift.
    """
    if fusion not in FUSIONS:
        raise ValueError(f"unknown fusion {fusion!r}, expected one of {FUSIONS}")
    counts = np.asarray(row_counts, dtype=np.float64)
    p, _q = matrix.entries.shape
    if counts.shape != (p,):
        raise ValueError(f"expected {p} row counts, got shape {counts.shape}")
    if (counts < 1).any():
        raise ValueError("row counts must be >= 1")

    col_sums = matrix.entries.sum(axis=0)
    normalized = np.where(
        col_sums > 0.0, matrix.entries / np.where(col_sums > 0.0, col_sums, 1.0), 1.0 / p
    )
    row_sums = normalized.sum(axis=1)

    spread = row_sums.max() - row_sums.min()
    if spread > 0.0:
        similarity = 1.0 - (row_sums - row_sums.min()) / spread
    else:
        similarity = np.ones(p)

    ratio = counts / counts.sum()
    fused = ratio * similarity if fusion == "multiplicative" else ratio + similarity

    shifted = fused - fused.max()
    exp = np.exp(shifted)
    weights = exp / exp.sum()
    return WeightTrace(normalized, row_sums, fused, weights)


def uniform_weights(p: int) -> np.ndarray:
    """Identical weights 1/P, used by the plain averaging mode."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return np.full(p, 1.0 / p)
