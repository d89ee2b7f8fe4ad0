"""Per-column encoders shared by every participant.

Categorical columns are one-hot encoded against a label encoder built from
the union of all clients' category frequencies. Continuous columns are
encoded mode-specifically against a Gaussian mixture: each value becomes a
bounded scalar offset within its most likely mode plus a one-hot mode
indicator. Mixtures for the global encoder are fitted on samples drawn from
the clients' local mixtures, so raw values never leave a client.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import NA_TOKEN, ColumnKind, ColumnMeta, Table
from .seeding import derived_rng

MAX_MODES = 10
STD_FLOOR = 1e-4
WEIGHT_PRUNE_THRESHOLD = 0.005
EM_MAX_ITER = 100
EM_TOL = 1e-5
POOLED_SAMPLE_CAP = 200_000
ALPHA_SCALE = 4.0

_LOG_2PI = math.log(2.0 * math.pi)


class EncodingError(ValueError):
    """A value cannot be represented by the shared encoders."""


@dataclass(frozen=True)
class CategoricalStats:
    """Category frequency counts for one column of one table."""

    column: str
    counts: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class GmmParams:
    """A one-dimensional Gaussian mixture, components sorted by mean."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self) -> None:
        k = len(self.weights)
        if k < 1 or len(self.means) != k or len(self.stds) != k:
            raise EncodingError("weights, means and stds must align and be non-empty")
        if any(w < 0 for w in self.weights):
            raise EncodingError("negative mixture weight")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise EncodingError(f"weights sum to {sum(self.weights)}, expected 1")
        if any(s < STD_FLOOR for s in self.stds):
            raise EncodingError(f"std below floor {STD_FLOOR}")

    @property
    def n_modes(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class LabelEncoder:
    """Stable token-to-rank mapping for one categorical column."""

    column: str
    categories: tuple[str, ...]

    def index_of(self, token: str) -> int:
        try:
            return self.categories.index(token)
        except ValueError:
            raise EncodingError(f"column {self.column!r}: unknown token {token!r}") from None

    @property
    def n_categories(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class Segment:
    """One column's slice of the encoded row vector.

    Continuous columns occupy ``offset`` (the scalar offset) followed by
    ``width - 1`` one-hot mode indicators; categorical columns are a plain
    one-hot block of ``width`` entries.
    """

    column: str
    kind: ColumnKind
    offset: int
    width: int


@dataclass(frozen=True)
class EncodedLayout:
    segments: tuple[Segment, ...]
    width: int

    def segment(self, column: str) -> Segment:
        for seg in self.segments:
            if seg.column == column:
                return seg
        raise KeyError(column)


Encoder = "LabelEncoder | GmmParams"


def local_categorical_stats(table: Table, column: str) -> CategoricalStats:
    """Frequency counts of one categorical column; <NA> counts like any token."""
    meta = table.meta(column)
    if meta.kind is not ColumnKind.CATEGORICAL:
        raise ValueError(f"column {column!r} is not categorical")
    counts: dict[str, int] = {}
    for token in table.column(column):
        counts[token] = counts.get(token, 0) + 1
    return CategoricalStats(column, counts)


def aggregate_categorical(stats: list[CategoricalStats]) -> tuple[LabelEncoder, CategoricalStats]:
    """Merge per-client counts into a global encoder plus global counts.

    Categories are ordered by sorted lexicographic union so every participant
    derives the identical one-hot layout.
    """
    if not stats:
        raise EncodingError("no stats to aggregate")
    column = stats[0].column
    if any(s.column != column for s in stats):
        raise EncodingError("stats belong to different columns")
    merged: dict[str, int] = {}
    for s in stats:
        for token, count in s.counts.items():
            merged[token] = merged.get(token, 0) + count
    categories = tuple(sorted(merged))
    encoder = LabelEncoder(column, categories)
    return encoder, CategoricalStats(column, {t: merged[t] for t in categories})


def _log_pdf(x: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    # rows: samples, cols: components
    z = (x[:, None] - means[None, :]) / stds[None, :]
    return -0.5 * (z * z) - np.log(stds)[None, :] - 0.5 * _LOG_2PI


def _kmeans_pp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty(k)
    centers[0] = x[rng.integers(0, x.size)]
    if k == 1:
        return centers
    d2 = (x - centers[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j:] = x[rng.integers(0, x.size, size=k - j)]
            break
        probs = d2 / total
        centers[j] = x[rng.choice(x.size, p=probs)]
        d2 = np.minimum(d2, (x - centers[j]) ** 2)
    return centers


def _em_fit(x: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n = x.size
    means = _kmeans_pp_centers(x, k, rng)
    spread = max(float(x.std()), STD_FLOOR)
    stds = np.full(k, spread)
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    for _ in range(EM_MAX_ITER):
        # E step in log space
        log_joint = np.log(np.maximum(weights, 1e-300))[None, :] + _log_pdf(x, means, stds)
        log_norm = np.logaddexp.reduce(log_joint, axis=1)
        resp = np.exp(log_joint - log_norm[:, None])
        ll = float(log_norm.mean())

        # M step
        nk = resp.sum(axis=0)
        weights = nk / n
        safe_nk = np.maximum(nk, 1e-12)
        means = (resp * x[:, None]).sum(axis=0) / safe_nk
        var = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / safe_nk
        stds = np.maximum(np.sqrt(var), STD_FLOOR)

        if abs(ll - prev_ll) < EM_TOL:
            prev_ll = ll
            break
        prev_ll = ll
    return weights, means, stds, prev_ll * n


def fit_gmm(values: np.ndarray, max_modes: int = MAX_MODES, seed: int = 0) -> GmmParams:
    """Fit a Gaussian mixture to one continuous column.

    The component count is chosen by BIC over 1..max_modes candidates, each
    fitted by EM from a k-means++ initialization (at most 100 iterations,
    mean log-likelihood tolerance 1e-5). Components whose weight falls below
    0.005 are pruned and the remainder renormalized; stds are floored at
    1e-4. Deterministic for a fixed seed.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot fit a mixture to an empty column")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in continuous column")
    if max_modes < 1:
        raise ValueError("max_modes must be >= 1")

    k_cap = min(max_modes, np.unique(x).size)
    best: tuple[float, np.ndarray, np.ndarray, np.ndarray] | None = None
    for k in range(1, k_cap + 1):
        rng = derived_rng(seed, "em", k)
        weights, means, stds, total_ll = _em_fit(x, k, rng)
        n_params = 3 * k - 1
        bic = n_params * math.log(x.size) - 2.0 * total_ll
        if best is None or bic < best[0]:
            best = (bic, weights, means, stds)

    assert best is not None
    _, weights, means, stds = best
    keep = weights >= WEIGHT_PRUNE_THRESHOLD
    if not keep.any():
        keep[int(np.argmax(weights))] = True
    weights, means, stds = weights[keep], means[keep], stds[keep]
    weights = weights / weights.sum()
    order = np.argsort(means, kind="stable")
    return GmmParams(
        tuple(float(w) for w in weights[order]),
        tuple(float(m) for m in means[order]),
        tuple(float(s) for s in stds[order]),
    )


def sample_gmm(gmm: GmmParams, n: int, seed: int = 0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw n values from the mixture; deterministic for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = derived_rng(seed, "gmm-sample")
    weights = np.asarray(gmm.weights)
    weights = weights / weights.sum()
    comps = rng.choice(gmm.n_modes, size=n, p=weights)
    means = np.asarray(gmm.means)[comps]
    stds = np.asarray(gmm.stds)[comps]
    return rng.standard_normal(n) * stds + means


def aggregate_gmm(
    locals_: list[tuple[GmmParams, int]],
    max_modes: int = MAX_MODES,
    seed: int = 0,
) -> GmmParams:
    """Build the global mixture for one column from per-client mixtures.

    Draws each client's row count worth of samples from its local mixture
    (scaled down proportionally when the pool would exceed 200k draws), pools
    them and refits. Only mixture parameters are consumed, never raw values.
    """
    if not locals_:
        raise ValueError("no local mixtures to aggregate")
    if any(n < 1 for _, n in locals_):
        raise ValueError("client row counts must be >= 1")
    total = sum(n for _, n in locals_)
    scale = min(1.0, POOLED_SAMPLE_CAP / total)
    pools = []
    for i, (gmm, n) in enumerate(locals_):
        draw = max(1, int(round(n * scale)))
        pools.append(sample_gmm(gmm, draw, rng=derived_rng(seed, "gmm-pool", i)))
    pooled = np.concatenate(pools)
    return fit_gmm(pooled, max_modes=max_modes, seed=seed)


def _mode_assignments(values: np.ndarray, gmm: GmmParams) -> np.ndarray:
    weights = np.log(np.maximum(np.asarray(gmm.weights), 1e-300))
    scores = weights[None, :] + _log_pdf(values, np.asarray(gmm.means), np.asarray(gmm.stds))
    return np.argmax(scores, axis=1)


def encode_continuous(value: float, gmm: GmmParams) -> tuple[float, int]:
    """Encode one value as (offset within its most likely mode, mode index)."""
    mode = int(_mode_assignments(np.array([value], dtype=np.float64), gmm)[0])
    alpha = (value - gmm.means[mode]) / (ALPHA_SCALE * gmm.stds[mode])
    return float(np.clip(alpha, -1.0, 1.0)), mode


def decode_continuous(alpha: float, mode: int, gmm: GmmParams) -> float:
    """Inverse of encode_continuous for offsets inside the clamp band."""
    if not 0 <= mode < gmm.n_modes:
        raise ValueError(f"mode {mode} out of range for {gmm.n_modes} modes")
    return float(alpha * ALPHA_SCALE * gmm.stds[mode] + gmm.means[mode])


def build_layout(schema: tuple[ColumnMeta, ...], encoders: dict[str, object]) -> EncodedLayout:
    """Lay out encoded row vectors in schema order."""
    segments = []
    offset = 0
    for meta in schema:
        enc = encoders[meta.name]
        if meta.kind is ColumnKind.CATEGORICAL:
            if not isinstance(enc, LabelEncoder):
                raise TypeError(f"column {meta.name!r} needs a LabelEncoder")
            width = enc.n_categories
        else:
            if not isinstance(enc, GmmParams):
                raise TypeError(f"column {meta.name!r} needs GmmParams")
            width = 1 + enc.n_modes
        segments.append(Segment(meta.name, meta.kind, offset, width))
        offset += width
    return EncodedLayout(tuple(segments), offset)


def encode_table(table: Table, layout: EncodedLayout, encoders: dict[str, object]) -> np.ndarray:
    """Encode every row into a float64 matrix of shape (n_rows, layout.width)."""
    out = np.zeros((table.n_rows, layout.width), dtype=np.float64)
    for meta in table.schema:
        seg = layout.segment(meta.name)
        col = table.column(meta.name)
        enc = encoders[meta.name]
        if meta.kind is ColumnKind.CATEGORICAL:
            assert isinstance(enc, LabelEncoder)
            lookup = {t: i for i, t in enumerate(enc.categories)}
            for r, token in enumerate(col):
                idx = lookup.get(token)
                if idx is None:
                    raise EncodingError(
                        f"column {meta.name!r}: unknown token {token!r} at row {r}"
                    )
                out[r, seg.offset + idx] = 1.0
        else:
            assert isinstance(enc, GmmParams)
            modes = _mode_assignments(col, enc)
            means = np.asarray(enc.means)[modes]
            stds = np.asarray(enc.stds)[modes]
            alpha = np.clip((col - means) / (ALPHA_SCALE * stds), -1.0, 1.0)
            out[:, seg.offset] = alpha
            out[np.arange(table.n_rows), seg.offset + 1 + modes] = 1.0
    return out


def decode_rows(matrix: np.ndarray, layout: EncodedLayout, encoders: dict[str, object]) -> Table:
    """Decode generator output (or encoded rows) back into a Table.

    One-hot blocks are resolved by argmax, offsets are clamped to [-1, 1]
    before inversion, so soft samples decode without error.
    """
    if matrix.ndim != 2 or matrix.shape[1] != layout.width:
        raise ValueError(f"expected matrix with {layout.width} columns")
    n = matrix.shape[0]
    schema = []
    columns: list[np.ndarray] = []
    for j, seg in enumerate(layout.segments):
        schema.append(ColumnMeta(seg.column, seg.kind, j))
        block = matrix[:, seg.offset : seg.offset + seg.width]
        enc = encoders[seg.column]
        if seg.kind is ColumnKind.CATEGORICAL:
            assert isinstance(enc, LabelEncoder)
            picks = np.argmax(block, axis=1)
            cats = np.array(enc.categories, dtype=object)
            columns.append(cats[picks])
        else:
            assert isinstance(enc, GmmParams)
            alpha = np.clip(block[:, 0], -1.0, 1.0)
            modes = np.argmax(block[:, 1:], axis=1)
            means = np.asarray(enc.means)[modes]
            stds = np.asarray(enc.stds)[modes]
            columns.append(alpha * ALPHA_SCALE * stds + means)
    return Table(tuple(schema), tuple(columns))
