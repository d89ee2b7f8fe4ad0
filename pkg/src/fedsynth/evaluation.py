"""Real-versus-synthetic column similarity and the training metrics log."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import ColumnKind, Table
from .similarity import jsd, wd_empirical


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityScore:
    """Mean per-column scores; a field is None when no column of that kind
    exists (absent, not zero)."""

    avg_jsd: float | None
    avg_wd: float | None
    per_column: dict[str, float]


@dataclass(frozen=True)
class MinMaxNormalizer:
    """Per-column affine map fitted on the real table and applied to both
    sides. Degenerate columns (max == min) map every value to 0; values
    outside the fitted range are kept, not clipped."""

    bounds: dict[str, tuple[float, float]]

    @classmethod
    def fit(cls, table: Table) -> "MinMaxNormalizer":
        bounds = {}
        for meta in table.schema:
            if meta.kind is ColumnKind.CONTINUOUS:
                col = table.column(meta.name)
                bounds[meta.name] = (float(col.min()), float(col.max()))
        return cls(bounds)

    def apply(self, values: np.ndarray, column: str) -> np.ndarray:
        lo, hi = self.bounds[column]
        if hi == lo:
            return np.zeros_like(values)
        return (values - lo) / (hi - lo)


def _check_schemas(real: Table, synth: Table) -> None:
    real_sig = [(m.name, m.kind) for m in real.schema]
    synth_sig = [(m.name, m.kind) for m in synth.schema]
    if real_sig != synth_sig:
        raise EvaluationError(f"schema mismatch: {real_sig} vs {synth_sig}")


def avg_jsd(real: Table, synth: Table) -> tuple[float, dict[str, float]]:
    """Mean Jensen-Shannon distance over categorical columns.

    Frequencies are taken over the union of both sides' tokens, so a token
    seen only in the synthetic table competes against real probability 0.
    """
    _check_schemas(real, synth)
    per_column: dict[str, float] = {}
    for meta in real.schema:
        if meta.kind is not ColumnKind.CATEGORICAL:
            continue
        r_col = real.column(meta.name)
        s_col = synth.column(meta.name)
        tokens = sorted(set(r_col.tolist()) | set(s_col.tolist()))
        index = {t: i for i, t in enumerate(tokens)}
        r_freq = np.zeros(len(tokens))
        s_freq = np.zeros(len(tokens))
        for t in r_col:
            r_freq[index[t]] += 1
        for t in s_col:
            s_freq[index[t]] += 1
        per_column[meta.name] = jsd(r_freq / r_freq.sum(), s_freq / s_freq.sum())
    if not per_column:
        raise EvaluationError("no categorical columns to score")
    return float(np.mean(list(per_column.values()))), per_column


def avg_wd(real: Table, synth: Table) -> tuple[float, dict[str, float]]:
    """Mean 1-Wasserstein distance over continuous columns, both sides first
    passed through a min-max normalizer fitted on the real column."""
    _check_schemas(real, synth)
    normalizer = MinMaxNormalizer.fit(real)
    per_column: dict[str, float] = {}
    for meta in real.schema:
        if meta.kind is not ColumnKind.CONTINUOUS:
            continue
        r = normalizer.apply(real.column(meta.name), meta.name)
        s = normalizer.apply(synth.column(meta.name), meta.name)
        per_column[meta.name] = wd_empirical(r, s)
    if not per_column:
        raise EvaluationError("no continuous columns to score")
    return float(np.mean(list(per_column.values()))), per_column


def similarity_score(real: Table, synth: Table) -> SimilarityScore:
    """Both averages at once; a missing column kind yields None, not 0."""
    per_column: dict[str, float] = {}
    kinds = {m.kind for m in real.schema}
    jsd_avg = wd_avg = None
    if ColumnKind.CATEGORICAL in kinds:
        jsd_avg, cols = avg_jsd(real, synth)
        per_column.update(cols)
    if ColumnKind.CONTINUOUS in kinds:
        wd_avg, cols = avg_wd(real, synth)
        per_column.update(cols)
    return SimilarityScore(jsd_avg, wd_avg, per_column)


METRICS_HEADER = ("round", "wall_clock_s", "avg_jsd", "avg_wd", "gen_loss", "disc_loss")


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


class MetricsLog:
    """Append-only CSV of per-round metrics, flushed on every row.

    Rounds must be strictly increasing and wall clock strictly increasing;
    floats are written with full round-trip precision so re-reading the file
    reproduces the appended values exactly.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._last_round: int | None = None
        self._last_clock: float | None = None
        self.path.write_text(",".join(METRICS_HEADER) + "\n", encoding="utf-8")

    def append(
        self,
        round_index: int,
        wall_clock_s: float,
        avg_jsd_value: float | None,
        avg_wd_value: float | None,
        gen_loss: float | None,
        disc_loss: float | None,
    ) -> None:
        if self._last_round is not None and round_index <= self._last_round:
            raise EvaluationError(
                f"round {round_index} not after previous round {self._last_round}"
            )
        if self._last_clock is not None and wall_clock_s <= self._last_clock:
            raise EvaluationError(
                f"wall clock {wall_clock_s} not after previous {self._last_clock}"
            )
        row = [
            str(round_index),
            repr(float(wall_clock_s)),
            _fmt(avg_jsd_value),
            _fmt(avg_wd_value),
            _fmt(gen_loss),
            _fmt(disc_loss),
        ]
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(",".join(row) + "\n")
        self._last_round = round_index
        self._last_clock = wall_clock_s

    @staticmethod
    def read(path: str | Path) -> list[dict[str, float | int | None]]:
        rows: list[dict[str, float | int | None]] = []
        with open(path, newline="", encoding="utf-8") as handle:
            for record in csv.DictReader(handle):
                rows.append(
                    {
                        "round": int(record["round"]),
                        "wall_clock_s": float(record["wall_clock_s"]),
                        **{
                            key: (float(record[key]) if record[key] else None)
                            for key in ("avg_jsd", "avg_wd", "gen_loss", "disc_loss")
                        },
                    }
                )
        return rows
