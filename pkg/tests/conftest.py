"""Shared fixtures: deterministic synthetic tables at desk scale."""
from __future__ import annotations

import numpy as np
import pytest

from fedsynth import ColumnKind, ColumnMeta, Table

COLOR_TOKENS = np.array(["blue", "green", "red"], dtype=object)
COLOR_PROBS = (0.2, 0.3, 0.5)
SIZE_TOKENS = np.array(["l", "m", "s", "xl", "xxl"], dtype=object)
SIZE_PROBS = (0.2, 0.25, 0.3, 0.15, 0.1)

MIXED_SCHEMA = (
    ColumnMeta("color", ColumnKind.CATEGORICAL, 0),
    ColumnMeta("size", ColumnKind.CATEGORICAL, 1),
    ColumnMeta("amount", ColumnKind.CONTINUOUS, 2),
    ColumnMeta("rate", ColumnKind.CONTINUOUS, 3),
)


def make_mixed_table(n: int, seed: int) -> Table:
    """Two categorical columns (3 and 5 tokens) and two bimodal continuous
    columns; the canonical fixture for federation and convergence tests."""
    rng = np.random.default_rng(seed)
    color = rng.choice(COLOR_TOKENS, p=COLOR_PROBS, size=n)
    size = rng.choice(SIZE_TOKENS, p=SIZE_PROBS, size=n)
    pick_a = rng.random(n) < 0.6
    amount = np.where(pick_a, rng.normal(-2.0, 0.3, n), rng.normal(3.0, 0.4, n))
    pick_r = rng.random(n) < 0.5
    rate = np.where(pick_r, rng.normal(10.0, 0.8, n), rng.normal(20.0, 1.0, n))
    return Table(MIXED_SCHEMA, (color, size, amount, rate))


def make_two_column_table(n: int, seed: int) -> Table:
    """One categorical and one bimodal continuous column, for cheap tests."""
    rng = np.random.default_rng(seed)
    cat = rng.choice(np.array(["x", "y", "z"], dtype=object), p=[0.5, 0.3, 0.2], size=n)
    pick = rng.random(n) < 0.5
    value = np.where(pick, rng.normal(-1.0, 0.2, n), rng.normal(2.0, 0.3, n))
    schema = (
        ColumnMeta("cat", ColumnKind.CATEGORICAL, 0),
        ColumnMeta("value", ColumnKind.CONTINUOUS, 1),
    )
    return Table(schema, (cat, value))


@pytest.fixture(scope="session")
def mixed_table() -> Table:
    return make_mixed_table(2000, 310)


@pytest.fixture(scope="session")
def small_table() -> Table:
    return make_two_column_table(400, 77)
