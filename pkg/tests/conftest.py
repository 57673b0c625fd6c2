"""Shared fixtures and synthetic dataset builders."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from migk import AttributeSchema, Bag, Dataset, TASK_CLASSIFY, TASK_MULTICLASS, TASK_REGRESS


def random_bag(rng: np.random.Generator, bag_id: str, *, n_max: int = 5, dim: int = 4,
               label: float = 1.0, n_min: int = 1) -> Bag:
    n = int(rng.integers(n_min, n_max + 1))
    values = rng.uniform(0.0, 1.0, size=(n, dim))
    return Bag(id=bag_id, values=values, label=label)


def random_bags(rng: np.random.Generator, count: int, **kw) -> list[Bag]:
    return [random_bag(rng, f"bag{i}", **kw) for i in range(count)]


def make_binary_dataset(
    n_bags: int = 16,
    dim: int = 3,
    seed: int = 0,
    *,
    separation: float = 2.0,
    n_per_bag: tuple[int, int] = (2, 4),
) -> Dataset:
    """Separable two-class bag data: positive bags carry a shifted cluster."""
    rng = np.random.default_rng(seed)
    bags = []
    for i in range(n_bags):
        label = 1.0 if i % 2 == 0 else -1.0
        n = int(rng.integers(n_per_bag[0], n_per_bag[1] + 1))
        values = rng.normal(0.0, 0.4, size=(n, dim))
        if label > 0:
            lift = max(1, n // 2)
            values[:lift] += separation
        bags.append(Bag(id=f"b{i:03d}", values=values, label=label))
    return Dataset(schema=AttributeSchema.all_continuous(dim), bags=tuple(bags), task=TASK_CLASSIFY)


def make_multiclass_dataset(n_per_class: int = 6, dim: int = 3, seed: int = 0, classes: int = 3) -> Dataset:
    rng = np.random.default_rng(seed)
    bags = []
    for c in range(1, classes + 1):
        center = np.zeros(dim)
        center[(c - 1) % dim] = 3.0 * c
        for i in range(n_per_class):
            n = int(rng.integers(2, 5))
            values = rng.normal(0.0, 0.4, size=(n, dim)) + center
            bags.append(Bag(id=f"c{c}_{i}", values=values, label=float(c)))
    return Dataset(schema=AttributeSchema.all_continuous(dim), bags=tuple(bags), task=TASK_MULTICLASS)


def make_regression_dataset(n_bags: int = 14, dim: int = 2, seed: int = 0) -> Dataset:
    """Targets in [0, 1] driven by the bag's mean position."""
    rng = np.random.default_rng(seed)
    bags = []
    for i in range(n_bags):
        n = int(rng.integers(2, 5))
        center = rng.uniform(0.0, 1.0)
        values = np.clip(rng.normal(center, 0.05, size=(n, dim)), -0.2, 1.2)
        bags.append(Bag(id=f"r{i:03d}", values=values, label=float(np.clip(center, 0.0, 1.0))))
    return Dataset(schema=AttributeSchema.all_continuous(dim), bags=tuple(bags), task=TASK_REGRESS)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
