"""Bags of instances: the data model shared by every kernel and learner.

A bag is a set of instances with a single bag-level label. Instances are the
rows of a per-bag float64 matrix; categorical attributes are stored as
integer codes inside that matrix, with the attribute schema carrying the
category alphabets. Labels are plain numbers whose admissible values depend
on the dataset task: "classify" uses {-1, +1}, "multiclass" uses integer
class ids starting at 1, "regress" uses real targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

KIND_CONTINUOUS = "continuous"
KIND_CATEGORICAL = "categorical"

TASK_CLASSIFY = "classify"
TASK_MULTICLASS = "multiclass"
TASK_REGRESS = "regress"
TASKS = (TASK_CLASSIFY, TASK_MULTICLASS, TASK_REGRESS)


class ValidationError(ValueError):
    """A dataset or bag violates a structural requirement."""


@dataclass(frozen=True)
class Finding:
    """One validation problem: a stable code plus a human-readable message."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class AttributeSchema:
    """Per-attribute kinds, category alphabets, and fitted normalization stats.

    ``kinds[i]`` is "continuous" or "categorical". ``categories[i]`` is the
    tuple of admissible symbols for a categorical attribute (its integer
    codes are indexes into that tuple) and None for continuous ones.
    ``lo``/``hi`` hold the per-continuous-attribute min/max fitted by
    :func:`normalize_continuous`; they are None until fitted.
    """

    kinds: tuple[str, ...]
    categories: tuple[tuple[str, ...] | None, ...] = ()
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.categories:
            object.__setattr__(self, "categories", tuple(None for _ in self.kinds))
        if len(self.categories) != len(self.kinds):
            raise ValidationError("schema kinds and categories lengths differ")
        for i, kind in enumerate(self.kinds):
            if kind not in (KIND_CONTINUOUS, KIND_CATEGORICAL):
                raise ValidationError(f"attribute {i}: unknown kind {kind!r}")
            if kind == KIND_CATEGORICAL and not self.categories[i]:
                raise ValidationError(f"attribute {i}: categorical without categories")
            if kind == KIND_CONTINUOUS and self.categories[i] is not None:
                raise ValidationError(f"attribute {i}: continuous with categories")
        n_cont = len(self.continuous_idx)
        for name in ("lo", "hi"):
            stats = getattr(self, name)
            if stats is not None and len(stats) != n_cont:
                raise ValidationError(f"schema {name} does not match continuous attribute count")

    @classmethod
    def all_continuous(cls, dim: int) -> "AttributeSchema":
        return cls(kinds=(KIND_CONTINUOUS,) * dim)

    @property
    def dim(self) -> int:
        return len(self.kinds)

    @property
    def continuous_idx(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k == KIND_CONTINUOUS)

    @property
    def categorical_idx(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k == KIND_CATEGORICAL)

    @property
    def fitted(self) -> bool:
        return self.lo is not None


@dataclass(frozen=True)
class Bag:
    """One labeled bag. ``values`` is an (n_instances, dim) float64 matrix."""

    id: str
    values: np.ndarray
    label: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"bag {self.id!r}: values must be 2-D, got shape {values.shape}")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of bags sharing one schema and one task."""

    schema: AttributeSchema
    bags: tuple[Bag, ...]
    task: str = TASK_CLASSIFY

    def __post_init__(self) -> None:
        object.__setattr__(self, "bags", tuple(self.bags))
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}")

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.bags], dtype=np.float64)

    @property
    def bag_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.bags)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """A new dataset holding the selected bags, order as given."""
        return replace(self, bags=tuple(self.bags[int(i)] for i in indices))


def _label_finding(task: str, bag: Bag) -> Finding | None:
    y = bag.label
    if not math.isfinite(y):
        return Finding("label-invalid", f"bag {bag.id!r}: non-finite label {y!r}")
    if task == TASK_CLASSIFY and y not in (-1.0, 1.0):
        return Finding("label-invalid", f"bag {bag.id!r}: binary label must be -1 or +1, got {y!r}")
    if task == TASK_MULTICLASS and (y != int(y) or y < 1):
        return Finding("label-invalid", f"bag {bag.id!r}: class id must be a positive integer, got {y!r}")
    return None


def validate(dataset: Dataset) -> list[Finding]:
    """Check every structural invariant; an empty list means all hold.

    Checks: at least two bags, no empty bags, unique bag ids, instance width
    matches the schema, finite values, categorical codes inside their
    alphabets, labels admissible for the task, and (once normalization stats
    are fitted) continuous values inside [0, 1].
    """
    findings: list[Finding] = []
    schema = dataset.schema
    if len(dataset.bags) < 2:
        findings.append(Finding("too-few-bags", f"need at least 2 bags for training, got {len(dataset.bags)}"))
    seen: set[str] = set()
    for bag in dataset.bags:
        if bag.id in seen:
            findings.append(Finding("duplicate-id", f"bag id {bag.id!r} appears more than once"))
        seen.add(bag.id)
        if bag.n == 0:
            findings.append(Finding("empty-bag", f"bag {bag.id!r} has no instances"))
        if bag.dim != schema.dim:
            findings.append(
                Finding("schema-mismatch", f"bag {bag.id!r}: {bag.dim} attributes, schema has {schema.dim}")
            )
            continue
        if not np.isfinite(bag.values).all():
            bad = np.argwhere(~np.isfinite(bag.values))
            r, c = (int(v) for v in bad[0])
            findings.append(Finding("non-finite", f"bag {bag.id!r}: instance {r} attribute {c} is not finite"))
        for j in schema.categorical_idx:
            col = bag.values[:, j]
            n_cat = len(schema.categories[j])  # type: ignore[arg-type]
            if ((col != np.floor(col)) | (col < 0) | (col >= n_cat)).any():
                findings.append(
                    Finding("bad-category-code", f"bag {bag.id!r}: attribute {j} has codes outside 0..{n_cat - 1}")
                )
        if schema.fitted and schema.continuous_idx:
            cont = bag.values[:, list(schema.continuous_idx)]
            if cont.size and ((cont < -1e-12) | (cont > 1.0 + 1e-12)).any():
                findings.append(
                    Finding("out-of-range", f"bag {bag.id!r}: continuous values outside [0, 1] after normalization")
                )
        label_finding = _label_finding(dataset.task, bag)
        if label_finding is not None:
            findings.append(label_finding)
    return findings


def fit_normalization(dataset: Dataset) -> AttributeSchema:
    """Fit per-attribute min/max over all instances of all bags.

    Returns the schema with ``lo``/``hi`` filled in for the continuous
    attributes. Raises on non-finite values (which would poison the stats).
    """
    schema = dataset.schema
    cont = list(schema.continuous_idx)
    if not cont:
        return schema
    stacked = np.vstack([b.values for b in dataset.bags if b.n > 0])
    if stacked.size == 0:
        raise ValidationError("cannot fit normalization on a dataset with no instances")
    block = stacked[:, cont]
    if not np.isfinite(block).all():
        raise ValidationError("non-finite continuous values; run validate() to locate them")
    lo = block.min(axis=0)
    hi = block.max(axis=0)
    return replace(schema, lo=tuple(float(v) for v in lo), hi=tuple(float(v) for v in hi))


def apply_normalization(dataset: Dataset, fitted: AttributeSchema) -> Dataset:
    """Rescale continuous attributes to [0, 1] using fitted stats.

    Held-out values beyond the fitted range are clipped to [0, 1]. Constant
    attributes (hi == lo) map to 0. Categorical columns pass through.
    """
    if not fitted.fitted:
        raise ValidationError("schema has no fitted normalization stats")
    if fitted.kinds != dataset.schema.kinds:
        raise ValidationError("fitted schema does not match the dataset's attribute kinds")
    cont = list(fitted.continuous_idx)
    if not cont:
        return replace(dataset, schema=fitted)
    lo = np.asarray(fitted.lo, dtype=np.float64)
    hi = np.asarray(fitted.hi, dtype=np.float64)
    span = hi - lo
    safe = np.where(span > 0.0, span, 1.0)
    new_bags = []
    for bag in dataset.bags:
        values = np.array(bag.values, dtype=np.float64)
        block = (values[:, cont] - lo) / safe
        block[:, span == 0.0] = 0.0
        np.clip(block, 0.0, 1.0, out=block)
        values[:, cont] = block
        new_bags.append(replace(bag, values=values))
    return replace(dataset, schema=fitted, bags=tuple(new_bags))


def normalize_continuous(dataset: Dataset) -> Dataset:
    """Fit min/max on this dataset and rescale it to [0, 1] in one step."""
    return apply_normalization(dataset, fit_normalization(dataset))
