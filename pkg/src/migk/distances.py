"""Instance distances: squared Euclidean, VDM for categoricals, and the mix.

The mixed distance between two instances is

    sqrt( sum_categorical VDM(z1, z2) + sum_continuous |x1 - x2|^2 )

where VDM compares the per-class conditional frequencies of the two symbols:

    VDM(z1, z2) = sum_c | N(z1, c)/N(z1) - N(z2, c)/N(z2) |^2

Counts are collected over training instances, each instance inheriting its
bag's label. A symbol never seen in training contributes the uniform
frequency vector (1/C per class).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bags import (
    TASK_REGRESS,
    AttributeSchema,
    Dataset,
    ValidationError,
)


@dataclass(frozen=True)
class VdmTable:
    """Per-class frequency vectors for every categorical attribute.

    ``freqs[a]`` is a (n_codes, n_classes) matrix of conditional class
    frequencies for categorical attribute slot ``a`` (slots follow
    ``schema.categorical_idx`` order). Codes with zero training count hold
    the uniform vector. ``classes`` lists the class labels in sorted order.
    """

    classes: tuple[float, ...]
    attr_indices: tuple[int, ...]
    freqs: tuple[np.ndarray, ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def freq_vector(self, attr: int, code: int) -> np.ndarray:
        """Class-frequency vector for one symbol; uniform if out of range."""
        slot = self.attr_indices.index(attr)
        table = self.freqs[slot]
        if 0 <= code < table.shape[0]:
            return table[code]
        return np.full(self.n_classes, 1.0 / self.n_classes)

    def sq_diff_matrix(self, attr: int) -> np.ndarray:
        """(n_codes+1, n_codes+1) lookup of VDM values between codes.

        The trailing row/column stands for an unseen code (uniform vector),
        so lookups may index with ``min(code, n_codes)``.
        """
        slot = self.attr_indices.index(attr)
        table = self.freqs[slot]
        uniform = np.full((1, self.n_classes), 1.0 / self.n_classes)
        ext = np.vstack([table, uniform])
        diff = ext[:, None, :] - ext[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)


def build_vdm_table(dataset: Dataset) -> VdmTable:
    """Count symbol/class co-occurrences over a training dataset.

    Instances inherit their bag's label. Requires a discrete-label task and
    at least one categorical attribute.
    """
    if dataset.task == TASK_REGRESS:
        raise ValidationError("VDM needs class labels; regression datasets have none")
    schema = dataset.schema
    cat = schema.categorical_idx
    if not cat:
        raise ValidationError("VDM needs at least one categorical attribute")
    classes = tuple(sorted({float(b.label) for b in dataset.bags}))
    class_pos = {c: i for i, c in enumerate(classes)}
    freqs = []
    for attr in cat:
        n_codes = len(schema.categories[attr])  # type: ignore[arg-type]
        counts = np.zeros((n_codes, len(classes)), dtype=np.float64)
        for bag in dataset.bags:
            if bag.n == 0:
                continue
            codes = bag.values[:, attr].astype(np.int64)
            if ((codes < 0) | (codes >= n_codes)).any():
                raise ValidationError(f"bag {bag.id!r}: attribute {attr} has codes outside the alphabet")
            np.add.at(counts, (codes, class_pos[float(bag.label)]), 1.0)
        totals = counts.sum(axis=1, keepdims=True)
        freq = np.where(totals > 0.0, counts / np.where(totals > 0.0, totals, 1.0), 1.0 / len(classes))
        freqs.append(freq)
    return VdmTable(classes=classes, attr_indices=tuple(cat), freqs=tuple(freqs))


def vdm(code1: float, code2: float, attr: int, table: VdmTable) -> float:
    """Squared-frequency-difference distance between two symbols."""
    f1 = table.freq_vector(attr, int(code1))
    f2 = table.freq_vector(attr, int(code2))
    d = f1 - f2
    return float(d @ d)


def mixed_distance(
    x1: np.ndarray,
    x2: np.ndarray,
    schema: AttributeSchema,
    table: VdmTable | None = None,
) -> float:
    """Mixed instance distance: sqrt(VDM terms + squared continuous gaps)."""
    x1 = np.asarray(x1, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x1.shape[0] != schema.dim or x2.shape[0] != schema.dim:
        raise ValidationError("instance width does not match the schema")
    total = 0.0
    cont = list(schema.continuous_idx)
    if cont:
        gap = x1[cont] - x2[cont]
        total += float(gap @ gap)
    cat = schema.categorical_idx
    if cat:
        if table is None:
            raise ValidationError("categorical attributes present but no VDM table given")
        for attr in cat:
            total += vdm(x1[attr], x2[attr], attr, table)
    return float(np.sqrt(total))


# Broadcasting the exact (a-b)^2 form is bit-faithful to the scalar
# definition; the dot-product expansion is used only past this size.
_EXACT_LIMIT = 2_000_000


def _sq_dists_continuous(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[0] * b.shape[0] * max(a.shape[1], 1) <= _EXACT_LIMIT:
        diff = a[:, None, :] - b[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def pairwise_sq_dists(
    a: np.ndarray,
    b: np.ndarray,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
) -> np.ndarray:
    """Matrix of squared mixed distances between two instance matrices.

    With no schema (or an all-continuous one) this is the squared Euclidean
    distance matrix. Categorical attributes add their VDM terms through a
    precomputed code-by-code lookup.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if schema is None or not schema.categorical_idx:
        return _sq_dists_continuous(a, b)
    if table is None:
        raise ValidationError("categorical attributes present but no VDM table given")
    cont = list(schema.continuous_idx)
    if cont:
        sq = _sq_dists_continuous(a[:, cont], b[:, cont])
    else:
        sq = np.zeros((a.shape[0], b.shape[0]))
    for attr in schema.categorical_idx:
        lookup = table.sq_diff_matrix(attr)
        cap = lookup.shape[0] - 1
        ca = np.minimum(a[:, attr].astype(np.int64), cap)
        cb = np.minimum(b[:, attr].astype(np.int64), cap)
        ca = np.where(ca < 0, cap, ca)
        cb = np.where(cb < 0, cap, cb)
        sq = sq + lookup[np.ix_(ca, cb)]
    return sq
