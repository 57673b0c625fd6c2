"""Kernel machines that consume precomputed Gram matrices.

* svm_train: a soft-margin SVM dual solver working directly on the Gram
  matrix. It runs sequential minimal optimization with max-violating-pair
  working-set selection: minimize (1/2) a^T Q a - sum(a) subject to
  0 <= a <= C and y^T a = 0, where Q_ij = y_i y_j K_ij, stopping when the
  maximal KKT violation drops to the tolerance.
* ovo_train / ovo_predict: one-vs-one multiclass voting over binary SVMs.
* krr_train / krr_predict: kernel ridge regression, beta = (K + lambda I)^-1 y.

All learners are deterministic: ties in working-set selection resolve to the
lowest index, so identical inputs give identical models.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg

from .bags import ValidationError
from .kernels import GramMatrix

_BOUND_EPS = 1e-12


def _as_gram_array(gram) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(gram, GramMatrix):
        return np.asarray(gram.values, dtype=np.float64), gram.bag_ids
    values = np.asarray(gram, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValidationError("gram must be a square matrix")
    return values, None


def _digest_arrays(kind: str, *parts) -> str:
    h = hashlib.sha256(kind.encode())
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part, dtype=np.float64).tobytes())
        else:
            h.update(repr(part).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class SvmModel:
    """Trained binary SVM: dual coefficients over the training bags."""

    dual_coef: np.ndarray  # alpha_i * y_i, one per training bag
    bias: float
    C: float
    bag_ids: tuple[str, ...]
    objective: float
    kkt_gap: float

    def __post_init__(self) -> None:
        coef = np.asarray(self.dual_coef, dtype=np.float64).ravel()
        coef.setflags(write=False)
        object.__setattr__(self, "dual_coef", coef)
        object.__setattr__(self, "bag_ids", tuple(self.bag_ids))

    @property
    def n(self) -> int:
        return int(self.dual_coef.shape[0])

    @property
    def digest(self) -> str:
        return _digest_arrays("svm", self.dual_coef, self.bias, self.C, self.bag_ids)


def svm_train(
    gram,
    labels: Sequence[float],
    C: float,
    tol: float = 1e-3,
    *,
    bag_ids: Sequence[str] | None = None,
    max_iter: int = 1_000_000,
    check_psd: bool = False,
) -> SvmModel:
    """Solve the soft-margin SVM dual on a precomputed Gram matrix.

    Labels must contain both classes (+1 and -1). The solver picks the
    maximal-violating pair each iteration (ties to the lowest index), takes
    the exact box-clipped step, and stops once the violation gap m - M falls
    to ``tol``. The equality constraint sum(alpha * y) = 0 holds throughout.
    """
    K, gram_ids = _as_gram_array(gram)
    y = np.asarray(labels, dtype=np.float64).ravel()
    n = K.shape[0]
    if y.shape[0] != n:
        raise ValidationError("label count does not match the gram size")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValidationError("binary labels must be -1 or +1")
    if (y > 0).all() or (y < 0).all():
        raise ValidationError("training needs both classes present")
    if C <= 0.0:
        raise ValidationError("C must be positive")
    if check_psd:
        eigs = np.linalg.eigvalsh(K)
        if float(eigs[0]) < -1e-8 * max(float(eigs[-1]), 0.0):
            raise ValidationError("gram is not positive semidefinite within the repair budget")
    ids = tuple(bag_ids) if bag_ids is not None else (gram_ids or tuple(str(i) for i in range(n)))
    if len(ids) != n:
        raise ValidationError("bag id count does not match the gram size")

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective: Q alpha - 1
    cap_hi = C - _BOUND_EPS
    it = 0
    m_val = M_val = 0.0
    while True:
        viol = -y * grad
        up = ((y > 0) & (alpha < cap_hi)) | ((y < 0) & (alpha > _BOUND_EPS))
        low = ((y < 0) & (alpha < cap_hi)) | ((y > 0) & (alpha > _BOUND_EPS))
        if not up.any() or not low.any():
            m_val = M_val = 0.0
            break
        up_idx = np.flatnonzero(up)
        low_idx = np.flatnonzero(low)
        i = up_idx[int(np.argmax(viol[up_idx]))]
        j = low_idx[int(np.argmin(viol[low_idx]))]
        m_val = float(viol[i])
        M_val = float(viol[j])
        if m_val - M_val <= tol:
            break
        if it >= max_iter:
            warnings.warn(
                f"SVM solver stopped after {max_iter} iterations with KKT gap {m_val - M_val:.3e}",
                RuntimeWarning,
            )
            break
        curvature = float(K[i, i] + K[j, j] - 2.0 * K[i, j])
        if curvature <= 1e-12:
            curvature = 1e-12
        step = (m_val - M_val) / curvature
        cap_i = C - alpha[i] if y[i] > 0 else alpha[i]
        cap_j = C - alpha[j] if y[j] < 0 else alpha[j]
        step = min(step, cap_i, cap_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        grad += step * y * (K[:, i] - K[:, j])
        np.clip(alpha, 0.0, C, out=alpha)
        it += 1

    viol = -y * grad
    free = (alpha > _BOUND_EPS) & (alpha < cap_hi)
    if free.any():
        bias = float(viol[free].mean())
    else:
        bias = (m_val + M_val) / 2.0
    coef = alpha * y
    objective = float(alpha.sum() - 0.5 * coef @ (K @ coef))
    return SvmModel(
        dual_coef=coef,
        bias=bias,
        C=float(C),
        bag_ids=ids,
        objective=objective,
        kkt_gap=float(m_val - M_val),
    )


def svm_decision(model: SvmModel, cross: np.ndarray) -> np.ndarray:
    """Decision scores for one kernel row or a (n_eval, n_train) block."""
    cross = np.asarray(cross, dtype=np.float64)
    single = cross.ndim == 1
    block = cross.reshape(1, -1) if single else cross
    if block.shape[1] != model.n:
        raise ValidationError("kernel row length does not match the training bag count")
    scores = block @ model.dual_coef + model.bias
    return scores[0] if single else scores


def svm_predict(model: SvmModel, cross: np.ndarray) -> tuple[float, int]:
    """Score plus sign label (+1 on ties) for one kernel row."""
    score = float(svm_decision(model, np.asarray(cross, dtype=np.float64).ravel()))
    return score, (1 if score >= 0.0 else -1)


@dataclass(frozen=True)
class OvoModel:
    """One-vs-one ensemble of binary SVMs over integer class ids."""

    classes: tuple[int, ...]
    models: tuple[tuple[tuple[int, int], SvmModel, tuple[int, ...]], ...]
    # each entry: ((class_a, class_b), model, training column indexes)

    @property
    def digest(self) -> str:
        h = hashlib.sha256(b"ovo")
        for (a, b), model, cols in self.models:
            h.update(f"{a}:{b}:{cols}".encode())
            h.update(model.digest.encode())
        return h.hexdigest()


def ovo_train(
    gram,
    labels: Sequence[float],
    C: float,
    tol: float = 1e-3,
    *,
    bag_ids: Sequence[str] | None = None,
) -> OvoModel:
    """Train one binary SVM per unordered class pair.

    In the (a, b) model, class a maps to +1 and class b to -1. Needs at
    least two distinct classes.
    """
    K, gram_ids = _as_gram_array(gram)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.shape[0] != K.shape[0]:
        raise ValidationError("label count does not match the gram size")
    if (y != np.round(y)).any():
        raise ValidationError("multiclass labels must be integers")
    classes = tuple(int(c) for c in sorted(set(y.tolist())))
    if len(classes) < 2:
        raise ValidationError("training needs at least two classes present")
    ids = tuple(bag_ids) if bag_ids is not None else (gram_ids or tuple(str(i) for i in range(K.shape[0])))
    models = []
    for a, b in combinations(classes, 2):
        cols = np.flatnonzero((y == a) | (y == b))
        sub = K[np.ix_(cols, cols)]
        sub_y = np.where(y[cols] == a, 1.0, -1.0)
        sub_ids = tuple(ids[c] for c in cols)
        model = svm_train(sub, sub_y, C, tol, bag_ids=sub_ids)
        models.append(((a, b), model, tuple(int(c) for c in cols)))
    return OvoModel(classes=classes, models=tuple(models))


def ovo_predict(model: OvoModel, cross: np.ndarray) -> int:
    """Vote over all pairwise models for one kernel row.

    Row columns must follow the full training bag order used by ovo_train.
    Vote ties break by the summed absolute scores of each class's wins,
    then by the lowest class id.
    """
    cross = np.asarray(cross, dtype=np.float64).ravel()
    votes = {c: 0 for c in model.classes}
    strength = {c: 0.0 for c in model.classes}
    for (a, b), sub_model, cols in model.models:
        score, label = svm_predict(sub_model, cross[list(cols)])
        winner = a if label > 0 else b
        votes[winner] += 1
        strength[winner] += abs(score)
    best = max(model.classes, key=lambda c: (votes[c], strength[c], -c))
    return int(best)


@dataclass(frozen=True)
class KrrModel:
    """Kernel ridge regressor: beta = (K + lambda I)^-1 y."""

    beta: np.ndarray
    lam: float
    bag_ids: tuple[str, ...]
    residual: float

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=np.float64).ravel()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "bag_ids", tuple(self.bag_ids))

    @property
    def n(self) -> int:
        return int(self.beta.shape[0])

    @property
    def digest(self) -> str:
        return _digest_arrays("krr", self.beta, self.lam, self.bag_ids)


def krr_train(
    gram,
    targets: Sequence[float],
    lam: float,
    *,
    bag_ids: Sequence[str] | None = None,
) -> KrrModel:
    """Solve (K + lambda I) beta = y.

    lambda must be positive unless K itself is nonsingular; a singular
    system raises with advice to raise lambda. The solution is verified:
    ||(K + lambda I) beta - y|| <= 1e-8 * ||y||.
    """
    K, gram_ids = _as_gram_array(gram)
    y = np.asarray(targets, dtype=np.float64).ravel()
    n = K.shape[0]
    if y.shape[0] != n:
        raise ValidationError("target count does not match the gram size")
    if lam < 0.0:
        raise ValidationError("lambda must be nonnegative")
    ids = tuple(bag_ids) if bag_ids is not None else (gram_ids or tuple(str(i) for i in range(n)))
    system = K + lam * np.eye(n)
    try:
        beta = scipy.linalg.solve(system, y, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise ValidationError(
            f"ridge system is singular at lambda={lam!r}; use a positive lambda"
        ) from exc
    residual = float(np.linalg.norm(system @ beta - y))
    bound = 1e-8 * max(float(np.linalg.norm(y)), 1e-30)
    if not np.isfinite(beta).all() or residual > bound:
        raise ValidationError(
            f"ridge system is ill-conditioned at lambda={lam!r} (residual {residual:.3e}); use a larger lambda"
        )
    return KrrModel(beta=beta, lam=float(lam), bag_ids=ids, residual=residual)


def krr_predict(
    model: KrrModel,
    cross: np.ndarray,
    clip: tuple[float, float] | None = None,
):
    """Prediction(s) for one kernel row or a block; optionally clipped."""
    cross = np.asarray(cross, dtype=np.float64)
    single = cross.ndim == 1
    block = cross.reshape(1, -1) if single else cross
    if block.shape[1] != model.n:
        raise ValidationError("kernel row length does not match the training bag count")
    preds = block @ model.beta
    if clip is not None:
        preds = np.clip(preds, clip[0], clip[1])
    return float(preds[0]) if single else preds
