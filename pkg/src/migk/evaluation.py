"""Evaluation protocol: repeated stratified CV, leave-one-out, paired tests.

cross_validate runs repeated k-fold cross-validation. Inside every outer
fold it fits preprocessing (continuous normalization, VDM counts, the
width-grid scale) on the training bags only, selects hyperparameters by an
inner 3-fold cross-validation over the training bags, retrains on the full
training split, and scores the held-out fold. Classification records
accuracy in percent; regression records the fold's mean squared loss.

leave_one_out scores a regression dataset one bag at a time, with
hyperparameters chosen per selection fold by the same inner search.

Results are deterministic given (dataset, kernel, plan, search space):
fold assignments derive from the plan seed, grid enumeration order is
fixed, and ties in selection go to the earliest candidate. RunResult
separates the deterministic payload (digested) from wall-clock timing.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.stats

from .bags import (
    TASK_CLASSIFY,
    TASK_MULTICLASS,
    TASK_REGRESS,
    Bag,
    Dataset,
    ValidationError,
    apply_normalization,
    fit_normalization,
    validate,
)
from .distances import VdmTable, build_vdm_table
from .kernels import (
    MIGRAPH,
    GramBatch,
    KernelConfig,
    canonical_kernel_name,
    gamma_grid,
)
from .learners import (
    krr_predict,
    krr_train,
    ovo_predict,
    ovo_train,
    svm_decision,
    svm_train,
)


@dataclass(frozen=True)
class CvPlan:
    """Fold layout: k folds, repeated, seeded, stratified by default."""

    folds: int = 10
    repeats: int = 10
    seed: int = 0
    stratified: bool = True

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise ValidationError("need at least 2 folds")
        if self.repeats < 1:
            raise ValidationError("need at least 1 repeat")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


@dataclass(frozen=True)
class SearchSpace:
    """Hyperparameter grids searched by the inner cross-validation.

    Width grids are relative: actual gammas are 2^k over the training
    split's mean squared pairwise distance (instances for gamma_node,
    edge descriptors for gamma_edge).
    """

    gamma_powers: tuple[int, ...] = tuple(range(-4, 5))
    edge_gamma_powers: tuple[int, ...] | None = None
    c_grid: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)
    lam_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0)
    eps_factors: tuple[float, ...] = (1.0,)

    @property
    def edge_powers(self) -> tuple[int, ...]:
        return self.gamma_powers if self.edge_gamma_powers is None else self.edge_gamma_powers


def make_folds(dataset_or_labels, plan: CvPlan) -> list[list[np.ndarray]]:
    """Fold assignments: one list of sorted test-index arrays per repeat.

    Every index lands in exactly one test fold per repeat. Stratified
    assignment deals each class round-robin after a seeded shuffle, so
    per-fold class counts differ by at most one; classes smaller than the
    fold count trigger a warning (strict stratification is impossible).
    """
    if isinstance(dataset_or_labels, Dataset):
        labels = dataset_or_labels.labels
        stratify = plan.stratified and dataset_or_labels.task != TASK_REGRESS
    else:
        labels = np.asarray(dataset_or_labels, dtype=np.float64).ravel()
        stratify = plan.stratified
    n = labels.shape[0]
    if plan.folds > n:
        raise ValidationError(f"cannot split {n} bags into {plan.folds} folds")
    if stratify:
        for c in sorted(set(labels.tolist())):
            count = int((labels == c).sum())
            if count < plan.folds:
                warnings.warn(
                    f"class {c:g} has {count} bags, fewer than {plan.folds} folds; "
                    "stratification relaxed to a best-effort spread",
                    UserWarning,
                )
                break
    assignments: list[list[np.ndarray]] = []
    for rep in range(plan.repeats):
        rng = np.random.default_rng([plan.seed, rep])
        buckets: list[list[int]] = [[] for _ in range(plan.folds)]
        if stratify:
            next_fold = 0
            for c in sorted(set(labels.tolist())):
                idx = np.flatnonzero(labels == c)
                idx = idx[rng.permutation(idx.shape[0])]
                for i in idx:
                    buckets[next_fold % plan.folds].append(int(i))
                    next_fold += 1
        else:
            order = rng.permutation(n)
            for pos, i in enumerate(order):
                buckets[pos % plan.folds].append(int(i))
        assignments.append([np.array(sorted(b), dtype=np.int64) for b in buckets])
    return assignments


@dataclass(frozen=True)
class FoldRecord:
    """One outer fold's outcome. ``wall`` is timing only, never digested."""

    repeat: int
    fold: int
    n_test: int
    value: float
    params: dict
    model_digest: str
    test_ids: tuple[str, ...]
    wall: float = 0.0

    def result_payload(self) -> dict:
        return {
            "repeat": self.repeat,
            "fold": self.fold,
            "n_test": self.n_test,
            "value": self.value,
            "params": dict(sorted(self.params.items())),
            "model_digest": self.model_digest,
            "test_ids": list(self.test_ids),
        }


@dataclass(frozen=True)
class RunResult:
    """A full evaluation run: per-fold records plus aggregates."""

    method: str
    kernel: str
    task: str
    metric_name: str
    plan: CvPlan
    records: tuple[FoldRecord, ...]
    timing: dict = field(default_factory=dict, compare=False)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records], dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def std(self) -> float:
        v = self.values
        return float(v.std(ddof=1)) if v.shape[0] > 1 else 0.0

    @property
    def ci95(self) -> tuple[float, float]:
        return confidence_interval_95(self.values)

    def result_payload(self) -> dict:
        lo, hi = self.ci95
        return {
            "method": self.method,
            "kernel": self.kernel,
            "task": self.task,
            "metric": self.metric_name,
            "plan": asdict(self.plan),
            "records": [r.result_payload() for r in self.records],
            "aggregate": {
                "n": len(self.records),
                "mean": self.mean,
                "std": self.std,
                "ci95": [lo, hi],
            },
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.result_payload(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class TTestResult:
    """Two-sided paired t-test outcome at the given significance level."""

    t: float
    df: int
    p_value: float
    significant: bool
    direction: int  # sign of mean(a - b): 1, -1, or 0


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Paired two-sided t-test on aligned per-fold values.

    Zero-variance differences are handled exactly: identical sequences are
    not significant (t = 0); a constant nonzero difference is significant
    (|t| = inf).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError("paired test needs sequences of equal length")
    n = a.shape[0]
    if n < 2:
        raise ValidationError("paired test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, df=df, p_value=1.0, significant=False, direction=0)
        t = float(np.copysign(np.inf, mean))
        return TTestResult(t=t, df=df, p_value=0.0, significant=True, direction=int(np.sign(mean)))
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * float(scipy.stats.t.sf(abs(t), df))
    return TTestResult(t=float(t), df=df, p_value=p, significant=p < alpha, direction=int(np.sign(mean)))


def confidence_interval_95(values: Sequence[float]) -> tuple[float, float]:
    """mean +/- t(0.975, n-1) * sd / sqrt(n) with the sample deviation."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.shape[0]
    if n < 2:
        raise ValidationError("confidence interval needs at least 2 values")
    half = float(scipy.stats.t.ppf(0.975, n - 1)) * float(v.std(ddof=1)) / float(np.sqrt(n))
    mean = float(v.mean())
    return (mean - half, mean + half)


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _check_dataset(dataset: Dataset) -> None:
    findings = validate(dataset)
    if findings:
        head = "; ".join(str(f) for f in findings[:5])
        raise ValidationError(f"dataset failed validation ({len(findings)} findings): {head}")


def _fit_fold(
    dataset: Dataset,
    train_idx: np.ndarray,
) -> tuple[Dataset, VdmTable | None]:
    """Fit preprocessing on the training bags, apply to every bag."""
    train_ds = dataset.subset(train_idx)
    fitted = fit_normalization(train_ds)
    full = apply_normalization(dataset, fitted)
    table = None
    if fitted.categorical_idx:
        if dataset.task == TASK_REGRESS:
            raise ValidationError("categorical attributes need class labels for VDM; regression is unsupported")
        table = build_vdm_table(full.subset(train_idx))
    return full, table


def _combo_configs(
    kernel: str,
    base: KernelConfig,
    space: SearchSpace,
    batch: GramBatch,
    train_idx: np.ndarray,
) -> list[KernelConfig]:
    """Kernel-side candidate configs in a fixed enumeration order."""
    msd = batch.mean_sq_dist(train_idx)
    gammas = gamma_grid(msd, space.gamma_powers)
    configs = []
    if kernel == MIGRAPH:
        for factor in space.eps_factors:
            edge_msd = batch.mean_sq_edge_dist(train_idx, factor)
            edge_gammas = gamma_grid(edge_msd, space.edge_powers)
            for gn in gammas:
                for ge in edge_gammas:
                    configs.append(replace(base, gamma_node=gn, gamma_edge=ge, epsilon_factor=factor))
    else:
        for gn in gammas:
            configs.append(replace(base, gamma_node=gn))
    return configs


def _config_params(kernel: str, config: KernelConfig) -> dict:
    params = {"gamma_node": config.gamma_node}
    if kernel == MIGRAPH:
        params["gamma_edge"] = config.gamma_edge
        params["epsilon_factor"] = config.epsilon_factor
    return params


def _accuracy_percent(pred: np.ndarray, truth: np.ndarray) -> float:
    return 100.0 * float((pred == truth).mean())


def _fit_predict(
    task: str,
    gram_values: np.ndarray,
    train_global: np.ndarray,
    eval_global: np.ndarray,
    labels: np.ndarray,
    bag_ids: Sequence[str],
    param: float,
):
    """Train on one index set, return (model, metric value on the other)."""
    sub = gram_values[np.ix_(train_global, train_global)]
    cross = gram_values[np.ix_(eval_global, train_global)]
    y_train = labels[train_global]
    y_eval = labels[eval_global]
    ids = tuple(bag_ids[i] for i in train_global)
    if task == TASK_CLASSIFY:
        model = svm_train(sub, y_train, C=param, bag_ids=ids)
        pred = np.where(svm_decision(model, cross) >= 0.0, 1.0, -1.0)
        return model, _accuracy_percent(pred, y_eval)
    if task == TASK_MULTICLASS:
        model = ovo_train(sub, y_train, C=param, bag_ids=ids)
        pred = np.array([ovo_predict(model, row) for row in cross], dtype=np.float64)
        return model, _accuracy_percent(pred, y_eval)
    model = krr_train(sub, y_train, lam=param, bag_ids=ids)
    pred = krr_predict(model, cross, clip=(0.0, 1.0))
    return model, float(np.mean((pred - y_eval) ** 2))


def _trainable(task: str, y: np.ndarray) -> bool:
    if task == TASK_REGRESS:
        return y.shape[0] >= 1
    return np.unique(y).shape[0] >= 2


def _select_params(
    task: str,
    kernel: str,
    batch: GramBatch,
    labels: np.ndarray,
    bag_ids: Sequence[str],
    train_idx: np.ndarray,
    configs: list[KernelConfig],
    learner_grid: Sequence[float],
    inner_seed: int,
    inner_folds: int = 3,
) -> tuple[KernelConfig, float, np.ndarray]:
    """Inner CV over (config, learner param); returns the winner and its gram.

    Higher is better for accuracy, lower for squared loss. Ties keep the
    earliest candidate in enumeration order. Inner folds whose training
    slice cannot be trained on (a class missing entirely) are skipped for
    every candidate alike; if no fold is usable the first candidate wins.
    """
    inner_plan = CvPlan(
        folds=min(inner_folds, max(2, train_idx.shape[0] // 2)),
        repeats=1,
        seed=inner_seed,
        stratified=task != TASK_REGRESS,
    )
    inner = make_folds(labels[train_idx], inner_plan)[0]
    splits = []
    for test_pos in inner:
        mask = np.ones(train_idx.shape[0], dtype=bool)
        mask[test_pos] = False
        itr = train_idx[mask]
        ite = train_idx[test_pos]
        if itr.shape[0] and ite.shape[0] and _trainable(task, labels[itr]):
            splits.append((itr, ite))
    maximize = task != TASK_REGRESS
    best = None  # (score, config, param, gram)
    for config in configs:
        gram_values = batch.gram(config)
        for param in learner_grid:
            if splits:
                scores = [
                    _fit_predict(task, gram_values, itr, ite, labels, bag_ids, param)[1]
                    for itr, ite in splits
                ]
                score = float(np.mean(scores))
            else:
                score = -np.inf if maximize else np.inf
            better = best is None or (score > best[0] if maximize else score < best[0])
            if better:
                best = (score, config, param, gram_values)
    assert best is not None
    return best[1], best[2], best[3]


def _learner_grid(task: str, space: SearchSpace) -> tuple[str, tuple[float, ...]]:
    if task == TASK_REGRESS:
        return "lambda", space.lam_grid
    return "C", space.c_grid


def _model_digest(model) -> str:
    return model.digest


def cross_validate(
    dataset: Dataset,
    kernel: str,
    plan: CvPlan = CvPlan(),
    *,
    space: SearchSpace = SearchSpace(),
    base_config: KernelConfig = KernelConfig(),
    threads: int = 1,
    _test_fold_transform: Callable[[Bag], Bag] | None = None,
) -> RunResult:
    """Repeated k-fold evaluation with per-fold inner parameter selection.

    Classification uses the SVM (one-vs-one above two classes) and records
    fold accuracy in percent; regression uses ridge regression and records
    fold mean squared loss. ``_test_fold_transform`` is a testing hook that
    rewrites held-out bags before evaluation; training-side results must be
    unaffected by it.
    """
    kernel = canonical_kernel_name(kernel)
    _check_dataset(dataset)
    labels = dataset.labels
    bag_ids = dataset.bag_ids
    param_name, learner_grid = _learner_grid(dataset.task, space)
    assignments = make_folds(dataset, plan)
    jobs = [
        (rep, fold, test_idx)
        for rep, folds in enumerate(assignments)
        for fold, test_idx in enumerate(folds)
        if test_idx.shape[0]
    ]

    def run_fold(job) -> FoldRecord:
        rep, fold, test_idx = job
        t0 = time.perf_counter()
        train_mask = np.ones(len(labels), dtype=bool)
        train_mask[test_idx] = False
        train_idx = np.flatnonzero(train_mask)
        if not _trainable(dataset.task, labels[train_idx]):
            raise ValidationError(f"repeat {rep} fold {fold}: training split lost a class")
        work = dataset
        if _test_fold_transform is not None:
            bags = list(work.bags)
            for i in test_idx:
                bags[int(i)] = _test_fold_transform(bags[int(i)])
            work = replace(work, bags=tuple(bags))
        full, table = _fit_fold(work, train_idx)
        batch = GramBatch(full.bags, kernel, full.schema, table)
        configs = _combo_configs(kernel, base_config, space, batch, train_idx)
        config, param, gram_values = _select_params(
            dataset.task,
            kernel,
            batch,
            labels,
            bag_ids,
            train_idx,
            configs,
            learner_grid,
            _derived_seed(plan.seed, rep, fold, 1),
        )
        model, value = _fit_predict(
            dataset.task, gram_values, train_idx, test_idx, labels, bag_ids, param
        )
        params = _config_params(kernel, config)
        params[param_name] = param
        return FoldRecord(
            repeat=rep,
            fold=fold,
            n_test=int(test_idx.shape[0]),
            value=value,
            params=params,
            model_digest=_model_digest(model),
            test_ids=tuple(bag_ids[int(i)] for i in test_idx),
            wall=time.perf_counter() - t0,
        )

    t_start = time.perf_counter()
    records = _run_jobs(jobs, run_fold, threads)
    total = time.perf_counter() - t_start
    records.sort(key=lambda r: (r.repeat, r.fold))
    timing = {"total_wall": total, "folds": {f"{r.repeat}.{r.fold}": r.wall for r in records}}
    return RunResult(
        method=f"{kernel} cross-validation",
        kernel=kernel,
        task=dataset.task,
        metric_name="squared_loss" if dataset.task == TASK_REGRESS else "accuracy_percent",
        plan=plan,
        records=tuple(records),
        timing=timing,
    )


def _run_jobs(jobs, worker, threads: int) -> list:
    threads = max(1, int(threads))
    results = []
    if threads == 1:
        for job in jobs:
            results.append(_run_one(job, worker))
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_one, job, worker) for job in jobs]
        return [f.result() for f in futures]


def _run_one(job, worker):
    try:
        return worker(job)
    except Exception as exc:
        rep, fold = job[0], job[1]
        raise RuntimeError(f"evaluation fold repeat={rep} fold={fold} failed: {exc}") from exc


def leave_one_out(
    dataset: Dataset,
    kernel: str,
    *,
    space: SearchSpace = SearchSpace(),
    base_config: KernelConfig = KernelConfig(),
    selection_folds: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> RunResult:
    """Leave-one-out regression: one squared loss per held-out bag.

    Hyperparameters are selected once per selection fold (inner 3-fold CV
    on that fold's complement); each bag is then scored by a model trained
    on every other bag with its fold's parameters. The aggregate mean is
    sum((pred - y)^2) / N. Predictions are clipped to [0, 1].
    """
    kernel = canonical_kernel_name(kernel)
    if dataset.task != TASK_REGRESS:
        raise ValidationError("leave-one-out scoring here is for regression datasets")
    _check_dataset(dataset)
    labels = dataset.labels
    bag_ids = dataset.bag_ids
    n = len(dataset)
    plan = CvPlan(folds=min(selection_folds, n), repeats=1, seed=seed, stratified=False)
    fold_of = np.empty(n, dtype=np.int64)
    assignments = make_folds(dataset, plan)[0]
    for fold, test_idx in enumerate(assignments):
        fold_of[test_idx] = fold

    selected: dict[int, tuple[KernelConfig, float]] = {}
    for fold, test_idx in enumerate(assignments):
        if not test_idx.shape[0]:
            continue
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        train_idx = np.flatnonzero(mask)
        full, table = _fit_fold(dataset, train_idx)
        batch = GramBatch(full.bags, kernel, full.schema, table)
        configs = _combo_configs(kernel, base_config, space, batch, train_idx)
        config, param, _ = _select_params(
            TASK_REGRESS,
            kernel,
            batch,
            labels,
            bag_ids,
            train_idx,
            configs,
            space.lam_grid,
            _derived_seed(seed, fold, 2),
        )
        selected[fold] = (config, param)

    def run_bag(job) -> FoldRecord:
        _, pos = job
        t0 = time.perf_counter()
        train_idx = np.array([i for i in range(n) if i != pos], dtype=np.int64)
        config, lam = selected[int(fold_of[pos])]
        full, table = _fit_fold(dataset, train_idx)
        batch = GramBatch(full.bags, kernel, full.schema, table)
        gram_values = batch.gram(config)
        model, value = _fit_predict(
            TASK_REGRESS, gram_values, train_idx, np.array([pos]), labels, bag_ids, lam
        )
        params = _config_params(kernel, config)
        params["lambda"] = lam
        return FoldRecord(
            repeat=0,
            fold=int(pos),
            n_test=1,
            value=value,
            params=params,
            model_digest=_model_digest(model),
            test_ids=(bag_ids[int(pos)],),
            wall=time.perf_counter() - t0,
        )

    t_start = time.perf_counter()
    records = _run_jobs([(0, pos) for pos in range(n)], run_bag, threads)
    total = time.perf_counter() - t_start
    records.sort(key=lambda r: (r.repeat, r.fold))
    timing = {"total_wall": total, "folds": {f"{r.repeat}.{r.fold}": r.wall for r in records}}
    return RunResult(
        method=f"{kernel} leave-one-out",
        kernel=kernel,
        task=TASK_REGRESS,
        metric_name="squared_loss",
        plan=plan,
        records=tuple(records),
        timing=timing,
    )


@dataclass(frozen=True)
class ComparisonResult:
    """Two runs on identical folds plus their paired test."""

    run_a: RunResult
    run_b: RunResult
    ttest: TTestResult
    mean_diff: float

    def result_payload(self) -> dict:
        return {
            "a": self.run_a.result_payload(),
            "b": self.run_b.result_payload(),
            "paired_t": {
                "t": self.ttest.t,
                "df": self.ttest.df,
                "p_value": self.ttest.p_value,
                "significant": self.ttest.significant,
                "direction": self.ttest.direction,
            },
            "mean_diff": self.mean_diff,
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.result_payload(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def compare_methods(
    dataset: Dataset,
    kernel_a: str,
    kernel_b: str,
    plan: CvPlan = CvPlan(),
    *,
    space: SearchSpace = SearchSpace(),
    base_config: KernelConfig = KernelConfig(),
    threads: int = 1,
) -> ComparisonResult:
    """Evaluate two kernels on identical fold assignments and pair-test them.

    Fold assignments depend only on the labels and the plan, so both runs
    share them; records align by (repeat, fold).
    """
    run_a = cross_validate(dataset, kernel_a, plan, space=space, base_config=base_config, threads=threads)
    run_b = cross_validate(dataset, kernel_b, plan, space=space, base_config=base_config, threads=threads)
    ttest = paired_t_test(run_a.values, run_b.values)
    return ComparisonResult(
        run_a=run_a,
        run_b=run_b,
        ttest=ttest,
        mean_diff=float(run_a.values.mean() - run_b.values.mean()),
    )
