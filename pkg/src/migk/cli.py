"""Command-line interface.

Subcommands: convert, validate, gram, train, predict, cv, loo, compare.
Exit codes: 0 success, 1 usage or validation problems (bad flags, missing
files, datasets that fail validation), 2 computation failures.

Flag values can come from a config file of ``key=value`` lines (# comments
allowed) named with --config; explicit command-line flags win over the file,
which wins over built-in defaults. Keys use the long flag spelling with
either dashes or underscores. --threads falls back to the MIGK_THREADS
environment variable, then to 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as formats
from .bags import (
    TASK_CLASSIFY,
    TASK_MULTICLASS,
    TASK_REGRESS,
    TASKS,
    Dataset,
    ValidationError,
    apply_normalization,
    fit_normalization,
    validate,
)
from .distances import build_vdm_table
from .evaluation import (
    CvPlan,
    SearchSpace,
    compare_methods,
    cross_validate,
    leave_one_out,
)
from .kernels import (
    GramBatch,
    KernelConfig,
    canonical_kernel_name,
    gamma_grid,
    gram,
)
from .learners import (
    KrrModel,
    OvoModel,
    SvmModel,
    krr_predict,
    krr_train,
    ovo_predict,
    ovo_train,
    svm_predict,
    svm_train,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise _UsageError(f"expected a comma-separated float list, got {text!r}") from exc


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise _UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def _default_threads() -> int:
    env = os.environ.get("MIGK_THREADS", "").strip()
    if env:
        try:
            value = int(env)
            if value < 1:
                raise ValueError
            return value
        except ValueError:
            raise _UsageError(f"MIGK_THREADS must be a positive integer, got {env!r}") from None
    return 1


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="bag CSV file")
    p.add_argument("--task", choices=TASKS, default=TASK_CLASSIFY)
    p.add_argument("--schema", help="schema JSON (attribute kinds and alphabets)")


def _add_kernel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", default="miGraph", help="MIGraph, miGraph, or MI-Kernel")
    p.add_argument("--gamma", type=float, help="instance kernel width (default: 1/mean squared distance)")
    p.add_argument("--gamma-edge", type=float, help="edge kernel width (default: 1/mean squared edge distance)")
    p.add_argument("--epsilon-factor", type=float, default=1.0)
    p.add_argument("--affinity-gamma", type=float, help="affinity width (default: follows --gamma)")
    p.add_argument("--affinity-mode", choices=("rbf-induced", "squared-euclidean"), default="rbf-induced")
    p.add_argument("--edge-term-weight", type=float, default=1.0)
    p.add_argument("--no-normalize", action="store_true", help="skip self-similarity normalization")
    p.add_argument("--raw-features", action="store_true", help="skip [0,1] rescaling of continuous attributes")


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-stratify", action="store_true")


def _add_space_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma-powers", type=_parse_ints, default=tuple(range(-4, 5)),
                   help="comma list of powers k; widths are 2^k over the mean squared distance")
    p.add_argument("--edge-gamma-powers", type=_parse_ints, default=None)
    p.add_argument("--c-grid", type=_parse_floats, default=(0.1, 1.0, 10.0, 100.0))
    p.add_argument("--lam-grid", type=_parse_floats, default=(1e-3, 1e-2, 1e-1, 1.0))
    p.add_argument("--eps-factors", type=_parse_floats, default=(1.0,))


def build_parser() -> _Parser:
    parser = _Parser(prog="migk", description="Multi-instance graph-kernel toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[], help="convert a C4.5 molecule file to bag CSV")
    p.add_argument("format", choices=("musk",), help="source format")
    p.add_argument("input", help="C4.5 .data file")
    p.add_argument("output", help="bag CSV to write")

    p = sub.add_parser("validate", help="check a bag CSV against the data invariants")
    _add_data_flags(p)

    p = sub.add_parser("gram", help="compute a Gram matrix over a dataset")
    _add_data_flags(p)
    _add_kernel_flags(p)
    p.add_argument("--out", required=True, help="binary gram file to write")
    p.add_argument("--csv", help="also export the matrix as CSV")

    p = sub.add_parser("train", help="fit one model on the full dataset")
    _add_data_flags(p)
    _add_kernel_flags(p)
    p.add_argument("--C", type=float, default=1.0, dest="c_value")
    p.add_argument("--lam", type=float, default=1e-2, help="ridge strength for regression")
    p.add_argument("--out", required=True, help="model blob to write")

    p = sub.add_parser("predict", help="score bags with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--train-data", required=True, help="bag CSV the model was trained on")
    _add_data_flags(p)
    p.add_argument("--out", help="CSV of predictions (default: stdout)")

    p = sub.add_parser("cv", help="repeated cross-validation with inner parameter selection")
    _add_data_flags(p)
    p.add_argument("--kernel", default="miGraph")
    _add_plan_flags(p)
    _add_space_flags(p)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="result JSON")
    p.add_argument("--csv", help="per-fold CSV")

    p = sub.add_parser("loo", help="leave-one-out regression scoring")
    _add_data_flags(p)
    p.add_argument("--kernel", default="miGraph")
    p.add_argument("--selection-folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_space_flags(p)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="result JSON")
    p.add_argument("--csv", help="per-bag CSV")

    p = sub.add_parser("compare", help="paired comparison of two kernels on shared folds")
    _add_data_flags(p)
    p.add_argument("--a", "--kernel-a", dest="kernel_a", required=True, help="first kernel")
    p.add_argument("--b", "--kernel-b", dest="kernel_b", required=True, help="second kernel")
    _add_plan_flags(p)
    _add_space_flags(p)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="comparison JSON")

    for command in sub.choices.values():
        command.add_argument("--config", help="key=value file of flag defaults")
    return parser


def _load_config_pairs(path: str) -> dict:
    pairs = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path!r}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{line_no}: expected key=value")
        key, value = line.split("=", 1)
        pairs[key.strip().replace("-", "_")] = value.strip()
    return pairs


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Fold --config file values into parser defaults; flags still win."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise _UsageError("--config needs a file path")
    pairs = _load_config_pairs(argv[at + 1])
    if not pairs:
        return argv
    # find the subcommand parser to learn each key's type
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    command = argv[0] if argv and not argv[0].startswith("-") else None
    if not sub_actions or command not in sub_actions[0].choices:
        return argv
    sub = sub_actions[0].choices[command]
    known = {action.dest: action for action in sub._actions}
    defaults = {}
    for key, raw in pairs.items():
        if key not in known:
            raise _UsageError(f"config key {key!r} is not a flag of the {command} command")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (TypeError, ValueError) as exc:
                raise _UsageError(f"config key {key!r}: {exc}") from exc
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise _UsageError(f"config key {key!r}: invalid choice {raw!r}")
    sub.set_defaults(**defaults)
    return argv


def _load_dataset(args) -> Dataset:
    schema = formats.load_schema(args.schema) if getattr(args, "schema", None) else None
    try:
        return formats.load_bags_csv(args.data, task=args.task, schema=schema)
    except FileNotFoundError as exc:
        raise _UsageError(f"data file not found: {args.data}") from exc


def _require_valid(dataset: Dataset) -> None:
    findings = validate(dataset)
    if findings:
        for finding in findings:
            print(str(finding), file=sys.stderr)
        raise _UsageError(f"dataset failed validation with {len(findings)} finding(s)")


def _prepared(dataset: Dataset, raw_features: bool):
    """Normalize continuous attributes and build the VDM table if needed."""
    if raw_features:
        work = dataset
    else:
        work = apply_normalization(dataset, fit_normalization(dataset))
    table = None
    if work.schema.categorical_idx and dataset.task != TASK_REGRESS:
        table = build_vdm_table(work)
    return work, table


def _kernel_config(args, batch_stats) -> KernelConfig:
    """Resolve widths: explicit flags win, otherwise the 2^0 grid point."""
    gamma = args.gamma
    if gamma is None:
        gamma = gamma_grid(batch_stats["msd"], (0,))[0]
    gamma_edge = args.gamma_edge
    if gamma_edge is None:
        gamma_edge = gamma_grid(batch_stats.get("edge_msd", 0.0), (0,))[0]
    return KernelConfig(
        gamma_node=gamma,
        gamma_edge=gamma_edge,
        epsilon_factor=args.epsilon_factor,
        affinity_gamma=args.affinity_gamma,
        affinity_mode=args.affinity_mode,
        edge_term_weight=args.edge_term_weight,
        normalize=not args.no_normalize,
    )


def _batch_stats(work: Dataset, table, kernel: str, eps_factor: float) -> dict:
    batch = GramBatch(work.bags, kernel, work.schema, table)
    stats = {"msd": batch.mean_sq_dist(), "batch": batch}
    if canonical_kernel_name(kernel) == "MIGraph":
        stats["edge_msd"] = batch.mean_sq_edge_dist(None, eps_factor)
    return stats


def _threads(args) -> int:
    return args.threads if getattr(args, "threads", None) else _default_threads()


def _space(args) -> SearchSpace:
    return SearchSpace(
        gamma_powers=tuple(args.gamma_powers),
        edge_gamma_powers=tuple(args.edge_gamma_powers) if args.edge_gamma_powers else None,
        c_grid=tuple(args.c_grid),
        lam_grid=tuple(args.lam_grid),
        eps_factors=tuple(args.eps_factors),
    )


def _plan(args) -> CvPlan:
    return CvPlan(
        folds=args.folds,
        repeats=args.repeats,
        seed=args.seed,
        stratified=not args.no_stratify,
    )


def _cmd_convert(args) -> int:
    if not Path(args.input).exists():
        raise _UsageError(f"input file not found: {args.input}")
    counts = formats.convert_musk_c45(args.input, args.output)
    print(
        "converted {bags} bags ({positive} positive, {negative} negative), "
        "{instances} instances, {features} features".format(**counts)
    )
    return 0


def _cmd_validate(args) -> int:
    dataset = _load_dataset(args)
    findings = validate(dataset)
    if findings:
        for finding in findings:
            print(str(finding))
        print(f"{len(findings)} finding(s)")
        return 1
    print(f"ok: {len(dataset)} bags, {sum(b.n for b in dataset.bags)} instances")
    return 0


def _cmd_gram(args) -> int:
    dataset = _load_dataset(args)
    _require_valid(dataset)
    work, table = _prepared(dataset, args.raw_features)
    stats = _batch_stats(work, table, args.kernel, args.epsilon_factor)
    config = _kernel_config(args, stats)
    matrix = gram(work.bags, args.kernel, config, schema=work.schema, table=table)
    formats.save_gram(matrix, args.out)
    if args.csv:
        formats.export_gram_csv(matrix, args.csv)
    print(f"gram {matrix.n}x{matrix.n} kernel={matrix.kernel} digest={matrix.config_digest}")
    if matrix.jitter:
        print(f"applied diagonal jitter {matrix.jitter:.3e}")
    return 0


def _cmd_train(args) -> int:
    dataset = _load_dataset(args)
    _require_valid(dataset)
    work, table = _prepared(dataset, args.raw_features)
    stats = _batch_stats(work, table, args.kernel, args.epsilon_factor)
    config = _kernel_config(args, stats)
    matrix = gram(work.bags, args.kernel, config, schema=work.schema, table=table)
    labels = work.labels
    if args.task == TASK_CLASSIFY:
        model = svm_train(matrix, labels, C=args.c_value)
    elif args.task == TASK_MULTICLASS:
        model = ovo_train(matrix, labels, C=args.c_value)
    else:
        model = krr_train(matrix, labels, lam=args.lam)
    digest = formats.save_model(
        model,
        args.out,
        kernel=matrix.kernel,
        config=config,
        schema=work.schema,
        table=table,
    )
    print(f"trained {args.task} model on {len(work)} bags; blob digest={digest}")
    return 0


def _cmd_predict(args) -> int:
    model, context = formats.load_model(args.model)
    if context["kernel"] is None or context["config"] is None:
        raise _UsageError("model blob lacks kernel information; retrain with this tool")
    schema = context["schema"]
    load_schema = None
    if schema is not None:
        from dataclasses import replace as _replace

        load_schema = _replace(schema, lo=None, hi=None)
    try:
        train_raw = formats.load_bags_csv(args.train_data, task=args.task, schema=load_schema)
    except FileNotFoundError as exc:
        raise _UsageError(f"train data file not found: {args.train_data}") from exc
    eval_raw = formats.load_bags_csv(args.data, task=args.task, schema=load_schema)
    if schema is not None and schema.fitted:
        train_work = apply_normalization(train_raw, schema)
        eval_work = apply_normalization(eval_raw, schema)
    else:
        train_work, eval_work = train_raw, eval_raw
    if isinstance(model, (SvmModel, KrrModel)) and tuple(train_work.bag_ids) != tuple(model.bag_ids):
        raise _UsageError("training data does not match the bag ids stored in the model")
    from .kernels import gram_cross

    cross = gram_cross(
        train_work.bags,
        eval_work.bags,
        context["kernel"],
        context["config"],
        schema=train_work.schema,
        table=context["vdm"],
    )
    lines = ["bag_id,prediction,score"]
    for i, bag in enumerate(eval_work.bags):
        row = cross[i]
        if isinstance(model, SvmModel):
            score, label = svm_predict(model, row)
            lines.append(f"{bag.id},{label},{score!r}")
        elif isinstance(model, OvoModel):
            label = ovo_predict(model, row)
            lines.append(f"{bag.id},{label},")
        else:
            pred = krr_predict(model, row, clip=(0.0, 1.0))
            lines.append(f"{bag.id},{pred!r},")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _summary_line(result) -> str:
    lo, hi = result.ci95
    return (
        f"{result.kernel} {result.metric_name} mean={result.mean:.4f} std={result.std:.4f} "
        f"ci95=[{lo:.4f},{hi:.4f}] folds={len(result.records)} digest={result.digest[:16]}"
    )


def _cmd_cv(args) -> int:
    dataset = _load_dataset(args)
    _require_valid(dataset)
    result = cross_validate(
        dataset,
        args.kernel,
        _plan(args),
        space=_space(args),
        threads=_threads(args),
    )
    if args.out:
        formats.save_run_result(result, args.out)
    if args.csv:
        formats.export_run_csv(result, args.csv)
    print(_summary_line(result))
    return 0


def _cmd_loo(args) -> int:
    dataset = _load_dataset(args)
    if dataset.task != TASK_REGRESS:
        raise _UsageError("loo expects --task regress")
    _require_valid(dataset)
    result = leave_one_out(
        dataset,
        args.kernel,
        space=_space(args),
        selection_folds=args.selection_folds,
        seed=args.seed,
        threads=_threads(args),
    )
    if args.out:
        formats.save_run_result(result, args.out)
    if args.csv:
        formats.export_run_csv(result, args.csv)
    print(_summary_line(result))
    return 0


def _cmd_compare(args) -> int:
    dataset = _load_dataset(args)
    _require_valid(dataset)
    comparison = compare_methods(
        dataset,
        args.kernel_a,
        args.kernel_b,
        _plan(args),
        space=_space(args),
        threads=_threads(args),
    )
    if args.out:
        formats.save_run_result(comparison, args.out)
    print(_summary_line(comparison.run_a))
    print(_summary_line(comparison.run_b))
    t = comparison.ttest
    verdict = "significant" if t.significant else "not significant"
    better = {1: comparison.run_a.kernel, -1: comparison.run_b.kernel, 0: "neither"}[t.direction]
    print(
        f"paired t={t.t:.4f} df={t.df} p={t.p_value:.6f} ({verdict}); "
        f"mean diff={comparison.mean_diff:+.4f} favoring {better}"
    )
    return 0


_COMMANDS = {
    "convert": _cmd_convert,
    "validate": _cmd_validate,
    "gram": _cmd_gram,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "cv": _cmd_cv,
    "loo": _cmd_loo,
    "compare": _cmd_compare,
}


def cli_run(argv: list[str] | None = None) -> int:
    """Run one command; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, formats.FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # computation failure
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
