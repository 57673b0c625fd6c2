"""File formats: bag CSV, C4.5 conversion, Gram/model blobs, result files.

Bag CSV layout: header ``bag_id,label,f0,...,f{d-1}``, one row per instance,
the bag label repeated on each of its rows. Bags keep first-appearance
order. Continuous cells round-trip exactly (shortest-repr floats);
categorical cells hold symbols that are mapped to integer codes against the
schema's alphabets.

Binary formats share one envelope: an 8-byte magic, a little-endian uint32
header length, a JSON header, then raw little-endian float64 arrays. All
writers are deterministic, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bags import (
    KIND_CATEGORICAL,
    KIND_CONTINUOUS,
    TASK_CLASSIFY,
    TASK_MULTICLASS,
    TASK_REGRESS,
    TASKS,
    AttributeSchema,
    Bag,
    Dataset,
    ValidationError,
)
from .distances import VdmTable
from .kernels import GramMatrix, KernelConfig, canonical_kernel_name
from .learners import KrrModel, OvoModel, SvmModel

_GRAM_MAGIC = b"MIGKGRM1"
_MODEL_MAGIC = b"MIGKMDL1"


class FormatError(ValueError):
    """A file does not match its declared format."""


# ---------------------------------------------------------------------------
# bag CSV


def _format_label(task: str, label: float) -> str:
    if task in (TASK_CLASSIFY, TASK_MULTICLASS):
        return str(int(label))
    return repr(float(label))


def _parse_label(task: str, text: str) -> float:
    text = text.strip()
    try:
        value = float(text)
    except ValueError as exc:
        raise FormatError(f"unparseable label {text!r}") from exc
    if task == TASK_CLASSIFY and value not in (-1.0, 1.0):
        raise FormatError(f"binary label must be -1 or +1, got {text!r}")
    if task == TASK_MULTICLASS and (value != int(value) or value < 1):
        raise FormatError(f"class id must be a positive integer, got {text!r}")
    return value


def save_bags_csv(dataset: Dataset, path) -> None:
    """Write a dataset as bag CSV; floats keep their shortest repr."""
    schema = dataset.schema
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bag_id", "label"] + [f"f{i}" for i in range(schema.dim)])
        for bag in dataset.bags:
            label = _format_label(dataset.task, bag.label)
            for row in bag.values:
                cells = []
                for j, value in enumerate(row):
                    if schema.kinds[j] == KIND_CATEGORICAL:
                        cells.append(schema.categories[j][int(value)])  # type: ignore[index]
                    else:
                        cells.append(repr(float(value)))
                writer.writerow([bag.id, label] + cells)


def load_bags_csv(
    path,
    task: str = TASK_CLASSIFY,
    schema: AttributeSchema | None = None,
) -> Dataset:
    """Read a bag CSV. Without a schema every attribute is continuous.

    With a schema, categorical cells are mapped against its alphabets;
    symbols outside an alphabet extend it (they count as unseen values for
    VDM tables built elsewhere). Bag labels must be consistent across a
    bag's rows.
    """
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r}")
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "bag_id" or header[1] != "label":
            raise FormatError(f"{path}: header must start with bag_id,label,f0,...")
        dim = len(header) - 2
        if schema is None:
            schema = AttributeSchema.all_continuous(dim)
        if schema.dim != dim:
            raise FormatError(f"{path}: {dim} feature columns, schema expects {schema.dim}")
        alphabets: dict[int, list[str]] = {
            j: list(schema.categories[j] or ()) for j in schema.categorical_idx
        }
        order: list[str] = []
        rows: dict[str, list[list[float]]] = {}
        labels: dict[str, float] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise FormatError(f"{path}:{line_no}: expected {dim + 2} cells, got {len(row)}")
            bag_id = row[0]
            label = _parse_label(task, row[1])
            if bag_id not in rows:
                order.append(bag_id)
                rows[bag_id] = []
                labels[bag_id] = label
            elif labels[bag_id] != label:
                raise FormatError(f"{path}:{line_no}: bag {bag_id!r} has conflicting labels")
            values = []
            for j, cell in enumerate(row[2:]):
                if j in alphabets:
                    symbols = alphabets[j]
                    if cell not in symbols:
                        symbols.append(cell)
                    values.append(float(symbols.index(cell)))
                else:
                    try:
                        values.append(float(cell))
                    except ValueError as exc:
                        raise FormatError(f"{path}:{line_no}: unparseable number {cell!r}") from exc
            rows[bag_id].append(values)
        if not order:
            raise FormatError(f"{path}: no instance rows")
    if alphabets:
        categories = tuple(
            tuple(alphabets[j]) if j in alphabets else None for j in range(dim)
        )
        schema = replace(schema, categories=categories)
    bags = tuple(
        Bag(id=bag_id, values=np.array(rows[bag_id], dtype=np.float64), label=labels[bag_id])
        for bag_id in order
    )
    return Dataset(schema=schema, bags=bags, task=task)


# ---------------------------------------------------------------------------
# C4.5 conversion


def convert_musk_c45(in_path, out_path) -> dict:
    """Convert a molecule C4.5 data file to bag CSV.

    Each line is ``molecule,conformation,f1,...,f166,class``. The molecule
    name is the bag id, the conformation name is dropped, and the trailing
    class field ("1", "0", with or without a trailing dot) becomes a +1/-1
    bag label. Returns counts: bags, positive, negative, instances.
    """
    in_path = Path(in_path)
    order: list[str] = []
    rows: dict[str, list[list[float]]] = {}
    labels: dict[str, float] = {}
    width: int | None = None
    with open(in_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            parts = [p.strip() for p in line.rstrip(".").split(",")]
            if len(parts) < 4:
                raise FormatError(f"{in_path}:{line_no}: expected molecule,conformation,features...,class")
            bag_id = parts[0].strip('"')
            feature_cells = parts[2:-1]
            if width is None:
                width = len(feature_cells)
            elif len(feature_cells) != width:
                raise FormatError(f"{in_path}:{line_no}: {len(feature_cells)} features, expected {width}")
            try:
                features = [float(c) for c in feature_cells]
                raw_class = float(parts[-1])
            except ValueError as exc:
                raise FormatError(f"{in_path}:{line_no}: unparseable number") from exc
            label = 1.0 if raw_class > 0.5 else -1.0
            if bag_id not in rows:
                order.append(bag_id)
                rows[bag_id] = []
                labels[bag_id] = label
            elif labels[bag_id] != label:
                raise FormatError(f"{in_path}:{line_no}: molecule {bag_id!r} changes class")
            rows[bag_id].append(features)
    if width is None:
        raise FormatError(f"{in_path}: no data lines")
    bags = tuple(
        Bag(id=bag_id, values=np.array(rows[bag_id], dtype=np.float64), label=labels[bag_id])
        for bag_id in order
    )
    dataset = Dataset(schema=AttributeSchema.all_continuous(width), bags=bags, task=TASK_CLASSIFY)
    save_bags_csv(dataset, out_path)
    n_pos = sum(1 for b in bags if b.label > 0)
    return {
        "bags": len(bags),
        "positive": n_pos,
        "negative": len(bags) - n_pos,
        "instances": int(sum(b.n for b in bags)),
        "features": width,
    }


# ---------------------------------------------------------------------------
# binary envelope


def _write_blob(path, magic: bytes, header: dict, arrays: Sequence[np.ndarray]) -> None:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_blob(path, magic: bytes) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(magic) + 4 or data[: len(magic)] != magic:
        raise FormatError(f"{path}: not a {magic.decode()} file")
    (header_len,) = struct.unpack_from("<I", data, len(magic))
    start = len(magic) + 4
    if len(data) < start + header_len:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[start: start + header_len].decode())
    except ValueError as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    return header, data[start + header_len:]


def _take_array(payload: bytes, offset: int, count: int, path) -> tuple[np.ndarray, int]:
    nbytes = count * 8
    if offset + nbytes > len(payload):
        raise FormatError(f"{path}: truncated array data")
    arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return arr, offset + nbytes


# ---------------------------------------------------------------------------
# gram files


def save_gram(gram: GramMatrix, path) -> None:
    """Write a Gram matrix with its provenance header."""
    header = {
        "format_version": 1,
        "kind": "gram",
        "n": gram.n,
        "kernel": gram.kernel,
        "config": gram.config.to_dict(),
        "config_digest": gram.config_digest,
        "jitter": gram.jitter,
        "bag_ids": list(gram.bag_ids),
    }
    _write_blob(path, _GRAM_MAGIC, header, [gram.values])


def load_gram(path) -> GramMatrix:
    header, payload = _read_blob(path, _GRAM_MAGIC)
    if header.get("kind") != "gram" or header.get("format_version") != 1:
        raise FormatError(f"{path}: unsupported gram format")
    n = int(header["n"])
    values, offset = _take_array(payload, 0, n * n, path)
    if offset != len(payload):
        raise FormatError(f"{path}: trailing bytes after gram data")
    return GramMatrix(
        values=values.reshape(n, n),
        bag_ids=tuple(header["bag_ids"]),
        kernel=canonical_kernel_name(header["kernel"]),
        config=KernelConfig.from_dict(header["config"]),
        jitter=float(header.get("jitter", 0.0)),
    )


def export_gram_csv(gram: GramMatrix, path) -> None:
    """CSV export: a header row of bag ids, then row-major float rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(gram.bag_ids)
        for row in gram.values:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# schema / preprocessing state


def schema_to_dict(schema: AttributeSchema) -> dict:
    return {
        "kinds": list(schema.kinds),
        "categories": [list(c) if c is not None else None for c in schema.categories],
        "lo": list(schema.lo) if schema.lo is not None else None,
        "hi": list(schema.hi) if schema.hi is not None else None,
    }


def schema_from_dict(data: dict) -> AttributeSchema:
    return AttributeSchema(
        kinds=tuple(data["kinds"]),
        categories=tuple(tuple(c) if c is not None else None for c in data["categories"]),
        lo=tuple(data["lo"]) if data.get("lo") is not None else None,
        hi=tuple(data["hi"]) if data.get("hi") is not None else None,
    )


def save_schema(schema: AttributeSchema, path) -> None:
    Path(path).write_text(json.dumps(schema_to_dict(schema), sort_keys=True, indent=2) + "\n")


def load_schema(path) -> AttributeSchema:
    try:
        return schema_from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: corrupt schema file: {exc}") from exc


def vdm_table_to_dict(table: VdmTable | None) -> dict | None:
    if table is None:
        return None
    return {
        "classes": list(table.classes),
        "attr_indices": list(table.attr_indices),
        "freqs": [f.tolist() for f in table.freqs],
    }


def vdm_table_from_dict(data: dict | None) -> VdmTable | None:
    if data is None:
        return None
    return VdmTable(
        classes=tuple(data["classes"]),
        attr_indices=tuple(int(i) for i in data["attr_indices"]),
        freqs=tuple(np.array(f, dtype=np.float64) for f in data["freqs"]),
    )


# ---------------------------------------------------------------------------
# model blobs


def _svm_header(model: SvmModel) -> dict:
    return {
        "n": model.n,
        "bias": model.bias,
        "C": model.C,
        "objective": model.objective,
        "kkt_gap": model.kkt_gap,
        "bag_ids": list(model.bag_ids),
    }


def save_model(
    model,
    path,
    *,
    kernel: str | None = None,
    config: KernelConfig | None = None,
    schema: AttributeSchema | None = None,
    table: VdmTable | None = None,
) -> str:
    """Write a trained model with everything prediction needs.

    The optional kernel/config/schema/table fields let a saved model rebuild
    the exact cross-kernel against new bags. Returns the blob digest
    (sha256 of the file bytes; writing is deterministic).
    """
    header: dict = {
        "format_version": 1,
        "kind": "model",
        "kernel": canonical_kernel_name(kernel) if kernel else None,
        "config": config.to_dict() if config else None,
        "schema": schema_to_dict(schema) if schema else None,
        "vdm": vdm_table_to_dict(table),
    }
    arrays: list[np.ndarray] = []
    if isinstance(model, SvmModel):
        header["type"] = "svm"
        header["svm"] = _svm_header(model)
        arrays.append(model.dual_coef)
    elif isinstance(model, KrrModel):
        header["type"] = "krr"
        header["krr"] = {
            "n": model.n,
            "lam": model.lam,
            "residual": model.residual,
            "bag_ids": list(model.bag_ids),
        }
        arrays.append(model.beta)
    elif isinstance(model, OvoModel):
        header["type"] = "ovo"
        header["classes"] = list(model.classes)
        subs = []
        for (a, b), sub, cols in model.models:
            subs.append({"pair": [a, b], "cols": list(cols), "svm": _svm_header(sub)})
            arrays.append(sub.dual_coef)
        header["models"] = subs
    else:
        raise ValidationError(f"cannot serialize model of type {type(model).__name__}")
    _write_blob(path, _MODEL_MAGIC, header, arrays)
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _svm_from_header(meta: dict, coef: np.ndarray) -> SvmModel:
    return SvmModel(
        dual_coef=coef,
        bias=float(meta["bias"]),
        C=float(meta["C"]),
        bag_ids=tuple(meta["bag_ids"]),
        objective=float(meta["objective"]),
        kkt_gap=float(meta["kkt_gap"]),
    )


def load_model(path) -> tuple[object, dict]:
    """Read a model blob; returns (model, context).

    The context dict carries kernel, config, schema, vdm (when stored) and
    the blob digest.
    """
    header, payload = _read_blob(path, _MODEL_MAGIC)
    if header.get("kind") != "model" or header.get("format_version") != 1:
        raise FormatError(f"{path}: unsupported model format")
    offset = 0
    model: object
    if header["type"] == "svm":
        meta = header["svm"]
        coef, offset = _take_array(payload, offset, int(meta["n"]), path)
        model = _svm_from_header(meta, coef)
    elif header["type"] == "krr":
        meta = header["krr"]
        beta, offset = _take_array(payload, offset, int(meta["n"]), path)
        model = KrrModel(
            beta=beta,
            lam=float(meta["lam"]),
            bag_ids=tuple(meta["bag_ids"]),
            residual=float(meta["residual"]),
        )
    elif header["type"] == "ovo":
        entries = []
        for sub in header["models"]:
            coef, offset = _take_array(payload, offset, int(sub["svm"]["n"]), path)
            entries.append(
                (
                    (int(sub["pair"][0]), int(sub["pair"][1])),
                    _svm_from_header(sub["svm"], coef),
                    tuple(int(c) for c in sub["cols"]),
                )
            )
        model = OvoModel(classes=tuple(int(c) for c in header["classes"]), models=tuple(entries))
    else:
        raise FormatError(f"{path}: unknown model type {header['type']!r}")
    if offset != len(payload):
        raise FormatError(f"{path}: trailing bytes after model data")
    context = {
        "kernel": header.get("kernel"),
        "config": KernelConfig.from_dict(header["config"]) if header.get("config") else None,
        "schema": schema_from_dict(header["schema"]) if header.get("schema") else None,
        "vdm": vdm_table_from_dict(header.get("vdm")),
        "digest": hashlib.sha256(Path(path).read_bytes()).hexdigest(),
    }
    return model, context


# ---------------------------------------------------------------------------
# run results


def run_result_document(result) -> dict:
    """JSON document for a RunResult or ComparisonResult.

    The digest covers only the deterministic ``result`` section; timing
    lives outside it.
    """
    payload = result.result_payload()
    if hasattr(result, "timing"):
        timing = dict(result.timing)
    else:
        timing = {
            "a": dict(result.run_a.timing),
            "b": dict(result.run_b.timing),
        }
    return {
        "format_version": 1,
        "result": payload,
        "digest": result.digest,
        "timing": timing,
    }


def save_run_result(result, path) -> None:
    doc = run_result_document(result)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_run_result(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise FormatError(f"{path}: corrupt result file: {exc}") from exc
    if doc.get("format_version") != 1 or "result" not in doc:
        raise FormatError(f"{path}: unsupported result format")
    return doc


def export_run_csv(result, path) -> None:
    """Per-fold CSV: repeat, fold, n_test, value, params, model digest."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "fold", "n_test", "value", "params", "model_digest"])
        for record in result.records:
            writer.writerow(
                [
                    record.repeat,
                    record.fold,
                    record.n_test,
                    repr(float(record.value)),
                    json.dumps(dict(sorted(record.params.items())), sort_keys=True),
                    record.model_digest,
                ]
            )
