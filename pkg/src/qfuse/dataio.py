"""Disk formats: JSON configs, model checkpoints, search logs, manifests.

Everything written here is deterministic for a fixed seed: JSON is dumped
with sorted keys, float64 values survive the round-trip exactly (shortest
repr), and no timestamps are recorded.  The only timing field anywhere is
``wall_ms`` in search logs, which reproducibility comparisons must skip.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .graph import from_doc, to_doc
from .nn.train import TrainConfig
from .pipeline import (EncoderSettings, FeatureSettings, FusedModel,
                       PipelineConfig)
from .rewards import SurrogateSpec
from .search import EpsilonSchedule, SearchConfig, SearchResult
from .synthetic import SyntheticConfig

CHECKPOINT_FORMAT = "fused-model"


class DataIOError(Exception):
    """Base class for persistence failures."""


class ConfigError(DataIOError):
    """Config file missing, unparsable, or with unknown keys."""


class CheckpointError(DataIOError):
    """Checkpoint file malformed or inconsistent with its graphs."""


# ---------------------------------------------------------------------------
# JSON plumbing

def _jsonable(value):
    """Recursively convert configs/values into plain JSON types."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, (frozenset, set)):
        return sorted(_jsonable(v) for v in value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    return value


def dump_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_json(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def write_matrix_csv(path, matrix, header=None) -> Path:
    """A 2-D array as CSV with full-precision floats."""
    import csv

    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise DataIOError(f"expected a 2-D array, got shape {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in arr:
            w.writerow([f"{v:.17g}" for v in row])
    return path


def read_matrix_csv(path) -> np.ndarray:
    """Read a numeric CSV, skipping one header row if the first row is
    not numeric."""
    import csv

    path = Path(path)
    if not path.exists():
        raise DataIOError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataIOError(f"{path} is empty")
    start = 0
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        start = 1
    try:
        data = np.array([[float(v) for v in row] for row in rows[start:]],
                        dtype=np.float64)
    except ValueError as exc:
        raise DataIOError(f"{path} has non-numeric cells: {exc}") from exc
    if data.ndim != 2 or data.size == 0:
        raise DataIOError(f"{path} does not contain a 2-D table")
    return data


def write_manifest(out_dir, *, command: str, seed: int, config=None,
                   outputs=(), extra: dict | None = None) -> Path:
    """manifest.json for an output directory: the exact config, the seed,
    and the files the command produced."""
    doc = {
        "command": command,
        "seed": int(seed),
        "config": _jsonable(config) if config is not None else None,
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        for key, value in extra.items():
            doc[key] = _jsonable(value)
    return dump_json(doc, Path(out_dir) / "manifest.json")


# ---------------------------------------------------------------------------
# config documents

def _build(cls, doc: dict, converters: dict | None = None):
    if not isinstance(doc, dict):
        raise ConfigError(f"{cls.__name__} section must be an object, "
                          f"got {type(doc).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(
            f"unknown {cls.__name__} keys: {', '.join(unknown)} "
            f"(known: {', '.join(sorted(names))})")
    kwargs = {}
    for key, value in doc.items():
        conv = (converters or {}).get(key)
        try:
            kwargs[key] = conv(value) if conv else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {cls.__name__}.{key}: {exc}") from exc
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def _schedule_from(value) -> EpsilonSchedule:
    if isinstance(value, dict):
        value = value["stages"]
    return EpsilonSchedule(tuple((float(e), int(n)) for e, n in value))


def feature_settings_from(doc: dict) -> FeatureSettings:
    return _build(FeatureSettings, doc, {"scales": tuple})


def encoder_settings_from(doc: dict) -> EncoderSettings:
    return _build(EncoderSettings, doc)


def train_config_from(doc: dict) -> TrainConfig:
    return _build(TrainConfig, doc)


def pipeline_config_from(doc: dict) -> PipelineConfig:
    return _build(PipelineConfig, doc, {
        "streams": tuple,
        "ffn_hidden": tuple,
        "features": feature_settings_from,
        "encoders": encoder_settings_from,
        "training": train_config_from,
    })


def synthetic_config_from(doc: dict) -> SyntheticConfig:
    return _build(SyntheticConfig, doc,
                  {"pair": tuple, "rho": tuple, "phi": tuple})


def search_config_from(doc: dict) -> SearchConfig:
    return _build(SearchConfig, doc, {"schedule": _schedule_from})


def surrogate_spec_from(doc: dict) -> SurrogateSpec:
    return _build(SurrogateSpec, doc, {
        "targets": lambda v: frozenset((int(s), int(d), str(c))
                                       for s, d, c in v)})


def config_doc(cfg) -> dict:
    """A dataclass config as a JSON-ready dict."""
    return _jsonable(cfg)


# ---------------------------------------------------------------------------
# model checkpoints

def _array_doc(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_from(doc: dict, *, what: str) -> np.ndarray:
    try:
        arr = np.asarray(doc["data"], dtype=np.float64)
        return arr.reshape(doc["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad array for {what}: {exc}") from exc


def save_model(model: FusedModel, path) -> Path:
    """Checkpoint a fused model as JSON: per-stream graph + trained
    parameters + input standardizer, plus the fusion-head parameters.
    Auxiliary-head parameters are not persisted (inference never runs
    past the token node)."""
    streams = {}
    for name in model.stream_names:
        net = model.nets[name]
        norm = model.norms.get(name)
        streams[name] = {
            "graph": to_doc(net.graph),
            "norm": list(norm) if norm is not None else None,
            "params": {f"{nid}:{pname}": _array_doc(arr)
                       for nid, pname, arr in model._stream_param_items(name)},
        }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "token_dim": model.token_dim,
        "heads": model.heads,
        "ffn_hidden": list(model.ffn_hidden),
        "classes": model.classes,
        "stream_order": list(model.stream_names),
        "streams": streams,
        "fusion": {k: _array_doc(v) for k, v in model.fusion.items()},
    }
    return dump_json(doc, path)


def load_model(path) -> FusedModel:
    doc = load_json(path)
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    try:
        order = list(doc["stream_order"])
        graphs = {name: from_doc(doc["streams"][name]["graph"])
                  for name in order}
        model = FusedModel(graphs,
                           token_dim=int(doc["token_dim"]),
                           heads=int(doc["heads"]),
                           ffn_hidden=tuple(doc["ffn_hidden"]),
                           classes=int(doc["classes"]),
                           seed=0)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing field {exc}") from exc
    for name in order:
        sdoc = doc["streams"][name]
        norm = sdoc.get("norm")
        model.norms[name] = (float(norm[0]), float(norm[1])) if norm else None
        saved = sdoc["params"]
        items = model._stream_param_items(name)
        expected = {f"{nid}:{pname}" for nid, pname, _ in items}
        if set(saved) != expected:
            raise CheckpointError(
                f"stream {name!r} parameter set does not match its graph "
                f"(missing: {sorted(expected - set(saved))}, "
                f"unexpected: {sorted(set(saved) - expected)})")
        for nid, pname, arr in items:
            value = _array_from(saved[f"{nid}:{pname}"],
                                what=f"{name}/{nid}:{pname}")
            if value.shape != arr.shape:
                raise CheckpointError(
                    f"{name}/{nid}:{pname} has shape {value.shape}, "
                    f"graph expects {arr.shape}")
            arr[...] = value
    fusion_doc = doc.get("fusion", {})
    if set(fusion_doc) != set(model.fusion):
        raise CheckpointError("fusion-head parameter set does not match")
    for key, arr in model.fusion.items():
        value = _array_from(fusion_doc[key], what=f"fusion/{key}")
        if value.shape != arr.shape:
            raise CheckpointError(
                f"fusion/{key} has shape {value.shape}, expected {arr.shape}")
        arr[...] = value
    return model


# ---------------------------------------------------------------------------
# search artifacts

def save_search_log(records, path) -> Path:
    """One sorted-key JSON record per line (also used for partial logs
    after an aborted search)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")
    return path


def save_search(result: SearchResult, out_dir) -> list[Path]:
    """Write a finished search: the per-iteration JSONL log, a summary
    with the best episode and the final Q-table, and the best expanded
    graph (when any episode was evaluated)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [save_search_log(result.records, out / "search_log.jsonl")]
    best = result.best_episode
    summary = {
        "iterations": len(result.records),
        "best": None if best is None else {
            "states": list(best.states),
            "targets": list(best.targets),
            "ctypes": list(best.ctypes),
            "reward": best.reward,
        },
        "qtable": {f"{src}->{dst}": value
                   for (src, dst), value in result.qtable.items()},
    }
    written.append(dump_json(summary, out / "search_summary.json"))
    if result.best_graph is not None:
        written.append(dump_json(to_doc(result.best_graph),
                                 out / "best_graph.json"))
    return written
