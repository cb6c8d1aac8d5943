"""Persistence: JSON documents, config parsing, checkpoints, search logs."""

import json

import numpy as np
import pytest

from qfuse.dataio import (
    CheckpointError,
    ConfigError,
    DataIOError,
    config_doc,
    dump_json,
    feature_settings_from,
    load_json,
    load_model,
    pipeline_config_from,
    read_matrix_csv,
    save_model,
    save_search,
    save_search_log,
    search_config_from,
    surrogate_spec_from,
    synthetic_config_from,
    write_manifest,
    write_matrix_csv,
)
from qfuse.graph import from_doc
from qfuse.nn import TrainConfig
from qfuse.pipeline import (
    FeatureSettings,
    FusedModel,
    PipelineConfig,
    default_graphs,
    extract_dataset,
)
from qfuse.rewards import SurrogateSpec, make_surrogate_evaluator
from qfuse.search import EpsilonSchedule, SearchConfig, run_search
from qfuse.synthetic import SyntheticConfig, gen_synthetic
from qfuse.templates import chain_graph


# ---------------------------------------------------------------------------
# JSON plumbing


def test_dump_json_is_sorted_deterministic_newline_terminated(tmp_path):
    doc = {"zeta": np.float64(0.25), "alpha": np.int64(3),
           "types": (1, 2), "set": frozenset({"b", "a"}),
           "arr": np.arange(3.0)}
    p1 = dump_json(doc, tmp_path / "a.json")
    p2 = dump_json(doc, tmp_path / "b.json")
    text = p1.read_text()
    assert text == p2.read_text()
    assert text.endswith("\n")
    assert text.index('"alpha"') < text.index('"arr"') < text.index('"zeta"')
    back = load_json(p1)
    assert back == {"zeta": 0.25, "alpha": 3, "types": [1, 2],
                    "set": ["a", "b"], "arr": [0.0, 1.0, 2.0]}


def test_load_json_failures(tmp_path):
    with pytest.raises(ConfigError):
        load_json(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_json(bad)


def test_matrix_csv_exact_round_trip(tmp_path):
    m = np.random.default_rng(0).standard_normal((7, 4)) * 1e3
    m[0, 0] = 1.0 / 3.0
    path = write_matrix_csv(tmp_path / "m.csv", m)
    assert np.array_equal(read_matrix_csv(path), m)  # %.17g is lossless


def test_matrix_csv_header_handling(tmp_path):
    m = np.array([[1.5, 2.5], [3.5, 4.5]])
    path = write_matrix_csv(tmp_path / "h.csv", m, header=["left", "right"])
    assert path.read_text().splitlines()[0] == "left,right"
    assert np.array_equal(read_matrix_csv(path), m)


def test_matrix_csv_failures(tmp_path):
    with pytest.raises(DataIOError):
        write_matrix_csv(tmp_path / "x.csv", np.arange(3.0))
    with pytest.raises(DataIOError):
        read_matrix_csv(tmp_path / "absent.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataIOError):
        read_matrix_csv(empty)
    words = tmp_path / "words.csv"
    words.write_text("a,b\nc,d\n")
    with pytest.raises(DataIOError):
        read_matrix_csv(words)


def test_write_manifest_contents(tmp_path):
    cfg = SyntheticConfig(subjects_per_class=2)
    path = write_manifest(tmp_path, command="gen-data", seed=7, config=cfg,
                          outputs=["b.csv", "a.csv"],
                          extra={"n_subjects": 4})
    doc = json.loads(path.read_text())
    assert set(doc) == {"command", "seed", "config", "outputs", "n_subjects"}
    assert doc["command"] == "gen-data"
    assert doc["seed"] == 7
    assert doc["outputs"] == ["a.csv", "b.csv"]
    assert doc["config"]["pair"] == [2, 5]
    assert doc["n_subjects"] == 4


# ---------------------------------------------------------------------------
# config documents


def test_pipeline_config_round_trip():
    cfg = PipelineConfig(streams=("fnc", "msde"), token_dim=8, heads=2,
                         ffn_hidden=(32, 16),
                         features=FeatureSettings(scales=(1, 2), window=8),
                         training=TrainConfig(epochs=5, keep_best=True),
                         test_fraction=0.5, seed=3)
    assert pipeline_config_from(config_doc(cfg)) == cfg
    assert pipeline_config_from(config_doc(PipelineConfig())) == PipelineConfig()


def test_search_config_round_trip_both_schedule_forms():
    cfg = SearchConfig(iterations=50, k_max=2, alpha=0.05, seed=9,
                       schedule=EpsilonSchedule(((0.7, 10), (0.1, 5))))
    assert search_config_from(config_doc(cfg)) == cfg
    flat = search_config_from({"schedule": [[0.7, 10], [0.1, 5]]})
    assert flat.schedule == EpsilonSchedule(((0.7, 10), (0.1, 5)))
    assert search_config_from(config_doc(SearchConfig())) == SearchConfig()


def test_synthetic_config_round_trip():
    cfg = SyntheticConfig(n_regions=6, pair=(1, 4), rho=(0.6, 0.1),
                          phi=(0.5, 0.0), subjects_per_class=9, seed=2)
    assert synthetic_config_from(config_doc(cfg)) == cfg


def test_surrogate_spec_round_trip():
    spec = SurrogateSpec(base=0.4, bonus=0.2, penalty=0.1,
                         targets=frozenset({(1, 4, "Residual"),
                                            (2, 5, "Concatenate")}))
    assert surrogate_spec_from(config_doc(spec)) == spec


def test_feature_settings_scales_become_tuple():
    fs = feature_settings_from({"scales": [1, 2, 4], "window": 8})
    assert fs.scales == (1, 2, 4)
    assert fs.window == 8


def test_unknown_config_keys_are_named():
    with pytest.raises(ConfigError, match="unknown.*epochz.*known"):
        search_config_from({"epochz": 3})
    with pytest.raises(ConfigError, match="token_dims"):
        pipeline_config_from({"token_dims": 8})


def test_invalid_config_values_become_config_errors():
    with pytest.raises(ConfigError):
        pipeline_config_from({"test_fraction": 2.0})
    with pytest.raises(ConfigError):
        synthetic_config_from({"pair": [3, 3]})
    with pytest.raises(ConfigError):
        search_config_from({"alpha": -1.0})
    with pytest.raises(ConfigError):
        pipeline_config_from(["not", "a", "dict"])


# ---------------------------------------------------------------------------
# checkpoints


def small_model():
    subjects, _ = gen_synthetic(SyntheticConfig(subjects_per_class=3, seed=30))
    cfg = PipelineConfig(streams=("fnc", "msde"))
    x = extract_dataset(subjects, cfg.features, cfg.streams)
    model = FusedModel(default_graphs(x, cfg), token_dim=cfg.token_dim,
                       heads=cfg.heads, ffn_hidden=cfg.ffn_hidden,
                       classes=2, seed=4)
    model.fit_normalization(x)
    return model, x


def test_checkpoint_round_trip_bitwise(tmp_path):
    model, x = small_model()
    path = save_model(model, tmp_path / "model.json")
    loaded = load_model(path)
    assert loaded.stream_names == model.stream_names
    assert loaded.norms == model.norms
    a, _ = model.forward(x)
    b, _ = loaded.forward(x)
    assert np.array_equal(a, b)
    again = save_model(loaded, tmp_path / "model2.json")
    assert again.read_bytes() == path.read_bytes()


def test_checkpoint_rejects_other_formats(tmp_path):
    p = dump_json({"format": "something-else"}, tmp_path / "x.json")
    with pytest.raises(CheckpointError):
        load_model(p)
    q = dump_json(["not", "a", "dict"], tmp_path / "y.json")
    with pytest.raises(CheckpointError):
        load_model(q)


def test_checkpoint_rejects_missing_fields(tmp_path):
    model, _ = small_model()
    doc = json.loads(save_model(model, tmp_path / "m.json").read_text())
    del doc["stream_order"]
    p = dump_json(doc, tmp_path / "broken.json")
    with pytest.raises(CheckpointError):
        load_model(p)


def test_checkpoint_rejects_missing_parameter(tmp_path):
    model, _ = small_model()
    doc = json.loads(save_model(model, tmp_path / "m.json").read_text())
    params = doc["streams"]["fnc"]["params"]
    params.pop(sorted(params)[0])
    p = dump_json(doc, tmp_path / "broken.json")
    with pytest.raises(CheckpointError, match="parameter set"):
        load_model(p)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    model, _ = small_model()
    doc = json.loads(save_model(model, tmp_path / "m.json").read_text())
    key = sorted(doc["streams"]["fnc"]["params"])[0]
    entry = doc["streams"]["fnc"]["params"][key]
    entry["shape"] = [1, len(entry["data"])]
    p = dump_json(doc, tmp_path / "broken.json")
    with pytest.raises(CheckpointError):
        load_model(p)


def test_checkpoint_rejects_fusion_mismatch(tmp_path):
    model, _ = small_model()
    doc = json.loads(save_model(model, tmp_path / "m.json").read_text())
    del doc["fusion"]["Wq"]
    p = dump_json(doc, tmp_path / "broken.json")
    with pytest.raises(CheckpointError, match="fusion"):
        load_model(p)


def test_checkpoint_rejects_malformed_array(tmp_path):
    model, _ = small_model()
    doc = json.loads(save_model(model, tmp_path / "m.json").read_text())
    key = sorted(doc["streams"]["fnc"]["params"])[0]
    del doc["streams"]["fnc"]["params"][key]["data"]
    p = dump_json(doc, tmp_path / "broken.json")
    with pytest.raises(CheckpointError):
        load_model(p)


# ---------------------------------------------------------------------------
# search artifacts


def test_save_search_writes_log_summary_and_graph(tmp_path):
    result = run_search(chain_graph(6), make_surrogate_evaluator(),
                        SearchConfig(iterations=5, seed=0))
    written = save_search(result, tmp_path / "out")
    names = [p.name for p in written]
    assert names == ["search_log.jsonl", "search_summary.json",
                     "best_graph.json"]
    lines = (tmp_path / "out" / "search_log.jsonl").read_text().splitlines()
    assert len(lines) == 5
    for i, line in enumerate(lines):
        rec = json.loads(line)
        assert rec["iteration"] == i
        assert set(rec) == {"iteration", "epsilon", "states", "targets",
                            "ctypes", "reward", "wall_ms"}
    summary = json.loads((tmp_path / "out" / "search_summary.json").read_text())
    assert summary["iterations"] == 5
    assert set(summary["qtable"]) == {
        "1->3", "1->4", "1->5", "1->6", "2->4", "2->5", "2->6", "3->5",
        "3->6", "4->6"}
    assert summary["best"]["reward"] == result.best_episode.reward
    graph = from_doc(json.loads((tmp_path / "out" / "best_graph.json").read_text()))
    assert [e[:3] for e in graph.ncs_edges] == result.best_episode.connections()


def test_save_search_log_partial(tmp_path):
    result = run_search(chain_graph(6), make_surrogate_evaluator(),
                        SearchConfig(iterations=4, seed=1))
    path = save_search_log(result.records[:2], tmp_path / "partial.jsonl")
    assert len(path.read_text().splitlines()) == 2


def test_save_search_without_best_graph(tmp_path):
    result = run_search(chain_graph(6), make_surrogate_evaluator(),
                        SearchConfig(iterations=0, seed=0))
    written = save_search(result, tmp_path / "empty")
    assert [p.name for p in written] == ["search_log.jsonl",
                                         "search_summary.json"]
    summary = json.loads((tmp_path / "empty" / "search_summary.json").read_text())
    assert summary["best"] is None
    assert summary["iterations"] == 0
