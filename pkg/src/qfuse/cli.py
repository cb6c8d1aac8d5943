"""Command-line surface: batch feature extraction, connection search,
fused training, attention ranking, corpus generation, graph rendering.

Exit codes: 0 success, 1 usage error (one-line fix hint on stderr),
2 runtime error.  Every output directory gets a manifest recording the
exact config and seed, and a re-run with the same argv and seed writes
byte-identical artifacts (the ``wall_ms`` timing field in search logs is
the one exception).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dataio, figures
from .dataio import (ConfigError, DataIOError, config_doc, dump_json,
                     load_json, pipeline_config_from, read_matrix_csv,
                     search_config_from, surrogate_spec_from,
                     synthetic_config_from, write_manifest, write_matrix_csv)
from .features import R_CLIP, FeatureError
from .graph import GraphError, from_doc, to_doc, to_dot
from .metrics import MetricError
from .nn.fusion import ShapeMismatchError
from .nn.network import NonFiniteLossError
from .pipeline import (STREAMS, PipelineError, default_graphs,
                       extract_dataset, extract_features, rank_importance,
                       stream_template, train_pipeline)
from .rewards import (InstantiationError, make_surrogate_evaluator,
                      make_train_evaluator)
from .search import SearchAbortedError, SearchError, run_search
from .seeding import derive_seed
from .synthetic import (SyntheticConfigError, chance_config, gen_synthetic,
                        load_dataset, save_dataset)

log = logging.getLogger("qfuse")

RUNTIME_ERRORS = (ConfigError, DataIOError, FeatureError, GraphError,
                  InstantiationError, MetricError, NonFiniteLossError,
                  PipelineError, SearchError, ShapeMismatchError,
                  SyntheticConfigError, OSError)

CONFIG_SECTIONS = ("pipeline", "search", "surrogate", "synthetic")


class UsageError(Exception):
    """Bad invocation; carries the parser whose usage line applies."""

    def __init__(self, message: str, parser: argparse.ArgumentParser | None = None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage to 1
        raise UsageError(message, self)


# ---------------------------------------------------------------------------
# parser construction

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None,
                   help="master seed; every stochastic component derives "
                        "its own stream from it (default: config seed or 0)")
    g.add_argument("--config", default=None, metavar="FILE",
                   help="JSON config with optional sections "
                        f"{{{', '.join(CONFIG_SECTIONS)}}}")
    g.add_argument("--out-dir", default="out", metavar="DIR",
                   help="output directory (default: %(default)s)")
    g.add_argument("--log-level", default="info",
                   choices=("debug", "info", "warning", "error"),
                   help="stderr logging level (default: %(default)s)")
    g.add_argument("--plots", action="store_true",
                   help="also render PNG figures next to the data files")
    g.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="worker cap for candidate evaluation; the engine "
                        "is sequential, so values above 1 are accepted "
                        "but do not parallelise yet")
    return common


def build_parser() -> _Parser:
    parser = _Parser(prog="qfuse",
                     description="Connection search and multi-stream "
                                 "temporal fusion toolkit.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    common = [_common_flags()]
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{features,search,train,rank,gen-data,graph-render}")

    feat = sub.add_parser("features", help="feature extraction")
    fsub = feat.add_subparsers(dest="action", required=True)
    ext = fsub.add_parser("extract", parents=common,
                          help="extract stream views from one time-course CSV")
    ext.add_argument("--in", dest="input", required=True, metavar="CSV",
                     help="time-course matrix, rows = timepoints")
    ext.add_argument("--tc", action="store_true",
                     help="write the standardised time courses")
    ext.add_argument("--fnc", action="store_true",
                     help="write the static connectivity matrix")
    ext.add_argument("--dfnc", nargs="*", type=int, default=None,
                     metavar="W S",
                     help="write windowed connectivity; optional WINDOW STEP "
                          "override")
    ext.add_argument("--msde", nargs="*", type=int, default=None,
                     metavar="SCALE",
                     help="write the entropy profile; optional scale list "
                          "override")
    ext.set_defaults(handler=cmd_features_extract)

    srch = sub.add_parser("search", help="connection search")
    ssub = srch.add_subparsers(dest="action", required=True)
    run_p = ssub.add_parser("run", parents=common,
                            help="search connections for one layer graph")
    run_p.add_argument("--graph", default=None, metavar="JSON",
                       help="base graph (default: the --stream template)")
    run_p.add_argument("--evaluator", required=True,
                       choices=("surrogate", "train"),
                       help="reward source: fixed surrogate targets, or "
                            "brief training on a corpus")
    run_p.add_argument("--data", default=None, metavar="DIR",
                       help="corpus directory (train evaluator)")
    run_p.add_argument("--stream", default=None, choices=STREAMS,
                       help="stream view to train on (train evaluator)")
    run_p.add_argument("--iterations", type=int, default=None)
    run_p.add_argument("--k-max", type=int, default=None, dest="k_max")
    run_p.add_argument("--alpha", type=float, default=None)
    run_p.add_argument("--gamma", type=float, default=None)
    run_p.add_argument("--replay-capacity", type=int, default=None,
                       dest="replay_capacity")
    run_p.add_argument("--replay-samples", type=int, default=None,
                       dest="replay_samples")
    run_p.add_argument("--eval-epochs", type=int, default=None,
                       dest="eval_epochs",
                       help="training epochs per candidate (train evaluator)")
    run_p.add_argument("--decoupled-type-draw", action="store_true",
                       default=None, dest="decoupled_type_draw",
                       help="draw the connection type independently of the "
                            "explore/exploit draw")
    run_p.set_defaults(handler=cmd_search_run)

    trn = sub.add_parser("train", help="model training")
    tsub = trn.add_subparsers(dest="action", required=True)
    fused = tsub.add_parser("fused", parents=common,
                            help="train the fused multi-stream model")
    fused.add_argument("--data", required=True, metavar="DIR",
                       help="corpus directory (from gen-data)")
    fused.add_argument("--graph", nargs=2, action="append", default=None,
                       metavar=("STREAM", "JSON"),
                       help="replace one stream's encoder graph "
                            "(e.g. a best_graph.json from search run)")
    fused.set_defaults(handler=cmd_train_fused)

    rank = sub.add_parser("rank", parents=common,
                          help="attention importance rankings")
    rank.add_argument("--model", required=True, metavar="JSON",
                      help="checkpoint written by train fused")
    rank.add_argument("--data", required=True, metavar="DIR",
                      help="corpus directory to score")
    rank.set_defaults(handler=cmd_rank)

    gen = sub.add_parser("gen-data", parents=common,
                         help="generate a planted synthetic corpus")
    gen.add_argument("--chance", action="store_true",
                     help="remove all class signal (null corpus)")
    gen.set_defaults(handler=cmd_gen_data)

    render = sub.add_parser("graph-render", parents=common,
                            help="render a layer graph to DOT (and PNG "
                                 "with --plots)")
    render.add_argument("--graph", required=True, metavar="JSON")
    render.set_defaults(handler=cmd_graph_render)

    return parser


# ---------------------------------------------------------------------------
# shared plumbing

def _load_sections(args) -> dict:
    if args.config is None:
        return {}
    doc = load_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_SECTIONS))
    if unknown:
        raise ConfigError(
            f"unknown config sections: {', '.join(unknown)} "
            f"(expected any of: {', '.join(CONFIG_SECTIONS)})")
    return doc


def _resolve_seed(args, section: dict) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in section:
        return int(section["seed"])
    return 0


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _override(cfg, args, names):
    """Apply explicitly passed flags (non-None) over a config object."""
    changes = {n: getattr(args, n) for n in names
               if getattr(args, n, None) is not None}
    return replace(cfg, **changes) if changes else cfg


# ---------------------------------------------------------------------------
# subcommands

def cmd_features_extract(args) -> int:
    sections = _load_sections(args)
    pdoc = dict(sections.get("pipeline", {}))
    seed = _resolve_seed(args, pdoc)
    pdoc["seed"] = seed
    pcfg = pipeline_config_from(pdoc)
    fs = pcfg.features
    if args.dfnc is not None and len(args.dfnc) not in (0, 2):
        raise UsageError("--dfnc takes zero or two values: WINDOW STEP")
    if args.dfnc and len(args.dfnc) == 2:
        fs = replace(fs, window=args.dfnc[0], step=args.dfnc[1])
    if args.msde:
        fs = replace(fs, scales=tuple(args.msde))
    selected = [s for s in STREAMS
                if (s == "tc" and args.tc) or (s == "fnc" and args.fnc)
                or (s == "dfnc" and args.dfnc is not None)
                or (s == "msde" and args.msde is not None)]
    if not selected:
        selected = list(STREAMS)
    tc = read_matrix_csv(args.input)
    views = extract_features(tc, fs, tuple(selected))
    out = _out_dir(args)
    outputs = []
    for name in selected:
        path = write_matrix_csv(out / f"{name}.csv", views[name])
        log.info("wrote %s  shape %s", path, views[name].shape)
        outputs.append(path.name)
    if args.plots and "fnc" in views:
        p = figures.connectivity_heatmap(views["fnc"], out / "fnc_heatmap.png")
        outputs.append(p.name)
    write_manifest(out, command="features extract", seed=seed,
                   config=config_doc(fs),
                   outputs=outputs,
                   extra={"input": str(args.input), "streams": selected,
                          "correlation_clip": R_CLIP})
    return 0


def cmd_search_run(args) -> int:
    sections = _load_sections(args)
    sdoc = dict(sections.get("search", {}))
    seed = _resolve_seed(args, sdoc)
    sdoc["seed"] = seed
    scfg = search_config_from(sdoc)
    scfg = _override(scfg, args, ("iterations", "k_max", "alpha", "gamma",
                                  "replay_capacity", "replay_samples",
                                  "decoupled_type_draw"))
    pcfg = pipeline_config_from(dict(sections.get("pipeline", {})))

    if args.evaluator == "train":
        if args.data is None or args.stream is None:
            raise UsageError(
                "--evaluator train needs --data DIR and --stream NAME")
        subjects, labels = load_dataset(args.data)
        view = extract_dataset(subjects, pcfg.features,
                               (args.stream,))[args.stream]
        evaluator = make_train_evaluator(
            view, labels,
            eval_epochs=args.eval_epochs or 6,
            batch_size=pcfg.training.batch_size,
            learning_rate=pcfg.training.learning_rate,
            base_seed=derive_seed(seed, f"search-{args.stream}"))
        graph = from_doc(load_json(args.graph)) if args.graph is not None \
            else stream_template(args.stream, view.shape[1:], pcfg)
    else:
        if args.graph is None:
            raise UsageError("--evaluator surrogate needs --graph JSON")
        spec = surrogate_spec_from(dict(sections.get("surrogate", {})))
        evaluator = make_surrogate_evaluator(spec)
        graph = from_doc(load_json(args.graph))

    out = _out_dir(args)
    try:
        result = run_search(graph, evaluator, scfg)
    except SearchAbortedError as exc:
        # Keep the completed iterations on disk before surfacing the failure.
        dataio.save_search_log(exc.records, out / "search_log.jsonl")
        raise
    written = dataio.save_search(result, out)
    outputs = [p.name for p in written]
    if args.plots:
        p = figures.reward_curve(result.records, out / "reward_curve.png")
        outputs.append(p.name)
    best = result.best_episode
    if best is not None:
        log.info("best episode reward %.4f with connections %s",
                 best.reward, best.connections())
    write_manifest(out, command="search run", seed=seed,
                   config=config_doc(scfg),
                   outputs=outputs,
                   extra={"evaluator": args.evaluator,
                          "stream": args.stream,
                          "data": args.data,
                          "graph": args.graph})
    return 0


def cmd_train_fused(args) -> int:
    sections = _load_sections(args)
    pdoc = dict(sections.get("pipeline", {}))
    seed = _resolve_seed(args, pdoc)
    pdoc["seed"] = seed
    pcfg = pipeline_config_from(pdoc)
    subjects, labels = load_dataset(args.data)
    graphs = None
    if args.graph:
        features = extract_dataset(subjects, pcfg.features, pcfg.streams)
        graphs = default_graphs(features, pcfg)
        for stream, path in args.graph:
            if stream not in pcfg.streams:
                raise UsageError(f"--graph stream {stream!r} is not enabled "
                                 f"(enabled: {', '.join(pcfg.streams)})")
            graphs[stream] = from_doc(load_json(path))
    else:
        features = None
    result = train_pipeline(subjects, labels, pcfg,
                            graphs=graphs, features=features)
    out = _out_dir(args)
    outputs = []
    metrics = {
        "test": result.metrics,
        "history": result.history,
        "n_train": int(len(result.train_idx)),
        "n_test": int(len(result.test_idx)),
    }
    outputs.append(dump_json(metrics, out / "metrics.json").name)
    outputs.append(dataio.save_model(result.model, out / "model.json").name)
    if args.plots:
        outputs.append(
            figures.training_curves(result.history,
                                    out / "training_curves.png").name)
    log.info("test metrics: %s",
             {k: round(v, 4) for k, v in result.metrics.items()})
    write_manifest(out, command="train fused", seed=seed,
                   config=config_doc(pcfg), outputs=outputs,
                   extra={"data": str(args.data),
                          "graph_overrides": args.graph or []})
    return 0


def cmd_rank(args) -> int:
    sections = _load_sections(args)
    pdoc = dict(sections.get("pipeline", {}))
    seed = _resolve_seed(args, pdoc)
    pdoc["seed"] = seed
    pcfg = pipeline_config_from(pdoc)
    model = dataio.load_model(args.model)
    subjects, _labels = load_dataset(args.data)
    x = extract_dataset(subjects, pcfg.features, model.stream_names)
    n_regions = subjects[0].data.shape[1]
    ranking = rank_importance(model, x, n_regions=n_regions)
    out = _out_dir(args)
    outputs = []

    rows = [["stream", "channel", "weight", "rank"]]
    for stream in model.stream_names:
        if stream not in ranking.region_weights:
            continue
        w = ranking.region_weights[stream]
        order = ranking.region_rankings[stream]
        rank_of = {int(ch): r for r, ch in enumerate(order)}
        rows += [[stream, ch, f"{w[ch]:.17g}", rank_of[ch]]
                 for ch in range(len(w))]
    path = out / "region_weights.csv"
    _write_rows(path, rows)
    outputs.append(path.name)

    if ranking.combined_weights is not None:
        rows = [["region", "weight", "rank"]]
        rank_of = {int(r): i for i, r in enumerate(ranking.combined_ranking)}
        rows += [[r, f"{ranking.combined_weights[r]:.17g}", rank_of[r]]
                 for r in range(n_regions)]
        path = out / "combined_ranking.csv"
        _write_rows(path, rows)
        outputs.append(path.name)

    rows = [["stream", "mass", "rank"]]
    rank_of = {s: i for i, s in enumerate(ranking.stream_ranking)}
    rows += [[s, f"{ranking.stream_masses[s]:.17g}", rank_of[s]]
             for s in model.stream_names]
    path = out / "stream_masses.csv"
    _write_rows(path, rows)
    outputs.append(path.name)

    if args.plots:
        p = figures.attention_bars(ranking.region_weights,
                                   out / "attention.png",
                                   combined=ranking.combined_weights)
        outputs.append(p.name)
    top = list(map(int, ranking.combined_ranking[:3])) \
        if ranking.combined_ranking is not None else None
    log.info("top regions: %s; stream ranking: %s",
             top, ranking.stream_ranking)
    write_manifest(out, command="rank", seed=seed,
                   config=config_doc(pcfg.features), outputs=outputs,
                   extra={"model": str(args.model), "data": str(args.data),
                          "n_regions": n_regions})
    return 0


def cmd_gen_data(args) -> int:
    sections = _load_sections(args)
    sdoc = dict(sections.get("synthetic", {}))
    seed = _resolve_seed(args, sdoc)
    sdoc["seed"] = seed
    cfg = synthetic_config_from(sdoc)
    if args.chance:
        cfg = chance_config(cfg)
    subjects, labels = gen_synthetic(cfg)
    out = _out_dir(args)
    save_dataset(out, subjects, labels, cfg)
    log.info("wrote %d subjects to %s", len(subjects), out)
    if args.plots:
        corr = np.corrcoef(subjects[0].data.T)
        figures.connectivity_heatmap(corr, out / "sample_subject_corr.png",
                                     title=f"{subjects[0].subject_id} correlation")
    return 0


def cmd_graph_render(args) -> int:
    graph = from_doc(load_json(args.graph))
    out = _out_dir(args)
    base = Path(args.graph).stem
    dot_path = out / f"{base}.dot"
    dot_path.write_text(to_dot(graph))
    outputs = [dot_path.name]
    if args.plots:
        outputs.append(figures.render_graph(graph, out / f"{base}.png").name)
    log.info("rendered %s (%d nodes, %d edges)", args.graph,
             len(graph.nodes), len(graph.edges))
    write_manifest(out, command="graph-render",
                   seed=_resolve_seed(args, {}),
                   config=to_doc(graph), outputs=outputs,
                   extra={"graph": str(args.graph)})
    return 0


def _write_rows(path: Path, rows) -> None:
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


# ---------------------------------------------------------------------------
# entry point

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        used = exc.parser or parser
        print(used.format_usage().strip(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 1
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
