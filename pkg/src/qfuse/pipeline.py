"""End-to-end fused classification over four feature streams.

Per subject the raw time courses yield up to four views — the z-scored
courses themselves ("tc"), the static connectivity matrix ("fnc"), the
windowed connectivity sequence ("dfnc") and the multiscale dispersion
entropy profile ("msde").  Each enabled view runs through its own encoder
graph to one fixed-size token; the token set is fused by a small
multi-head attention head and classified.  Region and stream rankings
fall out of the recorded attention weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import features as F
from .graph import LayerGraph, infer_shapes, topo_order
from .metrics import classification_report
from .nn.fusion import (TokenDimMismatchError, fusion_backward,
                        fusion_forward, init_fusion_params)
from .nn.layers import softmax
from .nn.network import Network
from .nn.train import TrainConfig, predict_logits, train
from .rewards import make_train_evaluator, stratified_split
from .search import SearchConfig, SearchResult, run_search
from .seeding import derive_seed
from .templates import dense_encoder, temporal_encoder

STREAMS = ("tc", "fnc", "dfnc", "msde")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSettings:
    window: int = 16
    step: int = 4
    scales: tuple[int, ...] = (1, 2, 4)
    n_classes: int = 6
    embedding: int = 2
    delay: int = 1
    discretize: str = "ncdf"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))


@dataclass(frozen=True)
class EncoderSettings:
    filters: int = 8
    gru_units: int = 16
    hidden: int = 32
    dropout: float = 0.2
    kernel_size: int = 3


@dataclass(frozen=True)
class PipelineConfig:
    streams: tuple[str, ...] = STREAMS
    token_dim: int = 16
    heads: int = 2
    ffn_hidden: tuple[int, ...] = (64, 32)
    classes: int = 2
    features: FeatureSettings = field(default_factory=FeatureSettings)
    encoders: EncoderSettings = field(default_factory=EncoderSettings)
    training: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=0.003, batch_size=32, epochs=40, keep_best=True))
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "streams", tuple(self.streams))
        object.__setattr__(self, "ffn_hidden", tuple(self.ffn_hidden))
        if not self.streams:
            raise PipelineError("at least one stream must be enabled")
        unknown = [s for s in self.streams if s not in STREAMS]
        if unknown:
            raise PipelineError(f"unknown streams {unknown}; choose from {STREAMS}")
        if len(set(self.streams)) != len(self.streams):
            raise PipelineError("duplicate stream names")
        if not 0.0 < self.test_fraction < 1.0:
            raise PipelineError("test_fraction must be in (0, 1)")


# ---------------------------------------------------------------------------
# feature extraction

def extract_features(tc, settings: FeatureSettings,
                     streams=STREAMS) -> dict[str, np.ndarray]:
    """Per-subject views, keyed by stream name in the given order."""
    out: dict[str, np.ndarray] = {}
    for s in streams:
        if s == "tc":
            out[s] = F.zscore(tc)
        elif s == "fnc":
            out[s] = F.fnc(tc)
        elif s == "dfnc":
            out[s] = F.dfnc(tc, settings.window, settings.step)
        elif s == "msde":
            out[s] = F.msde(tc, scales=settings.scales,
                            n_classes=settings.n_classes,
                            embedding=settings.embedding,
                            delay=settings.delay,
                            discretize=settings.discretize)
        else:
            raise PipelineError(f"unknown stream {s!r}")
    return out


def extract_dataset(subjects, settings: FeatureSettings,
                    streams=STREAMS) -> dict[str, np.ndarray]:
    """Stack per-subject views into (N, ...) arrays per stream."""
    per_stream: dict[str, list[np.ndarray]] = {s: [] for s in streams}
    for tc in subjects:
        feats = extract_features(tc, settings, streams)
        for s in streams:
            per_stream[s].append(feats[s])
    return {s: np.stack(v) for s, v in per_stream.items()}


# ---------------------------------------------------------------------------
# encoder templates per stream

def stream_template(stream: str, view_shape: tuple[int, ...],
                    config: PipelineConfig) -> LayerGraph:
    """Default encoder graph for one stream given its view shape.

    Sequence-like views (tc/dfnc/msde) get the dilated-conv + GRU
    encoder; the flat connectivity matrix gets the dense encoder."""
    if len(view_shape) != 2:
        raise PipelineError(f"stream {stream!r} view must be 2-d, got {view_shape}")
    length, channels = view_shape
    enc = config.encoders
    if stream == "fnc":
        return dense_encoder(length, channels, hidden=enc.hidden,
                             token_dim=config.token_dim,
                             classes=config.classes, dropout=enc.dropout)
    return temporal_encoder(length, channels, filters=enc.filters,
                            gru_units=enc.gru_units,
                            token_dim=config.token_dim,
                            classes=config.classes, dropout=enc.dropout,
                            kernel_size=enc.kernel_size)


def default_graphs(x: dict[str, np.ndarray],
                   config: PipelineConfig) -> dict[str, LayerGraph]:
    return {s: stream_template(s, x[s].shape[1:], config) for s in config.streams}


# ---------------------------------------------------------------------------
# fused model

def _token_subgraph(graph: LayerGraph) -> set[int]:
    """The fusion node and its ancestors — the nodes actually used when
    the graph runs as a token encoder (the auxiliary head is outside)."""
    keep = {graph.fusion_index}
    stack = [graph.fusion_index]
    while stack:
        for p in graph.predecessors(stack.pop()):
            if p not in keep:
                keep.add(p)
                stack.append(p)
    return keep


def fit_standardizer(x: np.ndarray) -> tuple[float, float]:
    """Scalar mean/std of the whole training view.

    Scalar (not per-entry) on purpose: it removes the global offset that
    stalls training on features like entropy profiles while preserving
    the relative magnitudes of entries within a view — per-entry scaling
    would whiten informative entries down to the noise floor."""
    mu = float(x.mean())
    sd = float(x.std())
    return mu, (sd if sd > 1e-9 else 1.0)


class FusedModel:
    """Per-stream encoder networks feeding one attention fusion head.

    Implements the forward/backward/param protocol of ``nn.train.train``
    with a dict-of-streams batch.  Auxiliary-head parameters of the
    encoder graphs exist but are excluded from training and persistence.
    Each stream may carry a standardizer (fitted on the training split
    only) that is applied on the way in; raw entropy profiles in
    particular are nearly constant offsets without it.
    """

    def __init__(self, graphs: dict[str, LayerGraph], *, token_dim: int,
                 heads: int, ffn_hidden=(64, 32), classes: int = 2,
                 seed: int = 0):
        if not graphs:
            raise PipelineError("need at least one stream graph")
        self.stream_names = tuple(graphs)
        self.token_dim = token_dim
        self.heads = heads
        self.ffn_hidden = tuple(ffn_hidden)
        self.classes = classes
        self.nets: dict[str, Network] = {}
        self.active_nodes: dict[str, set[int]] = {}
        self.norms: dict[str, tuple[float, float] | None] = {}
        for name, g in graphs.items():
            shape = infer_shapes(g)[g.fusion_index]
            if shape != (token_dim,):
                raise TokenDimMismatchError(
                    f"stream {name!r} fusion node emits shape {shape}, "
                    f"expected ({token_dim},)")
            self.nets[name] = Network(g, seed=derive_seed(seed, f"encoder-{name}"))
            self.active_nodes[name] = _token_subgraph(g)
            self.norms[name] = None
        rng = np.random.default_rng(derive_seed(seed, "fusion-head"))
        self.fusion = init_fusion_params(rng, token_dim,
                                         n_tokens=len(self.stream_names),
                                         heads=heads,
                                         ffn_hidden=tuple(ffn_hidden),
                                         classes=classes)

    def fit_normalization(self, x_train: dict[str, np.ndarray]) -> None:
        for name in self.stream_names:
            self.norms[name] = fit_standardizer(x_train[name])

    def _normalized(self, name: str, xi: np.ndarray) -> np.ndarray:
        norm = self.norms.get(name)
        if norm is None:
            return xi
        mu, sd = norm
        return (xi - mu) / sd

    # -- parameter protocol ---------------------------------------------

    def _stream_param_items(self, name):
        net, keep = self.nets[name], self.active_nodes[name]
        return [(nid, pname, arr) for nid, pname, arr in net.param_items()
                if nid in keep]

    def param_arrays(self):
        arrays = []
        for name in self.stream_names:
            arrays.extend(arr for _, _, arr in self._stream_param_items(name))
        arrays.extend(self.fusion.values())
        return arrays

    def grad_arrays(self, grads):
        arrays = []
        for name in self.stream_names:
            g = grads["streams"][name]
            arrays.extend(g[nid][pname]
                          for nid, pname, _ in self._stream_param_items(name))
        arrays.extend(grads["fusion"][k] for k in self.fusion)
        return arrays

    # -- execution --------------------------------------------------------

    def forward(self, x: dict[str, np.ndarray], train=False, rng=None):
        tokens, caches = [], {}
        for name in self.stream_names:
            net = self.nets[name]
            tok, cache = net.forward(self._normalized(name, x[name]),
                                     train=train, rng=rng,
                                     until=net.graph.fusion_index)
            tokens.append(tok)
            caches[name] = cache
        stacked = np.stack(tokens, axis=1)  # (N, n_streams, token_dim)
        logits, fcache = fusion_forward(stacked, self.fusion)
        return logits, {"streams": caches, "fusion": fcache}

    def backward(self, dlogits, cache):
        dtokens, fgrads = fusion_backward(dlogits, cache["fusion"], self.fusion)
        grads = {"streams": {}, "fusion": fgrads}
        for k, name in enumerate(self.stream_names):
            g, _ = self.nets[name].backward(dtokens[:, k, :], cache["streams"][name])
            grads["streams"][name] = g
        return grads, None

    # -- attention access --------------------------------------------------

    def pool_weights(self, cache) -> dict[str, np.ndarray]:
        """Per-stream region attention (N, channels) from a forward cache;
        streams whose encoder has no attention pool are omitted."""
        out = {}
        for name in self.stream_names:
            attn = cache["streams"][name]["attention"]
            net = self.nets[name]
            pool_ids = [nid for nid in net.order
                        if net.graph.node_map[nid].kind == "AttentionPool"
                        and nid in attn]
            if pool_ids:
                out[name] = attn[pool_ids[0]]
        return out

    def fusion_attention(self, cache) -> np.ndarray:
        """(N, heads, n_streams, n_streams) fusion attention weights."""
        return cache["fusion"]["attention"]


# ---------------------------------------------------------------------------
# training and evaluation

@dataclass
class PipelineResult:
    model: FusedModel
    metrics: dict
    history: dict
    train_idx: np.ndarray
    test_idx: np.ndarray
    features: dict[str, np.ndarray]
    labels: np.ndarray
    graphs: dict[str, LayerGraph]

    def test_features(self) -> dict[str, np.ndarray]:
        return {s: v[self.test_idx] for s, v in self.features.items()}


def scores_from_logits(logits: np.ndarray) -> np.ndarray:
    """Probability of the positive class — the AUC ranking score."""
    return softmax(logits, axis=1)[:, 1]


def train_pipeline(subjects, labels, config: PipelineConfig,
                   graphs: dict[str, LayerGraph] | None = None,
                   features: dict[str, np.ndarray] | None = None) -> PipelineResult:
    """Extract features, split train/test by class, train the fused model
    end-to-end and score the held-out set with the full metric set."""
    y = np.asarray(labels, dtype=np.int64)
    x = extract_dataset(subjects, config.features, config.streams) \
        if features is None else {s: features[s] for s in config.streams}
    if graphs is None:
        graphs = default_graphs(x, config)
    else:
        missing = [s for s in config.streams if s not in graphs]
        if missing:
            raise PipelineError(f"graphs missing for streams {missing}")
        graphs = {s: graphs[s] for s in config.streams}
    split_rng = np.random.default_rng(derive_seed(config.seed, "test-split"))
    tr, te = stratified_split(y, config.test_fraction, split_rng)
    # internal validation (10% of the training side) drives epoch
    # selection; the held-out test set is scored exactly once at the end
    val_rng = np.random.default_rng(derive_seed(config.seed, "val-split"))
    fit_rel, ival_rel = stratified_split(y[tr], 0.1, val_rng)
    fit, ival = tr[fit_rel], tr[ival_rel]
    x_fit = {s: v[fit] for s, v in x.items()}
    x_ival = {s: v[ival] for s, v in x.items()}
    x_te = {s: v[te] for s, v in x.items()}
    model = FusedModel(graphs, token_dim=config.token_dim, heads=config.heads,
                       ffn_hidden=config.ffn_hidden, classes=config.classes,
                       seed=derive_seed(config.seed, "model"))
    model.fit_normalization(x_fit)
    train_cfg = replace(config.training, seed=derive_seed(config.seed, "train"))
    history = train(model, x_fit, y[fit], train_cfg, val=(x_ival, y[ival]))
    logits = predict_logits(model, x_te)
    report = classification_report(y[te], logits.argmax(axis=1),
                                   scores=scores_from_logits(logits))
    return PipelineResult(model=model, metrics=report, history=history,
                          train_idx=tr, test_idx=te, features=x, labels=y,
                          graphs=graphs)


# ---------------------------------------------------------------------------
# attention rankings

@dataclass
class RankingResult:
    region_weights: dict[str, np.ndarray]   # stream -> mean weight per channel
    region_rankings: dict[str, np.ndarray]  # stream -> channels, best first
    combined_weights: np.ndarray | None     # averaged over region-aligned streams
    combined_ranking: np.ndarray | None
    stream_masses: dict[str, float]         # fusion attention mass per stream
    stream_ranking: list[str]


def pair_to_region_weights(pair_weights: np.ndarray, n_regions: int) -> np.ndarray:
    """Marginalize attention over region pairs (row-major upper-triangle
    order) to per-region mass; result sums to 1."""
    n_pairs = n_regions * (n_regions - 1) // 2
    if len(pair_weights) != n_pairs:
        raise PipelineError(
            f"{len(pair_weights)} pair weights do not fit {n_regions} regions")
    w = np.zeros(n_regions)
    idx = 0
    for i in range(n_regions):
        for j in range(i + 1, n_regions):
            w[i] += pair_weights[idx]
            w[j] += pair_weights[idx]
            idx += 1
    return w / w.sum()


def rank_importance(model: FusedModel, x: dict[str, np.ndarray],
                    n_regions: int | None = None) -> RankingResult:
    """Attention-based rankings over an evaluation set.

    Region ranking per stream: mean attention-pool weight per channel,
    sorted descending.  The combined ranking averages the streams whose
    channels are regions directly, plus pair-attending streams (channel
    count n(n-1)/2) marginalized onto their member regions.  Stream
    ranking: mean fusion-attention mass received by each token; masses
    sum to 1.
    """
    _, cache = model.forward(x, train=False)
    pool = model.pool_weights(cache)
    region_weights = {s: w.mean(axis=0) for s, w in pool.items()}
    region_rankings = {s: np.argsort(-w, kind="stable")
                       for s, w in region_weights.items()}
    combined_w = combined_r = None
    if n_regions is not None:
        n_pairs = n_regions * (n_regions - 1) // 2
        aligned = []
        for w in region_weights.values():
            if w.shape[0] == n_regions:
                aligned.append(w)
            elif w.shape[0] == n_pairs:
                aligned.append(pair_to_region_weights(w, n_regions))
        if aligned:
            combined_w = np.mean(aligned, axis=0)
            combined_r = np.argsort(-combined_w, kind="stable")
    attn = model.fusion_attention(cache)  # (N, heads, n, n)
    masses = attn.mean(axis=(0, 1, 2))    # mass received by each token
    stream_masses = {s: float(m) for s, m in zip(model.stream_names, masses)}
    order = np.argsort(-masses, kind="stable")
    return RankingResult(
        region_weights=region_weights,
        region_rankings=region_rankings,
        combined_weights=combined_w,
        combined_ranking=combined_r,
        stream_masses=stream_masses,
        stream_ranking=[model.stream_names[i] for i in order],
    )


# ---------------------------------------------------------------------------
# per-stream connection search

def optimize_encoder(stream: str, subjects, labels, config: PipelineConfig,
                     search: SearchConfig, *, eval_epochs: int = 6,
                     features: dict[str, np.ndarray] | None = None) -> SearchResult:
    """Search connections for one stream's encoder, scoring candidates by
    brief standalone training (the graph's auxiliary head) on a 90/10
    internal split.  The returned best graph drops into train_pipeline's
    ``graphs`` argument for a from-scratch retrain."""
    if stream not in config.streams:
        raise PipelineError(f"stream {stream!r} is not enabled")
    y = np.asarray(labels, dtype=np.int64)
    if features is not None and stream in features:
        view = features[stream]
    else:
        view = extract_dataset(subjects, config.features, (stream,))[stream]
    template = stream_template(stream, view.shape[1:], config)
    evaluator = make_train_evaluator(
        view, y, eval_epochs=eval_epochs,
        batch_size=config.training.batch_size,
        learning_rate=config.training.learning_rate,
        base_seed=derive_seed(config.seed, f"search-{stream}"))
    return run_search(template, evaluator, search)
