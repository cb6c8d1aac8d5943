"""Report figures rendered to files next to the delimited outputs.

All plots use the Agg backend so they work headless, and none of them
embeds wall-clock state, so a re-run with the same seed reproduces the
PNGs byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .graph import CONCATENATE, RESIDUAL, LayerGraph, topo_order  # noqa: E402

_DPI = 110


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def connectivity_heatmap(matrix, path, *, title="connectivity") -> Path:
    """Square connectivity matrix as a signed heatmap."""
    m = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    vmax = float(np.max(np.abs(m))) or 1.0
    im = ax.imshow(m, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_title(title)
    ax.set_xlabel("region")
    ax.set_ylabel("region")
    fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def reward_curve(records, path) -> Path:
    """Reward per search iteration with the running best and the ε
    schedule on a twin axis."""
    its = [r["iteration"] for r in records]
    rewards = [r["reward"] for r in records]
    eps = [r["epsilon"] for r in records]
    best = np.maximum.accumulate(rewards) if rewards else []
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(its, rewards, ".", ms=3, alpha=0.55, label="episode reward")
    ax.plot(its, best, "-", lw=1.6, label="best so far")
    ax.set_xlabel("iteration")
    ax.set_ylabel("reward")
    ax.set_ylim(-0.02, 1.02)
    ax2 = ax.twinx()
    ax2.plot(its, eps, color="tab:gray", lw=1.0, ls="--", label="epsilon")
    ax2.set_ylabel("epsilon", color="tab:gray")
    ax2.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("connection search")
    return _save(fig, path)


def training_curves(history, path) -> Path:
    """Loss and accuracy per epoch (validation accuracy when present)."""
    epochs = np.arange(1, len(history["train_loss"]) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.2))
    ax1.plot(epochs, history["train_loss"], lw=1.4)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax2.plot(epochs, history["train_acc"], lw=1.4, label="train")
    if history.get("val_acc"):
        ax2.plot(epochs, history["val_acc"], lw=1.4, label="validation")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.02)
    ax2.legend(fontsize=8)
    fig.suptitle("fused model training")
    return _save(fig, path)


def attention_bars(weights: dict, path, *, combined=None) -> Path:
    """Per-stream attention weight profiles as bar charts; optionally a
    final panel with the combined per-region weights."""
    names = list(weights)
    n = len(names) + (1 if combined is not None else 0)
    if n == 0:
        raise ValueError("no attention weights to plot")
    fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 2.8), squeeze=False)
    for ax, name in zip(axes[0], names):
        w = np.asarray(weights[name], dtype=float)
        ax.bar(np.arange(len(w)), w, color="tab:blue")
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("channel", fontsize=8)
        ax.tick_params(labelsize=7)
    if combined is not None:
        ax = axes[0][-1]
        w = np.asarray(combined, dtype=float)
        ax.bar(np.arange(len(w)), w, color="tab:red")
        ax.set_title("combined regions", fontsize=9)
        ax.set_xlabel("region", fontsize=8)
        ax.tick_params(labelsize=7)
    fig.suptitle("attention importance")
    fig.tight_layout()
    return _save(fig, path)


def _layer_positions(graph: LayerGraph) -> dict[int, tuple[float, float]]:
    """Longest-path layering: x is graph depth, y spreads nodes within a
    depth, so base chains draw left-to-right with skips arcing above."""
    depth: dict[int, int] = {}
    for nid in topo_order(graph):
        preds = graph.predecessors(nid)
        depth[nid] = 1 + max((depth[p] for p in preds), default=-1)
    buckets: dict[int, list[int]] = {}
    for nid, d in depth.items():
        buckets.setdefault(d, []).append(nid)
    pos = {}
    for d, ids in buckets.items():
        ids.sort()
        for row, nid in enumerate(ids):
            pos[nid] = (float(d), row - (len(ids) - 1) / 2.0)
    return pos


def render_graph(graph: LayerGraph, path) -> Path:
    """Layered drawing of a layer graph; search-added connections are
    drawn on the styled first hop of each insertion (dashed red for
    residual, solid blue for concatenate)."""
    pos = _layer_positions(graph)
    styled = {(src, via): ctype for src, _dst, ctype, via in graph.ncs_edges}
    fig, ax = plt.subplots(figsize=(max(6.0, 0.62 * len(pos)), 4.2))
    for src, dst in graph.edges:
        x0, y0 = pos[src]
        x1, y1 = pos[dst]
        ctype = styled.get((src, dst))
        if ctype == RESIDUAL:
            color, ls, lw = "tab:red", "--", 1.6
        elif ctype == CONCATENATE:
            color, ls, lw = "tab:blue", "-", 1.6
        else:
            color, ls, lw = "0.55", "-", 0.9
        rad = 0.25 if abs(x1 - x0) > 1 else 0.0
        ax.annotate("", xy=(x1, y1), xytext=(x0, y0),
                    arrowprops=dict(arrowstyle="-|>", color=color, ls=ls,
                                    lw=lw, shrinkA=12, shrinkB=12,
                                    connectionstyle=f"arc3,rad={rad}"))
    for nid, (x, y) in pos.items():
        n = graph.node_map[nid]
        face = "#ffe9a8" if nid == graph.fusion_index else "#dce9f7"
        ax.scatter([x], [y], s=460, marker="o", color=face,
                   edgecolors="0.3", zorder=3)
        ax.annotate(f"{nid}\n{n.kind}", (x, y), ha="center", va="center",
                    fontsize=6.2, zorder=4)
    ax.set_axis_off()
    ax.margins(0.08)
    return _save(fig, path)
