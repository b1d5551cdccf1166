"""Figure rendering for the report path: scaled-error histograms next to
the CSV exports, and the excitation-graph drawing."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_error_histograms(report, outdir) -> list:
    """One PNG per (method, horizon): a grid of per-coordinate histograms
    of the sqrt(T)-scaled estimation errors."""
    from .experiments import _fname_T  # local import to avoid a cycle

    outdir = Path(outdir)
    written = []
    for method in report.methods:
        for T in report.horizons:
            cell = report.cell(method, T)
            names = cell.error_coords
            if not names or cell.errors.shape[0] == 0:
                continue
            ncols = min(5, len(names))
            nrows = math.ceil(len(names) / ncols)
            fig, axes = plt.subplots(
                nrows, ncols, figsize=(2.6 * ncols, 2.2 * nrows), squeeze=False
            )
            for k, name in enumerate(names):
                ax = axes[k // ncols][k % ncols]
                ax.hist(cell.errors[:, k], bins=25, color="#4878a8", edgecolor="white")
                ax.set_title(name, fontsize=9)
                ax.tick_params(labelsize=7)
            for k in range(len(names), nrows * ncols):
                axes[k // ncols][k % ncols].set_axis_off()
            fig.suptitle(f"{method}: scaled errors at T = {T:g}", fontsize=11)
            fig.tight_layout(rect=(0, 0, 1, 0.96))
            path = outdir / f"errors_{method}_{_fname_T(T)}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written


def render_graph(graph: dict, path) -> None:
    """Draw the directed excitation graph: nodes with baselines, edges with
    branching ratios; absent edges were selected zero."""
    nodes = graph["nodes"]
    edges = graph["edges"]
    n = len(nodes)
    angles = [2 * math.pi * k / n for k in range(n)]
    pos = {node["id"]: (math.cos(a), math.sin(a)) for node, a in zip(nodes, angles)}
    fig, ax = plt.subplots(figsize=(5, 5))
    for node in nodes:
        x, y = pos[node["id"]]
        ax.scatter([x], [y], s=900, color="#dce7f2", edgecolor="#30506e", zorder=3)
        ax.annotate(
            f"{node['id']}\nmu={node['mu']:.3g}",
            (x, y),
            ha="center",
            va="center",
            fontsize=8,
            zorder=4,
        )
    for edge in edges:
        x0, y0 = pos[edge["source"]]
        x1, y1 = pos[edge["target"]]
        if edge["source"] == edge["target"]:
            ax.annotate(
                f"self {edge['ratio']:.2g}",
                (x0 * 1.25, y0 * 1.25),
                ha="center",
                fontsize=7,
                color="#7a4a2a",
            )
            continue
        ax.annotate(
            "",
            xy=(x1, y1),
            xytext=(x0, y0),
            arrowprops=dict(
                arrowstyle="-|>",
                color="#30506e",
                lw=1.0 + 4.0 * min(edge["ratio"], 1.0),
                shrinkA=18,
                shrinkB=18,
                connectionstyle="arc3,rad=0.12",
            ),
        )
        xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
        ax.annotate(f"{edge['ratio']:.2g}", (xm, ym), fontsize=7, color="#444444")
    ax.set_xlim(-1.6, 1.6)
    ax.set_ylim(-1.6, 1.6)
    ax.set_aspect("equal")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
