"""Figure rendering for the report path.

Headless matplotlib (Agg) with small sensible defaults; each helper writes
one PNG next to the delimited report outputs and returns the path.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_DPI = 150


def _finish(fig, ax, title: str, xlabel: str, ylabel: str, out: Path) -> Path:
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def save_cluster_size_figure(sizes: Sequence[int], out: str | Path) -> Path:
    """Bar chart of semantic cluster sizes, largest first."""
    ordered = sorted(sizes, reverse=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(1, len(ordered) + 1), ordered, color="#4878a8")
    return _finish(
        fig, ax, "Semantic cluster sizes", "cluster rank", "problems", Path(out)
    )


def save_token_figure(token_sums: Sequence[int], out: str | Path) -> Path:
    """Histogram of combined solver token counts per problem."""
    fig, ax = plt.subplots(figsize=(7, 4))
    bins = min(30, max(5, len(token_sums) // 2)) if token_sums else 5
    ax.hist(token_sums, bins=bins, color="#a85448", edgecolor="white")
    return _finish(
        fig, ax, "Inference tokens per problem", "tokens (both solvers)", "problems", Path(out)
    )


def save_degree_figure(degrees: Sequence[int], threshold: float, out: str | Path) -> Path:
    """Histogram of node degrees with the supernode prune threshold marked."""
    fig, ax = plt.subplots(figsize=(7, 4))
    bins = min(40, max(5, len(set(degrees))))
    ax.hist(degrees, bins=bins, color="#5a9367", edgecolor="white")
    ax.axvline(threshold, color="#333333", linestyle="--", label=f"prune threshold {threshold:.2f}")
    ax.legend()
    return _finish(fig, ax, "Degree distribution", "degree", "nodes", Path(out))
