"""Report figures, written next to the JSON/CSV output."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0


def _figure(width: float = 6.0):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN))
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return fig, ax


def plot_node_energies(per_node: dict[str, Sequence[int]], path: str | Path, title: str = "") -> Path:
    """One line per method (e.g. naive, saf, gp) over node ids."""
    fig, ax = _figure()
    for label, values in per_node.items():
        ax.plot(range(len(values)), values, label=label, lw=1.2)
    ax.set_xlabel("node")
    ax.set_ylabel("energy (sends + listens)")
    ax.set_yscale("symlog")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_scaling(rows: Sequence[dict[str, Any]], path: str | Path, keys: Sequence[str] = ("max_naive", "max_total")) -> Path:
    fig, ax = _figure()
    ds = [r["D"] for r in rows]
    for k in keys:
        ax.plot(ds, [r[k] for r in rows], marker="o", label=k.removeprefix("max_"))
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("diameter D")
    ax.set_ylabel("max per-node energy")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_histogram(values: Sequence[float], threshold: float, path: str | Path, xlabel: str) -> Path:
    fig, ax = _figure()
    ax.hist(values, bins=30, color="0.6")
    ax.axvline(threshold, color="k", ls="--", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("trials")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
