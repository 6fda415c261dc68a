"""Static SVG charts for diagnostics."""

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "crom"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.errors import ArtifactIOError  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + ".tmp.svg")
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        tmp.replace(path)
    except OSError as e:
        raise ArtifactIOError(f"Cannot write plot {path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def line_plot(
    path: str | Path,
    x: np.ndarray,
    curves: dict[str, np.ndarray],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
) -> Path:
    """One line per named curve against a shared x axis."""
    fig, ax = plt.subplots(figsize=(8, 4), constrained_layout=True)
    for label, y in curves.items():
        ax.plot(x, y, label=label, linewidth=1.0)
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(curves) > 1:
        ax.legend(fontsize="small")
    return _save(fig, path)


def scatter_plot(
    path: str | Path,
    points: Sequence[tuple[np.ndarray, np.ndarray]],
    labels: Sequence[str] | None = None,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> Path:
    """Scatter of one or more (x, y) point sets."""
    fig, ax = plt.subplots(figsize=(8, 4), constrained_layout=True)
    for index, (x, y) in enumerate(points):
        label = labels[index] if labels is not None else None
        ax.scatter(x, y, s=4, label=label)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if labels is not None:
        ax.legend(fontsize="small")
    return _save(fig, path)


def bar_plot(path: str | Path, labels: Sequence[str], values: np.ndarray, title: str = "", ylabel: str = "") -> Path:
    """Bar chart, used for modal energy spectra."""
    fig, ax = plt.subplots(figsize=(10, 4), constrained_layout=True)
    ax.bar(np.arange(len(labels)), values)
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=90, fontsize="small")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    return _save(fig, path)
