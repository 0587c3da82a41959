"""
plotting.py - Phase-diagram heatmaps and K-estimation gap plots

Figures are rendered off-screen with the Agg backend and written as PNG.
"""

import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import HEATMAP_CAPTION, JEFFREYS_CONFIDENCE, JEFFREYS_TARGET_WIDTH  # noqa: E402
from .detect import estimate_k  # noqa: E402
from .errors import IoError  # noqa: E402
from .experiment import CellResult  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_MAX_TICKS = 10


def phase_matrix(
    cells: Iterable[CellResult],
    m_values: Sequence[int],
    t_values: Sequence[int],
    k: int,
) -> np.ndarray:
    """Success rates laid out with M along rows and T along columns; NaN where missing."""
    rows = {m: i for i, m in enumerate(m_values)}
    cols = {t: j for j, t in enumerate(t_values)}
    matrix = np.full((len(m_values), len(t_values)), np.nan)
    for cell in cells:
        if cell.k == k and cell.m in rows and cell.t in cols:
            matrix[rows[cell.m], cols[cell.t]] = cell.rate
    return matrix


def _tick_positions(values: Sequence[int]) -> np.ndarray:
    step = max(1, int(np.ceil(len(values) / _MAX_TICKS)))
    return np.arange(0, len(values), step)


def _save(fig, path: PathLike, metadata: dict) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=160, metadata=metadata)
    except OSError as e:
        raise IoError(f"Cannot write figure: {e}", str(path))
    finally:
        plt.close(fig)
    logger.debug(f"Wrote figure {path}")
    return path


def render_phase_heatmap(
    matrix: np.ndarray,
    m_values: Sequence[int],
    t_values: Sequence[int],
    path: PathLike,
    title: str = "",
    confidence: float = JEFFREYS_CONFIDENCE,
    target_width: float = JEFFREYS_TARGET_WIDTH,
) -> Path:
    """Grayscale heatmap, M vertical and T horizontal, white = always recovered."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (len(m_values), len(t_values)):
        raise ValueError(f"Matrix shape {matrix.shape} does not match the grid values")

    fig, ax = plt.subplots(figsize=(7, 5))
    image = ax.imshow(
        matrix,
        origin="lower",
        aspect="auto",
        cmap="gray",
        vmin=0.0,
        vmax=1.0,
        interpolation="nearest",
    )
    fig.colorbar(image, ax=ax, label="Success rate")

    xticks = _tick_positions(t_values)
    yticks = _tick_positions(m_values)
    ax.set_xticks(xticks)
    ax.set_xticklabels([str(t_values[i]) for i in xticks])
    ax.set_yticks(yticks)
    ax.set_yticklabels([str(m_values[i]) for i in yticks])
    ax.set_xlabel("T (time-steps)")
    ax.set_ylabel("M (measurements per step)")
    if title:
        ax.set_title(title)
    fig.tight_layout()

    caption = HEATMAP_CAPTION.format(confidence=confidence, width=target_width)
    return _save(fig, path, {"Title": title, "Description": caption})


def render_gap_plot(
    scores: np.ndarray,
    path: PathLike,
    k_true: Optional[int] = None,
) -> int:
    """Sorted score amplitudes with a dotted line at the largest drop.

    Returns the estimated K.
    """
    ordered = np.sort(np.asarray(scores, dtype=float))[::-1]
    k_hat = estimate_k(ordered)

    fig, ax = plt.subplots(figsize=(7, 4))
    positions = np.arange(1, ordered.shape[0] + 1)
    ax.plot(positions, ordered, marker="o", markersize=3, linewidth=1)
    ax.axvline(k_hat + 0.5, linestyle=":", color="black", label=f"largest gap (K={k_hat})")
    if k_true is not None and k_true != k_hat:
        ax.axvline(k_true + 0.5, linestyle="--", color="gray", label=f"true K={k_true}")
    ax.set_xlabel("Rank")
    ax.set_ylabel("Score")
    ax.legend()
    fig.tight_layout()

    _save(fig, path, {"Description": f"Estimated K = {k_hat}"})
    return k_hat
