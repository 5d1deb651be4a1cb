"""Deterministic SVG scatterplots of 2D embeddings.

One circle per point, fill color keyed by class id from a fixed palette,
unlabeled points black. Output bytes depend only on the inputs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import UNLABELED, LabelVector

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
)
UNLABELED_COLOR = "#000000"


def class_color(label: int) -> str:
    if label == UNLABELED:
        return UNLABELED_COLOR
    return PALETTE[label % len(PALETTE)]


def emit_scatter(embedding, labels, path, size: float = 640.0,
                 margin: float = 24.0, radius: float = 3.0) -> None:
    """Write an SVG scatterplot of the embedding to ``path``.

    Coordinates are mapped into the drawing area with a uniform scale so
    the geometry is preserved; a degenerate (single-point) extent lands in
    the center.
    """
    coords = embedding.coordinates if hasattr(embedding, "coordinates") else embedding
    coords = np.asarray(coords, dtype=np.float64)
    if isinstance(labels, LabelVector):
        labels = labels.values
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != coords.shape[0]:
        raise ValueError("labels length must match the embedding")

    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    scale = (size - 2.0 * margin) / span if span > 0 else 0.0
    center = (lo + hi) / 2.0

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:g}" height="{size:g}" '
        f'viewBox="0 0 {size:g} {size:g}">',
        f'<rect width="{size:g}" height="{size:g}" fill="#ffffff"/>',
    ]
    for i in range(coords.shape[0]):
        # SVG y grows downward; flip so the plot reads like a chart.
        cx = size / 2.0 + (coords[i, 0] - center[0]) * scale
        cy = size / 2.0 - (coords[i, 1] - center[1]) * scale
        lines.append(
            f'<circle cx="{cx:.4f}" cy="{cy:.4f}" r="{radius:g}" '
            f'fill="{class_color(int(labels[i]))}"/>'
        )
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")
