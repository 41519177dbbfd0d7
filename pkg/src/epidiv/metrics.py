"""Accuracy (PCK) and cross-view precision (reprojection error) of keypoint detections."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptySamples, IllConditioned, InsufficientViews
from .geometry import CameraModel, project, triangulate_dlt
from .heatmap import HEATMAP_SIZE

DEFAULT_THRESHOLDS = np.round(np.arange(0.0, 0.505, 0.01), 2)
PCK_ROUNDOFF = 1e-9


@dataclass
class PckCurve:
    thresholds: np.ndarray
    values: np.ndarray


@dataclass
class ReprojStats:
    mean: float
    std: float
    residuals: dict[tuple[int, int], float] = field(default_factory=dict)
    excluded: list[tuple[int, str]] = field(default_factory=list)


def argmax_keypoints(h) -> list[tuple[tuple[float, float], float]]:
    """Per-channel grid argmax ``((u, v), peak)``; ties go to the first cell in row-major order."""
    values = h.values if hasattr(h, "values") else np.asarray(h, dtype=float)
    if values.ndim == 2:
        values = values[None]
    C, H, W = values.shape
    flat = values.reshape(C, H * W)
    idx = np.argmax(flat, axis=1)
    return [((float(k % W), float(k // W)), float(flat[c, k])) for c, k in enumerate(idx)]


def pck_curve(detections, truths, window_w: float = HEATMAP_SIZE, thresholds=None) -> PckCurve:
    """Fraction of samples whose error, in units of ``window_w``, is within each threshold."""
    det = np.asarray(detections, dtype=float).reshape(-1, 2)
    gt = np.asarray(truths, dtype=float).reshape(-1, 2)
    if det.shape != gt.shape:
        raise ValueError("detections and truths must align")
    if len(det) == 0:
        raise EmptySamples("no samples to evaluate")
    if not window_w > 0:
        raise ValueError("window_w must be positive")
    t = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=float)
    err = np.linalg.norm(det - gt, axis=1) / window_w
    # Round-off in the pixel chain must not fail exact detections at t = 0.
    values = (err[None, :] <= t[:, None] + PCK_ROUNDOFF).mean(axis=1)
    return PckCurve(thresholds=t, values=values)


def reprojection_error(
    rig: Sequence[CameraModel],
    detections,
    confidences=None,
    confidence_floor: float = 0.0,
) -> ReprojStats:
    """Triangulate every channel from all qualifying views (no RANSAC) and measure residuals.

    ``detections[view][channel]`` is a pixel ``(u, v)`` or ``None``. A view
    qualifies for a channel when its confidence is at least ``confidence_floor``.
    Channels seen by fewer than two qualifying views are listed in
    ``excluded`` instead of raising.
    """
    n_views = len(rig)
    n_channels = max((len(d) for d in detections), default=0)
    residuals: dict[tuple[int, int], float] = {}
    excluded: list[tuple[int, str]] = []
    for c in range(n_channels):
        views = []
        for k in range(n_views):
            if c >= len(detections[k]) or detections[k][c] is None:
                continue
            conf = 1.0 if confidences is None else confidences[k][c]
            if conf >= confidence_floor:
                views.append(k)
        try:
            X = triangulate_dlt([rig[k] for k in views], [detections[k][c] for k in views])
        except (InsufficientViews, IllConditioned) as exc:
            excluded.append((c, str(exc)))
            continue
        for k in views:
            try:
                residuals[(k, c)] = float(np.linalg.norm(project(rig[k], X) - np.asarray(detections[k][c], dtype=float)))
            except ValueError:
                residuals[(k, c)] = float("inf")
    r = np.array(list(residuals.values()))
    mean = float(r.mean()) if r.size else float("nan")
    std = float(r.std()) if r.size else float("nan")
    return ReprojStats(mean=mean, std=std, residuals=residuals, excluded=excluded)


def write_pck_csv(curve: PckCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "pck"])
        for t, v in zip(curve.thresholds, curve.values):
            w.writerow([f"{t:.4f}", repr(float(v))])


def write_residual_csv(stats: ReprojStats, path, view_ids: Sequence[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view", "channel", "residual_px"])
        for (k, c), r in sorted(stats.residuals.items()):
            w.writerow([view_ids[k] if view_ids else k, c, repr(r)])


def write_summary_json(stats: ReprojStats, path, extra: dict | None = None) -> None:
    doc = {"mean_px": stats.mean, "std_px": stats.std, "excluded_channels": [c for c, _ in stats.excluded]}
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def pck_svg(curve: PckCurve, width: int = 360, height: int = 240, margin: int = 32) -> str:
    """A bare polyline plot of the PCK curve."""
    t = np.asarray(curve.thresholds, dtype=float)
    v = np.asarray(curve.values, dtype=float)
    span = t.max() - t.min() if t.size > 1 and t.max() > t.min() else 1.0
    xs = margin + (t - t.min()) / span * (width - 2 * margin)
    ys = height - margin - v * (height - 2 * margin)
    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
    x0, y0, x1, y1 = margin, height - margin, width - margin, margin
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect width="100%" height="100%" fill="white"/>\n'
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>\n'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>\n'
        f'<text x="{width / 2:.0f}" y="{height - 6}" font-size="11" text-anchor="middle">normalized distance</text>\n'
        f'<text x="10" y="{margin - 10}" font-size="11">PCK</text>\n'
        f'<polyline fill="none" stroke="crimson" stroke-width="2" points="{pts}"/>\n'
        "</svg>\n"
    )
