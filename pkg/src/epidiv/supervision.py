"""Labeled, bootstrapping and total losses, triangulation pseudo-labels, and a
direct heatmap optimizer that shows the cross-view loss pulling views into
geometric agreement."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .divergence import DivergenceConfig, scene_loss
from .errors import (
    DepthNonPositive,
    EpipoleInImage,
    GazeParallelToBaseline,
    IllConditioned,
    InsufficientViews,
    NoApplicableTerm,
    NoConsensus,
    NonFiniteLoss,
    ShapeMismatch,
)
from .geometry import (
    DEFAULT_DEGENERACY_DEG,
    CameraModel,
    pair_degeneracy_check,
    project,
    ransac_triangulate,
    triangulate_dlt,
)
from .heatmap import Heatmap, RectifiedPairGeometry, rectified_pair
from .metrics import argmax_keypoints, reprojection_error
from .scene import SceneSnapshot

DEFAULT_MAX_SPREAD_DEG = 45.0
DEFAULT_U_OVERSAMPLE = 4
DEFAULT_V_OVERSAMPLE = 1


@dataclass(frozen=True)
class LossWeights:
    lambda_e: float = 5.0
    lambda_p: float = 1.0

    def __post_init__(self):
        if self.lambda_e < 0 or self.lambda_p < 0:
            raise ValueError("loss weights must be non-negative")


def _values(h) -> np.ndarray:
    return h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=float)


def labeled_loss(pred, z) -> tuple[float, np.ndarray]:
    """Sum of squared differences over every cell and its gradient ``2 (pred - z)``."""
    p, t = _values(pred), _values(z)
    if p.shape != t.shape:
        raise ShapeMismatch(f"prediction {p.shape} vs target {t.shape}")
    d = p - t
    return float(np.sum(d * d)), 2.0 * d


bootstrap_loss = labeled_loss


# ---------------------------------------------------------------- pairs


@dataclass
class PairSetReport:
    kept: list[tuple[int, int, float]] = field(default_factory=list)
    skipped: list[tuple[int, int, str]] = field(default_factory=list)


def build_pairs(
    snapshot: SceneSnapshot,
    degeneracy_deg: float = DEFAULT_DEGENERACY_DEG,
    max_spread_deg: float = DEFAULT_MAX_SPREAD_DEG,
    u_oversample: int = DEFAULT_U_OVERSAMPLE,
    v_oversample: int = DEFAULT_V_OVERSAMPLE,
    report: PairSetReport | None = None,
) -> list[tuple[int, int, RectifiedPairGeometry]]:
    """Ordered view pairs usable for cross-view supervision.

    The spread of epipolar lines over the full heatmap of view i decides:
    below ``degeneracy_deg`` the pair constrains a single direction, above
    ``max_spread_deg`` the epipole sits so close that rectification
    magnifies the heatmap far beyond its grid.
    """
    C, H, W = snapshot.shape
    cams = snapshot.heatmap_cameras()
    roi = (0.0, 0.0, W - 1.0, H - 1.0)
    report = report if report is not None else PairSetReport()
    pairs = []
    for i in range(len(cams)):
        for j in range(len(cams)):
            if i == j:
                continue
            spread = pair_degeneracy_check(cams[i], cams[j], roi)
            if spread < degeneracy_deg:
                report.skipped.append((i, j, f"degenerate: spread {spread:.2f} deg"))
                continue
            if spread > max_spread_deg:
                report.skipped.append((i, j, f"epipole near heatmap: spread {spread:.2f} deg"))
                continue
            try:
                geom = rectified_pair(
                    snapshot.camera(i),
                    snapshot.camera(j),
                    snapshot.views[i].crop,
                    snapshot.views[j].crop,
                    heatmap_size=(W, H),
                    u_oversample=u_oversample,
                    v_oversample=v_oversample,
                )
            except (EpipoleInImage, GazeParallelToBaseline) as exc:
                report.skipped.append((i, j, str(exc)))
                continue
            report.kept.append((i, j, spread))
            pairs.append((i, j, geom))
    return pairs


# ---------------------------------------------------------------- total loss


def total_loss(
    snapshot: SceneSnapshot,
    pairs,
    weights: LossWeights = LossWeights(),
    cfg: DivergenceConfig = DivergenceConfig(),
    heatmaps: Sequence | None = None,
    terms: dict | None = None,
) -> tuple[float, list[np.ndarray]]:
    """``L_L + lambda_e * L_E + lambda_p * L_B`` and per-view gradients.

    ``heatmaps`` overrides the snapshot's predictions. ``terms``, when given,
    receives the unweighted term values (``None`` for inapplicable terms).
    """
    preds = [_values(h) for h in (heatmaps if heatmaps is not None else [v.heatmap for v in snapshot.views])]
    grads = [np.zeros_like(p) for p in preds]
    labeled = [k for k, v in enumerate(snapshot.views) if v.label is not None]
    pseudo = [k for k, v in enumerate(snapshot.views) if v.pseudo_label is not None]
    if not labeled and not pairs and not pseudo:
        raise NoApplicableTerm("no labels, pseudo-labels or camera pairs")

    total = 0.0
    L_L = L_E = L_B = None
    if labeled:
        L_L = 0.0
        for k in labeled:
            loss, g = labeled_loss(preds[k], snapshot.views[k].label)
            L_L += loss
            grads[k] += g
        total += L_L
    if pairs:
        L_E, g_e = scene_loss(preds, pairs, cfg)
        total += weights.lambda_e * L_E
        for k, g in enumerate(g_e):
            grads[k] += weights.lambda_e * g
    if pseudo:
        L_B = 0.0
        for k in pseudo:
            loss, g = bootstrap_loss(preds[k], snapshot.views[k].pseudo_label)
            L_B += loss
            grads[k] += weights.lambda_p * g
        total += weights.lambda_p * L_B
    if terms is not None:
        terms.update(L_L=L_L, L_E=L_E, L_B=L_B)
    return total, grads


# ---------------------------------------------------------------- pseudo-labels


def _image_bounds(cam: CameraModel, image_size) -> tuple[float, float]:
    # Without an explicit size the principal point is taken as the image center.
    if image_size is not None:
        return float(image_size[0]), float(image_size[1])
    return 2.0 * cam.K[0, 2], 2.0 * cam.K[1, 2]


def _project_inside(cam: CameraModel, X, image_size) -> tuple[float, float] | None:
    try:
        u, v = project(cam, X)
    except DepthNonPositive:
        return None
    W, H = _image_bounds(cam, image_size)
    if not (0.0 <= u <= W and 0.0 <= v <= H):
        return None
    return float(u), float(v)


@dataclass
class SpatialAugmentResult:
    points3d: dict[int, np.ndarray]
    labels: list[dict[int, tuple[float, float]]]
    skipped: dict[int, str] = field(default_factory=dict)
    dropped_out_of_bounds: int = 0


def spatial_augment(
    rig: Sequence[CameraModel],
    annotations: Sequence[Mapping[int, tuple[float, float]]],
    min_views: int = 2,
    image_size: tuple[float, float] | None = None,
) -> SpatialAugmentResult:
    """Triangulate each annotated keypoint and project it into every camera.

    ``annotations[k]`` maps channel -> pixel for camera ``rig[k]``. Keypoints
    with fewer than ``min_views`` annotations are skipped and reported.
    """
    if len(annotations) != len(rig):
        raise ValueError("one annotation mapping per camera is required")
    channels = sorted({c for ann in annotations for c in ann})
    result = SpatialAugmentResult(points3d={}, labels=[{} for _ in rig])
    for c in channels:
        views = [k for k, ann in enumerate(annotations) if c in ann]
        try:
            if len(views) < max(min_views, 2):
                raise InsufficientViews(f"channel {c}: {len(views)} annotated views, need {max(min_views, 2)}")
            X = triangulate_dlt([rig[k] for k in views], [annotations[k][c] for k in views])
        except (InsufficientViews, IllConditioned) as exc:
            result.skipped[c] = str(exc)
            continue
        result.points3d[c] = X
        for k, cam in enumerate(rig):
            uv = _project_inside(cam, X, image_size)
            if uv is None:
                result.dropped_out_of_bounds += 1
            else:
                result.labels[k][c] = uv
    return result


@dataclass
class TrackAugmentResult:
    points3d: dict[int, dict[int, np.ndarray]]
    labels: dict[int, list[dict[int, tuple[float, float]]]]
    inliers: dict[int, dict[int, np.ndarray]]
    gaps: list[tuple[int, int, str]] = field(default_factory=list)


def track_augment(
    rig: Sequence[CameraModel],
    tracks,
    inlier_thresh: float = 2.0,
    seed: int = 0,
    iterations: int = 100,
    image_size: tuple[float, float] | None = None,
) -> TrackAugmentResult:
    """Per-frame RANSAC triangulation of externally tracked 2D points.

    ``tracks`` has shape ``(views, frames, channels, 2)`` (or ``(views, frames, 2)``
    for one channel); NaN marks a view that lost the track. Frames where a
    channel cannot be triangulated become gaps instead of errors.
    """
    T = np.asarray(tracks, dtype=float)
    if T.ndim == 3:
        T = T[:, :, None, :]
    if T.ndim != 4 or T.shape[0] != len(rig) or T.shape[-1] != 2:
        raise ShapeMismatch("tracks must be (views, frames, channels, 2) aligned with the rig")
    n_views, n_frames, n_channels, _ = T.shape
    result = TrackAugmentResult(points3d={}, labels={}, inliers={})
    for t in range(n_frames):
        result.points3d[t] = {}
        result.inliers[t] = {}
        result.labels[t] = [{} for _ in rig]
        for c in range(n_channels):
            views = [k for k in range(n_views) if np.all(np.isfinite(T[k, t, c]))]
            try:
                if len(views) < 2:
                    raise InsufficientViews(f"frame {t} channel {c}: {len(views)} tracked views")
                X, mask = ransac_triangulate(
                    [rig[k] for k in views], T[views, t, c], inlier_thresh, iterations, seed
                )
            except (InsufficientViews, NoConsensus) as exc:
                result.gaps.append((t, c, type(exc).__name__))
                continue
            full = np.zeros(n_views, dtype=bool)
            full[np.asarray(views)[mask]] = True
            result.points3d[t][c] = X
            result.inliers[t][c] = full
            for k, cam in enumerate(rig):
                uv = _project_inside(cam, X, image_size)
                if uv is not None:
                    result.labels[t][k][c] = uv
    return result


def annotation_records(labels, view_ids: Sequence[str], frame: int, source: str) -> list[dict]:
    """Flatten per-view ``{channel: (u, v)}`` mappings into JSON records."""
    if source not in ("manual", "spatial", "track"):
        raise ValueError(f"unknown annotation source {source!r}")
    return [
        {"frame": int(frame), "view": view_ids[k], "channel": int(c), "u": float(u), "v": float(v), "source": source}
        for k, per_view in enumerate(labels)
        for c, (u, v) in sorted(per_view.items())
    ]


def write_annotations(records: Sequence[dict], path) -> None:
    Path(path).write_text(json.dumps(list(records), indent=2) + "\n")


def read_annotations(path) -> list[dict]:
    return json.loads(Path(path).read_text())


def group_annotations(records, view_ids: Sequence[str], frame: int | None = None) -> list[dict[int, tuple[float, float]]]:
    """Inverse of :func:`annotation_records` for one frame."""
    index = {vid: k for k, vid in enumerate(view_ids)}
    out: list[dict[int, tuple[float, float]]] = [{} for _ in view_ids]
    for r in records:
        if frame is not None and r["frame"] != frame:
            continue
        if r["view"] not in index:
            raise ValueError(f"annotation references unknown view {r['view']!r}")
        out[index[r["view"]]][int(r["channel"])] = (float(r["u"]), float(r["v"]))
    return out


# ---------------------------------------------------------------- optimizer


@dataclass
class TrajectoryRow:
    step: int
    total: float
    L_L: float | None
    L_E: float | None
    L_B: float | None
    mean_reproj_px: float


@dataclass
class OptimizeResult:
    trajectory: list[TrajectoryRow]
    heatmaps: list[Heatmap]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def mean_reprojection(snapshot: SceneSnapshot, heatmaps) -> float:
    """Mean reprojection error (heatmap pixels) of the heatmaps' argmax detections."""
    cams = snapshot.heatmap_cameras()
    detections = [[uv for uv, _ in argmax_keypoints(h)] for h in heatmaps]
    return reprojection_error(cams, detections).mean


def optimize_heatmaps(
    snapshot: SceneSnapshot,
    pairs,
    weights: LossWeights = LossWeights(),
    steps: int = 100,
    step_size: float = 0.2,
    cfg: DivergenceConfig = DivergenceConfig(),
    value_range: tuple[float, float] = (1e-4, 0.9),
) -> OptimizeResult:
    """Plain gradient descent on logits ``L`` with heatmaps ``sigmoid(L)``.

    Initial heatmaps are the snapshot's predictions mapped affinely onto
    ``value_range``: a saturated logistic has almost no slope, so peaks at 1
    (or background at 0) could otherwise barely move. Row 0 of the trajectory holds the
    initial state; row ``k`` the state after ``k`` steps.
    """
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    lo, hi = value_range
    if not 0.0 < lo < hi < 1.0:
        raise ValueError("value_range must satisfy 0 < lo < hi < 1")
    P = [lo + (hi - lo) * v.heatmap.values for v in snapshot.views]
    logits = [np.log(p) - np.log1p(-p) for p in P]
    trajectory = []
    for step in range(steps + 1):
        P = [_sigmoid(L) for L in logits]
        terms: dict = {}
        total, grads = total_loss(snapshot, pairs, weights, cfg, heatmaps=P, terms=terms)
        if not np.isfinite(total):
            raise NonFiniteLoss(step, total)
        trajectory.append(TrajectoryRow(step, total, terms["L_L"], terms["L_E"], terms["L_B"], mean_reprojection(snapshot, P)))
        if step == steps:
            break
        for L, p, g in zip(logits, P, grads):
            L -= step_size * g * p * (1.0 - p)
    return OptimizeResult(trajectory=trajectory, heatmaps=[Heatmap(p) for p in P])


def write_trajectory_csv(trajectory: Sequence[TrajectoryRow], path) -> None:
    def cell(x):
        return "" if x is None else repr(float(x))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "total", "L_L", "L_E", "L_B", "mean_reproj_px"])
        for r in trajectory:
            w.writerow([r.step, cell(r.total), cell(r.L_L), cell(r.L_E), cell(r.L_B), cell(r.mean_reproj_px)])
