"""Epipolar divergence between flattened distributions, with analytic gradients.

The forward path per channel is::

    P_i --warp--> rectified P_i --row max--> q_i
    P_j --warp onto view i's rows--> rectified P_j --row max--> q_{j->i}
    loss = sum_v q_i(v) log((q_i(v) + eps) / (q_{j->i}(v) + eps))

View j is warped with its rows already mapped through ``v_j = (v_i - b) / a``,
so the transferred flat is sampled at view i's rows directly. The backward
pass retraces it: divergence partials, routing to each row's argmax cell,
transpose of the bilinear warp.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyPairSet, LengthMismatch, ShapeMismatch
from .heatmap import Heatmap, RectifiedPairGeometry, row_max

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class DivergenceConfig:
    epsilon: float = DEFAULT_EPSILON
    normalize: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class PairGradient:
    d_P_i: np.ndarray
    d_P_j: np.ndarray
    channel_losses: np.ndarray = field(default=None)


def _normalized(q):
    total = q.sum()
    scale = total if total > 0 else 1.0
    return q / scale, scale


def divergence_and_grad(q_i, q_ji, cfg: DivergenceConfig = DivergenceConfig()):
    """Return ``(D, dD/dq_i, dD/dq_ji)`` for the (optionally normalized) flats."""
    q_i = np.asarray(q_i, dtype=float)
    q_ji = np.asarray(q_ji, dtype=float)
    if q_i.shape != q_ji.shape:
        raise LengthMismatch(f"flat lengths differ: {q_i.shape} vs {q_ji.shape}")
    eps = cfg.epsilon
    if cfg.normalize:
        p, s_p = _normalized(q_i)
        r, s_r = _normalized(q_ji)
    else:
        p, r = q_i, q_ji
    log_ratio = np.log(p + eps) - np.log(r + eps)
    D = float(np.sum(p * log_ratio))
    g_p = log_ratio + p / (p + eps)
    g_r = -p / (r + eps)
    if cfg.normalize:
        # Jacobian of q -> q / sum(q), applied as a vector-Jacobian product.
        g_p = (g_p - np.dot(g_p, p)) / s_p
        g_r = (g_r - np.dot(g_r, r)) / s_r
    return D, g_p, g_r


def epipolar_divergence(q_i, q_ji, cfg: DivergenceConfig = DivergenceConfig()) -> float:
    return divergence_and_grad(q_i, q_ji, cfg)[0]


def _as_grid(P) -> np.ndarray:
    values = P.values if isinstance(P, Heatmap) else np.asarray(P, dtype=float)
    return values[None] if values.ndim == 2 else values


def pair_loss(P_i, P_j, geom: RectifiedPairGeometry, cfg: DivergenceConfig = DivergenceConfig()):
    """Cross-view loss of one ordered pair, summed over channels.

    Returns ``(loss, PairGradient)``. Gradients are subgradients at argmax
    ties (all mass goes to the smallest tied column).
    With row oversampling the unnormalized sum is scaled by ``1/v_oversample``
    so it stays a sum over native heatmap rows.
    """
    Pi = _as_grid(P_i)
    Pj = _as_grid(P_j)
    if Pi.shape[0] != Pj.shape[0]:
        raise ShapeMismatch("views disagree on channel count")
    W, H = geom.src_shape
    for P in (Pi, Pj):
        if P.shape[1:] != (H, W):
            raise ShapeMismatch(f"heatmap shape {P.shape[1:]} does not match geometry {(H, W)}")
    (Wi, Hi), (Wj, _) = geom.rect_shape_i, geom.rect_shape_ji
    Mi, Mj = geom.warp_i, geom.warp_ji

    dPi = np.zeros_like(Pi)
    dPj = np.zeros_like(Pj)
    losses = np.zeros(Pi.shape[0])
    rows = np.arange(Hi)
    weight = 1.0 if cfg.normalize else 1.0 / geom.v_oversample
    for c in range(Pi.shape[0]):
        flat_i = row_max(np.clip(Mi @ Pi[c].ravel(), 0.0, 1.0).reshape(Hi, Wi))
        flat_ji = row_max(np.clip(Mj @ Pj[c].ravel(), 0.0, 1.0).reshape(Hi, Wj))
        losses[c], g_i, g_ji = divergence_and_grad(flat_i.values, flat_ji.values, cfg)
        losses[c] *= weight

        g_rect = np.zeros((Hi, Wi))
        g_rect[rows, flat_i.argmax] = weight * g_i
        dPi[c] = (Mi.T @ g_rect.ravel()).reshape(H, W)

        g_rect = np.zeros((Hi, Wj))
        g_rect[rows, flat_ji.argmax] = weight * g_ji
        dPj[c] = (Mj.T @ g_rect.ravel()).reshape(H, W)
    return float(losses.sum()), PairGradient(dPi, dPj, losses)


def flatten_pair(P_i, P_j, geom: RectifiedPairGeometry, channel: int = 0):
    """Forward-only helper returning ``(q_i, q_ji)`` for one channel."""
    (Wi, Hi), (Wj, _) = geom.rect_shape_i, geom.rect_shape_ji
    Pi = _as_grid(P_i)[channel]
    Pj = _as_grid(P_j)[channel]
    q_i = row_max(np.clip(geom.warp_i @ Pi.ravel(), 0.0, 1.0).reshape(Hi, Wi)).values
    q_ji = row_max(np.clip(geom.warp_ji @ Pj.ravel(), 0.0, 1.0).reshape(Hi, Wj)).values
    return q_i, q_ji


def scene_loss(
    heatmaps: Sequence,
    pairs: Sequence[tuple[int, int, RectifiedPairGeometry]],
    cfg: DivergenceConfig = DivergenceConfig(),
    records: list | None = None,
):
    """Sum of :func:`pair_loss` over ordered pairs; gradients accumulate per view.

    If ``records`` is given, ``(i, j, channel, loss)`` tuples are appended.
    """
    if not pairs:
        raise EmptyPairSet("no camera pairs to supervise")
    grids = [_as_grid(h) for h in heatmaps]
    grads = [np.zeros_like(g) for g in grids]
    total = 0.0
    for i, j, geom in pairs:
        loss, g = pair_loss(grids[i], grids[j], geom, cfg)
        total += loss
        grads[i] += g.d_P_i
        grads[j] += g.d_P_j
        if records is not None:
            records.extend((i, j, c, float(v)) for c, v in enumerate(g.channel_losses))
    return total, grads


def write_loss_csv(records, path, view_ids: Sequence[str] | None = None) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_i", "pair_j", "channel", "loss"])
        for i, j, c, loss in records:
            if view_ids is not None:
                i, j = view_ids[i], view_ids[j]
            w.writerow([i, j, c, repr(float(loss))])
