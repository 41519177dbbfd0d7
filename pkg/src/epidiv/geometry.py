"""Pinhole camera algebra: projection, epipolar geometry, rectification, triangulation."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CoincidentCenters,
    DegenerateLine,
    DepthNonPositive,
    GazeParallelToBaseline,
    IllConditioned,
    InsufficientViews,
    NoConsensus,
)

MIN_DEPTH = 1e-9
DEFAULT_DEGENERACY_DEG = 2.0


@dataclass(frozen=True, eq=False)
class CameraModel:
    """One calibrated pinhole view; projects world points as ``K R (X - C)``.

    ``R`` rotates world directions into the camera frame and ``C`` is the
    optical center in world units.
    """

    K: np.ndarray
    R: np.ndarray
    C: np.ndarray
    id: str = ""

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float).reshape(3, 3)
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        C = np.asarray(self.C, dtype=float).reshape(3)
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise ValueError("focal lengths must be positive")
        if abs(K[0, 1]) > 1e-12 or np.any(np.abs(K[2] - [0.0, 0.0, 1.0]) > 1e-12) or abs(K[1, 0]) > 1e-12:
            raise ValueError("intrinsics must be upper triangular with zero skew and K[2] = (0, 0, 1)")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        if not np.all(np.isfinite(C)):
            raise ValueError("center must be finite")
        for name, value in (("K", K), ("R", R), ("C", C)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def P(self) -> np.ndarray:
        """3x4 projection matrix."""
        return self.K @ self.R @ np.hstack([np.eye(3), -self.C[:, None]])

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction in world coordinates (third row of R)."""
        return self.R[2].copy()

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.K, other.K)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.C, other.C)
        )

    __hash__ = object.__hash__


def skew(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])


def homogenize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def project(cam: CameraModel, X) -> np.ndarray:
    """Project world point(s) ``X`` (shape (3,) or (N, 3)) to pixels.

    Raises DepthNonPositive if any point lies at or behind the camera plane.
    """
    X = np.asarray(X, dtype=float)
    Xc = (np.atleast_2d(X) - cam.C) @ cam.R.T
    depth = Xc[:, 2]
    if np.any(depth <= MIN_DEPTH):
        raise DepthNonPositive(f"point depth {depth.min():.3g} is not in front of camera {cam.id!r}")
    x = Xc @ cam.K.T
    uv = x[:, :2] / x[:, 2:3]
    return uv[0] if X.ndim == 1 else uv


def depth_of(cam: CameraModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (np.atleast_2d(X) - cam.C) @ cam.R[2]


def backproject(cam: CameraModel, x, depth: float) -> np.ndarray:
    """World point on the ray through pixel ``x`` at camera-frame depth ``depth``."""
    ray = np.linalg.solve(cam.K, homogenize(np.asarray(x, dtype=float)))
    return cam.C + depth * (cam.R.T @ (ray / ray[2]))


def fundamental_matrix(cam_i: CameraModel, cam_j: CameraModel) -> np.ndarray:
    """Unit-Frobenius F with ``x_j^T F x_i = 0`` for corresponding pixels."""
    baseline = cam_j.C - cam_i.C
    if np.linalg.norm(baseline) <= 1e-9:
        raise CoincidentCenters(f"cameras {cam_i.id!r} and {cam_j.id!r} share a center")
    F = np.linalg.inv(cam_j.K).T @ cam_j.R @ skew(baseline) @ cam_i.R.T @ np.linalg.inv(cam_i.K)
    return F / np.linalg.norm(F)


def normalize_line(line) -> np.ndarray:
    line = np.asarray(line, dtype=float)
    n = np.hypot(line[0], line[1])
    if n <= 1e-12 * max(1.0, np.abs(line).max()):
        raise DegenerateLine("line has no finite direction")
    return line / n


def epipolar_line(F, x_i) -> np.ndarray:
    """Normalized line ``F x_i`` in the second image, with ``a^2 + b^2 = 1``."""
    F = np.asarray(F, dtype=float)
    line = F @ homogenize(np.asarray(x_i, dtype=float))
    scale = np.linalg.norm(F) * np.linalg.norm(homogenize(np.asarray(x_i, dtype=float)))
    if np.hypot(line[0], line[1]) <= 1e-12 * scale:
        raise DegenerateLine(f"{x_i} is the epipole")
    return normalize_line(line)


def point_line_distance(line, x) -> float:
    line = np.asarray(line, dtype=float)
    return float(abs(line[0] * x[0] + line[1] * x[1] + line[2]))


def epipoles(F) -> tuple[np.ndarray, np.ndarray]:
    """Homogeneous epipoles ``(e_i, e_j)`` with ``F e_i = 0`` and ``F^T e_j = 0``."""
    U, _, Vt = np.linalg.svd(np.asarray(F, dtype=float))
    return Vt[-1], U[:, -1]


def rectifying_rotation(cam_i: CameraModel, cam_j: CameraModel) -> np.ndarray:
    """Rotation whose first row is the unit baseline ``C_j - C_i``.

    The second row is Gram-Schmidt'd from the mean optical axis crossed with the
    baseline, so both views stay close to their original orientation.
    """
    baseline = cam_j.C - cam_i.C
    norm = np.linalg.norm(baseline)
    if norm <= 1e-9:
        raise CoincidentCenters(f"cameras {cam_i.id!r} and {cam_j.id!r} share a center")
    r_x = baseline / norm
    seed = cam_i.optical_axis + cam_j.optical_axis
    seed_norm = np.linalg.norm(seed)
    if seed_norm <= 1e-12:
        raise GazeParallelToBaseline("optical axes cancel; no seed axis")
    seed = seed / seed_norm
    r_y = np.cross(seed, r_x)
    if np.linalg.norm(r_y) <= 1e-6:
        raise GazeParallelToBaseline("mean optical axis is collinear with the baseline")
    r_y = r_y / np.linalg.norm(r_y)
    r_z = np.cross(r_x, r_y)
    return np.vstack([r_x, r_y, r_z])


def _dlt_system(cams: Sequence[CameraModel], pixels) -> np.ndarray:
    rows = []
    for cam, (u, v) in zip(cams, np.asarray(pixels, dtype=float)):
        P = cam.P
        for row in (u * P[2] - P[0], v * P[2] - P[1]):
            rows.append(row / np.linalg.norm(row))
    return np.asarray(rows)


def triangulate_dlt(cams: Sequence[CameraModel], pixels) -> np.ndarray:
    """Linear least-squares triangulation from two or more views."""
    if len(cams) < 2:
        raise InsufficientViews(f"need at least 2 views, got {len(cams)}")
    if len(cams) != len(pixels):
        raise ValueError("cams and pixels must align")
    # Translate the system so the solution sits near the origin; keeps the
    # homogeneous coordinate well away from zero for distant rigs.
    origin = np.mean([c.C for c in cams], axis=0)
    A = _dlt_system(cams, pixels)
    T = np.eye(4)
    T[:3, 3] = origin
    A = A @ T
    _, s, Vt = np.linalg.svd(A)
    if s[-2] - s[-1] < 1e-12 * s[0]:
        raise IllConditioned("rays are (nearly) parallel; the solution is not unique")
    Xh = Vt[-1]
    if abs(Xh[3]) <= 1e-15 * np.linalg.norm(Xh):
        raise IllConditioned("triangulated point is at infinity")
    return Xh[:3] / Xh[3] + origin


def reprojection_residuals(cams: Sequence[CameraModel], pixels, X) -> np.ndarray:
    """Per-view pixel residual; ``inf`` where ``X`` is behind a camera."""
    out = np.empty(len(cams))
    for k, (cam, x) in enumerate(zip(cams, np.asarray(pixels, dtype=float))):
        try:
            out[k] = np.linalg.norm(project(cam, X) - x)
        except DepthNonPositive:
            out[k] = np.inf
    return out


def ransac_triangulate(
    cams: Sequence[CameraModel],
    pixels,
    inlier_thresh_px: float = 2.0,
    iterations: int = 100,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Robust triangulation from two-view hypotheses.

    Every view pair is tried when there are at most 8 views, otherwise
    ``iterations`` pairs are drawn from a generator seeded with ``seed``. The
    hypothesis with most inliers (ties: smallest summed inlier residual) is
    refined by DLT over its inliers.

    Returns:
        (point, inlier mask), the mask being the winning hypothesis' inliers.
    """
    n = len(cams)
    if n < 2:
        raise InsufficientViews(f"need at least 2 views, got {n}")
    pixels = np.asarray(pixels, dtype=float)
    if n <= 8:
        hypotheses = list(itertools.combinations(range(n), 2))
    else:
        rng = np.random.default_rng(seed)
        hypotheses = [tuple(sorted(rng.choice(n, size=2, replace=False))) for _ in range(iterations)]

    best_key, best_mask = None, None
    for a, b in hypotheses:
        try:
            X = triangulate_dlt([cams[a], cams[b]], pixels[[a, b]])
        except IllConditioned:
            continue
        res = reprojection_residuals(cams, pixels, X)
        mask = res < inlier_thresh_px
        # A hypothesis always supports its own two views.
        mask[[a, b]] = True
        key = (int(mask.sum()), -float(np.minimum(res[mask], 1e12).sum()))
        if best_key is None or key > best_key:
            best_key, best_mask = key, mask
    if best_mask is None or best_key[0] < 2:
        raise NoConsensus("no well-conditioned two-view hypothesis")
    idx = np.flatnonzero(best_mask)
    X = triangulate_dlt([cams[k] for k in idx], pixels[idx])
    return X, best_mask


def _line_angles_deg(lines) -> np.ndarray:
    return np.degrees(np.arctan2(lines[:, 1], lines[:, 0])) % 180.0


def _max_pairwise_spread(angles) -> float:
    spread = 0.0
    for a, b in itertools.combinations(angles, 2):
        d = abs(a - b) % 180.0
        spread = max(spread, min(d, 180.0 - d))
    return spread


def _lines_through_epipole(e, points) -> np.ndarray:
    lines = []
    for x in points:
        line = np.cross(e, homogenize(np.asarray(x, dtype=float)))
        scale = np.linalg.norm(e) * np.linalg.norm(homogenize(np.asarray(x, dtype=float)))
        if np.hypot(line[0], line[1]) <= 1e-12 * scale:
            raise DegenerateLine(f"{x} coincides with the epipole")
        lines.append(normalize_line(line))
    return np.asarray(lines)


def pair_degeneracy_check(cam_i: CameraModel, cam_j: CameraModel, roi) -> float:
    """Angular spread (degrees) of the pair's epipolar lines over an ROI of image i.

    ``roi`` is ``(u0, v0, u1, v1)``. The lines through the four corners and
    the epipole are compared; near-zero spread means the pair only constrains
    one direction across the ROI.
    """
    F = fundamental_matrix(cam_i, cam_j)
    e_i, _ = epipoles(F)
    u0, v0, u1, v1 = roi
    corners = [(u0, v0), (u1, v0), (u0, v1), (u1, v1)]
    return _max_pairwise_spread(_line_angles_deg(_lines_through_epipole(e_i, corners)))


def point_line_spread(cam_i: CameraModel, partners: Sequence[CameraModel], x_i) -> float:
    """Spread (degrees) of the epipolar lines through ``x_i`` induced by each partner.

    Zero spread means every partner constrains ``x_i`` along the same line,
    as happens for points on the plane of coplanar camera centers.
    """
    lines = []
    for cam_j in partners:
        e_i, _ = epipoles(fundamental_matrix(cam_i, cam_j))
        lines.append(_lines_through_epipole(e_i, [x_i])[0])
    return _max_pairwise_spread(_line_angles_deg(np.asarray(lines)))


def load_rig(path) -> list[CameraModel]:
    doc = json.loads(Path(path).read_text())
    return rig_from_dict(doc)


def rig_from_dict(doc: dict) -> list[CameraModel]:
    return [CameraModel(K=c["K"], R=c["R"], C=c["C"], id=str(c["id"])) for c in doc["cameras"]]


def rig_to_dict(rig: Sequence[CameraModel]) -> dict:
    return {
        "cameras": [
            {
                "id": cam.id,
                "K": [float(v) for v in cam.K.ravel()],
                "R": [float(v) for v in cam.R.ravel()],
                "C": [float(v) for v in cam.C],
            }
            for cam in rig
        ]
    }


def save_rig(rig: Sequence[CameraModel], path) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(rig), indent=2) + "\n")
