"""Keypoint heatmaps: label synthesis, crop/rectification homographies, warping
and row-wise flattening.

Heatmap grids are stored channel-outermost and row-major, i.e. ``values[c, v, u]``
is the probability of keypoint ``c`` at column ``u`` and row ``v``. Integer
indices are pixel centers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EpipoleInImage, ShapeMismatch, SingularHomography, ZeroScale
from .geometry import CameraModel, rectifying_rotation, skew

HEATMAP_SIZE = 46
DEFAULT_SIGMA = 1.5


class Heatmap:
    """A ``C x H x W`` stack of keypoint probabilities, clamped to [0, 1]."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise ShapeMismatch(f"expected (C, H, W) values, got shape {values.shape}")
        if values.shape[1] < 2 or values.shape[2] < 2:
            raise ShapeMismatch("heatmaps need W, H >= 2")
        self.values = np.clip(values, 0.0, 1.0)

    @property
    def C(self) -> int:
        return self.values.shape[0]

    @property
    def H(self) -> int:
        return self.values.shape[1]

    @property
    def W(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __getitem__(self, c) -> np.ndarray:
        return self.values[c]

    def __repr__(self):
        return f"Heatmap(W={self.W}, H={self.H}, C={self.C})"


def gaussian_label(keypoints, sigma: float = DEFAULT_SIGMA, W: int = HEATMAP_SIZE, H: int = HEATMAP_SIZE) -> Heatmap:
    """Unnormalized Gaussian bumps (peak 1) at each channel's keypoint.

    ``keypoints`` holds one ``(u, v)`` per channel, or ``None`` for an absent
    keypoint, which yields an all-zero channel.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    uu, vv = np.meshgrid(np.arange(W, dtype=float), np.arange(H, dtype=float))
    out = np.zeros((len(keypoints), H, W))
    for c, kp in enumerate(keypoints):
        if kp is None:
            continue
        d2 = (uu - kp[0]) ** 2 + (vv - kp[1]) ** 2
        out[c] = np.exp(-d2 / (2.0 * sigma**2))
    return Heatmap(out)


@dataclass(frozen=True)
class CropTransform:
    """Bounding-box crop of an image followed by resizing to the heatmap grid.

    ``(u_x, u_y)`` is the box's top-left corner and ``h_b`` its height in the
    original image, ``(w_x, w_y)`` the box offset inside the cropped image,
    ``h_c`` the cropped-image height and ``h_h`` the heatmap height.
    """

    u_x: float
    u_y: float
    h_b: float
    w_x: float = 0.0
    w_y: float = 0.0
    h_c: float = 368.0
    h_h: float = float(HEATMAP_SIZE)

    def __post_init__(self):
        if not (self.h_b > 0 and self.h_c > 0 and self.h_h > 0):
            raise ValueError("h_b, h_c and h_h must be positive")

    @property
    def s(self) -> float:
        return self.h_c / self.h_b

    @property
    def s_h(self) -> float:
        return self.h_h / self.h_c

    def image_to_crop(self) -> np.ndarray:
        s = self.s
        return np.array([[s, 0.0, self.w_x - s * self.u_x], [0.0, s, self.w_y - s * self.u_y], [0.0, 0.0, 1.0]])

    def crop_to_heatmap(self) -> np.ndarray:
        return np.diag([self.s_h, self.s_h, 1.0])

    def image_to_heatmap(self) -> np.ndarray:
        return self.crop_to_heatmap() @ self.image_to_crop()

    def heatmap_camera(self, cam: CameraModel) -> CameraModel:
        """The pinhole camera whose pixels are this crop's heatmap cells."""
        return CameraModel(K=self.image_to_heatmap() @ cam.K, R=cam.R, C=cam.C, id=cam.id)

    def to_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "CropTransform":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls) if f.name in d})


class CropChain(NamedTuple):
    image_to_crop: np.ndarray
    crop_to_heatmap: np.ndarray
    crop_to_image: np.ndarray
    heatmap_to_crop: np.ndarray


def crop_to_heatmap_chain(t: CropTransform) -> CropChain:
    cHb = t.image_to_crop()
    hHc = t.crop_to_heatmap()
    s = t.s
    cHb_inv = np.array([[1.0 / s, 0.0, t.u_x - t.w_x / s], [0.0, 1.0 / s, t.u_y - t.w_y / s], [0.0, 0.0, 1.0]])
    hHc_inv = np.diag([1.0 / t.s_h, 1.0 / t.s_h, 1.0])
    return CropChain(cHb, hHc, cHb_inv, hHc_inv)


def apply_homography(Hm, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    p = np.atleast_2d(pts) @ Hm[:, :2].T + Hm[:, 2]
    out = p[:, :2] / p[:, 2:3]
    return out[0] if pts.ndim == 1 else out


# ---------------------------------------------------------------- rectification


@dataclass(eq=False)
class RectifiedPairGeometry:
    """Everything needed to flatten two heatmaps onto shared epipolar rows.

    ``chain_i``/``chain_j`` map heatmap pixels to rectified-heatmap pixels.
    Rectified rows correspond through ``v_i = a * v_j + b``. Each rectified
    grid is just large enough to hold its whole warped heatmap, so the two
    grids generally differ in size; shapes are ``(width, height)``.
    """

    R_n: np.ndarray
    H_r_i: np.ndarray
    H_r_j: np.ndarray
    chain_i: np.ndarray
    chain_j: np.ndarray
    F_rect: np.ndarray
    a: float
    b: float
    rect_crop_i: CropTransform
    rect_crop_j: CropTransform
    src_shape: tuple[int, int]
    rect_shape_i: tuple[int, int]
    rect_shape_j: tuple[int, int]
    u_oversample: int = 1
    v_oversample: int = 1
    K_i: np.ndarray = field(default=None, repr=False)
    K_j: np.ndarray = field(default=None, repr=False)

    @property
    def row_map_i_to_j(self) -> tuple[float, float]:
        """``(scale, offset)`` giving the j-row that matches i-row ``v``."""
        return 1.0 / self.a, -self.b / self.a

    @property
    def F_rect_heatmap(self) -> np.ndarray:
        """Fundamental matrix between the two rectified heatmaps (pixel units)."""
        A_i = _rect_heatmap_affine(self.rect_crop_i, self.u_oversample, self.v_oversample)
        A_j = _rect_heatmap_affine(self.rect_crop_j, self.u_oversample, self.v_oversample)
        F = np.linalg.inv(A_j).T @ self.F_rect @ np.linalg.inv(A_i)
        return F / np.linalg.norm(F)

    @cached_property
    def warp_i(self) -> sp.csr_matrix:
        return warp_matrix(self.chain_i, self.src_shape, self.rect_shape_i)

    @cached_property
    def warp_j(self) -> sp.csr_matrix:
        return warp_matrix(self.chain_j, self.src_shape, self.rect_shape_j)

    @property
    def chain_ji(self) -> np.ndarray:
        """View j's rectified heatmap with its rows moved onto view i's rows.

        Row ``v`` of this grid is row ``(v - b) / a`` of view j's rectified
        grid, so its row maxima are the transferred flat sampled exactly at
        view i's rows rather than interpolated between j's rows.
        """
        return np.array([[1.0, 0.0, 0.0], [0.0, self.a, self.b], [0.0, 0.0, 1.0]]) @ self.chain_j

    @property
    def rect_shape_ji(self) -> tuple[int, int]:
        return self.rect_shape_j[0], self.rect_shape_i[1]

    @cached_property
    def warp_ji(self) -> sp.csr_matrix:
        return warp_matrix(self.chain_ji, self.src_shape, self.rect_shape_ji)


def rectified_fundamental(K_i, K_j) -> np.ndarray:
    """Closed-form F between two images rectified to a common rotation."""
    fy_i, py_i = K_i[1, 1], K_i[1, 2]
    fy_j, py_j = K_j[1, 1], K_j[1, 2]
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, -1.0 / fy_j],
            [0.0, 1.0 / fy_i, py_j / fy_j - py_i / fy_i],
        ]
    )


def row_rescaling(K_i, K_j, rect_crop_i: CropTransform, rect_crop_j: CropTransform) -> tuple[float, float]:
    """Affine row map ``v_i = a v_j + b`` between rectified heatmaps.

    Reduces to ``a = s_i f_i / (s_j f_j)`` and
    ``b = s_h s_i ((u_j - p_j) f_i / f_j + p_i - u_i)`` for equal heatmap scales and
    zero crop offsets; crop offsets ``w_y`` enter as shifts of the box origin.
    """
    fi, pi = K_i[1, 1], K_i[1, 2]
    fj, pj = K_j[1, 1], K_j[1, 2]
    ci, cj = rect_crop_i, rect_crop_j
    ui = ci.u_y - ci.w_y / ci.s
    uj = cj.u_y - cj.w_y / cj.s
    a = (ci.s_h * ci.s * fi) / (cj.s_h * cj.s * fj)
    b = ci.s_h * ci.s * ((uj - pj) * fi / fj + pi - ui)
    return a, b


def _rect_heatmap_affine(crop: CropTransform, u_oversample: int, v_oversample: int = 1) -> np.ndarray:
    return np.diag([float(u_oversample), float(v_oversample), 1.0]) @ crop.image_to_heatmap()


MAX_RECT_FACTOR = 8


def _rectified_window(crop: CropTransform, H_r: np.ndarray, src_shape, u_oversample: int, v_oversample: int):
    """Rectified crop with the original scale, placed at the warped heatmap's bounding box.

    Returns ``(crop, (width, height))`` of the oversampled rectified grid.
    """
    W, H = src_shape
    corners = np.array([[0, 0], [W - 1, 0], [0, H - 1], [W - 1, H - 1]], dtype=float)
    p = apply_homography(H_r @ np.linalg.inv(crop.image_to_heatmap()), corners)
    lo, hi = p.min(axis=0), p.max(axis=0)
    s, s_h = crop.s, crop.s_h
    rect = CropTransform(
        u_x=lo[0] + crop.w_x / s, u_y=lo[1] + crop.w_y / s, h_b=crop.h_b, w_x=crop.w_x, w_y=crop.w_y, h_c=crop.h_c, h_h=crop.h_h
    )
    extent = s_h * s * (hi - lo)
    if np.any(extent > MAX_RECT_FACTOR * max(W, H)):
        raise EpipoleInImage("rectification stretches the heatmap beyond the supported size (epipole too close)")
    shape = (int(np.ceil(u_oversample * extent[0] - 1e-9)) + 1, int(np.ceil(v_oversample * extent[1] - 1e-9)) + 1)
    return rect, shape


def rectified_pair(
    cam_i: CameraModel,
    cam_j: CameraModel,
    crop_i: CropTransform,
    crop_j: CropTransform,
    heatmap_size: tuple[int, int] | None = None,
    u_oversample: int = 1,
    v_oversample: int = 1,
) -> RectifiedPairGeometry:
    """Build the heatmap -> rectified-heatmap chains and row correspondence.

    Both views are rotated to the shared frame whose x axis is the baseline;
    each keeps its own intrinsics and crop scale. ``u_oversample`` and
    ``v_oversample`` sample the rectified grids more densely along u and v.
    """
    if heatmap_size is None:
        heatmap_size = (int(round(crop_i.h_h)), int(round(crop_i.h_h)))
    W, H = heatmap_size
    R_n = rectifying_rotation(cam_i, cam_j)
    corners = np.array([[0, 0, 1], [W - 1, 0, 1], [0, H - 1, 1], [W - 1, H - 1, 1]], dtype=float)

    out = {}
    for tag, cam, crop in (("i", cam_i, crop_i), ("j", cam_j, crop_j)):
        K_inv = np.linalg.inv(cam.K)
        H_r = cam.K @ R_n @ cam.R.T @ K_inv
        w = (H_r @ np.linalg.inv(crop.image_to_heatmap()) @ corners.T)[2]
        if np.any(w <= 1e-9):
            raise EpipoleInImage(f"rectification of view {cam.id!r} folds the heatmap domain (epipole too close)")
        rect_crop, shape = _rectified_window(crop, H_r, heatmap_size, u_oversample, v_oversample)
        chain = _rect_heatmap_affine(rect_crop, u_oversample, v_oversample) @ H_r @ np.linalg.inv(crop.image_to_heatmap())
        out[tag] = (H_r, rect_crop, chain, shape)

    (H_r_i, rc_i, chain_i, shape_i), (H_r_j, rc_j, chain_j, shape_j) = out["i"], out["j"]
    a, b = row_rescaling(cam_i.K, cam_j.K, rc_i, rc_j)
    b *= v_oversample
    return RectifiedPairGeometry(
        R_n=R_n,
        H_r_i=H_r_i,
        H_r_j=H_r_j,
        chain_i=chain_i,
        chain_j=chain_j,
        F_rect=rectified_fundamental(cam_i.K, cam_j.K),
        a=a,
        b=b,
        rect_crop_i=rc_i,
        rect_crop_j=rc_j,
        src_shape=(W, H),
        rect_shape_i=shape_i,
        rect_shape_j=shape_j,
        u_oversample=u_oversample,
        v_oversample=v_oversample,
        K_i=cam_i.K,
        K_j=cam_j.K,
    )


def rectified_fundamental_reference(K_i, K_j) -> np.ndarray:
    """``K_j^-T [e_x]_x K_i^-1``, the product form of :func:`rectified_fundamental`."""
    return np.linalg.inv(K_j).T @ skew([1.0, 0.0, 0.0]) @ np.linalg.inv(K_i)


# ---------------------------------------------------------------- warping


def _bilinear_taps(x, y, W: int, H: int):
    """Indices and weights of the four bilinear taps; out-of-grid taps weigh 0."""
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    idx, wts = [], []
    for dx, dy, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
        idx.append(np.where(ok, yi * W + xi, 0))
        wts.append(np.where(ok, w, 0.0))
    return np.asarray(idx), np.asarray(wts)


def bilinear_sample(grid, x, y) -> np.ndarray:
    """Sample ``grid[v, u]`` at real positions with zero padding outside."""
    grid = np.asarray(grid, dtype=float)
    H, W = grid.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    finite = np.isfinite(x) & np.isfinite(y)
    xs = np.where(finite, x, -10.0)
    ys = np.where(finite, y, -10.0)
    idx, wts = _bilinear_taps(xs.ravel(), ys.ravel(), W, H)
    flat = grid.ravel()
    return (wts * flat[idx]).sum(axis=0).reshape(x.shape)


def warp_matrix(Hm, src_shape, out_shape) -> sp.csr_matrix:
    """Sparse operator ``M`` with ``warp(P) = M @ P.ravel()`` (inverse mapping, bilinear).

    Shapes are ``(W, H)``. Output pixels whose pre-image lies behind the
    homography's line at infinity read zero.
    """
    Hm = np.asarray(Hm, dtype=float)
    if abs(np.linalg.det(Hm)) <= 1e-12 * max(1.0, np.abs(Hm).max() ** 3):
        raise SingularHomography("homography is not invertible")
    W, H = src_shape
    oW, oH = out_shape
    Hinv = np.linalg.inv(Hm)
    uu, vv = np.meshgrid(np.arange(oW, dtype=float), np.arange(oH, dtype=float))
    p = Hinv @ np.vstack([uu.ravel(), vv.ravel(), np.ones(uu.size)])
    front = p[2] > 1e-12
    w = np.where(front, p[2], 1.0)
    x = np.where(front, p[0] / w, -10.0)
    y = np.where(front, p[1] / w, -10.0)
    near = np.flatnonzero((x > -1.0) & (x < W) & (y > -1.0) & (y < H))
    idx, wts = _bilinear_taps(x[near], y[near], W, H)
    rows = np.broadcast_to(near, idx.shape)
    keep = wts != 0.0
    M = sp.csr_matrix((wts[keep], (rows[keep], idx[keep])), shape=(oW * oH, W * H))
    M.sum_duplicates()
    return M


def warp(channel, Hm, outW: int, outH: int, matrix: sp.csr_matrix | None = None) -> np.ndarray:
    """Inverse-homography warp of one channel: ``out(x) = P(Hm^-1 x)``."""
    channel = np.asarray(channel, dtype=float)
    H, W = channel.shape
    if matrix is None:
        matrix = warp_matrix(Hm, (W, H), (outW, outH))
    out = matrix @ channel.ravel()
    return np.clip(out, 0.0, 1.0).reshape(outH, outW)


# ---------------------------------------------------------------- flattening


@dataclass
class FlatDistribution:
    """Per-row maxima of a rectified heatmap; ``argmax`` is ``None`` for resampled flats."""

    values: np.ndarray
    argmax: np.ndarray | None = None

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def row_max(grid) -> FlatDistribution:
    """Max over each row, ties resolved to the smallest column."""
    grid = np.asarray(grid, dtype=float)
    arg = np.argmax(grid, axis=1)
    return FlatDistribution(values=grid[np.arange(grid.shape[0]), arg], argmax=arg)


def resample_matrix(n: int, a: float, b: float, outH: int) -> np.ndarray:
    """Dense ``(outH, n)`` linear-interpolation operator sampling at ``a v + b``."""
    if a == 0:
        raise ZeroScale("row rescaling factor must be nonzero")
    pos = a * np.arange(outH, dtype=float) + b
    M = np.zeros((outH, n))
    ok = (pos >= 0.0) & (pos <= n - 1)
    v = np.flatnonzero(ok)
    i0 = np.minimum(np.floor(pos[ok]).astype(np.int64), n - 2)
    t = pos[ok] - i0
    M[v, i0] = 1.0 - t
    M[v, i0 + 1] += t
    return M


def resample_flat(q, a: float, b: float, outH: int) -> FlatDistribution:
    """``out[v] = q(a v + b)`` by linear interpolation, zero outside ``[0, len(q) - 1]``."""
    values = np.asarray(q, dtype=float)
    return FlatDistribution(values=resample_matrix(len(values), a, b, outH) @ values)


# ---------------------------------------------------------------- oracle


def transfer_at(P_j, F, points, samples_per_line: int | None = None) -> np.ndarray:
    """Max of ``P_j`` along the epipolar line ``F x`` of each view-i point ``x``.

    Lines are clipped to ``P_j``'s domain and sampled uniformly with bilinear
    interpolation. Points whose line is undefined or misses the domain get 0.
    """
    P_j = np.asarray(P_j, dtype=float)
    H, W = P_j.shape
    n = samples_per_line or 4 * max(W, H) + 1
    if n < 4 * max(W, H):
        raise ValueError("samples_per_line must be at least 4 * max(W, H)")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lines = np.asarray(F, dtype=float) @ np.vstack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
    la, lb, lc = lines
    norm = np.hypot(la, lb)
    valid = norm > 1e-12 * np.linalg.norm(lines, axis=0).clip(min=1e-300)
    norm = np.where(valid, norm, 1.0)
    la, lb, lc = la / norm, lb / norm, lc / norm
    p0x, p0y = -lc * la, -lc * lb
    dx, dy = -lb, la

    t_lo = np.full(len(pts), -np.inf)
    t_hi = np.full(len(pts), np.inf)
    for p0, d, hi in ((p0x, dx, W - 1.0), (p0y, dy, H - 1.0)):
        moving = np.abs(d) > 1e-12
        safe = np.where(moving, d, 1.0)
        ta = (0.0 - p0) / safe
        tb = (hi - p0) / safe
        t_lo = np.where(moving, np.maximum(t_lo, np.minimum(ta, tb)), t_lo)
        t_hi = np.where(moving, np.minimum(t_hi, np.maximum(ta, tb)), t_hi)
        inside = (p0 >= 0.0) & (p0 <= hi)
        valid &= moving | inside
    valid &= t_lo <= t_hi
    t_lo = np.where(valid, t_lo, 0.0)
    t_hi = np.where(valid, t_hi, 0.0)

    frac = np.linspace(0.0, 1.0, n)
    t = t_lo[:, None] + (t_hi - t_lo)[:, None] * frac[None, :]
    # Also sample where the line crosses grid rows and columns, where the
    # interpolant along the line has its kinks.
    crossings = []
    for p0, d, size in ((p0x, dx, W), (p0y, dy, H)):
        safe = np.where(np.abs(d) > 1e-12, d, np.inf)
        crossings.append((np.arange(size, dtype=float)[None, :] - p0[:, None]) / safe[:, None])
    tc = np.concatenate(crossings, axis=1)
    tc = np.where(np.isfinite(tc), np.clip(tc, t_lo[:, None], t_hi[:, None]), t_lo[:, None])
    t = np.concatenate([t, tc], axis=1)
    xs = p0x[:, None] + t * dx[:, None]
    ys = p0y[:, None] + t * dy[:, None]
    best = bilinear_sample(P_j, xs, ys).max(axis=1)
    return np.where(valid, best, 0.0)


def direct_transfer_oracle(P_j, F, outW: int, outH: int, samples_per_line: int | None = None) -> np.ndarray:
    """Transfer by brute force onto a full ``outH x outW`` view-i grid.

    ``F`` maps pixels of the output (view i) grid to lines in ``P_j``.
    """
    uu, vv = np.meshgrid(np.arange(outW, dtype=float), np.arange(outH, dtype=float))
    return transfer_at(P_j, F, np.column_stack([uu.ravel(), vv.ravel()]), samples_per_line).reshape(outH, outW)


def oracle_flat(P_j, F, geom: RectifiedPairGeometry, samples_per_line: int | None = None):
    """Brute-force counterpart of the transferred flat on view i's rectified rows.

    The oracle is constant along epipolar lines, so each rectified row of
    view i is represented by one point: the middle of the row's span inside
    view i's heatmap. Returns ``(values, covered)``; rows that miss the
    heatmap read 0 and are not covered.
    """
    W, H = geom.src_shape
    Wr, Hr = geom.rect_shape_i
    inv = np.linalg.inv(geom.chain_i)
    u = np.arange(Wr, dtype=float)
    out = np.zeros(Hr)
    covered = np.zeros(Hr, dtype=bool)
    mids = []
    rows = []
    for v in range(Hr):
        src = apply_homography(inv, np.column_stack([u, np.full(Wr, float(v))]))
        inside = (src[:, 0] >= 0) & (src[:, 0] <= W - 1) & (src[:, 1] >= 0) & (src[:, 1] <= H - 1)
        hit = np.flatnonzero(inside)
        if hit.size:
            mids.append(apply_homography(inv, np.array([0.5 * (u[hit[0]] + u[hit[-1]]), float(v)])))
            rows.append(v)
    if rows:
        out[rows] = transfer_at(P_j, F, np.array(mids), samples_per_line)
        covered[rows] = True
    return out, covered


# ---------------------------------------------------------------- tensor files


def save_heatmap(h: Heatmap, path) -> None:
    """Write ``<path>.json`` (manifest) and ``<path>.f32`` (little-endian payload)."""
    path = Path(path)
    manifest = {"W": h.W, "H": h.H, "C": h.C, "dtype": "f32", "order": "row-major, channel-outermost"}
    path.with_suffix(".json").write_text(json.dumps(manifest) + "\n")
    path.with_suffix(".f32").write_bytes(np.ascontiguousarray(h.values, dtype="<f4").tobytes())


def load_heatmap(path) -> Heatmap:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("dtype") != "f32":
        raise ValueError(f"unsupported dtype {manifest.get('dtype')!r}")
    raw = np.frombuffer(path.with_suffix(".f32").read_bytes(), dtype="<f4")
    shape = (manifest["C"], manifest["H"], manifest["W"])
    if raw.size != np.prod(shape):
        raise ShapeMismatch(f"payload holds {raw.size} floats, manifest expects {np.prod(shape)}")
    return Heatmap(raw.reshape(shape).astype(float))


def channel_stack(channels: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(c, dtype=float) for c in channels])
