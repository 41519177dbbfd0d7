"""Synthetic camera rigs and keypoint scenes with controlled noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, backproject, depth_of, project
from .heatmap import DEFAULT_SIGMA, HEATMAP_SIZE, CropTransform, Heatmap, apply_homography, gaussian_label
from .scene import SceneSnapshot, ViewData


@dataclass(frozen=True)
class RigSpec:
    count: int = 4
    placement: str = "ring"  # "ring" or "sphere"
    radius: float = 3.0
    height_jitter: float = 0.5
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    focal_range: tuple[float, float] = (800.0, 1200.0)
    aspect_jitter: float = 0.0
    principal_jitter: float = 0.0
    image_size: tuple[int, int] = (1280, 960)
    seed: int = 0

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("a rig needs at least 2 cameras")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.placement not in ("ring", "sphere"):
            raise ValueError(f"unknown placement {self.placement!r}")
        lo, hi = self.focal_range
        if not 0 < lo <= hi:
            raise ValueError("focal_range must satisfy 0 < min <= max")


@dataclass(frozen=True)
class NoiseSpec:
    jitter_sigma: float = 0.0
    swap_prob: float = 0.0
    symmetric_pairs: tuple[tuple[int, int], ...] = ()
    clutter_count: int = 0
    clutter_amplitude: float = 0.5

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if not 0.0 <= self.swap_prob <= 1.0:
            raise ValueError("swap_prob must be in [0, 1]")
        if not 0.0 <= self.clutter_amplitude <= 1.0:
            raise ValueError("clutter_amplitude must be in [0, 1]")


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation with +z toward ``target`` and image y pointing down."""
    z = np.asarray(target, dtype=float) - np.asarray(center, dtype=float)
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-6:
        x = np.cross(z, [0.0, 1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def make_rig(spec: RigSpec) -> list[CameraModel]:
    rng = np.random.default_rng(spec.seed)
    target = np.asarray(spec.target, dtype=float)
    W, H = spec.image_size
    cams = []
    for k in range(spec.count):
        if spec.placement == "ring":
            phi = 2.0 * np.pi * k / spec.count
            h = rng.uniform(-spec.height_jitter, spec.height_jitter) if spec.height_jitter > 0 else 0.0
            C = target + np.array([spec.radius * np.cos(phi), spec.radius * np.sin(phi), h])
        else:
            phi = rng.uniform(0.0, 2.0 * np.pi)
            elev = np.arcsin(rng.uniform(np.sin(np.radians(-20.0)), np.sin(np.radians(60.0))))
            C = target + spec.radius * np.array([np.cos(elev) * np.cos(phi), np.cos(elev) * np.sin(phi), np.sin(elev)])
        f = rng.uniform(*spec.focal_range)
        fy = f * (1.0 + rng.uniform(-spec.aspect_jitter, spec.aspect_jitter)) if spec.aspect_jitter > 0 else f
        px = W / 2.0 + (rng.uniform(-spec.principal_jitter, spec.principal_jitter) if spec.principal_jitter > 0 else 0.0)
        py = H / 2.0 + (rng.uniform(-spec.principal_jitter, spec.principal_jitter) if spec.principal_jitter > 0 else 0.0)
        K = np.array([[f, 0.0, px], [0.0, fy, py], [0.0, 0.0, 1.0]])
        cams.append(CameraModel(K=K, R=look_at(C, target), C=C, id=f"cam{k}"))
    return cams


def subject_crop(
    cam: CameraModel,
    center3d,
    extent: float = 1.0,
    heatmap_size: int = HEATMAP_SIZE,
    h_c: float = 368.0,
    anchor3d=None,
) -> CropTransform:
    """Square box spanning ``extent`` world units at the subject's depth.

    The subject center lands on the heatmap's middle. With ``anchor3d`` the box
    is nudged (by under half a cell) so that point projects onto an integer
    heatmap cell.
    """
    uv = project(cam, center3d)
    depth = float(depth_of(cam, center3d)[0])
    h_b = cam.K[1, 1] * extent / depth
    scale = (h_c / h_b) * (heatmap_size / h_c)
    mid = (heatmap_size - 1) / 2.0
    u_x = uv[0] - mid / scale
    u_y = uv[1] - mid / scale
    crop = CropTransform(u_x=u_x, u_y=u_y, h_b=h_b, h_c=h_c, h_h=float(heatmap_size))
    if anchor3d is not None:
        x = apply_homography(crop.image_to_heatmap(), project(cam, anchor3d))
        shift = (x - np.round(x)) / scale
        crop = CropTransform(u_x=u_x + shift[0], u_y=u_y + shift[1], h_b=h_b, h_c=h_c, h_h=float(heatmap_size))
    return crop


def ray_gaussian(cam: CameraModel, points3d, scale: float, W: int = HEATMAP_SIZE, H: int = HEATMAP_SIZE) -> np.ndarray:
    """Per-channel ``exp(-d^2 / 2 scale^2)`` with ``d`` the distance from the point to each pixel's ray.

    This is the maximum of an isotropic 3D Gaussian along the viewing ray, so
    maxima along epipolar lines agree exactly between views: the maximum over
    an epipolar line is the maximum over its epipolar plane. ``cam`` must be
    the heatmap camera.
    """
    X = np.atleast_2d(np.asarray(points3d, dtype=float))
    u, v = np.meshgrid(np.arange(W, dtype=float), np.arange(H, dtype=float))
    pix = np.stack([u.ravel(), v.ravel(), np.ones(W * H)])
    rays = cam.R.T @ np.linalg.solve(cam.K, pix)
    rays /= np.linalg.norm(rays, axis=0)
    out = np.empty((len(X), H, W))
    for c, p in enumerate(X):
        d = p - cam.C
        dist2 = np.maximum(d @ d - (d @ rays) ** 2, 0.0)
        out[c] = np.exp(-dist2 / (2.0 * scale * scale)).reshape(H, W)
    return out


def make_scene(
    rig: list[CameraModel],
    keypoints3d,
    sigma: float = DEFAULT_SIGMA,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    heatmap_size: int = HEATMAP_SIZE,
    extent: float = 1.0,
    snap_to_grid: bool = False,
    frame: int = 0,
    offsets: dict[int, np.ndarray] | None = None,
    profile: str = "ray",
) -> SceneSnapshot:
    """Render a scene: project each keypoint, draw Gaussian heatmaps, add noise.

    ``profile="image"`` draws Gaussians isotropic in heatmap pixels;
    ``profile="ray"`` draws :func:`ray_gaussian` blobs whose world scale
    matches ``sigma`` heatmap pixels at the subject's depth, which makes clean
    heatmaps geometrically consistent across views. Labels hold the clean
    heatmaps and annotations the exact projections. ``offsets`` maps view
    index -> (C, 2) heatmap-pixel displacements applied to that view's
    predicted peaks (deterministic perturbations for tests).
    """
    if profile not in ("ray", "image"):
        raise ValueError(f"unknown profile {profile!r}")
    X = np.atleast_2d(np.asarray(keypoints3d, dtype=float))
    rng = np.random.default_rng(seed)
    center = X.mean(axis=0)
    scale = sigma * extent / heatmap_size
    views = []
    for k, cam in enumerate(rig):
        crop = subject_crop(cam, center, extent, heatmap_size, anchor3d=X[0] if snap_to_grid else None)
        A = crop.image_to_heatmap()
        uv = project(cam, X)
        truth = apply_homography(A, uv)
        peaks = truth.copy()
        if noise.jitter_sigma > 0:
            peaks = peaks + rng.normal(0.0, noise.jitter_sigma, size=peaks.shape)
        if offsets is not None and k in offsets:
            peaks = peaks + np.asarray(offsets[k], dtype=float).reshape(peaks.shape)
        depth = depth_of(cam, X)
        for a, b in noise.symmetric_pairs:
            if rng.random() < noise.swap_prob:
                peaks[[a, b]] = peaks[[b, a]]
                depth[[a, b]] = depth[[b, a]]

        if profile == "ray":
            hcam = crop.heatmap_camera(cam)
            A_inv = np.linalg.inv(A)
            moved = np.array([backproject(cam, apply_homography(A_inv, p), d) for p, d in zip(peaks, depth)])
            pred = ray_gaussian(hcam, moved, scale, heatmap_size, heatmap_size)
            label = Heatmap(ray_gaussian(hcam, X, scale, heatmap_size, heatmap_size))
        else:
            pred = gaussian_label([tuple(p) for p in peaks], sigma, heatmap_size, heatmap_size).values
            label = gaussian_label([tuple(p) for p in truth], sigma, heatmap_size, heatmap_size)
        for _ in range(noise.clutter_count):
            c = rng.integers(pred.shape[0])
            pos = rng.uniform(0, heatmap_size - 1, size=2)
            blob = gaussian_label([tuple(pos)], sigma, heatmap_size, heatmap_size).values[0]
            pred[c] = np.maximum(pred[c], noise.clutter_amplitude * blob)
        views.append(
            ViewData(
                camera_id=cam.id,
                crop=crop,
                heatmap=Heatmap(pred),
                label=label,
                annotations={c: (float(u), float(v)) for c, (u, v) in enumerate(uv)},
            )
        )
    return SceneSnapshot(frame=frame, rig=list(rig), views=views, truth3d=X)
