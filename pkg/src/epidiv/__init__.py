"""Cross-view supervision of keypoint heatmaps through epipolar geometry."""

from .divergence import DivergenceConfig, epipolar_divergence, pair_loss, scene_loss
from .geometry import CameraModel, fundamental_matrix, project, ransac_triangulate, triangulate_dlt
from .heatmap import HEATMAP_SIZE, CropTransform, Heatmap, gaussian_label, rectified_pair
from .metrics import argmax_keypoints, pck_curve, reprojection_error
from .scene import SceneSnapshot, ViewData, load_scene, save_scene
from .supervision import LossWeights, build_pairs, optimize_heatmaps, spatial_augment, total_loss, track_augment

__all__ = [
    "HEATMAP_SIZE",
    "CameraModel",
    "CropTransform",
    "DivergenceConfig",
    "Heatmap",
    "LossWeights",
    "SceneSnapshot",
    "ViewData",
    "argmax_keypoints",
    "build_pairs",
    "epipolar_divergence",
    "fundamental_matrix",
    "gaussian_label",
    "load_scene",
    "optimize_heatmaps",
    "pair_loss",
    "pck_curve",
    "project",
    "ransac_triangulate",
    "rectified_pair",
    "reprojection_error",
    "save_scene",
    "scene_loss",
    "spatial_augment",
    "total_loss",
    "track_augment",
    "triangulate_dlt",
]
