"""Scene containers shared by supervision, synthesis and the CLI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .geometry import CameraModel, rig_from_dict, rig_to_dict
from .heatmap import CropTransform, Heatmap, load_heatmap, save_heatmap


@dataclass
class ViewData:
    """One camera's data for a single frame.

    ``annotations`` maps channel -> ``(u, v)`` in original-image pixels.
    """

    camera_id: str
    crop: CropTransform
    heatmap: Heatmap
    label: Heatmap | None = None
    pseudo_label: Heatmap | None = None
    annotations: dict[int, tuple[float, float]] = field(default_factory=dict)


@dataclass
class SceneSnapshot:
    frame: int
    rig: list[CameraModel]
    views: list[ViewData]
    truth3d: np.ndarray | None = None

    def __post_init__(self):
        ids = {cam.id for cam in self.rig}
        shapes = {v.heatmap.shape for v in self.views}
        if len(shapes) > 1:
            raise ShapeMismatch(f"views disagree on heatmap shape: {sorted(shapes)}")
        for v in self.views:
            if v.camera_id not in ids:
                raise ValueError(f"view references unknown camera {v.camera_id!r}")
            for h in (v.label, v.pseudo_label):
                if h is not None and h.shape != v.heatmap.shape:
                    raise ShapeMismatch("label heatmaps must match the prediction shape")

    def camera(self, view: int) -> CameraModel:
        cam_id = self.views[view].camera_id
        return next(c for c in self.rig if c.id == cam_id)

    def heatmap_cameras(self) -> list[CameraModel]:
        return [v.crop.heatmap_camera(self.camera(k)) for k, v in enumerate(self.views)]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.views[0].heatmap.shape


def save_scene(scene: SceneSnapshot, directory) -> None:
    """Write rig JSON, heatmap tensor files and a ``scene.json`` manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "rig.json").write_text(json.dumps(rig_to_dict(scene.rig), indent=2) + "\n")
    views = []
    for k, v in enumerate(scene.views):
        entry = {"camera": v.camera_id, "crop": v.crop.to_dict(), "heatmap": f"view{k}_pred"}
        save_heatmap(v.heatmap, d / entry["heatmap"])
        for key, h in (("label", v.label), ("pseudo_label", v.pseudo_label)):
            if h is not None:
                entry[key] = f"view{k}_{key}"
                save_heatmap(h, d / entry[key])
        entry["annotations"] = [
            {"frame": scene.frame, "view": v.camera_id, "channel": int(c), "u": float(u), "v": float(vv), "source": "manual"}
            for c, (u, vv) in sorted(v.annotations.items())
        ]
        views.append(entry)
    doc = {"frame": scene.frame, "rig": "rig.json", "views": views}
    if scene.truth3d is not None:
        doc["truth3d"] = np.asarray(scene.truth3d).tolist()
    (d / "scene.json").write_text(json.dumps(doc, indent=2) + "\n")


def load_scene(directory) -> SceneSnapshot:
    d = Path(directory)
    doc = json.loads((d / "scene.json").read_text())
    rig = rig_from_dict(json.loads((d / doc["rig"]).read_text()))
    views = []
    for entry in doc["views"]:
        views.append(
            ViewData(
                camera_id=entry["camera"],
                crop=CropTransform.from_dict(entry["crop"]),
                heatmap=load_heatmap(d / entry["heatmap"]),
                label=load_heatmap(d / entry["label"]) if "label" in entry else None,
                pseudo_label=load_heatmap(d / entry["pseudo_label"]) if "pseudo_label" in entry else None,
                annotations={int(a["channel"]): (float(a["u"]), float(a["v"])) for a in entry.get("annotations", [])},
            )
        )
    truth = np.asarray(doc["truth3d"], dtype=float) if "truth3d" in doc else None
    return SceneSnapshot(frame=int(doc["frame"]), rig=rig, views=views, truth3d=truth)
