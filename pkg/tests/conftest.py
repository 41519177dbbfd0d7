from __future__ import annotations

import numpy as np
import pytest

from epidiv.geometry import CameraModel
from epidiv.synth import RigSpec, look_at, make_rig


def random_camera(rng, radius=3.0, target=(0.0, 0.0, 0.0), cam_id="") -> CameraModel:
    """Camera on a sphere around ``target`` with random intrinsics, looking roughly at it."""
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    C = np.asarray(target) + radius * d
    aim = np.asarray(target) + rng.uniform(-0.2, 0.2, size=3)
    f = rng.uniform(600, 1400)
    K = np.array([[f * rng.uniform(0.9, 1.1), 0.0, rng.uniform(500, 700)], [0.0, f, rng.uniform(400, 560)], [0.0, 0.0, 1.0]])
    return CameraModel(K=K, R=look_at(C, aim, up=(0.0, 0.0, 1.0) if abs(d[2]) < 0.95 else (0.0, 1.0, 0.0)), C=C, id=cam_id)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ring4():
    return make_rig(RigSpec(count=4, seed=0))
