import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_camera
from epidiv.errors import (
    CoincidentCenters,
    DegenerateLine,
    DepthNonPositive,
    GazeParallelToBaseline,
    InsufficientViews,
)
from epidiv.geometry import (
    CameraModel,
    epipolar_line,
    epipoles,
    fundamental_matrix,
    load_rig,
    pair_degeneracy_check,
    point_line_distance,
    point_line_spread,
    project,
    ransac_triangulate,
    rectifying_rotation,
    reprojection_residuals,
    rig_from_dict,
    rig_to_dict,
    save_rig,
    triangulate_dlt,
)

I3 = np.eye(3)


def cam(K=I3, R=I3, C=(0.0, 0.0, 0.0), cam_id=""):
    return CameraModel(K=np.asarray(K, float), R=np.asarray(R, float), C=np.asarray(C, float), id=cam_id)


def project_oracle(K, R, C, X):
    x = K @ (R @ (np.asarray(X) - C))
    return x[:2] / x[2]


# ---------------------------------------------------------------- camera model


def test_camera_rejects_bad_rotation():
    with pytest.raises(ValueError):
        cam(R=np.diag([1.0, 1.0, -1.0]))


def test_camera_rejects_skew():
    with pytest.raises(ValueError):
        cam(K=[[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def test_camera_arrays_are_read_only():
    c = cam()
    with pytest.raises(ValueError):
        c.K[0, 0] = 2.0


# ---------------------------------------------------------------- project


def test_project_on_optical_axis():
    assert np.allclose(project(cam(), [0.0, 0.0, 5.0]), [0.0, 0.0])


def test_project_closed_form():
    K = [[100.0, 0.0, 50.0], [0.0, 100.0, 50.0], [0.0, 0.0, 1.0]]
    assert np.allclose(project(cam(K=K), [1.0, 0.0, 2.0]), [100.0, 50.0])


def test_project_matches_oracle(rng):
    for _ in range(20):
        c = random_camera(rng)
        X = rng.uniform(-0.5, 0.5, size=3)
        assert np.allclose(project(c, X), project_oracle(c.K, c.R, c.C, X), atol=1e-9)


def test_project_behind_camera_raises():
    with pytest.raises(DepthNonPositive):
        project(cam(), [0.0, 0.0, -1.0])
    with pytest.raises(DepthNonPositive):
        project(cam(), [1.0, 0.0, 0.0])


def test_project_vectorized(rng):
    c = random_camera(rng)
    X = rng.uniform(-0.5, 0.5, size=(7, 3))
    assert project(c, X).shape == (7, 2)
    assert np.allclose(project(c, X)[3], project(c, X[3]))


# ---------------------------------------------------------------- fundamental matrix


def test_fundamental_rectified_case():
    F = fundamental_matrix(cam(), cam(C=(1.0, 0.0, 0.0)))
    expected = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    expected /= np.linalg.norm(expected)
    assert np.allclose(F, expected) or np.allclose(F, -expected)


def test_fundamental_coincident_centers():
    with pytest.raises(CoincidentCenters):
        fundamental_matrix(cam(), cam())


def test_fundamental_epipolar_residual_random(rng):
    worst = 0.0
    for _ in range(20):
        ci, cj = random_camera(rng), random_camera(rng)
        F = fundamental_matrix(ci, cj)
        assert np.linalg.matrix_rank(F, tol=1e-10) == 2
        assert abs(np.linalg.norm(F) - 1.0) < 1e-12
        for X in rng.uniform(-0.5, 0.5, size=(50, 3)):
            xi = np.append(project(ci, X), 1.0)
            xj = np.append(project(cj, X), 1.0)
            worst = max(worst, abs(xj @ F @ xi))
    assert worst <= 1e-7


def test_fundamental_transpose_symmetry(rng):
    ci, cj = random_camera(rng), random_camera(rng)
    F, G = fundamental_matrix(ci, cj), fundamental_matrix(cj, ci)
    assert np.allclose(F, G.T) or np.allclose(F, -G.T)


# ---------------------------------------------------------------- lines


def test_epipolar_line_rectified_is_row():
    F = fundamental_matrix(cam(), cam(C=(1.0, 0.0, 0.0)))
    line = epipolar_line(F, [3.0, 7.0])
    assert abs(line[0]) < 1e-12
    assert point_line_distance(line, (123.0, 7.0)) < 1e-12


def test_epipolar_line_at_epipole_raises(rng):
    F = fundamental_matrix(random_camera(rng), random_camera(rng))
    e_i, _ = epipoles(F)
    with pytest.raises(DegenerateLine):
        epipolar_line(F, e_i[:2] / e_i[2])


def test_epipolar_line_contains_correspondence(rng):
    for _ in range(20):
        ci, cj = random_camera(rng), random_camera(rng)
        F = fundamental_matrix(ci, cj)
        X = rng.uniform(-0.5, 0.5, size=3)
        line = epipolar_line(F, project(ci, X))
        assert abs(np.hypot(line[0], line[1]) - 1.0) < 1e-12
        assert point_line_distance(line, project(cj, X)) <= 1e-7


def test_point_line_distance_examples():
    line = np.array([0.0, 1.0, -7.0])
    assert point_line_distance(line, (3.0, 7.0)) == 0.0
    assert point_line_distance(line, (3.0, 9.0)) == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(
    theta=st.floats(0.0, np.pi),
    c=st.floats(-50.0, 50.0),
    px=st.floats(-50.0, 50.0),
    py=st.floats(-50.0, 50.0),
)
def test_point_line_distance_matches_dense_sampling(theta, c, px, py):
    line = np.array([np.cos(theta), np.sin(theta), c])
    foot = -c * line[:2]
    direction = np.array([-line[1], line[0]])
    t = np.linspace(-300.0, 300.0, 600001)
    pts = foot + t[:, None] * direction
    dense = np.min(np.hypot(pts[:, 0] - px, pts[:, 1] - py))
    assert point_line_distance(line, (px, py)) == pytest.approx(dense, abs=1e-3)


# ---------------------------------------------------------------- rectifying rotation


def test_rectifying_rotation_identity_for_rectified_pair():
    assert np.allclose(rectifying_rotation(cam(), cam(C=(1.0, 0.0, 0.0))), np.eye(3))


def test_rectifying_rotation_gaze_along_baseline():
    with pytest.raises(GazeParallelToBaseline):
        rectifying_rotation(cam(), cam(C=(0.0, 0.0, 1.0)))


def test_rectifying_rotation_coincident():
    with pytest.raises(CoincidentCenters):
        rectifying_rotation(cam(), cam())


def test_rectifying_rotation_random(rng):
    for _ in range(20):
        ci, cj = random_camera(rng), random_camera(rng)
        Rn = rectifying_rotation(ci, cj)
        assert np.allclose(Rn @ Rn.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(Rn) == pytest.approx(1.0)
        b = Rn @ (cj.C - ci.C)
        assert np.allclose(b[1:], 0.0, atol=1e-9) and b[0] > 0


# ---------------------------------------------------------------- triangulation


def test_triangulate_two_views():
    cams = [cam(C=(-1.0, 0.0, 0.0)), cam(C=(1.0, 0.0, 0.0))]
    X = np.array([0.0, 0.0, 5.0])
    assert np.allclose(triangulate_dlt(cams, [project(c, X) for c in cams]), X, atol=1e-9)


def test_triangulate_needs_two_views():
    with pytest.raises(InsufficientViews):
        triangulate_dlt([cam()], [(0.0, 0.0)])


def test_triangulate_noisy_six_views():
    rng = np.random.default_rng(7)
    cams = [random_camera(rng) for _ in range(6)]
    X = np.array([0.1, -0.2, 0.05])
    pix = [project(c, X) + rng.normal(0.0, 0.5, size=2) for c in cams]
    assert np.linalg.norm(triangulate_dlt(cams, pix) - X) <= 0.05


def test_triangulate_round_trip_random(rng):
    for _ in range(20):
        cams = [random_camera(rng) for _ in range(int(rng.integers(2, 6)))]
        X = rng.uniform(-0.5, 0.5, size=3)
        assert np.allclose(triangulate_dlt(cams, [project(c, X) for c in cams]), X, atol=1e-9)


def test_reprojection_residuals_behind_camera_is_inf():
    cams = [cam(), cam(C=(1.0, 0.0, 0.0))]
    res = reprojection_residuals(cams, [(0.0, 0.0), (0.0, 0.0)], np.array([0.0, 0.0, -3.0]))
    assert np.all(np.isinf(res))


# ---------------------------------------------------------------- RANSAC


def test_ransac_all_consistent(rng):
    cams = [random_camera(rng) for _ in range(5)]
    X = np.array([0.05, 0.1, -0.1])
    pix = [project(c, X) for c in cams]
    Xr, mask = ransac_triangulate(cams, pix)
    assert mask.all()
    assert np.allclose(Xr, triangulate_dlt(cams, pix), atol=1e-9)


def test_ransac_excludes_gross_outliers():
    rng = np.random.default_rng(42)
    cams = [random_camera(rng) for _ in range(10)]
    X = np.array([0.1, 0.0, -0.05])
    pix = np.array([project(c, X) for c in cams])
    bad = [2, 5, 8]
    for k in bad:
        angle = rng.uniform(0, 2 * np.pi)
        pix[k] += 50.0 * np.array([np.cos(angle), np.sin(angle)])
    Xr, mask = ransac_triangulate(cams, pix, inlier_thresh_px=2.0, seed=42)
    assert not mask[bad].any() and mask.sum() == 7
    assert np.linalg.norm(Xr - X) <= 0.02


def test_ransac_two_views_always_agree(rng):
    cams = [random_camera(rng) for _ in range(2)]
    pix = [(100.0, 200.0), (900.0, 50.0)]
    Xr, mask = ransac_triangulate(cams, pix)
    assert mask.all()
    assert np.allclose(Xr, triangulate_dlt(cams, pix))


def test_ransac_mutually_inconsistent_views_fall_back_to_a_pair():
    rng = np.random.default_rng(3)
    cams = [random_camera(rng) for _ in range(3)]
    pix = [(0.0, 0.0), (1200.0, 0.0), (0.0, 1000.0)]
    _, mask = ransac_triangulate(cams, pix, inlier_thresh_px=1e-6)
    assert mask.sum() == 2


def test_ransac_single_view_raises():
    with pytest.raises(InsufficientViews):
        ransac_triangulate([cam()], [(0.0, 0.0)])


def test_ransac_deterministic_for_seed():
    rng = np.random.default_rng(5)
    cams = [random_camera(rng) for _ in range(12)]
    X = np.zeros(3)
    pix = np.array([project(c, X) for c in cams]) + rng.normal(0.0, 3.0, size=(12, 2))
    a = ransac_triangulate(cams, pix, seed=9)
    b = ransac_triangulate(cams, pix, seed=9)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# ---------------------------------------------------------------- degeneracy


def test_degeneracy_parallel_lines():
    assert pair_degeneracy_check(cam(), cam(C=(1.0, 0.0, 0.0)), (-1.0, -1.0, 1.0, 1.0)) == pytest.approx(0.0, abs=1e-9)


def test_degeneracy_epipole_inside_roi():
    # Second camera straight ahead: the epipole is the principal point.
    spread = pair_degeneracy_check(cam(), cam(C=(0.0, 0.0, 5.0)), (-1.0, -1.0, 1.0, 1.0))
    assert spread >= 90.0 - 1e-9


def test_degeneracy_matches_dense_sampling(rng):
    for _ in range(5):
        ci, cj = random_camera(rng), random_camera(rng)
        roi = (400.0, 300.0, 800.0, 700.0)
        F = fundamental_matrix(ci, cj)
        e_i, _ = epipoles(F)
        uu, vv = np.meshgrid(np.linspace(roi[0], roi[2], 100), np.linspace(roi[1], roi[3], 100))
        angles = []
        for u, v in zip(uu.ravel(), vv.ravel()):
            line = np.cross(e_i, [u, v, 1.0])
            angles.append(np.degrees(np.arctan2(line[1], line[0])) % 180.0)
        angles = np.sort(angles)
        gaps = np.diff(np.concatenate([angles, [angles[0] + 180.0]]))
        dense = min(180.0 - gaps.max(), 90.0)
        assert pair_degeneracy_check(ci, cj, roi) == pytest.approx(dense, abs=0.5)


def test_point_on_ring_plane_is_degenerate(ring4):
    from epidiv.synth import RigSpec, make_rig

    flat = make_rig(RigSpec(count=4, height_jitter=0.0, seed=0))
    x = project(flat[0], np.array([0.3, -0.2, 0.0]))
    assert point_line_spread(flat[0], flat[1:], x) < 2.0
    lifted = project(flat[0], np.array([0.3, -0.2, 0.4]))
    assert point_line_spread(flat[0], flat[1:], lifted) > 2.0


# ---------------------------------------------------------------- rig files


def test_rig_json_round_trip(tmp_path, rng):
    rig = [random_camera(rng, cam_id=f"c{k}") for k in range(3)]
    save_rig(rig, tmp_path / "rig.json")
    doc = json.loads((tmp_path / "rig.json").read_text())
    assert set(doc["cameras"][0]) == {"id", "K", "R", "C"}
    assert len(doc["cameras"][0]["K"]) == 9
    assert load_rig(tmp_path / "rig.json") == rig
    assert rig_from_dict(rig_to_dict(rig)) == rig
