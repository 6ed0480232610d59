import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handforge.scene_core import (
    CameraModel,
    Frustum,
    Mesh,
    Pose,
    load_obj,
    point_in_frustum,
    points_in_frustum,
    project_point,
    rects_intersect,
    screen_aabb,
)

CAM90 = CameraModel(horizontal_fov=90.0, vertical_fov=90.0)


def test_default_camera():
    cam = CameraModel()
    assert (cam.image_width, cam.image_height) == (320, 256)
    assert cam.near_depth == 0.2 and cam.far_depth == 1.0
    # fx from the half-width over tan(half fov)
    assert cam.fx == pytest.approx(160.0 / math.tan(math.radians(35.0)), rel=1e-12)
    assert cam.fy == pytest.approx(128.0 / math.tan(math.radians(27.5)), rel=1e-12)


@pytest.mark.parametrize("kwargs", [
    {"near_depth": 1.0, "far_depth": 0.5},
    {"near_depth": 0.0},
    {"horizontal_fov": 180.0},
    {"vertical_fov": 0.0},
    {"image_width": 0},
])
def test_camera_rejects_bad_fields(kwargs):
    with pytest.raises(ValueError):
        CameraModel(**kwargs)


def test_project_optical_axis_center():
    assert project_point(CAM90, (0, 0, 0.5)) == (160.0, 128.0, 0.5)


def test_project_behind_camera():
    assert project_point(CAM90, (0, 0, -0.5)) is None
    assert project_point(CAM90, (0, 0, 0.0)) is None


def test_project_right_edge():
    u, v, d = project_point(CAM90, (0.5, 0, 0.5))
    assert u == pytest.approx(320.0, abs=1e-9)
    assert d == 0.5


def test_frustum_examples():
    fr = Frustum(CameraModel())
    assert point_in_frustum(fr, (0, 0, 0.6))
    assert not point_in_frustum(fr, (0, 0, 0.2 - 0.001))
    fr90 = Frustum(CAM90)
    assert point_in_frustum(fr90, (0.99, 0, 1.0))
    assert not point_in_frustum(fr90, (1.01, 0, 1.0))


def test_frustum_boundary_is_closed():
    fr90 = Frustum(CAM90)
    for p in [(1.0, 0, 1.0), (0, -1.0, 1.0), (0.2, 0.2, 0.2), (0, 0, 0.2), (0, 0, 1.0)]:
        assert point_in_frustum(fr90, p)


def test_planes_agree_with_containment():
    fr = Frustum(CameraModel())
    rng = np.random.default_rng(3)
    pts = rng.uniform([-1, -1, 0], [1, 1, 1.2], size=(4000, 3))
    by_planes = np.all(np.c_[pts, np.ones(len(pts))] @ fr.planes().T >= -1e-9, axis=1)
    assert np.array_equal(by_planes, points_in_frustum(fr, pts))


coords = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(coords, coords, st.floats(0.05, 2.0))
def test_frustum_points_project_into_image(x, y, z):
    cam = CameraModel()
    if not point_in_frustum(Frustum(cam), (x, y, z)):
        return
    u, v, d = project_point(cam, (x, y, z))
    tol = 1e-6
    assert -tol <= u <= cam.image_width + tol
    assert -tol <= v <= cam.image_height + tol
    assert cam.near_depth - 1e-9 <= d <= cam.far_depth + 1e-9


@settings(max_examples=200, deadline=None)
@given(coords, coords, st.floats(0.05, 2.0), st.floats(0.1, 10.0))
def test_projection_scale_invariance(x, y, z, k):
    cam = CameraModel()
    u1, v1, _ = project_point(cam, (x, y, z))
    u2, v2, _ = project_point(cam, (k * x, k * y, k * z))
    assert u1 == pytest.approx(u2, rel=1e-9, abs=1e-9)
    assert v1 == pytest.approx(v2, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 320), st.floats(0, 256), st.floats(0.1, 3.0))
def test_unproject_roundtrip(u, v, d):
    cam = CameraModel()
    u2, v2, d2 = project_point(cam, cam.unproject(u, v, d))
    assert (u2, v2, d2) == pytest.approx((u, v, d), abs=1e-9)


angles = st.floats(-80.0, 80.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-15, 15), st.floats(-30, 30), st.floats(-179, 179))
def test_pose_euler_roundtrip(roll, pitch, yaw):
    p = Pose.from_euler(np.zeros(3), roll, pitch, yaw)
    assert abs(np.linalg.norm(p.rotation) - 1.0) <= 1e-9
    assert p.euler() == pytest.approx((roll, pitch, yaw), abs=1e-7)


def test_pose_dict_roundtrip():
    p = Pose.from_euler([0.1, -0.2, 0.5], 10, -20, 200)
    q = Pose.from_dict(p.to_dict())
    assert np.array_equal(p.translation, q.translation) and np.array_equal(p.rotation, q.rotation)


def test_mesh_validation():
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), [[0, 1, 2]]).require_hand_anchors()


def _triangle(z=0.5, s=0.05):
    return Mesh(np.array([[-s, -s, z], [s, -s, z], [0, s, z]]), [[0, 1, 2]])


def test_screen_aabb_center_triangle():
    r = screen_aabb(CameraModel(), _triangle(), Pose())
    assert 0 < r[0] < r[2] < 320 and 0 < r[1] < r[3] < 256


def test_screen_aabb_behind_camera():
    assert screen_aabb(CameraModel(), _triangle(z=-0.5), Pose()) is None


def test_screen_aabb_cube_corners():
    cam = CAM90
    corners = np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])
    tris = [[0, 1, 3], [0, 3, 2], [4, 5, 7], [4, 7, 6], [0, 1, 5], [0, 5, 4],
            [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 3, 7], [1, 7, 5]]
    cube = Mesh(corners, tris)
    pose = Pose(np.array([0.0, 0.0, 0.6]))
    # nearest face sits at z = 0.1, so every corner projects in front of the camera
    proj = np.array([project_point(cam, c + [0, 0, 0.6])[:2] for c in corners])
    expect = (max(proj[:, 0].min(), 0), max(proj[:, 1].min(), 0),
              min(proj[:, 0].max(), 320), min(proj[:, 1].max(), 256))
    assert screen_aabb(cam, cube, pose) == pytest.approx(expect)


def test_screen_aabb_single_vertex_zero_area():
    m = Mesh(np.array([[0.01, 0.02, 0.5]]), np.zeros((0, 3), dtype=int))
    u, v, _ = project_point(CameraModel(), (0.01, 0.02, 0.5))
    assert screen_aabb(CameraModel(), m, Pose()) == pytest.approx((u, v, u, v))


def test_rects_intersect_closed():
    assert rects_intersect((0, 0, 10, 10), (10, 10, 20, 20))
    assert not rects_intersect((0, 0, 10, 10), (10.5, 0, 20, 10))


def test_load_obj_fan_triangulates(tmp_path):
    obj = tmp_path / "quad.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n")
    anchors = tmp_path / "quad.anchors"
    anchors.write_text("fingertip = 1 1 0\npalm_center = 0.5 0.5 0\n")
    m = load_obj(obj, anchors)
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert m.uv.tolist() == [[0, 0], [1, 0], [1, 1], [0, 1]]
    assert m.is_hand


def test_load_obj_bad_face(tmp_path):
    obj = tmp_path / "bad.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nf 1 2\n")
    with pytest.raises(ValueError, match="fewer than 3"):
        load_obj(obj)
