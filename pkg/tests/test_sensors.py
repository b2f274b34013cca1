"""Renderer tests against analytic ray-geometry oracles."""
import math

import numpy as np
import pytest

from lapkit.errors import BehindCamera, ResolutionMismatch
from lapkit.kinematics import Pose
from lapkit.sensors import (
    CameraModel,
    Capsule,
    FrameBuffer,
    Sphere,
    Triangle,
    depth_to_pointcloud,
    project,
    read_ppm,
    render,
    rgbd_observation,
    unproject,
    write_depth,
    write_ppm,
    write_segmentation,
)

IDENTITY_POSE = Pose(np.zeros(3), np.array([1.0, 0, 0, 0]))


def _camera(resolution=64, fov=45.0, near=1.0, far=1000.0):
    # camera at the origin looking along world +z
    return CameraModel(IDENTITY_POSE, fov, resolution, near, far)


# -- analytic oracles ----------------------------------------------------
def test_center_pixel_depth_of_on_axis_sphere():
    """A sphere dead ahead at 100 mm: center ray hits at 100 - radius."""
    cam = _camera(resolution=64)
    scene = [Sphere(np.array([0.0, 0.0, 100.0]), 10.0, (200, 50, 50), 1)]
    frame = render(scene, cam)
    center = frame.depth[32, 32]
    assert center == pytest.approx(90.0, abs=0.1)
    assert frame.segmentation[32, 32] == 1


def test_triangle_depth_is_plane_depth():
    cam = _camera(resolution=64)
    z = 200.0
    scene = [Triangle(np.array([[-50, -50, z], [50, -50, z], [0, 80, z]]),
                      (100, 200, 100), 7)]
    frame = render(scene, cam)
    hit = frame.depth < cam.far
    assert np.any(hit)
    assert np.allclose(frame.depth[hit], z, atol=1e-6)
    assert set(np.unique(frame.segmentation[hit])) == {7}


def test_empty_scene_is_background():
    cam = _camera()
    frame = render([], cam, background=(9, 9, 9))
    assert np.all(frame.rgb == 9)
    assert np.all(frame.depth == cam.far)
    assert np.all(frame.segmentation == 0)


def test_nearer_object_wins_z_buffer():
    cam = _camera()
    scene = [
        Sphere(np.array([0.0, 0.0, 300.0]), 20.0, (0, 0, 255), 2),
        Sphere(np.array([0.0, 0.0, 100.0]), 10.0, (255, 0, 0), 1),
    ]
    frame = render(scene, cam)
    assert frame.segmentation[32, 32] == 1
    assert frame.depth[32, 32] < 120.0


def test_capsule_renders_like_sphere_when_degenerate():
    cam = _camera()
    p = np.array([0.0, 0.0, 100.0])
    cap = render([Capsule(p, p, 10.0, (10, 200, 10), 3)], cam)
    sph = render([Sphere(p, 10.0, (10, 200, 10), 3)], cam)
    assert np.array_equal(cap.depth, sph.depth)


# -- projection ----------------------------------------------------------
def test_project_center_and_offset():
    cam = _camera(resolution=64, fov=45.0)
    u, v = project(np.array([0.0, 0.0, 100.0]), cam)
    assert (u, v) == pytest.approx((32.0, 32.0))
    f = cam.focal
    u, v = project(np.array([10.0, -5.0, 100.0]), cam)
    assert u == pytest.approx(32.0 + f * 10.0 / 100.0)
    assert v == pytest.approx(32.0 - f * 5.0 / 100.0)


def test_project_behind_camera_raises():
    cam = _camera()
    with pytest.raises(BehindCamera):
        project(np.array([0.0, 0.0, -5.0]), cam)


def test_unproject_inverts_project():
    cam = _camera()
    rng = np.random.default_rng(2)
    for _ in range(200):
        p = rng.uniform([-50, -50, 20], [50, 50, 500])
        u, v = project(p, cam)
        depth = p[2]
        assert np.allclose(unproject(u, v, depth, cam), p, atol=1e-9)


def test_pointcloud_round_trip_within_half_pixel():
    cam = _camera(resolution=48)
    scene = [Sphere(np.array([5.0, -3.0, 120.0]), 15.0, (200, 50, 50), 1)]
    frame = render(scene, cam)
    cloud = depth_to_pointcloud(frame, cam)
    assert cloud
    for xyz, oid in cloud:
        assert oid == 1
        u, v = project(xyz, cam)
        assert 0.0 <= u <= cam.resolution
        assert 0.0 <= v <= cam.resolution


def test_pointcloud_resolution_mismatch():
    cam = _camera(resolution=48)
    bad = FrameBuffer(
        np.zeros((32, 32, 3), np.uint8),
        np.full((32, 32), cam.far),
        np.zeros((32, 32), np.int32),
    )
    with pytest.raises(ResolutionMismatch):
        depth_to_pointcloud(bad, cam)


def test_rgbd_observation_shape_and_range():
    cam = _camera(resolution=32)
    frame = render([Sphere(np.array([0.0, 0, 80.0]), 10.0, (255, 255, 255), 1)],
                   cam)
    obs = rgbd_observation(frame, cam)
    assert obs.shape == (32, 32, 4)
    assert obs.dtype == np.float32
    assert obs[..., :3].max() <= 1.0
    assert 0.0 <= obs[..., 3].min() <= obs[..., 3].max() <= 1.0


# -- determinism ---------------------------------------------------------
def test_render_deterministic():
    cam = _camera()
    scene = [
        Sphere(np.array([10.0, 5.0, 150.0]), 12.0, (120, 40, 200), 1),
        Capsule(np.array([-20.0, 0, 100.0]), np.array([20.0, 0, 100.0]), 4.0,
                (40, 200, 120), 2),
    ]
    a, b = render(scene, cam), render(scene, cam)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.segmentation, b.segmentation)


# -- file formats --------------------------------------------------------
def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    p = tmp_path / "frame.ppm"
    write_ppm(p, rgb)
    assert np.array_equal(read_ppm(p), rgb)


def test_depth_and_segmentation_dumps(tmp_path):
    depth = np.arange(16, dtype=float).reshape(4, 4)
    seg = np.arange(16, dtype=np.int32).reshape(4, 4)
    dp, sp = tmp_path / "d.bin", tmp_path / "s.bin"
    write_depth(dp, depth)
    write_segmentation(sp, seg)
    draw = dp.read_bytes()
    sraw = sp.read_bytes()
    assert draw[:8] == b"LGDEPTH1"
    assert sraw[:8] == b"LGSEG001"
    assert np.array_equal(
        np.frombuffer(draw[8:], dtype="<f4").reshape(4, 4),
        depth.astype("<f4"),
    )
    assert np.array_equal(
        np.frombuffer(sraw[8:], dtype="<i4").reshape(4, 4), seg
    )
