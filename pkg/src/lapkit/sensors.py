"""Observation generation: state vectors, rasterized frames, point clouds.

Rendering is a deterministic software rasterizer: perspective projection,
z-buffer, flat shading with one directional light.  Spheres and capsules
are tessellated at a fixed subdivision so buffers are reproducible.

Camera convention: local +z is the view direction, +x is right, +y is
down; pixel (row, col) has its center at (u, v) = (col + 0.5, row + 0.5)
with u along +x and v along +y.  Depth buffers store camera-space z in
mm, with `far` where no geometry was hit.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, ResolutionMismatch
from .kinematics import Pose

try:  # compiled rasterization kernel; pure-numpy fallback below
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    _numba = None

SPHERE_STACKS = 24
SPHERE_SLICES = 32
CAPSULE_SEGMENTS = 16
_LIGHT = np.array([-0.3, -0.5, -1.0])
_LIGHT = _LIGHT / np.linalg.norm(_LIGHT)
_AMBIENT = 0.35

DEPTH_MAGIC = b"LGDEPTH1"
SEG_MAGIC = b"LGSEG001"


@dataclass(frozen=True)
class CameraModel:
    pose: Pose
    fov_deg: float
    resolution: int
    near: float = 1.0
    far: float = 1000.0

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        if not (0 < self.fov_deg < 180):
            raise ValueError("fov must be in (0, 180)")

    @property
    def focal(self) -> float:
        return (self.resolution / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass
class FrameBuffer:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float64, mm; far where empty
    segmentation: np.ndarray  # (H, W) int32; 0 background


@dataclass(frozen=True)
class Triangle:
    vertices: np.ndarray  # (3, 3)
    color: tuple
    object_id: int


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    color: tuple
    object_id: int


@dataclass(frozen=True)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float
    color: tuple
    object_id: int


def _sphere_mesh(center, radius):
    """UV sphere with poles along world z; returns (n, 3, 3) vertex array."""
    center = np.asarray(center, dtype=float)
    stacks, slices = SPHERE_STACKS, SPHERE_SLICES
    phi = np.linspace(0.0, math.pi, stacks + 1)
    theta = np.linspace(0.0, 2 * math.pi, slices + 1)
    pts = np.empty((stacks + 1, slices + 1, 3))
    pts[..., 0] = np.outer(np.sin(phi), np.cos(theta))
    pts[..., 1] = np.outer(np.sin(phi), np.sin(theta))
    pts[..., 2] = np.cos(phi)[:, None]
    pts = center + radius * pts
    tris = []
    for i in range(stacks):
        for j in range(slices):
            p00, p01 = pts[i, j], pts[i, j + 1]
            p10, p11 = pts[i + 1, j], pts[i + 1, j + 1]
            if i > 0:
                tris.append((p00, p10, p01))
            if i < stacks - 1:
                tris.append((p01, p10, p11))
    return np.array(tris)


def _capsule_mesh(a, b, radius):
    """Cylinder barrel plus hemispherical caps as triangles."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    axis = b - a
    length = np.linalg.norm(axis)
    if length < 1e-9:
        return _sphere_mesh(a, radius)
    z = axis / length
    ref = np.array([1.0, 0.0, 0.0])
    if abs(z @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    seg = CAPSULE_SEGMENTS
    ang = np.linspace(0.0, 2 * math.pi, seg + 1)
    ring = radius * (np.outer(np.cos(ang), x) + np.outer(np.sin(ang), y))
    lower = a + ring
    upper = b + ring
    tris = []
    for j in range(seg):
        tris.append((lower[j], upper[j], lower[j + 1]))
        tris.append((lower[j + 1], upper[j], upper[j + 1]))
    # caps: fans to the sphere poles at each end
    for cap_center, pole_dir, base in ((a, -z, lower), (b, z, upper)):
        pole = cap_center + radius * pole_dir
        mid_ring = cap_center + radius * (
            0.7071 * (np.outer(np.cos(ang), x) + np.outer(np.sin(ang), y))
            + 0.7071 * pole_dir
        )
        for j in range(seg):
            tris.append((base[j], mid_ring[j], base[j + 1]))
            tris.append((base[j + 1], mid_ring[j], mid_ring[j + 1]))
            tris.append((mid_ring[j], pole, mid_ring[j + 1]))
    return np.array(tris)


def _gather_triangles(scene):
    """Expand scene primitives to (verts, colors, ids) arrays."""
    verts, colors, ids = [], [], []
    for prim in scene:
        if isinstance(prim, Triangle):
            mesh = np.asarray(prim.vertices, dtype=float)[None, :, :]
        elif isinstance(prim, Sphere):
            mesh = _sphere_mesh(prim.center, prim.radius)
        elif isinstance(prim, Capsule):
            mesh = _capsule_mesh(prim.a, prim.b, prim.radius)
        else:
            raise TypeError(f"unknown primitive {type(prim).__name__}")
        verts.append(mesh)
        colors.append(np.tile(np.asarray(prim.color, dtype=float), (len(mesh), 1)))
        ids.append(np.full(len(mesh), prim.object_id, dtype=np.int32))
    if not verts:
        return (
            np.zeros((0, 3, 3)),
            np.zeros((0, 3)),
            np.zeros(0, dtype=np.int32),
        )
    return np.concatenate(verts), np.concatenate(colors), np.concatenate(ids)


def _world_to_camera(points, camera: CameraModel):
    r = camera.pose.rotation_matrix()
    return (np.asarray(points, dtype=float) - camera.pose.position) @ r


def _raster_loop(tri_order, uv, zs, shaded_u8, ids, near, far, rgb, depth, seg):
    """Sequential per-triangle z-buffered fill; shared by both backends."""
    res = depth.shape[0]
    for idx in range(len(tri_order)):
        t = tri_order[idx]
        ax, ay = uv[t, 0, 0], uv[t, 0, 1]
        bx, by = uv[t, 1, 0], uv[t, 1, 1]
        cx, cy = uv[t, 2, 0], uv[t, 2, 1]
        lox = min(ax, min(bx, cx))
        hix = max(ax, max(bx, cx))
        loy = min(ay, min(by, cy))
        hiy = max(ay, max(by, cy))
        x0 = max(int(math.floor(lox - 0.5)), 0)
        y0 = max(int(math.floor(loy - 0.5)), 0)
        x1 = min(int(math.ceil(hix + 0.5)), res)
        y1 = min(int(math.ceil(hiy + 0.5)), res)
        if x0 >= x1 or y0 >= y1:
            continue
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if abs(area) < 1e-12:
            continue
        for row in range(y0, y1):
            gy = row + 0.5
            for col in range(x0, x1):
                gx = col + 0.5
                la = ((by - cy) * (gx - cx) + (cx - bx) * (gy - cy)) / area
                lb = ((cy - ay) * (gx - cx) + (ax - cx) * (gy - cy)) / area
                lc = 1.0 - la - lb
                if la < 0 or lb < 0 or lc < 0:
                    continue
                inv_z = la / zs[t, 0] + lb / zs[t, 1] + lc / zs[t, 2]
                if inv_z <= 0:
                    continue
                z = 1.0 / inv_z
                if z >= depth[row, col] or z <= near or z >= far:
                    continue
                depth[row, col] = z
                seg[row, col] = ids[t]
                rgb[row, col, 0] = shaded_u8[t, 0]
                rgb[row, col, 1] = shaded_u8[t, 1]
                rgb[row, col, 2] = shaded_u8[t, 2]


if _numba is not None:
    _raster_loop = _numba.njit(cache=True)(_raster_loop)


def render(scene, camera: CameraModel, background=(20, 20, 20)) -> FrameBuffer:
    """Rasterize the scene; pure function of (scene, camera)."""
    res = camera.resolution
    rgb = np.empty((res, res, 3), dtype=np.uint8)
    rgb[:] = np.asarray(background, dtype=np.uint8)
    depth = np.full((res, res), camera.far, dtype=float)
    seg = np.zeros((res, res), dtype=np.int32)

    verts, colors, ids = _gather_triangles(scene)
    if len(verts) == 0:
        return FrameBuffer(rgb, depth, seg)

    cam_verts = _world_to_camera(verts.reshape(-1, 3), camera).reshape(-1, 3, 3)
    f = camera.focal
    half = res / 2.0

    zs = cam_verts[..., 2]
    visible = np.all(zs > camera.near, axis=1) & np.any(zs < camera.far, axis=1)

    # flat shading from the world-space normal
    n = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
    norm = np.linalg.norm(n, axis=1)
    ok = norm > 1e-12
    n[ok] /= norm[ok, None]
    shade = _AMBIENT + (1.0 - _AMBIENT) * np.abs(n @ _LIGHT)
    shaded = np.clip(colors * shade[:, None], 0, 255)

    uv = np.empty_like(cam_verts[..., :2])
    uv[..., 0] = half + f * cam_verts[..., 0] / zs
    uv[..., 1] = half + f * cam_verts[..., 1] / zs

    tri_order = np.nonzero(visible & ok)[0]
    _raster_loop(
        tri_order,
        np.ascontiguousarray(uv),
        np.ascontiguousarray(zs),
        shaded.astype(np.uint8),
        ids,
        camera.near,
        camera.far,
        rgb,
        depth,
        seg,
    )
    return FrameBuffer(rgb, depth, seg)


def project(point, camera: CameraModel):
    """Pinhole projection of a world point to (u, v) pixel coordinates."""
    pc = _world_to_camera(np.asarray(point, dtype=float)[None, :], camera)[0]
    if pc[2] <= camera.near:
        raise BehindCamera(f"camera-space depth {pc[2]:.3f} <= near")
    half = camera.resolution / 2.0
    f = camera.focal
    return (half + f * pc[0] / pc[2], half + f * pc[1] / pc[2])


def unproject(u, v, depth, camera: CameraModel) -> np.ndarray:
    """Inverse of project for a pixel with known camera-space depth."""
    half = camera.resolution / 2.0
    f = camera.focal
    pc = np.array([(u - half) * depth / f, (v - half) * depth / f, depth])
    return camera.pose.rotation_matrix() @ pc + camera.pose.position


def depth_to_pointcloud(frame: FrameBuffer, camera: CameraModel):
    """One (xyz, object id) point per non-far depth pixel."""
    if frame.depth.shape != (camera.resolution, camera.resolution):
        raise ResolutionMismatch(
            f"frame {frame.depth.shape} vs camera {camera.resolution}"
        )
    rows, cols = np.nonzero(frame.depth < camera.far)
    points = []
    for i, j in zip(rows, cols):
        xyz = unproject(j + 0.5, i + 0.5, frame.depth[i, j], camera)
        points.append((xyz, int(frame.segmentation[i, j])))
    return points


def rgbd_observation(frame: FrameBuffer, camera: CameraModel) -> np.ndarray:
    """(res, res, 4) float32: RGB in [0,1] plus normalized depth."""
    rgb = frame.rgb.astype(np.float32) / 255.0
    d = (frame.depth - camera.near) / (camera.far - camera.near)
    return np.concatenate([rgb, d[..., None].astype(np.float32)], axis=2)


def state_vector(env) -> np.ndarray:
    """The environment's hand-crafted state observation."""
    return env.state_observation()


# ----------------------------------------------------------------------
# frame dump formats
# ----------------------------------------------------------------------
def write_ppm(path, rgb: np.ndarray):
    """Binary PPM (P6, maxval 255)."""
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def write_depth(path, depth: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def write_segmentation(path, seg: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(SEG_MAGIC)
        fh.write(np.ascontiguousarray(seg, dtype="<i4").tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError("not a P6 PPM")
    parts = data.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    raw = parts[3]
    return np.frombuffer(raw[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
