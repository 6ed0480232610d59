"""Camera, pose and mesh primitives shared by the generator and the renderer.

Camera frame is right-handed with +x right, +y down and +z into the scene.
Image coordinates are continuous: u grows right, v grows down, and the
top-left corner of pixel (0, 0) sits at (0, 0). Pixel centers are at
(i + 0.5, j + 0.5).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

# Geometry closer than this to the camera plane is clipped away.
CLIP_DEPTH = 1e-3
# Slack for the closed frustum test; lattice points computed as k * step
# land a few ulps off the side planes.
FRUSTUM_EPS = 1e-9

HAND_ANCHORS = ("fingertip", "palm_center")


@dataclass(frozen=True)
class CameraModel:
    image_width: int = 320
    image_height: int = 256
    horizontal_fov: float = 70.0
    vertical_fov: float = 55.0
    near_depth: float = 0.2
    far_depth: float = 1.0

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if not 0.0 < self.near_depth < self.far_depth:
            raise ValueError("require 0 < near_depth < far_depth")
        for name in ("horizontal_fov", "vertical_fov"):
            fov = getattr(self, name)
            if not 0.0 < fov < 180.0:
                raise ValueError(f"{name} must lie in (0, 180) degrees")

    @property
    def tan_half_h(self) -> float:
        return math.tan(math.radians(self.horizontal_fov) / 2.0)

    @property
    def tan_half_v(self) -> float:
        return math.tan(math.radians(self.vertical_fov) / 2.0)

    @property
    def fx(self) -> float:
        return (self.image_width / 2.0) / self.tan_half_h

    @property
    def fy(self) -> float:
        return (self.image_height / 2.0) / self.tan_half_v

    @property
    def cx(self) -> float:
        return self.image_width / 2.0

    @property
    def cy(self) -> float:
        return self.image_height / 2.0

    def frustum(self) -> "Frustum":
        return Frustum(self)

    def unproject(self, u: float, v: float, depth: float) -> np.ndarray:
        """Camera-frame point at camera-axis ``depth`` seen through (u, v)."""
        return np.array(
            [(u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth]
        )


@dataclass(frozen=True)
class Frustum:
    """Truncated pyramid with its apex at the camera origin."""

    camera: CameraModel

    @property
    def near(self) -> float:
        return self.camera.near_depth

    @property
    def far(self) -> float:
        return self.camera.far_depth

    def planes(self) -> np.ndarray:
        """Six half-spaces as rows (a, b, c, d) with a*x + b*y + c*z + d >= 0 inside."""
        th, tv = self.camera.tan_half_h, self.camera.tan_half_v
        return np.array(
            [
                [-1.0, 0.0, th, 0.0],
                [1.0, 0.0, th, 0.0],
                [0.0, -1.0, tv, 0.0],
                [0.0, 1.0, tv, 0.0],
                [0.0, 0.0, 1.0, -self.near],
                [0.0, 0.0, -1.0, self.far],
            ]
        )


def point_in_frustum(frustum: Frustum, p) -> bool:
    """Closed-set containment: boundary points count as inside."""
    x, y, z = (float(c) for c in p)
    th, tv = frustum.camera.tan_half_h, frustum.camera.tan_half_v
    eps = FRUSTUM_EPS
    if z < frustum.near - eps or z > frustum.far + eps:
        return False
    return abs(x) <= z * th + eps and abs(y) <= z * tv + eps


def points_in_frustum(frustum: Frustum, pts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`point_in_frustum` over an (N, 3) array."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    th, tv = frustum.camera.tan_half_h, frustum.camera.tan_half_v
    eps = FRUSTUM_EPS
    return (
        (z >= frustum.near - eps)
        & (z <= frustum.far + eps)
        & (np.abs(x) <= z * th + eps)
        & (np.abs(y) <= z * tv + eps)
    )


def project_point(camera: CameraModel, p) -> Optional[Tuple[float, float, float]]:
    """Pinhole projection; ``None`` stands for "behind camera" (depth <= 0)."""
    x, y, z = (float(c) for c in p)
    if z <= 0.0:
        return None
    return camera.cx + camera.fx * x / z, camera.cy + camera.fy * y / z, z


def project_points(camera: CameraModel, pts: np.ndarray) -> np.ndarray:
    """Project an (N, 3) array with positive depth to (N, 3) rows of (u, v, depth)."""
    pts = np.asarray(pts, dtype=float)
    z = pts[:, 2]
    u = camera.cx + camera.fx * pts[:, 0] / z
    v = camera.cy + camera.fy * pts[:, 1] / z
    return np.stack([u, v, z], axis=1)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform; ``rotation`` is a unit quaternion stored scalar-first (w, x, y, z).

    Euler accessors follow the intrinsic Z-Y'-X'' convention of the hand
    frame: yaw about the palm normal (z), pitch about the lateral axis (y)
    and roll about the finger axis (x).
    """

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if n == 0.0:
            raise ValueError("zero quaternion")
        if abs(n - 1.0) > 1e-9:
            q = q / n
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def from_euler(cls, translation, roll: float, pitch: float, yaw: float) -> "Pose":
        x, y, z, w = Rotation.from_euler("ZYX", [yaw, pitch, roll], degrees=True).as_quat()
        return cls(translation, np.array([w, x, y, z]))

    @property
    def _scipy(self) -> Rotation:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w])

    def matrix(self) -> np.ndarray:
        return self._scipy.as_matrix()

    def euler(self) -> Tuple[float, float, float]:
        """(roll, pitch, yaw) in degrees."""
        yaw, pitch, roll = self._scipy.as_euler("ZYX", degrees=True)
        return float(roll), float(pitch), float(yaw)

    @property
    def roll(self) -> float:
        return self.euler()[0]

    @property
    def pitch(self) -> float:
        return self.euler()[1]

    @property
    def yaw(self) -> float:
        return self.euler()[2]

    def apply(self, pts, scale: float = 1.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (pts * scale) @ self.matrix().T + self.translation

    def to_dict(self) -> dict:
        return {
            "translation": [float(c) for c in self.translation],
            "rotation": [float(c) for c in self.rotation],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Pose":
        return cls(np.array(d["translation"], dtype=float), np.array(d["rotation"], dtype=float))


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    uv: Optional[np.ndarray] = None
    anchor_points: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if v.shape[0] == 0:
            raise ValueError("mesh has no vertices")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise ValueError("triangle index out of range")
        uv = np.zeros((v.shape[0], 2)) if self.uv is None else np.asarray(self.uv, dtype=float)
        if uv.shape != (v.shape[0], 2):
            raise ValueError("uv must hold one 2-vector per vertex")
        anchors = {k: np.asarray(p, dtype=float).reshape(3) for k, p in self.anchor_points.items()}
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "anchor_points", anchors)

    @property
    def is_hand(self) -> bool:
        return all(k in self.anchor_points for k in HAND_ANCHORS)

    def require_hand_anchors(self) -> None:
        missing = [k for k in HAND_ANCHORS if k not in self.anchor_points]
        if missing:
            raise ValueError(f"hand mesh lacks anchors: {', '.join(missing)}")

    def mirrored(self) -> "Mesh":
        """Reflect across the local x-z plane (right hand to left hand)."""
        flip = np.array([1.0, -1.0, 1.0])
        return Mesh(
            self.vertices * flip,
            self.triangles[:, ::-1],
            self.uv,
            {k: p * flip for k, p in self.anchor_points.items()},
        )


def _clip_points(cam_pts: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Vertices in front of the clip plane plus edge crossings of that plane."""
    z = cam_pts[:, 2]
    keep = [cam_pts[z >= CLIP_DEPTH]]
    if triangles.size:
        edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
        a, b = cam_pts[edges[:, 0]], cam_pts[edges[:, 1]]
        za, zb = a[:, 2], b[:, 2]
        cross = (za - CLIP_DEPTH) * (zb - CLIP_DEPTH) < 0
        if np.any(cross):
            a, b, za, zb = a[cross], b[cross], za[cross], zb[cross]
            s = (CLIP_DEPTH - za) / (zb - za)
            keep.append(a + (b - a) * s[:, None])
    return np.concatenate(keep)


def screen_aabb(camera: CameraModel, mesh: Mesh, pose: Pose, scale: float = 1.0):
    """Tight pixel rectangle (u0, v0, u1, v1) of the visible geometry, or ``None``.

    ``None`` means the mesh lies fully outside the image or behind the camera.
    Geometry crossing the clip plane is cut there before projecting.
    """
    pts = _clip_points(pose.apply(mesh.vertices, scale), mesh.triangles)
    if pts.shape[0] == 0:
        return None
    uvz = project_points(camera, pts)
    u0, v0 = uvz[:, 0].min(), uvz[:, 1].min()
    u1, v1 = uvz[:, 0].max(), uvz[:, 1].max()
    w, h = camera.image_width, camera.image_height
    if u1 < 0 or v1 < 0 or u0 > w or v0 > h:
        return None
    return (
        float(min(max(u0, 0.0), w)),
        float(min(max(v0, 0.0), h)),
        float(min(max(u1, 0.0), w)),
        float(min(max(v1, 0.0), h)),
    )


def rects_intersect(a, b) -> bool:
    """Closed-rectangle overlap; touching edges count as intersecting."""
    if a is None or b is None:
        return False
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


_FACE_TOKEN = re.compile(r"^(-?\d+)(?:/(-?\d*))?(?:/(-?\d*))?$")


def load_obj(path, anchors_path=None) -> Mesh:
    """Read a Wavefront OBJ (v/vt/f records); polygons are fan-triangulated.

    Each vertex takes the texture coordinate of the first face corner that
    references it. Named anchors come from an optional sidecar text file with
    ``name = x y z`` lines.
    """
    verts, tex, tris = [], [], []
    vert_uv: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            verts.append([float(c) for c in parts[1:4]])
        elif tag == "vt":
            tex.append([float(c) for c in parts[1:3]])
        elif tag == "f":
            corners = []
            for tok in parts[1:]:
                m = _FACE_TOKEN.match(tok)
                if not m:
                    raise ValueError(f"{path}:{lineno}: bad face token {tok!r}")
                vi = int(m.group(1))
                vi = vi - 1 if vi > 0 else len(verts) + vi
                if m.group(2):
                    ti = int(m.group(2))
                    ti = ti - 1 if ti > 0 else len(tex) + ti
                    vert_uv.setdefault(vi, ti)
                corners.append(vi)
            if len(corners) < 3:
                raise ValueError(f"{path}:{lineno}: face with fewer than 3 vertices")
            for k in range(1, len(corners) - 1):
                tris.append([corners[0], corners[k], corners[k + 1]])
    if not verts:
        raise ValueError(f"{path}: no vertices")
    uv = np.zeros((len(verts), 2))
    for vi, ti in vert_uv.items():
        uv[vi] = tex[ti]
    anchors = load_anchors(anchors_path) if anchors_path else {}
    return Mesh(np.array(verts), np.array(tris, dtype=np.int64).reshape(-1, 3), uv, anchors)


def load_anchors(path) -> dict:
    anchors = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            name, rest = line.split("=", 1)
        else:
            name, _, rest = line.partition(" ")
        coords = rest.replace(",", " ").split()
        if len(coords) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'name = x y z'")
        anchors[name.strip()] = np.array([float(c) for c in coords])
    return anchors
