"""Built-in procedural meshes and the asset library used by the generator.

Hand proxies are built in the hand frame: palm center at the origin, fingers
extending along +x, thumb on the +y side and the palm facing -z (towards the
camera at identity orientation). Units are meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from .scene_core import Mesh, load_obj


class AssetError(Exception):
    """Raised when an asset manifest or mesh file cannot be loaded."""


def _merge(parts: List[Mesh], anchors=None) -> Mesh:
    verts, tris, uvs = [], [], []
    offset = 0
    for m in parts:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        uvs.append(m.uv)
        offset += m.vertices.shape[0]
    return Mesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(uvs), anchors or {})


def box(size, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Axis-aligned box with per-face uv (24 vertices, 12 triangles)."""
    hx, hy, hz = (s / 2.0 for s in size)
    c = np.asarray(center, dtype=float)
    faces = [
        ([1, 0, 0], [0, 1, 0], [0, 0, 1]),
        ([-1, 0, 0], [0, 0, 1], [0, 1, 0]),
        ([0, 1, 0], [0, 0, 1], [1, 0, 0]),
        ([0, -1, 0], [1, 0, 0], [0, 0, 1]),
        ([0, 0, 1], [1, 0, 0], [0, 1, 0]),
        ([0, 0, -1], [0, 1, 0], [1, 0, 0]),
    ]
    half = np.array([hx, hy, hz])
    verts, uvs, tris = [], [], []
    for n, a, b in faces:
        n, a, b = (np.array(x, dtype=float) for x in (n, a, b))
        base = len(verts)
        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            verts.append(c + half * (n + su * a + sv * b))
            uvs.append([(su + 1) / 2, (sv + 1) / 2])
        tris += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
    return Mesh(np.array(verts), np.array(tris), np.array(uvs))


def prism(a, b, radius: float, sides: int = 8, radius_b=None) -> Mesh:
    """Capped prism (cylinder or frustum of a cone) from point ``a`` to ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    rb = radius if radius_b is None else radius_b
    axis = b - a
    length = float(np.linalg.norm(axis))
    axis = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    verts, uvs, tris = [], [], []
    for k in range(sides + 1):
        ang = 2.0 * math.pi * k / sides
        d = math.cos(ang) * e1 + math.sin(ang) * e2
        verts += [a + radius * d, b + rb * d]
        uvs += [[k / sides, 0.0], [k / sides, length / (2.0 * math.pi * radius)]]
    for k in range(sides):
        i = 2 * k
        tris += [[i, i + 2, i + 1], [i + 1, i + 2, i + 3]]
    ca, cb = len(verts), len(verts) + 1
    verts += [a, b]
    uvs += [[0.5, 0.0], [0.5, length]]
    for k in range(sides):
        i = 2 * k
        tris += [[ca, i + 2, i], [cb, i + 1, i + 3]]
    return Mesh(np.array(verts), np.array(tris), np.array(uvs))


def uv_sphere(radius: float, rings: int = 8, segments: int = 12, center=(0.0, 0.0, 0.0)) -> Mesh:
    c = np.asarray(center, dtype=float)
    verts, uvs, tris = [], [], []
    for i in range(rings + 1):
        theta = math.pi * i / rings
        for j in range(segments + 1):
            phi = 2.0 * math.pi * j / segments
            verts.append(c + radius * np.array([math.sin(theta) * math.cos(phi),
                                                math.sin(theta) * math.sin(phi),
                                                math.cos(theta)]))
            uvs.append([j / segments, i / rings])
    row = segments + 1
    for i in range(rings):
        for j in range(segments):
            p = i * row + j
            tris += [[p, p + row, p + 1], [p + 1, p + row, p + row + 1]]
    return Mesh(np.array(verts), np.array(tris), np.array(uvs))


def torus(major: float, minor: float, segments: int = 16, sides: int = 6) -> Mesh:
    verts, uvs, tris = [], [], []
    for i in range(segments + 1):
        a = 2.0 * math.pi * i / segments
        for j in range(sides + 1):
            b = 2.0 * math.pi * j / sides
            r = major + minor * math.cos(b)
            verts.append([r * math.cos(a), r * math.sin(a), minor * math.sin(b)])
            uvs.append([i / segments * 4.0, j / sides])
    row = sides + 1
    for i in range(segments):
        for j in range(sides):
            p = i * row + j
            tris += [[p, p + row, p + 1], [p + 1, p + row, p + row + 1]]
    return Mesh(np.array(verts), np.array(tris), np.array(uvs))


def plane(width: float, height: float) -> Mesh:
    w, h = width / 2.0, height / 2.0
    verts = [[-w, -h, 0.0], [w, -h, 0.0], [w, h, 0.0], [-w, h, 0.0]]
    return Mesh(np.array(verts), np.array([[0, 1, 2], [0, 2, 3]]),
                np.array([[0, 0], [width, 0], [width, height], [0, height]]) * 10.0)


# Per-finger (flex of the three joints in degrees). Positive flex curls the
# finger towards the palm side (-z).
GESTURES: Dict[str, Dict[str, tuple]] = {
    "open": {"thumb": (10, 5, 5), "index": (0, 0, 0), "middle": (0, 0, 0), "ring": (0, 0, 0), "little": (0, 0, 0)},
    "fist": {"thumb": (40, 40, 30), "index": (85, 95, 60), "middle": (85, 95, 60), "ring": (85, 95, 60), "little": (85, 95, 60)},
    "point": {"thumb": (40, 40, 30), "index": (0, 0, 0), "middle": (85, 95, 60), "ring": (85, 95, 60), "little": (85, 95, 60)},
    "victory": {"thumb": (40, 40, 30), "index": (0, 0, 0), "middle": (0, 0, 0), "ring": (85, 95, 60), "little": (85, 95, 60)},
    "grasp": {"thumb": (25, 20, 15), "index": (35, 40, 30), "middle": (35, 40, 30), "ring": (35, 40, 30), "little": (35, 40, 30)},
    "thumbs_up": {"thumb": (-20, 0, 0), "index": (85, 95, 60), "middle": (85, 95, 60), "ring": (85, 95, 60), "little": (85, 95, 60)},
}

_FINGERS = {
    # name: (base point, base direction in the x-y plane (deg), phalanx lengths, radius)
    "index": ((0.045, 0.027, 0.0), 4.0, (0.040, 0.024, 0.020), 0.0085),
    "middle": ((0.047, 0.009, 0.0), 0.0, (0.044, 0.027, 0.021), 0.0090),
    "ring": ((0.045, -0.009, 0.0), -4.0, (0.041, 0.026, 0.020), 0.0085),
    "little": ((0.040, -0.027, 0.0), -9.0, (0.032, 0.020, 0.018), 0.0075),
    "thumb": ((-0.010, 0.042, 0.0), 50.0, (0.040, 0.030, 0.026), 0.0100),
}


def hand_proxy(gesture: str = "open", sides: int = 6) -> Mesh:
    """Right-hand proxy: palm box plus three-segment prism fingers."""
    flex = GESTURES[gesture]
    parts = [box((0.094, 0.086, 0.026))]
    tips = []
    for name, (base, heading, lengths, radius) in _FINGERS.items():
        h = math.radians(heading)
        forward = np.array([math.cos(h), math.sin(h), 0.0])
        p = np.array(base, dtype=float)
        bend = 0.0
        for seg, (length, angle) in enumerate(zip(lengths, flex[name])):
            bend += math.radians(angle)
            d = math.cos(bend) * forward + math.sin(bend) * np.array([0.0, 0.0, -1.0])
            q = p + length * d
            parts.append(prism(p, q, radius * (1.0 - 0.08 * seg), sides))
            p = q
        if name != "thumb":
            tips.append(p)
    tips = np.array(tips)
    fingertip = tips[np.argmax(np.linalg.norm(tips, axis=1))]
    return _merge(parts, {"palm_center": np.zeros(3), "fingertip": fingertip})


def hammer() -> Mesh:
    return _merge([prism((-0.12, 0, 0), (0.12, 0, 0), 0.012, 8),
                   box((0.03, 0.11, 0.03), center=(0.13, 0.0, 0.0))])


def screwdriver() -> Mesh:
    return _merge([prism((-0.09, 0, 0), (0.01, 0, 0), 0.015, 8),
                   prism((0.01, 0, 0), (0.11, 0, 0), 0.0035, 6)])


def wrench() -> Mesh:
    ring = torus(0.02, 0.006)
    ring = Mesh(ring.vertices + np.array([0.11, 0.0, 0.0]), ring.triangles, ring.uv)
    return _merge([box((0.2, 0.025, 0.008)), ring])


def body_without_hands() -> Mesh:
    """Articulated human proxy whose forearms end at the wrists (about 1.7 m tall)."""
    parts = [
        box((0.36, 0.55, 0.2), center=(0.0, -0.35, 0.0)),
        uv_sphere(0.11, center=(0.0, -0.75, 0.0)),
        prism((-0.21, -0.58, 0), (-0.32, -0.3, 0.05), 0.045),
        prism((-0.32, -0.3, 0.05), (-0.3, -0.05, -0.15), 0.04),
        prism((0.21, -0.58, 0), (0.3, -0.32, -0.08), 0.045),
        prism((0.3, -0.32, -0.08), (0.18, -0.22, -0.3), 0.04),
        prism((-0.1, -0.07, 0), (-0.12, 0.4, 0.02), 0.07),
        prism((-0.12, 0.4, 0.02), (-0.12, 0.85, 0.0), 0.055),
        prism((0.1, -0.07, 0), (0.12, 0.4, 0.02), 0.07),
        prism((0.12, 0.4, 0.02), (0.12, 0.85, 0.0), 0.055),
    ]
    return _merge(parts)


def builtin_distractors() -> Dict[str, Mesh]:
    return {
        "cube": box((0.08, 0.08, 0.08)),
        "slab": box((0.2, 0.12, 0.02)),
        "cylinder": prism((0, 0, -0.06), (0, 0, 0.06), 0.03, 12),
        "cone": prism((0, 0, -0.05), (0, 0, 0.05), 0.04, 12, radius_b=0.002),
        "sphere": uv_sphere(0.045),
        "torus": torus(0.05, 0.015),
        "panel": plane(0.4, 0.3),
        "hammer": hammer(),
        "screwdriver": screwdriver(),
        "wrench": wrench(),
    }


@dataclass
class AssetLibrary:
    hands: Dict[str, Mesh] = field(default_factory=dict)
    distractors: Dict[str, Mesh] = field(default_factory=dict)
    body: Mesh | None = None

    def __post_init__(self):
        for name, mesh in self.hands.items():
            try:
                mesh.require_hand_anchors()
            except ValueError as exc:
                raise AssetError(f"hand mesh {name!r}: {exc}") from None

    def validate(self) -> None:
        if not self.hands:
            raise AssetError("asset library has no hand meshes")
        if not self.distractors:
            raise AssetError("asset library has no distractor meshes")

    def mesh(self, kind: str, mesh_id: str) -> Mesh:
        if kind == "hand":
            return self.hands[mesh_id]
        if kind == "body":
            return self.body
        return self.distractors[mesh_id]

    def manifest(self) -> dict:
        return {
            "hands": sorted(self.hands),
            "distractors": sorted(self.distractors),
            "body": self.body is not None,
        }


def builtin_library() -> AssetLibrary:
    return AssetLibrary(
        hands={g: hand_proxy(g) for g in GESTURES},
        distractors=builtin_distractors(),
        body=body_without_hands(),
    )


def load_library(manifest: dict | None, base_dir=".") -> AssetLibrary:
    """Build the library from a manifest dict.

    Manifest keys: ``builtin`` (default true) seeds the built-in meshes;
    ``hands`` and ``distractors`` are lists of ``{"id", "obj", "anchors"}``
    entries whose paths resolve relative to ``base_dir``.
    """
    manifest = manifest or {}
    lib = builtin_library() if manifest.get("builtin", True) else AssetLibrary()
    base = Path(base_dir)
    for kind in ("hands", "distractors"):
        for entry in manifest.get(kind, []):
            try:
                mesh = load_obj(base / entry["obj"],
                                base / entry["anchors"] if entry.get("anchors") else None)
            except (OSError, ValueError, KeyError) as exc:
                raise AssetError(f"{kind} entry {entry.get('id', '?')!r}: {exc}") from None
            if kind == "hands" and not mesh.is_hand:
                raise AssetError(f"hand entry {entry['id']!r}: anchors fingertip and palm_center required")
            getattr(lib, kind)[entry["id"]] = mesh
    lib.validate()
    return lib


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
