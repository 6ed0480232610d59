"""Seed-driven construction of per-frame scene descriptions.

Every frame draws from its own generator: ``numpy.random.PCG64`` seeded with
``SeedSequence((master_seed, frame_index))``. SeedSequence hashes both words
into the PCG state, so frames are independent of call order and worker
count. Changing this scheme breaks reproducibility of existing datasets.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .assets import AssetLibrary
from .scene_core import (
    CameraModel,
    Frustum,
    Mesh,
    Pose,
    point_in_frustum,
    points_in_frustum,
    rects_intersect,
    screen_aabb,
)
from .textures import TEXTURE_KINDS, TextureSpec

log = logging.getLogger(__name__)

RNG_NAME = "numpy.PCG64/SeedSequence(master_seed, frame_index)"
MAX_HANDS = 2
# Orientation candidates drawn per rejection round trip.
POSE_BATCH = 32


class PoseSamplingError(RuntimeError):
    """No admissible orientation found for an anchor within the round budget."""


@dataclass(frozen=True)
class Material:
    texture: TextureSpec = field(default_factory=TextureSpec)
    diffuse: float = 0.8
    specular: float = 0.0
    emissive: float = 0.0

    def __post_init__(self):
        for name in ("diffuse", "specular", "emissive"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"texture": self.texture.to_dict(), "diffuse": self.diffuse,
                "specular": self.specular, "emissive": self.emissive}

    @classmethod
    def from_dict(cls, d) -> "Material":
        return cls(TextureSpec.from_dict(d["texture"]), d["diffuse"], d["specular"], d["emissive"])


@dataclass(frozen=True)
class Light:
    """Directional light; ``direction`` is the unit direction the light travels."""

    direction: Tuple[float, float, float]
    intensity: Tuple[float, float, float]


@dataclass(frozen=True)
class LightSet:
    lights: Tuple[Light, ...]
    ambient: Tuple[float, float, float]


@dataclass(frozen=True)
class HandInstance:
    mesh_id: str
    gesture_id: str
    pose: Pose
    material: Material
    mirrored: bool = False


@dataclass(frozen=True)
class Distractor:
    mesh_id: str
    pose: Pose
    scale: float
    material: Material


@dataclass(frozen=True)
class BodyModel:
    pose: Pose
    material: Material
    scale: float = 1.0


@dataclass(frozen=True)
class SceneSpec:
    frame_index: int
    camera: CameraModel
    hand_instances: Tuple[HandInstance, ...] = ()
    distractors: Tuple[Distractor, ...] = ()
    body_model: Optional[BodyModel] = None
    lights: LightSet = field(default_factory=lambda: LightSet((Light((0.0, 0.0, 1.0), (1.0, 1.0, 1.0)),), (0.2, 0.2, 0.2)))
    background: Material = field(default_factory=Material)
    seed: int = 0
    log: Tuple[dict, ...] = ()

    def __post_init__(self):
        if len(self.hand_instances) > MAX_HANDS:
            raise ValueError("at most two hand instances per frame")
        if not 1 <= len(self.lights.lights) <= 4:
            raise ValueError("a frame carries one to four directional lights")

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "seed": self.seed,
            "camera": asdict(self.camera),
            "hand_instances": [
                {"mesh_id": h.mesh_id, "gesture_id": h.gesture_id, "pose": h.pose.to_dict(),
                 "material": h.material.to_dict(), "mirrored": h.mirrored}
                for h in self.hand_instances
            ],
            "distractors": [
                {"mesh_id": d.mesh_id, "pose": d.pose.to_dict(), "scale": d.scale,
                 "material": d.material.to_dict()}
                for d in self.distractors
            ],
            "body_model": None if self.body_model is None else {
                "pose": self.body_model.pose.to_dict(), "material": self.body_model.material.to_dict(),
                "scale": self.body_model.scale},
            "lights": [{"direction": list(l.direction), "intensity": list(l.intensity)}
                       for l in self.lights.lights],
            "ambient": list(self.lights.ambient),
            "background": self.background.to_dict(),
            "log": list(self.log),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


@dataclass(frozen=True)
class GenerationPolicy:
    grid_step: float = 0.02
    roll_limit: float = 15.0
    pitch_limit: float = 30.0
    yaw_range: Tuple[float, float] = (0.0, 360.0)
    instance_count_weights: Tuple[float, float, float] = (0.10, 0.45, 0.45)
    distractor_count_range: Tuple[int, int] = (2, 6)
    distractor_scale_range: Tuple[float, float] = (0.6, 1.6)
    distractor_depth_range: Tuple[float, float] = (0.1, 1.5)
    body_model_probability: float = 0.25
    body_depth_range: Tuple[float, float] = (0.9, 2.0)
    max_relocation_attempts: int = 50
    max_pose_rounds: int = 1000
    max_anchor_retries: int = 10
    unrealistic_bias: float = 0.75
    mirror_left_hands: bool = False
    left_hand_probability: float = 0.5

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> List[str]:
        out = []
        if not self.grid_step > 0:
            out.append("grid_step: must be > 0")
        w = self.instance_count_weights
        if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            out.append("instance_count_weights: need three non-negative weights summing to 1")
        lo, hi = self.distractor_count_range
        if lo < 0 or hi < lo:
            out.append("distractor_count_range: need 0 <= min <= max")
        if not (0 <= self.roll_limit <= 180 and 0 <= self.pitch_limit < 90):
            out.append("roll_limit/pitch_limit: out of range")
        if self.yaw_range[1] < self.yaw_range[0]:
            out.append("yaw_range: max below min")
        for name in ("unrealistic_bias", "body_model_probability", "left_hand_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                out.append(f"{name}: must lie in [0, 1]")
        for name in ("max_relocation_attempts", "max_pose_rounds", "max_anchor_retries"):
            if getattr(self, name) < 1:
                out.append(f"{name}: must be >= 1")
        return out

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def frame_rng(master_seed: int, frame_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(frame_index)])
    return np.random.Generator(np.random.PCG64(ss))


@lru_cache(maxsize=16)
def _grid_cached(camera: CameraModel, step: float) -> np.ndarray:
    fr = Frustum(camera)
    k_lo = math.ceil(camera.near_depth / step - 1e-9)
    k_hi = math.floor(camera.far_depth / step + 1e-9)
    planes = []
    for kz in range(k_lo, k_hi + 1):
        z = kz * step
        nx = math.floor(z * camera.tan_half_h / step + 1e-6)
        ny = math.floor(z * camera.tan_half_v / step + 1e-6)
        ky, kx = np.meshgrid(np.arange(-ny, ny + 1), np.arange(-nx, nx + 1), indexing="ij")
        pts = np.stack([kx.ravel() * step, ky.ravel() * step, np.full(kx.size, z)], axis=1)
        planes.append(pts[points_in_frustum(fr, pts)])
    grid = np.concatenate(planes) if planes else np.zeros((0, 3))
    grid.setflags(write=False)
    return grid


def grid_positions(frustum: Frustum, step: float) -> np.ndarray:
    """Lattice points (multiples of ``step``) inside the frustum.

    Rows are ordered by depth, then vertical, then horizontal coordinate.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    return _grid_cached(frustum.camera, float(step))


def hand_anchor_points(mesh: Mesh, pose: Pose) -> np.ndarray:
    """World positions of (fingertip, palm_center)."""
    return pose.apply(np.stack([mesh.anchor_points["fingertip"], mesh.anchor_points["palm_center"]]))


def sample_hand_pose(rng: np.random.Generator, anchor_position, policy: GenerationPolicy,
                     camera: CameraModel, mesh: Mesh) -> Pose:
    """Rejection-sample an orientation keeping both hand anchors in the frustum.

    The palm center lands exactly on ``anchor_position``. Candidates are drawn
    in batches of ``POSE_BATCH`` and the first admissible one wins; at most
    ``policy.max_pose_rounds`` candidates are tried.
    """
    mesh.require_hand_anchors()
    anchor = np.asarray(anchor_position, dtype=float)
    fr = Frustum(camera)
    palm = mesh.anchor_points["palm_center"]
    tip = mesh.anchor_points["fingertip"]
    y0, y1 = policy.yaw_range
    remaining = policy.max_pose_rounds
    while remaining > 0:
        n = min(POSE_BATCH, remaining)
        remaining -= n
        roll = rng.uniform(-policy.roll_limit, policy.roll_limit, size=n)
        pitch = rng.uniform(-policy.pitch_limit, policy.pitch_limit, size=n)
        yaw = y0 + (y1 - y0) * rng.random(size=n)
        rots = Rotation.from_euler("ZYX", np.stack([yaw, pitch, roll], axis=1), degrees=True)
        mats = rots.as_matrix()
        trans = anchor - mats @ palm
        ok = points_in_frustum(fr, mats @ tip + trans) & points_in_frustum(fr, mats @ palm + trans)
        if ok.any():
            k = int(np.argmax(ok))
            x, y, z, w = rots[k].as_quat()
            return Pose(trans[k], np.array([w, x, y, z]))
    raise PoseSamplingError(f"no admissible hand orientation at anchor {anchor.tolist()}")


def sample_lights(rng: np.random.Generator) -> LightSet:
    n = int(rng.integers(1, 5))
    lights = []
    for _ in range(n):
        d = rng.normal(size=3)
        d[2] = abs(d[2])
        d = d / np.linalg.norm(d)
        gain = rng.uniform(0.3, 1.0)
        tint = rng.uniform(0.7, 1.0, size=3)
        lights.append(Light(tuple(float(c) for c in d), tuple(float(c) for c in gain * tint)))
    ambient = tuple(float(c) for c in rng.uniform(0.1, 0.4) * rng.uniform(0.8, 1.0, size=3))
    return LightSet(tuple(lights), ambient)


def _color(rng) -> Tuple[float, float, float]:
    return tuple(float(c) for c in rng.random(3))


def sample_material(rng: np.random.Generator, unrealistic_bias: float = 0.75,
                    emissive_max: float = 0.3) -> Material:
    """Non-solid procedural kinds are drawn with probability ``unrealistic_bias``."""
    if rng.random() < unrealistic_bias:
        kind = TEXTURE_KINDS[1 + int(rng.integers(0, len(TEXTURE_KINDS) - 1))]
    else:
        kind = "solid"
    tex = TextureSpec(
        kind=kind,
        palette=(_color(rng), _color(rng)),
        scale=float(rng.uniform(2.0, 24.0)),
        angle=float(rng.uniform(0.0, 180.0)),
        seed=int(rng.integers(0, 2**31)),
    )
    return Material(tex, float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.0, 1.0)),
                    float(rng.uniform(0.0, emissive_max)))


def _random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def _hand_rects(spec: SceneSpec, assets: AssetLibrary) -> list:
    rects = []
    for h in spec.hand_instances:
        mesh = _hand_mesh(assets, h)
        rects.append(screen_aabb(spec.camera, mesh, h.pose))
    return rects


def _hand_mesh(assets: AssetLibrary, h: HandInstance) -> Mesh:
    mesh = assets.hands[h.mesh_id]
    return mesh.mirrored() if h.mirrored else mesh


def _relocate(rng, camera, mesh, depth_range, scale, hand_rects, attempts, rotation_fn):
    """Draw positions until the object's screen box avoids every hand box."""
    w, h = camera.image_width, camera.image_height
    for _ in range(attempts):
        depth = rng.uniform(*depth_range)
        center = camera.unproject(rng.uniform(0, w), rng.uniform(0, h), depth)
        pose = Pose(center, rotation_fn(rng))
        rect = screen_aabb(camera, mesh, pose, scale)
        if rect is None:
            continue
        if any(rects_intersect(rect, r) for r in hand_rects):
            continue
        return pose
    return None


def place_distractors(rng: np.random.Generator, spec: SceneSpec, policy: GenerationPolicy,
                      assets: AssetLibrary, count: Optional[int] = None) -> SceneSpec:
    """Add distractors whose screen boxes stay clear of every hand box.

    A distractor that still overlaps after ``max_relocation_attempts`` draws is
    dropped and the drop is recorded in the frame log.
    """
    if count is None:
        lo, hi = policy.distractor_count_range
        count = int(rng.integers(lo, hi + 1))
    if count == 0:
        return spec
    hand_rects = [r for r in _hand_rects(spec, assets) if r is not None]
    names = sorted(assets.distractors)
    placed, events = list(spec.distractors), list(spec.log)
    for _ in range(count):
        mesh_id = names[int(rng.integers(0, len(names)))]
        scale = float(rng.uniform(*policy.distractor_scale_range))
        material = sample_material(rng, policy.unrealistic_bias)
        pose = _relocate(rng, spec.camera, assets.distractors[mesh_id], policy.distractor_depth_range,
                         scale, hand_rects, policy.max_relocation_attempts, _random_rotation)
        if pose is None:
            events.append({"event": "distractor_dropped", "mesh_id": mesh_id})
            continue
        placed.append(Distractor(mesh_id, pose, scale, material))
    return replace(spec, distractors=tuple(placed), log=tuple(events))


def _upright_rotation(rng) -> np.ndarray:
    pose = Pose.from_euler(np.zeros(3), roll=rng.uniform(-10, 10), pitch=rng.uniform(-180, 180),
                           yaw=rng.uniform(-10, 10))
    # Body frame has y pointing down in the image; spin about the vertical axis
    # is the "pitch" slot of the Z-Y-X convention.
    return pose.rotation


def place_body(rng, spec: SceneSpec, policy: GenerationPolicy, assets: AssetLibrary) -> SceneSpec:
    if assets.body is None or rng.random() >= policy.body_model_probability:
        return spec
    material = sample_material(rng, policy.unrealistic_bias)
    scale = float(rng.uniform(0.9, 1.1))
    hand_rects = [r for r in _hand_rects(spec, assets) if r is not None]
    pose = _relocate(rng, spec.camera, assets.body, policy.body_depth_range, scale, hand_rects,
                     policy.max_relocation_attempts, _upright_rotation)
    if pose is None:
        return replace(spec, log=spec.log + ({"event": "body_dropped"},))
    return replace(spec, body_model=BodyModel(pose, material, scale))


def _draw_hand_count(rng, weights: Sequence[float]) -> int:
    r = rng.random()
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if r < acc:
            return k
    return len(weights) - 1


def _pick_hand(rng, assets: AssetLibrary, policy: GenerationPolicy):
    names = sorted(assets.hands)
    mesh_id = names[int(rng.integers(0, len(names)))]
    mirrored = bool(policy.mirror_left_hands and rng.random() < policy.left_hand_probability)
    return mesh_id, mirrored


def _anchored_hand(rng, grid, first_cell, assets, policy, camera, events):
    """First hand: its grid cell, then re-drawn cells when the pose budget runs out."""
    mesh_id, mirrored = _pick_hand(rng, assets, policy)
    mesh = assets.hands[mesh_id].mirrored() if mirrored else assets.hands[mesh_id]
    cell = first_cell
    for attempt in range(policy.max_anchor_retries):
        if attempt:
            cell = int(rng.integers(0, len(grid)))
        try:
            pose = sample_hand_pose(rng, grid[cell], policy, camera, mesh)
        except PoseSamplingError:
            events.append({"event": "anchor_redrawn", "cell": cell})
            continue
        material = sample_material(rng, policy.unrealistic_bias)
        return HandInstance(mesh_id, mesh_id, pose, material, mirrored), cell
    return None, cell


def _second_hand(rng, grid, first_cell, first_rect, assets, policy, camera):
    mesh_id, mirrored = _pick_hand(rng, assets, policy)
    mesh = assets.hands[mesh_id].mirrored() if mirrored else assets.hands[mesh_id]
    n = len(grid)
    if n < 2:
        return None
    for _ in range(policy.max_relocation_attempts):
        cell = int(rng.integers(0, n - 1))
        cell += cell >= first_cell
        try:
            pose = sample_hand_pose(rng, grid[cell], policy, camera, mesh)
        except PoseSamplingError:
            continue
        rect = screen_aabb(camera, mesh, pose)
        if rect is None or rects_intersect(rect, first_rect):
            continue
        material = sample_material(rng, policy.unrealistic_bias)
        return HandInstance(mesh_id, mesh_id, pose, material, mirrored)
    return None


# The first hand is re-posed this many times when no second hand fits beside it.
SECOND_HAND_REPOSES = 4


def build_frame_spec(master_seed: int, frame_index: int, policy: GenerationPolicy,
                     assets: AssetLibrary, camera: Optional[CameraModel] = None) -> SceneSpec:
    """Deterministic scene description for one frame."""
    camera = camera or CameraModel()
    rng = frame_rng(master_seed, frame_index)
    grid = grid_positions(Frustum(camera), policy.grid_step)
    events: list = []
    n_hands = _draw_hand_count(rng, policy.instance_count_weights)
    hands: list = []
    if n_hands and len(grid) == 0:
        events.append({"event": "instance_free_fallback", "reason": "empty grid"})
        n_hands = 0
    if n_hands:
        first_cell = frame_index % len(grid)
        for repose in range(SECOND_HAND_REPOSES + 1):
            first, cell = _anchored_hand(rng, grid, first_cell, assets, policy, camera, events)
            if first is None:
                events.append({"event": "instance_free_fallback", "reason": "pose budget exhausted"})
                break
            hands = [first]
            if n_hands < 2:
                break
            rect = screen_aabb(camera, _hand_mesh(assets, first), first.pose)
            second = _second_hand(rng, grid, cell, rect, assets, policy, camera)
            if second is not None:
                hands.append(second)
                break
            events.append({"event": "second_hand_retry", "round": repose})
        else:
            events.append({"event": "second_hand_dropped"})
    spec = SceneSpec(
        frame_index=frame_index,
        camera=camera,
        hand_instances=tuple(hands),
        lights=sample_lights(rng),
        background=sample_material(rng, policy.unrealistic_bias, emissive_max=1.0),
        seed=int(master_seed),
        log=tuple(events),
    )
    spec = place_body(rng, spec, policy, assets)
    return place_distractors(rng, spec, policy, assets)
