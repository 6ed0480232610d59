"""CPU rasterization of a scene description into color, depth and instance-ID buffers.

Rasterization samples pixel centers and resolves visibility with a z-buffer
on camera-axis depth; the first triangle drawn wins exact depth ties. The
per-pixel arithmetic only uses IEEE basic operations on per-triangle
coefficients, so splitting the image into row bands (``workers > 1``) leaves
the output bytes unchanged.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from PIL import Image

from . import textures
from .assets import AssetLibrary
from .randomizer import Material, SceneSpec
from .scene_core import CLIP_DEPTH, CameraModel

log = logging.getLogger(__name__)

SHININESS_SQUARINGS = 5  # Blinn exponent 2**5 = 32
DEPTH_NEAR = 0.2
DEPTH_FAR = 1.0


@dataclass(frozen=True, eq=False)
class FrameBuffers:
    color: np.ndarray  # (H, W, 3) uint8
    depth_m: np.ndarray  # (H, W) float64, 0 where nothing was hit
    instance_id: np.ndarray  # (H, W) int32, k >= 1 for hand instance k


@dataclass(frozen=True, eq=False)
class EncodedSample:
    rgb_png: bytes
    depth_png: bytes
    masks: List[np.ndarray] = field(default_factory=list)
    mask_ids: List[int] = field(default_factory=list)
    occluded_ids: List[int] = field(default_factory=list)


@dataclass
class _Object:
    vertices: np.ndarray  # camera frame
    triangles: np.ndarray
    uv: np.ndarray
    owner: int
    material: Material


def scene_objects(spec: SceneSpec, assets: AssetLibrary) -> List[_Object]:
    """Everything to draw, in draw order: hands, body model, distractors."""
    objs = []
    for k, h in enumerate(spec.hand_instances, 1):
        mesh = assets.hands[h.mesh_id]
        if h.mirrored:
            mesh = mesh.mirrored()
        objs.append(_Object(h.pose.apply(mesh.vertices), mesh.triangles, mesh.uv, k, h.material))
    if spec.body_model is not None and assets.body is not None:
        b = spec.body_model
        objs.append(_Object(b.pose.apply(assets.body.vertices, b.scale), assets.body.triangles,
                            assets.body.uv, 0, b.material))
    for d in spec.distractors:
        mesh = assets.distractors[d.mesh_id]
        objs.append(_Object(d.pose.apply(mesh.vertices, d.scale), mesh.triangles, mesh.uv, 0, d.material))
    return objs


def _clip_triangle(p: np.ndarray, t: np.ndarray):
    """Clip one triangle against z >= CLIP_DEPTH; returns 0, 1 or 2 triangles."""
    poly = []
    for i in range(3):
        a, b = p[i], p[(i + 1) % 3]
        ta, tb = t[i], t[(i + 1) % 3]
        ina, inb = a[2] >= CLIP_DEPTH, b[2] >= CLIP_DEPTH
        if ina:
            poly.append((a, ta))
        if ina != inb:
            s = (CLIP_DEPTH - a[2]) / (b[2] - a[2])
            poly.append((a + (b - a) * s, ta + (tb - ta) * s))
    out = []
    for k in range(1, len(poly) - 1):
        out.append((np.stack([poly[0][0], poly[k][0], poly[k + 1][0]]),
                    np.stack([poly[0][1], poly[k][1], poly[k + 1][1]])))
    return out


@dataclass
class _TriangleSet:
    pos: np.ndarray  # (T, 3, 3) camera frame
    uv: np.ndarray  # (T, 3, 2)
    obj: np.ndarray  # (T,)
    coef: np.ndarray = None  # (T, 3, 3) rows (a, b, c): lambda_i = a*px + b*py + c
    inv_z: np.ndarray = None  # (T, 3)
    bbox: np.ndarray = None  # (T, 4) pixel index ranges x0, x1, y0, y1 (half-open)


def _assemble(objs: List[_Object], camera: CameraModel) -> _TriangleSet:
    pos, uv, obj = [], [], []
    for i, o in enumerate(objs):
        if o.triangles.size == 0:
            continue
        p = o.vertices[o.triangles]
        t = o.uv[o.triangles]
        z = p[:, :, 2]
        front = (z >= CLIP_DEPTH).all(axis=1)
        pos.append(p[front])
        uv.append(t[front])
        obj.append(np.full(int(front.sum()), i))
        for j in np.nonzero(~front & (z >= CLIP_DEPTH).any(axis=1))[0]:
            for cp, ct in _clip_triangle(p[j], t[j]):
                pos.append(cp[None])
                uv.append(ct[None])
                obj.append(np.array([i]))
    if not pos:
        return _TriangleSet(np.zeros((0, 3, 3)), np.zeros((0, 3, 2)), np.zeros(0, dtype=np.int64),
                            np.zeros((0, 3, 3)), np.zeros((0, 3)), np.zeros((0, 4), dtype=np.int64))
    ts = _TriangleSet(np.concatenate(pos), np.concatenate(uv), np.concatenate(obj).astype(np.int64))

    z = ts.pos[:, :, 2]
    u = camera.cx + camera.fx * ts.pos[:, :, 0] / z
    v = camera.cy + camera.fy * ts.pos[:, :, 1] / z
    x0, x1, x2 = u[:, 0], u[:, 1], u[:, 2]
    y0, y1, y2 = v[:, 0], v[:, 1], v[:, 2]
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    keep = area != 0.0
    w, h = camera.image_width, camera.image_height
    bx0 = np.ceil(np.minimum(np.minimum(x0, x1), x2) - 0.5)
    bx1 = np.floor(np.maximum(np.maximum(x0, x1), x2) - 0.5) + 1
    by0 = np.ceil(np.minimum(np.minimum(y0, y1), y2) - 0.5)
    by1 = np.floor(np.maximum(np.maximum(y0, y1), y2) - 0.5) + 1
    bx0, by0 = np.clip(bx0, 0, w), np.clip(by0, 0, h)
    bx1, by1 = np.clip(bx1, 0, w), np.clip(by1, 0, h)
    keep &= (bx1 > bx0) & (by1 > by0)

    safe = np.where(keep, area, 1.0)
    coef = np.empty((len(area), 3, 3))
    # lambda_i is the signed area opposite vertex i divided by the full area
    for i, (xa, ya, xb, yb) in enumerate(((x1, y1, x2, y2), (x2, y2, x0, y0), (x0, y0, x1, y1))):
        coef[:, i, 0] = (ya - yb) / safe
        coef[:, i, 1] = (xb - xa) / safe
        coef[:, i, 2] = (xa * yb - xb * ya) / safe
    ts.coef = coef
    ts.inv_z = 1.0 / z
    ts.bbox = np.stack([bx0, bx1, by0, by1], axis=1).astype(np.int64)
    ts.bbox[~keep] = 0
    return ts


def _raster_band(ts: _TriangleSet, row0: int, row1: int, width: int):
    n_rows = row1 - row0
    zbuf = np.full((n_rows, width), np.inf)
    tid = np.full((n_rows, width), -1, dtype=np.int64)
    b1 = np.zeros((n_rows, width))
    b2 = np.zeros((n_rows, width))
    centers_x = np.arange(width) + 0.5
    centers_y = np.arange(row0, row1) + 0.5
    bbox, coef, inv_z = ts.bbox, ts.coef, ts.inv_z
    live = np.nonzero((bbox[:, 1] > bbox[:, 0]) & (bbox[:, 3] > row0) & (bbox[:, 2] < row1))[0]
    for t in live:
        x0, x1, y0, y1 = bbox[t]
        y0, y1 = max(y0, row0), min(y1, row1)
        px = centers_x[x0:x1][None, :]
        py = centers_y[y0 - row0:y1 - row0][:, None]
        c = coef[t]
        l0 = c[0, 0] * px + c[0, 1] * py + c[0, 2]
        l1 = c[1, 0] * px + c[1, 1] * py + c[1, 2]
        l2 = c[2, 0] * px + c[2, 1] * py + c[2, 2]
        inside = (l0 >= 0.0) & (l1 >= 0.0) & (l2 >= 0.0)
        if not inside.any():
            continue
        iz0, iz1, iz2 = inv_z[t]
        w1 = l1 * iz1
        w2 = l2 * iz2
        iz = l0 * iz0 + w1 + w2
        z = 1.0 / iz
        rows = slice(y0 - row0, y1 - row0)
        cols = slice(x0, x1)
        win = inside & (z < zbuf[rows, cols])
        if not win.any():
            continue
        zbuf[rows, cols][win] = z[win]
        tid[rows, cols][win] = t
        b1[rows, cols][win] = (w1 / iz)[win]
        b2[rows, cols][win] = (w2 / iz)[win]
    return zbuf, tid, b1, b2


def _raster(ts: _TriangleSet, camera: CameraModel, workers: int):
    w, h = camera.image_width, camera.image_height
    workers = max(1, min(int(workers), h))
    if workers == 1:
        return _raster_band(ts, 0, h, w)
    edges = np.linspace(0, h, workers + 1).round().astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda k: _raster_band(ts, edges[k], edges[k + 1], w), range(workers)))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))


def _pow_blinn(x: np.ndarray) -> np.ndarray:
    for _ in range(SHININESS_SQUARINGS):
        x = x * x
    return x


def _shade(spec: SceneSpec, objs: List[_Object], ts: _TriangleSet, tid, b1, b2, zbuf) -> np.ndarray:
    cam = spec.camera
    h, w = tid.shape
    ambient = np.asarray(spec.lights.ambient, dtype=float)
    color = np.zeros((h, w, 3))

    hit = tid >= 0
    bg = spec.background
    ys, xs = np.nonzero(~hit)
    if ys.size:
        aspect = w / h
        tex = textures.evaluate(bg.texture, (xs + 0.5) / w * aspect, (ys + 0.5) / h)
        color[ys, xs] = tex * (ambient + bg.emissive)
    if not hit.any():
        return color

    ys, xs = np.nonzero(hit)
    t = tid[ys, xs]
    c1, c2 = b1[ys, xs], b2[ys, xs]
    c0 = 1.0 - c1 - c2
    tuv = ts.uv[t]
    uv = tuv[:, 0] * c0[:, None] + tuv[:, 1] * c1[:, None] + tuv[:, 2] * c2[:, None]

    tri = ts.pos[t]
    e1, e2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    n = np.stack([e1[:, 1] * e2[:, 2] - e1[:, 2] * e2[:, 1],
                  e1[:, 2] * e2[:, 0] - e1[:, 0] * e2[:, 2],
                  e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]], axis=1)
    n /= np.sqrt(n[:, 0] ** 2 + n[:, 1] ** 2 + n[:, 2] ** 2)[:, None]
    z = zbuf[ys, xs]
    p = np.stack([(xs + 0.5 - cam.cx) / cam.fx * z, (ys + 0.5 - cam.cy) / cam.fy * z, z], axis=1)
    view = -p / np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2 + p[:, 2] ** 2)[:, None]
    facing = n[:, 0] * view[:, 0] + n[:, 1] * view[:, 1] + n[:, 2] * view[:, 2]
    n[facing < 0] *= -1.0  # two-sided surfaces

    diffuse_acc = np.zeros((len(t), 3))
    spec_acc = np.zeros((len(t), 3))
    for light in spec.lights.lights:
        to_light = -np.asarray(light.direction, dtype=float)
        intensity = np.asarray(light.intensity, dtype=float)
        ndl = np.maximum(0.0, n[:, 0] * to_light[0] + n[:, 1] * to_light[1] + n[:, 2] * to_light[2])
        half = view + to_light
        half /= np.maximum(np.sqrt(half[:, 0] ** 2 + half[:, 1] ** 2 + half[:, 2] ** 2), 1e-12)[:, None]
        ndh = np.maximum(0.0, n[:, 0] * half[:, 0] + n[:, 1] * half[:, 1] + n[:, 2] * half[:, 2])
        lit = ndl > 0.0
        diffuse_acc += ndl[:, None] * intensity
        spec_acc += (_pow_blinn(ndh) * lit)[:, None] * intensity

    owner_obj = ts.obj[t]
    out = np.empty((len(t), 3))
    for i, o in enumerate(objs):
        sel = owner_obj == i
        if not sel.any():
            continue
        m = o.material
        tex = textures.evaluate(m.texture, uv[sel, 0], uv[sel, 1])
        shade = ambient + m.diffuse * diffuse_acc[sel] + m.specular * spec_acc[sel] + m.emissive
        out[sel] = tex * shade
    color[ys, xs] = out
    return color


def rasterize(spec: SceneSpec, assets: AssetLibrary, workers: int = 1) -> FrameBuffers:
    """Render ``spec`` into aligned color, metric depth and instance-ID buffers."""
    cam = spec.camera
    objs = scene_objects(spec, assets)
    ts = _assemble(objs, cam)
    zbuf, tid, b1, b2 = _raster(ts, cam, workers)
    color = _shade(spec, objs, ts, tid, b1, b2, zbuf)
    rgb = np.floor(np.clip(color, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    hit = tid >= 0
    depth = np.where(hit, zbuf, 0.0)
    inst = np.zeros(tid.shape, dtype=np.int32)
    if hit.any():
        owners = np.array([o.owner for o in objs], dtype=np.int32)
        inst[hit] = owners[ts.obj[tid[hit]]]
    return FrameBuffers(rgb, depth, inst)


def encode_depth(depth_m, near: float = DEPTH_NEAR, far: float = DEPTH_FAR,
                 missing_value: int = 255) -> np.ndarray:
    """Linear 8-bit encoding of camera-axis depth over [near, far].

    Values round half away from zero; depth 0 (no return) maps to
    ``missing_value``.
    """
    if not near < far:
        raise ValueError("near must be below far")
    d = np.asarray(depth_m, dtype=float)
    t = np.clip((d - near) / (far - near), 0.0, 1.0)
    # snap float noise so exact half steps (e.g. 127.5 at 0.6 m) round up
    scaled = np.round(255.0 * t, 10)
    code = np.floor(scaled + 0.5).astype(np.uint8)
    return np.where(d == 0.0, np.uint8(missing_value), code).astype(np.uint8)


def decode_depth(code, near: float = DEPTH_NEAR, far: float = DEPTH_FAR) -> np.ndarray:
    """Center of the depth interval a code stands for, in meters."""
    return near + np.asarray(code, dtype=float) / 255.0 * (far - near)


def extract_masks(instance_id: np.ndarray, expected_ids=()) -> Tuple[List[np.ndarray], List[int], List[int]]:
    """Binary {0, 255} masks per distinct nonzero ID in ascending ID order.

    Returns ``(masks, ids, occluded)`` where ``occluded`` lists the entries of
    ``expected_ids`` that cover no pixel.
    """
    ids = [int(i) for i in np.unique(instance_id) if i != 0]
    masks = [np.where(instance_id == i, 255, 0).astype(np.uint8) for i in ids]
    occluded = [int(i) for i in expected_ids if int(i) not in ids]
    for i in occluded:
        log.info("instance %d fully occluded", i)
    return masks, ids, occluded


def png_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def encode_sample(buffers: FrameBuffers, n_instances: int) -> EncodedSample:
    masks, ids, occluded = extract_masks(buffers.instance_id, range(1, n_instances + 1))
    return EncodedSample(
        rgb_png=png_bytes(buffers.color),
        depth_png=png_bytes(encode_depth(buffers.depth_m)),
        masks=masks,
        mask_ids=ids,
        occluded_ids=occluded,
    )


def render_frame(spec: SceneSpec, assets: AssetLibrary, workers: int = 1) -> Tuple[FrameBuffers, EncodedSample]:
    buffers = rasterize(spec, assets, workers)
    return buffers, encode_sample(buffers, len(spec.hand_instances))
