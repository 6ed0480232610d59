"""Procedural textures evaluated on (u, v) coordinates.

Only +, -, *, floor and integer hashing are used so that a texture lookup is
bit-reproducible regardless of array shape.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

TEXTURE_KINDS = ("solid", "checker", "stripes", "value-noise")

RGB = Tuple[float, float, float]


@dataclass(frozen=True)
class TextureSpec:
    kind: str = "solid"
    palette: Tuple[RGB, RGB] = ((0.5, 0.5, 0.5), (0.5, 0.5, 0.5))
    scale: float = 8.0
    angle: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise ValueError(f"unknown texture kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["palette"] = [list(c) for c in self.palette]
        return d

    @classmethod
    def from_dict(cls, d) -> "TextureSpec":
        return cls(d["kind"], tuple(tuple(c) for c in d["palette"]), d["scale"], d["angle"], d["seed"])


_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """splitmix64-style lattice hash to [0, 1)."""
    with np.errstate(over="ignore"):
        h = ix.astype(np.int64).view(np.uint64) * _M1
        h ^= iy.astype(np.int64).view(np.uint64) * _M2
        h ^= np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _M3
        h ^= h >> np.uint64(30)
        h *= _M2
        h ^= h >> np.uint64(27)
        h *= _M3
        h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _value_noise(x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
    x0, y0 = np.floor(x), np.floor(y)
    fx, fy = x - x0, y - y0
    sx = fx * fx * (3.0 - 2.0 * fx)
    sy = fy * fy * (3.0 - 2.0 * fy)
    ix, iy = x0.astype(np.int64), y0.astype(np.int64)
    n00 = _hash01(ix, iy, seed)
    n10 = _hash01(ix + 1, iy, seed)
    n01 = _hash01(ix, iy + 1, seed)
    n11 = _hash01(ix + 1, iy + 1, seed)
    top = n00 + (n10 - n00) * sx
    bot = n01 + (n11 - n01) * sx
    return top + (bot - top) * sy


def evaluate(tex: TextureSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] with shape ``u.shape + (3,)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c0 = np.asarray(tex.palette[0], dtype=float)
    c1 = np.asarray(tex.palette[1], dtype=float)
    if tex.kind == "solid":
        return np.broadcast_to(c0, u.shape + (3,)).copy()
    # rotation by a precomputed (cos, sin) pair keeps per-pixel math to mul/add
    ca, sa = np.cos(np.radians(tex.angle)), np.sin(np.radians(tex.angle))
    x = (u * ca - v * sa) * tex.scale
    y = (u * sa + v * ca) * tex.scale
    if tex.kind == "checker":
        t = (np.floor(x) + np.floor(y)) % 2.0
    elif tex.kind == "stripes":
        t = np.floor(x) % 2.0
    else:
        t = 0.65 * _value_noise(x, y, tex.seed) + 0.35 * _value_noise(2.0 * x + 17.0, 2.0 * y - 5.0, tex.seed + 1)
    return c0 + (c1 - c0) * t[..., None]
