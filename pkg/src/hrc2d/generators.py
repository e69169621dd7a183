"""Procedural scenes used by the experiments.

Feature sizes follow the figures they reproduce; placement is our own
and fixed here. Most generators build quantised opacity/emission maps and
decode them with :func:`hrc2d.scene.from_encoded`, so they survive a PNG
round trip bit-exactly. ``uniform_medium``, ``blocks`` and ``random``
take exact float parameters instead.
"""

from __future__ import annotations

import math
from typing import Any, Callable

import numpy as np

from .scene import MIN_GENERATED_SIZE, U16, SceneGrid, from_encoded

JULIA_C = complex(-0.835, -0.2321)
JULIA_MAX_ITER = 64
JULIA_EXTENT = 1.5
JULIA_COLD = (0.2, 0.4, 1.0)
JULIA_HOT = (1.0, 0.55, 0.1)


class _Canvas:
    """Quantised opacity / emission / albedo maps being painted."""

    def __init__(self, size: int):
        self.size = size
        self.opacity = np.zeros((size, size), dtype=np.uint16)
        self.rgb = np.zeros((size, size, 3), dtype=np.uint16)
        self.albedo = np.zeros((size, size, 3), dtype=np.uint16)
        yy, xx = np.mgrid[0:size, 0:size]
        self.cx = xx + 0.5
        self.cy = yy + 0.5

    def paint(self, mask, opacity=1.0, rgb=(0.0, 0.0, 0.0), albedo=(0.0, 0.0, 0.0)):
        self.opacity[mask] = _q(opacity)
        self.rgb[mask] = [_q(c) for c in rgb]
        self.albedo[mask] = [_q(c) for c in albedo]

    def disc(self, x, y, radius):
        return (self.cx - x) ** 2 + (self.cy - y) ** 2 <= radius * radius

    def rect(self, x0, y0, x1, y1):
        return (self.cx >= x0) & (self.cx < x1) & (self.cy >= y0) & (self.cy < y1)

    def scene(self, name: str, intensity: float = 1.0) -> SceneGrid:
        albedo = self.albedo if self.albedo.any() else None
        return from_encoded(self.opacity, self.rgb, intensity, albedo, name=name)


def _q(v: float) -> int:
    return int(round(min(max(float(v), 0.0), 1.0) * U16))


def _empty(size: int) -> SceneGrid:
    return _Canvas(size).scene("empty")


def _uniform_medium(size: int, sigma: float = 0.25, source: float = 1.0) -> SceneGrid:
    sig = np.full((size, size, 3), float(sigma))
    src = np.full((size, size, 3), float(source))
    return SceneGrid(sig, src, name="uniform_medium")


def _blocks(size: int) -> SceneGrid:
    """Two one-pixel emissive slabs that each halve a crossing ray."""
    sig = np.zeros((size, size, 3))
    src = np.zeros((size, size, 3))
    rows = slice(size // 2 - 2, size // 2 + 2)
    for col in (size // 4, size // 2):
        sig[rows, col] = math.log(2.0)
        src[rows, col] = 4.0
    return SceneGrid(sig, src, name="blocks")


def _occluder(size: int, light_diameter: float = 10.0, bar_width: float = 14.0) -> SceneGrid:
    # light left of centre, vertical bar at mid-field
    c = _Canvas(size)
    mid = size / 2
    c.paint(c.rect(mid - bar_width / 2, mid - size / 8, mid + bar_width / 2, mid + size / 8))
    c.paint(c.disc(size / 4, mid, light_diameter / 2), rgb=(1.0, 1.0, 1.0))
    return c.scene("occluder")


def _pinhole(size: int, gap: float = 10.0) -> SceneGrid:
    c = _Canvas(size)
    mid = size / 2
    wall = c.rect(mid - 4, 0, mid + 4, size) & ~c.rect(mid - 4, mid - gap / 2, mid + 4, mid + gap / 2)
    c.paint(wall)
    x0, x1 = size / 16, size / 16 + 8
    c.paint(c.rect(x0, size / 4, x1, mid), rgb=(1.0, 0.3, 0.1))
    c.paint(c.rect(x0, mid, x1, 3 * size / 4), rgb=(0.1, 0.4, 1.0))
    return c.scene("pinhole")


def _tiny_light(size: int) -> SceneGrid:
    c = _Canvas(size)
    mid = size // 2
    c.paint(c.rect(mid - 1, mid - 1, mid + 1, mid + 1), rgb=(1.0, 1.0, 1.0))
    return c.scene("tiny_light")


def julia_escape(size: int) -> np.ndarray:
    """Escape iteration count per pixel, capped at ``JULIA_MAX_ITER``.

    Pixel centres map linearly onto ``[-1.5, 1.5]^2`` with the imaginary
    axis pointing up the image.
    """
    coords = (np.arange(size) + 0.5) * (2 * JULIA_EXTENT / size) - JULIA_EXTENT
    z = coords[None, :] + 1j * (-coords[:, None])
    m = np.zeros(z.shape, dtype=np.int64)
    alive = np.abs(z) <= 2.0
    for _ in range(JULIA_MAX_ITER):
        z = np.where(alive, z * z + JULIA_C, z)
        m += alive
        alive &= np.abs(z) <= 2.0
    return m


def _julia(size: int) -> SceneGrid:
    """Opacity ``m / 64``; glowing two-colour halo, inside of the set dark."""
    m = julia_escape(size)
    frac = m / JULIA_MAX_ITER
    c = _Canvas(size)
    c.opacity[:] = np.rint(frac * U16).astype(np.uint16)
    cold = np.array(JULIA_COLD)
    hot = np.array(JULIA_HOT)
    rgb = cold[None, None, :] * (1.0 - frac[..., None]) + hot[None, None, :] * frac[..., None]
    rgb[m >= JULIA_MAX_ITER] = 0.0
    c.rgb[:] = np.rint(rgb * U16).astype(np.uint16)
    return c.scene("julia")


def _cornell(size: int) -> SceneGrid:
    c = _Canvas(size)
    s = size
    wall = max(2, s // 32)
    white = (0.75, 0.75, 0.75)
    c.paint(c.rect(0, 0, s, wall), albedo=white)
    c.paint(c.rect(0, s - wall, s, s), albedo=white)
    c.paint(c.rect(0, 0, wall, s), albedo=(0.8, 0.1, 0.1))
    c.paint(c.rect(s - wall, 0, s, s), albedo=(0.1, 0.8, 0.1))
    # thin scattering slab, left of the circle
    c.paint(
        c.rect(0.15 * s, 0.55 * s, 0.30 * s, 0.85 * s),
        opacity=1.0 - math.exp(-0.05),
        albedo=(0.9, 0.9, 0.9),
    )
    c.paint(c.disc(s / 2, 0.6 * s, 0.12 * s), albedo=(0.6, 0.6, 0.6))
    half, thick = max(2.0, s / 32), max(2.0, s / 64)
    c.paint(c.rect(s / 2 - half, wall + 2, s / 2 + half, wall + 2 + thick), rgb=(1.0, 0.95, 0.85))
    return c.scene("cornell")


# fractional (x, y, radius) and colour of the emitters in the multi-light scene
_MULTI_LIGHTS = (
    (0.20, 0.22, 0.020, (1.0, 0.35, 0.15)),
    (0.78, 0.18, 0.014, (0.2, 0.6, 1.0)),
    (0.50, 0.52, 0.030, (1.0, 0.95, 0.8)),
    (0.17, 0.80, 0.016, (0.3, 1.0, 0.35)),
    (0.84, 0.74, 0.024, (0.9, 0.3, 1.0)),
)
_MULTI_BLOCKS = (
    (0.32, 0.30, 0.36, 0.62),
    (0.60, 0.34, 0.74, 0.38),
    (0.58, 0.66, 0.62, 0.90),
    (0.24, 0.62, 0.40, 0.66),
)


def _multi_light(size: int) -> SceneGrid:
    c = _Canvas(size)
    s = size
    for x0, y0, x1, y1 in _MULTI_BLOCKS:
        c.paint(c.rect(x0 * s, y0 * s, x1 * s, y1 * s))
    c.paint(c.disc(0.70 * s, 0.55 * s, 0.04 * s), opacity=0.35)
    for x, y, r, rgb in _MULTI_LIGHTS:
        c.paint(c.disc(x * s, y * s, max(r * s, 1.0)), rgb=rgb)
    return c.scene("multi_light")


def _random(size: int, seed: int = 0) -> SceneGrid:
    """Small randomised scene: a few emissive blobs and absorbing boxes."""
    rng = np.random.default_rng(seed)
    sig = np.zeros((size, size, 3))
    src = np.zeros((size, size, 3))
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    for _ in range(int(rng.integers(1, 4))):
        x0, y0 = rng.uniform(0.1 * size, 0.9 * size, 2)
        w, h = rng.uniform(0.05 * size, 0.3 * size, 2)
        m = (np.abs(xx - x0) < w / 2) & (np.abs(yy - y0) < h / 2)
        sig[m] = rng.uniform(0.3, 20.0)
        src[m] = 0.0
    for _ in range(int(rng.integers(1, 4))):
        x0, y0 = rng.uniform(0.15 * size, 0.85 * size, 2)
        r = rng.uniform(1.5, 0.12 * size)
        m = (xx - x0) ** 2 + (yy - y0) ** 2 <= r * r
        sig[m] = rng.uniform(0.5, 5.0, 3)
        src[m] = rng.uniform(0.2, 1.0, 3)
    return SceneGrid(sig, src, name=f"random-{seed}")


GENERATORS: dict[str, Callable[..., SceneGrid]] = {
    "empty": _empty,
    "uniform_medium": _uniform_medium,
    "blocks": _blocks,
    "occluder": _occluder,
    "pinhole": _pinhole,
    "tiny_light": _tiny_light,
    "julia": _julia,
    "cornell": _cornell,
    "multi_light": _multi_light,
    "random": _random,
}


def gen_scene(name: str, size: int, params: dict[str, Any] | None = None) -> SceneGrid:
    """Build a named scene of ``size x size`` cells."""
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown scene {name!r}; choose from {sorted(GENERATORS)}") from None
    if not isinstance(size, (int, np.integer)) or size < MIN_GENERATED_SIZE:
        raise ValueError(f"size must be an integer >= {MIN_GENERATED_SIZE}, got {size!r}")
    try:
        return fn(int(size), **(params or {}))
    except TypeError as exc:
        raise ValueError(f"invalid parameters for {name!r}: {exc}") from None
