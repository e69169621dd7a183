"""Scene grids: dense 2D cells of extinction and source radiance.

Arrays are indexed ``[y, x, channel]``; cell ``(i, j)`` covers
``[i, i+1) x [j, j+1)`` in pixel units. Extinction is per pixel length,
and a cell radiates ``source * sigma_t`` per unit length, so a cell with
zero extinction emits nothing.

PNG encoding (RGBA, 8 or 16 bit):

* alpha is opacity ``o``; ``sigma_t = min(-ln(1 - o), SIGMA_MAX)``, grey;
* RGB is linear emission, multiplied by ``intensity`` from the sidecar
  ``<stem>.json`` (default 1.0);
* the sidecar may also carry a uniform ``albedo`` (float) or an
  ``albedo_map`` naming a 16-bit RGB PNG next to the scene.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import cv2
import numpy as np
from scipy import ndimage

SIGMA_MAX = 20.0
MIN_GENERATED_SIZE = 16
U16 = 65535

Box = tuple[int, int, int, int]  # x0, y0, x1, y1 (cells, half-open)


class SceneFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Cell:
    sigma_t: np.ndarray
    source: np.ndarray
    albedo: np.ndarray


@dataclass(frozen=True, eq=False)
class SceneGrid:
    """Immutable grid of homogeneous square cells."""

    sigma_t: np.ndarray
    source: np.ndarray
    albedo: np.ndarray | None = None
    lights: tuple[Box, ...] | None = None
    intensity: float = 1.0
    name: str = ""

    def __post_init__(self):
        sig = np.ascontiguousarray(self.sigma_t, dtype=np.float64)
        src = np.ascontiguousarray(self.source, dtype=np.float64)
        if sig.ndim != 3 or sig.shape[2] != 3 or sig.shape != src.shape:
            raise ValueError(
                f"sigma_t and source must both be (H, W, 3), got {sig.shape} / {src.shape}"
            )
        if sig.shape[0] == 0 or sig.shape[1] == 0:
            raise ValueError("scene dimensions must be positive")
        if not (np.all(np.isfinite(sig)) and np.all(sig >= 0.0)):
            raise ValueError("sigma_t must be finite and non-negative")
        if not (np.all(np.isfinite(src)) and np.all(src >= 0.0)):
            raise ValueError("source must be finite and non-negative")
        alb = np.zeros_like(sig) if self.albedo is None else np.ascontiguousarray(
            np.broadcast_to(self.albedo, sig.shape), dtype=np.float64
        )
        if np.any(alb < 0.0) or np.any(alb > 1.0):
            raise ValueError("albedo must lie in [0, 1]")
        for a in (sig, src, alb):
            a.setflags(write=False)
        object.__setattr__(self, "sigma_t", sig)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "albedo", alb)
        if self.lights is None:
            object.__setattr__(self, "lights", find_lights(src, sig))
        else:
            object.__setattr__(self, "lights", tuple(tuple(int(v) for v in b) for b in self.lights))

    @property
    def width(self) -> int:
        return self.sigma_t.shape[1]

    @property
    def height(self) -> int:
        return self.sigma_t.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def cell(self, x: int, y: int) -> Cell:
        return Cell(self.sigma_t[y, x], self.source[y, x], self.albedo[y, x])

    def replace(self, **changes) -> "SceneGrid":
        kw = dict(
            sigma_t=self.sigma_t,
            source=self.source,
            albedo=self.albedo,
            lights=self.lights,
            intensity=self.intensity,
            name=self.name,
        )
        kw.update(changes)
        return SceneGrid(**kw)

    def same_cells(self, other: "SceneGrid") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.sigma_t, other.sigma_t)
            and np.array_equal(self.source, other.source)
            and np.array_equal(self.albedo, other.albedo)
        )

    def opacity(self) -> np.ndarray:
        """Per-cell opacity ``1 - exp(-mean sigma_t)`` over one pixel length."""
        return -np.expm1(-self.sigma_t.mean(axis=2))


def find_lights(source: np.ndarray, sigma_t: np.ndarray | None = None) -> tuple[Box, ...]:
    """Bounding boxes of 8-connected emissive regions.

    A cell counts as emissive when its source is positive and, if
    ``sigma_t`` is given, its extinction is positive too.
    """
    mask = np.any(source > 0.0, axis=2)
    if sigma_t is not None:
        mask &= np.any(sigma_t > 0.0, axis=2)
    if not mask.any():
        return ()
    labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    boxes = []
    for sl in ndimage.find_objects(labels):
        ys, xs = sl
        boxes.append((xs.start, ys.start, xs.stop, ys.stop))
    return tuple(boxes)


# --------------------------------------------------------------------------
# rotation and bounce injection


def rotate90(scene: SceneGrid) -> SceneGrid:
    """Counter-clockwise quarter turn: ``out(x, y) = in(width - 1 - y, x)``."""
    w = scene.width
    lights = tuple((y0, w - x1, y1, w - x0) for (x0, y0, x1, y1) in scene.lights)
    return scene.replace(
        sigma_t=rotate_array(scene.sigma_t),
        source=rotate_array(scene.source),
        albedo=rotate_array(scene.albedo),
        lights=lights,
    )


def rotate_array(a: np.ndarray) -> np.ndarray:
    """Quarter turn of a ``[y, x, ...]`` array matching :func:`rotate90`."""
    return np.ascontiguousarray(np.rot90(a, 1, axes=(0, 1)))


def inject_bounce_source(scene: SceneGrid, fluence) -> SceneGrid:
    """Add isotropic re-emission ``albedo * F / 2pi`` to the original source."""
    f = getattr(fluence, "fluence", fluence)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != scene.sigma_t.shape:
        raise ValueError(f"fluence shape {f.shape} does not match scene {scene.sigma_t.shape}")
    extra = scene.albedo * f / (2.0 * math.pi)
    # keep the light boxes of the primary emitters; re-emission is not a light
    return scene.replace(source=scene.source + extra, lights=scene.lights)


# --------------------------------------------------------------------------
# PNG encoding


def sigma_from_opacity(o: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.minimum(-np.log1p(-o), SIGMA_MAX)


def from_encoded(
    opacity_q: np.ndarray,
    rgb_q: np.ndarray,
    intensity: float = 1.0,
    albedo_q: np.ndarray | None = None,
    scale: int = U16,
    name: str = "",
) -> SceneGrid:
    """Decode quantised opacity / emission / albedo into a scene.

    Generators and :func:`load_scene_png` both go through here, which is
    what makes PNG round trips bit-exact.
    """
    o = np.asarray(opacity_q, dtype=np.float64) / scale
    sig = sigma_from_opacity(o)
    sig = np.repeat(sig[:, :, None], 3, axis=2)
    src = np.asarray(rgb_q, dtype=np.float64) / scale * float(intensity)
    alb = None
    if albedo_q is not None:
        alb = np.asarray(albedo_q, dtype=np.float64) / U16
    return SceneGrid(sig, src, alb, intensity=float(intensity), name=name)


def _quantize(x: np.ndarray, scale: int = U16) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * scale), 0, scale).astype(np.uint16)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _atomic_imwrite(path: Path, img: np.ndarray) -> None:
    tmp = path.with_name(f".{path.name}.tmp.png")
    if not cv2.imwrite(str(tmp), img):
        raise OSError(f"could not write {path}")
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_scene_png(scene: SceneGrid, path) -> None:
    """Write a 16-bit RGBA PNG plus sidecar JSON (and albedo map if needed)."""
    path = Path(path)
    sig = scene.sigma_t.mean(axis=2)
    alpha = _quantize(-np.expm1(-sig))
    rgb = _quantize(scene.source / scene.intensity)
    bgra = np.dstack([rgb[:, :, 2], rgb[:, :, 1], rgb[:, :, 0], alpha])
    _atomic_imwrite(path, bgra)
    meta: dict[str, Any] = {"intensity": scene.intensity}
    alb = scene.albedo
    if np.any(alb > 0.0):
        if np.all(alb == alb.flat[0]):
            meta["albedo"] = float(alb.flat[0])
        else:
            amap = path.with_name(path.stem + ".albedo.png")
            aq = _quantize(alb)
            _atomic_imwrite(amap, aq[:, :, ::-1])
            meta["albedo_map"] = amap.name
    _atomic_write_text(_sidecar(path), json.dumps(meta, indent=2) + "\n")


def _read_png(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(path)
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise SceneFormatError(f"{path}: not a readable image")
    return img


def load_scene_png(path) -> SceneGrid:
    path = Path(path)
    img = _read_png(path)
    if img.ndim != 3 or img.shape[2] != 4:
        raise SceneFormatError(f"{path}: expected an RGBA image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise SceneFormatError(f"{path}: zero-sized image")
    if img.dtype == np.uint16:
        scale = U16
    elif img.dtype == np.uint8:
        scale = 255
    else:
        raise SceneFormatError(f"{path}: unsupported sample type {img.dtype}")
    meta: dict[str, Any] = {}
    side = _sidecar(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise SceneFormatError(f"{side}: {exc}") from exc
    intensity = float(meta.get("intensity", 1.0))
    if not (math.isfinite(intensity) and intensity >= 0.0):
        raise SceneFormatError(f"{side}: bad intensity {intensity}")
    albedo_q = None
    if "albedo_map" in meta:
        a = _read_png(path.with_name(meta["albedo_map"]))
        if a.ndim != 3 or a.shape[:2] != img.shape[:2] or a.dtype != np.uint16:
            raise SceneFormatError(f"{meta['albedo_map']}: albedo map must be 16-bit RGB of scene size")
        albedo_q = a[:, :, 2::-1]
    rgb = img[:, :, 2::-1]
    scene = from_encoded(img[:, :, 3], rgb, intensity, albedo_q, scale=scale, name=path.stem)
    if "albedo" in meta and albedo_q is None:
        scene = scene.replace(albedo=np.full(scene.sigma_t.shape, float(meta["albedo"])))
    return scene
