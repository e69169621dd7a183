"""Reference fluence by ray sampling.

Directions come from the golden-ratio sequence, shifted per pixel by a
hash of ``(x, y, seed)``, so results are deterministic and independent
of evaluation order. ``naive`` samples the full circle; ``nee`` samples
only the angles subtended by the scene's light boxes, which ignores any
emission outside those boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .field import FluenceField
from .raymarch import _far_into, _trace_into, build_occupancy, xy_arrays
from .scene import SceneGrid, inject_bounce_source
from .stats import Stats

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TWO_PI = 2.0 * math.pi

Region = tuple[int, int, int, int]  # x0, y0, width, height


class NeeInapplicable(ValueError):
    """Raised when next-event estimation is asked for a scene without lights."""


@dataclass
class PtConfig:
    spp: int = 64
    mode: str = "naive"
    seed: int = 0
    max_bounces: int = 1

    def __post_init__(self):
        if self.spp < 1:
            raise ValueError("spp must be >= 1")
        if self.mode not in ("naive", "nee"):
            raise ValueError(f"mode must be 'naive' or 'nee', got {self.mode!r}")
        if self.max_bounces < 1:
            raise ValueError("max_bounces must be >= 1")


def golden_angle(j: int, offset: float = 0.0) -> float:
    """``2 pi frac(offset + j * phi)`` with ``phi = (sqrt 5 - 1) / 2``."""
    if j < 0:
        raise ValueError("sample index must be non-negative")
    if not 0.0 <= offset < 1.0:
        raise ValueError("offset must lie in [0, 1)")
    return TWO_PI * math.fmod(offset + j * GOLDEN, 1.0)


def pixel_offsets(xs: np.ndarray, ys: np.ndarray, seed: int) -> np.ndarray:
    """Per-pixel sequence shift in [0, 1) from a splitmix64 hash."""
    with np.errstate(over="ignore"):
        z = (
            np.asarray(xs, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
            ^ np.asarray(ys, dtype=np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
            ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x165667B19E3779F9)
        )
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _naive(sig, src, flags, bs, xs, ys, offsets, spp, out):
    w = sig.shape[0]
    h = sig.shape[1]
    cap = 2 * (w + h + 8)
    si = np.empty(cap, np.int64)
    sj = np.empty(cap, np.int64)
    sa = np.empty(cap)
    sb = np.empty(cap)
    r = np.empty(3)
    tr = np.empty(3)
    acc = np.empty(3)
    for p in range(xs.shape[0]):
        cx = xs[p] + 0.5
        cy = ys[p] + 0.5
        acc[:] = 0.0
        for j in range(spp):
            theta = TWO_PI * ((offsets[p] + j * GOLDEN) % 1.0)
            r[:] = 0.0
            tr[:] = 1.0
            _far_into(sig, src, flags, bs, cx, cy, math.cos(theta), math.sin(theta), si, sj, sa, sb, r, tr)
            acc += r
        for c in range(3):
            out[p, c] = acc[c] * (TWO_PI / spp)


@njit(cache=True)
def _box_interval(cx, cy, x0, y0, x1, y1):
    """Angular interval ``(lo, length)`` of a box seen from ``(cx, cy)``."""
    if x0 <= cx <= x1 and y0 <= cy <= y1:
        return 0.0, TWO_PI
    a0 = math.atan2(0.5 * (y0 + y1) - cy, 0.5 * (x0 + x1) - cx)
    lo = 0.0
    hi = 0.0
    for corner in range(4):
        x = x0 if corner % 2 == 0 else x1
        y = y0 if corner < 2 else y1
        d = math.atan2(y - cy, x - cx) - a0
        while d > math.pi:
            d -= TWO_PI
        while d <= -math.pi:
            d += TWO_PI
        lo = min(lo, d)
        hi = max(hi, d)
    return a0 + lo, hi - lo


@njit(cache=True)
def _union(starts, lengths, n, out_s, out_l):
    """Merge arcs on the circle; returns the number of disjoint arcs."""
    # split wrapping arcs so every piece lies in [0, 2 pi)
    ps = np.empty(2 * n)
    pe = np.empty(2 * n)
    k = 0
    for i in range(n):
        if lengths[i] >= TWO_PI:
            out_s[0] = 0.0
            out_l[0] = TWO_PI
            return 1
        s = starts[i] % TWO_PI
        e = s + lengths[i]
        if e > TWO_PI:
            ps[k] = s
            pe[k] = TWO_PI
            k += 1
            ps[k] = 0.0
            pe[k] = e - TWO_PI
            k += 1
        else:
            ps[k] = s
            pe[k] = e
            k += 1
    order = np.argsort(ps[:k])
    m = 0
    for idx in order:
        s = ps[idx]
        e = pe[idx]
        if m > 0 and s <= out_s[m - 1] + out_l[m - 1]:
            end = max(out_s[m - 1] + out_l[m - 1], e)
            out_l[m - 1] = end - out_s[m - 1]
        else:
            out_s[m] = s
            out_l[m] = e - s
            m += 1
    return m


@njit(cache=True)
def _allocate(lengths, m, spp, counts):
    """Arc-proportional sample counts, at least one per arc (largest remainder)."""
    total = 0.0
    for i in range(m):
        total += lengths[i]
    budget = max(spp, m)
    used = 0
    rem = np.empty(m)
    for i in range(m):
        share = budget * lengths[i] / total
        counts[i] = max(1, int(math.floor(share)))
        rem[i] = share - math.floor(share)
        used += counts[i]
    while used < budget:
        best = 0
        for i in range(1, m):
            if rem[i] > rem[best]:
                best = i
        counts[best] += 1
        rem[best] = -1.0
        used += 1


@njit(cache=True)
def _nee(sig, src, flags, bs, boxes, xs, ys, offsets, spp, out):
    w = sig.shape[0]
    h = sig.shape[1]
    cap = 2 * (w + h + 8)
    si = np.empty(cap, np.int64)
    sj = np.empty(cap, np.int64)
    sa = np.empty(cap)
    sb = np.empty(cap)
    r = np.empty(3)
    tr = np.empty(3)
    acc = np.empty(3)
    nl = boxes.shape[0]
    starts = np.empty(nl)
    lengths = np.empty(nl)
    us = np.empty(2 * nl)
    ul = np.empty(2 * nl)
    counts = np.empty(2 * nl, np.int64)
    for p in range(xs.shape[0]):
        cx = xs[p] + 0.5
        cy = ys[p] + 0.5
        for b in range(nl):
            starts[b], lengths[b] = _box_interval(cx, cy, boxes[b, 0], boxes[b, 1], boxes[b, 2], boxes[b, 3])
        m = _union(starts, lengths, nl, us, ul)
        _allocate(ul, m, spp, counts)
        acc[:] = 0.0
        for a in range(m):
            weight = ul[a] / counts[a]
            for j in range(counts[a]):
                theta = us[a] + ul[a] * ((offsets[p] + j * GOLDEN) % 1.0)
                r[:] = 0.0
                tr[:] = 1.0
                _far_into(sig, src, flags, bs, cx, cy, math.cos(theta), math.sin(theta), si, sj, sa, sb, r, tr)
                for c in range(3):
                    acc[c] += weight * r[c]
        out[p] = acc


# --------------------------------------------------------------------------
# drivers


def _lattice(scene: SceneGrid, region: Region | None, stride: int):
    x0, y0, w, h = region if region is not None else (0, 0, scene.width, scene.height)
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > scene.width or y0 + h > scene.height:
        raise ValueError(f"region {region} outside {scene.width}x{scene.height} scene")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ys, xs = np.mgrid[y0 : y0 + h : stride, x0 : x0 + w : stride]
    return xs, ys


def _estimate(scene: SceneGrid, xs: np.ndarray, ys: np.ndarray, cfg: PtConfig) -> np.ndarray:
    sig, src = xy_arrays(scene)
    occ = build_occupancy(scene)
    flags = np.ascontiguousarray(occ.flags.T)
    fx = xs.ravel().astype(np.int64)
    fy = ys.ravel().astype(np.int64)
    offsets = pixel_offsets(fx, fy, cfg.seed)
    out = np.zeros((fx.size, 3))
    if cfg.mode == "naive":
        _naive(sig, src, flags, float(occ.block_size), fx, fy, offsets, cfg.spp, out)
    else:
        if not scene.lights:
            raise NeeInapplicable("scene declares no light boxes; next-event estimation needs them")
        boxes = np.array(scene.lights, dtype=np.float64).reshape(-1, 4)
        _nee(sig, src, flags, float(occ.block_size), boxes, fx, fy, offsets, cfg.spp, out)
    return out.reshape(xs.shape + (3,))


def estimate_fluence_naive(scene: SceneGrid, pixel, cfg: PtConfig) -> np.ndarray:
    x, y = _check_pixel(scene, pixel)
    return _estimate(scene, np.array([[x]]), np.array([[y]]), _with_mode(cfg, "naive"))[0, 0]


def estimate_fluence_nee(scene: SceneGrid, pixel, cfg: PtConfig) -> np.ndarray:
    x, y = _check_pixel(scene, pixel)
    return _estimate(scene, np.array([[x]]), np.array([[y]]), _with_mode(cfg, "nee"))[0, 0]


def _with_mode(cfg: PtConfig, mode: str) -> PtConfig:
    return PtConfig(spp=cfg.spp, mode=mode, seed=cfg.seed, max_bounces=cfg.max_bounces)


def _check_pixel(scene: SceneGrid, pixel) -> tuple[int, int]:
    x, y = int(pixel[0]), int(pixel[1])
    if not (0 <= x < scene.width and 0 <= y < scene.height):
        raise ValueError(f"pixel {pixel} outside the scene")
    return x, y


def render_reference(
    scene: SceneGrid,
    cfg: PtConfig,
    region: Region | None = None,
    stride: int = 1,
) -> FluenceField:
    """Sampled fluence over ``region`` (default: whole grid) every ``stride`` pixels.

    With ``max_bounces > 1`` the estimate is iterated like the cascade
    solver's multibounce loop, which needs the whole grid.
    """
    xs, ys = _lattice(scene, region, stride)
    stats = Stats(spp=float(cfg.spp))
    with stats.timed("gather"):
        out = _estimate(scene, xs, ys, cfg)
        if cfg.max_bounces > 1:
            if region is not None or stride != 1:
                raise ValueError("multibounce reference needs the full grid")
            for _ in range(cfg.max_bounces - 1):
                out = _estimate(inject_bounce_source(scene, out), xs, ys, cfg)
    stats.dda_traces = int(xs.size) * cfg.spp * cfg.max_bounces
    return FluenceField(out, stats)


def converge_reference(
    scene: SceneGrid,
    cfg: PtConfig,
    region: Region | None = None,
    stride: int = 1,
    tol: float = 0.002,
    max_spp: int = 1 << 16,
) -> tuple[FluenceField, list[tuple[int, float]]]:
    """Double ``spp`` until successive estimates differ by < ``tol`` x peak (RMSE).

    Returns the last field and the ``(spp, relative change)`` history. If
    ``max_spp`` is reached first, the last field is returned as is and the
    history shows how far it got.
    """
    spp = cfg.spp
    prev = render_reference(scene, _with_spp(cfg, spp), region, stride)
    history: list[tuple[int, float]] = []
    while spp * 2 <= max_spp:
        spp *= 2
        cur = render_reference(scene, _with_spp(cfg, spp), region, stride)
        peak = float(np.max(cur.fluence))
        change = float(np.sqrt(np.mean((cur.fluence - prev.fluence) ** 2)))
        rel = change / peak if peak > 0 else 0.0
        history.append((spp, rel))
        prev = cur
        if rel < tol:
            break
    return prev, history


def _with_spp(cfg: PtConfig, spp: int) -> PtConfig:
    return PtConfig(spp=spp, mode=cfg.mode, seed=cfg.seed, max_bounces=cfg.max_bounces)


@njit(cache=True)
def _quadrature(sig, src, xs, ys, n_dirs, at_probes, out):
    w = sig.shape[0]
    h = sig.shape[1]
    cap = w + h + 8
    ci = np.empty(cap, np.int64)
    cj = np.empty(cap, np.int64)
    ta = np.empty(cap)
    tb = np.empty(cap)
    r = np.empty(3)
    tr = np.empty(3)
    reach = 2.0 * (w + h) + 2.0
    per_q = n_dirs // 4
    for p in range(xs.shape[0]):
        for c in range(3):
            out[p, c] = 0.0
        for j in range(n_dirs):
            theta = TWO_PI * (j + 0.5) / n_dirs
            cx = xs[p] + 0.5
            cy = ys[p] + 0.5
            if at_probes:
                # quadrant q spans q*pi/2 +- pi/4, sampled from the edge facing it
                theta = TWO_PI * (j + 0.5) / n_dirs - math.pi / 4.0
                q = j // per_q
                cx += 0.5 * math.cos(q * math.pi / 2.0)
                cy += 0.5 * math.sin(q * math.pi / 2.0)
            r[:] = 0.0
            tr[:] = 1.0
            _trace_into(
                sig, src, cx, cy, cx + reach * math.cos(theta), cy + reach * math.sin(theta),
                r, tr, ci, cj, ta, tb,
            )
            for c in range(3):
                out[p, c] += r[c]
        for c in range(3):
            out[p, c] *= TWO_PI / n_dirs


def quadrature_fluence(
    scene: SceneGrid,
    n_dirs: int = 8192,
    region: Region | None = None,
    stride: int = 1,
    at_probes: bool = False,
) -> FluenceField:
    """Midpoint-rule angular quadrature of the fluence of each pixel.

    By default the integral is taken at the pixel centre. With
    ``at_probes`` each quadrant is integrated from the midpoint of the
    pixel edge facing it, which is where the cascade solver samples
    (``n_dirs`` must then be a multiple of 4). Rays are traced exactly to
    the grid edge, with no early exit.
    """
    if n_dirs < 1:
        raise ValueError("n_dirs must be >= 1")
    if at_probes and n_dirs % 4:
        raise ValueError("n_dirs must be a multiple of 4 when sampling at probes")
    xs, ys = _lattice(scene, region, stride)
    sig, src = xy_arrays(scene)
    out = np.zeros((xs.size, 3))
    _quadrature(
        sig, src, xs.ravel().astype(np.int64), ys.ravel().astype(np.int64), n_dirs, at_probes, out
    )
    return FluenceField(out.reshape(xs.shape + (3,)), Stats(spp=float(n_dirs)))
