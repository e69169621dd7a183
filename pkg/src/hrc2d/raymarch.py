"""Segment tracing through a scene grid.

``trace`` walks every cell a segment crosses (Amanatides-Woo DDA) and
integrates each piece in closed form, composing the pieces front to
back. ``trace_far`` is the path tracer's ray: it runs to the grid edge,
skips empty 8x8 blocks at a coarse level and stops once almost nothing
is transmitted.

Kernels take extinction/source arrays indexed ``[x, y, channel]``; the
public wrappers accept a :class:`~hrc2d.scene.SceneGrid`.

Tie-breaking: a coordinate lying exactly on a cell boundary selects the
cell the ray is moving into; with no motion along that axis the usual
half-open ``[i, i+1)`` rule applies. Everything outside the grid is
vacuum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .radiance import RadianceInterval
from .scene import SceneGrid
from .stats import Stats

BLOCK = 8
EARLY_EXIT_T = 1e-4


@dataclass(frozen=True)
class OccupancyGrid:
    """One flag per ``block_size`` square block, ``[by, bx]``."""

    flags: np.ndarray
    block_size: int = BLOCK


def build_occupancy(scene: SceneGrid, block_size: int = BLOCK) -> OccupancyGrid:
    h, w = scene.shape
    bh, bw = -(-h // block_size), -(-w // block_size)
    busy = np.any(scene.sigma_t > 0.0, axis=2) | np.any(scene.source > 0.0, axis=2)
    pad = np.zeros((bh * block_size, bw * block_size), dtype=bool)
    pad[:h, :w] = busy
    flags = pad.reshape(bh, block_size, bw, block_size).any(axis=(1, 3))
    return OccupancyGrid(flags, block_size)


def xy_arrays(scene: SceneGrid) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous ``[x, y, c]`` copies of extinction and source."""
    return (
        np.ascontiguousarray(scene.sigma_t.transpose(1, 0, 2)),
        np.ascontiguousarray(scene.source.transpose(1, 0, 2)),
    )


# --------------------------------------------------------------------------
# kernels

_EXP_SHIFT = 2.0**-20
_EXP_UNSHIFT = math.exp(-_EXP_SHIFT)  # exp(shift) * unshift == 1.0 exactly


@njit(cache=True, inline="always")
def _first_cell(x, d, n):
    if d < 0.0:
        i = math.ceil(x) - 1
    else:
        i = math.floor(x)
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    return int(i)


@njit(cache=True)
def _clip(w, h, px, py, dx, dy):
    """Parameter range of ``p + t d``, ``t`` in [0, 1], inside ``[0,w]x[0,h]``."""
    t0 = 0.0
    t1 = 1.0
    if dx == 0.0:
        if px < 0.0 or px >= w:
            return 1.0, 0.0
    else:
        a = -px / dx
        b = (w - px) / dx
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
    if dy == 0.0:
        if py < 0.0 or py >= h:
            return 1.0, 0.0
    else:
        a = -py / dy
        b = (h - py) / dy
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
    return t0, t1


@njit(cache=True)
def _walk(w, h, px, py, dx, dy, t0, t1, ci, cj, ta, tb):
    """DDA over unit cells of a ``w x h`` grid for ``t`` in ``[t0, t1]``.

    Writes the visited cells and their parameter intervals; returns the
    count. The caller guarantees ``[t0, t1]`` lies inside the grid.
    """
    ex = px + t0 * dx
    ey = py + t0 * dy
    i = _first_cell(ex, dx, w)
    j = _first_cell(ey, dy, h)
    inf = np.inf
    if dx > 0.0:
        sx = 1
        tmx = (i + 1 - px) / dx
        tdx = 1.0 / dx
    elif dx < 0.0:
        sx = -1
        tmx = (i - px) / dx
        tdx = -1.0 / dx
    else:
        sx = 0
        tmx = inf
        tdx = inf
    if dy > 0.0:
        sy = 1
        tmy = (j + 1 - py) / dy
        tdy = 1.0 / dy
    elif dy < 0.0:
        sy = -1
        tmy = (j - py) / dy
        tdy = -1.0 / dy
    else:
        sy = 0
        tmy = inf
        tdy = inf
    t = t0
    m = 0
    cap = ci.shape[0]
    while m < cap:
        tn = min(tmx, tmy, t1)
        if tn > t:
            ci[m] = i
            cj[m] = j
            ta[m] = t
            tb[m] = tn
            m += 1
            t = tn
        if tn >= t1:
            break
        if tmx <= tn:
            i += sx
            tmx += tdx
        if tmy <= tn:
            j += sy
            tmy += tdy
        if i < 0 or i >= w or j < 0 or j >= h:
            break
    return m


@njit(cache=True)
def _integrate(sig, src, ci, cj, ta, tb, m, length, r, tr, t_stop):
    """Compose cells front to back into ``(r, tr)``; True if cut short."""
    for s in range(m):
        ell = (tb[s] - ta[s]) * length
        x = ci[s]
        y = cj[s]
        for c in range(3):
            od = sig[x, y, c] * ell
            # one exp per channel and a select, so cost does not depend on
            # the medium; the series covers thin cells where 1 - t cancels.
            # The shift keeps libm off its exp(0) fast path, whose branch
            # mispredicts when vacuum and medium cells mix.
            t = math.exp(_EXP_SHIFT - od) * _EXP_UNSHIFT
            series = od * (1.0 - od * (0.5 - od * (1.0 / 6.0 - od * (1.0 / 24.0 - od / 120.0))))
            one_minus_t = series if od < 0.01 else 1.0 - t
            r[c] += tr[c] * (src[x, y, c] * one_minus_t)
            tr[c] *= t
        if t_stop > 0.0 and max(tr[0], tr[1], tr[2]) < t_stop:
            return True
    return False


@njit(cache=True)
def _trace_into(sig, src, px, py, qx, qy, r, tr, ci, cj, ta, tb):
    """Exact ``Trace(p, q)`` merged into the running ``(r, tr)``."""
    w = sig.shape[0]
    h = sig.shape[1]
    dx = qx - px
    dy = qy - py
    length = math.sqrt(dx * dx + dy * dy)
    if length == 0.0:
        return
    t0, t1 = _clip(w, h, px, py, dx, dy)
    if t0 >= t1:
        return
    m = _walk(w, h, px, py, dx, dy, t0, t1, ci, cj, ta, tb)
    _integrate(sig, src, ci, cj, ta, tb, m, length, r, tr, 0.0)


@njit(cache=True)
def trace_kernel(sig, src, px, py, qx, qy):
    r = np.zeros(3)
    tr = np.ones(3)
    cap = sig.shape[0] + sig.shape[1] + 4
    ci = np.empty(cap, np.int64)
    cj = np.empty(cap, np.int64)
    ta = np.empty(cap)
    tb = np.empty(cap)
    _trace_into(sig, src, px, py, qx, qy, r, tr, ci, cj, ta, tb)
    return r, tr


@njit(cache=True)
def _far_into(sig, src, flags, bs, px, py, ux, uy, si, sj, sa, sb, r, tr):
    """Radiance along ``p + s u`` to the grid edge, added into ``r``.

    ``flags`` is ``[bx, by]``. The four scratch arrays hold the coarse walk
    in their first half and the fine walk in their second.
    """
    w = sig.shape[0]
    h = sig.shape[1]
    # long enough to leave the grid from anywhere inside it
    reach = 2.0 * (w + h) + 2.0
    dx = ux * reach
    dy = uy * reach
    t0, t1 = _clip(w, h, px, py, dx, dy)
    if t0 >= t1:
        return
    half = si.shape[0] // 2
    inv = 1.0 / bs
    nb = _walk(
        flags.shape[0], flags.shape[1], px * inv, py * inv, dx * inv, dy * inv, t0, t1,
        si[:half], sj[:half], sa[:half], sb[:half],
    )
    fi = si[half:]
    fj = sj[half:]
    fa = sa[half:]
    fb = sb[half:]
    for k in range(nb):
        if not flags[si[k], sj[k]]:
            continue
        m = _walk(w, h, px, py, dx, dy, sa[k], sb[k], fi, fj, fa, fb)
        if _integrate(sig, src, fi, fj, fa, fb, m, reach, r, tr, EARLY_EXIT_T):
            return


@njit(cache=True)
def trace_far_kernel(sig, src, flags, bs, px, py, ux, uy, si, sj, sa, sb):
    r = np.zeros(3)
    tr = np.ones(3)
    _far_into(sig, src, flags, bs, px, py, ux, uy, si, sj, sa, sb, r, tr)
    return r


@njit(cache=True)
def walk_kernel(w, h, px, py, qx, qy):
    cap = w + h + 4
    ci = np.empty(cap, np.int64)
    cj = np.empty(cap, np.int64)
    ta = np.empty(cap)
    tb = np.empty(cap)
    dx = qx - px
    dy = qy - py
    t0, t1 = _clip(w, h, px, py, dx, dy)
    if t0 >= t1 or (dx == 0.0 and dy == 0.0):
        return ci[:0], cj[:0], ta[:0]
    m = _walk(w, h, px, py, dx, dy, t0, t1, ci, cj, ta, tb)
    length = math.sqrt(dx * dx + dy * dy)
    return ci[:m], cj[:m], (tb[:m] - ta[:m]) * length


def scratch(w: int, h: int):
    """Work buffers large enough for ``trace_far_kernel`` on a ``w x h`` grid."""
    cap = 2 * (w + h + 8)
    return (np.empty(cap, np.int64), np.empty(cap, np.int64), np.empty(cap), np.empty(cap))


# --------------------------------------------------------------------------
# public wrappers


def integrate_cell(sigma_t, source, length: float) -> RadianceInterval:
    """Interval of a straight run of ``length`` through one homogeneous cell.

    ``t = exp(-sigma l)`` and ``r = L_s (1 - t)``, the latter through
    ``expm1`` so thin cells keep full precision.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    od = np.asarray(sigma_t, dtype=np.float64) * length
    return RadianceInterval(-np.asarray(source, dtype=np.float64) * np.expm1(-od), np.exp(-od))


def dda_segments(width: int, height: int, p, q) -> list[tuple[int, int, float]]:
    """Cells ``(i, j)`` and in-cell lengths crossed by segment ``pq``."""
    ci, cj, ln = walk_kernel(int(width), int(height), float(p[0]), float(p[1]), float(q[0]), float(q[1]))
    return [(int(a), int(b), float(c)) for a, b, c in zip(ci, cj, ln)]


def trace(scene: SceneGrid, p, q, stats: Stats | None = None) -> RadianceInterval:
    """Radiance and transmittance of segment ``p <- q`` (seen from ``p``)."""
    sig = scene.sigma_t.transpose(1, 0, 2)
    src = scene.source.transpose(1, 0, 2)
    r, t = trace_kernel(sig, src, float(p[0]), float(p[1]), float(q[0]), float(q[1]))
    if stats is not None:
        stats.dda_traces += 1
    return RadianceInterval(r, t)


def trace_far(scene: SceneGrid, occupancy: OccupancyGrid, p, direction) -> np.ndarray:
    """Radiance arriving at ``p`` from ``direction`` (unit vector)."""
    ux, uy = float(direction[0]), float(direction[1])
    norm = math.hypot(ux, uy)
    if not abs(norm - 1.0) < 1e-9:
        raise ValueError("direction must be a unit vector")
    sig = scene.sigma_t.transpose(1, 0, 2)
    src = scene.source.transpose(1, 0, 2)
    flags = np.ascontiguousarray(occupancy.flags.T)
    return trace_far_kernel(
        sig, src, flags, float(occupancy.block_size), float(p[0]), float(p[1]), ux, uy,
        *scratch(scene.width, scene.height),
    )
