"""Holographic radiance cascades.

Each quadrant is solved in a frame where light is gathered from +x.
Level ``n`` has probes at ``(x * 2**n, y)`` for integer ``x, y``; probe
``(x, y)`` sits at the point ``(x, y + 1/2)``, the middle of the left
edge of cell ``(x, y)``. Direction ``k`` at level ``n`` points along
``v_n(k) = (2**n, 2k - 2**n)``. Ray intervals ``T_n`` use integer ``k``
in ``0..2**n``; cones of ``R_n`` use half-integer ``i = m + 1/2``.

``T_0..T_{init_levels-1}`` are traced directly; higher levels are merged
from the level below. ``R_n`` is evaluated top-down from ``R_{n+1}``,
``T_n`` and ``T_{n+1}``, with ``R_N`` identically zero. Lookups outside a
table give zero fluence and unit transmittance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .field import FluenceField
from .raymarch import _trace_into
from .scene import SceneGrid, inject_bounce_source, rotate_array
from .stats import Stats


@dataclass
class HrcConfig:
    init_levels: int = 3
    blur_enabled: bool = True
    blur_opacity_threshold: float = 0.5
    oracle_trace: bool = False
    bounces: int = 1

    def __post_init__(self):
        if self.init_levels < 1:
            raise ValueError("init_levels must be >= 1")
        if self.bounces < 1:
            raise ValueError("bounces must be >= 1")
        if not self.blur_opacity_threshold >= 0.0:
            raise ValueError("blur_opacity_threshold must be non-negative")


@dataclass
class CascadeT:
    """``T_n[x, y, k]`` approximating ``Trace(p, p + v_n(k))``."""

    level: int
    radiance: np.ndarray
    transmittance: np.ndarray

    def __len__(self):
        return self.radiance.shape[0] * self.radiance.shape[1] * self.radiance.shape[2]


@dataclass
class CascadeR:
    """``R_n[x, y, m]``: angular fluence of cone ``i = m + 1/2``."""

    level: int
    fluence: np.ndarray

    def __len__(self):
        return self.fluence.shape[0] * self.fluence.shape[1] * self.fluence.shape[2]


# --------------------------------------------------------------------------
# direction helpers


def _check_level(n: int) -> None:
    if n < 0:
        raise ValueError(f"level must be non-negative, got {n}")


def v_offset(n: int, twice_k: int) -> tuple[int, int]:
    """Offset to the next probe in direction ``k = twice_k / 2``."""
    _check_level(n)
    if not 0 <= twice_k <= 2 ** (n + 1):
        raise ValueError(f"direction 2k={twice_k} out of range for level {n}")
    return 2**n, twice_k - 2**n


def angular_size(n: int, twice_i: int) -> float:
    """Arc of cone ``i = twice_i / 2`` (half-integer) at level ``n``."""
    _check_level(n)
    if twice_i % 2 != 1 or not 1 <= twice_i <= 2 ** (n + 1) - 1:
        raise ValueError(f"cone index 2i={twice_i} invalid for level {n}")
    hi = v_offset(n, twice_i + 1)
    lo = v_offset(n, twice_i - 1)
    return math.atan(hi[1] / hi[0]) - math.atan(lo[1] / lo[0])


def angular_sizes(n: int) -> np.ndarray:
    """All cone arcs of level ``n``, indexed by ``m`` where ``i = m + 1/2``."""
    return np.array([angular_size(n, 2 * m + 1) for m in range(2**n)])


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _init_level(sig, src, n, out_r, out_t):
    """Direct traces for every probe of level ``n`` except the far column.

    Probes at ``x = X`` only see vacuum; their entries stay ``<0, 1>``.
    """
    xn = out_r.shape[0] - 1
    ny = out_r.shape[1]
    nk = out_r.shape[2]
    step = 2**n
    cap = sig.shape[0] + sig.shape[1] + 4
    ci = np.empty(cap, np.int64)
    cj = np.empty(cap, np.int64)
    ta = np.empty(cap)
    tb = np.empty(cap)
    r = np.empty(3)
    tr = np.empty(3)
    count = 0
    for x in range(xn):
        px = float(x * step)
        for y in range(ny):
            py = y + 0.5
            for k in range(nk):
                r[:] = 0.0
                tr[:] = 1.0
                _trace_into(sig, src, px, py, px + step, py + 2 * k - step, r, tr, ci, cj, ta, tb)
                out_r[x, y, k] = r
                out_t[x, y, k] = tr
                count += 1
    return count


@njit(cache=True)
def _merge_up(tn_r, tn_t, n, out_r, out_t):
    """``T_{n+1}`` from ``T_n``: exact merge for even ``k'``, bent-pair average for odd."""
    xn = tn_r.shape[0] - 1
    ny = tn_r.shape[1]
    half = 2**n
    x1 = out_r.shape[0]
    nk1 = out_r.shape[2]
    for x in range(x1):
        a = 2 * x
        b = 2 * x + 1
        for y in range(ny):
            for k1 in range(nk1):
                if k1 % 2 == 0:
                    k = k1 // 2
                    yf = y + 2 * k - half
                    far_ok = b <= xn and 0 <= yf < ny
                    for c in range(3):
                        rn = tn_r[a, y, k, c]
                        tn = tn_t[a, y, k, c]
                        if far_ok:
                            out_r[x, y, k1, c] = rn + tn * tn_r[b, yf, k, c]
                            out_t[x, y, k1, c] = tn * tn_t[b, yf, k, c]
                        else:
                            out_r[x, y, k1, c] = rn
                            out_t[x, y, k1, c] = tn
                else:
                    kp = (k1 + 1) // 2
                    km = (k1 - 1) // 2
                    yp = y + 2 * kp - half
                    ym = y + 2 * km - half
                    okp = b <= xn and 0 <= yp < ny
                    okm = b <= xn and 0 <= ym < ny
                    for c in range(3):
                        # upper: climb along kp, continue along km
                        rn = tn_r[a, y, kp, c]
                        tn = tn_t[a, y, kp, c]
                        if okp:
                            fr_p = rn + tn * tn_r[b, yp, km, c]
                            ft_p = tn * tn_t[b, yp, km, c]
                        else:
                            fr_p = rn
                            ft_p = tn
                        rn = tn_r[a, y, km, c]
                        tn = tn_t[a, y, km, c]
                        if okm:
                            fr_m = rn + tn * tn_r[b, ym, kp, c]
                            ft_m = tn * tn_t[b, ym, kp, c]
                        else:
                            fr_m = rn
                            ft_m = tn
                        out_r[x, y, k1, c] = 0.5 * (fr_p + fr_m)
                        out_t[x, y, k1, c] = 0.5 * (ft_p + ft_m)


@njit(cache=True)
def _merge_down(r1, has_r1, tn_r, tn_t, t1_r, t1_t, arcs1, n, out):
    """``R_n`` from ``R_{n+1}`` (``r1``; all zero when ``has_r1`` is False)."""
    xn = out.shape[0] - 1
    ny = out.shape[1]
    nm = out.shape[2]
    half = 2**n
    x1 = r1.shape[0] - 1
    for x in range(xn + 1):
        odd = x % 2 == 1
        for y in range(ny):
            for m in range(nm):
                for c in range(3):
                    out[x, y, m, c] = 0.0
                for s in range(2):
                    # s == 1: upper half of the cone, s == 0: lower half
                    mp = 2 * m + s
                    arc = arcs1[mp]
                    if odd:
                        k = m + s
                        qx = (x + 1) // 2
                        qy = y + 2 * k - half
                        q_ok = has_r1 and qx <= x1 and 0 <= qy < ny
                        for c in range(3):
                            far = r1[qx, qy, mp, c] if q_ok else 0.0
                            out[x, y, m, c] += arc * tn_r[x, y, k, c] + tn_t[x, y, k, c] * far
                    else:
                        k1 = 2 * m + 2 * s
                        px1 = x // 2
                        qx = px1 + 1
                        qy = y + 2 * k1 - 2 * half
                        q_ok = has_r1 and qx <= x1 and 0 <= qy < ny
                        for c in range(3):
                            far = r1[qx, qy, mp, c] if q_ok else 0.0
                            f1 = arc * t1_r[px1, y, k1, c] + t1_t[px1, y, k1, c] * far
                            f0 = r1[px1, y, mp, c] if has_r1 else 0.0
                            out[x, y, m, c] += 0.5 * (f0 + f1)


# --------------------------------------------------------------------------
# quadrant solve


def _levels(width: int) -> int:
    return max(1, math.ceil(math.log2(width))) if width > 1 else 1


def _frame(scene: SceneGrid) -> tuple[np.ndarray, np.ndarray, int]:
    """``[x, y, c]`` arrays padded with vacuum to ``X = 2**N`` columns."""
    w = scene.width
    n_top = _levels(w)
    big = 2**n_top
    sig = np.zeros((big, scene.height, 3))
    src = np.zeros((big, scene.height, 3))
    sig[:w] = scene.sigma_t.transpose(1, 0, 2)
    src[:w] = scene.source.transpose(1, 0, 2)
    return sig, src, n_top


def _empty_t(level: int, x_count: int, ny: int) -> CascadeT:
    shape = ((x_count >> level) + 1, ny, 2**level + 1, 3)
    return CascadeT(level, np.zeros(shape), np.ones(shape))


def _build_T_frame(sig, src, n_top, config: HrcConfig, stats: Stats) -> list[CascadeT]:
    big, ny = sig.shape[0], sig.shape[1]
    direct = n_top + 1 if config.oracle_trace else min(config.init_levels, n_top + 1)
    levels = []
    for n in range(n_top + 1):
        t = _empty_t(n, big, ny)
        if n < direct:
            stats.dda_traces += _init_level(sig, src, n, t.radiance, t.transmittance)
        else:
            below = levels[-1]
            _merge_up(below.radiance, below.transmittance, n - 1, t.radiance, t.transmittance)
            cols, _, nk = t.radiance.shape[:3]
            odd = nk // 2
            stats.interval_merges += cols * ny * ((nk - odd) + 2 * odd)
        levels.append(t)
    return levels


def _merge_down_frame(levels: list[CascadeT], n_top: int, stats: Stats) -> CascadeR:
    big = levels[0].radiance.shape[0] - 1
    ny = levels[0].radiance.shape[1]
    dummy = np.zeros((1, 1, 1, 3))
    upper = None
    for n in range(n_top - 1, -1, -1):
        out = np.empty(((big >> n) + 1, ny, 2**n, 3))
        r1 = dummy if upper is None else upper.fluence
        _merge_down(
            r1, upper is not None,
            levels[n].radiance, levels[n].transmittance,
            levels[n + 1].radiance, levels[n + 1].transmittance,
            angular_sizes(n + 1), n, out,
        )
        stats.interval_merges += out.shape[0] * ny * 2**n * 2
        upper = CascadeR(n, out)
    return upper


def build_T(scene: SceneGrid, config: HrcConfig | None = None, stats: Stats | None = None) -> list[CascadeT]:
    """Ray-interval tables ``T_0..T_N`` for gathering from +x."""
    config = config or HrcConfig()
    stats = stats if stats is not None else Stats()
    sig, src, n_top = _frame(scene)
    return _build_T_frame(sig, src, n_top, config, stats)


def merge_down(R_next: CascadeR | None, T_n: CascadeT, T_next: CascadeT, n: int) -> CascadeR:
    """One top-down step. ``R_next=None`` stands for the all-zero top level."""
    xs, ny = T_n.radiance.shape[:2]
    out = np.empty((xs, ny, 2**n, 3))
    r1 = np.zeros((1, 1, 1, 3)) if R_next is None else R_next.fluence
    _merge_down(
        r1, R_next is not None,
        T_n.radiance, T_n.transmittance, T_next.radiance, T_next.transmittance,
        angular_sizes(n + 1), n, out,
    )
    return CascadeR(n, out)


def solve_quadrant(scene: SceneGrid, config: HrcConfig | None = None, stats: Stats | None = None) -> CascadeR:
    """``R_0`` for light arriving from the +x quadrant."""
    config = config or HrcConfig()
    stats = stats if stats is not None else Stats()
    sig, src, n_top = _frame(scene)
    return _solve_frame(sig, src, n_top, config, stats)


def _solve_frame(sig, src, n_top, config, stats) -> CascadeR:
    with stats.timed("merge_up"):
        levels = _build_T_frame(sig, src, n_top, config, stats)
    with stats.timed("merge_down"):
        return _merge_down_frame(levels, n_top, stats)


# --------------------------------------------------------------------------
# full pipeline


def _quadrant_sum(scene: SceneGrid, config: HrcConfig, stats: Stats) -> np.ndarray:
    acc = np.zeros(scene.sigma_t.shape)
    for _ in range(4):
        sig, src, n_top = _frame(scene)
        r0 = _solve_frame(sig, src, n_top, config, stats)
        with stats.timed("gather"):
            # probe one column right of each pixel, its only cone
            acc += r0.fluence[1 : scene.width + 1, :, 0, :].transpose(1, 0, 2)
            scene = _rotate_world(scene)
            acc = rotate_array(acc)
    return acc


def _rotate_world(scene: SceneGrid) -> SceneGrid:
    # lights are irrelevant here; skip recomputing them
    return scene.replace(
        sigma_t=rotate_array(scene.sigma_t),
        source=rotate_array(scene.source),
        albedo=rotate_array(scene.albedo),
        lights=(),
    )


def gather_fluence(scene: SceneGrid, config: HrcConfig | None = None) -> FluenceField:
    """Single-bounce fluence for every pixel."""
    config = config or HrcConfig()
    stats = Stats()
    acc = _quadrant_sum(scene, config, stats)
    field = FluenceField(acc, stats)
    if config.blur_enabled:
        with stats.timed("blur"):
            field = FluenceField(cross_blur(acc, scene, config.blur_opacity_threshold), stats)
    return field


@njit(cache=True)
def _cross_blur(f, op, threshold, out):
    h = f.shape[0]
    w = f.shape[1]
    for y in range(h):
        for x in range(w):
            wc = 0.5
            for c in range(3):
                out[y, x, c] = 0.0
            for d in range(4):
                if d == 0:
                    xx, yy = x + 1, y
                elif d == 1:
                    xx, yy = x - 1, y
                elif d == 2:
                    xx, yy = x, y + 1
                else:
                    xx, yy = x, y - 1
                if 0 <= xx < w and 0 <= yy < h and abs(op[yy, xx] - op[y, x]) <= threshold:
                    for c in range(3):
                        out[y, x, c] += 0.125 * f[yy, xx, c]
                else:
                    wc += 0.125
            for c in range(3):
                out[y, x, c] += wc * f[y, x, c]


def cross_blur(field, scene: SceneGrid, threshold: float = 0.5) -> np.ndarray:
    """1-px cross blur (centre 1/2, arms 1/8) skipping dissimilar neighbours.

    A neighbour whose opacity differs from the centre's by more than
    ``threshold``, or that lies off the grid, gives its weight to the
    centre. Accepts a :class:`FluenceField` or a bare array and returns
    an array.
    """
    f = np.ascontiguousarray(getattr(field, "fluence", field), dtype=np.float64)
    if f.shape != scene.sigma_t.shape:
        raise ValueError(f"field shape {f.shape} does not match scene {scene.sigma_t.shape}")
    out = np.empty_like(f)
    _cross_blur(f, np.ascontiguousarray(scene.opacity()), float(threshold), out)
    return out


def solve_multibounce(scene: SceneGrid, config: HrcConfig | None = None) -> FluenceField:
    """Iterate single-bounce solves, re-emitting ``albedo * F / 2pi`` each time."""
    config = config or HrcConfig()
    field = gather_fluence(scene, config)
    total = Stats()
    total.add(field.stats)
    for _ in range(config.bounces - 1):
        if not np.any(scene.albedo > 0.0):
            break
        field = gather_fluence(inject_bounce_source(scene, field), config)
        total.add(field.stats)
    return FluenceField(field.fluence, total)


def hrc_spp(width: int) -> float:
    """Ray intervals per pixel, the sample count quoted for HRC."""
    n_top = _levels(width)
    return 4.0 * (n_top + 3 + 2.0**-n_top)
