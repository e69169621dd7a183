"""Acceptance criteria, one test each.

Every test emits one ``[ACCEPT n] PASS|FAIL ...`` line with the measured
numbers; the lines are repeated in the terminal summary of any run.
Converged references are computed once per session on crops or strided
lattices; path-traced estimates and their references always use
different seeds.
"""

from __future__ import annotations

import functools
import math
import time

import numpy as np
import pytest

from hrc2d.generators import gen_scene
from hrc2d.hrc import HrcConfig, angular_sizes, build_T, cross_blur, gather_fluence, hrc_spp, solve_multibounce
from hrc2d.metrics import rmse, sample_lattice
from hrc2d.presets import OCCLUDER_CROP, PINHOLE_CROP
from hrc2d.radiance import RadianceInterval, merge
from hrc2d.raymarch import trace
from hrc2d.reference import PtConfig, converge_reference, render_reference
from hrc2d.scene import rotate90, rotate_array
from hrc2d.stats import Stats
from hrc2d.verify import oracle_case

pytestmark = pytest.mark.slow

REF_SEED = 9001
EQUAL_SPP = 52


ACCEPT_LINES: list[str] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"[ACCEPT {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPT_LINES.append(line)
    print("\n" + line)


@functools.lru_cache(maxsize=None)
def scene(name: str, size: int, **params):
    return gen_scene(name, size, params or None)


@functools.lru_cache(maxsize=None)
def hrc(name: str, size: int, blur: bool = True, **params):
    return gather_fluence(scene(name, size, **params), HrcConfig(blur_enabled=blur))


@functools.lru_cache(maxsize=None)
def converged(name: str, size: int, mode: str, region, stride: int, start: int, max_spp: int):
    field, history = converge_reference(
        scene(name, size), PtConfig(spp=start, mode=mode, seed=REF_SEED), region, stride, max_spp=max_spp
    )
    print(f"\n  reference {name}/{mode} region={region} stride={stride}: {history}")
    return field


def lattice_rmse(field, ref, region, stride) -> float:
    return rmse(sample_lattice(field, region, stride), ref).rmse


# --------------------------------------------------------------------------


def test_01_interval_algebra():
    a = RadianceInterval(np.full(3, 2.0), np.full(3, 0.5))
    m = merge(a, a)
    exact = np.all(m.radiance == 3.0) and np.all(m.transmittance == 0.25)
    t = trace(scene("blocks", 16), (0.0, 8.5), (16.0, 8.5))
    traced = np.allclose(t.radiance, 3.0, rtol=1e-12) and np.allclose(t.transmittance, 0.25, rtol=1e-12)
    ok = bool(exact and traced)
    report(1, ok, f"merge -> <{m.radiance[0]}, {m.transmittance[0]}>, "
                  f"trace -> <{t.radiance[0]:.15g}, {t.transmittance[0]:.15g}>")
    assert ok


@pytest.mark.parametrize("size", [256, 512])
def test_02_ray_budget(size):
    traces = hrc("empty", size).stats.dda_traces
    ok = traces == 19 * size * size
    report(2, ok, f"X={size}: {traces} traces, 19 X^2 = {19 * size * size}")
    assert ok


def test_03_constant_cost():
    cfg = HrcConfig()
    a, b = scene("empty", 512), scene("julia", 512)
    gather_fluence(scene("empty", 16), cfg)
    walls = {"empty": [], "julia": []}
    stats = {}
    for _ in range(3):
        for name, s in (("empty", a), ("julia", b)):
            t0 = time.perf_counter()
            f = gather_fluence(s, cfg)
            walls[name].append(time.perf_counter() - t0)
            stats[name] = f.stats
    counters = (stats["empty"].dda_traces == stats["julia"].dda_traces
                and stats["empty"].interval_merges == stats["julia"].interval_merges)
    te, tj = min(walls["empty"]), min(walls["julia"])
    diff = abs(tj - te) / te
    ok = counters and diff < 0.10
    report(3, ok, f"traces {stats['empty'].dda_traces}/{stats['julia'].dda_traces}, merges "
                  f"{stats['empty'].interval_merges}/{stats['julia'].interval_merges}, "
                  f"wall {te * 1e3:.0f}/{tj * 1e3:.0f} ms ({diff:.1%})")
    assert ok


def test_04_angular_coverage():
    worst = max(abs(angular_sizes(n).sum() - math.pi / 2) for n in range(17))
    ok = worst < 1e-9
    report(4, ok, f"max |sum - pi/2| over n=0..16: {worst:.2e}")
    assert ok


def test_05_oracle_equivalence():
    cases = [oracle_case(seed) for seed in range(20)]
    bad = [c for c in cases if c["oracle_vs_ref"] > 0.02 or c["fast_vs_oracle"] > c["oracle_vs_ref"]]
    worst = max(c["oracle_vs_ref"] for c in cases)
    worst_fast = max(c["fast_vs_oracle"] for c in cases)
    worst_centre = max(c["oracle_vs_centre"] for c in cases)
    ok = not bad
    report(5, ok, f"{20 - len(bad)}/20 scenes within 2%; worst oracle/ref {worst:.4f}, "
                  f"worst fast/oracle {worst_fast:.4f}, worst vs centre-sampled {worst_centre:.4f}; "
                  f"failing seeds {[c['seed'] for c in bad]}")
    assert ok


def test_06_representable_directions():
    s = scene("occluder", 512)
    levels = build_T(s, HrcConfig(), Stats())
    n = len(levels) - 1
    top = levels[n]
    worst = 0.0
    for k in (0, 2 ** (n - 1), 2**n):
        dy = 2 * k - 2**n
        for x in range(top.radiance.shape[0] - 1):
            for y in range(512):
                p = (x * 2**n, y + 0.5)
                d = trace(s, p, (p[0] + 2**n, p[1] + dy))
                for got, want in ((top.radiance[x, y, k], d.radiance), (top.transmittance[x, y, k], d.transmittance)):
                    err = np.abs(got - want) / np.maximum(np.abs(want), 1e-6)
                    worst = max(worst, float(err.max()))
    ok = worst <= 1e-4
    report(6, ok, f"T_{n} vs direct trace, axis and +-45 deg: max rel {worst:.2e}")
    assert ok


def test_07_uniform_medium():
    size, sigma = 128, 0.5
    s = gen_scene("uniform_medium", size, {"sigma": sigma, "source": 1.0})
    want = 2 * math.pi
    region = (size // 2 - 4, size // 2 - 4, 8, 8)
    f_hrc = sample_lattice(gather_fluence(s), region)
    f_pt = render_reference(s, PtConfig(spp=4096, mode="naive"), region).fluence
    e_hrc = float(np.max(np.abs(f_hrc - want)) / want)
    e_pt = float(np.max(np.abs(f_pt - want)) / want)
    ok = e_hrc <= 0.02 and e_pt <= 0.02
    report(7, ok, f"2 pi L_s = {want:.4f}; HRC max rel err {e_hrc:.2e}, PT(4096) {e_pt:.2e}")
    assert ok


def _transition(profile: np.ndarray) -> tuple[float, float, float]:
    """Positions where a visibility profile first crosses 0.9, 0.5, 0.1 going lit -> shadow."""
    out = []
    for level in (0.9, 0.5, 0.1):
        i = int(np.argmax(profile < level))
        a, b = profile[i - 1], profile[i]
        out.append(i - 1 + (a - level) / (a - b))
    return tuple(out)  # type: ignore[return-value]


def test_08_occluder_penumbra_and_rmse():
    size, strip_y, strip_h = 512, 64, 128
    widths, shifts = [], []
    for col in (360, 400, 440):
        region = (col, strip_y, 1, strip_h)
        ref_occ = converge_reference(scene("occluder", size), PtConfig(spp=4096, mode="nee", seed=REF_SEED),
                                     region, max_spp=1 << 16)[0].fluence
        ref_open = converge_reference(scene("occluder", size, bar_width=0.0),
                                      PtConfig(spp=4096, mode="nee", seed=REF_SEED), region, max_spp=1 << 16)[0].fluence
        h_occ = sample_lattice(hrc("occluder", size), region)
        h_open = sample_lattice(hrc("occluder", size, bar_width=0.0), region)
        vis = [(o / p).mean(axis=-1).ravel() for o, p in ((ref_occ, ref_open), (h_occ, h_open))]
        (r90, r50, r10), (h90, h50, h10) = (_transition(v) for v in vis)
        widths.append(abs((h10 - h90) - (r10 - r90)))
        shifts.append(abs(h50 - r50))
    edge_ok = max(widths) <= 5.0 and max(shifts) <= 5.0

    ref = converged("occluder", size, "nee", OCCLUDER_CROP, 2, 512, 1 << 14)
    pt = render_reference(scene("occluder", size), PtConfig(spp=EQUAL_SPP, mode="naive"), OCCLUDER_CROP, 2)
    e_hrc = lattice_rmse(hrc("occluder", size), ref, OCCLUDER_CROP, 2)
    e_pt = rmse(pt, ref).rmse
    ok = edge_ok and e_hrc < e_pt
    report(8, ok, f"10-90% width diff {max(widths):.2f} px, 50% shift {max(shifts):.2f} px; "
                  f"crop RMSE HRC {e_hrc:.3e} vs naive PT({EQUAL_SPP}) {e_pt:.3e}")
    assert ok


def test_09_pinhole():
    size, stride = 512, 2
    s = scene("pinhole", size)
    a = gather_fluence(s).fluence
    b = gather_fluence(s).fluence
    identical = a.tobytes() == b.tobytes()
    ref = converged("pinhole", size, "nee", PINHOLE_CROP, stride, 512, 1 << 14)
    nee = render_reference(s, PtConfig(spp=EQUAL_SPP, mode="nee"), PINHOLE_CROP, stride)
    e_hrc = lattice_rmse(a, ref, PINHOLE_CROP, stride)
    e_nee = rmse(nee, ref).rmse
    ok = identical and e_hrc < e_nee
    report(9, ok, f"bit-identical {identical}; crop RMSE HRC {e_hrc:.3e} vs NEE PT({EQUAL_SPP}) {e_nee:.3e}")
    assert ok


def test_10_julia():
    size, stride = 512, 8
    s = scene("julia", size)
    norm = float(s.source.max())
    ref = converged("julia", size, "naive", None, stride, 1024, 1 << 15)
    e = lattice_rmse(hrc("julia", size), ref, None, stride) / norm
    ok = e <= 0.01
    report(10, ok, f"RMSE vs converged reference {e:.5f} (bound 0.01); "
                   f"{e * norm / float(ref.fluence.max()):.2%} of peak fluence {float(ref.fluence.max()):.3f}")
    assert ok


def test_11_equal_sample_advantage():
    size, stride = 1024, 16
    s = scene("multi_light", size)
    ref = converged("multi_light", size, "nee", None, stride, 512, 1 << 14)
    h = hrc("multi_light", size)
    # intervals per pixel over all levels, not just the directly traced ones
    spp = round(hrc_spp(size))
    pt = render_reference(s, PtConfig(spp=spp, mode="naive"), None, stride)
    e_hrc = lattice_rmse(h, ref, None, stride)
    e_pt = rmse(pt, ref).rmse
    ok = e_hrc <= e_pt / 3
    # diagnostic only: the same ratio over pixels outside opaque blocks and emitters
    clear = sample_lattice(s.opacity(), None, stride) == 0.0
    h_lat = sample_lattice(h, None, stride)
    clear_ratio = math.sqrt(np.mean((pt.fluence - ref.fluence)[clear] ** 2) / np.mean((h_lat - ref.fluence)[clear] ** 2))
    report(11, ok, f"HRC RMSE {e_hrc:.3e} vs naive PT({spp}) {e_pt:.3e}: ratio {e_pt / e_hrc:.1f}x (need >= 3x); "
                   f"transparent pixels only {clear_ratio:.1f}x")
    assert ok


def test_12_blur():
    size, stride = 512, 2
    ref = converged("occluder", size, "nee", OCCLUDER_CROP, stride, 512, 1 << 14)
    e_blur = lattice_rmse(hrc("occluder", size), ref, OCCLUDER_CROP, stride)
    e_raw = lattice_rmse(hrc("occluder", size, blur=False), ref, OCCLUDER_CROP, stride)
    s = scene("occluder", size)
    const = np.full(s.sigma_t.shape, 0.7)
    blurred = cross_blur(const, s)
    dev = float(np.max(np.abs(blurred - const)))
    ok = e_blur < e_raw and dev <= 1e-6
    report(12, ok, f"crop RMSE blurred {e_blur:.3e} < unblurred {e_raw:.3e}; constant field max change {dev:.1e}")
    assert ok


def _umbra(s, block: tuple[int, int, int, int], centre, radius) -> np.ndarray:
    """Pixels from which every sampled point of the light is behind the disc (2 px margin)."""
    x0, y0, x1, y1 = block
    h, w = s.shape
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    cx, cy = centre
    r = radius - 2.0
    hidden = np.ones((h, w), bool)
    for lx in np.linspace(x0, x1, 17):
        for ly in (y0, y1):
            dx, dy = lx - xx, ly - yy
            t = np.clip(((cx - xx) * dx + (cy - yy) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
            d2 = (xx + t * dx - cx) ** 2 + (yy + t * dy - cy) ** 2
            hidden &= d2 < r * r
    hidden &= (xx - cx) ** 2 + (yy - cy) ** 2 > (radius + 2) ** 2
    return hidden


def test_13_multibounce():
    size = 512
    s = scene("cornell", size)
    box = max(s.lights, key=lambda b: (b[2] - b[0]) * (b[3] - b[1]))
    shadow = _umbra(s, box, (size / 2, 0.6 * size), 0.12 * size)
    shadow &= s.opacity() == 0.0
    fields = [solve_multibounce(s, HrcConfig(bounces=b)).fluence.mean(axis=-1) for b in range(1, 5)]
    no_disc = s.replace(sigma_t=np.where(_disc_mask(size), 0.0, s.sigma_t))
    open_f = gather_fluence(no_disc).fluence.mean(axis=-1)
    leak = float(fields[0][shadow].max())
    bound = 0.05 * float(open_f[shadow].min())
    lit_after = [float(f[shadow].min()) for f in fields[1:]]
    mono = min(float(np.min(b - a)) for a, b in zip(fields, fields[1:]))
    ok = shadow.sum() > 100 and leak <= bound and min(lit_after) > 0.0 and mono >= 0.0
    report(13, ok, f"{int(shadow.sum())} umbra px; 1-bounce max {leak:.3e} <= leak bound {bound:.3e}; "
                   f"min after 2..4 bounces {min(lit_after):.3e}; min per-pixel increase {mono:.2e}")
    assert ok


def _disc_mask(size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    return (((xx - size / 2) ** 2 + (yy - 0.6 * size) ** 2) <= (0.12 * size) ** 2)[..., None]


def test_14_equivariance():
    s = scene("occluder", 512)
    a = rotate_array(hrc("occluder", 512).fluence)
    b = gather_fluence(rotate90(s)).fluence
    dev = float(np.max(np.abs(a - b)) / np.max(np.abs(a)))
    ok = dev <= 1e-4
    report(14, ok, f"max |rot(F) - F(rot)| / peak = {dev:.2e}")
    assert ok
