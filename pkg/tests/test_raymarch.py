import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hrc2d.generators import gen_scene
from hrc2d.radiance import merge
from hrc2d.raymarch import build_occupancy, dda_segments, integrate_cell, trace, trace_far
from hrc2d.scene import SIGMA_MAX, SceneGrid
from hrc2d.stats import Stats

W = H = 12


def _random_scene(seed, w=W, h=H):
    rng = np.random.default_rng(seed)
    sig = rng.uniform(0.0, 2.0, (h, w, 3)) * (rng.random((h, w, 1)) < 0.6)
    src = rng.uniform(0.0, 3.0, (h, w, 3)) * (rng.random((h, w, 1)) < 0.5)
    return SceneGrid(sig, src)


def _dense_trace(scene, p, q, steps=40000):
    """Midpoint sampling of the segment, composed sub-step by sub-step."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    ds = np.linalg.norm(q - p) / steps
    r = np.zeros(3)
    t = np.ones(3)
    for s in range(steps):
        x, y = p + (q - p) * (s + 0.5) / steps
        i, j = int(math.floor(x)), int(math.floor(y))
        if 0 <= i < scene.width and 0 <= j < scene.height:
            sig, src = scene.sigma_t[j, i], scene.source[j, i]
            r += t * src * (1 - np.exp(-sig * ds))
            t *= np.exp(-sig * ds)
    return r, t


pt = st.tuples(st.floats(0.0, W, allow_nan=False), st.floats(0.0, H, allow_nan=False))


# --------------------------------------------------------------------------
# per-cell integration


def test_integrate_cell_closed_form():
    r, t = integrate_cell(np.full(3, 0.7), np.array([1.0, 2.0, 3.0]), 2.0)
    np.testing.assert_allclose(t, math.exp(-1.4))
    np.testing.assert_allclose(r, np.array([1, 2, 3]) * (1 - math.exp(-1.4)))


def test_integrate_cell_thin_limit():
    r, t = integrate_cell(np.full(3, 1e-12), np.ones(3), 1.0)
    np.testing.assert_allclose(r, 1e-12, rtol=1e-9)
    r, t = integrate_cell(np.zeros(3), np.ones(3), 5.0)
    assert np.all(r == 0) and np.all(t == 1)


def test_integrate_cell_negative_length():
    with pytest.raises(ValueError):
        integrate_cell(np.ones(3), np.ones(3), -1.0)


# --------------------------------------------------------------------------
# DDA


@given(pt, pt)
def test_dda_coverage(p, q):
    length = math.dist(p, q)
    assume(length > 1e-6)
    segs = dda_segments(W, H, p, q)
    total = sum(s[2] for s in segs)
    # a segment lying on the far edge x = W or y = H is outside the half-open grid
    on_far_edge = (p[0] == q[0] == W) or (p[1] == q[1] == H)
    expected = 0.0 if on_far_edge else length
    assert abs(total - expected) <= 1e-6 * length
    for i, j, ell in segs:
        assert 0 <= i < W and 0 <= j < H and ell > 0


@given(pt, pt)
def test_dda_cells_are_edge_neighbours(p, q):
    assume(math.dist(p, q) > 1e-6)
    segs = dda_segments(W, H, p, q)
    for (a, b, _), (c, d, _) in zip(segs, segs[1:]):
        assert abs(a - c) + abs(b - d) in (1, 2)


def test_dda_far_edge_is_outside():
    assert dda_segments(W, H, (0.0, float(H)), (1.0, float(H))) == []
    assert [(i, j) for i, j, _ in dda_segments(W, H, (0.0, 0.0), (1.0, 0.0))] == [(0, 0)]


def test_dda_clips_outside_parts():
    segs = dda_segments(4, 4, (-3.0, 0.5), (10.0, 0.5))
    assert [(i, j) for i, j, _ in segs] == [(0, 0), (1, 0), (2, 0), (3, 0)]
    assert math.isclose(sum(s[2] for s in segs), 4.0)
    assert dda_segments(4, 4, (-3.0, -1.0), (-1.0, -2.0)) == []


def test_dda_boundary_tie_breaks():
    # running exactly along a grid line picks the cell above (half-open)
    assert [(i, j) for i, j, _ in dda_segments(3, 3, (0.0, 1.0), (3.0, 1.0))] == [(0, 1), (1, 1), (2, 1)]
    # moving left from a boundary starts in the cell on the left
    assert dda_segments(3, 3, (2.0, 0.5), (0.0, 0.5))[0][:2] == (1, 0)


def test_dda_diagonal_through_corners():
    segs = dda_segments(4, 4, (0.0, 0.0), (3.0, 3.0))
    assert [(i, j) for i, j, _ in segs] == [(0, 0), (1, 1), (2, 2)]
    for *_, ell in segs:
        assert math.isclose(ell, math.sqrt(2))


# --------------------------------------------------------------------------
# trace


def test_blocks_trace_is_three_quarter():
    t = trace(gen_scene("blocks", 16), (0.0, 8.5), (16.0, 8.5))
    np.testing.assert_allclose(t.radiance, 3.0, rtol=1e-12)
    np.testing.assert_allclose(t.transmittance, 0.25, rtol=1e-12)


def test_vacuum_trace():
    t = trace(gen_scene("empty", 16), (0.3, 0.1), (15.0, 9.0))
    assert np.all(t.radiance == 0) and np.all(t.transmittance == 1)


def test_trace_counts_calls():
    st_ = Stats()
    s = gen_scene("empty", 16)
    trace(s, (0, 0), (1, 1), st_)
    trace(s, (0, 0), (2, 1), st_)
    assert st_.dda_traces == 2


@pytest.mark.parametrize("seed", range(4))
def test_trace_matches_dense_sampling(seed):
    s = _random_scene(seed)
    rng = np.random.default_rng(100 + seed)
    for _ in range(3):
        p, q = rng.uniform(-1, W + 1, 2), rng.uniform(-1, W + 1, 2)
        got = trace(s, p, q)
        r, t = _dense_trace(s, p, q)
        np.testing.assert_allclose(got.transmittance, t, rtol=2e-3, atol=1e-6)
        np.testing.assert_allclose(got.radiance, r, rtol=2e-3, atol=2e-3)


@given(st.integers(0, 50), pt, pt, st.floats(0.05, 0.95))
def test_multiplicative_and_decomposable(seed, p, r, frac):
    assume(math.dist(p, r) > 1e-3)
    s = _random_scene(seed)
    q = tuple(a + frac * (b - a) for a, b in zip(p, r))
    whole = trace(s, p, r)
    near, far = trace(s, p, q), trace(s, q, r)
    np.testing.assert_allclose(whole.transmittance, near.transmittance * far.transmittance, rtol=1e-5, atol=1e-300)
    m = merge(near, far)
    np.testing.assert_allclose(whole.radiance, m.radiance, rtol=1e-5, atol=1e-12)


def test_reversal_asymmetry():
    sig = np.zeros((1, 4, 3))
    src = np.zeros((1, 4, 3))
    sig[0, 0], src[0, 0] = 1.0, 5.0  # bright cell at the left
    sig[0, 2] = 2.0  # dark absorber right of it
    s = SceneGrid(sig, src)
    ab, ba = trace(s, (0.0, 0.5), (4.0, 0.5)), trace(s, (4.0, 0.5), (0.0, 0.5))
    np.testing.assert_allclose(ab.transmittance, ba.transmittance, rtol=1e-6)
    assert not np.allclose(ab.radiance, ba.radiance)
    assert np.all(ba.radiance < ab.radiance)


# --------------------------------------------------------------------------
# trace_far


def test_trace_far_vacuum():
    s = gen_scene("empty", 32)
    assert np.all(trace_far(s, build_occupancy(s), (10.5, 3.5), (0.6, 0.8)) == 0)


def test_trace_far_matches_plain_trace():
    s = gen_scene("occluder", 64)
    occ = build_occupancy(s)
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = rng.uniform(0, 64, 2)
        a = rng.uniform(0, 2 * math.pi)
        u = (math.cos(a), math.sin(a))
        far = trace_far(s, occ, p, u)
        ref = trace(s, p, (p[0] + 300 * u[0], p[1] + 300 * u[1])).radiance
        np.testing.assert_allclose(far, ref, rtol=1e-9, atol=1e-4)


def test_trace_far_through_disc_exact():
    s = gen_scene("occluder", 64)
    occ = build_occupancy(s)
    p = (2.5, 32.2)
    far = trace_far(s, occ, p, (1.0, 0.0))
    ref = trace(s, p, (64.0, 32.2)).radiance
    # the opaque disc triggers the early exit; what is skipped is below e^-20
    np.testing.assert_allclose(far, ref, rtol=1e-6)
    assert far[0] > 0.9


def test_trace_far_early_exit_bound():
    sig = np.zeros((16, 64, 3))
    src = np.zeros((16, 64, 3))
    sig[:, 20:24] = SIGMA_MAX
    src[:, 40:] = 3.0
    sig[:, 40:] = 0.5
    s = SceneGrid(sig, src)
    far = trace_far(s, build_occupancy(s), (1.5, 8.5), (1.0, 0.0))
    full = trace(s, (1.5, 8.5), (64.0, 8.5)).radiance
    assert np.all(np.abs(far - full) <= 1e-4)


def test_trace_far_direction_check():
    s = gen_scene("empty", 16)
    with pytest.raises(ValueError):
        trace_far(s, build_occupancy(s), (1, 1), (1.0, 1.0))


def test_occupancy_blocks():
    s = gen_scene("tiny_light", 32)
    occ = build_occupancy(s)
    assert occ.flags.shape == (4, 4)
    # the light sits on cells 15..16, straddling four blocks
    assert occ.flags.sum() == 4 and occ.flags[1:3, 1:3].all()
