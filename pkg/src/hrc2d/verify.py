"""End-to-end invariant suites behind ``hrc2d verify``.

Each check returns a :class:`Check`; a suite passes when all of them do.
The suites are small enough to run in CI: ``algebra`` and ``cascade`` in
seconds, ``oracle`` in a few seconds per 32x32 scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .generators import gen_scene
from .hrc import HrcConfig, angular_sizes, build_T, gather_fluence
from .metrics import rmse
from .radiance import RadianceInterval, merge
from .raymarch import trace
from .reference import quadrature_fluence
from .scene import rotate90, rotate_array
from .stats import Stats

ORACLE_SIZE = 32
ORACLE_DIRS = 8192
ORACLE_GATE = 0.02


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# --------------------------------------------------------------------------
# algebra


def _algebra() -> list[Check]:
    out = []
    a = RadianceInterval(np.full(3, 2.0), np.full(3, 0.5))
    m = merge(a, a)
    ok = np.all(m.radiance == 3.0) and np.all(m.transmittance == 0.25)
    out.append(Check("merge <2,.5>+<2,.5>", bool(ok), f"<{m.radiance[0]}, {m.transmittance[0]}>"))

    s = gen_scene("blocks", 16)
    t = trace(s, (0.0, 8.5), (16.0, 8.5))
    ok = np.allclose(t.radiance, 3.0, rtol=1e-12) and np.allclose(t.transmittance, 0.25, rtol=1e-12)
    out.append(Check("trace through two blocks", bool(ok), f"<{t.radiance[0]:.12g}, {t.transmittance[0]:.12g}>"))

    v = trace(gen_scene("empty", 16), (0.5, 0.5), (15.5, 12.0))
    ok = np.all(v.radiance == 0.0) and np.all(v.transmittance == 1.0)
    out.append(Check("vacuum trace is identity", bool(ok), "<0, 1>" if ok else str(v)))
    return out


# --------------------------------------------------------------------------
# cascade


def _cascade() -> list[Check]:
    out = []
    worst = max(abs(angular_sizes(n).sum() - math.pi / 2) for n in range(13))
    out.append(Check("angular coverage n<=12", worst < 1e-9, f"max dev {worst:.2e}"))

    size = 64
    f = gather_fluence(gen_scene("empty", size))
    out.append(Check("vacuum gives zero fluence", bool(np.all(f.fluence == 0.0)), f"max {f.fluence.max()}"))
    want = 19 * size * size
    out.append(Check("ray budget 19 X^2", f.stats.dda_traces == want, f"{f.stats.dda_traces} vs {want}"))

    occ = gen_scene("occluder", size)
    stats = Stats()
    levels = build_T(occ, HrcConfig(), stats)
    n = len(levels) - 1
    top = levels[n]
    worst = 0.0
    for twice_k in (0, 2**n, 2 ** (n + 1)):
        k = twice_k // 2
        dy = 2 * k - 2**n
        for x in range(0, top.radiance.shape[0] - 1):
            for y in range(0, size, 7):
                p = (x * 2**n, y + 0.5)
                d = trace(occ, p, (p[0] + 2**n, p[1] + dy))
                err = np.abs(top.radiance[x, y, k] - d.radiance) / np.maximum(np.abs(d.radiance), 1e-3)
                worst = max(worst, float(err.max()))
    out.append(Check("T_N exact on axis and diagonals", worst < 1e-4, f"max rel {worst:.2e}"))

    a = gather_fluence(occ)
    b = gather_fluence(occ)
    out.append(Check("deterministic", bool(np.array_equal(a.fluence, b.fluence)), "bit-identical"))

    r = gather_fluence(rotate90(occ)).fluence
    ref = rotate_array(a.fluence)
    dev = float(np.max(np.abs(r - ref)) / max(np.max(np.abs(ref)), 1e-12))
    out.append(Check("rotation equivariance", dev < 1e-4, f"max rel {dev:.2e}"))
    return out


# --------------------------------------------------------------------------
# oracle


def oracle_case(seed: int, size: int = ORACLE_SIZE, n_dirs: int = ORACLE_DIRS) -> dict:
    """Errors of one random scene, normalised by the reference peak."""
    s = gen_scene("random", size, {"seed": seed})
    ref = quadrature_fluence(s, n_dirs, at_probes=True)
    centre = quadrature_fluence(s, n_dirs)
    oracle = gather_fluence(s, HrcConfig(oracle_trace=True))
    fast = gather_fluence(s, HrcConfig())
    peak = float(ref.fluence.max())
    return {
        "seed": seed,
        "peak": peak,
        "oracle_vs_ref": rmse(oracle, ref).rmse / peak,
        "fast_vs_oracle": rmse(fast, oracle).rmse / peak,
        "oracle_vs_centre": rmse(oracle, centre).rmse / float(centre.fluence.max()),
    }


def _oracle(scenes: int) -> list[Check]:
    out = []
    for seed in range(scenes):
        c = oracle_case(seed)
        ok = c["oracle_vs_ref"] <= ORACLE_GATE and c["fast_vs_oracle"] <= c["oracle_vs_ref"]
        out.append(Check(
            f"random-{seed} oracle",
            ok,
            f"oracle/ref {c['oracle_vs_ref']:.4f} fast/oracle {c['fast_vs_oracle']:.4f} "
            f"(centre-sampled ref {c['oracle_vs_centre']:.4f})",
        ))
    return out


SUITES: dict[str, Callable[..., list[Check]]] = {
    "algebra": lambda scenes: _algebra(),
    "cascade": lambda scenes: _cascade(),
    "oracle": _oracle,
}


def run_suite(name: str, scenes: int = 20) -> list[Check]:
    if name == "all":
        return [c for k in SUITES for c in SUITES[k](scenes)]
    try:
        return SUITES[name](scenes)
    except KeyError:
        raise ValueError(f"unknown suite {name!r}") from None
