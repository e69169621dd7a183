"""Named experiment setups so every figure reproduction is one flag.

A preset fixes the scene, its size, the algorithm and its knobs, plus the
crop used when reporting RMSE. ``spp=None`` for the path tracer means
"match the HRC sample budget at this size".
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from .hrc import hrc_spp

Region = tuple[int, int, int, int]


@dataclass(frozen=True)
class Preset:
    name: str
    scene: str
    size: int
    algo: str = "hrc"  # hrc | pt | pt-nee
    spp: int | None = None
    bounces: int = 1
    blur: bool = True
    crop: Region | None = None
    params: dict[str, Any] | None = None
    note: str = ""

    def equal_spp(self) -> int:
        return self.spp if self.spp is not None else max(1, round(hrc_spp(self.size)))


# Crop regions at the preset sizes, (x0, y0, width, height).
OCCLUDER_CROP: Region = (320, 64, 160, 96)
PINHOLE_CROP: Region = (256, 128, 256, 256)

_BASE = [
    Preset("fig2-blocks", "blocks", 16, note="two-block merge check"),
    Preset("fig8-hrc", "occluder", 512, crop=OCCLUDER_CROP, note="occluder penumbra"),
    Preset("fig8-pt", "occluder", 512, algo="pt", crop=OCCLUDER_CROP),
    Preset("fig8-ref", "occluder", 512, algo="pt-nee", spp=1024, crop=OCCLUDER_CROP),
    Preset("fig9-hrc", "pinhole", 512, crop=PINHOLE_CROP, note="pinhole projection"),
    Preset("fig9-nee", "pinhole", 512, algo="pt-nee", crop=PINHOLE_CROP),
    Preset("fig10-noblur", "occluder", 512, blur=False, crop=OCCLUDER_CROP, note="checkerboard"),
    Preset("fig11-hrc", "tiny_light", 512, note="2x2 light"),
    Preset("fig13-hrc", "julia", 512, note="volumetric Julia set"),
    Preset("fig13-ref", "julia", 512, algo="pt", spp=4096),
    Preset("fig14-hrc", "cornell", 512, bounces=6, note="multibounce Cornell box"),
    Preset("fig1-hrc", "multi_light", 1024, note="equal-sample comparison"),
    Preset("fig1-pt", "multi_light", 1024, algo="pt"),
]

PRESETS: dict[str, Preset] = {p.name: p for p in _BASE}


def get_preset(name: str, **overrides) -> Preset:
    try:
        p = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(p, **{k: v for k, v in overrides.items() if v is not None})
