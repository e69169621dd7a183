"""Radiance-interval algebra.

A radiance interval is the pair ``<r, t>`` of radiance contributed by a
line segment and the transmittance across it. Merging two intervals
front-to-back is the premultiplied-alpha "over" operator with
``alpha = 1 - t``.

Everything here works on numpy arrays whose last axis holds the colour
channels, so the same functions serve a single ray and a whole cascade
table. Plain floats work too.
"""

from __future__ import annotations

from typing import NamedTuple, Union

import numpy as np

CHANNELS = 3

ArrayLike = Union[float, np.ndarray]


class RadianceInterval(NamedTuple):
    radiance: ArrayLike
    transmittance: ArrayLike


# Arc-premultiplied radiance shares the representation; only the meaning of
# the first component differs.
AngularFluence = RadianceInterval


def spectrum(r: float, g: float | None = None, b: float | None = None) -> np.ndarray:
    """Build an RGB spectrum; a single value is broadcast to all channels."""
    if g is None and b is None:
        g = b = r
    return np.array([r, g, b], dtype=np.float64)


def vacuum(shape: tuple[int, ...] = ()) -> RadianceInterval:
    """The identity interval ``<0, 1>``."""
    full = shape + (CHANNELS,)
    return RadianceInterval(np.zeros(full), np.ones(full))


def is_valid(x: RadianceInterval) -> bool:
    r = np.asarray(x.radiance)
    t = np.asarray(x.transmittance)
    return bool(
        np.all(np.isfinite(r))
        and np.all(r >= 0.0)
        and np.all(t >= 0.0)
        and np.all(t <= 1.0)
    )


def merge(near: RadianceInterval, far: RadianceInterval) -> RadianceInterval:
    """Compose ``near`` in front of ``far``: ``<r_n + t_n r_f, t_n t_f>``."""
    rn, tn = near
    rf, tf = far
    return RadianceInterval(rn + tn * rf, tn * tf)


def merge_radiance(near: RadianceInterval, far_radiance: ArrayLike) -> ArrayLike:
    """Radiance seen through ``near`` with ``far_radiance`` behind it."""
    rn, tn = near
    return rn + tn * far_radiance


def scale_arc(arc: float, x: RadianceInterval) -> AngularFluence:
    """Turn per-ray radiance into angular fluence over ``arc`` radians.

    Transmittance is left alone.
    """
    if not arc > 0.0:
        raise ValueError(f"arc must be positive, got {arc}")
    return AngularFluence(arc * x.radiance, x.transmittance)
