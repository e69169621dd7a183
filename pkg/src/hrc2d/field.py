"""Per-pixel fluence output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stats import Stats


@dataclass
class FluenceField:
    """Fluence per pixel, ``[y, x, channel]``, plus the run's counters."""

    fluence: np.ndarray
    stats: Stats = field(default_factory=Stats)

    def __post_init__(self):
        self.fluence = np.asarray(self.fluence)
        if self.fluence.ndim != 3 or self.fluence.shape[2] != 3:
            raise ValueError(f"fluence must be (H, W, 3), got {self.fluence.shape}")

    @property
    def width(self) -> int:
        return self.fluence.shape[1]

    @property
    def height(self) -> int:
        return self.fluence.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @classmethod
    def zeros(cls, height: int, width: int) -> "FluenceField":
        return cls(np.zeros((height, width, 3)))
