"""Instrumentation shared by the solvers and the reference tracer."""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

STAGES = ("merge_up", "merge_down", "gather", "blur")


@dataclass
class Stats:
    dda_traces: int = 0
    interval_merges: int = 0
    stage_times_ms: dict[str, float] = field(default_factory=lambda: {s: 0.0 for s in STAGES})
    spp: float | None = None

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = (time.perf_counter() - t0) * 1000.0
            self.stage_times_ms[stage] = self.stage_times_ms.get(stage, 0.0) + dt

    @property
    def total_ms(self) -> float:
        return sum(self.stage_times_ms.values())

    def add(self, other: "Stats") -> None:
        self.dda_traces += other.dda_traces
        self.interval_merges += other.interval_merges
        for k, v in other.stage_times_ms.items():
            self.stage_times_ms[k] = self.stage_times_ms.get(k, 0.0) + v

    def to_dict(self) -> dict:
        d = {
            "dda_traces": int(self.dda_traces),
            "interval_merges": int(self.interval_merges),
            "stage_times_ms": {k: float(self.stage_times_ms.get(k, 0.0)) for k in STAGES},
        }
        if self.spp is not None:
            d["spp"] = self.spp
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
