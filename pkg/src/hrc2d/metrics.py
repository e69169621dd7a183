"""Error metrics and file formats (PFM, PNG previews, benchmark CSV).

Errors are always measured on linear fluence, never on previews.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import cv2
import numpy as np

from .field import FluenceField

Region = tuple[int, int, int, int]  # x0, y0, width, height

BENCH_COLUMNS = ("size", "merge_up_ms", "merge_down_ms", "total_ms", "dda_traces")
BENCH_EXTRA = ("scene", "interval_merges")


class PfmError(ValueError):
    pass


@dataclass
class DiffReport:
    rmse: float
    max_abs_error: float
    region: Region | None
    normalization: float

    @property
    def rmse_normalized(self) -> float:
        return self.rmse / self.normalization if self.normalization > 0 else float("nan")

    def as_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "max_abs_error": self.max_abs_error,
            "rmse_normalized": self.rmse_normalized,
            "peak": self.normalization,
            "region": list(self.region) if self.region else None,
        }


def _arr(f) -> np.ndarray:
    return np.asarray(getattr(f, "fluence", f), dtype=np.float64)


def crop(f, region: Region | None) -> np.ndarray:
    a = _arr(f)
    if region is None:
        return a
    x0, y0, w, h = region
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > a.shape[1] or y0 + h > a.shape[0]:
        raise ValueError(f"region {region} outside {a.shape[1]}x{a.shape[0]} field")
    return a[y0 : y0 + h, x0 : x0 + w]


def sample_lattice(f, region: Region | None = None, stride: int = 1) -> np.ndarray:
    """The pixels a strided reference render covers."""
    return crop(f, region)[::stride, ::stride]


def rmse(a, b, region: Region | None = None) -> DiffReport:
    """Channel-averaged RMSE of ``a - b`` over ``region``; ``b`` is the reference."""
    aa, bb = _arr(a), _arr(b)
    if aa.shape != bb.shape:
        raise ValueError(f"shape mismatch: {aa.shape} vs {bb.shape}")
    aa, bb = crop(aa, region), crop(bb, region)
    d = aa - bb
    return DiffReport(
        rmse=float(np.sqrt(np.mean(d * d))),
        max_abs_error=float(np.max(np.abs(d))),
        region=region,
        normalization=float(np.max(bb)),
    )


# --------------------------------------------------------------------------
# PFM


def _atomic_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_pfm(field, path) -> None:
    """Colour PFM, little-endian float32, rows bottom-up."""
    a = np.asarray(getattr(field, "fluence", field))
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got {a.shape}")
    h, w = a.shape[:2]
    header = f"PF\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(a[::-1], dtype="<f4").tobytes()
    _atomic_bytes(Path(path), header + body)


_HEADER = re.compile(rb"\A(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")


def read_pfm(path) -> FluenceField:
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if m is None:
        raise PfmError(f"{path}: malformed PFM header")
    kind, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), m.group(4)
    try:
        scale_v = float(scale)
    except ValueError:
        raise PfmError(f"{path}: bad scale {scale!r}") from None
    if scale_v == 0.0:
        raise PfmError(f"{path}: zero scale")
    ch = 3 if kind == b"PF" else 1
    dtype = "<f4" if scale_v < 0 else ">f4"
    payload = data[m.end() :]
    need = w * h * ch * 4
    if len(payload) != need:
        raise PfmError(f"{path}: expected {need} payload bytes, found {len(payload)}")
    a = np.frombuffer(payload, dtype=dtype).reshape(h, w, ch)[::-1].astype(np.float32)
    if ch == 1:
        a = np.repeat(a, 3, axis=2)
    return FluenceField(a)


# --------------------------------------------------------------------------
# previews


def _srgb(x: np.ndarray) -> np.ndarray:
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def tonemap(field, exposure: float = 1.0) -> np.ndarray:
    """8-bit sRGB of ``1 - exp(-exposure * F)``."""
    if not exposure > 0:
        raise ValueError("exposure must be positive")
    a = _arr(field)
    v = np.clip(-np.expm1(-exposure * np.maximum(a, 0.0)), 0.0, 1.0)
    return np.rint(_srgb(v) * 255.0).astype(np.uint8)


def tonemap_png(field, path, exposure: float = 1.0) -> None:
    img = tonemap(field, exposure)
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp.png")
    if not cv2.imwrite(str(tmp), img[:, :, ::-1]):
        raise OSError(f"could not write {path}")
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# benchmarks


@dataclass
class BenchRow:
    size: int
    merge_up_ms: float
    merge_down_ms: float
    total_ms: float
    dda_traces: int
    scene: str = ""
    interval_merges: int = 0


def bench_record(rows: Iterable[BenchRow], path) -> None:
    """CSV with the fixed timing columns, then ``scene`` and ``interval_merges``.

    ``total_ms`` covers every stage (gather and blur included), so it is
    not the sum of the two merge columns.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no benchmark rows to record")
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BENCH_COLUMNS + BENCH_EXTRA)
        for r in rows:
            wr.writerow(
                [r.size, f"{r.merge_up_ms:.3f}", f"{r.merge_down_ms:.3f}", f"{r.total_ms:.3f}",
                 r.dda_traces, r.scene, r.interval_merges]
            )
    os.replace(tmp, path)


def read_bench(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
