"""
Per-frame-pair histogram descriptors.

Two time series are computed per video, one histogram per consecutive frame
pair, each flattened from a 5x5 spatial grid x 8 orientation bins (200 bins):

* HoF accumulates optical-flow magnitudes with hard orientation binning.
* HoG accumulates binarized inter-frame difference magnitudes, with the mass
  linearly split between the two nearest orientation bins of the difference
  image's spatial gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import FarnebackParams, FlowField, farneback_flow
from .frames import FrameSequence

GRID = 5
ORIENTATION_BINS = 8
HISTOGRAM_DIM = GRID * GRID * ORIENTATION_BINS  # 200

DEFAULT_HOG_THRESHOLD = 40.0

_TWO_PI = 2.0 * np.pi
_BIN_WIDTH = _TWO_PI / ORIENTATION_BINS


@dataclass
class HistogramSeries:
    """One histogram per consecutive frame pair of a video."""

    kind: str  # "hof" or "hog"
    histograms: np.ndarray  # shape (frame_count - 1, 200)

    def __len__(self) -> int:
        return self.histograms.shape[0]


def _cell_index(height: int, width: int) -> np.ndarray:
    """Flat spatial-cell index (0..24) per pixel for an HxW frame."""
    rows = np.minimum(GRID - 1, (GRID * np.arange(height)) // height)
    cols = np.minimum(GRID - 1, (GRID * np.arange(width)) // width)
    return (rows[:, None] * GRID + cols[None, :]).astype(np.intp)


def hof_frame(flow: FlowField) -> np.ndarray:
    """Histogram of flow: per-pixel magnitude into (cell, orientation) bins.

    Orientation uses hard assignment: bin = floor(atan2(v, u) / (pi/4)),
    angle normalized to [0, 2*pi).
    """
    u, v = flow.u, flow.v
    magnitude = np.hypot(u, v)
    theta = np.mod(np.arctan2(v, u), _TWO_PI)
    obin = np.minimum(
        ORIENTATION_BINS - 1, np.floor(theta / _BIN_WIDTH).astype(np.intp)
    )
    cell = _cell_index(*u.shape)
    idx = cell * ORIENTATION_BINS + obin
    return np.bincount(
        idx.ravel(), weights=magnitude.ravel(), minlength=HISTOGRAM_DIM
    )


def _central_gradient(field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with edge replication; returns (gx, gy)."""
    padded = np.pad(field, 1, mode="edge")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    return gx, gy


def hog_frame(
    prev: np.ndarray, next: np.ndarray, threshold: float = DEFAULT_HOG_THRESHOLD
) -> np.ndarray:
    """Histogram of binarized frame-difference gradients.

    The difference image D = next - prev is binarized per pixel to 255 where
    |D| >= threshold, else 0. Each surviving pixel's mass is split linearly
    between the two nearest of 8 orientation bins of the spatial gradient of
    D; pixels with zero binarized mass or zero gradient contribute nothing.
    """
    prev = np.asarray(prev, dtype=np.float64)
    next = np.asarray(next, dtype=np.float64)
    if prev.shape != next.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {next.shape}")
    diff = next - prev
    mass = np.where(np.abs(diff) >= threshold, 255.0, 0.0)
    gx, gy = _central_gradient(diff)
    active = (mass > 0.0) & ((gx != 0.0) | (gy != 0.0))
    if not active.any():
        return np.zeros(HISTOGRAM_DIM)

    theta = np.mod(np.arctan2(gy[active], gx[active]), _TWO_PI)
    pos = theta / _BIN_WIDTH  # continuous bin coordinate in [0, 8)
    lo = np.floor(pos).astype(np.intp) % ORIENTATION_BINS
    hi = (lo + 1) % ORIENTATION_BINS
    frac = pos - np.floor(pos)

    cell = _cell_index(*prev.shape)[active]
    m = mass[active]
    hist = np.bincount(
        cell * ORIENTATION_BINS + lo, weights=m * (1.0 - frac), minlength=HISTOGRAM_DIM
    )
    hist += np.bincount(
        cell * ORIENTATION_BINS + hi, weights=m * frac, minlength=HISTOGRAM_DIM
    )
    return hist


def compute_series(
    seq: FrameSequence,
    fb: FarnebackParams | None = None,
    threshold: float = DEFAULT_HOG_THRESHOLD,
) -> tuple[HistogramSeries, HistogramSeries]:
    """Compute the (HoF, HoG) series for one video, one entry per frame pair."""
    if seq.frame_count < 2:
        raise ValueError(f"video '{seq.key}': need >= 2 frames")
    if fb is None:
        fb = FarnebackParams()
    n = seq.frame_count - 1
    hof = np.empty((n, HISTOGRAM_DIM))
    hog = np.empty((n, HISTOGRAM_DIM))
    for t in range(n):
        prev, next = seq.frames[t], seq.frames[t + 1]
        hof[t] = hof_frame(farneback_flow(prev, next, fb))
        hog[t] = hog_frame(prev, next, threshold)
    return (
        HistogramSeries(kind="hof", histograms=hof),
        HistogramSeries(kind="hog", histograms=hog),
    )


_SERIES_SUFFIX = {"hof": ".of.txt", "hog": ".hog.txt"}


def dump_series_text(series: HistogramSeries, key: str, out_dir: str | Path) -> Path:
    """Write a series as `<key>.of.txt` / `<key>.hog.txt`, one line per frame
    pair, 200 space-separated values with full round-trip precision."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / (key + _SERIES_SUFFIX[series.kind])
    lines = [
        " ".join(repr(float(v)) for v in row) for row in series.histograms
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_series_text(path: str | Path, kind: str) -> HistogramSeries:
    """Read back a text series dump (debugging/compatibility path)."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append([float(v) for v in line.split()])
    histograms = np.array(rows, dtype=np.float64).reshape(-1, HISTOGRAM_DIM)
    return HistogramSeries(kind=kind, histograms=histograms)
