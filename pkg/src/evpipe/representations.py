"""Frame representations: voxel grids, reconstruction backends, frames-per-second traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .core import EvpipeError, SensorGeometry, US_PER_S, as_events


class EmptyBatch(EvpipeError, ValueError):
    pass


class BackendFailure(EvpipeError, RuntimeError):
    pass


@dataclass
class VoxelGrid:
    values: np.ndarray  # (B, H, W)
    t_start: int
    t_end: int

    @property
    def bins(self) -> int:
        return self.values.shape[0]


def temporal_weights(t, t_start: int, t_end: int, B: int):
    """Lower bin index and the weight of the upper bin for each timestamp.

    Weight ``1 - w`` goes to bin ``b0`` and ``w`` to ``b0 + 1``.
    """
    t = np.asarray(t, dtype=np.int64)
    span = t_end - t_start
    if span == 0:
        ts = np.zeros(len(t))
    else:
        ts = (B - 1) * (t - t_start).astype(np.float64) / span
    b0 = np.floor(ts).astype(np.int64)
    b0 = np.minimum(b0, B - 1)
    w = ts - b0
    return b0, w


def voxel_grid(batch, B: int = 5, geometry: SensorGeometry = SensorGeometry()) -> VoxelGrid:
    """Signed (+1 ON, -1 OFF) events spread over ``B`` time bins with bilinear weights."""
    batch = as_events(batch)
    if len(batch) == 0:
        raise EmptyBatch("voxel grid of an empty batch")
    if B < 1:
        raise ValueError("B must be >= 1")
    t_start, t_end = int(batch["t"][0]), int(batch["t"][-1])
    b0, w = temporal_weights(batch["t"], t_start, t_end, B)
    sign = np.where(batch["p"] == 1, 1.0, -1.0)
    ys = batch["y"].astype(np.intp)
    xs = batch["x"].astype(np.intp)
    values = np.zeros((B, geometry.height, geometry.width))
    np.add.at(values, (b0, ys, xs), sign * (1.0 - w))
    upper = w > 0
    np.add.at(values, (b0[upper] + 1, ys[upper], xs[upper]), sign[upper] * w[upper])
    return VoxelGrid(values, t_start, t_end)


class ReconstructionBackend(Protocol):
    identifier: str

    def run(self, grid: VoxelGrid) -> np.ndarray: ...


class LeakyIntegrator:
    """Baseline reconstruction: ``F = clip(decay * F + gain * sum_b grid_b, 0, 1)``, F starts at 0.5."""

    def __init__(self, decay_per_frame: float = 0.9, gain: float = 0.1, geometry: SensorGeometry | None = None):
        if not 0.0 <= decay_per_frame <= 1.0 or gain < 0:
            raise ValueError("decay must be in [0, 1] and gain >= 0")
        self.decay = decay_per_frame
        self.gain = gain
        self.identifier = f"leaky-integrator(decay={decay_per_frame:g},gain={gain:g})"
        self.frame = None if geometry is None else np.full(geometry.shape, 0.5)

    def run(self, grid: VoxelGrid) -> np.ndarray:
        if self.frame is None:
            self.frame = np.full(grid.values.shape[1:], 0.5)
        self.frame = np.clip(self.decay * self.frame + self.gain * grid.values.sum(axis=0), 0.0, 1.0)
        return self.frame.copy()


def leaky_integrator_backend(decay_per_frame: float = 0.9, gain: float = 0.1) -> LeakyIntegrator:
    return LeakyIntegrator(decay_per_frame, gain)


def reconstruct(backend: ReconstructionBackend, grid: VoxelGrid) -> np.ndarray:
    try:
        frame = np.asarray(backend.run(grid), dtype=np.float64)
    except Exception as exc:
        raise BackendFailure(f"{getattr(backend, 'identifier', backend)!s} failed: {exc}") from exc
    if frame.shape != grid.values.shape[1:]:
        raise BackendFailure(f"backend returned shape {frame.shape}, expected {grid.values.shape[1:]}")
    if not np.all((frame >= 0.0) & (frame <= 1.0)):
        raise BackendFailure("backend output outside [0, 1]")
    return frame


def grid_preview(grid: VoxelGrid) -> np.ndarray:
    """Summed bins mapped to [0, 1] around mid-grey, for quick looks."""
    s = grid.values.sum(axis=0)
    m = np.abs(s).max()
    return np.full(s.shape, 0.5) if m == 0 else 0.5 + 0.5 * s / m


class VoxelProcessor:
    """Batch processor: voxel grid, then reconstruction through ``backend``."""

    accepts_partial = False

    def __init__(self, geometry: SensorGeometry, B: int = 5, backend: ReconstructionBackend | None = None):
        self.geometry = geometry
        self.B = B
        self.backend = backend if backend is not None else LeakyIntegrator(geometry=geometry)

    def __call__(self, batch):
        return reconstruct(self.backend, voxel_grid(batch, self.B, self.geometry))


@dataclass
class FrameRateTrace:
    counts: np.ndarray  # frames emitted in each second of stream time
    display_rate_hz: float = 60.0
    N: int = 0
    B: int = 5
    frame_times: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def exceeds(self) -> np.ndarray:
        return self.counts > self.display_rate_hz

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["second_index", "frames", "exceeds_display_rate"])
            for i, (c, e) in enumerate(zip(self.counts, self.exceeds)):
                w.writerow([i, int(c), "true" if e else "false"])


def frames_per_second_trace(stream, N: int, B: int = 5, display_rate_hz: float = 60.0) -> FrameRateTrace:
    """Count full buffers of ``N`` events (one frame each) per second of stream time.

    A frame belongs to the second in which its N-th event arrived, measured
    from the first event of the stream.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    events = as_events(stream)
    if len(events) == 0:
        return FrameRateTrace(np.zeros(0, dtype=np.int64), display_rate_hz, N, B)
    t = events["t"].astype(np.int64)
    n_frames = len(events) // N
    frame_times = t[np.arange(1, n_frames + 1) * N - 1]
    n_seconds = int((t[-1] - t[0]) // US_PER_S) + 1
    sec = (frame_times - t[0]) // US_PER_S
    counts = np.bincount(sec, minlength=n_seconds).astype(np.int64)
    return FrameRateTrace(counts, display_rate_hz, N, B, frame_times)
