"""Benchmarkable algorithms and stationary benchmark streams for the latency sweep."""

from __future__ import annotations

import numpy as np

from .core import SensorGeometry, US_PER_S, as_events, empty_events
from .flow import FlowConfig, FlowProcessor
from .hots import HotsConfig, HotsFeatures, PrototypeBank, learn_prototypes
from .ingest import GESTURE_DIRECTIONS, synthesize_gesture
from .latency import FunctionAlgorithm
from .representations import VoxelProcessor

ALGORITHMS = ("constant", "linear", "flow", "gesture", "voxel")


def _constant():
    work = np.arange(4096, dtype=np.float64)

    def proc(batch):
        return float(np.dot(work, work))

    return proc


def _linear():
    def proc(batch):
        acc = 0
        for t in batch["t"].tolist():
            acc += t
        return acc

    return proc


def make_algorithm(
    name: str,
    geometry: SensorGeometry = SensorGeometry(),
    stream=None,
    flow_config: FlowConfig = FlowConfig(),
    hots_config: HotsConfig = HotsConfig(),
    bank: PrototypeBank | None = None,
    bins: int = 5,
    seed: int = 0,
) -> FunctionAlgorithm:
    """Factory for the named algorithm; each ``make()`` gives a fresh processor."""
    if name == "constant":
        return FunctionAlgorithm(name, _constant)
    if name == "linear":
        return FunctionAlgorithm(name, _linear)
    if name == "flow":
        return FunctionAlgorithm(name, lambda: FlowProcessor(geometry, flow_config))
    if name == "gesture":
        if bank is None:
            if stream is None:
                raise ValueError("gesture benchmark needs a prototype bank or a stream to learn one from")
            bank = learn_prototypes([as_events(stream)[:20_000]], hots_config, seed, geometry)
        return FunctionAlgorithm(name, lambda: HotsFeatures(bank, geometry))
    if name == "voxel":
        return FunctionAlgorithm(name, lambda: VoxelProcessor(geometry, bins))
    raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


def gesture_stream(
    n_events: int,
    geometry: SensorGeometry = SensorGeometry(),
    seed: int = 0,
    gap_us: int = 0,
    **gesture_kwargs,
) -> np.ndarray:
    """Back-to-back synthetic gestures (cycling directions) until ``n_events`` are reached."""
    directions = list(GESTURE_DIRECTIONS)
    seeds = np.random.SeedSequence(seed)
    parts = []
    total = 0
    offset = 0
    i = 0
    while total < n_events:
        child = int(seeds.spawn(1)[0].generate_state(1)[0])
        ev, _ = synthesize_gesture(directions[i % len(directions)], geometry, seed=child, **gesture_kwargs)
        i += 1
        if len(ev) == 0:
            continue
        ev = ev.copy()
        ev["t"] += np.uint64(offset)
        offset = int(ev["t"][-1]) + 1 + gap_us
        parts.append(ev)
        total += len(ev)
    out = np.concatenate(parts) if parts else empty_events()
    return out[:n_events]


def burst_stream(
    geometry: SensorGeometry = SensorGeometry(),
    base_rate: float = 100_000,
    burst_rate: float = 500_000,
    quiet_s: float = 1.0,
    burst_s: float = 1.5,
    seed: int = 0,
) -> np.ndarray:
    """Quiet-active-quiet activity profile with evenly spaced events in each phase.

    The quiet phases run at exactly ``base_rate``, the middle phase at
    ``burst_rate``; used to reproduce the frames-per-second bump.
    """
    rng = np.random.default_rng(seed)
    phases = [(0.0, quiet_s, base_rate), (quiet_s, quiet_s + burst_s, burst_rate), (quiet_s + burst_s, 2 * quiet_s + burst_s, base_rate)]
    times = []
    for start, stop, rate in phases:
        n = int(round((stop - start) * rate))
        step = US_PER_S / rate
        times.append(np.round(start * US_PER_S + np.arange(n) * step).astype(np.int64))
    t = np.concatenate(times)
    ev = empty_events(len(t))
    ev["t"] = t.astype(np.uint64)
    ev["x"] = rng.integers(0, geometry.width, len(t))
    ev["y"] = rng.integers(0, geometry.height, len(t))
    ev["p"] = rng.integers(0, 2, len(t))
    return ev
