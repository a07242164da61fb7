"""Pre-processing chain: hot-pixel mask, per-pixel refractory period, spatiotemporal denoise.

Every filter keeps a subset of the input in its original order and never
touches event fields.  :class:`FilterChain` is the stateful form used by the
pipeline (state survives across packets); the module-level functions run a
fresh scanner over a whole stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import SensorGeometry, US_PER_S, ZeroTimeSpan, as_events, stream_geometry

NEVER = np.iinfo(np.int64).min // 4

STAGES = ("hot_pixel", "refractory", "spatiotemporal")


@dataclass(frozen=True)
class FilterConfig:
    refractory_us: int = 1000
    st_radius: int = 1
    st_window_us: int = 1000
    hot_pixels: frozenset = frozenset()
    # when set, hot pixels are detected from the input before filtering
    hot_pixel_rate_threshold: float | None = None

    def __post_init__(self):
        if self.refractory_us < 0 or self.st_radius < 0 or self.st_window_us < 0:
            raise ValueError("filter parameters must be non-negative")
        object.__setattr__(self, "hot_pixels", frozenset((int(x), int(y)) for x, y in self.hot_pixels))

    @classmethod
    def disabled(cls) -> "FilterConfig":
        return cls(refractory_us=0, st_radius=0, st_window_us=0)

    @property
    def spatiotemporal_enabled(self) -> bool:
        # radius 0 or window 0 switches the stage off instead of dropping everything
        return self.st_radius > 0 and self.st_window_us > 0


@dataclass
class FilterStats:
    input_count: int = 0
    output_count: int = 0
    removed_by_stage: dict = field(default_factory=lambda: {s: 0 for s in STAGES})

    @property
    def removed(self) -> int:
        return sum(self.removed_by_stage.values())

    @property
    def kept_fraction(self) -> float:
        return self.output_count / self.input_count if self.input_count else 1.0

    def __iadd__(self, other: "FilterStats"):
        self.input_count += other.input_count
        self.output_count += other.output_count
        for k, v in other.removed_by_stage.items():
            self.removed_by_stage[k] = self.removed_by_stage.get(k, 0) + v
        return self


@numba.njit(cache=True)
def _refractory_scan(t, x, y, last_kept, refractory_us):
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for i in range(t.shape[0]):
        ti = t[i]
        if ti - last_kept[y[i], x[i]] >= refractory_us:
            keep[i] = True
            last_kept[y[i], x[i]] = ti
    return keep


@numba.njit(cache=True)
def _spatiotemporal_scan(t, x, y, last_seen, radius, window_us):
    h, w = last_seen.shape
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for i in range(t.shape[0]):
        ti = t[i]
        xi = x[i]
        yi = y[i]
        y0 = max(yi - radius, 0)
        y1 = min(yi + radius, h - 1)
        x0 = max(xi - radius, 0)
        x1 = min(xi + radius, w - 1)
        supported = False
        for yy in range(y0, y1 + 1):
            for xx in range(x0, x1 + 1):
                if yy == yi and xx == xi:
                    continue
                if ti - last_seen[yy, xx] <= window_us:
                    supported = True
                    break
            if supported:
                break
        keep[i] = supported
        last_seen[yi, xi] = ti
    return keep


def _columns(events):
    return (
        events["t"].astype(np.int64),
        events["x"].astype(np.int64),
        events["y"].astype(np.int64),
    )


class RefractoryFilter:
    def __init__(self, refractory_us: int, geometry: SensorGeometry):
        self.refractory_us = int(refractory_us)
        self.last_kept = np.full(geometry.shape, NEVER, dtype=np.int64)

    def mask(self, events) -> np.ndarray:
        if self.refractory_us == 0 or len(events) == 0:
            return np.ones(len(events), dtype=bool)
        return _refractory_scan(*_columns(events), self.last_kept, self.refractory_us)


class SpatiotemporalFilter:
    def __init__(self, radius: int, window_us: int, geometry: SensorGeometry):
        self.radius = int(radius)
        self.window_us = int(window_us)
        # every raw event counts as support, kept or not
        self.last_seen = np.full(geometry.shape, NEVER, dtype=np.int64)

    def mask(self, events) -> np.ndarray:
        if len(events) == 0:
            return np.ones(0, dtype=bool)
        return _spatiotemporal_scan(*_columns(events), self.last_seen, self.radius, self.window_us)


def hot_pixel_mask(events, hot_pixels) -> np.ndarray:
    """True for events NOT at a hot pixel."""
    if not hot_pixels or len(events) == 0:
        return np.ones(len(events), dtype=bool)
    hp = np.array(sorted(hot_pixels), dtype=np.int64)
    code = events["x"].astype(np.int64) << 16 | events["y"].astype(np.int64)
    return ~np.isin(code, hp[:, 0] << 16 | hp[:, 1])


class FilterChain:
    """Stateful hot-pixel -> refractory -> spatiotemporal chain for one stream."""

    def __init__(self, config: FilterConfig, geometry: SensorGeometry):
        self.config = config
        self.geometry = geometry
        self.hot_pixels = config.hot_pixels
        self.refractory = RefractoryFilter(config.refractory_us, geometry) if config.refractory_us > 0 else None
        self.spatiotemporal = (
            SpatiotemporalFilter(config.st_radius, config.st_window_us, geometry)
            if config.spatiotemporal_enabled
            else None
        )
        self.stats = FilterStats()

    def process(self, events) -> np.ndarray:
        events = as_events(events)
        stats = FilterStats(input_count=len(events))
        out = events
        if self.hot_pixels:
            out = out[hot_pixel_mask(out, self.hot_pixels)]
        stats.removed_by_stage["hot_pixel"] = len(events) - len(out)
        if self.refractory is not None:
            n = len(out)
            out = out[self.refractory.mask(out)]
            stats.removed_by_stage["refractory"] = n - len(out)
        if self.spatiotemporal is not None:
            n = len(out)
            out = out[self.spatiotemporal.mask(out)]
            stats.removed_by_stage["spatiotemporal"] = n - len(out)
        stats.output_count = len(out)
        self.stats += stats
        return out


def detect_hot_pixels(events, geometry: SensorGeometry, rate_threshold: float) -> set[tuple[int, int]]:
    """Pixels whose own event rate over the whole stream exceeds ``rate_threshold`` ev/s."""
    events = as_events(events)
    if len(events) == 0:
        raise ZeroTimeSpan("empty stream has no time span")
    span_us = int(events["t"][-1]) - int(events["t"][0])
    if span_us <= 0:
        raise ZeroTimeSpan("stream spans zero time")
    counts = np.zeros(geometry.shape, dtype=np.int64)
    np.add.at(counts, (events["y"].astype(np.intp), events["x"].astype(np.intp)), 1)
    ys, xs = np.nonzero(counts * US_PER_S / span_us > rate_threshold)
    return {(int(x), int(y)) for x, y in zip(xs, ys)}


def refractory_filter(events, refractory_us: int, geometry: SensorGeometry | None = None):
    """Drop an event if its pixel kept another one less than ``refractory_us`` earlier."""
    events = as_events(events)
    f = RefractoryFilter(refractory_us, stream_geometry(events, geometry))
    out = events[f.mask(events)]
    stats = FilterStats(len(events), len(out))
    stats.removed_by_stage["refractory"] = len(events) - len(out)
    return out, stats


def spatiotemporal_filter(events, st_radius: int, st_window_us: int, geometry: SensorGeometry | None = None):
    """Keep an event only if another pixel within ``st_radius`` fired at most ``st_window_us`` before."""
    events = as_events(events)
    f = SpatiotemporalFilter(st_radius, st_window_us, stream_geometry(events, geometry))
    out = events[f.mask(events)]
    stats = FilterStats(len(events), len(out))
    stats.removed_by_stage["spatiotemporal"] = len(events) - len(out)
    return out, stats


def resolve_hot_pixels(config: FilterConfig, events, geometry: SensorGeometry) -> FilterConfig:
    """Run the hot-pixel calibration pass if the config asks for one."""
    if config.hot_pixel_rate_threshold is None or len(events) < 2:
        return config
    found = detect_hot_pixels(events, geometry, config.hot_pixel_rate_threshold)
    return FilterConfig(
        config.refractory_us,
        config.st_radius,
        config.st_window_us,
        frozenset(config.hot_pixels | found),
        None,
    )


def apply_chain(events, config: FilterConfig, geometry: SensorGeometry | None = None):
    events = as_events(events)
    geometry = stream_geometry(events, geometry)
    config = resolve_hot_pixels(config, events, geometry)
    chain = FilterChain(config, geometry)
    out = chain.process(events)
    return out, chain.stats
