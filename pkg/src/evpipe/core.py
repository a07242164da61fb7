"""Domain types shared by every stage, plus elementary stream statistics.

Event streams are numpy structured arrays with :data:`EVENT_DTYPE`
(``t`` in microseconds, ``x``/``y`` in pixels, ``p`` polarity 0=OFF / 1=ON).
A single event is an :class:`Event` named tuple.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

US_PER_S = 1_000_000

OFF = 0
ON = 1


class EvpipeError(Exception):
    """Base class for all errors raised by this package."""


class EmptyStream(EvpipeError, ValueError):
    pass


class ZeroTimeSpan(EvpipeError, ValueError):
    pass


class Event(NamedTuple):
    t: int
    x: int
    y: int
    polarity: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int = 304
    height: int = 240

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.width}x{self.height}")

    @classmethod
    def parse(cls, text: str) -> "SensorGeometry":
        """Parse ``"WxH"`` (e.g. ``"304x240"``)."""
        try:
            w, h = text.lower().split("x")
            return cls(int(w), int(h))
        except ValueError as exc:
            raise ValueError(f"bad geometry {text!r}, expected WxH") from exc

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True)
class EventRate:
    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"event rate must be non-negative, got {self.r}")

    def __float__(self) -> float:
        return float(self.r)


def empty_events(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=EVENT_DTYPE)


def make_events(records: Iterable) -> np.ndarray:
    """Build an event array from ``(t, x, y, p)`` tuples or :class:`Event` values."""
    rows = [tuple(int(v) for v in r) for r in records]
    return np.array(rows, dtype=EVENT_DTYPE) if rows else empty_events()


def as_events(events) -> np.ndarray:
    """Coerce a structured array or iterable of tuples to an ``EVENT_DTYPE`` array."""
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        return events
    if isinstance(events, np.ndarray) and events.dtype.names:
        out = empty_events(len(events))
        for name in EVENT_DTYPE.names:
            out[name] = events[name]
        return out
    return make_events(events)


def event_at(events: np.ndarray, i: int) -> Event:
    r = events[i]
    return Event(int(r["t"]), int(r["x"]), int(r["y"]), int(r["p"]))


def compute_event_rate(events) -> EventRate:
    """Events per second over the stream's time span, ``count / (t_last - t_first)``."""
    events = as_events(events)
    if len(events) == 0:
        raise EmptyStream("cannot compute the rate of an empty stream")
    span_us = int(events["t"][-1]) - int(events["t"][0])
    if span_us <= 0:
        raise ZeroTimeSpan(f"{len(events)} event(s) span zero time")
    return EventRate(len(events) * US_PER_S / span_us)


@dataclass(frozen=True)
class Violation:
    kind: str  # "OutOfBounds" | "TimestampRegression" | "BadPolarity"
    index: int
    detail: str = ""


def validate_stream(events, geometry: SensorGeometry) -> list[Violation]:
    """List every out-of-bounds coordinate, bad polarity and timestamp regression."""
    events = as_events(events)
    report: list[Violation] = []
    x = events["x"].astype(np.int64)
    y = events["y"].astype(np.int64)
    for i in np.flatnonzero((x >= geometry.width) | (y >= geometry.height)):
        report.append(Violation("OutOfBounds", int(i), f"({x[i]}, {y[i]}) outside {geometry}"))
    for i in np.flatnonzero(events["p"] > 1):
        report.append(Violation("BadPolarity", int(i), f"polarity {events['p'][i]}"))
    t = events["t"]
    for i in np.flatnonzero(t[1:] < t[:-1]) + 1:
        report.append(Violation("TimestampRegression", int(i), f"t={t[i]} after t={t[i - 1]}"))
    report.sort(key=lambda v: (v.index, v.kind))
    return report


def stream_geometry(events: np.ndarray, geometry: SensorGeometry | None = None) -> SensorGeometry:
    """``geometry`` if given, else the bounding box of the events (at least 1x1)."""
    if geometry is not None:
        return geometry
    if len(events) == 0:
        return SensorGeometry(1, 1)
    return SensorGeometry(int(events["x"].max()) + 1, int(events["y"].max()) + 1)
