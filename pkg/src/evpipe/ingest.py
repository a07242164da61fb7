"""Packet codec, event file readers/writers and synthetic streams with ground truth.

``.evp`` files are a plain concatenation of packets.  Packet layout, all
little-endian::

    magic 0x45565031 (u32) | seq (u32) | count (u32) | reserved = 0 (u32)
    count x [ t (u64, us) | x (u16) | y (u16) | polarity (u8) | 3 zero bytes ]

A packet never exceeds 16 384 bytes, i.e. at most 1023 events.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .core import EVENT_DTYPE, EvpipeError, SensorGeometry, US_PER_S, as_events, empty_events

MAGIC = 0x45565031
HEADER = struct.Struct("<IIII")
HEADER_SIZE = HEADER.size
RECORD_SIZE = 16
MAX_PACKET_BYTES = 16_384
MAX_PACKET_EVENTS = (MAX_PACKET_BYTES - HEADER_SIZE) // RECORD_SIZE  # 1023

RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "V3")]
)
assert RECORD_DTYPE.itemsize == RECORD_SIZE


class PacketError(EvpipeError, ValueError):
    """Malformed packet bytes."""


class PacketTooLarge(PacketError):
    pass


class BadMagic(PacketError):
    pass


class Truncated(PacketError):
    pass


class CountMismatch(PacketError):
    pass


class NonMonotoneTimestamps(PacketError):
    pass


class ParseError(EvpipeError, ValueError):
    pass


class SeqGap(EvpipeError, ValueError):
    pass


class InvalidSpec(EvpipeError, ValueError):
    pass


@dataclass
class EventPacket:
    seq: int
    events: np.ndarray = field(default_factory=empty_events)

    def __post_init__(self):
        self.events = as_events(self.events)

    def __eq__(self, other):
        if not isinstance(other, EventPacket):
            return NotImplemented
        return self.seq == other.seq and np.array_equal(self.events, other.events)


def encode_packet(packet: EventPacket) -> bytes:
    ev = packet.events
    n = len(ev)
    if HEADER_SIZE + n * RECORD_SIZE > MAX_PACKET_BYTES:
        raise PacketTooLarge(
            f"{n} events need {HEADER_SIZE + n * RECORD_SIZE} bytes (max {MAX_PACKET_BYTES})"
        )
    if not 0 <= packet.seq < 2**32:
        raise ValueError(f"seq {packet.seq} does not fit in u32")
    if n > 1 and np.any(ev["t"][1:] < ev["t"][:-1]):
        raise NonMonotoneTimestamps("packet timestamps must be non-decreasing")
    if n and ev["p"].max() > 1:
        raise ValueError("polarity must be 0 or 1")
    rec = np.zeros(n, dtype=RECORD_DTYPE)
    rec["t"], rec["x"], rec["y"], rec["p"] = ev["t"], ev["x"], ev["y"], ev["p"]
    return HEADER.pack(MAGIC, packet.seq, n, 0) + rec.tobytes()


def _decode_at(buf, offset: int) -> tuple[EventPacket, int]:
    """Decode the packet starting at ``offset``; return it and the offset past it."""
    avail = len(buf) - offset
    if avail < HEADER_SIZE:
        raise Truncated(f"{avail} bytes left at offset {offset}, header needs {HEADER_SIZE}")
    magic, seq, count, reserved = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise BadMagic(f"bad magic 0x{magic:08x} at offset {offset}")
    if reserved != 0:
        raise PacketError(f"non-zero reserved header field at offset {offset}")
    size = HEADER_SIZE + count * RECORD_SIZE
    if size > MAX_PACKET_BYTES:
        raise PacketTooLarge(f"packet at offset {offset} declares {count} events")
    if avail < size:
        raise Truncated(f"packet at offset {offset} declares {count} events, only {avail} bytes")
    rec = np.frombuffer(buf, dtype=RECORD_DTYPE, count=count, offset=offset + HEADER_SIZE)
    if count:
        if np.any(rec["p"] > 1):
            raise PacketError(f"polarity byte out of range in packet at offset {offset}")
        if np.any(np.frombuffer(rec["pad"].tobytes(), dtype=np.uint8)):
            raise PacketError(f"non-zero record padding in packet at offset {offset}")
        if np.any(rec["t"][1:] < rec["t"][:-1]):
            raise NonMonotoneTimestamps(f"timestamps regress in packet seq={seq}")
    ev = empty_events(count)
    ev["t"], ev["x"], ev["y"], ev["p"] = rec["t"], rec["x"], rec["y"], rec["p"]
    return EventPacket(seq, ev), offset + size


def decode_packet(data: bytes) -> EventPacket:
    packet, end = _decode_at(data, 0)
    if end != len(data):
        raise CountMismatch(f"{len(data) - end} trailing bytes after {len(packet.events)} records")
    return packet


def packetize(events, packet_events: int = MAX_PACKET_EVENTS, first_seq: int = 0) -> list[EventPacket]:
    """Split a stream into consecutive packets of at most ``packet_events`` events."""
    events = as_events(events)
    if not 1 <= packet_events <= MAX_PACKET_EVENTS:
        raise ValueError(f"packet_events must be in [1, {MAX_PACKET_EVENTS}]")
    if len(events) == 0:
        return [EventPacket(first_seq, empty_events())]
    return [
        EventPacket(first_seq + i, events[start : start + packet_events])
        for i, start in enumerate(range(0, len(events), packet_events))
    ]


def iter_packets(data: bytes) -> Iterator[EventPacket]:
    offset = 0
    while offset < len(data):
        packet, offset = _decode_at(data, offset)
        yield packet


HEADER_DTYPE = np.dtype([("magic", "<u4"), ("seq", "<u4"), ("count", "<u4"), ("reserved", "<u4")])


@dataclass
class PacketTable:
    """Many packets at once: per-packet ``seq`` and ``count`` plus all events back to back."""

    seq: np.ndarray  # (P,) u32
    count: np.ndarray  # (P,) int64
    events: np.ndarray  # (sum(count),) EVENT_DTYPE

    def __post_init__(self):
        self.seq = np.asarray(self.seq, dtype=np.int64)
        self.count = np.asarray(self.count, dtype=np.int64)
        self.events = as_events(self.events)
        if self.seq.shape != self.count.shape or int(self.count.sum()) != len(self.events):
            raise ValueError("seq, count and events disagree")

    def __len__(self):
        return len(self.seq)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.count)[:-1]]).astype(np.int64) if len(self.count) else self.count

    def packet(self, i: int) -> EventPacket:
        s = int(self.starts[i])
        return EventPacket(int(self.seq[i]), self.events[s : s + int(self.count[i])])


def _packet_ids(count: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(len(count)), count)


def encode_packets(table: PacketTable) -> bytes:
    """Vectorised :func:`encode_packet` over a whole table, concatenated.

    Headers and records are both 16 bytes, so the output is one array of
    16-byte slots: packet i's header sits at slot ``i + events before i``.
    """
    seq, count, ev = table.seq, table.count, table.events
    if len(count) and count.max() > MAX_PACKET_EVENTS:
        raise PacketTooLarge(f"{int(count.max())} events in one packet (max {MAX_PACKET_EVENTS})")
    if len(seq) and (seq.min() < 0 or seq.max() >= 2**32):
        raise ValueError("seq does not fit in u32")
    pid = _packet_ids(count)
    if len(ev) > 1 and np.any((ev["t"][1:] < ev["t"][:-1]) & (pid[1:] == pid[:-1])):
        raise NonMonotoneTimestamps("packet timestamps must be non-decreasing")
    if len(ev) and ev["p"].max() > 1:
        raise ValueError("polarity must be 0 or 1")
    slots = np.zeros(len(seq) + len(ev), dtype="V16")
    head_slot = np.arange(len(seq)) + table.starts
    is_head = np.zeros(len(slots), dtype=bool)
    is_head[head_slot] = True
    head = np.zeros(len(seq), dtype=HEADER_DTYPE)
    head["magic"], head["seq"], head["count"] = MAGIC, seq, count
    rec = np.zeros(len(ev), dtype=RECORD_DTYPE)
    rec["t"], rec["x"], rec["y"], rec["p"] = ev["t"], ev["x"], ev["y"], ev["p"]
    slots[is_head] = head.view("V16")
    slots[~is_head] = rec.view("V16")
    return slots.tobytes()


def decode_packets(data) -> PacketTable:
    """Vectorised :func:`iter_packets`: same checks, same exceptions, one pass over the headers."""
    buf = memoryview(data).cast("B")
    n_slots = len(buf) // 16
    heads = np.frombuffer(buf, dtype=HEADER_DTYPE, count=n_slots)
    counts_all = heads["count"].tolist()
    magic_ok = heads["magic"] == MAGIC
    head_slots = []
    slot = 0
    while slot * 16 < len(buf):
        offset = slot * 16
        if slot >= n_slots:
            raise Truncated(f"{len(buf) - offset} bytes left at offset {offset}, header needs {HEADER_SIZE}")
        if not magic_ok[slot]:
            raise BadMagic(f"bad magic 0x{int(heads['magic'][slot]):08x} at offset {offset}")
        if heads["reserved"][slot] != 0:
            raise PacketError(f"non-zero reserved header field at offset {offset}")
        count = counts_all[slot]
        if count > MAX_PACKET_EVENTS:
            raise PacketTooLarge(f"packet at offset {offset} declares {count} events")
        if (slot + 1 + count) * 16 > len(buf):
            raise Truncated(f"packet at offset {offset} declares {count} events, only {len(buf) - offset} bytes")
        head_slots.append(slot)
        slot += 1 + count
    head_slots = np.array(head_slots, dtype=np.int64)
    is_head = np.zeros(n_slots, dtype=bool)
    is_head[head_slots] = True
    count = heads["count"][head_slots].astype(np.int64)
    rec = np.frombuffer(buf, dtype=RECORD_DTYPE, count=n_slots)[~is_head]
    if len(rec):
        if np.any(rec["p"] > 1):
            raise PacketError("polarity byte out of range")
        if np.any(np.frombuffer(rec["pad"].tobytes(), dtype=np.uint8)):
            raise PacketError("non-zero record padding")
        pid = _packet_ids(count)
        bad = (rec["t"][1:] < rec["t"][:-1]) & (pid[1:] == pid[:-1])
        if np.any(bad):
            raise NonMonotoneTimestamps(f"timestamps regress in packet seq={int(heads['seq'][head_slots[pid[1:][bad][0]]])}")
    ev = empty_events(len(rec))
    ev["t"], ev["x"], ev["y"], ev["p"] = rec["t"], rec["x"], rec["y"], rec["p"]
    return PacketTable(heads["seq"][head_slots], count, ev)


@dataclass
class StreamData:
    events: np.ndarray
    boundaries: list[int]  # start index of each packet; empty for csv input

    def __len__(self):
        return len(self.events)


Format = Literal["packet_binary", "csv"]


def guess_format(path) -> Format:
    return "csv" if str(path).lower().endswith(".csv") else "packet_binary"


def read_stream(path, format: Format | None = None) -> StreamData:
    """Read an ``.evp`` or ``.csv`` event file.

    Raises ``OSError`` on I/O failure, :class:`ParseError`, :class:`SeqGap`
    or a :class:`PacketError` subclass on malformed content.
    """
    format = format or guess_format(path)
    if format == "csv":
        return StreamData(_read_csv(Path(path)), [])
    if format != "packet_binary":
        raise ValueError(f"unknown format {format!r}")
    data = Path(path).read_bytes()
    try:
        table = decode_packets(data)
    except PacketError as exc:
        raise type(exc)(f"{path}: {exc}") from None
    if len(table) > 1:
        gap = np.nonzero(np.diff(table.seq) != 1)[0]
        if len(gap):
            i = int(gap[0])
            raise SeqGap(f"{path}: packet seq {int(table.seq[i + 1])} follows {int(table.seq[i])}")
    t = table.events["t"]
    if len(t) > 1 and np.any(t[1:] < t[:-1]):
        raise NonMonotoneTimestamps(f"{path}: timestamps regress across packets")
    return StreamData(table.events, table.starts.tolist())


def _read_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t_us", "x", "y", "p"]:
            raise ParseError(f"{path}:1: expected header 't_us,x,y,p', got {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, x, y, p = (int(v) for v in row)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cannot parse {','.join(row)!r}") from None
            if t < 0 or not (0 <= x < 2**16 and 0 <= y < 2**16) or p not in (0, 1):
                raise ParseError(f"{path}:{lineno}: value out of range in {','.join(row)!r}")
            rows.append((t, x, y, p))
    return np.array(rows, dtype=EVENT_DTYPE) if rows else empty_events()


def write_stream(path, events, format: Format | None = None, packet_events: int = MAX_PACKET_EVENTS) -> int:
    """Write events to ``path``; returns the number of bytes written."""
    events = as_events(events)
    format = format or guess_format(path)
    if format == "csv":
        lines = ["t_us,x,y,p"]
        lines += [f"{t},{x},{y},{p}" for t, x, y, p in events.tolist()]
        data = ("\n".join(lines) + "\n").encode()
    elif format == "packet_binary":
        if not 1 <= packet_events <= MAX_PACKET_EVENTS:
            raise ValueError(f"packet_events must be in [1, {MAX_PACKET_EVENTS}]")
        n_packets = max(1, -(-len(events) // packet_events))
        count = np.full(n_packets, packet_events, dtype=np.int64)
        count[-1] = len(events) - packet_events * (n_packets - 1)
        data = encode_packets(PacketTable(np.arange(n_packets), count, events))
    else:
        raise ValueError(f"unknown format {format!r}")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return len(data)


# --------------------------------------------------------------------------
# synthetic streams

Kind = Literal["translating_bar", "moving_blob", "poisson_noise"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic stream.

    ``rate`` drives ``poisson_noise``; moving shapes get their event count
    from geometry and speed, with optional background noise at ``noise_rate``.
    Bars are centred on ``start`` (default: image centre for the blob,
    left edge for the bar) and oriented ``angle_deg`` from vertical.
    """

    kind: Kind
    geometry: SensorGeometry = SensorGeometry()
    velocity: tuple[float, float] = (0.0, 0.0)
    rate: float = 0.0
    duration: float = 1.0
    seed: int = 0
    length: float | None = None  # bar length, default full height
    thickness: float = 1.0
    angle_deg: float = 0.0
    radius: float = 10.0
    start: tuple[float, float] | None = None
    noise_rate: float = 0.0
    burst: int = 1  # events emitted per crossing
    burst_interval_us: int = 200
    jitter_us: float = 0.0
    hot_pixels: tuple[tuple[int, int], ...] = ()
    hot_pixel_rate: float = 10_000.0
    emit_off: bool = True  # moving_blob: OFF event when the trailing edge leaves
    label: str | None = None

    def validate(self):
        if not self.rate >= 0 or not self.noise_rate >= 0 or not self.hot_pixel_rate >= 0:
            raise InvalidSpec("rates must be non-negative")
        if not self.duration > 0:
            raise InvalidSpec(f"duration must be positive, got {self.duration}")
        if self.kind not in ("translating_bar", "moving_blob", "poisson_noise"):
            raise InvalidSpec(f"unknown kind {self.kind!r}")
        if self.burst < 1 or self.burst_interval_us < 0 or self.jitter_us < 0:
            raise InvalidSpec("burst must be >= 1, interval and jitter >= 0")
        if self.thickness <= 0 or self.radius <= 0 or (self.length is not None and self.length <= 0):
            raise InvalidSpec("shape sizes must be positive")
        if self.seed < 0:
            raise InvalidSpec("seed must be unsigned")
        for x, y in self.hot_pixels:
            if not (0 <= x < self.geometry.width and 0 <= y < self.geometry.height):
                raise InvalidSpec(f"hot pixel ({x}, {y}) outside {self.geometry}")


@dataclass
class GroundTruth:
    velocity: np.ndarray  # (n, 2) px/s, NaN for noise events
    is_signal: np.ndarray  # (n,) bool
    label: str | None = None


def _pixel_grid(geometry: SensorGeometry):
    yy, xx = np.mgrid[0 : geometry.height, 0 : geometry.width]
    return xx.ravel().astype(np.float64), yy.ravel().astype(np.float64)


def _slab_interval(q, v, half):
    """Times where ``|q - v t| <= half`` for per-pixel projections ``q``, scalar speed ``v``."""
    if abs(v) < 1e-12:
        inside = np.abs(q) <= half
        lo = np.where(inside, -np.inf, np.inf)
        hi = np.where(inside, np.inf, -np.inf)
        return lo, hi
    a = (q - half) / v
    b = (q + half) / v
    return np.minimum(a, b), np.maximum(a, b)


def _bar_crossings(spec: SyntheticSpec):
    g = spec.geometry
    xs, ys = _pixel_grid(g)
    vx, vy = spec.velocity
    theta = math.radians(spec.angle_deg)
    along = np.array([math.sin(theta), math.cos(theta)])  # bar axis, vertical at 0 deg
    normal = np.array([math.cos(theta), -math.sin(theta)])
    length = spec.length if spec.length is not None else float(g.height)
    cx, cy = spec.start if spec.start is not None else (0.0, (g.height - 1) / 2)
    qx, qy = xs - cx, ys - cy
    lo_a, hi_a = _slab_interval(qx * along[0] + qy * along[1], vx * along[0] + vy * along[1], length / 2)
    lo_n, hi_n = _slab_interval(qx * normal[0] + qy * normal[1], vx * normal[0] + vy * normal[1], spec.thickness / 2)
    entry = np.maximum(lo_a, lo_n)
    leave = np.minimum(hi_a, hi_n)
    hit = (entry <= leave) & (entry > 0) & (entry < spec.duration)
    return xs[hit], ys[hit], entry[hit], np.ones(hit.sum(), dtype=np.uint8)


def _blob_crossings(spec: SyntheticSpec):
    g = spec.geometry
    xs, ys = _pixel_grid(g)
    vx, vy = spec.velocity
    cx, cy = spec.start if spec.start is not None else ((g.width - 1) / 2, (g.height - 1) / 2)
    qx, qy = xs - cx, ys - cy
    vv = vx * vx + vy * vy
    if vv == 0:
        return (np.empty(0),) * 3 + (np.empty(0, dtype=np.uint8),)
    qv = qx * vx + qy * vy
    disc = qv * qv - vv * (qx * qx + qy * qy - spec.radius**2)
    ok = disc > 0
    root = np.sqrt(np.where(ok, disc, 0.0))
    entry = (qv - root) / vv
    leave = (qv + root) / vv
    on = ok & (entry > 0) & (entry < spec.duration)
    parts_x, parts_y, parts_t, parts_p = [xs[on]], [ys[on]], [entry[on]], [np.ones(on.sum(), np.uint8)]
    if spec.emit_off:
        off = ok & (leave > 0) & (leave < spec.duration)
        parts_x.append(xs[off])
        parts_y.append(ys[off])
        parts_t.append(leave[off])
        parts_p.append(np.zeros(off.sum(), np.uint8))
    return (np.concatenate(parts_x), np.concatenate(parts_y), np.concatenate(parts_t), np.concatenate(parts_p))


def _poisson_times(rng: np.random.Generator, rate: float, duration: float) -> np.ndarray:
    """Arrival times (s) of a Poisson process on ``[0, duration)`` via exponential gaps."""
    if rate <= 0:
        return np.empty(0)
    expected = rate * duration
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, size=chunk))
    while times[-1] < duration:
        more = np.cumsum(rng.exponential(1.0 / rate, size=chunk)) + times[-1]
        times = np.concatenate([times, more])
    return times[times < duration]


def synthesize(spec: SyntheticSpec) -> tuple[np.ndarray, GroundTruth]:
    """Generate a time-ordered stream and its ground truth. Deterministic in ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    g = spec.geometry
    if spec.kind == "translating_bar":
        sx, sy, st, sp = _bar_crossings(spec)
    elif spec.kind == "moving_blob":
        sx, sy, st, sp = _blob_crossings(spec)
    else:
        sx = sy = st = np.empty(0)
        sp = np.empty(0, dtype=np.uint8)
    # shape events in integer microseconds, optionally repeated as bursts
    t_us = np.round(st * US_PER_S)
    if spec.jitter_us > 0 and len(t_us):
        t_us = np.maximum(np.round(t_us + rng.normal(0.0, spec.jitter_us, len(t_us))), 0)
    if spec.burst > 1 and len(t_us):
        reps = np.arange(spec.burst) * spec.burst_interval_us
        t_us = (t_us[:, None] + reps[None, :]).ravel()
        sx, sy, sp = (np.repeat(a, spec.burst) for a in (sx, sy, sp))
    n_sig = len(t_us)

    noise_rate = spec.rate if spec.kind == "poisson_noise" else spec.noise_rate
    nt = _poisson_times(rng, noise_rate, spec.duration)
    nx = rng.integers(0, g.width, len(nt))
    ny = rng.integers(0, g.height, len(nt))
    npol = rng.integers(0, 2, len(nt)).astype(np.uint8)

    hx, hy, ht = [], [], []
    for x, y in spec.hot_pixels:
        times = _poisson_times(rng, spec.hot_pixel_rate, spec.duration)
        hx.append(np.full(len(times), x))
        hy.append(np.full(len(times), y))
        ht.append(times)

    t_all = np.concatenate([t_us, np.floor(nt * US_PER_S)] + [np.floor(h * US_PER_S) for h in ht])
    x_all = np.concatenate([sx, nx] + hx)
    y_all = np.concatenate([sy, ny] + hy)
    p_all = np.concatenate([sp, npol] + [np.ones(len(h), np.uint8) for h in ht])
    keep = (t_all < spec.duration * US_PER_S) & (t_all >= 0)

    signal = np.zeros(len(t_all), dtype=bool)
    signal[:n_sig] = True
    vel = np.full((len(t_all), 2), np.nan)
    vel[:n_sig] = spec.velocity

    t_all, x_all, y_all, p_all, signal, vel = (a[keep] for a in (t_all, x_all, y_all, p_all, signal, vel))
    order = np.lexsort((x_all, y_all, t_all))
    events = empty_events(len(order))
    events["t"] = t_all[order].astype(np.uint64)
    events["x"] = x_all[order].astype(np.uint16)
    events["y"] = y_all[order].astype(np.uint16)
    events["p"] = p_all[order]
    return events, GroundTruth(vel[order], signal[order], spec.label)


GESTURE_DIRECTIONS = {
    "right": (1.0, 0.0),
    "left": (-1.0, 0.0),
    "down": (0.0, 1.0),
    "up": (0.0, -1.0),
}


def synthesize_gesture(
    direction: str,
    geometry: SensorGeometry = SensorGeometry(),
    seed: int = 0,
    duration: float = 0.6,
    noise_rate: float = 2_000.0,
    burst: int = 2,
    hot_pixels: tuple[tuple[int, int], ...] = (),
) -> tuple[np.ndarray, GroundTruth]:
    """A hand-like blob sweeping across the view in one of the four directions.

    Speed, radius, start point and a small off-axis drift are drawn from
    ``seed`` so that every sample of a class looks a little different.
    """
    try:
        ux, uy = GESTURE_DIRECTIONS[direction]
    except KeyError:
        raise InvalidSpec(f"unknown gesture direction {direction!r}") from None
    rng = np.random.default_rng(seed)
    speed = rng.uniform(150.0, 300.0)
    radius = rng.uniform(9.0, 14.0)
    drift = rng.uniform(-0.15, 0.15) * speed
    vx, vy = ux * speed - uy * drift, uy * speed + ux * drift
    cx, cy = (geometry.width - 1) / 2, (geometry.height - 1) / 2
    # start so the blob is centred half way through the gesture
    start = (
        cx - vx * duration / 2 + rng.uniform(-0.1, 0.1) * geometry.width,
        cy - vy * duration / 2 + rng.uniform(-0.1, 0.1) * geometry.height,
    )
    spec = SyntheticSpec(
        kind="moving_blob",
        geometry=geometry,
        velocity=(vx, vy),
        duration=duration,
        seed=int(rng.integers(0, 2**32)),
        radius=radius,
        start=start,
        noise_rate=noise_rate,
        burst=burst,
        burst_interval_us=int(rng.integers(100, 400)),
        jitter_us=50.0,
        hot_pixels=hot_pixels,
        label=direction,
    )
    return synthesize(spec)


def synthesize_gesture_set(
    n_per_class: int,
    seed: int = 0,
    geometry: SensorGeometry = SensorGeometry(),
    directions=tuple(GESTURE_DIRECTIONS),
    **kwargs,
) -> list[tuple[np.ndarray, str]]:
    """``n_per_class`` labelled gesture streams per direction, interleaved by class."""
    root = np.random.SeedSequence(seed)
    seeds = root.generate_state(n_per_class * len(directions))
    out = []
    for i in range(n_per_class):
        for j, d in enumerate(directions):
            ev, _ = synthesize_gesture(d, geometry, seed=int(seeds[i * len(directions) + j]), **kwargs)
            out.append((ev, d))
    return out
