"""Staged event pipeline: source -> decode/filter (+ live view) -> buffer gate -> processor.

Stages are connected by bounded queues; a full queue blocks its producer,
nothing is ever dropped.  ``single_thread=True`` runs the same stage code
round-robin in the calling thread, which makes runs fully deterministic.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Literal

import numpy as np

from .core import EVENT_DTYPE, EvpipeError, SensorGeometry, as_events, empty_events
from .filtering import FilterChain, FilterConfig, FilterStats
from .ingest import MAX_PACKET_EVENTS, EventPacket, StreamData, decode_packet, packetize

log = logging.getLogger(__name__)

DEFAULT_QUEUE_BATCHES = 64


class ProcessorFailure(EvpipeError, RuntimeError):
    def __init__(self, batch_index: int, cause: BaseException):
        super().__init__(f"processor failed on batch {batch_index}: {cause!r}")
        self.batch_index = batch_index
        self.cause = cause


class EventBuffer:
    """Count-gated accumulator: hands out a batch exactly when it holds ``capacity`` events."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = int(capacity)
        self._data = empty_events(self.capacity)
        self._n = 0

    def __len__(self):
        return self._n

    @property
    def contents(self) -> np.ndarray:
        return self._data[: self._n].copy()

    def push(self, event) -> np.ndarray | None:
        self._data[self._n] = tuple(event)
        self._n += 1
        if self._n == self.capacity:
            batch = self._data.copy()
            self._n = 0
            return batch
        return None

    def extend(self, events: np.ndarray) -> list[np.ndarray]:
        """Push many events at once; returns the full batches in order."""
        batches = []
        i = 0
        n = len(events)
        while i < n:
            take = min(self.capacity - self._n, n - i)
            self._data[self._n : self._n + take] = events[i : i + take]
            self._n += take
            i += take
            if self._n == self.capacity:
                batches.append(self._data.copy())
                self._n = 0
        return batches

    def flush(self) -> np.ndarray | None:
        if self._n == 0:
            return None
        batch = self._data[: self._n].copy()
        self._n = 0
        return batch


def buffer_push(buffer: EventBuffer, event) -> np.ndarray | None:
    return buffer.push(event)


def flush(buffer: EventBuffer) -> np.ndarray | None:
    return buffer.flush()


class LiveView:
    """Binary bitmap of recent activity, updated by the filter stage.

    A pixel is set in a snapshot iff it fired within ``decay_window_us``
    before the snapshot time.  Updates and snapshots share a lock, so a
    snapshot never observes a half-applied packet.
    """

    def __init__(self, geometry: SensorGeometry, decay_window_us: int = 30_000, frame_rate_hz: float = 60.0):
        self.geometry = geometry
        self.decay_window_us = int(decay_window_us)
        self.frame_rate_hz = frame_rate_hz
        self._last = np.full(geometry.shape, -1, dtype=np.int64)
        self._lock = threading.Lock()
        self.last_time = -1

    def update(self, events) -> None:
        if len(events) == 0:
            return
        ys = events["y"].astype(np.intp)
        xs = events["x"].astype(np.intp)
        ts = events["t"].astype(np.int64)
        with self._lock:
            np.maximum.at(self._last, (ys, xs), ts)
            self.last_time = max(self.last_time, int(ts[-1]))

    def snapshot(self, now_us: int) -> np.ndarray:
        with self._lock:
            last = self._last.copy()
        return (last >= 0) & (now_us - last <= self.decay_window_us) & (last <= now_us)

    def snapshot_times(self, t_start: int, t_end: int) -> np.ndarray:
        """Display tick times in ``[t_start, t_end]`` at ``frame_rate_hz``."""
        step = 1e6 / self.frame_rate_hz
        return np.arange(t_start, t_end + 1, step).astype(np.int64)


def liveview_snapshot(liveview: LiveView, now_us: int) -> np.ndarray:
    return liveview.snapshot(now_us)


def write_pgm(path, frame: np.ndarray) -> None:
    """Write a binary (bool) or [0, 1] float frame as P5 PGM, maxval 255, half-up rounding."""
    if frame.dtype == bool:
        data = np.where(frame, 255, 0).astype(np.uint8)
    else:
        data = np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a P5 PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


@dataclass
class PipelineRun:
    batches_emitted: int = 0
    events_in: int = 0
    events_filtered: int = 0
    residual: int = 0
    packets: int = 0
    partial_delivered: bool = False
    partial_discarded: int = 0  # warning counter
    results: list = field(default_factory=list)
    batch_end_times: list = field(default_factory=list)  # stream time (us) when each batch filled
    process_times: list = field(default_factory=list)  # seconds per processor call
    stage_times: dict = field(
        default_factory=lambda: {"source": 0.0, "decode": 0.0, "filter": 0.0, "liveview": 0.0, "process": 0.0}
    )
    filter_stats: FilterStats = field(default_factory=FilterStats)


ReplayMode = Literal["as_fast_as_possible", "timestamp_paced"]

_DONE = object()


def _as_packets(source) -> Iterable:
    """Normalise a source into an iterable of packets (bytes, EventPacket or event arrays)."""
    if isinstance(source, StreamData):
        if source.boundaries:
            edges = list(source.boundaries) + [len(source.events)]
            return [source.events[a:b] for a, b in zip(edges[:-1], edges[1:])]
        source = source.events
    if isinstance(source, np.ndarray):
        return [p.events for p in packetize(source, MAX_PACKET_EVENTS)]
    return source


class _Transformer:
    """Decode/filter stage state: filter chain, live view and buffer gate."""

    def __init__(self, filter_config, geometry, N, liveview, run):
        self.chain = FilterChain(filter_config, geometry) if filter_config is not None else None
        self.liveview = liveview
        self.buffer = EventBuffer(N)
        self.run = run

    def __call__(self, item) -> list[np.ndarray]:
        st = self.run.stage_times
        t0 = time.perf_counter()
        if isinstance(item, (bytes, bytearray, memoryview)):
            events = decode_packet(bytes(item)).events
        elif isinstance(item, EventPacket):
            events = item.events
        else:
            events = as_events(item)
        t1 = time.perf_counter()
        st["decode"] += t1 - t0
        self.run.packets += 1
        self.run.events_in += len(events)
        if self.chain is not None:
            events = self.chain.process(events)
        t2 = time.perf_counter()
        st["filter"] += t2 - t1
        self.run.events_filtered += len(events)
        if self.liveview is not None:
            self.liveview.update(events)
        st["liveview"] += time.perf_counter() - t2
        return self.buffer.extend(events)


class _Consumer:
    def __init__(self, processor, run):
        self.processor = processor
        self.run = run

    def __call__(self, batch) -> None:
        index = len(self.run.results)
        t0 = time.perf_counter()
        try:
            result = self.processor(batch)
        except Exception as exc:
            raise ProcessorFailure(index, exc) from exc
        dt = time.perf_counter() - t0
        self.run.process_times.append(dt)
        self.run.stage_times["process"] += dt
        self.run.results.append(result)


def _pace(t_us: int, t0_us: int, wall0: float, speed: float) -> None:
    target = wall0 + (t_us - t0_us) / 1e6 / speed
    delay = target - time.perf_counter()
    if delay > 0:
        time.sleep(delay)


def run_pipeline(
    source,
    filter_config: FilterConfig | None,
    N: int,
    processor: Callable[[np.ndarray], Any],
    replay_mode: ReplayMode = "as_fast_as_possible",
    *,
    geometry: SensorGeometry = SensorGeometry(),
    liveview: LiveView | None = None,
    speed: float = 1.0,
    single_thread: bool = False,
    queue_batches: int = DEFAULT_QUEUE_BATCHES,
) -> PipelineRun:
    """Stream ``source`` through filtering and the buffer gate into ``processor``.

    ``source`` is an event array, :class:`StreamData`, or any iterable of
    packets (encoded bytes, :class:`EventPacket` or event arrays).  The
    processor is called once per full batch of ``N`` events; a trailing
    partial batch is handed over only if ``processor.accepts_partial`` is
    true, otherwise it is counted in ``partial_discarded``.
    """
    if replay_mode not in ("as_fast_as_possible", "timestamp_paced"):
        raise ValueError(f"unknown replay mode {replay_mode!r}")
    if speed <= 0:
        raise ValueError("speed must be positive")
    run = PipelineRun()
    packets = _as_packets(source)
    transform = _Transformer(filter_config, geometry, N, liveview, run)
    consume = _Consumer(processor, run)
    paced = replay_mode == "timestamp_paced"

    def source_items():
        t0_us = None
        wall0 = time.perf_counter()
        it = iter(packets)
        while True:
            s0 = time.perf_counter()
            try:
                item = next(it)
            except StopIteration:
                return
            run.stage_times["source"] += time.perf_counter() - s0
            if paced:
                first_t = _first_time(item)
                if first_t is not None:
                    if t0_us is None:
                        t0_us = first_t
                    _pace(first_t, t0_us, wall0, speed)
            yield item

    if single_thread:
        for item in source_items():
            for batch in transform(item):
                run.batch_end_times.append(int(batch["t"][-1]))
                consume(batch)
    else:
        _run_threaded(source_items, transform, consume, run, queue_batches)

    residual = transform.buffer.flush()
    run.batches_emitted = len(run.batch_end_times)
    run.residual = 0 if residual is None else len(residual)
    if residual is not None:
        if getattr(processor, "accepts_partial", False):
            consume(residual)
            run.partial_delivered = True
        else:
            run.partial_discarded += 1
            log.warning("discarded partial batch of %d events", len(residual))
    if transform.chain is not None:
        run.filter_stats = transform.chain.stats
    return run


def _first_time(item) -> int | None:
    if isinstance(item, (bytes, bytearray, memoryview)):
        ev = decode_packet(bytes(item)).events
    elif isinstance(item, EventPacket):
        ev = item.events
    else:
        ev = item
    return int(ev["t"][0]) if len(ev) else None


def _run_threaded(source_items, transform, consume, run, queue_batches):
    packet_q: queue.Queue = queue.Queue(maxsize=queue_batches)
    batch_q: queue.Queue = queue.Queue(maxsize=queue_batches)
    stop = threading.Event()
    errors: list[BaseException] = []

    def put(q, item):
        while not stop.is_set():
            try:
                q.put(item, timeout=0.05)
                return True
            except queue.Full:
                continue
        return False

    def get(q):
        while not stop.is_set():
            try:
                return q.get(timeout=0.05)
            except queue.Empty:
                continue
        return _DONE

    def producer():
        try:
            for item in source_items():
                if not put(packet_q, item):
                    return
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)
            stop.set()
        finally:
            put(packet_q, _DONE)

    def transformer():
        try:
            while True:
                item = get(packet_q)
                if item is _DONE:
                    break
                for batch in transform(item):
                    run.batch_end_times.append(int(batch["t"][-1]))
                    if not put(batch_q, batch):
                        return
        except BaseException as exc:
            errors.append(exc)
            stop.set()
        finally:
            put(batch_q, _DONE)

    threads = [threading.Thread(target=producer, daemon=True), threading.Thread(target=transformer, daemon=True)]
    for th in threads:
        th.start()
    try:
        while True:
            batch = get(batch_q)
            if batch is _DONE:
                break
            consume(batch)
    except BaseException:
        stop.set()
        raise
    finally:
        for th in threads:
            th.join(timeout=5)
    if errors:
        raise errors[0]
