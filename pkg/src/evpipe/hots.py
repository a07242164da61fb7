"""Time-surface features, prototype learning, histogram signatures and kNN gestures.

A time surface around an event holds, for every neighbour pixel and both
polarities, ``max(0, 1 - (t - t_last) / tau)``.  Surfaces are matched to the
nearest learned prototype; the prototype activation counts over a gesture
window form its signature, which is classified by k nearest neighbours.
"""

from __future__ import annotations

import csv
import struct
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .core import EvpipeError, Event, SensorGeometry, as_events, stream_geometry
from .filtering import FilterChain, FilterConfig

NEVER = np.iinfo(np.int64).min // 4

BANK_MAGIC = b"HOTS"
BANK_HEADER = struct.Struct("<4sIIQ")  # magic, K, rho, tau (us)


class InsufficientData(EvpipeError, ValueError):
    pass


class EmptyWindow(EvpipeError, ValueError):
    pass


class NotEnoughTrainingData(EvpipeError, ValueError):
    pass


@dataclass(frozen=True)
class HotsConfig:
    rho: int = 4
    tau: int = 20_000  # us
    K: int = 32
    k_nn: int = 3
    alpha0: float = 1.0  # prototype j moves with rate alpha0 / (1 + n_j)
    train_subsample: float = 1.0  # fraction of training surfaces used, drawn from the seed
    window_us: int = 2_000_000

    def __post_init__(self):
        if self.rho < 1 or self.tau <= 0 or self.K < 2 or self.k_nn < 1 or self.k_nn % 2 == 0:
            raise ValueError("need rho >= 1, tau > 0, K >= 2 and odd k_nn")
        if not 0 < self.train_subsample <= 1 or not self.alpha0 > 0:
            raise ValueError("train_subsample must be in (0, 1] and alpha0 > 0")

    @property
    def side(self) -> int:
        return 2 * self.rho + 1

    @property
    def dim(self) -> int:
        return self.side * self.side * 2


class TimeSurfaceState:
    """Most recent timestamp per (polarity, pixel) for one stream."""

    def __init__(self, geometry: SensorGeometry):
        self.geometry = geometry
        self.last_t = np.full((2, geometry.height, geometry.width), NEVER, dtype=np.int64)

    def update(self, event: Event) -> None:
        self.last_t[event.polarity, event.y, event.x] = event.t


@dataclass
class TimeSurface:
    values: np.ndarray  # (2*rho+1, 2*rho+1, 2), [row, col, polarity]
    center: tuple[int, int]
    t_ref: int


@numba.njit(cache=True)
def _surface(last_t, x, y, t, rho, tau, out):
    """Fill ``out`` (flat, row-major over (row, col, polarity)) with the surface at (x, y, t)."""
    _, h, w = last_t.shape
    k = 0
    for dy in range(-rho, rho + 1):
        yy = y + dy
        for dx in range(-rho, rho + 1):
            xx = x + dx
            for pol in range(2):
                v = 0.0
                if 0 <= yy < h and 0 <= xx < w:
                    tl = last_t[pol, yy, xx]
                    if tl != NEVER:
                        v = 1.0 - (t - tl) / tau
                        if v < 0.0:
                            v = 0.0
                out[k] = v
                k += 1


@numba.njit(cache=True)
def _nearest(surface, protos):
    best = 0
    best_d = np.inf
    for j in range(protos.shape[0]):
        d = 0.0
        for c in range(surface.shape[0]):
            diff = surface[c] - protos[j, c]
            d += diff * diff
        if d < best_d:
            best_d = d
            best = j
    return best, best_d


@numba.njit(cache=True)
def _match_kernel(t, x, y, p, last_t, rho, tau, protos, out_idx):
    surface = np.empty(protos.shape[1])
    for i in range(t.shape[0]):
        last_t[p[i], y[i], x[i]] = t[i]
        _surface(last_t, x[i], y[i], t[i], rho, tau, surface)
        out_idx[i] = _nearest(surface, protos)[0]


@numba.njit(cache=True)
def _surfaces_kernel(t, x, y, p, last_t, rho, tau, dim):
    out = np.empty((t.shape[0], dim))
    for i in range(t.shape[0]):
        last_t[p[i], y[i], x[i]] = t[i]
        _surface(last_t, x[i], y[i], t[i], rho, tau, out[i])
    return out


@numba.njit(cache=True)
def _learn_kernel(t, x, y, p, use, last_t, rho, tau, protos, counts, n_init, alpha0):
    """Online clustering over one stream; returns the updated number of initialised prototypes."""
    k_total = protos.shape[0]
    surface = np.empty(protos.shape[1])
    for i in range(t.shape[0]):
        last_t[p[i], y[i], x[i]] = t[i]
        if not use[i]:
            continue
        _surface(last_t, x[i], y[i], t[i], rho, tau, surface)
        if n_init < k_total:
            distinct = True
            for j in range(n_init):
                same = True
                for c in range(surface.shape[0]):
                    if protos[j, c] != surface[c]:
                        same = False
                        break
                if same:
                    distinct = False
                    break
            if distinct:
                protos[n_init, :] = surface
                counts[n_init] = 1
                n_init += 1
                continue
        j, _ = _nearest(surface, protos[:n_init])
        alpha = alpha0 / (1.0 + counts[j])
        for c in range(surface.shape[0]):
            protos[j, c] += alpha * (surface[c] - protos[j, c])
        counts[j] += 1
    return n_init


def _cols(events):
    return (
        events["t"].astype(np.int64),
        events["x"].astype(np.int64),
        events["y"].astype(np.int64),
        events["p"].astype(np.int64),
    )


def time_surface(state: TimeSurfaceState, event: Event, rho: int, tau: float) -> TimeSurface:
    """Apply ``event`` to ``state`` and read the surface around it (own cell = 1)."""
    state.update(event)
    out = np.empty((2 * rho + 1) ** 2 * 2)
    _surface(state.last_t, event.x, event.y, event.t, rho, float(tau), out)
    return TimeSurface(out.reshape(2 * rho + 1, 2 * rho + 1, 2), (event.x, event.y), event.t)


def time_surfaces(events, geometry: SensorGeometry, rho: int, tau: float, state: TimeSurfaceState | None = None):
    """Flattened surfaces for every event of a stream, shape ``(n, (2*rho+1)**2 * 2)``."""
    events = as_events(events)
    state = state or TimeSurfaceState(geometry)
    return _surfaces_kernel(*_cols(events), state.last_t, rho, float(tau), (2 * rho + 1) ** 2 * 2)


@dataclass
class PrototypeBank:
    prototypes: np.ndarray  # (K, (2*rho+1)**2 * 2)
    rho: int
    tau: int
    activation_counts: np.ndarray = None

    def __post_init__(self):
        self.prototypes = np.ascontiguousarray(self.prototypes, dtype=np.float64)
        K, dim = self.prototypes.shape
        if K < 1 or dim != (2 * self.rho + 1) ** 2 * 2:
            raise ValueError(f"prototype shape {self.prototypes.shape} does not match rho={self.rho}")
        if not np.all(np.isfinite(self.prototypes)):
            raise ValueError("prototypes must be finite")
        if self.activation_counts is None:
            self.activation_counts = np.zeros(K, dtype=np.int64)

    @property
    def K(self) -> int:
        return self.prototypes.shape[0]

    def save(self, path) -> None:
        header = BANK_HEADER.pack(BANK_MAGIC, self.K, self.rho, int(self.tau))
        Path(path).write_bytes(header + self.prototypes.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PrototypeBank":
        data = Path(path).read_bytes()
        if len(data) < BANK_HEADER.size:
            raise ValueError(f"{path}: truncated bank header")
        magic, K, rho, tau = BANK_HEADER.unpack_from(data)
        if magic != BANK_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        dim = (2 * rho + 1) ** 2 * 2
        expected = BANK_HEADER.size + K * dim * 8
        if len(data) != expected:
            raise ValueError(f"{path}: {len(data)} bytes, expected {expected}")
        protos = np.frombuffer(data, dtype="<f8", offset=BANK_HEADER.size).reshape(K, dim)
        return cls(protos.copy(), rho, tau)


def learn_prototypes(
    training_streams: Sequence,
    config: HotsConfig = HotsConfig(),
    seed: int = 0,
    geometry: SensorGeometry | None = None,
) -> PrototypeBank:
    """Online clustering of the surfaces of every training stream, in order.

    Prototypes start as the first K distinct surfaces; afterwards the nearest
    prototype j moves toward each surface with rate ``alpha0 / (1 + n_j)``.
    Time-surface state is reset between streams.
    """
    rng = np.random.default_rng(seed)
    protos = np.zeros((config.K, config.dim))
    counts = np.zeros(config.K, dtype=np.int64)
    n_init = 0
    for stream in training_streams:
        events = as_events(stream)
        if len(events) == 0:
            continue
        geo = stream_geometry(events, geometry)
        state = TimeSurfaceState(geo)
        if config.train_subsample < 1.0:
            use = rng.random(len(events)) < config.train_subsample
        else:
            use = np.ones(len(events), dtype=np.bool_)
        n_init = _learn_kernel(
            *_cols(events), use, state.last_t, config.rho, float(config.tau), protos, counts, n_init, config.alpha0
        )
    if n_init < config.K:
        raise InsufficientData(f"only {n_init} distinct surfaces for K={config.K} prototypes")
    return PrototypeBank(protos, config.rho, config.tau)


def match_prototype(surface, bank: PrototypeBank) -> tuple[int, float]:
    """Nearest prototype (Euclidean, ties to the lowest index); bumps its activation count."""
    values = surface.values if isinstance(surface, TimeSurface) else surface
    flat = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if flat.shape[0] != bank.prototypes.shape[1]:
        raise ValueError("surface shape does not match bank")
    j, d2 = _nearest(flat, bank.prototypes)
    bank.activation_counts[j] += 1
    return int(j), float(np.sqrt(d2))


@dataclass
class GestureSignature:
    histogram: np.ndarray  # K raw counts
    batch_times: list = field(default_factory=list)  # seconds per processed batch

    @property
    def total(self) -> int:
        return int(self.histogram.sum())

    @property
    def normalized(self) -> np.ndarray:
        total = self.histogram.sum()
        if total == 0:
            return np.zeros(len(self.histogram))
        return self.histogram / total


class HotsFeatures:
    """Stateful surface -> prototype matcher accumulating a histogram, batch by batch."""

    accepts_partial = True

    def __init__(self, bank: PrototypeBank, geometry: SensorGeometry):
        self.bank = bank
        self.state = TimeSurfaceState(geometry)
        self.histogram = np.zeros(bank.K, dtype=np.int64)
        self.batch_times: list[float] = []

    def __call__(self, batch) -> np.ndarray:
        batch = as_events(batch)
        t0 = time.perf_counter()
        idx = np.empty(len(batch), dtype=np.int64)
        if len(batch):
            _match_kernel(*_cols(batch), self.state.last_t, self.bank.rho, float(self.bank.tau), self.bank.prototypes, idx)
            counts = np.bincount(idx, minlength=self.bank.K)
            self.histogram += counts
            self.bank.activation_counts += counts
        self.batch_times.append(time.perf_counter() - t0)
        return idx

    def signature(self) -> GestureSignature:
        return GestureSignature(self.histogram.copy(), list(self.batch_times))


def signature(
    events,
    bank: PrototypeBank,
    config: HotsConfig = HotsConfig(),
    filter_config: FilterConfig | None = None,
    geometry: SensorGeometry | None = None,
    batch_size: int | None = None,
) -> GestureSignature:
    """Histogram of prototype activations over the first ``window_us`` of ``events``."""
    events = as_events(events)
    if len(events):
        t0 = int(events["t"][0])
        events = events[events["t"].astype(np.int64) < t0 + config.window_us]
    geometry = stream_geometry(events, geometry)
    if filter_config is not None:
        events = FilterChain(filter_config, geometry).process(events)
    if len(events) == 0:
        raise EmptyWindow("no events left in the gesture window")
    feats = HotsFeatures(bank, geometry)
    step = batch_size or len(events)
    for i in range(0, len(events), step):
        feats(events[i : i + step])
    return feats.signature()


def _normalize(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    s = h.sum()
    return h / s if s > 0 else np.zeros_like(h)


@dataclass
class KnnResult:
    label: str
    neighbor_labels: list[str]
    neighbor_distances: list[float]
    class_distances: dict[str, float]  # nearest training signature per class


def knn_classify(sig, training: Sequence[tuple], k_nn: int = 3) -> KnnResult:
    """Majority vote of the k nearest training signatures (Euclidean on normalized histograms).

    A vote tie goes to whichever tied class owns the single nearest neighbour.
    """
    if len(training) < k_nn:
        raise NotEnoughTrainingData(f"{len(training)} training signatures for k={k_nn}")
    query = _normalize(sig.histogram if isinstance(sig, GestureSignature) else sig)
    labels = [lab for _, lab in training]
    mat = np.array([_normalize(s.histogram if isinstance(s, GestureSignature) else s) for s, _ in training])
    dist = np.sqrt(((mat - query) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")[:k_nn]
    votes = Counter(labels[i] for i in order)
    top = max(votes.values())
    tied = {lab for lab, v in votes.items() if v == top}
    label = next(labels[i] for i in order if labels[i] in tied)
    class_d: dict[str, float] = {}
    for d, lab in zip(dist, labels):
        class_d[lab] = min(class_d.get(lab, np.inf), float(d))
    return KnnResult(label, [labels[i] for i in order], [float(dist[i]) for i in order], class_d)


def write_signatures_csv(path, rows: Sequence[tuple]) -> None:
    """Rows of ``(signature_or_histogram, label)`` as ``label,h0,...,h{K-1}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        K = len(np.asarray(rows[0][0].histogram if isinstance(rows[0][0], GestureSignature) else rows[0][0]))
        w.writerow(["label"] + [f"h{j}" for j in range(K)])
        for s, lab in rows:
            h = s.histogram if isinstance(s, GestureSignature) else s
            w.writerow([lab] + [int(v) for v in h])


def read_signatures_csv(path) -> list[tuple[GestureSignature, str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [(GestureSignature(np.array([int(v) for v in row[1:]], dtype=np.int64)), row[0]) for row in r if row]


# --------------------------------------------------------------------------
# end-to-end helpers


@dataclass
class GestureModel:
    bank: PrototypeBank
    training: list  # (GestureSignature, label)
    config: HotsConfig
    filter_config: FilterConfig | None = None

    def classify(self, events, geometry: SensorGeometry | None = None) -> KnnResult:
        sig = signature(events, self.bank, self.config, self.filter_config, geometry)
        return knn_classify(sig, self.training, self.config.k_nn)


def train_gesture_model(
    labelled: Sequence[tuple],
    config: HotsConfig = HotsConfig(),
    filter_config: FilterConfig | None = None,
    seed: int = 0,
    geometry: SensorGeometry | None = None,
) -> GestureModel:
    """Learn prototypes on the (filtered) training streams, then their signatures."""
    streams = []
    for ev, _ in labelled:
        ev = as_events(ev)
        if filter_config is not None:
            ev = FilterChain(filter_config, stream_geometry(ev, geometry)).process(ev)
        streams.append(ev)
    bank = learn_prototypes(streams, config, seed, geometry)
    training = [(signature(ev, bank, config, None, geometry), lab) for ev, (_, lab) in zip(streams, labelled)]
    bank.activation_counts[:] = 0
    return GestureModel(bank, training, config, filter_config)


def evaluate_accuracy(model: GestureModel, test: Sequence[tuple], geometry: SensorGeometry | None = None) -> float:
    hits = sum(model.classify(ev, geometry).label == lab for ev, lab in test)
    return hits / len(test)


@dataclass
class FilterLevelResult:
    level: int
    refractory_us: int
    st_window_us: int
    kept_fraction: float
    accuracy: float


def accuracy_vs_filtering(
    dataset: tuple[Sequence, Sequence],
    filter_levels: Sequence[FilterConfig | None],
    config: HotsConfig = HotsConfig(),
    seed: int = 0,
    geometry: SensorGeometry | None = None,
) -> list[FilterLevelResult]:
    """Kept-event fraction and test accuracy for each filter level (``None`` = unfiltered)."""
    train, test = dataset
    total = sum(len(ev) for ev, _ in train) + sum(len(ev) for ev, _ in test)
    rows = []
    for i, fc in enumerate(filter_levels):
        kept = 0
        filtered = []
        for ev, lab in list(train) + list(test):
            ev = as_events(ev)
            if fc is not None:
                ev = FilterChain(fc, stream_geometry(ev, geometry)).process(ev)
            kept += len(ev)
            filtered.append((ev, lab))
        ftrain, ftest = filtered[: len(train)], filtered[len(train) :]
        model = train_gesture_model(ftrain, config, None, seed, geometry)
        acc = evaluate_accuracy(model, ftest, geometry)
        rows.append(
            FilterLevelResult(
                i,
                fc.refractory_us if fc else 0,
                fc.st_window_us if fc and fc.spatiotemporal_enabled else 0,
                kept / total if total else 1.0,
                acc,
            )
        )
    return rows
