"""Accumulated-latency-per-second model and the buffer-size sweep harness.

All ``l_*`` values are dimensionless: seconds of latency accumulated per
second of input.  A total at or below 1 means the configuration keeps up in
real time.

    l_cam    = R * lam_cam
    l_buffer = N / R                (``buffer_model="paper"``)
    l_exec   = (R / N) * lam_exec(N)
"""

from __future__ import annotations

import bisect
import functools
import csv
import io
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Literal, Protocol, Sequence

import numpy as np

from .core import EvpipeError, as_events

BufferModel = Literal["paper", "mean-wait"]


class ZeroRate(EvpipeError, ValueError):
    pass


class OutOfProfileRange(EvpipeError, ValueError):
    pass


class StreamTooShort(EvpipeError, ValueError):
    pass


def _check_nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise ValueError(f"{k} must be non-negative, got {v}")


def l_cam(R: float, lam_cam: float) -> float:
    _check_nonneg(R=R, lam_cam=lam_cam)
    return R * lam_cam


def l_buffer(R: float, N: float, buffer_model: BufferModel = "paper") -> float:
    """Buffering term.

    ``"paper"`` is N times the per-event wait 1/R.  ``"mean-wait"`` charges
    each of the R events per second its mean wait N/(2R), i.e. N/2.
    """
    if not R > 0:
        raise ZeroRate(f"buffer latency needs R > 0, got {R}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if buffer_model == "paper":
        return N * (1.0 / R)
    if buffer_model == "mean-wait":
        return N / 2.0
    raise ValueError(f"unknown buffer model {buffer_model!r}")


def l_exec(R: float, N: float, lam_exec: float) -> float:
    _check_nonneg(R=R, lam_exec=lam_exec)
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return (R / N) * lam_exec


@dataclass(frozen=True)
class CameraCost:
    """Per-packet camera-side costs in seconds; ``lam_cam`` is the per-event share."""

    t_transfer: float
    t_decode: float
    t_filter: float
    n_packet: int

    def __post_init__(self):
        _check_nonneg(t_transfer=self.t_transfer, t_decode=self.t_decode, t_filter=self.t_filter)
        if self.n_packet < 1:
            raise ValueError("n_packet must be >= 1")

    @property
    def lam_cam(self) -> float:
        return (self.t_transfer + self.t_decode + self.t_filter) / self.n_packet

    @classmethod
    def from_lambda(cls, lam_cam: float) -> "CameraCost":
        return cls(0.0, lam_cam, 0.0, 1)

    @classmethod
    def from_run(cls, run) -> "CameraCost":
        """Calibrate from a :class:`~evpipe.pipeline.PipelineRun`'s measured stage times."""
        packets = max(run.packets, 1)
        n_packet = max(round(run.events_in / packets), 1)
        st = run.stage_times
        return cls(
            st["source"] / packets,
            st["decode"] / packets,
            (st["filter"] + st["liveview"]) / packets,
            n_packet,
        )


@dataclass(frozen=True)
class ExecProfile:
    """Measured per-batch execution time (s) as a function of buffer size N."""

    samples: tuple[tuple[int, float], ...]

    def __post_init__(self):
        s = tuple(sorted((int(n), float(lam)) for n, lam in self.samples))
        if not s:
            raise ValueError("profile needs at least one sample")
        ns = [n for n, _ in s]
        if len(set(ns)) != len(ns):
            raise ValueError("profile N values must be distinct")
        if ns[0] < 1 or any(lam < 0 for _, lam in s):
            raise ValueError("profile needs N >= 1 and lam_exec >= 0")
        object.__setattr__(self, "samples", s)

    @functools.cached_property
    def ns(self) -> list[int]:
        return [n for n, _ in self.samples]

    def lam_exec(self, N: float) -> float:
        """Linear interpolation between neighbouring samples; no extrapolation."""
        ns = self.ns
        if N < ns[0] or N > ns[-1]:
            raise OutOfProfileRange(f"N={N} outside measured range [{ns[0]}, {ns[-1]}]")
        i = bisect.bisect_left(ns, N)
        n1, l1 = self.samples[i]
        if n1 == N:
            return l1
        n0, l0 = self.samples[i - 1]
        return l0 + (l1 - l0) * (N - n0) / (n1 - n0)


@dataclass(frozen=True)
class LatencyBreakdown:
    l_cam: float
    l_buffer: float
    l_exec: float
    l_total: float
    real_time: bool


def l_total(
    camera_cost: CameraCost | float,
    exec_profile: ExecProfile,
    R: float,
    N: float,
    buffer_model: BufferModel = "paper",
) -> LatencyBreakdown:
    lam_cam = camera_cost.lam_cam if isinstance(camera_cost, CameraCost) else float(camera_cost)
    c = l_cam(R, lam_cam)
    b = l_buffer(R, N, buffer_model)
    e = l_exec(R, N, exec_profile.lam_exec(N))
    total = c + b + e
    return LatencyBreakdown(c, b, e, total, total <= 1.0)


# --------------------------------------------------------------------------
# measurement


class Algorithm(Protocol):
    """Something to benchmark: ``make()`` returns a fresh stateful batch processor."""

    name: str

    def make(self) -> Callable[[np.ndarray], object]: ...


@dataclass
class FunctionAlgorithm:
    name: str
    factory: Callable[[], Callable[[np.ndarray], object]]

    def make(self):
        return self.factory()


def measure_exec_profile(
    algorithm: Algorithm,
    stream,
    N_list: Sequence[int],
    repetitions: int = 5,
    warmup: int = 3,
    prime_events: int = 0,
    clock: Callable[[], int] = time.perf_counter_ns,
) -> ExecProfile:
    """Median-of-repetitions wall-clock time per batch for each N.

    Every N is timed on the same span of ``max(N_list)`` events following
    ``prime_events`` untimed priming events, so the batch content does not
    differ between buffer sizes.  One repetition takes a fresh processor,
    primes it, then times consecutive batches of N across the span; its
    per-batch time is the span time over the batch count.  ``warmup``
    batches on a throwaway processor precede the repetitions (JIT, caches),
    and repetitions rotate through N_list.  Everything
    runs in the calling thread.
    """
    events = as_events(stream)
    if repetitions < 1 or warmup < 0 or prime_events < 0:
        raise ValueError("repetitions must be >= 1, warmup and prime_events >= 0")
    if not N_list or min(N_list) < 1:
        raise ValueError("N_list must hold buffer sizes >= 1")
    span = max(N_list)
    need = prime_events + span
    if len(events) < need:
        raise StreamTooShort(
            f"stream has {len(events)} events, {need} needed for {prime_events} priming events "
            f"and a {span}-event timing span"
        )
    region = events[prime_events : prime_events + span]

    def primed():
        proc = algorithm.make()
        for start in range(0, prime_events, 10_000):
            proc(events[start : min(start + 10_000, prime_events)])
        return proc

    n_batches = {N: span // N for N in N_list}
    for N in N_list:
        proc = algorithm.make()
        for k in range(warmup):
            j = k % n_batches[N]
            proc(region[j * N : (j + 1) * N])
    # repetitions are interleaved across N so slow drifts in machine load
    # affect every buffer size alike
    times: dict[int, list[float]] = {N: [] for N in N_list}
    for _ in range(repetitions):
        for N in N_list:
            proc = primed()
            t0 = clock()
            for k in range(n_batches[N]):
                proc(region[k * N : (k + 1) * N])
            times[N].append((clock() - t0) / n_batches[N])
    samples = [(int(N), statistics.median(times[N]) / 1e9) for N in N_list]
    return ExecProfile(tuple(samples))


@dataclass
class SweepRow:
    algorithm: str
    R: float
    N: int
    l_cam: float
    l_buffer: float
    l_exec: float
    l_total: float
    real_time: bool


COLUMNS = ("algorithm", "R", "N", "L_cam", "L_buffer", "L_exec", "L_total", "real_time")


@dataclass
class SweepReport:
    rows: list[SweepRow]
    profile: ExecProfile | None = None
    lam_cam: float = 0.0
    buffer_model: str = "paper"
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    r.algorithm,
                    f"{r.R:.6e}",
                    f"{float(r.N):.6e}",
                    f"{r.l_cam:.6e}",
                    f"{r.l_buffer:.6e}",
                    f"{r.l_exec:.6e}",
                    f"{r.l_total:.6e}",
                    "true" if r.real_time else "false",
                ]
            )
        return buf.getvalue()

    def for_rate(self, R: float) -> list[SweepRow]:
        return [r for r in self.rows if r.R == R]

    def argmin(self) -> dict[float, SweepRow]:
        """Row with the smallest L_total for each R (ties: smaller N)."""
        best: dict[float, SweepRow] = {}
        for r in self.rows:
            cur = best.get(r.R)
            if cur is None or r.l_total < cur.l_total:
                best[r.R] = r
        return best


def read_report(text: str) -> list[dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(
            {
                "algorithm": rec["algorithm"],
                **{k: float(rec[k]) for k in ("R", "N", "L_cam", "L_buffer", "L_exec", "L_total")},
                "real_time": rec["real_time"] == "true",
            }
        )
    return rows


def evaluate(
    name: str,
    profile: ExecProfile,
    R_list: Sequence[float],
    camera_cost: CameraCost | float,
    buffer_model: BufferModel = "paper",
) -> SweepReport:
    """Model evaluation over a fixed profile; pure and deterministic."""
    rows = []
    for R in R_list:
        for N in profile.ns:
            b = l_total(camera_cost, profile, R, N, buffer_model)
            rows.append(SweepRow(name, float(R), int(N), b.l_cam, b.l_buffer, b.l_exec, b.l_total, b.real_time))
    lam = camera_cost.lam_cam if isinstance(camera_cost, CameraCost) else float(camera_cost)
    return SweepReport(rows, profile, lam, buffer_model)


def sweep(
    algorithm: Algorithm,
    stream,
    R_list: Sequence[float],
    N_list: Sequence[int],
    camera_cost: CameraCost | float,
    repetitions: int = 5,
    warmup: int = 3,
    buffer_model: BufferModel = "paper",
    prime_events: int = 0,
) -> SweepReport:
    """Measure ``algorithm`` over ``N_list`` once, then evaluate the model at every nominal R.

    R is imposed analytically: the stream only supplies batch content.
    """
    profile = measure_exec_profile(algorithm, stream, N_list, repetitions, warmup, prime_events)
    return evaluate(algorithm.name, profile, R_list, camera_cost, buffer_model)
