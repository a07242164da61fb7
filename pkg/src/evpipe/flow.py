"""Per-event optical flow: local plane fits and aperture-robust multi-scale correction.

For every event a plane ``t = a*x + b*y + c`` is fitted to the most recent
same-polarity timestamps around it; its gradient gives the normal flow
``(a, b) / (a^2 + b^2)``.  The correction then looks at the local flows stored
around the event at several spatial scales, keeps the scale with the largest
mean speed, and reports the mean direction there with that mean speed.

Flow is computed strictly event by event against a rolling per-pixel index,
so results do not depend on how a stream is cut into batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .core import EVENT_DTYPE, EvpipeError, Event, SensorGeometry, as_events, stream_geometry

NEVER = np.iinfo(np.int64).min // 4

OK = 0
INSUFFICIENT_SUPPORT = 1
DEGENERATE_PLANE = 2
OUTLIER = 3
NO_LOCAL_FLOWS = 4

STATUS_NAMES = {
    OK: "ok",
    INSUFFICIENT_SUPPORT: "insufficient_support",
    DEGENERATE_PLANE: "degenerate_plane",
    OUTLIER: "outlier",
    NO_LOCAL_FLOWS: "no_local_flows",
}

DEGENERATE_TOL = 1e-12

FLOW_DTYPE = np.dtype(
    [
        ("t", "<u8"),
        ("x", "<u2"),
        ("y", "<u2"),
        ("p", "u1"),
        ("status", "u1"),
        ("vx", "<f8"),
        ("vy", "<f8"),
        ("speed", "<f8"),
        ("scale", "<i4"),
        ("nvx", "<f8"),
        ("nvy", "<f8"),
    ]
)


class FlowError(EvpipeError, ValueError):
    pass


class InsufficientSupport(FlowError):
    pass


class DegeneratePlane(FlowError):
    pass


class NoLocalFlows(FlowError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    fit_radius: int = 3
    fit_window_us: int = 20_000
    min_support: int = 5
    scale_set: tuple[int, ...] = (3, 5, 7, 9, 11)
    max_speed: float = 1e6
    trim: bool = True  # one residual-trimming refit

    def __post_init__(self):
        scales = tuple(int(s) for s in self.scale_set)
        object.__setattr__(self, "scale_set", scales)
        if not scales or list(scales) != sorted(set(scales)) or scales[0] < 0:
            raise ValueError("scale_set must be non-empty, ascending and non-negative")
        if self.min_support < 3:
            raise ValueError("min_support must be >= 3")
        if self.fit_radius < 1 or self.fit_window_us < 0 or not self.max_speed > 0:
            raise ValueError("bad flow config")


@dataclass(frozen=True)
class PlaneFit:
    a: float  # us/px
    b: float  # us/px
    c: float  # us, relative to the fitted event's time
    inlier_count: int
    residual_rms: float


@dataclass(frozen=True)
class FlowVector:
    vx: float
    vy: float
    speed: float
    scale: int = 0
    outlier: bool = False

    @classmethod
    def from_components(cls, vx, vy, scale=0, outlier=False):
        return cls(float(vx), float(vy), math.hypot(vx, vy), int(scale), outlier)

    @property
    def angle(self) -> float:
        return math.atan2(self.vy, self.vx)


# --------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _solve_plane(dx, dy, dt, n):
    """Least-squares plane through n points in centred form.

    Collinear support leaves the gradient along the line undetermined; the
    minimum-norm (pseudo-inverse) solution is returned then.  Returns
    (a, b, c, rms) with c the fitted value at the origin.
    """
    mx = 0.0
    my = 0.0
    mt = 0.0
    for i in range(n):
        mx += dx[i]
        my += dy[i]
        mt += dt[i]
    mx /= n
    my /= n
    mt /= n
    sxx = 0.0
    sxy = 0.0
    syy = 0.0
    sxt = 0.0
    syt = 0.0
    for i in range(n):
        ux = dx[i] - mx
        uy = dy[i] - my
        ut = dt[i] - mt
        sxx += ux * ux
        sxy += ux * uy
        syy += uy * uy
        sxt += ux * ut
        syt += uy * ut
    tr = sxx + syy
    det = sxx * syy - sxy * sxy
    if tr <= 0.0:
        a = 0.0
        b = 0.0
    elif det > 1e-12 * tr * tr:
        a = (syy * sxt - sxy * syt) / det
        b = (sxx * syt - sxy * sxt) / det
    else:
        # rank one: project onto the single direction the points span
        if sxx >= syy:
            ex = sxx
            ey = sxy
        else:
            ex = sxy
            ey = syy
        norm = math.sqrt(ex * ex + ey * ey)
        ex /= norm
        ey /= norm
        k = (ex * sxt + ey * syt) / tr
        a = k * ex
        b = k * ey
    c = mt - a * mx - b * my
    ss = 0.0
    for i in range(n):
        r = a * dx[i] + b * dy[i] + c - dt[i]
        ss += r * r
    return a, b, c, math.sqrt(ss / n)


@numba.njit(cache=True)
def _fit_points(dx, dy, dt, n, min_support, trim):
    """Plane fit with one optional trimming pass (drop residuals > 3 rms, refit).

    Trimming compacts the kept points to the front of the input arrays.
    Returns (status, a, b, c, inliers, rms).
    """
    if n < min_support:
        return INSUFFICIENT_SUPPORT, 0.0, 0.0, 0.0, n, 0.0
    a, b, c, rms = _solve_plane(dx, dy, dt, n)
    inliers = n
    if trim and rms > 0.0:
        limit = 3.0 * rms
        m = 0
        for i in range(n):
            if abs(a * dx[i] + b * dy[i] + c - dt[i]) <= limit:
                dx[m] = dx[i]
                dy[m] = dy[i]
                dt[m] = dt[i]
                m += 1
        if m < n and m >= min_support:
            a, b, c, rms = _solve_plane(dx, dy, dt, m)
            inliers = m
    if abs(a) <= DEGENERATE_TOL and abs(b) <= DEGENERATE_TOL:
        return DEGENERATE_PLANE, a, b, c, inliers, rms
    return OK, a, b, c, inliers, rms


@numba.njit(cache=True)
def _fit_at(last_t, x, y, t, radius, window_us, min_support, trim, dx, dy, dt):
    """Plane fit around (x, y) from one polarity plane of most-recent timestamps.

    ``dx``, ``dy``, ``dt`` are scratch arrays of at least (2*radius+1)**2.
    """
    h, w = last_t.shape
    n = 0
    for yy in range(max(y - radius, 0), min(y + radius, h - 1) + 1):
        for xx in range(max(x - radius, 0), min(x + radius, w - 1) + 1):
            tl = last_t[yy, xx]
            if tl == NEVER or tl > t or t - tl > window_us:
                continue
            dx[n] = xx - x
            dy[n] = yy - y
            dt[n] = tl - t
            n += 1
    return _fit_points(dx, dy, dt, n, min_support, trim)


@numba.njit(cache=True)
def _normal_flow(a, b):
    """(vx, vy, speed) in px/s from gradient components in us/px."""
    g2 = a * a + b * b
    return a / g2 * 1e6, b / g2 * 1e6, 1e6 / math.sqrt(g2)


@numba.njit(cache=True)
def _arms_select(ring_speed, ring_ux, ring_uy, ring_n, scales):
    """Choose the scale with the largest mean speed (ties: smallest scale).

    Rings hold per-Chebyshev-distance sums of speed, unit vectors and counts.
    Returns (status, vx, vy, scale) with direction = mean unit vector at that
    scale and magnitude = mean speed there.
    """
    best = -1.0
    best_s = -1
    best_ux = 0.0
    best_uy = 0.0
    acc_speed = 0.0
    acc_ux = 0.0
    acc_uy = 0.0
    acc_n = 0
    r = 0
    for k in range(scales.shape[0]):
        s = scales[k]
        while r <= s:
            acc_speed += ring_speed[r]
            acc_ux += ring_ux[r]
            acc_uy += ring_uy[r]
            acc_n += ring_n[r]
            r += 1
        if acc_n == 0:
            continue
        mean = acc_speed / acc_n
        if mean > best:
            best = mean
            best_s = s
            best_ux = acc_ux
            best_uy = acc_uy
    if best_s < 0:
        return NO_LOCAL_FLOWS, 0.0, 0.0, -1
    norm = math.sqrt(best_ux * best_ux + best_uy * best_uy)
    if norm <= 1e-12:
        return NO_LOCAL_FLOWS, 0.0, 0.0, best_s
    return OK, best * best_ux / norm, best * best_uy / norm, best_s


@numba.njit(cache=True)
def _ring_add(ring_speed, ring_ux, ring_uy, ring_n, d, vx, vy):
    sp = math.sqrt(vx * vx + vy * vy)
    if sp > 0.0:
        ring_speed[d] += sp
        ring_ux[d] += vx / sp
        ring_uy[d] += vy / sp
        ring_n[d] += 1


@numba.njit(cache=True)
def _arms_pool(dxs, dys, vxs, vys, n, scales):
    smax = scales[scales.shape[0] - 1]
    ring_speed = np.zeros(smax + 1)
    ring_ux = np.zeros(smax + 1)
    ring_uy = np.zeros(smax + 1)
    ring_n = np.zeros(smax + 1, dtype=np.int64)
    for i in range(n):
        d = max(abs(dxs[i]), abs(dys[i]))
        if d <= smax:
            _ring_add(ring_speed, ring_ux, ring_uy, ring_n, d, vxs[i], vys[i])
    return _arms_select(ring_speed, ring_ux, ring_uy, ring_n, scales)


@numba.njit(cache=True)
def _flow_kernel(t, x, y, p, last_t, flow_t, flow_v, radius, window_us, min_support, trim, max_speed, scales, out):
    h, w = flow_t.shape
    smax = scales[scales.shape[0] - 1]
    side = 2 * radius + 1
    dx = np.empty(side * side)
    dy = np.empty(side * side)
    dt = np.empty(side * side)
    ring_speed = np.zeros(smax + 1)
    ring_ux = np.zeros(smax + 1)
    ring_uy = np.zeros(smax + 1)
    ring_n = np.zeros(smax + 1, dtype=np.int64)
    for i in range(t.shape[0]):
        ti = t[i]
        xi = x[i]
        yi = y[i]
        plane = last_t[p[i]]
        plane[yi, xi] = ti
        status, a, b, c, inl, rms = _fit_at(plane, xi, yi, ti, radius, window_us, min_support, trim, dx, dy, dt)
        out[i, 0] = status
        if status != OK:
            continue
        nvx, nvy, sp = _normal_flow(a, b)
        out[i, 5] = nvx
        out[i, 6] = nvy
        if sp > max_speed:
            out[i, 0] = OUTLIER
            continue
        flow_t[yi, xi] = ti
        sp = math.sqrt(nvx * nvx + nvy * nvy)
        flow_v[yi, xi, 0] = sp
        flow_v[yi, xi, 1] = nvx / sp
        flow_v[yi, xi, 2] = nvy / sp
        ring_speed[:] = 0.0
        ring_ux[:] = 0.0
        ring_uy[:] = 0.0
        ring_n[:] = 0
        for yy in range(max(yi - smax, 0), min(yi + smax, h - 1) + 1):
            ady = abs(yy - yi)
            for xx in range(max(xi - smax, 0), min(xi + smax, w - 1) + 1):
                # NEVER is far enough in the past to fail the window test
                if ti - flow_t[yy, xx] > window_us:
                    continue
                d = max(ady, abs(xx - xi))
                ring_speed[d] += flow_v[yy, xx, 0]
                ring_ux[d] += flow_v[yy, xx, 1]
                ring_uy[d] += flow_v[yy, xx, 2]
                ring_n[d] += 1
        st, vx, vy, s = _arms_select(ring_speed, ring_ux, ring_uy, ring_n, scales)
        out[i, 0] = st
        out[i, 1] = vx
        out[i, 2] = vy
        out[i, 3] = math.sqrt(vx * vx + vy * vy)
        out[i, 4] = s


# --------------------------------------------------------------------------
# public API


@dataclass
class FlowState:
    """Rolling index carried between batches: latest timestamp per (polarity, pixel)
    and latest accepted local flow per pixel as (speed, unit x, unit y)."""

    geometry: SensorGeometry
    last_t: np.ndarray = field(init=False)
    flow_t: np.ndarray = field(init=False)
    flow_v: np.ndarray = field(init=False)

    def __post_init__(self):
        h, w = self.geometry.shape
        self.last_t = np.full((2, h, w), NEVER, dtype=np.int64)
        self.flow_t = np.full((h, w), NEVER, dtype=np.int64)
        self.flow_v = np.zeros((h, w, 3))

    def add(self, events) -> None:
        """Record events in the timestamp index without computing flow."""
        events = as_events(events)
        for t, x, y, p in events.tolist():
            self.last_t[p, y, x] = t


def local_plane_fit(event: Event, state: FlowState, config: FlowConfig = FlowConfig()) -> PlaneFit:
    """Fit the local plane for ``event`` (whose own pixel reads ``event.t``)."""
    plane = state.last_t[event.polarity].copy()
    plane[event.y, event.x] = event.t
    size = (2 * config.fit_radius + 1) ** 2
    status, a, b, c, inl, rms = _fit_at(
        plane, event.x, event.y, event.t, config.fit_radius, config.fit_window_us, config.min_support, config.trim,
        np.empty(size), np.empty(size), np.empty(size),
    )
    if status == INSUFFICIENT_SUPPORT:
        raise InsufficientSupport(f"{inl} support pixels, need {config.min_support}")
    if status == DEGENERATE_PLANE:
        raise DegeneratePlane("plane gradient is zero")
    return PlaneFit(a, b, c, inl, rms)


def fit_plane(xs, ys, ts, min_support: int = 3, trim: bool = True) -> PlaneFit:
    """Least-squares plane ``t = a*x + b*y + c`` through explicit points (us, px)."""
    xs = np.array(xs, dtype=np.float64)
    ys = np.array(ys, dtype=np.float64)
    ts = np.array(ts, dtype=np.float64)
    status, a, b, c, inl, rms = _fit_points(xs, ys, ts, len(xs), min_support, trim)
    if status == INSUFFICIENT_SUPPORT:
        raise InsufficientSupport(f"{len(xs)} points, need {min_support}")
    if status == DEGENERATE_PLANE:
        raise DegeneratePlane("plane gradient is zero")
    return PlaneFit(a, b, c, inl, rms)


def normal_flow(plane: PlaneFit, config: FlowConfig = FlowConfig()) -> FlowVector:
    if abs(plane.a) <= DEGENERATE_TOL and abs(plane.b) <= DEGENERATE_TOL:
        raise DegeneratePlane("plane gradient is zero")
    vx, vy, sp = _normal_flow(plane.a, plane.b)
    return FlowVector(vx, vy, sp, 0, sp > config.max_speed)


def arms_correct(event: Event, local_flows, config: FlowConfig = FlowConfig()) -> FlowVector:
    """Aperture-robust correction from explicit local flows.

    ``local_flows`` rows are ``(x, y, vx, vy)``; flows outside the largest
    scale around the event are ignored.
    """
    lf = np.asarray(local_flows, dtype=np.float64).reshape(-1, 4)
    dxs = (lf[:, 0] - event.x).astype(np.int64)
    dys = (lf[:, 1] - event.y).astype(np.int64)
    st, vx, vy, s = _arms_pool(dxs, dys, lf[:, 2].copy(), lf[:, 3].copy(), len(lf), np.array(config.scale_set, dtype=np.int64))
    if st != OK:
        raise NoLocalFlows(f"no usable local flow within radius {config.scale_set[-1]}")
    return FlowVector.from_components(vx, vy, s)


def flow_batch(batch, state: FlowState, config: FlowConfig = FlowConfig()):
    """Flow for every event of ``batch``; returns ``(FLOW_DTYPE array, state)``.

    Rows whose ``status`` is not ``OK`` carry no corrected vector.
    """
    batch = as_events(batch)
    n = len(batch)
    out = np.zeros((n, 7))
    if n:
        _flow_kernel(
            batch["t"].astype(np.int64),
            batch["x"].astype(np.int64),
            batch["y"].astype(np.int64),
            batch["p"].astype(np.int64),
            state.last_t,
            state.flow_t,
            state.flow_v,
            config.fit_radius,
            config.fit_window_us,
            config.min_support,
            config.trim,
            config.max_speed,
            np.array(config.scale_set, dtype=np.int64),
            out,
        )
    res = np.zeros(n, dtype=FLOW_DTYPE)
    for name in EVENT_DTYPE.names:
        res[name] = batch[name]
    res["status"] = out[:, 0]
    res["vx"] = out[:, 1]
    res["vy"] = out[:, 2]
    res["speed"] = out[:, 3]
    res["scale"] = out[:, 4]
    res["nvx"] = out[:, 5]
    res["nvy"] = out[:, 6]
    return res, state


def compute_flow(events, config: FlowConfig = FlowConfig(), geometry: SensorGeometry | None = None, batch_size: int | None = None):
    """Whole-stream convenience wrapper around :func:`flow_batch`."""
    events = as_events(events)
    state = FlowState(stream_geometry(events, geometry))
    if not batch_size:
        return flow_batch(events, state, config)[0]
    parts = [flow_batch(events[i : i + batch_size], state, config)[0] for i in range(0, len(events), batch_size)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=FLOW_DTYPE)


class FlowProcessor:
    """Batch processor for the pipeline and the benchmark harness."""

    accepts_partial = True

    def __init__(self, geometry: SensorGeometry, config: FlowConfig = FlowConfig()):
        self.config = config
        self.state = FlowState(geometry)

    def __call__(self, batch):
        return flow_batch(batch, self.state, self.config)[0]


def angular_error(vx, vy, true_vx, true_vy) -> np.ndarray:
    """Absolute angle (degrees, in [0, 180]) between estimated and true flow."""
    a = np.arctan2(vy, vx) - np.arctan2(true_vy, true_vx)
    return np.degrees(np.abs((a + np.pi) % (2 * np.pi) - np.pi))


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1 - s)
    q = v * (1 - f * s)
    t = v * (1 - (1 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def flow_image(result: np.ndarray, geometry: SensorGeometry) -> np.ndarray:
    """RGB uint8 image: hue from direction (0 deg = red), value from speed / 95th percentile."""
    img = np.zeros((geometry.height, geometry.width, 3), dtype=np.uint8)
    ok = result[result["status"] == OK]
    if len(ok) == 0:
        return img
    hue = (np.arctan2(ok["vy"], ok["vx"]) % (2 * np.pi)) / (2 * np.pi)
    p95 = np.percentile(ok["speed"], 95)
    val = np.clip(ok["speed"] / p95, 0.0, 1.0) if p95 > 0 else np.ones(len(ok))
    rgb = _hsv_to_rgb(hue, np.ones(len(ok)), val)
    img[ok["y"].astype(int), ok["x"].astype(int)] = np.floor(rgb * 255 + 0.5).astype(np.uint8)
    return img


def write_ppm(path, image: np.ndarray) -> None:
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def summarize(result: np.ndarray) -> dict:
    counts = {name: int(np.sum(result["status"] == code)) for code, name in STATUS_NAMES.items()}
    ok = result[result["status"] == OK]
    summary = {"events": len(result), **counts}
    if len(ok):
        summary["mean_vx"] = float(ok["vx"].mean())
        summary["mean_vy"] = float(ok["vy"].mean())
        summary["median_speed"] = float(np.median(ok["speed"]))
    return summary


def dominant_direction(result: np.ndarray) -> float:
    """Angle (degrees) of the summed unit vectors of all valid flows."""
    ok = result[result["status"] == OK]
    ang = np.arctan2(ok["vy"], ok["vx"])
    return float(np.degrees(np.arctan2(np.sin(ang).sum(), np.cos(ang).sum())))


