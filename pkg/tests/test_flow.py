from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evpipe.core import EVENT_DTYPE, Event, SensorGeometry
from evpipe.flow import (
    DegeneratePlane,
    FlowConfig,
    FlowProcessor,
    FlowState,
    InsufficientSupport,
    NoLocalFlows,
    OK,
    OUTLIER,
    PlaneFit,
    angular_error,
    arms_correct,
    compute_flow,
    dominant_direction,
    fit_plane,
    flow_batch,
    flow_image,
    local_plane_fit,
    normal_flow,
    summarize,
    write_ppm,
)
from evpipe.filtering import FilterConfig, apply_chain
from evpipe.ingest import SyntheticSpec, synthesize, synthesize_gesture


def lstsq_oracle(xs, ys, ts, trim=True):
    """Plain numpy least squares with one 3-sigma trimming pass."""
    A = np.c_[xs, ys, np.ones(len(xs))]
    sol = np.linalg.lstsq(A, ts, rcond=None)[0]
    if trim:
        r = A @ sol - ts
        rms = np.sqrt(np.mean(r**2))
        keep = np.abs(r) <= 3 * rms
        if rms > 0 and keep.sum() < len(xs) and keep.sum() >= 3:
            sol = np.linalg.lstsq(A[keep], ts[keep], rcond=None)[0]
    return sol


def arms_oracle(ex, ey, flows, scales):
    best = None
    for s in scales:
        sel = [(vx, vy) for x, y, vx, vy in flows if max(abs(x - ex), abs(y - ey)) <= s]
        if not sel:
            continue
        speeds = [math.hypot(vx, vy) for vx, vy in sel]
        m = sum(speeds) / len(sel)
        if best is None or m > best[0]:
            ux = sum(vx / sp for (vx, _), sp in zip(sel, speeds))
            uy = sum(vy / sp for (_, vy), sp in zip(sel, speeds))
            best = (m, s, ux, uy)
    m, s, ux, uy = best
    n = math.hypot(ux, uy)
    return m * ux / n, m * uy / n, s


def test_exact_plane_row():
    p = fit_plane([0, 1, 2, 3, 4], [0, 0, 0, 0, 0], [0, 1000, 2000, 3000, 4000])
    assert p.a == pytest.approx(1000.0, abs=1e-9)
    assert p.b == 0.0
    assert p.residual_rms == pytest.approx(0.0, abs=1e-9)
    assert p.inlier_count == 5


def test_fit_errors():
    with pytest.raises(InsufficientSupport):
        fit_plane([0, 1], [0, 0], [0, 1], min_support=3)
    with pytest.raises(DegeneratePlane):
        fit_plane([0, 1, 2, 0], [0, 0, 1, 1], [5, 5, 5, 5])
    state = FlowState(SensorGeometry(10, 10))
    with pytest.raises(InsufficientSupport):
        local_plane_fit(Event(100, 5, 5, 1), state)


def test_local_fit_uses_same_polarity_recent_window():
    state = FlowState(SensorGeometry(20, 20))
    for x in range(3, 8):
        for y in range(3, 8):
            state.last_t[1, y, x] = 1000 * x
            state.last_t[0, y, x] = 5 * y  # other polarity, different plane
    state.last_t[1, 4, 4] = -10**9  # stale: outside the window
    fit = local_plane_fit(Event(7000, 7, 5, 1), state)
    assert fit.a == pytest.approx(1000.0)
    assert fit.b == pytest.approx(0.0, abs=1e-9)
    # 4 columns x 5 rows of support inside the image, minus the stale pixel
    assert fit.inlier_count == 19


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_matches_lstsq_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 40))
    xs = rng.integers(-3, 4, n).astype(float)
    ys = rng.integers(-3, 4, n).astype(float)
    if np.linalg.matrix_rank(np.c_[xs, ys, np.ones(n)]) < 3:
        return
    ts = rng.normal(0, 2000, 3) @ np.r_[[xs, ys, np.ones(n)]] + rng.normal(0, 50, n)
    fit = fit_plane(xs, ys, ts)
    a, b, c = lstsq_oracle(xs, ys, ts)
    assert fit.a == pytest.approx(a, rel=1e-7, abs=1e-6)
    assert fit.b == pytest.approx(b, rel=1e-7, abs=1e-6)
    assert fit.c == pytest.approx(c, rel=1e-7, abs=1e-5)


def test_noisy_plane_monte_carlo():
    rng = np.random.default_rng(7)
    xs, ys = np.meshgrid(np.arange(-3, 4), np.arange(-3, 4))
    xs, ys = xs.ravel().astype(float), ys.ravel().astype(float)
    good = 0
    for _ in range(100):
        a, b = rng.uniform(500, 3000) * rng.choice([-1, 1]), rng.uniform(500, 3000) * rng.choice([-1, 1])
        ts = a * xs + b * ys + rng.normal(0, 50, len(xs))
        fit = fit_plane(xs, ys, ts)
        good += abs(fit.a - a) <= 0.1 * abs(a) and abs(fit.b - b) <= 0.1 * abs(b)
    assert good == 100


def test_normal_flow_examples():
    v = normal_flow(PlaneFit(1000.0, 0.0, 0.0, 5, 0.0))
    assert (v.vx, v.vy) == pytest.approx((1000.0, 0.0))
    v = normal_flow(PlaneFit(0.0, 2000.0, 0.0, 5, 0.0))
    assert (v.vx, v.vy) == pytest.approx((0.0, 500.0))
    assert v.speed == pytest.approx(math.hypot(v.vx, v.vy), rel=1e-9)
    assert normal_flow(PlaneFit(0.1, 0.0, 0.0, 5, 0.0), FlowConfig(max_speed=1e6)).outlier
    with pytest.raises(DegeneratePlane):
        normal_flow(PlaneFit(0.0, 0.0, 0.0, 5, 0.0))


def test_arms_examples():
    flows = [(x, y, 300.0, 0.0) for x in range(0, 12) for y in range(0, 12)]
    v = arms_correct(Event(0, 6, 6, 1), flows)
    assert (v.vx, v.vy, v.scale) == pytest.approx((300.0, 0.0, 3))
    mixed = [(6, 6, 100.0, 0.0), (7, 6, 0.0, 300.0), (12, 6, 50.0, 0.0)]
    v = arms_correct(Event(0, 6, 6, 1), mixed, FlowConfig(scale_set=(11,)))
    speeds = [100.0, 300.0, 50.0]
    ux, uy = 1 + 0 + 1, 0 + 1 + 0
    m = sum(speeds) / 3
    assert (v.vx, v.vy) == pytest.approx((m * ux / math.hypot(ux, uy), m * uy / math.hypot(ux, uy)))
    with pytest.raises(NoLocalFlows):
        arms_correct(Event(0, 0, 0, 1), [(50, 50, 1.0, 0.0)])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_arms_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    flows = [(int(rng.integers(0, 25)), int(rng.integers(0, 25)), *rng.normal(0, 500, 2)) for _ in range(n)]
    ev = Event(0, 12, 12, 1)
    try:
        got = arms_correct(ev, flows)
    except NoLocalFlows:
        assert all(max(abs(x - 12), abs(y - 12)) > 11 for x, y, _, _ in flows)
        return
    vx, vy, s = arms_oracle(12, 12, flows, (3, 5, 7, 9, 11))
    assert got.scale == s
    assert (got.vx, got.vy) == pytest.approx((vx, vy), rel=1e-9, abs=1e-9)


def blob_stream(seed=1, velocity=(200.0, 0.0), geometry=SensorGeometry(128, 96)):
    spec = SyntheticSpec("moving_blob", geometry=geometry, velocity=velocity, duration=0.25, radius=10,
                         start=(30.0, 48.0), noise_rate=500, seed=seed)
    return synthesize(spec)[0], geometry


def test_batch_invariance():
    ev, geo = blob_stream()
    whole = compute_flow(ev, geometry=geo)
    for n in (1, 7, 500, 1000):
        parts = compute_flow(ev, geometry=geo, batch_size=n)
        assert np.array_equal(parts, whole)
    assert (whole["status"] == OK).mean() > 0.5


def test_time_translation_invariance():
    ev, geo = blob_stream(seed=3)
    shifted = ev.copy()
    shifted["t"] += np.uint64(10**12)
    a, b = compute_flow(ev, geometry=geo), compute_flow(shifted, geometry=geo)
    for f in ("status", "vx", "vy", "speed", "scale", "nvx", "nvy"):
        assert np.array_equal(a[f], b[f])


def test_rotation_equivariance():
    geo = SensorGeometry(64, 64)
    spec = SyntheticSpec("translating_bar", geometry=geo, velocity=(800.0, 0.0), duration=0.05, start=(5.0, 31.5), seed=0)
    ev, _ = synthesize(spec)
    rot = ev.copy()
    # 90 degrees: (x, y) -> (63 - y, x); velocity (vx, vy) -> (-vy, vx)
    rot["x"], rot["y"] = 63 - ev["y"].astype(int), ev["x"]
    rot = rot[np.lexsort((rot["x"], rot["y"], rot["t"]))]
    a, b = compute_flow(ev, geometry=geo), compute_flow(rot, geometry=geo)
    assert (a["status"] == OK).sum() == (b["status"] == OK).sum() > 0
    key = lambda f, x, y: {(int(t), int(xx), int(yy)): i for i, (t, xx, yy) in enumerate(zip(f["t"], x, y))}
    ia = key(a, 63 - a["y"].astype(int), a["x"])
    for i, (t, x, y) in enumerate(zip(b["t"], b["x"], b["y"])):
        j = ia[(int(t), int(x), int(y))]
        if a["status"][j] != OK:
            continue
        assert math.atan2(b["vy"][i], b["vx"][i]) == pytest.approx(math.atan2(a["vx"][j], -a["vy"][j]), abs=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gesture_moving_right_direction(seed):
    # gesture-like blob after the default denoising chain, as in the full pipeline
    ev, _ = synthesize_gesture("right", SensorGeometry(), seed=seed)
    ev, _ = apply_chain(ev, FilterConfig(), SensorGeometry())
    results = []
    for N in (2000, 5000):
        res = compute_flow(ev, geometry=SensorGeometry(), batch_size=N)
        ok = res[res["status"] == OK]
        assert (angular_error(ok["vx"], ok["vy"], 1.0, 0.0) <= 15).mean() >= 0.8
        assert abs(dominant_direction(res)) <= 15
        results.append(res)
    assert np.array_equal(results[0], results[1])


def test_processor_and_outputs(tmp_path):
    ev, geo = blob_stream(seed=2)
    proc = FlowProcessor(geo)
    parts = [proc(ev[i : i + 999]) for i in range(0, len(ev), 999)]
    res = np.concatenate(parts)
    assert np.array_equal(res, compute_flow(ev, geometry=geo))
    s = summarize(res)
    assert s["events"] == len(ev) and s["ok"] > 0
    img = flow_image(res, geo)
    assert img.shape == (96, 128, 3) and img.max() > 0
    write_ppm(tmp_path / "f.ppm", img)
    assert (tmp_path / "f.ppm").read_bytes().startswith(b"P6\n128 96\n255\n")
    # hue: direction 0 deg renders red
    one = np.zeros(1, dtype=res.dtype)
    one["status"], one["vx"], one["speed"], one["x"], one["y"] = OK, 100.0, 100.0, 1, 1
    assert flow_image(one, SensorGeometry(3, 3))[1, 1].tolist() == [255, 0, 0]


def test_outliers_not_pooled():
    state = FlowState(SensorGeometry(16, 16))
    ev = np.zeros(25, dtype=EVENT_DTYPE)
    k = 0
    for x in range(5):
        for y in range(5):
            ev[k] = (1000 + k, x, y, 1)  # nearly flat surface: huge speed
            k += 1
    res, _ = flow_batch(ev, state, FlowConfig(max_speed=10.0))
    assert np.all(np.isin(res["status"], [OUTLIER, 1]))
    assert np.all(state.flow_t < 0)
