from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evpipe.core import SensorGeometry, make_events
from evpipe.bench import gesture_stream
from evpipe.pipeline import read_pgm, write_pgm
from evpipe.representations import (
    BackendFailure,
    EmptyBatch,
    LeakyIntegrator,
    VoxelGrid,
    VoxelProcessor,
    frames_per_second_trace,
    grid_preview,
    leaky_integrator_backend,
    reconstruct,
    temporal_weights,
    voxel_grid,
)

from conftest import random_stream

GEO = SensorGeometry(40, 30)


def naive_voxel(events, B, geometry):
    """Per-event accumulation straight from the tent-kernel definition."""
    out = np.zeros((B, geometry.height, geometry.width))
    t0, t1 = int(events["t"][0]), int(events["t"][-1])
    for e in events:
        ts = 0.0 if t1 == t0 else (B - 1) * (int(e["t"]) - t0) / (t1 - t0)
        sign = 1.0 if e["p"] == 1 else -1.0
        for b in range(B):
            w = max(0.0, 1.0 - abs(ts - b))
            out[b, e["y"], e["x"]] += sign * w
    return out


def test_single_event_goes_to_bin_zero():
    g = voxel_grid(make_events([(77, 3, 4, 1)]), B=5, geometry=GEO)
    assert g.values[0, 4, 3] == 1.0 and g.values.sum() == 1.0
    assert (g.t_start, g.t_end) == (77, 77)


def test_bilinear_midpoint():
    ev = make_events([(0, 0, 0, 1), (625, 1, 1, 1), (1000, 2, 2, 0)])  # t* = 2.5 for the middle event
    g = voxel_grid(ev, B=5, geometry=GEO)
    assert g.values[2, 1, 1] == pytest.approx(0.5) and g.values[3, 1, 1] == pytest.approx(0.5)
    assert g.values[4, 2, 2] == -1.0


def test_empty_batch_and_bad_bins():
    with pytest.raises(EmptyBatch):
        voxel_grid(make_events([]), geometry=GEO)
    with pytest.raises(ValueError):
        voxel_grid(make_events([(0, 0, 0, 0)]), B=0, geometry=GEO)


def test_large_batch_matches_naive_oracle(rng):
    events = random_stream(rng, 100_000, GEO)
    B = 5
    g = voxel_grid(events, B, GEO)
    signed = np.where(events["p"] == 1, 1.0, -1.0)
    assert abs(g.values.sum() - signed.sum()) <= 1e-6 * len(events)
    # per-pixel sums over bins equal signed counts
    counts = np.zeros(GEO.shape)
    np.add.at(counts, (events["y"].astype(int), events["x"].astype(int)), signed)
    np.testing.assert_allclose(g.values.sum(axis=0), counts, atol=1e-6)
    sub = events[:3000]
    np.testing.assert_allclose(voxel_grid(sub, B, GEO).values, naive_voxel(sub, B, GEO), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=50), st.integers(1, 12))
def test_weights_sum_to_one(ts, B):
    ts = np.sort(np.array(ts, dtype=np.int64))
    b0, w = temporal_weights(ts, int(ts[0]), int(ts[-1]), B)
    assert np.all((b0 >= 0) & (b0 <= B - 1))
    assert np.all((w >= 0) & (w < 1))
    assert np.all((w == 0) | (b0 + 1 <= B - 1))
    np.testing.assert_allclose((1 - w) + w, 1.0)


def test_zero_span_batch_all_in_bin_zero():
    ev = make_events([(5, 1, 1, 1), (5, 2, 1, 0), (5, 1, 1, 1)])
    g = voxel_grid(ev, B=4, geometry=GEO)
    assert g.values[1:].sum() == 0.0
    assert g.values[0, 1, 1] == 2.0 and g.values[0, 1, 2] == -1.0


# ---------------------------------------------------------------- reconstruction


def _grid(values):
    return VoxelGrid(np.asarray(values, dtype=float), 0, 1)


def test_leaky_integrator_zero_grid_first_call():
    backend = leaky_integrator_backend(decay_per_frame=0.9, gain=0.1)
    frame = reconstruct(backend, _grid(np.zeros((3, 4, 5))))
    np.testing.assert_allclose(frame, 0.45)
    frame = reconstruct(backend, _grid(np.zeros((3, 4, 5))))
    np.testing.assert_allclose(frame, 0.405)


def test_frozen_dynamics(rng):
    backend = LeakyIntegrator(decay_per_frame=1.0, gain=0.0)
    for _ in range(5):
        frame = reconstruct(backend, _grid(rng.normal(size=(2, 6, 6)) * 10))
    np.testing.assert_array_equal(frame, 0.5)


def test_decay_zero_is_memoryless(rng):
    g = _grid(rng.normal(size=(2, 6, 6)))
    a = LeakyIntegrator(0.0, 0.3)
    reconstruct(a, _grid(rng.normal(size=(2, 6, 6)) * 5))
    fresh = LeakyIntegrator(0.0, 0.3)
    np.testing.assert_array_equal(reconstruct(a, g), reconstruct(fresh, g))


def test_strong_pixel_brighter_than_neighbourhood():
    values = np.zeros((5, 9, 9))
    values[:, 4, 4] = 2.0
    frame = reconstruct(LeakyIntegrator(), _grid(values))
    neigh = frame[3:6, 3:6].sum() - frame[4, 4]
    assert frame[4, 4] > neigh / 8


def test_stateless_backend_deterministic(rng):
    class Mean:
        identifier = "mean"

        def run(self, grid):
            return np.clip(0.5 + grid.values.mean(axis=0), 0, 1)

    g = _grid(rng.normal(size=(3, 5, 5)) * 0.1)
    np.testing.assert_array_equal(reconstruct(Mean(), g), reconstruct(Mean(), g))


def test_backend_failures():
    class Boom:
        identifier = "boom"

        def run(self, grid):
            raise RuntimeError("no")

    class Wrong:
        identifier = "wrong"

        def run(self, grid):
            return np.zeros((2, 2))

    class Bright:
        identifier = "bright"

        def run(self, grid):
            return np.full(grid.values.shape[1:], 2.0)

    g = _grid(np.zeros((1, 3, 3)))
    for backend in (Boom(), Wrong(), Bright()):
        with pytest.raises(BackendFailure):
            reconstruct(backend, g)
    with pytest.raises(ValueError):
        LeakyIntegrator(decay_per_frame=1.5)


def test_small_buffer_has_lower_contrast():
    geo = SensorGeometry()
    ev = gesture_stream(60_000, geo, seed=1)

    def mean_contrast(N):
        # a fresh integrator per frame isolates the structure carried by one buffer
        frames = [reconstruct(LeakyIntegrator(geometry=geo), voxel_grid(ev[i : i + N], 5, geo)) for i in range(0, len(ev) - N + 1, N)]
        return np.mean([f.std() for f in frames])

    assert mean_contrast(3192) < mean_contrast(12768)


def test_voxel_processor_and_preview(tmp_path, rng):
    events = random_stream(rng, 2000, GEO)
    proc = VoxelProcessor(GEO, B=3)
    frame = proc(events)
    assert frame.shape == GEO.shape and frame.min() >= 0 and frame.max() <= 1
    prev = grid_preview(voxel_grid(events, 3, GEO))
    assert prev.min() >= 0 and prev.max() <= 1
    write_pgm(tmp_path / "f.pgm", frame)
    back = read_pgm(tmp_path / "f.pgm")
    np.testing.assert_array_equal(back, np.floor(frame * 255 + 0.5).astype(np.uint8))


# ---------------------------------------------------------------- frames per second


def _uniform(rate, seconds):
    n = int(rate * seconds)
    ev = np.zeros(n, dtype=[("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
    ev["t"] = (np.arange(n) * 1_000_000 // rate).astype(np.uint64)
    return ev


def test_fps_uniform_stream():
    ev = _uniform(100_000, 4)
    a = frames_per_second_trace(ev, 5000)
    b = frames_per_second_trace(ev, 10_000)
    np.testing.assert_array_equal(a.counts, [20, 20, 20, 20])
    np.testing.assert_array_equal(b.counts, [10, 10, 10, 10])
    assert a.total == len(ev) // 5000 and not a.exceeds.any()


def test_fps_burst_peak():
    quiet = _uniform(20_000, 1)
    active = _uniform(500_000, 1)
    active["t"] += np.uint64(1_000_000)
    tail = _uniform(20_000, 1)
    tail["t"] += np.uint64(2_000_000)
    ev = np.concatenate([quiet, active, tail])
    tr = frames_per_second_trace(ev, 2000)
    assert int(np.argmax(tr.counts)) == 1
    assert tr.exceeds[1] and not tr.exceeds[0]
    assert tr.total == len(ev) // 2000


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3000))
def test_fps_total_is_floor(seed, N):
    ev = random_stream(np.random.default_rng(seed), 5000, GEO, mean_dt=500.0)
    tr = frames_per_second_trace(ev, N)
    assert tr.total == len(ev) // N and np.all(tr.counts >= 0)


def test_fps_csv(tmp_path):
    tr = frames_per_second_trace(_uniform(100_000, 2), 1000)
    tr.write_csv(tmp_path / "fps.csv")
    lines = (tmp_path / "fps.csv").read_text().splitlines()
    assert lines == ["second_index,frames,exceeds_display_rate", "0,100,true", "1,100,true"]
    with pytest.raises(ValueError):
        frames_per_second_trace(_uniform(10, 1), 0)
