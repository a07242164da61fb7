"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line (see the ``acceptance`` fixture) which
pytest prints in its terminal summary.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from mpmath import mp, mpf

from evpipe import cli
from evpipe.bench import burst_stream, gesture_stream
from evpipe.core import EVENT_DTYPE, SensorGeometry
from evpipe.filtering import FilterChain, FilterConfig, refractory_filter
from evpipe.flow import OK, FlowProcessor, angular_error, compute_flow
from evpipe.hots import (
    HotsConfig,
    HotsFeatures,
    accuracy_vs_filtering,
    evaluate_accuracy,
    learn_prototypes,
    time_surfaces,
    train_gesture_model,
)
from evpipe.ingest import (
    BadMagic,
    CountMismatch,
    EventPacket,
    PacketTable,
    SyntheticSpec,
    Truncated,
    decode_packet,
    decode_packets,
    encode_packet,
    encode_packets,
    synthesize,
    synthesize_gesture_set,
)
from evpipe.latency import ExecProfile, l_buffer, l_cam, l_exec, l_total, read_report
from evpipe.pipeline import run_pipeline
from evpipe.representations import frames_per_second_trace, temporal_weights, voxel_grid

from conftest import random_stream


# ---------------------------------------------------------------- 1


def test_criterion_1_latency_model(acceptance):
    mp.dps = 50
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    R = 10 ** rng.uniform(0, 7, 1000)
    N = rng.integers(1, 200_001, 1000)
    lam_c = 10 ** rng.uniform(-9, -4, 1000)
    lam_e = 10 ** rng.uniform(-7, 0, 1000)
    worst = 0.0
    for r, n, lc, le in zip(R.tolist(), N.tolist(), lam_c.tolist(), lam_e.tolist()):
        prof = ExecProfile(((int(n), le),))
        got = l_total(lc, prof, r, n)
        mr, mn = mpf(r), mpf(n)
        c, b, e = mr * mpf(lc), mn / mr, mr / mn * mpf(le)
        pairs = [(l_cam(r, lc), c), (l_buffer(r, n), b), (l_exec(r, n, le), e), (got.l_total, c + b + e)]
        for value, exact in pairs:
            worst = max(worst, float(abs(mpf(value) - exact) / exact))
    anchor = l_cam(624_390, 1.6016e-6)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and abs(anchor - 1.0) <= 1e-3 and dt < 1.0
    acceptance("1 latency model", ok, f"max rel err {worst:.2e}, anchor L_cam {anchor:.6f}, {dt:.2f} s")
    assert ok


# ---------------------------------------------------------------- 2


def _random_table(rng, n_packets):
    count = rng.integers(0, 9, n_packets)
    count[rng.choice(n_packets, 20, replace=False)] = 1023  # a few maximum-size packets
    n = int(count.sum())
    pid = np.repeat(np.arange(n_packets), count)
    t = rng.integers(0, 2**63, n, dtype=np.uint64)
    order = np.lexsort((t, pid))
    ev = np.zeros(n, dtype=EVENT_DTYPE)
    ev["t"] = t[order]
    ev["x"] = rng.integers(0, 2**16, n)
    ev["y"] = rng.integers(0, 2**16, n)
    ev["p"] = rng.integers(0, 2, n)
    return PacketTable(rng.integers(0, 2**32, n_packets), count, ev)


def test_criterion_2_codec(acceptance):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    table = _random_table(rng, 1_000_000)
    data = encode_packets(table)
    back = decode_packets(data)
    exact = (
        np.array_equal(back.seq, table.seq)
        and np.array_equal(back.count, table.count)
        and back.events.tobytes() == table.events.tobytes()
        and encode_packets(back) == data
    )
    # spot-check the bulk path against the single-packet codec
    for i in rng.choice(len(table), 200, replace=False):
        p = table.packet(int(i))
        exact &= decode_packet(encode_packet(p)) == p
    dt = time.perf_counter() - t0

    good = encode_packet(EventPacket(7, table.packet(0).events[:3]))
    rejected = []
    for exc, blob in (
        (BadMagic, b"\x00" + good[1:]),
        (Truncated, good[:-1]),
        (Truncated, good[:5]),
        (CountMismatch, good + b"\x00" * 4),
    ):
        try:
            decode_packet(blob)
            rejected.append(False)
        except exc:
            rejected.append(True)
    for exc, blob in ((BadMagic, b"\xff" + data[1:]), (Truncated, data[:-3])):
        try:
            decode_packets(blob)
            rejected.append(False)
        except exc:
            rejected.append(True)
    ok = exact and all(rejected) and dt < 30
    acceptance(
        "2 codec", ok, f"{len(table)} packets / {len(table.events)} events bit-exact={exact}, "
        f"malformed rejected {sum(rejected)}/{len(rejected)}, {dt:.1f} s"
    )
    assert ok


# ---------------------------------------------------------------- 3


def _is_subsequence(sub, full):
    """Order-preserving subsequence check on whole records."""
    it = iter(full.tolist())
    return all(any(r == f for f in it) for r in sub.tolist())


def test_criterion_3_filter_properties(acceptance):
    rng = np.random.default_rng(3)
    geo = SensorGeometry(48, 32)
    t0 = time.perf_counter()
    failures = []
    zero_cfgs = [FilterConfig.disabled(), FilterConfig(refractory_us=0, st_radius=0, st_window_us=1000),
                 FilterConfig(refractory_us=0, st_radius=2, st_window_us=0)]
    for k in range(100):
        ev = random_stream(rng, int(rng.integers(1, 3000)), geo, mean_dt=float(rng.uniform(1, 200)))
        refr = int(rng.integers(1, 5000))
        once, _ = refractory_filter(ev, refr, geo)
        twice, _ = refractory_filter(once, refr, geo)
        if twice.tobytes() != once.tobytes():
            failures.append(f"idempotence #{k}")
        cfg = FilterConfig(refr, int(rng.integers(0, 3)), int(rng.integers(0, 5000)))
        chain = FilterChain(cfg, geo)
        out = chain.process(ev)
        if not _is_subsequence(out, ev):
            failures.append(f"order #{k}")
        s = chain.stats
        if s.input_count != len(ev) or s.output_count != len(out) or s.input_count != s.output_count + s.removed:
            failures.append(f"stats #{k}")
        for zc in zero_cfgs:
            if FilterChain(zc, geo).process(ev).tobytes() != ev.tobytes():
                failures.append(f"identity #{k}")
    dt = time.perf_counter() - t0
    ok = not failures and dt < 10
    acceptance("3 filter properties", ok, f"100 streams, failures {failures[:3]}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4a_translating_bar(acceptance):
    geo = SensorGeometry()
    t0 = time.perf_counter()
    ev, _ = synthesize(SyntheticSpec("translating_bar", geo, velocity=(1000.0, 0.0), duration=0.25, seed=4))
    res = compute_flow(ev, geometry=geo)
    ok_rows = res[res["status"] == OK]
    med_err = float(np.median(angular_error(ok_rows["vx"], ok_rows["vy"], 1000.0, 0.0)))
    med_speed = float(np.median(ok_rows["speed"]))
    dt = time.perf_counter() - t0
    ok = med_err < 10 and abs(med_speed - 1000) <= 200 and dt < 60
    acceptance(
        "4a bar flow", ok, f"{len(ok_rows)}/{len(res)} valid, median angular error {med_err:.2f} deg, "
        f"median speed {med_speed:.1f} px/s, {dt:.1f} s"
    )
    assert ok


def _arms_vs_normal(length, thickness):
    geo = SensorGeometry(128, 128)
    spec = SyntheticSpec("translating_bar", geo, velocity=(1000.0, 0.0), duration=0.08, start=(10, 63.5),
                         length=length, thickness=thickness, angle_deg=45)
    ev, _ = synthesize(spec)
    res = compute_flow(ev, geometry=geo)
    ok = res["status"] == OK
    e_arms = float(angular_error(res["vx"][ok], res["vy"][ok], 1000.0, 0.0).mean())
    e_norm = float(angular_error(res["nvx"][ok], res["nvy"][ok], 1000.0, 0.0).mean())
    return e_arms, e_norm


def test_criterion_4b_long_edge_45deg(acceptance):
    # A long straight edge: every local plane sees only the edge normal, so no
    # scale inside the image can recover the tangential component.  Expected
    # to fail; see the decisions ledger for the analysis.
    t0 = time.perf_counter()
    e_arms, e_norm = _arms_vs_normal(length=100, thickness=1)
    dt = time.perf_counter() - t0
    ratio = e_arms / e_norm
    ok = ratio <= 0.5 and dt < 60
    acceptance(
        "4b 45-degree long edge", ok,
        f"ARMS {e_arms:.1f} deg vs normal {e_norm:.1f} deg, ratio {ratio:.3f} (need <= 0.5), {dt:.1f} s",
    )
    assert ok


def test_compact_45deg_bar_is_corrected():
    # where the bar ends fall inside the pooling scales, the correction works
    e_arms, e_norm = _arms_vs_normal(length=12, thickness=12)
    assert e_arms / e_norm < 0.6


# ---------------------------------------------------------------- 5


def test_criterion_5_batch_invariance(acceptance):
    geo = SensorGeometry()
    ev = gesture_stream(100_000, geo, seed=5)
    t0 = time.perf_counter()
    flows = {}
    proc = FlowProcessor(geo)
    flows[1] = np.concatenate([proc(ev[i : i + 1]) for i in range(len(ev))])
    for N in (500, 2000, 5000):
        run = run_pipeline(ev, None, N, FlowProcessor(geo), geometry=geo, single_thread=True)
        flows[N] = np.concatenate(run.results)
    flow_same = all(flows[N].tobytes() == flows[1].tobytes() for N in flows)

    bank = learn_prototypes([ev[:20_000]], HotsConfig(), seed=5, geometry=geo)
    hists = {}
    for N in (500, 2000, 5000):
        feats = HotsFeatures(bank, geo)
        run_pipeline(ev, None, N, feats, geometry=geo, single_thread=True)
        hists[N] = feats.histogram.copy()
    hots_same = all(np.array_equal(hists[N], hists[500]) for N in hists) and hists[500].sum() == len(ev)
    dt = time.perf_counter() - t0
    ok = flow_same and hots_same and dt < 120
    acceptance("5 batch invariance", ok, f"flow identical={flow_same}, HOTS identical={hots_same}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 6


def _brute_surface(events, i, rho, tau, geo):
    hist = events[: i + 1]
    cx, cy, t_ref = int(hist["x"][-1]), int(hist["y"][-1]), int(hist["t"][-1])
    x = hist["x"].astype(np.int64) - cx
    y = hist["y"].astype(np.int64) - cy
    near = (np.abs(x) <= rho) & (np.abs(y) <= rho)
    side = 2 * rho + 1
    last = np.full((side, side, 2), -np.inf)
    np.maximum.at(last, (y[near] + rho, x[near] + rho, hist["p"][near].astype(np.int64)),
                  hist["t"][near].astype(np.float64))
    out = np.where(np.isfinite(last), np.maximum(0.0, 1.0 - (t_ref - last) / tau), 0.0)
    return out.ravel()


def test_criterion_6_time_surface_oracle(acceptance):
    rng = np.random.default_rng(6)
    geo = SensorGeometry(40, 30)
    cfg = HotsConfig()
    ev = random_stream(rng, 10_000, geo, mean_dt=10.0)
    t0 = time.perf_counter()
    surf = time_surfaces(ev, geo, cfg.rho, cfg.tau)
    probes = rng.choice(len(ev), 1000, replace=False)
    worst = max(float(np.abs(surf[i] - _brute_surface(ev, int(i), cfg.rho, cfg.tau, geo)).max()) for i in probes)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 30
    acceptance("6 time-surface oracle", ok, f"1000 probes, max abs diff {worst:.1e}, {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 7, 8


@pytest.fixture(scope="module")
def gesture_dataset():
    data = synthesize_gesture_set(40, seed=2024)
    return data[:80], data[80:]  # 20 train / 20 test per class


def test_criterion_7_gesture_end_to_end(acceptance, gesture_dataset):
    train, test = gesture_dataset
    t0 = time.perf_counter()
    m1 = train_gesture_model(train, HotsConfig(), FilterConfig(), seed=7)
    acc = evaluate_accuracy(m1, test)
    m2 = train_gesture_model(train, HotsConfig(), FilterConfig(), seed=7)
    acc2 = evaluate_accuracy(m2, test)
    dt = time.perf_counter() - t0
    identical = m1.bank.prototypes.tobytes() == m2.bank.prototypes.tobytes() and acc == acc2 and all(
        np.array_equal(a.histogram, b.histogram) for (a, _), (b, _) in zip(m1.training, m2.training)
    )
    ok = acc >= 0.9 and identical and dt < 120
    acceptance("7 gesture end-to-end", ok, f"accuracy {acc:.3f} (K=32, k=3), repeat identical={identical}, {dt:.1f} s")
    assert ok


def test_criterion_8_filtering_vs_accuracy(acceptance, gesture_dataset):
    levels = [None] + [FilterConfig(refractory_us=r, st_radius=0, st_window_us=0) for r in (300, 500, 2000)]
    t0 = time.perf_counter()
    rows = accuracy_vs_filtering(gesture_dataset, levels, HotsConfig(), seed=8)
    dt = time.perf_counter() - t0
    base = rows[0].accuracy
    half = min(rows[1:], key=lambda r: abs(r.kept_fraction - 0.5))
    ok = abs(half.kept_fraction - 0.5) <= 0.1 and base - half.accuracy <= 0.10
    table = ", ".join(f"refr {r.refractory_us}us kept {r.kept_fraction:.2f} acc {r.accuracy:.2f}" for r in rows)
    acceptance("8 filtering vs accuracy", ok, f"{table}; {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------- 9


def _tent_oracle(batch, B, geo):
    t = batch["t"].astype(np.float64)
    span = t[-1] - t[0]
    ts = np.zeros(len(t)) if span == 0 else (B - 1) * (t - t[0]) / span
    sign = np.where(batch["p"] == 1, 1.0, -1.0)
    out = np.zeros((B, geo.height, geo.width))
    for b in range(B):
        np.add.at(out[b], (batch["y"].astype(int), batch["x"].astype(int)), sign * np.maximum(0.0, 1.0 - np.abs(ts - b)))
    return out


def test_criterion_9_voxel_grids(acceptance):
    rng = np.random.default_rng(9)
    geo = SensorGeometry(64, 48)
    t0 = time.perf_counter()
    worst_mass = worst_pix = worst_w = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 20_000))
        batch = random_stream(rng, n, geo, mean_dt=float(rng.uniform(0, 50)))
        B = int(rng.integers(1, 10))
        g = voxel_grid(batch, B, geo)
        signed = np.where(batch["p"] == 1, 1.0, -1.0)
        worst_mass = max(worst_mass, abs(g.values.sum() - signed.sum()) / n)
        worst_pix = max(worst_pix, float(np.abs(g.values - _tent_oracle(batch, B, geo)).max()) / n)
        b0, w = temporal_weights(batch["t"], int(batch["t"][0]), int(batch["t"][-1]), B)
        upper_ok = (w == 0) | (b0 + 1 < B)
        total_w = np.where(upper_ok, (1 - w) + w, np.nan)
        worst_w = max(worst_w, float(np.nanmax(np.abs(total_w - 1.0))) if upper_ok.all() else np.inf)
    dt = time.perf_counter() - t0
    ok = worst_mass <= 1e-6 and worst_pix <= 1e-6 and worst_w <= 1e-12 and dt < 10
    acceptance(
        "9 voxel grids", ok, f"mass err/count {worst_mass:.1e}, per-pixel err/count {worst_pix:.1e}, "
        f"weight-sum err {worst_w:.1e}, {dt:.1f} s"
    )
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_curve_shape(acceptance, tmp_path, capsys):
    grid = [100, 500, 1000, 5000, 20000, 100000]
    out = tmp_path / "flow_bench.csv"
    t0 = time.perf_counter()
    code = cli.main(["bench", "--algorithm", "flow", "--R", "365600", "--N", *map(str, grid),
                     "--repetitions", "9", "--prime", "20000", "-o", str(out)])
    printed = capsys.readouterr().out
    dt = time.perf_counter() - t0
    rows = sorted(read_report(out.read_text()), key=lambda r: r["N"]) if code == 0 else []
    total = [r["L_total"] for r in rows]
    buf = [r["L_buffer"] for r in rows]
    if len(total) == len(grid):
        k = int(np.argmin(total))
        interior = total[k] < total[0] and total[k] < total[-1]
        increasing = all(a < b for a, b in zip(buf, buf[1:]))
        curve = " ".join(f"N={int(r['N'])}:{r['L_total']:.3f}" for r in rows)
    else:
        interior = increasing = False
        curve = f"bench exit code {code}"
    ok = interior and increasing
    acceptance("10 curve shape", ok, f"{curve}; interior minimum={interior}, L_buffer increasing={increasing}, {dt:.0f} s")
    assert "argmin N=" in printed
    assert ok


# ---------------------------------------------------------------- 11


def test_criterion_11_frames_per_second(acceptance):
    t0 = time.perf_counter()
    ev = burst_stream()  # 1 s at 100 kev/s, 1.5 s at 500 kev/s, 1 s at 100 kev/s
    a = frames_per_second_trace(ev, 5000)
    b = frames_per_second_trace(ev, 10_000)
    uniform = [0, 3]  # seconds lying wholly inside a quiet phase
    doubled = all(a.counts[s] == 2 * b.counts[s] for s in uniform)
    peak = int(np.argmax(a.counts)) in (1, 2) and int(np.argmax(b.counts)) in (1, 2)
    dt = time.perf_counter() - t0
    ok = doubled and peak and dt < 10
    acceptance(
        "11 frames per second", ok,
        f"N=5000 {a.counts.tolist()} vs N=10000 {b.counts.tolist()}, exact 2x in quiet seconds={doubled}, "
        f"burst peak={peak}, {dt:.1f} s",
    )
    assert ok
