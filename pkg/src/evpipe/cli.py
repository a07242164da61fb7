"""``evpipe`` command line: one binary, one subcommand per stage or experiment.

Exit codes: 0 ok, 1 I/O failure, 2 usage error, 3 runtime failure.
Settings compose as defaults < ``--config FILE`` < explicit flags, and the
effective settings are echoed to ``<output>.config`` next to the main output.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bench import ALGORITHMS, burst_stream, gesture_stream, make_algorithm
from .core import EvpipeError, SensorGeometry, compute_event_rate, stream_geometry, validate_stream
from .filtering import FilterConfig, apply_chain, resolve_hot_pixels
from .flow import FLOW_DTYPE, FlowConfig, FlowProcessor, dominant_direction, flow_image, summarize, write_ppm
from .hots import (
    HotsConfig,
    PrototypeBank,
    knn_classify,
    read_signatures_csv,
    signature,
    train_gesture_model,
    write_signatures_csv,
)
from .ingest import (
    GESTURE_DIRECTIONS,
    InvalidSpec,
    PacketError,
    ParseError,
    SeqGap,
    SyntheticSpec,
    read_stream,
    synthesize,
    synthesize_gesture,
    write_stream,
)
from .latency import CameraCost, sweep
from .pipeline import LiveView, run_pipeline, write_pgm
from .representations import LeakyIntegrator, VoxelProcessor, frames_per_second_trace, grid_preview, voxel_grid

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# run configuration

_SECTIONS = {"filter": FilterConfig, "flow": FlowConfig, "hots": HotsConfig}
_SKIP = {"hot_pixels"}  # not expressible as a single key


@dataclass
class RunConfig:
    geometry: SensorGeometry = SensorGeometry()
    seed: int = 0
    buffer_size: int = 5000
    buffer_model: str = "paper"
    single_thread: bool = False
    lam_cam: float = 1.6016e-6  # s per event; only used by bench
    bins: int = 5
    filter: FilterConfig = FilterConfig()
    flow: FlowConfig = FlowConfig()
    hots: HotsConfig = HotsConfig()
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def check(self) -> None:
        ins = {Path(p).resolve() for p in self.inputs}
        for p in self.outputs:
            if Path(p).resolve() in ins:
                raise UsageError(f"output {p} would overwrite an input")
        if self.buffer_size < 1:
            raise UsageError("--buffer-size must be >= 1")
        if self.buffer_model not in ("paper", "mean-wait"):
            raise UsageError(f"unknown buffer model {self.buffer_model!r}")

    def lines(self) -> list[str]:
        out = [
            f"geometry = {self.geometry}",
            f"seed = {self.seed}",
            f"buffer_size = {self.buffer_size}",
            f"buffer_model = {self.buffer_model}",
            f"single_thread = {str(self.single_thread).lower()}",
            f"lam_cam = {self.lam_cam!r}",
            f"bins = {self.bins}",
        ]
        for name in _SECTIONS:
            cfg = getattr(self, name)
            for f in dataclasses.fields(cfg):
                if f.name in _SKIP:
                    continue
                v = getattr(cfg, f.name)
                if isinstance(v, tuple):
                    v = ",".join(str(x) for x in v)
                elif isinstance(v, bool):
                    v = str(v).lower()
                out.append(f"{name}.{f.name} = {v}")
        out += [f"input = {p}" for p in self.inputs] + [f"output = {p}" for p in self.outputs]
        return out

    def write_sidecar(self, output) -> Path:
        path = Path(str(output) + ".config")
        path.write_text("# effective evpipe settings\n" + "\n".join(self.lines()) + "\n")
        return path


def _coerce(value: str, default):
    """Convert a config-file string to the type of ``default``."""
    v = value.strip()
    if isinstance(default, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {value!r}")
    if isinstance(default, tuple):
        return tuple(int(x) for x in v.replace(",", " ").split())
    if isinstance(default, SensorGeometry):
        return SensorGeometry.parse(v)
    if v.lower() in ("none", ""):
        return None
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float) or default is None:
        return float(v)
    return v


def read_config_file(path) -> dict[str, str]:
    """INI-style ``key = value`` lines with ``#`` comments; no section headers needed."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[evpipe]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    return dict(parser["evpipe"])


def _lookup(key: str) -> tuple[str, str] | None:
    """Map a bare or dotted config key onto (section, field)."""
    if "." in key:
        sec, name = key.split(".", 1)
        return (sec, name) if sec in _SECTIONS else None
    for sec, cls in _SECTIONS.items():
        if key in {f.name for f in dataclasses.fields(cls)}:
            return sec, key
    return None


def build_config(args: argparse.Namespace) -> RunConfig:
    try:
        return _build_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    sub: dict[str, dict] = {name: {} for name in _SECTIONS}
    base = RunConfig()
    if getattr(args, "config", None):
        for key, raw in read_config_file(args.config).items():
            if key in ("geometry", "seed", "buffer_size", "buffer_model", "single_thread", "lam_cam", "bins"):
                values[key] = _coerce(raw, getattr(base, key))
                continue
            hit = _lookup(key)
            if hit is None or hit[1] in _SKIP:
                raise UsageError(f"unknown config key {key!r}")
            sec, name = hit
            default = {f.name: f.default for f in dataclasses.fields(_SECTIONS[sec])}[name]
            sub[sec][name] = _coerce(raw, default)
    # flags win over the file
    for key in ("seed", "buffer_size", "buffer_model", "lam_cam", "bins"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "geometry", None):
        values["geometry"] = SensorGeometry.parse(args.geometry)
    if getattr(args, "single_thread", False):
        values["single_thread"] = True
    for sec, cls in _SECTIONS.items():
        for f in dataclasses.fields(cls):
            v = getattr(args, f"{sec}_{f.name}", None)
            if v is not None:
                sub[sec][f.name] = v
    try:
        return RunConfig(**values, **{sec: cls(**sub[sec]) for sec, cls in _SECTIONS.items()})
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# helpers


def _load(path, cfg: RunConfig):
    return read_stream(path)


def _rate_text(events) -> str:
    try:
        return f"{compute_event_rate(events).r:.1f} ev/s"
    except EvpipeError:
        return "n/a"


def _geometry_for(events, cfg: RunConfig, explicit: bool) -> SensorGeometry:
    """The configured geometry, or the bounding box when the stream outgrows the default one."""
    if explicit or len(events) == 0:
        return cfg.geometry
    box = stream_geometry(events, None)
    if box.width <= cfg.geometry.width and box.height <= cfg.geometry.height:
        return cfg.geometry
    return box


def _dataset(root: Path) -> list[tuple[Path, str]]:
    items = []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(label_dir.iterdir()):
            if f.suffix in (".evp", ".csv"):
                items.append((f, label_dir.name))
    if not items:
        raise UsageError(f"{root}: expected <label>/*.evp files")
    return items


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg: RunConfig) -> int:
    cfg.outputs = [args.output]
    cfg.check()
    t0 = time.perf_counter()
    if args.kind == "gesture":
        if args.direction not in GESTURE_DIRECTIONS:
            raise UsageError(f"--direction must be one of {', '.join(GESTURE_DIRECTIONS)}")
        events, _ = synthesize_gesture(args.direction, cfg.geometry, seed=cfg.seed, duration=args.duration or 0.6)
    else:
        kind = {"bar": "translating_bar", "blob": "moving_blob", "noise": "poisson_noise"}[args.kind]
        spec = SyntheticSpec(
            kind=kind,
            geometry=cfg.geometry,
            velocity=(args.vx, args.vy),
            rate=args.rate,
            duration=args.duration or 1.0,
            seed=cfg.seed,
            length=args.length,
            thickness=args.thickness,
            angle_deg=args.angle,
            radius=args.radius,
            noise_rate=args.noise_rate,
        )
        try:
            spec.validate()
        except InvalidSpec as exc:
            raise UsageError(str(exc)) from exc
        events, _ = synthesize(spec)
    write_stream(args.output, events)
    cfg.write_sidecar(args.output)
    print(f"synth: {len(events)} events, rate {_rate_text(events)}, wrote {args.output} ({time.perf_counter() - t0:.3f} s)")
    return EXIT_OK


def cmd_info(args, cfg: RunConfig) -> int:
    data = _load(args.input, cfg)
    ev = data.events
    geo = _geometry_for(ev, cfg, bool(args.geometry))
    span = (int(ev["t"][-1]) - int(ev["t"][0])) / 1e6 if len(ev) else 0.0
    bad = validate_stream(ev, geo) if len(ev) else []
    on = int((ev["p"] == 1).sum())
    print(f"file: {args.input}")
    print(f"geometry: {geo}")
    if len(ev):
        print(f"bounding_box: {stream_geometry(ev, None)}")
    print(f"events: {len(ev)} ({on} on, {len(ev) - on} off)")
    print(f"packets: {len(data.boundaries)}")
    print(f"duration_s: {span:.6f}")
    print(f"mean_rate: {_rate_text(ev)}")
    print(f"violations: {len(bad)}")
    return EXIT_OK


def cmd_filter(args, cfg: RunConfig) -> int:
    cfg.inputs, cfg.outputs = [args.input], [args.output]
    cfg.check()
    ev = _load(args.input, cfg).events
    geo = _geometry_for(ev, cfg, bool(args.geometry))
    t0 = time.perf_counter()
    out, stats = apply_chain(ev, cfg.filter, geo)
    dt = time.perf_counter() - t0
    write_stream(args.output, out)
    cfg.write_sidecar(args.output)
    stages = " ".join(f"{k}={v}" for k, v in stats.removed_by_stage.items())
    print(
        f"filter: {stats.input_count} -> {stats.output_count} events "
        f"(kept {stats.kept_fraction:.1%}; removed {stages}) in {dt:.3f} s"
    )
    return EXIT_OK


def cmd_flow(args, cfg: RunConfig) -> int:
    cfg.inputs, cfg.outputs = [args.input], [p for p in (args.output, args.image) if p]
    cfg.check()
    data = _load(args.input, cfg)
    geo = _geometry_for(data.events, cfg, bool(args.geometry))
    proc = FlowProcessor(geo, cfg.flow)
    filt = None if args.no_filter else resolve_hot_pixels(cfg.filter, data.events, geo)
    t0 = time.perf_counter()
    run = run_pipeline(data, filt, cfg.buffer_size, proc, geometry=geo, single_thread=cfg.single_thread)
    dt = time.perf_counter() - t0
    parts = [r for r in run.results if len(r)]
    result = np.concatenate(parts) if parts else np.zeros(0, dtype=FLOW_DTYPE)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(",".join(FLOW_DTYPE.names) + "\n")
            for row in result.tolist():
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
        cfg.write_sidecar(args.output)
    if args.image:
        write_ppm(args.image, flow_image(result, geo))
    s = summarize(result)
    direction = dominant_direction(result) if s.get("ok", 0) else float("nan")
    print(
        f"flow: {run.events_in} in, {run.events_filtered} after filtering, {s.get('ok', 0)} valid flows, "
        f"median speed {s.get('median_speed', float('nan')):.1f} px/s, direction {direction:.1f} deg, "
        f"{run.batches_emitted} batches of {cfg.buffer_size} in {dt:.3f} s"
    )
    return EXIT_OK


def cmd_gesture_train(args, cfg: RunConfig) -> int:
    root = Path(args.dataset)
    if not root.is_dir():
        raise FileNotFoundError(f"{root}: not a directory")
    cfg.outputs = [args.bank, args.signatures]
    cfg.check()
    items = _dataset(root)
    labelled = [(read_stream(p).events, lab) for p, lab in items]
    filt = None if args.no_filter else cfg.filter
    t0 = time.perf_counter()
    model = train_gesture_model(labelled, cfg.hots, filt, cfg.seed, cfg.geometry)
    model.bank.save(args.bank)
    write_signatures_csv(args.signatures, model.training)
    cfg.write_sidecar(args.bank)
    labels = sorted({lab for _, lab in items})
    print(
        f"gesture-train: {len(items)} recordings, {len(labels)} classes ({', '.join(labels)}), "
        f"K={model.bank.K}, wrote {args.bank} and {args.signatures} in {time.perf_counter() - t0:.3f} s"
    )
    return EXIT_OK


def cmd_gesture_classify(args, cfg: RunConfig) -> int:
    ev = _load(args.input, cfg).events
    bank = PrototypeBank.load(args.bank)
    training = read_signatures_csv(args.signatures)
    hots = dataclasses.replace(cfg.hots, rho=bank.rho, tau=bank.tau, K=bank.K)
    filt = None if args.no_filter else cfg.filter
    # stage 1: surfaces, matching and histogram; stage 2: kNN on the histogram
    t0 = time.perf_counter()
    sig = signature(ev, bank, hots, filt, cfg.geometry)
    t1 = time.perf_counter()
    res = knn_classify(sig, training, hots.k_nn)
    t2 = time.perf_counter()
    print(f"label: {res.label}")
    for lab in sorted(res.class_distances):
        print(f"distance {lab}: {res.class_distances[lab]:.6f}")
    print(f"timing: features {1e3 * (t1 - t0):.3f} ms ({sig.total} events), knn {1e3 * (t2 - t1):.3f} ms")
    return EXIT_OK


def cmd_voxel(args, cfg: RunConfig) -> int:
    out = Path(args.output)
    cfg.inputs, cfg.outputs = [args.input], [str(out)]
    cfg.check()
    data = _load(args.input, cfg)
    geo = _geometry_for(data.events, cfg, bool(args.geometry))
    out.mkdir(parents=True, exist_ok=True)
    backend = LeakyIntegrator(geometry=geo)
    proc = VoxelProcessor(geo, cfg.bins, backend)
    grids = []

    def processor(batch):
        grids.append(voxel_grid(batch, cfg.bins, geo))
        return proc(batch)

    filt = None if args.no_filter else resolve_hot_pixels(cfg.filter, data.events, geo)
    t0 = time.perf_counter()
    run = run_pipeline(data, filt, cfg.buffer_size, processor, geometry=geo, single_thread=cfg.single_thread)
    dt = time.perf_counter() - t0
    for i, frame in enumerate(run.results[: args.max_frames]):
        write_pgm(out / f"frame_{i:05d}.pgm", frame)
        write_pgm(out / f"grid_{i:05d}.pgm", grid_preview(grids[i]))
    trace = frames_per_second_trace(data.events, cfg.buffer_size, cfg.bins)
    trace.write_csv(out / "frames_per_second.csv")
    cfg.write_sidecar(out / "voxel")
    peak = int(trace.counts.max()) if len(trace.counts) else 0
    print(
        f"voxel: {run.batches_emitted} frames from {run.events_filtered} events (B={cfg.bins}, N={cfg.buffer_size}), "
        f"peak {peak} frames/s, {run.partial_discarded} partial batch discarded, {dt:.3f} s"
    )
    return EXIT_OK


def cmd_render(args, cfg: RunConfig) -> int:
    out = Path(args.output)
    cfg.inputs, cfg.outputs = [args.input], [str(out)]
    cfg.check()
    ev = _load(args.input, cfg).events
    geo = _geometry_for(ev, cfg, bool(args.geometry))
    out.mkdir(parents=True, exist_ok=True)
    view = LiveView(geo, args.decay_us, args.frame_rate)
    n = 0
    if len(ev):
        t = ev["t"].astype(np.int64)
        ticks = view.snapshot_times(int(t[0]), int(t[-1]))[: args.max_frames]
        done = 0
        for tick in ticks:
            upto = int(np.searchsorted(t, tick, side="right"))
            view.update(ev[done:upto])
            done = upto
            write_pgm(out / f"live_{n:05d}.pgm", view.snapshot(int(tick)))
            n += 1
    cfg.write_sidecar(out / "render")
    print(f"render: {n} live-view frames at {args.frame_rate:g} Hz into {out}")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    cfg.inputs = [args.input] if args.input else []
    cfg.outputs = [args.output] if args.output else []
    cfg.check()
    N_list = sorted(set(args.N))
    R_list = args.R
    need = args.prime + max(N_list)
    if args.input:
        stream = _load(args.input, cfg).events
        geo = _geometry_for(stream, cfg, bool(args.geometry))
    elif args.algorithm == "voxel":
        geo = cfg.geometry
        stream = burst_stream(geo, base_rate=need, burst_rate=need, quiet_s=0.5, burst_s=0.0, seed=cfg.seed)
    else:
        geo = cfg.geometry
        stream = gesture_stream(need, geo, seed=cfg.seed)
    algo = make_algorithm(args.algorithm, geo, stream, cfg.flow, cfg.hots, bins=cfg.bins, seed=cfg.seed)
    t0 = time.perf_counter()
    try:
        report = sweep(
            algo, stream, R_list, N_list, CameraCost.from_lambda(cfg.lam_cam),
            args.repetitions, args.warmup, cfg.buffer_model, args.prime,
        )
    except (EvpipeError, ValueError) as exc:
        raise RuntimeError(f"profile measurement failed: {exc}") from exc
    dt = time.perf_counter() - t0
    csv_text = report.to_csv()
    if args.output:
        Path(args.output).write_text(csv_text)
        cfg.write_sidecar(args.output)
    else:
        sys.stdout.write(csv_text)
    for R, row in sorted(report.argmin().items()):
        verdict = "real-time" if row.real_time else "not real-time"
        print(f"bench {args.algorithm}: R={R:.0f} ev/s argmin N={row.N} L_total={row.l_total:.4f} ({verdict})")
    print(f"bench: measured {len(N_list)} buffer sizes x {args.repetitions} repetitions in {dt:.1f} s")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, top: bool = False) -> None:
    """Global flags; accepted before the subcommand and after it (the later one wins)."""
    # on subparsers an absent flag must not overwrite a value given before the subcommand
    d = {} if top else {"default": argparse.SUPPRESS}
    g = p.add_argument_group("global options")
    g.add_argument("--geometry", metavar="WxH", help="sensor geometry (default 304x240)", **d)
    g.add_argument("--seed", type=int, help="seed for all randomness", **d)
    g.add_argument("--config", metavar="PATH", help="key = value settings file; flags win", **d)
    g.add_argument("--buffer-size", type=int, dest="buffer_size", metavar="N", help="event buffer size N", **d)
    g.add_argument(
        "--single-thread", action="store_true", dest="single_thread", help="round-robin single-thread pipeline", **d
    )
    g.add_argument("--buffer-model", choices=("paper", "mean-wait"), dest="buffer_model", **d)


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("filter")
    g.add_argument("--refractory-us", type=int, dest="filter_refractory_us")
    g.add_argument("--st-radius", type=int, dest="filter_st_radius")
    g.add_argument("--st-window-us", type=int, dest="filter_st_window_us")
    g.add_argument("--hot-pixel-rate-threshold", type=float, dest="filter_hot_pixel_rate_threshold")
    g.add_argument("--no-filter", action="store_true", help="skip the filter chain")


def _add_flow_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("flow")
    g.add_argument("--fit-radius", type=int, dest="flow_fit_radius")
    g.add_argument("--fit-window-us", type=int, dest="flow_fit_window_us")
    g.add_argument("--min-support", type=int, dest="flow_min_support")
    g.add_argument("--scales", type=lambda s: tuple(int(x) for x in s.split(",")), dest="flow_scale_set")


def _add_hots_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("hots")
    g.add_argument("--rho", type=int, dest="hots_rho")
    g.add_argument("--tau", type=int, dest="hots_tau")
    g.add_argument("--K", type=int, dest="hots_K")
    g.add_argument("--k-nn", type=int, dest="hots_k_nn")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evpipe", description="Event-camera processing pipeline and latency bench.")
    _add_common(parser, top=True)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="write a synthetic event stream")
    p.add_argument("--kind", choices=("bar", "blob", "noise", "gesture"), required=True)
    p.add_argument("--vx", type=float, default=0.0)
    p.add_argument("--vy", type=float, default=0.0)
    p.add_argument("--rate", type=float, default=0.0, help="noise rate (ev/s) for --kind noise")
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--length", type=float, default=None)
    p.add_argument("--thickness", type=float, default=1.0)
    p.add_argument("--angle", type=float, default=0.0, help="bar angle from vertical, degrees")
    p.add_argument("--radius", type=float, default=10.0)
    p.add_argument("--noise-rate", type=float, default=0.0, dest="noise_rate")
    p.add_argument("--direction", default="right", help="gesture direction")
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("info", help="summarise an event file")
    p.add_argument("input")
    _add_common(p)
    p.set_defaults(func=cmd_info)

    p = subs.add_parser("filter", help="denoise an event file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_filter)

    p = subs.add_parser("flow", help="aperture-robust optical flow")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="per-event flow CSV")
    p.add_argument("--image", help="flow visualisation (PPM)")
    _add_common(p)
    _add_filter_flags(p)
    _add_flow_flags(p)
    p.set_defaults(func=cmd_flow)

    p = subs.add_parser("gesture-train", help="learn prototypes and training signatures from DIR/<label>/*.evp")
    p.add_argument("dataset")
    p.add_argument("--bank", required=True)
    p.add_argument("--signatures", required=True)
    _add_common(p)
    _add_filter_flags(p)
    _add_hots_flags(p)
    p.set_defaults(func=cmd_gesture_train)

    p = subs.add_parser("gesture-classify", help="classify one recording")
    p.add_argument("input")
    p.add_argument("--bank", required=True)
    p.add_argument("--signatures", required=True)
    _add_common(p)
    _add_filter_flags(p)
    _add_hots_flags(p)
    p.set_defaults(func=cmd_gesture_classify)

    p = subs.add_parser("voxel", help="voxel grids and leaky-integrator frames per batch")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--bins", type=int, help="temporal bins B")
    p.add_argument("--max-frames", type=int, default=50, dest="max_frames")
    _add_common(p)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_voxel)

    p = subs.add_parser("render", help="live-view bitmaps at display rate")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--frame-rate", type=float, default=60.0, dest="frame_rate")
    p.add_argument("--decay-us", type=int, default=30_000, dest="decay_us")
    p.add_argument("--max-frames", type=int, default=600, dest="max_frames")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = subs.add_parser("bench", help="latency-vs-buffer-size sweep")
    p.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    p.add_argument("--input", help="event file supplying batch content (default: synthetic)")
    p.add_argument("--N", type=int, nargs="+", default=[100, 500, 1000, 5000, 20000, 100000])
    p.add_argument("--R", type=float, nargs="+", default=[365_600.0])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--prime", type=int, default=20_000, help="untimed events fed before timing")
    p.add_argument("--lam-cam", type=float, dest="lam_cam", help="camera cost per event (s)")
    p.add_argument("--bins", type=int)
    p.add_argument("-o", "--output", help="CSV report (default: stdout)")
    _add_common(p)
    _add_flow_flags(p)
    _add_hots_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = build_config(args)
        cfg.check()
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"evpipe: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PacketError, ParseError, SeqGap) as exc:
        print(f"evpipe: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EvpipeError, RuntimeError, ValueError) as exc:
        print(f"evpipe: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
