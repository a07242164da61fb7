"""Event-camera processing pipeline: ingestion, filtering, buffer-gated batching,
a latency model with a benchmark harness, and three processing backends
(aperture-robust optical flow, HOTS gestures, voxel-grid frames)."""

from .core import (
    EVENT_DTYPE,
    Event,
    EventRate,
    EvpipeError,
    SensorGeometry,
    as_events,
    compute_event_rate,
    make_events,
    validate_stream,
)
from .filtering import FilterConfig, FilterStats, apply_chain
from .flow import FlowConfig, compute_flow
from .hots import HotsConfig, PrototypeBank, learn_prototypes, signature
from .ingest import SyntheticSpec, read_stream, synthesize, write_stream
from .latency import CameraCost, ExecProfile, l_buffer, l_cam, l_exec, l_total, sweep
from .pipeline import run_pipeline
from .representations import frames_per_second_trace, voxel_grid

__version__ = "0.1.0"
