"""Approximate-time fusion of K perception streams fed by one camera.

The camera stamps frame ``n`` at ``n * period``; stream ``i`` delivers it
after a sampled latency. The synchronizer keeps a bounded queue per
stream (oldest evicted when full) and after every arrival looks for one
entry per queue whose stamp span is within the slop, requiring the new
arrival to be part of it. The tightest such tuple wins (earliest lowest
stamp on ties); it is emitted and everything at or below its stamps is
cleared. Arrivals stamped at or before a stream's last fused stamp are
stale and discarded.

The per-event loop runs in a compiled kernel when the extension is built,
otherwise in an equivalent pure-Python kernel.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import stats
from ..errors import ConfigError, DataError
from ..kvfile import get_float, get_int, read_kv
from . import _sync_py

try:
    from . import _sync_kernel
except ImportError:  # extension not built
    _sync_kernel = None

BACKEND = "compiled" if _sync_kernel is not None else "python"

DEFAULT_QUEUE_SIZE = 100
DEFAULT_SLOP_MS = 100.0


def get_kernel(backend: str = "auto"):
    if backend == "auto":
        backend = BACKEND
    if backend == "compiled":
        if _sync_kernel is None:
            raise RuntimeError("compiled synchronizer kernel is not available")
        return _sync_kernel.run_sync
    if backend == "python":
        return _sync_py.run_sync
    raise ValueError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class LatencyModel:
    """``constant(ms)``, ``gaussian(mu, sigma)``, ``lognormal(mu_log, sigma_log)`` or a cycled trace."""

    kind: str
    params: tuple[float, ...] = ()
    series: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        need = {"constant": 1, "gaussian": 2, "lognormal": 2, "trace": 0}
        if self.kind not in need:
            raise DataError(f"unknown latency model {self.kind!r}")
        if len(self.params) != need[self.kind]:
            raise DataError(f"{self.kind} takes {need[self.kind]} parameter(s)")
        if self.kind == "constant" and self.params[0] < 0:
            raise DataError("constant latency must be >= 0")
        if self.kind in ("gaussian", "lognormal") and self.params[1] < 0:
            raise DataError(f"{self.kind} sigma must be >= 0")
        if self.kind == "trace" and not self.series:
            raise DataError("trace latency model needs a non-empty series")

    @classmethod
    def constant(cls, ms: float) -> "LatencyModel":
        return cls("constant", (float(ms),))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "LatencyModel":
        return cls("gaussian", (float(mu), float(sigma)))

    @classmethod
    def lognormal(cls, mu_log: float, sigma_log: float) -> "LatencyModel":
        return cls("lognormal", (float(mu_log), float(sigma_log)))

    @classmethod
    def from_series(cls, series: Sequence[float]) -> "LatencyModel":
        return cls("trace", (), tuple(float(v) for v in stats.as_series(series)))

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """Draw ``n`` latencies; returns them with the count clamped at 0."""
        if self.kind == "constant":
            return np.full(n, self.params[0]), 0
        if self.kind == "trace":
            s = np.asarray(self.series)
            return s[np.arange(n) % s.size].copy(), 0
        if self.kind == "lognormal":
            return rng.lognormal(self.params[0], self.params[1], size=n), 0
        raw = rng.normal(self.params[0], self.params[1], size=n)
        clamped = int(np.count_nonzero(raw < 0))
        return np.maximum(raw, 0.0), clamped


@dataclass(frozen=True)
class StreamSpec:
    period_ms: float
    latency: LatencyModel

    def __post_init__(self) -> None:
        if not self.period_ms > 0:
            raise DataError("period_ms must be > 0")


@dataclass(frozen=True)
class SyncConfig:
    k_streams: int
    queue_size: int = DEFAULT_QUEUE_SIZE
    slop_ms: float = DEFAULT_SLOP_MS
    duration_ms: float = 10_000.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_streams < 2:
            raise DataError("k_streams must be >= 2")
        if self.queue_size < 1:
            raise DataError("queue_size must be >= 1")
        if not self.slop_ms > 0:
            raise DataError("slop_ms must be > 0")
        if not self.duration_ms > 0:
            raise DataError("duration_ms must be > 0")


@dataclass(frozen=True)
class FusionResult:
    fusion_count: int
    emit_times_ms: np.ndarray
    inter_fusion_delays_ms: np.ndarray
    spans_ms: np.ndarray
    fused_stamps_ms: np.ndarray
    dropped_per_stream: tuple[int, ...]
    stale_per_stream: tuple[int, ...]
    superseded_per_stream: tuple[int, ...]
    delivered_per_stream: tuple[int, ...]
    clamped_per_stream: tuple[int, ...]
    worst_delay_ms: float
    backend: str = field(default="python", compare=False)


def build_events(config: SyncConfig, streams: Sequence[StreamSpec]):
    """Arrival events in processing order plus per-stream delivery/clamp counts."""
    seqs = np.random.SeedSequence(config.seed & (2**64 - 1)).spawn(len(streams))
    times, stamps, ids = [], [], []
    delivered, clamped = [], []
    for i, (spec, ss) in enumerate(zip(streams, seqs)):
        n_frames = math.ceil(config.duration_ms / spec.period_ms)
        if n_frames < 10:
            raise DataError(
                f"stream {i}: duration covers {n_frames} frames, need at least 10"
            )
        stamp = np.arange(n_frames) * spec.period_ms
        lat, c = spec.latency.sample(n_frames, np.random.Generator(np.random.PCG64(ss)))
        times.append(stamp + lat)
        stamps.append(stamp)
        ids.append(np.full(n_frames, i, dtype=np.int64))
        delivered.append(n_frames)
        clamped.append(c)
    t = np.concatenate(times)
    x = np.concatenate(stamps)
    s = np.concatenate(ids)
    # equal arrival times: lower stream index first, then lower stamp
    order = np.lexsort((x, s, t))
    return t[order], x[order], s[order], tuple(delivered), tuple(clamped)


def simulate_fusion(
    config: SyncConfig, streams: Sequence[StreamSpec], backend: str = "auto"
) -> FusionResult:
    if len(streams) != config.k_streams:
        raise DataError(f"config has k_streams={config.k_streams} but {len(streams)} streams given")
    t, x, s, delivered, clamped = build_events(config, streams)
    kernel = get_kernel(backend)
    emit, spans, chosen, evicted, stale, superseded = kernel(
        t, x, s, config.k_streams, config.queue_size, config.slop_ms
    )
    if spans.size and spans.max() > config.slop_ms:
        raise AssertionError("synchronizer emitted a tuple wider than the slop")
    delays = np.diff(emit)
    return FusionResult(
        fusion_count=int(emit.size),
        emit_times_ms=emit,
        inter_fusion_delays_ms=delays,
        spans_ms=spans,
        fused_stamps_ms=chosen,
        dropped_per_stream=tuple(int(v) for v in evicted),
        stale_per_stream=tuple(int(v) for v in stale),
        superseded_per_stream=tuple(int(v) for v in superseded),
        delivered_per_stream=delivered,
        clamped_per_stream=clamped,
        worst_delay_ms=float(delays.max()) if delays.size else 0.0,
        backend=backend if backend != "auto" else BACKEND,
    )


def format_fusion(result: FusionResult) -> str:
    lines = ["fusion_index,emit_time_ms,inter_fusion_delay_ms,span_ms"]
    for i, (t, span) in enumerate(zip(result.emit_times_ms, result.spans_ms)):
        delay = "" if i == 0 else f"{result.inter_fusion_delays_ms[i - 1]:.6f}"
        lines.append(f"{i},{t:.6f},{delay},{span:.6f}")

    def join(xs):
        return ";".join(str(v) for v in xs)

    lines += [
        f"# fusion_count={result.fusion_count}",
        f"# worst_delay_ms={result.worst_delay_ms:.6f}",
        f"# dropped_per_stream={join(result.dropped_per_stream)}",
        f"# stale_per_stream={join(result.stale_per_stream)}",
        f"# superseded_per_stream={join(result.superseded_per_stream)}",
        f"# delivered_per_stream={join(result.delivered_per_stream)}",
        f"# clamped_per_stream={join(result.clamped_per_stream)}",
    ]
    return "\n".join(lines) + "\n"


def parse_latency(text: str, base_dir: str | None = None) -> LatencyModel:
    """Parse ``constant:10``, ``gaussian:50,5``, ``lognormal:4,0.8`` or ``trace:<file>[:column]``."""
    kind, _, rest = text.partition(":")
    if kind == "trace":
        path, _, column = rest.partition(":")
        if not path:
            raise ConfigError("trace latency needs a file path")
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        from ..trace import ingest_trace

        return LatencyModel.from_series(ingest_trace(path).column(column or "end_to_end"))
    try:
        params = tuple(float(v) for v in rest.split(",")) if rest else ()
    except ValueError:
        raise ConfigError(f"bad latency parameters in {text!r}") from None
    try:
        return LatencyModel(kind, params)
    except DataError as exc:
        raise ConfigError(f"latency {text!r}: {exc}") from None


def load_fusion_config(path: str | os.PathLike, seed: int) -> tuple[SyncConfig, list[StreamSpec]]:
    """Read a key=value fusion config.

    Keys: ``k_streams``, ``queue_size``, ``slop_ms``, ``duration_ms`` and per
    stream ``stream.<i>.period_ms`` / ``stream.<i>.latency``. A top-level
    ``period_ms`` is the default for every stream.
    """
    cfg = read_kv(path)
    base = os.path.dirname(os.fspath(path))
    k = get_int(cfg, "k_streams")
    known = {"k_streams", "queue_size", "slop_ms", "duration_ms", "period_ms"}
    for key in cfg:
        if key in known:
            continue
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "stream" or parts[2] not in ("period_ms", "latency"):
            raise ConfigError(f"unknown fusion config key {key!r}")
        if not parts[1].isdigit() or int(parts[1]) >= k:
            raise ConfigError(f"stream index out of range in {key!r}")
    try:
        config = SyncConfig(
            k_streams=k,
            queue_size=get_int(cfg, "queue_size", DEFAULT_QUEUE_SIZE),
            slop_ms=get_float(cfg, "slop_ms", DEFAULT_SLOP_MS),
            duration_ms=get_float(cfg, "duration_ms"),
            seed=seed,
        )
        default_period = cfg.get("period_ms")
        streams = []
        for i in range(k):
            period = cfg.get(f"stream.{i}.period_ms", default_period)
            if period is None:
                raise ConfigError(f"stream {i}: no period_ms")
            lat = cfg.get(f"stream.{i}.latency")
            if lat is None:
                raise ConfigError(f"stream {i}: no latency")
            streams.append(StreamSpec(float(period), parse_latency(lat, base)))
    except DataError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config, streams
