"""Parametric 1-to-N topic transport latency model.

Two mechanisms:

``ipc``
    Copy-per-subscriber TCP style. The publisher copies and sends the
    message to subscribers one after another, so subscriber ``i`` waits for
    ``i`` copy+send rounds: ``base + i * (copy + send) * MB``.
``dds``
    UDP + shared memory. Messages up to ``shm_threshold_bytes`` go through
    shared memory at a flat cost. Larger ones are split into 64 KiB
    datagrams; each fragment costs a send and a reassembly. Only
    ``cpu_capacity_links`` subscribers are served at full speed, the rest pay
    ``overload_penalty_factor``.

Jitter is multiplicative, ``(1 + jitter * u)`` with ``u ~ U[-1, 1]``. Each
trial draws from its own substream keyed by ``(seed, trial)``, and draws for
subscriber ``i`` do not depend on how many subscribers exist, so adding
subscribers only ever adds samples.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .errors import ConfigError, DataError
from .kvfile import format_kv, parse_kv, read_kv
from .stats import VariationSummary, summarize

FRAGMENT_BYTES = 65536
MAX_SUBSCRIBERS = 64
MB = float(1 << 20)


@dataclass(frozen=True)
class TransportScenario:
    mechanism: str
    message_bytes: int
    n_subscribers: int
    trials: int
    seed: int

    def __post_init__(self) -> None:
        if self.mechanism not in ("ipc", "dds"):
            raise DataError(f"unknown mechanism {self.mechanism!r}")
        if self.message_bytes < 1:
            raise DataError("message_bytes must be >= 1")
        if not 1 <= self.n_subscribers <= MAX_SUBSCRIBERS:
            raise DataError(f"n_subscribers must lie in 1..{MAX_SUBSCRIBERS}, got {self.n_subscribers}")
        if self.trials < 1:
            raise DataError("trials must be >= 1")


@dataclass(frozen=True)
class TransportParams:
    ipc_base_us: float
    ipc_copy_us_per_mb: float
    ipc_send_us_per_mb: float
    ipc_jitter_fraction: float
    dds_shm_threshold_bytes: int
    dds_shm_base_us: float
    dds_fragment_us: float
    dds_reassembly_us_per_fragment: float
    dds_cpu_capacity_links: int
    dds_overload_penalty_factor: float
    dds_jitter_fraction: float
    dds_fragment_bytes: int = FRAGMENT_BYTES

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"{f.name} must be >= 0")
        if self.dds_fragment_bytes != FRAGMENT_BYTES:
            raise ConfigError(f"dds_fragment_bytes is fixed at {FRAGMENT_BYTES}")
        if self.ipc_jitter_fraction > 1 or self.dds_jitter_fraction > 1:
            raise ConfigError("jitter fractions must be <= 1 to keep latencies non-negative")

    @classmethod
    def from_kv(cls, cfg: dict[str, str]) -> "TransportParams":
        kwargs: dict[str, object] = {}
        known = {f.name: f for f in fields(cls)}
        for key, raw in cfg.items():
            if key not in known:
                raise ConfigError(f"unknown transport parameter {key!r}")
            try:
                kwargs[key] = int(raw) if key.endswith(("_bytes", "_links")) else float(raw)
            except ValueError:
                raise ConfigError(f"{key}: bad value {raw!r}") from None
        missing = [n for n, f in known.items() if n not in kwargs and n != "dds_fragment_bytes"]
        if missing:
            raise ConfigError(f"missing transport parameter {missing[0]!r}")
        return cls(**kwargs)

    def to_kv(self) -> str:
        return format_kv({f.name: getattr(self, f.name) for f in fields(self)})


def default_params() -> TransportParams:
    text = resources.files("latvar.data").joinpath("transport_defaults.params").read_text("utf-8")
    return TransportParams.from_kv(parse_kv(text, "transport_defaults.params"))


def load_params(path: str | os.PathLike) -> TransportParams:
    return TransportParams.from_kv(read_kv(path))


def fragment_count(message_bytes: int) -> int:
    return math.ceil(message_bytes / FRAGMENT_BYTES)


def nominal_latency_us(scenario: TransportScenario, params: TransportParams) -> np.ndarray:
    """Jitter-free latency per subscriber, in microseconds."""
    idx = np.arange(1, scenario.n_subscribers + 1, dtype=float)
    if scenario.mechanism == "ipc":
        per_round = (params.ipc_copy_us_per_mb + params.ipc_send_us_per_mb) * scenario.message_bytes / MB
        return params.ipc_base_us + idx * per_round
    if scenario.message_bytes <= params.dds_shm_threshold_bytes:
        return np.full(scenario.n_subscribers, params.dds_shm_base_us)
    f = fragment_count(scenario.message_bytes)
    lat = np.full(scenario.n_subscribers, f * params.dds_fragment_us + f * params.dds_reassembly_us_per_fragment)
    lat[idx > params.dds_cpu_capacity_links] *= params.dds_overload_penalty_factor
    return lat


def _trial_uniforms(seed: int, trial: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed & (2**64 - 1), spawn_key=(trial,))
    return np.random.Generator(np.random.PCG64(ss)).uniform(-1.0, 1.0, size=MAX_SUBSCRIBERS)[:n]


def simulate_transport(
    scenario: TransportScenario, params: TransportParams, jobs: int = 1
) -> np.ndarray:
    """Latency matrix in ms, shape ``(trials, n_subscribers)``."""
    nominal = nominal_latency_us(scenario, params)
    jitter = params.ipc_jitter_fraction if scenario.mechanism == "ipc" else params.dds_jitter_fraction
    n = scenario.n_subscribers

    def one(trial: int) -> np.ndarray:
        return _trial_uniforms(scenario.seed, trial, n)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, range(scenario.trials)))
    else:
        rows = [one(t) for t in range(scenario.trials)]
    u = np.vstack(rows)
    return nominal[None, :] * (1.0 + jitter * u) / 1000.0


def compare_mechanisms(
    message_bytes: int,
    n_subscribers: int,
    params: TransportParams,
    seed: int,
    trials: int = 200,
    quantiles=(0.5, 0.8, 0.99),
) -> dict[str, VariationSummary]:
    out = {}
    for mech in ("ipc", "dds"):
        sc = TransportScenario(mech, message_bytes, n_subscribers, trials, seed)
        out[f"{mech}_summary"] = summarize(simulate_transport(sc, params).ravel(), quantiles)
    return out


def format_latencies(lat_ms: np.ndarray) -> str:
    lines = ["trial,subscriber,latency_ms"]
    for t, row in enumerate(lat_ms):
        for s, v in enumerate(row, start=1):
            lines.append(f"{t},{s},{v:.6f}")
    return "\n".join(lines) + "\n"
