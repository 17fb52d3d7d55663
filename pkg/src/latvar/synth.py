"""Synthetic latency traces with known ground truth.

Each frame draws a proposal (or lane-pixel) count from a scenario-dependent
rate, turns it into post-processing time through the regression being
studied, and adds Gaussian noise. The other stages come from a Gaussian
remainder split 5/10/85 across read/pre-process/inference, optionally
scaled by a linear slowdown over the run.
"""

from __future__ import annotations

import hashlib
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError
from .kvfile import format_kv, get_float, get_int, read_kv
from .trace import TraceRecord, TraceSet, format_trace

STAGE_SPLIT = (0.05, 0.10, 0.85)
DETECTION_FRACTION = 0.05


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    frames: int
    coefficients: tuple[float, ...]
    mu_r_ms: float
    sigma_r_ms: float = 0.0
    noise_sigma_ms: float = 0.0
    rate: float | None = None
    scenario_rates: tuple[tuple[str, float], ...] = ()
    constant_count: int | None = None
    drift: float | None = None
    seed: int = 0
    model_tag: str = "synthetic"
    scenario_tag: str = "default"
    period_ms: float = 100.0

    def __post_init__(self) -> None:
        if self.kind not in ("od", "ld"):
            raise DataError(f"kind must be 'od' or 'ld', got {self.kind!r}")
        need = 2 if self.kind == "od" else 3
        if len(self.coefficients) != need:
            raise DataError(f"{self.kind} needs {need} coefficients")
        if self.frames < 1:
            raise DataError("frames must be >= 1")
        if self.sigma_r_ms < 0 or self.noise_sigma_ms < 0:
            raise DataError("sigma values must be >= 0")
        if self.mu_r_ms < 0:
            raise DataError("mu_r must be >= 0")
        processes = sum(x is not None and x != () for x in (self.rate, self.scenario_rates, self.constant_count))
        if processes != 1:
            raise DataError("give exactly one of rate, scenario_rates, constant_count")
        if self.rate is not None and not self.rate > 0:
            raise DataError("rate must be > 0")
        if any(not r > 0 for _, r in self.scenario_rates):
            raise DataError("scenario rates must be > 0")
        if self.constant_count is not None and self.constant_count < 0:
            raise DataError("constant_count must be >= 0")
        if self.drift is not None and self.drift <= -1:
            raise DataError("drift must be > -1")

    def to_kv(self, include_seed: bool = True) -> dict[str, str]:
        items: dict[str, str] = {"kind": self.kind, "frames": str(self.frames)}
        names = ("alpha0", "alpha1") if self.kind == "od" else ("beta0", "beta1", "beta2")
        for name, value in zip(names, self.coefficients):
            items[name] = repr(float(value))
        items["mu_r"] = repr(float(self.mu_r_ms))
        items["sigma_r"] = repr(float(self.sigma_r_ms))
        items["noise_sigma"] = repr(float(self.noise_sigma_ms))
        if self.rate is not None:
            items["rate"] = repr(float(self.rate))
        if self.scenario_rates:
            items["rates"] = ";".join(f"{s}:{r!r}" for s, r in self.scenario_rates)
        if self.constant_count is not None:
            items["constant_count"] = str(self.constant_count)
        if self.drift is not None:
            items["drift"] = repr(float(self.drift))
        items["model_tag"] = self.model_tag
        items["scenario_tag"] = self.scenario_tag
        items["period_ms"] = repr(float(self.period_ms))
        if include_seed:
            items["seed"] = str(self.seed)
        return items

    def spec_hash(self) -> str:
        text = format_kv(self.to_kv(include_seed=False))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SynthResult:
    trace: TraceSet
    clamped: int = 0
    drift_factors: np.ndarray = field(default_factory=lambda: np.ones(0), compare=False)


def _rates_per_frame(spec: GeneratorSpec) -> tuple[np.ndarray | None, list[str]]:
    if spec.scenario_rates:
        # contiguous, equally sized blocks in the given scenario order
        n_sc = len(spec.scenario_rates)
        block = np.minimum(np.arange(spec.frames) * n_sc // spec.frames, n_sc - 1)
        rates = np.array([spec.scenario_rates[b][1] for b in block])
        tags = [spec.scenario_rates[b][0] for b in block]
        return rates, tags
    tags = [spec.scenario_tag] * spec.frames
    if spec.rate is not None:
        return np.full(spec.frames, float(spec.rate)), tags
    return None, tags


def generate_detailed(spec: GeneratorSpec) -> SynthResult:
    rng = np.random.Generator(np.random.PCG64(spec.seed & (2**64 - 1)))
    n = spec.frames
    rates, tags = _rates_per_frame(spec)
    if rates is None:
        counts = np.full(n, spec.constant_count, dtype=np.int64)
    else:
        counts = rng.poisson(rates)
    noise = rng.normal(0.0, spec.noise_sigma_ms, size=n)
    remainder = rng.normal(spec.mu_r_ms, spec.sigma_r_ms, size=n)
    detections = rng.binomial(counts, DETECTION_FRACTION)

    c = counts.astype(float)
    if spec.kind == "od":
        a0, a1 = spec.coefficients
        post = a1 * c + a0
    else:
        b0, b1, b2 = spec.coefficients
        post = b2 * c * c + b1 * c + b0
    post = post + noise
    if spec.drift is None or n == 1:
        factors = np.ones(n)
    else:
        factors = 1.0 + spec.drift * np.arange(n) / (n - 1)

    clamped = int(np.count_nonzero(post < 0) + np.count_nonzero(remainder < 0))
    post = np.maximum(post, 0.0)
    remainder = np.maximum(remainder, 0.0) * factors
    if clamped:
        warnings.warn(f"{clamped} negative synthetic stage time(s) clamped to 0", RuntimeWarning, stacklevel=2)

    count_field = "n_proposals" if spec.kind == "od" else "n_lane_pixels"
    records = []
    for i in range(n):
        records.append(
            TraceRecord(
                frame_id=i,
                timestamp_ms=i * spec.period_ms,
                t_read_ms=STAGE_SPLIT[0] * remainder[i],
                t_pre_ms=STAGE_SPLIT[1] * remainder[i],
                t_infer_ms=STAGE_SPLIT[2] * remainder[i],
                t_post_ms=post[i],
                n_detections=int(detections[i]),
                model_tag=spec.model_tag,
                scenario_tag=tags[i],
                **{count_field: int(counts[i])},
            )
        )
    return SynthResult(TraceSet(tuple(records)), clamped, factors)


def generate(spec: GeneratorSpec) -> TraceSet:
    return generate_detailed(spec).trace


# -- presets -------------------------------------------------------------

PRESETS: dict[str, GeneratorSpec] = {
    # two-stage detector at Faster R-CNN magnitudes: mean end-to-end ~320 ms
    "faster-rcnn": GeneratorSpec(
        kind="od", frames=600, coefficients=(12.0, 0.3), mu_r_ms=208.0, sigma_r_ms=1.0,
        noise_sigma_ms=1.0, scenario_rates=(("city", 550.0), ("residential", 300.0), ("road", 150.0)),
        model_tag="faster-rcnn",
    ),
    # lane detector with scenario-dependent lane pixel counts
    "lane-quadratic": GeneratorSpec(
        kind="ld", frames=600, coefficients=(2.0, 0.01, 1e-5), mu_r_ms=40.0, sigma_r_ms=1.0,
        noise_sigma_ms=2.0, scenario_rates=(
            ("city", 3000.0), ("residential", 1500.0), ("road", 600.0), ("rain-100", 150.0),
        ),
        model_tag="lanenet",
    ),
    # post-processing barely coupled to proposals
    "weak-coupling": GeneratorSpec(
        kind="od", frames=600, coefficients=(20.0, 0.058), mu_r_ms=200.0, sigma_r_ms=1.0,
        noise_sigma_ms=2.0, rate=300.0, model_tag="mask-rcnn", scenario_tag="city",
    ),
    # one-stage detector: fixed-size output, post time independent of proposals
    "one-stage": GeneratorSpec(
        kind="od", frames=600, coefficients=(15.0, 0.0), mu_r_ms=150.0, sigma_r_ms=4.0,
        noise_sigma_ms=2.0, rate=300.0, model_tag="yolov3", scenario_tag="city",
    ),
    # proposal rates fall as rain intensifies
    "rain-sweep": GeneratorSpec(
        kind="od", frames=2400, coefficients=(12.0, 0.3), mu_r_ms=218.0, sigma_r_ms=1.0,
        noise_sigma_ms=1.0,
        scenario_rates=(("rain-0", 300.0), ("rain-50", 220.0), ("rain-100", 160.0), ("rain-200", 100.0)),
        model_tag="faster-rcnn",
    ),
}


def preset(name: str, **overrides) -> GeneratorSpec:
    try:
        base = PRESETS[name]
    except KeyError:
        raise DataError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


def _parse_rates(text: str) -> tuple[tuple[str, float], ...]:
    out = []
    for part in text.split(";"):
        tag, sep, rate = part.partition(":")
        if not sep:
            raise ConfigError(f"bad scenario rate {part!r}; expected tag:rate")
        try:
            out.append((tag.strip(), float(rate)))
        except ValueError:
            raise ConfigError(f"bad rate in {part!r}") from None
    return tuple(out)


def spec_from_kv(cfg: Mapping[str, str], seed: int | None = None) -> GeneratorSpec:
    """Build a spec from key=value pairs; ``preset=<name>`` supplies defaults."""
    cfg = dict(cfg)
    known = {
        "preset", "kind", "frames", "alpha0", "alpha1", "beta0", "beta1", "beta2", "mu_r",
        "sigma_r", "noise_sigma", "rate", "rates", "constant_count", "drift", "model_tag",
        "scenario_tag", "period_ms", "seed",
    }
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown generator key {unknown[0]!r}")
    base = preset(cfg.pop("preset")).to_kv() if "preset" in cfg else {}
    if any(k in cfg for k in ("rate", "rates", "constant_count")):
        for k in ("rate", "rates", "constant_count"):
            base.pop(k, None)
    if "kind" in cfg and base.get("kind") not in (None, cfg["kind"]):
        for k in ("alpha0", "alpha1", "beta0", "beta1", "beta2"):
            base.pop(k, None)
    merged = {**base, **cfg}
    try:
        kind = merged["kind"]
    except KeyError:
        raise ConfigError("generator spec lacks 'kind'") from None
    names = ("alpha0", "alpha1") if kind == "od" else ("beta0", "beta1", "beta2")
    try:
        spec = GeneratorSpec(
            kind=kind,
            frames=get_int(merged, "frames"),
            coefficients=tuple(get_float(merged, k) for k in names),
            mu_r_ms=get_float(merged, "mu_r"),
            sigma_r_ms=get_float(merged, "sigma_r", 0.0),
            noise_sigma_ms=get_float(merged, "noise_sigma", 0.0),
            rate=get_float(merged, "rate") if "rate" in merged else None,
            scenario_rates=_parse_rates(merged["rates"]) if "rates" in merged else (),
            constant_count=get_int(merged, "constant_count") if "constant_count" in merged else None,
            drift=get_float(merged, "drift") if "drift" in merged else None,
            seed=seed if seed is not None else get_int(merged, "seed", 0),
            model_tag=merged.get("model_tag", "synthetic"),
            scenario_tag=merged.get("scenario_tag", "default"),
            period_ms=get_float(merged, "period_ms", 100.0),
        )
    except DataError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return spec


def load_spec(path: str | os.PathLike, seed: int | None = None) -> GeneratorSpec:
    return spec_from_kv(read_kv(path), seed)


# -- LaneNet-shaped deadline fixture -------------------------------------------

LANENET_FRAMES = 1000
LANENET_TAIL = 40
LANENET_MAX_MS = 340.0
LANENET_BODY = (58.0, 155.0)


def _lane_pixels_for(post_ms: float, beta=(2.0, 0.01, 1e-5)) -> int:
    b0, b1, b2 = beta
    disc = b1 * b1 - 4.0 * b2 * (b0 - post_ms)
    if post_ms <= b0 or disc <= 0:
        return 0
    return int(round((-b1 + math.sqrt(disc)) / (2.0 * b2)))


def make_lanenet_fixture(seed: int = 1) -> TraceSet:
    """1000-frame lane-detection trace shaped like the LaneNet measurements.

    A tight lognormal body (96% of frames, clipped to 58..155 ms) plus a
    scripted tail of 40 frames evenly spread from 170 ms up to 340 ms, placed
    at random positions. The 95th percentile stays under 160 ms, the
    maximum is 340 ms and the mean lands near 82 ms.
    """
    rng = np.random.Generator(np.random.PCG64(seed & (2**64 - 1)))
    n_body = LANENET_FRAMES - LANENET_TAIL
    body = np.clip(rng.lognormal(math.log(72.0), 0.22, size=n_body), *LANENET_BODY)
    tail = np.linspace(170.0, LANENET_MAX_MS, LANENET_TAIL)
    e2e = np.concatenate([body, tail])
    e2e = e2e[rng.permutation(LANENET_FRAMES)]
    remaining = rng.normal(38.0, 0.5, size=LANENET_FRAMES)
    records = []
    for i in range(LANENET_FRAMES):
        r = remaining[i]
        post = e2e[i] - r
        records.append(
            TraceRecord(
                frame_id=i,
                timestamp_ms=i * 100.0,
                t_read_ms=STAGE_SPLIT[0] * r,
                t_pre_ms=STAGE_SPLIT[1] * r,
                t_infer_ms=STAGE_SPLIT[2] * r,
                t_post_ms=post,
                n_lane_pixels=_lane_pixels_for(post),
                n_detections=int(rng.integers(2, 5)),
                model_tag="lanenet",
                scenario_tag="city",
            )
        )
    return TraceSet(tuple(records))


# -- shipped fixtures ------------------------------------------------------------

FIXTURES = {
    "synthetic_od_600.csv": ("faster-rcnn", 42),
    "synthetic_ld_600.csv": ("lane-quadratic", 43),
    "lanenet_fixture.csv": ("lanenet", 1),
}

_LANENET_HASH = hashlib.sha256(
    f"lanenet frames={LANENET_FRAMES} tail={LANENET_TAIL} max={LANENET_MAX_MS} body={LANENET_BODY}".encode()
).hexdigest()[:16]


def fixture_trace(name: str) -> tuple[TraceSet, int, str]:
    preset_name, seed = FIXTURES[name]
    if preset_name == "lanenet":
        return make_lanenet_fixture(seed), seed, _LANENET_HASH
    spec = preset(preset_name, seed=seed)
    return generate(spec), seed, spec.spec_hash()


def fixture_texts() -> dict[str, str]:
    """Rendered fixture files plus ``fixtures.manifest``, keyed by file name."""
    out = {}
    manifest = ["name,seed,spec-hash"]
    for name in FIXTURES:
        trace, seed, h = fixture_trace(name)
        out[name] = format_trace(trace)
        manifest.append(f"{name},{seed},{h}")
    out["fixtures.manifest"] = "\n".join(manifest) + "\n"
    return out


def write_fixtures(directory: str | os.PathLike) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    written = []
    for name, text in fixture_texts().items():
        path = os.path.join(directory, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    return written

