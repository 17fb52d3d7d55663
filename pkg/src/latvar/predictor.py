"""Proposal-driven end-to-end latency model.

Post-processing time is regressed on the first-stage proposal count:
linear in proposals ``p`` for two-stage object detectors, quadratic in lane
pixel proposals ``l`` for lane detectors. The rest of the pipeline (read,
pre-process, inference) is a narrow Gaussian around its logged mean
``mu_r``. A calibration factor scales the static prediction for the
runtime conditions of the current machine::

    T_od = lam * (a1 * p + a0 + mu_r)
    T_ld = lam * (b2 * l**2 + b1 * l + b0 + mu_r)
    lam  = mu_r / T_r(current)

``lambda_inverted=True`` uses ``T_r(current) / mu_r`` instead.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    InsufficientDataError,
    SingularFitError,
)
from .kvfile import format_kv, get_float, read_kv
from .trace import TraceSet

OBJECT_DETECTION = "object-detection"
LANE_DETECTION = "lane-detection"
_KIND_ALIASES = {"od": OBJECT_DETECTION, "ld": LANE_DETECTION}

DEFAULT_DECAY = 0.3


@dataclass(frozen=True)
class ODModel:
    alpha0_ms: float
    alpha1_ms_per_proposal: float

    def post_ms(self, p: float) -> float:
        return self.alpha1_ms_per_proposal * p + self.alpha0_ms


@dataclass(frozen=True)
class LDModel:
    beta0_ms: float
    beta1_ms_per_pixel: float
    beta2_ms_per_pixel2: float

    def post_ms(self, l: float) -> float:
        return self.beta2_ms_per_pixel2 * l * l + self.beta1_ms_per_pixel * l + self.beta0_ms


@dataclass(frozen=True)
class RemainderModel:
    mu_r_ms: float
    sigma_r_ms: float


@dataclass(frozen=True)
class CalibrationState:
    lam: float
    ewma_remaining_ms: float
    decay: float = DEFAULT_DECAY

    @classmethod
    def initial(cls, mu_r_ms: float, decay: float = DEFAULT_DECAY) -> "CalibrationState":
        return cls(lam=1.0, ewma_remaining_ms=mu_r_ms, decay=decay)


@dataclass(frozen=True)
class FittedLatencyModel:
    kind: str
    remainder: RemainderModel
    calibration: CalibrationState
    od: ODModel | None = None
    ld: LDModel | None = None

    def __post_init__(self) -> None:
        if self.kind == OBJECT_DETECTION:
            ok = self.od is not None and self.ld is None
        elif self.kind == LANE_DETECTION:
            ok = self.ld is not None and self.od is None
        else:
            raise DataError(f"unknown model kind {self.kind!r}")
        if not ok:
            raise DataError(f"{self.kind} model needs exactly its own coefficient set")

    def static_ms(self, count: float) -> float:
        """Uncalibrated prediction: post-processing regression plus mean remainder."""
        post = self.od.post_ms(count) if self.od is not None else self.ld.post_ms(count)
        return post + self.remainder.mu_r_ms

    def with_calibration(self, state: CalibrationState) -> "FittedLatencyModel":
        return replace(self, calibration=state)


@dataclass(frozen=True)
class FrameResult:
    frame_id: int
    real_ms: float
    pred_ms: float
    abs_err_ms: float


@dataclass(frozen=True)
class EvalReport:
    mean_real_ms: float
    mean_pred_ms: float
    mean_abs_error_ms: float
    accuracy_pct: float
    per_frame: tuple[FrameResult, ...]
    excluded: int = 0


def normalize_kind(kind: str) -> str:
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in (OBJECT_DETECTION, LANE_DETECTION):
        raise DataError(f"unknown model kind {kind!r}")
    return kind


# -- fitting ---------------------------------------------------------------


def fit_od(trace: TraceSet) -> ODModel:
    """Ordinary least squares of post-processing time on proposal count."""
    if trace.m < 2:
        raise InsufficientDataError(f"need at least 2 frames, got {trace.m}")
    p = trace.column("n_proposals")
    t = trace.column("t_post_ms")
    p_mean = p.mean()
    t_mean = t.mean()
    dp = p - p_mean
    sxx = float(dp @ dp)
    if sxx == 0.0:
        raise SingularFitError("n_proposals is constant; slope is not identifiable")
    a1 = float(dp @ (t - t_mean)) / sxx
    a0 = float(t_mean - a1 * p_mean)
    if a1 < 0:
        warnings.warn(f"negative proposal slope {a1:.6g} ms/proposal", RuntimeWarning, stacklevel=2)
    return ODModel(alpha0_ms=a0, alpha1_ms_per_proposal=a1)


def _solve_quadratic_ls(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    # centre and scale so z = (x - c) / s lies in [-1, 1]; keeps the normal
    # matrix well conditioned for pixel counts up to ~1e5
    c = 0.5 * (x.max() + x.min())
    s = 0.5 * (x.max() - x.min())
    z = (x - c) / s
    design = np.column_stack([np.ones_like(z), z, z * z])
    normal = design.T @ design
    rhs = design.T @ y
    if np.linalg.cond(normal) > 1e12:
        raise SingularFitError("quadratic design is rank deficient")
    g0, g1, g2 = np.linalg.solve(normal, rhs)
    # one refinement step on the residual cleans up solve round-off
    resid = y - design @ np.array([g0, g1, g2])
    d0, d1, d2 = np.linalg.solve(normal, design.T @ resid)
    g0, g1, g2 = g0 + d0, g1 + d1, g2 + d2
    # expand g0 + g1 z + g2 z^2 back to powers of x
    b2 = g2 / (s * s)
    b1 = g1 / s - 2.0 * g2 * c / (s * s)
    b0 = g0 - g1 * c / s + g2 * c * c / (s * s)
    return float(b0), float(b1), float(b2)


def fit_ld(trace: TraceSet) -> LDModel:
    """Least-squares quadratic of post-processing time on lane pixel count."""
    if trace.m < 3:
        raise InsufficientDataError(f"need at least 3 frames, got {trace.m}")
    l = trace.column("n_lane_pixels")
    if np.unique(l).size < 3:
        raise SingularFitError("need at least 3 distinct n_lane_pixels values")
    b0, b1, b2 = _solve_quadratic_ls(l, trace.column("t_post_ms"))
    return LDModel(beta0_ms=b0, beta1_ms_per_pixel=b1, beta2_ms_per_pixel2=b2)


def fit_remainder(trace: TraceSet) -> RemainderModel:
    if trace.m < 1:
        raise InsufficientDataError("empty trace")
    r = np.sort(trace.column("remaining"))
    mu = float(r.mean())
    sigma = float(np.sqrt(np.mean((r - mu) ** 2)))
    if mu <= 0:
        raise DataError("mean remaining time must be positive")
    return RemainderModel(mu_r_ms=mu, sigma_r_ms=sigma)


def fit(trace: TraceSet, kind: str, decay: float = DEFAULT_DECAY) -> FittedLatencyModel:
    kind = normalize_kind(kind)
    remainder = fit_remainder(trace)
    calibration = CalibrationState.initial(remainder.mu_r_ms, decay)
    if kind == OBJECT_DETECTION:
        return FittedLatencyModel(kind, remainder, calibration, od=fit_od(trace))
    return FittedLatencyModel(kind, remainder, calibration, ld=fit_ld(trace))


# -- dynamic calibration and prediction --------------------------------------


def update_calibration(
    state: CalibrationState, observed_remaining_ms: float, mu_r_ms: float
) -> CalibrationState:
    if not observed_remaining_ms > 0:
        raise DataError(f"observed remaining time must be > 0, got {observed_remaining_ms}")
    if not 0.0 < state.decay <= 1.0:
        raise DataError(f"decay must lie in (0, 1], got {state.decay}")
    if state.decay == 1.0:
        ewma = float(observed_remaining_ms)
    else:
        ewma = state.decay * observed_remaining_ms + (1.0 - state.decay) * state.ewma_remaining_ms
    return CalibrationState(lam=mu_r_ms / ewma, ewma_remaining_ms=ewma, decay=state.decay)


def predict(
    model: FittedLatencyModel,
    *,
    n_proposals: float | None = None,
    n_lane_pixels: float | None = None,
    lam: float | None = None,
    lambda_inverted: bool = False,
) -> float:
    """Predicted end-to-end latency in ms for one frame.

    ``lam`` overrides the model's calibration factor. Negative raw values
    (extrapolation far outside the fitted range) clamp to 0 with a warning.
    """
    if model.kind == OBJECT_DETECTION:
        if n_proposals is None or n_lane_pixels is not None:
            raise DataError("object-detection model takes n_proposals only")
        count = n_proposals
    else:
        if n_lane_pixels is None or n_proposals is not None:
            raise DataError("lane-detection model takes n_lane_pixels only")
        count = n_lane_pixels
    if count < 0:
        raise DataError(f"count must be >= 0, got {count}")
    factor = model.calibration.lam if lam is None else lam
    if lambda_inverted:
        factor = 1.0 / factor
    raw = factor * model.static_ms(count)
    if raw < 0:
        warnings.warn(f"negative prediction {raw:.3f} ms clamped to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return raw


CalibrationMode = Literal["off", "per-frame", "ewma"]


def parse_calibration(spec: str) -> tuple[str, float | None]:
    """Parse ``off``, ``per-frame`` or ``ewma:<decay>`` (``ewma`` alone uses the default)."""
    if spec in ("off", "per-frame"):
        return spec, None
    if spec == "ewma":
        return "ewma", DEFAULT_DECAY
    if spec.startswith("ewma:"):
        try:
            decay = float(spec[5:])
        except ValueError:
            raise DataError(f"bad ewma decay in {spec!r}") from None
        if not 0.0 < decay <= 1.0:
            raise DataError(f"decay must lie in (0, 1], got {decay}")
        return "ewma", decay
    raise DataError(f"unknown calibration mode {spec!r}")


def evaluate(
    model: FittedLatencyModel,
    trace: TraceSet,
    calibration_mode: str = "per-frame",
    decay: float | None = None,
    lambda_inverted: bool = False,
) -> EvalReport:
    """Predict every frame of ``trace`` and score against the real latency.

    ``per-frame`` calibrates each frame with its own observed remaining
    time. ``ewma`` predicts with the state built from earlier frames, then
    folds in the current frame. ``off`` uses the model's stored factor.
    Accuracy per frame is ``100 * max(0, 1 - |err| / real)``.
    """
    if trace.m == 0:
        raise DataError("empty trace")
    if calibration_mode not in ("off", "per-frame", "ewma"):
        raise DataError(f"unknown calibration mode {calibration_mode!r}")
    mu_r = model.remainder.mu_r_ms
    state = CalibrationState.initial(mu_r, decay if decay is not None else model.calibration.decay)
    count_field = "n_proposals" if model.kind == OBJECT_DETECTION else "n_lane_pixels"
    other_field = "n_lane_pixels" if model.kind == OBJECT_DETECTION else "n_proposals"
    if all(getattr(r, count_field) == 0 for r in trace) and any(getattr(r, other_field) for r in trace):
        raise DataError(f"trace carries {other_field}, not {count_field}; wrong model kind")

    frames: list[FrameResult] = []
    excluded = 0
    for rec in trace:
        observed = rec.remaining_ms()
        if calibration_mode == "off":
            lam = model.calibration.lam
        elif calibration_mode == "per-frame":
            if observed <= 0:
                raise DataError(f"frame {rec.frame_id}: remaining time is 0")
            lam = mu_r / observed
        else:
            lam = state.lam
            if observed > 0:
                state = update_calibration(state, observed, mu_r)
        kwargs = {count_field: getattr(rec, count_field)}
        pred = predict(model, lam=lam, lambda_inverted=lambda_inverted, **kwargs)
        real = rec.end_to_end_ms()
        if real <= 0:
            excluded += 1
            continue
        frames.append(FrameResult(rec.frame_id, real, pred, abs(pred - real)))

    if excluded:
        warnings.warn(f"{excluded} frame(s) with zero latency excluded", RuntimeWarning, stacklevel=2)
    if not frames:
        raise DataError("no frames with positive latency to evaluate")
    real = np.array([f.real_ms for f in frames])
    pred = np.array([f.pred_ms for f in frames])
    err = np.array([f.abs_err_ms for f in frames])
    acc = 100.0 * np.maximum(0.0, 1.0 - err / real)
    return EvalReport(
        mean_real_ms=float(real.mean()),
        mean_pred_ms=float(pred.mean()),
        mean_abs_error_ms=float(err.mean()),
        accuracy_pct=float(acc.mean()),
        per_frame=tuple(frames),
        excluded=excluded,
    )


# -- persistence -------------------------------------------------------------


def _g9(x: float) -> str:
    return f"{x:.9g}"


def format_model(model: FittedLatencyModel) -> str:
    items: dict[str, str] = {"kind": model.kind}
    if model.od is not None:
        items["alpha0"] = _g9(model.od.alpha0_ms)
        items["alpha1"] = _g9(model.od.alpha1_ms_per_proposal)
    else:
        items["beta0"] = _g9(model.ld.beta0_ms)
        items["beta1"] = _g9(model.ld.beta1_ms_per_pixel)
        items["beta2"] = _g9(model.ld.beta2_ms_per_pixel2)
    items["mu_r"] = _g9(model.remainder.mu_r_ms)
    items["sigma_r"] = _g9(model.remainder.sigma_r_ms)
    items["lambda"] = _g9(model.calibration.lam)
    items["decay"] = _g9(model.calibration.decay)
    return format_kv(items)


def save_model(model: FittedLatencyModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_model(model))


def model_from_kv(cfg: dict[str, str]) -> FittedLatencyModel:
    if "kind" not in cfg:
        raise ConfigError("model file lacks 'kind'")
    kind = normalize_kind(cfg["kind"])
    remainder = RemainderModel(get_float(cfg, "mu_r"), get_float(cfg, "sigma_r", 0.0))
    if remainder.mu_r_ms <= 0 or remainder.sigma_r_ms < 0:
        raise ConfigError("mu_r must be > 0 and sigma_r >= 0")
    lam = get_float(cfg, "lambda", 1.0)
    decay = get_float(cfg, "decay", DEFAULT_DECAY)
    if lam <= 0 or not 0 < decay <= 1:
        raise ConfigError("lambda must be > 0 and decay in (0, 1]")
    calibration = CalibrationState(lam=lam, ewma_remaining_ms=remainder.mu_r_ms / lam, decay=decay)
    if kind == OBJECT_DETECTION:
        od = ODModel(get_float(cfg, "alpha0"), get_float(cfg, "alpha1"))
        coeffs = (od.alpha0_ms, od.alpha1_ms_per_proposal)
        model = FittedLatencyModel(kind, remainder, calibration, od=od)
    else:
        ld = LDModel(get_float(cfg, "beta0"), get_float(cfg, "beta1"), get_float(cfg, "beta2"))
        coeffs = (ld.beta0_ms, ld.beta1_ms_per_pixel, ld.beta2_ms_per_pixel2)
        model = FittedLatencyModel(kind, remainder, calibration, ld=ld)
    if not all(math.isfinite(c) for c in coeffs):
        raise ConfigError("model coefficients must be finite")
    return model


def load_model(path: str | os.PathLike) -> FittedLatencyModel:
    return model_from_kv(read_kv(path))
