"""Reference paths, measurement disturbance, and the closed-loop harness.

Paths are uniformly sampled point sequences (t_k, x_k, y_k); a controller is
expected to run at the same sample time the path was generated with. The
disturbance is applied to the measured output only, never to the true plant
state, and is generated by a keyed counter hash so runs are bit-reproducible
across platforms and independent of call order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .vehicle import VehicleParams, VehicleState, step_nonlinear
from . import controllers as _controllers

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MULT1 = np.uint64(0xBF58476D1CE4E5B9)
_MULT2 = np.uint64(0x94D049BB133111EB)
_TWO53 = float(1 << 53)

# Counter offset separating the x-noise stream from the y-noise stream.
_X_STREAM_OFFSET = 1 << 48


@dataclass(frozen=True)
class ReferencePath:
    """Uniformly sampled planar reference with its sample time.

    heading0 is the tangent direction at the first sample when the generator
    knows it exactly (step paths point along x regardless of the jump).
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    ts: float
    heading0: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (t.shape == x.shape == y.shape) or t.ndim != 1 or t.size < 2:
            raise ValueError("path needs matching 1-d t/x/y arrays with at least 2 samples")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValueError("path samples must be finite")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("path times must be strictly increasing")
        if not self.ts > 0.0:
            raise ValueError(f"path sample time must be positive, got {self.ts}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.t.size

    def initial_heading(self) -> float:
        if self.heading0 is not None:
            return float(self.heading0)
        return math.atan2(self.y[1] - self.y[0], self.x[1] - self.x[0])


def _sample_count(duration: float, ts: float) -> int:
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    if not ts > 0.0:
        raise ValueError(f"sample time must be positive, got {ts}")
    return int(math.ceil(duration / ts)) + 1


def make_step_path(amplitude: float, duration: float, ts: float,
                   v: float = 10.0) -> ReferencePath:
    """Lateral step: y jumps from 0 to amplitude right after t = 0.

    x advances at v*ts per sample; the pre-step travel direction is along x,
    so heading0 = 0 even though the first segment jumps sideways.
    """
    n = _sample_count(duration, ts)
    k = np.arange(n)
    t = k * ts
    x = v * ts * k
    y = np.where(k >= 1, float(amplitude), 0.0)
    return ReferencePath(t=t, x=x, y=y, ts=ts, heading0=0.0)


def make_sine_path(amplitude: float, wavelength: float, duration: float, ts: float,
                   v: float = 10.0) -> ReferencePath:
    """Sine profile y(x) = amplitude*sin(2 pi x / wavelength) sampled along x = v*t."""
    if not wavelength > 0.0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    n = _sample_count(duration, ts)
    t = np.arange(n) * ts
    x = v * t
    y = amplitude * np.sin(2.0 * math.pi * x / wavelength)
    slope0 = amplitude * 2.0 * math.pi / wavelength
    return ReferencePath(t=t, x=x, y=y, ts=ts, heading0=math.atan(slope0))


def make_complete_path(ts: float, v: float = 10.0, lead_in: float = 50.0,
                       amplitude: float = 4.0, wavelength: float = 50.0,
                       periods: int = 2, tail: float = 50.0) -> ReferencePath:
    """Straight lead-in, sine section, straight tail, sampled by arc length.

    Samples advance v*ts along the curve, so a constant-speed vehicle can sit
    on every sample exactly; the profile is C0 at the joins because the sine
    starts and ends on whole periods.
    """
    if not (lead_in > 0.0 and tail > 0.0 and wavelength > 0.0 and periods >= 1):
        raise ValueError("complete path needs positive segment lengths and at least one period")
    sine_len = periods * wavelength
    x_end = lead_in + sine_len + tail

    # Arc length accumulated on a fine x grid, then inverted at v*ts spacing.
    dx = min(0.01, wavelength / 2000.0)
    xg = np.arange(0.0, x_end + dx, dx)
    yg = _complete_profile(xg, lead_in, amplitude, wavelength, sine_len)
    seg = np.hypot(np.diff(xg), np.diff(yg))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]

    n_steps = int(math.floor(total / (v * ts)))
    sk = np.arange(n_steps + 1) * (v * ts)
    xs = np.interp(sk, s, xg)
    ys = _complete_profile(xs, lead_in, amplitude, wavelength, sine_len)
    t = np.arange(n_steps + 1) * ts
    return ReferencePath(t=t, x=xs, y=ys, ts=ts, heading0=0.0)


def _complete_profile(x: np.ndarray, lead_in: float, amplitude: float,
                      wavelength: float, sine_len: float) -> np.ndarray:
    y = np.zeros_like(x)
    in_sine = (x >= lead_in) & (x < lead_in + sine_len)
    y[in_sine] = amplitude * np.sin(2.0 * math.pi * (x[in_sine] - lead_in) / wavelength)
    return y


def make_straight_path(duration: float, ts: float, v: float = 10.0) -> ReferencePath:
    """Level straight line along x, exactly followable at constant speed."""
    return make_step_path(0.0, duration, ts, v)


@dataclass(frozen=True)
class DisturbanceSpec:
    """Measurement disturbance description; kind "none" disables it."""

    kind: str = "none"            # "none" or "gaussian_output"
    amplitude: float = 0.0        # standard deviation [m]
    seed: int = 0
    apply_to_x: bool = False      # also disturb the measured x position

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_output"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.amplitude < 0.0:
            raise ValueError(f"amplitude must be nonnegative, got {self.amplitude}")


def _mix64(z: np.ndarray) -> np.ndarray:
    """64-bit finalizer (splitmix64 output function) on uint64 arrays."""
    z = (z ^ (z >> np.uint64(30))) * _MULT1
    z = (z ^ (z >> np.uint64(27))) * _MULT2
    return z ^ (z >> np.uint64(31))


def gaussian_noise(spec: DisturbanceSpec, k):
    """Standard-normal draw(s) scaled by the amplitude, keyed by (seed, k).

    Two 64-bit words are hashed out of the counter and folded through the
    Box-Muller cosine branch, so sample k is a pure function of the spec:
    bit-identical across platforms and independent of evaluation order.
    Accepts a scalar or an array of counters.
    """
    if spec.kind != "gaussian_output":
        raise ValueError(f"noise requested from a {spec.kind!r} disturbance")
    kk = np.atleast_1d(np.asarray(k, dtype=np.uint64))
    with np.errstate(over="ignore"):
        seed_h = _mix64(np.uint64(spec.seed & 0xFFFFFFFFFFFFFFFF) + _GAMMA)
        c = kk * np.uint64(2)
        w1 = _mix64(seed_h ^ _mix64((c + np.uint64(1)) * _GAMMA))
        w2 = _mix64(seed_h ^ _mix64((c + np.uint64(2)) * _GAMMA))
    u1 = (w1 >> np.uint64(11)).astype(np.float64) / _TWO53
    u2 = (w2 >> np.uint64(11)).astype(np.float64) / _TWO53
    z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)
    out = spec.amplitude * z
    if np.isscalar(k) or np.asarray(k).ndim == 0:
        return float(out[0])
    return out


@dataclass
class SimResult:
    """Closed-loop run record.

    states has one row per sample (K+1 rows for K control steps); inputs has
    one applied slip change per step. ssd sums squared planar errors of the
    true states against the reference over all samples.
    """

    variant: str
    t: np.ndarray            # (K+1,)
    states: np.ndarray       # (K+1, 4) true x, y, psi, beta
    inputs: np.ndarray       # (K,) applied slip changes
    measured: np.ndarray     # (K, 2) the (x, y) the controller saw
    x_ref: np.ndarray        # (K+1,)
    y_ref: np.ndarray        # (K+1,)
    ssd: float               # [m^2]
    iter_times: np.ndarray   # (K,) controller wall-clock per step [s]
    total_time: float        # [s] sum of iter_times
    status: str              # "ok" or "failed: ..."


def ssd_from_traces(states: np.ndarray, x_ref: np.ndarray, y_ref: np.ndarray) -> float:
    """Sum of squared planar deviations between true states and the reference."""
    dx = states[:, 0] - x_ref
    dy = states[:, 1] - y_ref
    return float(np.sum(dx * dx + dy * dy))


def default_initial_state(path: ReferencePath) -> VehicleState:
    """First reference point, heading along the path tangent, zero slip."""
    return VehicleState(x=float(path.x[0]), y=float(path.y[0]),
                        psi=path.initial_heading(), beta=0.0)


def run_closed_loop(cfg, path: ReferencePath, disturbance: DisturbanceSpec,
                    params: VehicleParams,
                    initial_state: VehicleState | None = None) -> SimResult:
    """Run one controller variant against the plant along a reference path.

    The controller only ever sees the measured state (true state plus output
    disturbance on the measured position); the plant integrates the true
    state. Each applied move is checked against the rate limit here in the
    harness, independent of the controller's own constraint handling. A
    controller failure ends the run early with a truncated trace and a
    "failed" status rather than raising.
    """
    if abs(cfg.ts - path.ts) > 1e-12:
        raise ValueError(f"controller ts {cfg.ts} does not match path sample time {path.ts}")
    steps = len(path) - 1
    state = initial_state if initial_state is not None else default_initial_state(path)
    ctrl = _controllers.init_state(cfg, state, params)
    step_fn = _controllers.CONTROLLER_STEPS[cfg.variant]
    noisy = disturbance.kind == "gaussian_output"

    t_trace = [0.0]
    states = [state.as_array()]
    inputs: list[float] = []
    measured: list[tuple[float, float]] = []
    iter_times: list[float] = []
    status = "ok"
    rate_cap = cfg.rate_limit * cfg.ts + 1e-9

    for k in range(steps):
        meas = state
        if noisy:
            y_m = state.y + gaussian_noise(disturbance, k)
            x_m = state.x
            if disturbance.apply_to_x:
                x_m = state.x + gaussian_noise(disturbance, k + _X_STREAM_OFFSET)
            meas = replace(state, x=x_m, y=y_m)
        measured.append((meas.x, meas.y))
        try:
            tic = time.perf_counter()
            u, ctrl = step_fn(ctrl, meas, path, cfg, params)
            iter_times.append(time.perf_counter() - tic)
            if abs(u) > rate_cap:
                raise _controllers.ControlError(
                    f"move {u} exceeds rate limit {cfg.rate_limit} rad/s at step {k}")
            state = step_nonlinear(state, u, cfg.ts, params)
        except (_controllers.ControlError, ValueError) as exc:
            measured.pop()
            if len(iter_times) > len(inputs):
                iter_times.pop()
            status = f"failed: {exc}"
            break
        inputs.append(u)
        t_trace.append(float(path.t[k + 1]))
        states.append(state.as_array())

    n_samples = len(states)
    return SimResult(
        variant=cfg.variant,
        t=np.array(t_trace),
        states=np.vstack(states),
        inputs=np.array(inputs),
        measured=np.array(measured).reshape(len(measured), 2),
        x_ref=path.x[:n_samples].copy(),
        y_ref=path.y[:n_samples].copy(),
        ssd=ssd_from_traces(np.vstack(states), path.x[:n_samples], path.y[:n_samples]),
        iter_times=np.array(iter_times),
        total_time=float(np.sum(iter_times)) if iter_times else 0.0,
        status=status,
    )
