"""Receding-horizon steering laws over the shared prediction/QP pipeline.

Four variants, differing in the model they predict with and the reference
they consume:

* baseline: fixed small-angle model, never re-derived. Decision variables
  are the slip moves, so the rate limit is a plain box and consecutive
  in-horizon commands also respect it.
* weight_tuned: identical pipeline to baseline with the faster sample time
  and longer horizon.
* position_sl: re-linearizes the position model at the measured operating
  point every step; input is the slip change with a direct rate box.
* velocity_sl: difference-state model over per-sample displacements,
  tracking displacement references selected by a monotone path cursor.

Every step function takes and returns an explicit ControllerState, returns
the single applied move, and leaves the plant untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .linearize import (
    OperatingPoint,
    linearize_initial,
    linearize_position,
    linearize_velocity,
)
from .qp import (
    PredictionMatrices,
    TrackingWeights,
    build_prediction,
    build_tracking_qp,
    horizon_weights,
    scale_tracking_weights,
    solve_box_qp,
)
from .vehicle import VehicleParams, VehicleState

if TYPE_CHECKING:  # pragma: no cover
    from .simulate import ReferencePath

VARIANTS = ("baseline", "weight_tuned", "position_sl", "velocity_sl")

DEFAULT_RATE_LIMIT = 0.5  # [rad/s] slip slew bound
DEFAULT_ALPHA = 2.8

# Per-variant (ts [s], horizon N, control horizon M).
VARIANT_DEFAULTS = {
    "baseline": (0.2, 10, 5),
    "weight_tuned": (0.05, 20, 5),
    "position_sl": (0.05, 20, 20),
    "velocity_sl": (0.05, 20, 20),
}


class ControlError(RuntimeError):
    """A controller step could not produce a valid move."""


@dataclass(frozen=True)
class ControllerConfig:
    variant: str
    ts: float
    horizon: int
    control_horizon: int
    weights: TrackingWeights
    rate_limit: float = DEFAULT_RATE_LIMIT  # [rad/s]
    q_heading: float = 0.0                  # heading weight in Q (positions tracked by default)
    u_target: float = 0.0                   # [rad] slip pulled toward this when w_u > 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if not self.ts > 0.0:
            raise ValueError(f"sample time must be positive, got {self.ts}")
        if self.horizon < 1 or not (1 <= self.control_horizon <= self.horizon):
            raise ValueError(
                f"need 1 <= M <= N, got N={self.horizon}, M={self.control_horizon}")
        if not self.rate_limit > 0.0:
            raise ValueError(f"rate limit must be positive, got {self.rate_limit}")
        if self.q_heading < 0.0:
            raise ValueError(f"heading weight must be nonnegative, got {self.q_heading}")


def config_for(variant: str, alpha: float = DEFAULT_ALPHA, w_y: float = 10.0,
               w_u: float = 0.0, w_du: float = 0.1, rate_limit: float = DEFAULT_RATE_LIMIT,
               ts: float | None = None, horizon: int | None = None,
               control_horizon: int | None = None, q_heading: float = 0.0,
               u_target: float = 0.0) -> ControllerConfig:
    """Controller configuration from the per-variant defaults plus overrides."""
    if variant not in VARIANT_DEFAULTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    d_ts, d_n, d_m = VARIANT_DEFAULTS[variant]
    return ControllerConfig(
        variant=variant,
        ts=d_ts if ts is None else ts,
        horizon=d_n if horizon is None else horizon,
        control_horizon=d_m if control_horizon is None else control_horizon,
        weights=TrackingWeights(w_y=w_y, w_u=w_u, w_du=w_du, alpha=alpha),
        rate_limit=rate_limit,
        q_heading=q_heading,
        u_target=u_target,
    )


@dataclass(frozen=True)
class ControllerState:
    """What a controller carries between steps."""

    last_beta: float = 0.0
    op: OperatingPoint = field(default_factory=OperatingPoint)
    ref_cursor: int = 0
    prev_state: VehicleState | None = None  # previous measured state (velocity variant)


def init_state(cfg: ControllerConfig, plant: VehicleState, params: VehicleParams) -> ControllerState:
    """Initial controller state for a plant starting at rest on its path.

    The velocity variant needs a previous sample to difference against; the
    plant is assumed to have been cruising, so the initial state is
    integrated backward one step at zero input. That keeps an on-path start
    an exact zero-error fixed point from the very first step.
    """
    prev = None
    if cfg.variant == "velocity_sl":
        heading = plant.psi + plant.beta
        prev = VehicleState(
            x=plant.x - params.v * math.cos(heading) * cfg.ts,
            y=plant.y - params.v * math.sin(heading) * cfg.ts,
            psi=plant.psi - params.v / params.lr * math.sin(plant.beta) * cfg.ts,
            beta=plant.beta,
        )
    return ControllerState(
        last_beta=plant.beta,
        op=OperatingPoint(psi=plant.psi, beta=plant.beta),
        ref_cursor=0,
        prev_state=prev,
    )


def _stack_position_refs(path: "ReferencePath", cursor: int, n: int) -> np.ndarray:
    """Stage references (x, y, psi=0) for stages cursor+1 .. cursor+n, clamped at the end."""
    last = len(path) - 1
    idx = np.minimum(cursor + 1 + np.arange(n), last)
    refs = np.zeros(3 * n)
    refs[0::3] = path.x[idx]
    refs[1::3] = path.y[idx]
    return refs


def _solve_or_raise(qp, variant: str) -> np.ndarray:
    sol = solve_box_qp(qp)
    if sol.status != "converged":
        raise ControlError(
            f"{variant} QP stopped at {sol.status} with KKT residual {sol.kkt_residual:.3e}")
    return sol.u


def _fixed_model_step(ctrl: ControllerState, plant: VehicleState, path: "ReferencePath",
                      cfg: ControllerConfig, params: VehicleParams) -> tuple[float, ControllerState]:
    """Shared pipeline for the fixed-model variants (baseline, weight_tuned).

    The model input is the absolute slip angle; the QP is posed over the
    slip moves du via beta_j = last_beta + sum(du_0..du_j), which turns the
    slew bound into a box on every move and makes the move-suppression
    weight a plain diagonal.
    """
    n, m = cfg.horizon, cfg.control_horizon
    model = linearize_initial(params, cfg.ts)
    pred = build_prediction(model, n, m)

    # Reparameterize absolute slip commands as cumulative moves.
    t_low = np.tril(np.ones((m, m)))
    su_mv = pred.su @ t_low
    sk_mv = pred.sk + pred.su @ np.full(m, ctrl.last_beta)
    pred_mv = PredictionMatrices(sx=pred.sx, su=su_mv, sk=sk_mv, n=n, m=m)

    x0 = np.array([plant.x, plant.y, plant.psi])
    x_ref = _stack_position_refs(path, ctrl.ref_cursor, n)
    hw = horizon_weights(cfg.weights, n, m, cfg.q_heading)
    bound = cfg.rate_limit * cfg.ts
    qp = build_tracking_qp(pred_mv, x0, x_ref, hw, (-bound, bound))

    scaled = scale_tracking_weights(cfg.weights)
    if scaled.w_u > 0.0:
        # Input-target term on the absolute slip commands, written over moves.
        wu2 = scaled.w_u ** 2
        offset = np.full(m, ctrl.last_beta - cfg.u_target)
        qp = qp.add_cost(wu2 * (t_low.T @ t_low), wu2 * (t_low.T @ offset))

    u = float(_solve_or_raise(qp, cfg.variant)[0])
    new_ctrl = replace(
        ctrl,
        last_beta=plant.beta + u,
        op=OperatingPoint(psi=plant.psi, beta=plant.beta),
        ref_cursor=ctrl.ref_cursor + 1,
        prev_state=plant,
    )
    return u, new_ctrl


def baseline_step(ctrl: ControllerState, plant: VehicleState, path: "ReferencePath",
                  cfg: ControllerConfig, params: VehicleParams) -> tuple[float, ControllerState]:
    """One step of the fixed-model controller at its stock tuning."""
    if cfg.variant != "baseline":
        raise ValueError(f"baseline_step called with variant {cfg.variant!r}")
    return _fixed_model_step(ctrl, plant, path, cfg, params)


def weight_tuned_step(ctrl: ControllerState, plant: VehicleState, path: "ReferencePath",
                      cfg: ControllerConfig, params: VehicleParams) -> tuple[float, ControllerState]:
    """One step of the fixed-model controller with the retuned horizon/sampling."""
    if cfg.variant != "weight_tuned":
        raise ValueError(f"weight_tuned_step called with variant {cfg.variant!r}")
    return _fixed_model_step(ctrl, plant, path, cfg, params)


def position_sl_step(ctrl: ControllerState, plant: VehicleState, path: "ReferencePath",
                     cfg: ControllerConfig, params: VehicleParams) -> tuple[float, ControllerState]:
    """One step of the successively re-linearized position controller.

    The model is re-derived at the measured (psi, beta) every call; the
    decision variables are slip changes, bounded directly by the rate limit.
    """
    if cfg.variant != "position_sl":
        raise ValueError(f"position_sl_step called with variant {cfg.variant!r}")
    n, m = cfg.horizon, cfg.control_horizon
    op = OperatingPoint(psi=plant.psi, beta=plant.beta)
    model = linearize_position(op, params, cfg.ts)
    pred = build_prediction(model, n, m)

    x0 = np.array([plant.x, plant.y, plant.psi])
    x_ref = _stack_position_refs(path, ctrl.ref_cursor, n)
    hw = horizon_weights(cfg.weights, n, m, cfg.q_heading)
    bound = cfg.rate_limit * cfg.ts
    qp = build_tracking_qp(pred, x0, x_ref, hw, (-bound, bound))

    u = float(_solve_or_raise(qp, cfg.variant)[0])
    new_ctrl = replace(
        ctrl,
        last_beta=plant.beta + u,
        op=op,
        ref_cursor=ctrl.ref_cursor + 1,
        prev_state=plant,
    )
    return u, new_ctrl


class EndOfPath(ControlError):
    """The reference cursor has no sample left to aim for."""


def generate_delta_refs(plant: VehicleState, path: "ReferencePath", cursor: int,
                        params: VehicleParams, ts: float) -> tuple[float, float, int]:
    """Per-sample displacement reference for the velocity controller.

    Estimates where the vehicle would be after one sample if it kept its
    current velocity direction, starting from the current reference point;
    picks the path sample nearest to that estimate (never behind the
    cursor); and returns the displacement from the current reference point
    to the picked sample together with the new cursor.
    """
    last = len(path) - 1
    if cursor >= last:
        raise EndOfPath(f"reference cursor {cursor} is at the final sample {last}")
    if cursor < 0:
        raise ValueError(f"cursor must be nonnegative, got {cursor}")
    heading = plant.psi + plant.beta
    x_est = path.x[cursor] + params.v * math.cos(heading) * ts
    y_est = path.y[cursor] + params.v * math.sin(heading) * ts
    dx = path.x[cursor:] - x_est
    dy = path.y[cursor:] - y_est
    j = cursor + int(np.argmin(dx * dx + dy * dy))
    return (
        float(path.x[j] - path.x[cursor]),
        float(path.y[j] - path.y[cursor]),
        j,
    )


def velocity_sl_step(ctrl: ControllerState, plant: VehicleState, path: "ReferencePath",
                     cfg: ControllerConfig, params: VehicleParams) -> tuple[float, ControllerState]:
    """One step of the difference-state (velocity-space) controller.

    The measured difference state is the backward difference of the last two
    measured plant states.  The first-stage displacement reference comes from
    generate_delta_refs; later stages chain the per-sample displacements along
    the path from the picked sample onward (the final displacement repeats if
    the path runs out).  Heading-difference references are zero, which is
    unweighted under the default Q.
    """
    if cfg.variant != "velocity_sl":
        raise ValueError(f"velocity_sl_step called with variant {cfg.variant!r}")
    if ctrl.prev_state is None:
        raise ControlError("velocity controller state has no previous sample; use init_state")
    n, m = cfg.horizon, cfg.control_horizon
    op = OperatingPoint(psi=plant.psi, beta=plant.beta)
    model = linearize_velocity(op, params, cfg.ts)
    pred = build_prediction(model, n, m)

    prev = ctrl.prev_state
    d0 = np.array([plant.x - prev.x, plant.y - prev.y, plant.psi - prev.psi])
    dx_ref, dy_ref, cursor = generate_delta_refs(plant, path, ctrl.ref_cursor, params, cfg.ts)
    last = len(path) - 1
    d_ref = np.zeros(3 * n)
    d_ref[0], d_ref[1] = dx_ref, dy_ref
    for i in range(1, n):
        ahead = min(cursor + i, last)
        behind = max(min(cursor + i - 1, last - 1), 0)
        d_ref[3 * i] = path.x[ahead] - path.x[behind]
        d_ref[3 * i + 1] = path.y[ahead] - path.y[behind]

    hw = horizon_weights(cfg.weights, n, m, cfg.q_heading)
    bound = cfg.rate_limit * cfg.ts
    qp = build_tracking_qp(pred, d0, d_ref, hw, (-bound, bound))

    u = float(_solve_or_raise(qp, cfg.variant)[0])
    new_ctrl = ControllerState(
        last_beta=plant.beta + u,
        op=op,
        ref_cursor=cursor,
        prev_state=plant,
    )
    return u, new_ctrl


CONTROLLER_STEPS = {
    "baseline": baseline_step,
    "weight_tuned": weight_tuned_step,
    "position_sl": position_sl_step,
    "velocity_sl": velocity_sl_step,
}
