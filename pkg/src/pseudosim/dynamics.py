"""Kinematic bicycle model and LQR trajectory tracking.

The tracker converts a committed 4-second plan into a physically consistent
10 Hz rollout: per tick it computes the tracking error in the path frame,
applies LQR feedback on top of curvature/acceleration feedforward, and
integrates the bicycle model with RK4. The plan is never re-read once the
rollout starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import RiccatiDivergence
from .geometry import Pose2D, transform_from_frame, wrap_angle
from .scene import TICK, EgoState, Trajectory

STOP_SPEED = 0.5  # m/s; below this reference speed the stop controller runs
COMFORT_BRAKE = 3.0  # m/s^2 cap used by the stop controller
GAIN_SPEED_BIN = 0.5  # m/s quantization of the gain cache
PLAN_WAYPOINTS = 40  # 4 s at 10 Hz


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    footprint: tuple = (4.6, 1.9)  # (length, width), m
    steer_limit: float = 0.62  # rad
    accel_limits: tuple = (-4.0, 4.0)  # m/s^2
    steer_rate_limit: float = 0.35  # rad/s

    def __post_init__(self):
        assert self.wheelbase > 0
        assert self.accel_limits[0] < 0 < self.accel_limits[1]
        assert 0 < self.steer_limit < math.pi / 2


@dataclass(frozen=True)
class BicycleState:
    pose: Pose2D
    velocity: float  # m/s, >= 0
    steering_angle: float  # rad, within steer_limit


@dataclass(frozen=True)
class ControlInput:
    acceleration: float
    steering_rate: float


@dataclass(frozen=True)
class LqrConfig:
    # error state: (lateral, heading, velocity, steering)
    state_cost: tuple = (1.0, 10.0, 2.0, 0.1)
    control_cost: tuple = (1.0, 1.0)
    riccati_tolerance: float = 1e-9
    riccati_max_iters: int = 10000


DEFAULT_VEHICLE = VehicleParams()
DEFAULT_LQR = LqrConfig()


def bicycle_step(
    state: BicycleState, u: ControlInput, params: VehicleParams, dt: float
) -> BicycleState:
    """One saturated RK4 update of the kinematic bicycle over dt <= 0.1 s.

    Integration runs as 4 consecutive RK4 sub-steps of dt/4 with
    piecewise-constant controls; v and delta integrate exactly (their
    derivatives are the constant controls), so only the pose needs the full
    stage evaluations. Saturations apply inside every stage.
    """
    assert 0.0 < dt <= TICK + 1e-12
    a = min(max(u.acceleration, params.accel_limits[0]), params.accel_limits[1])
    rate = min(max(u.steering_rate, -params.steer_rate_limit), params.steer_rate_limit)
    lim = params.steer_limit
    inv_wb = 1.0 / params.wheelbase
    cos, sin, tan = math.cos, math.sin, math.tan

    x, y = state.pose.x, state.pose.y
    th = state.pose.heading
    v = max(state.velocity, 0.0)
    delta = min(max(state.steering_angle, -lim), lim)

    h = dt / 4.0
    for _ in range(4):
        v1 = v if v > 0.0 else 0.0
        d1 = -lim if delta < -lim else (lim if delta > lim else delta)
        k1t = v1 * tan(d1) * inv_wb
        k1x = v1 * cos(th)
        k1y = v1 * sin(th)

        vm = v + 0.5 * h * a
        vmc = vm if vm > 0.0 else 0.0
        dm = delta + 0.5 * h * rate
        dmc = -lim if dm < -lim else (lim if dm > lim else dm)
        kmt = vmc * tan(dmc) * inv_wb

        th2 = th + 0.5 * h * k1t
        k2x = vmc * cos(th2)
        k2y = vmc * sin(th2)
        k2t = kmt

        th3 = th + 0.5 * h * k2t
        k3x = vmc * cos(th3)
        k3y = vmc * sin(th3)
        k3t = kmt

        v4 = v + h * a
        v4c = v4 if v4 > 0.0 else 0.0
        d4 = delta + h * rate
        d4c = -lim if d4 < -lim else (lim if d4 > lim else d4)
        th4 = th + h * k3t
        k4x = v4c * cos(th4)
        k4y = v4c * sin(th4)
        k4t = v4c * tan(d4c) * inv_wb

        x += h / 6.0 * (k1x + 2.0 * (k2x + k3x) + k4x)
        y += h / 6.0 * (k1y + 2.0 * (k2y + k3y) + k4y)
        th += h / 6.0 * (k1t + 2.0 * (k2t + k3t) + k4t)
        v = v4
        delta = d4

    return BicycleState(
        pose=Pose2D(x, y, wrap_angle(th)),
        velocity=max(v, 0.0),
        steering_angle=min(max(delta, -lim), lim),
    )


def lqr_gain(
    cfg: LqrConfig, v_ref: float, params: VehicleParams, dt: float = TICK
) -> np.ndarray:
    """2x4 feedback gain for the bicycle linearized about straight motion at
    v_ref, from the discrete Riccati fixed point.

    Raises RiccatiDivergence when the iteration does not meet the tolerance
    within riccati_max_iters.
    """
    assert v_ref >= STOP_SPEED - 1e-9
    a_mat = np.array(
        [
            [1.0, v_ref * dt, 0.0, 0.0],
            [0.0, 1.0, 0.0, v_ref * dt / params.wheelbase],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    b_mat = np.array([[0.0, 0.0], [0.0, 0.0], [dt, 0.0], [0.0, dt]])
    q = np.diag(cfg.state_cost).astype(float)
    r = np.diag(cfg.control_cost).astype(float)

    p = q.copy()
    for _ in range(cfg.riccati_max_iters):
        btp = b_mat.T @ p
        gain = np.linalg.solve(r + btp @ b_mat, btp @ a_mat)
        p_next = q + a_mat.T @ p @ (a_mat - b_mat @ gain)
        p_next = (p_next + p_next.T) / 2.0
        if np.max(np.abs(p_next - p)) < cfg.riccati_tolerance:
            btp = b_mat.T @ p_next
            return np.linalg.solve(r + btp @ b_mat, btp @ a_mat)
        p = p_next
    raise RiccatiDivergence(
        f"no convergence in {cfg.riccati_max_iters} iterations at v_ref={v_ref}"
    )


@lru_cache(maxsize=512)
def _cached_gain(cfg: LqrConfig, v_bin: float, params: VehicleParams, dt: float) -> tuple:
    return tuple(lqr_gain(cfg, v_bin, params, dt).ravel())


def gain_for_speed(cfg: LqrConfig, v: float, params: VehicleParams, dt: float = TICK) -> tuple:
    """Flattened 2x4 gain looked up on a 0.5 m/s quantized speed grid."""
    v_bin = max(round(v / GAIN_SPEED_BIN) * GAIN_SPEED_BIN, STOP_SPEED)
    return _cached_gain(cfg, v_bin, params, dt)


class PlanRefs:
    """Per-tick reference states derived from a committed plan: 41 poses,
    speeds, feedforward steering angles and rates, and accelerations."""

    def __init__(self, init_pose: Pose2D, init_velocity: float, plan: Trajectory, params: VehicleParams):
        if plan.frame == "ego-local":
            poses = [transform_from_frame(p, init_pose) for p, _ in plan.waypoints]
        else:
            poses = [p for p, _ in plan.waypoints]
        poses = [init_pose] + poses
        n = len(poses)

        self.x = np.array([p.x for p in poses])
        self.y = np.array([p.y for p in poses])
        self.heading = np.array([p.heading for p in poses])

        self.v = np.empty(n)
        step = np.hypot(np.diff(self.x), np.diff(self.y))
        self.v[:-1] = step / TICK
        self.v[-1] = self.v[-2]

        # curvature feedforward from heading increments along the path;
        # index 0 copies index 1 because the step from the (prepended)
        # current pose to the first waypoint carries the ego's heading error,
        # not path curvature
        dheading = np.array(
            [wrap_angle(b - a) for a, b in zip(self.heading[:-1], self.heading[1:])]
        )
        ds = np.maximum(step, 1e-6)
        kappa = np.zeros(n)
        kappa[:-1] = np.where(step > 1e-4, dheading / ds, 0.0)
        kappa[-1] = kappa[-2]
        if n > 2:
            kappa[0] = kappa[1]
        self.delta = np.clip(
            np.arctan(params.wheelbase * kappa), -params.steer_limit, params.steer_limit
        )

        self.a = np.zeros(n)
        self.a[:-1] = np.diff(self.v) / TICK
        self.a[-1] = 0.0
        self.delta_rate = np.zeros(n)
        self.delta_rate[:-1] = np.diff(self.delta) / TICK


def _tracking_control(
    bstate: BicycleState, refs: PlanRefs, k: int, params: VehicleParams, cfg: LqrConfig
) -> ControlInput:
    v_ref = refs.v[k]
    if v_ref < STOP_SPEED:
        # proportional stop controller; brake capped by the comfort limit
        brake = min(-params.accel_limits[0], COMFORT_BRAKE)
        a = -min(brake, 2.0 * bstate.velocity)
        rate = -5.0 * bstate.steering_angle
        return ControlInput(a, rate)

    c, s = math.cos(refs.heading[k]), math.sin(refs.heading[k])
    dx = bstate.pose.x - refs.x[k]
    dy = bstate.pose.y - refs.y[k]
    e0 = -s * dx + c * dy
    e1 = wrap_angle(bstate.pose.heading - refs.heading[k])
    e2 = bstate.velocity - v_ref
    e3 = bstate.steering_angle - refs.delta[k]
    g = gain_for_speed(cfg, v_ref, params)
    fb_a = -(g[0] * e0 + g[1] * e1 + g[2] * e2 + g[3] * e3)
    fb_r = -(g[4] * e0 + g[5] * e1 + g[6] * e2 + g[7] * e3)
    return ControlInput(refs.a[k] + fb_a, refs.delta_rate[k] + fb_r)


def track_trajectory(
    init: EgoState,
    plan: Trajectory,
    params: VehicleParams = DEFAULT_VEHICLE,
    cfg: LqrConfig = DEFAULT_LQR,
) -> list[EgoState]:
    """Execute a committed 40-waypoint plan from `init`; returns 41 states at
    10 Hz including the initial one. Pure in (init, plan, params, cfg)."""
    assert len(plan.waypoints) == PLAN_WAYPOINTS, "plan must carry 40 waypoints"
    refs = PlanRefs(init.pose, init.velocity, plan, params)
    bstate = BicycleState(init.pose, max(init.velocity, 0.0), 0.0)
    out = [init]
    t0 = init.timestamp
    for k in range(PLAN_WAYPOINTS):
        u = _tracking_control(bstate, refs, k, params, cfg)
        bstate = bicycle_step(bstate, u, params, TICK)
        out.append(
            EgoState(
                pose=bstate.pose,
                velocity=bstate.velocity,
                acceleration=min(
                    max(u.acceleration, params.accel_limits[0]), params.accel_limits[1]
                ),
                timestamp=round((t0 + (k + 1) * TICK) * 10.0) / 10.0,
            )
        )
    return out


def step_along_plan(
    bstate: BicycleState,
    plan: Trajectory,
    init_pose: Pose2D,
    init_velocity: float,
    params: VehicleParams = DEFAULT_VEHICLE,
    cfg: LqrConfig = DEFAULT_LQR,
) -> tuple[BicycleState, ControlInput]:
    """Execute only the first 0.1 s of a fresh plan (closed-loop mode)."""
    refs = PlanRefs(init_pose, init_velocity, plan, params)
    u = _tracking_control(bstate, refs, 0, params, cfg)
    return bicycle_step(bstate, u, params, TICK), u
