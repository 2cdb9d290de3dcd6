"""Driving subscores and their composition into a single [0, 1] score.

Nine subscores are computed on a rollout: four multiplicative penalties
(no at-fault collision, drivable-area, driving-direction, and traffic-light
compliance) and five weighted-average terms (progress, time-to-collision,
lane keeping, history comfort, extended comfort). A human filter nullifies
any penalty the expert driver also commits in the same scene; the final
score is the penalty product times the weighted average of the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import Pose2D, obb_overlap, segments_intersect, wrap_angle
from .scene import TICK, LightState, Scenario, Trajectory, map_index
from .traffic import agent_pose

PEN_FIELDS = ("nc", "dac", "ddc", "tlc")
AVG_FIELDS = ("ep", "ttc", "lk", "hc", "ec")
ALL_FIELDS = PEN_FIELDS + AVG_FIELDS


@dataclass(frozen=True)
class SubscoreVector:
    """The nine subscores. Penalty fields take {0, 0.5, 1} or {0, 1};
    average fields are {0, 1} except ep in [0, 1]."""

    nc: float = 1.0
    dac: float = 1.0
    ddc: float = 1.0
    tlc: float = 1.0
    ep: float = 1.0
    ttc: float = 1.0
    lk: float = 1.0
    hc: float = 1.0
    ec: float = 1.0

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in ALL_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "SubscoreVector":
        return cls(**{f: float(d[f]) for f in ALL_FIELDS})


@dataclass(frozen=True)
class MetricWeights:
    """Weights for the average terms plus the enabled-subscore mask. The
    reduced variant drops TLC, LK, and EC."""

    w_ep: float = 5.0
    w_ttc: float = 5.0
    w_lk: float = 2.0
    w_hc: float = 2.0
    w_ec: float = 2.0
    enabled: frozenset = frozenset(ALL_FIELDS)

    @classmethod
    def full(cls) -> "MetricWeights":
        return cls()

    @classmethod
    def reduced(cls) -> "MetricWeights":
        return cls(enabled=frozenset(f for f in ALL_FIELDS if f not in ("tlc", "lk", "ec")))

    @classmethod
    def named(cls, name: str) -> "MetricWeights":
        if name == "full":
            return cls.full()
        if name == "reduced":
            return cls.reduced()
        raise ConfigError(f"unknown metrics preset '{name}'")

    def weight(self, field_name: str) -> float:
        return getattr(self, f"w_{field_name}")

    def pen_fields(self) -> tuple:
        return tuple(f for f in PEN_FIELDS if f in self.enabled)

    def avg_fields(self) -> tuple:
        return tuple(f for f in AVG_FIELDS if f in self.enabled)


@dataclass(frozen=True)
class MetricConstants:
    """Engine-defined thresholds kept in one place so alternates can
    recalibrate without touching metric code."""

    # comfort bounds (history and extended comfort)
    max_abs_lon_accel: float = 4.89  # m/s^2
    max_abs_lat_accel: float = 4.89  # m/s^2
    max_abs_jerk: float = 8.37  # m/s^3
    max_abs_yaw_rate: float = 0.95  # rad/s
    max_abs_yaw_accel: float = 1.93  # rad/s^2
    # driving direction compliance bands (oncoming distance)
    ddc_half_credit: float = 2.0  # m
    ddc_zero_credit: float = 6.0  # m
    # lane keeping
    lk_deviation_limit: float = 0.5  # m
    lk_duration: float = 1.0  # s, must be exceeded continuously
    # time to collision
    ttc_horizon: float = 1.0  # s
    ttc_min_speed: float = 0.5  # m/s
    # ego progress
    ep_reference_floor: float = 5.0  # m
    # collisions
    stationary_speed: float = 0.1  # m/s
    # extended comfort splice window after the junction
    ec_window: float = 1.0  # s


ENGINE = MetricConstants()


@dataclass(frozen=True)
class Rollout:
    """A simulated ego trace plus the aligned traffic trace.

    committed_plan / previous_plan are world-frame trajectories; the
    previous plan (when present) is the one committed one tick earlier and
    is only used by extended comfort.
    """

    ego_states: tuple
    traffic_states: tuple
    scenario: Scenario
    committed_plan: Optional[Trajectory] = None
    previous_plan: Optional[Trajectory] = None


@dataclass(frozen=True)
class HumanReference:
    """Raw subscores of the expert driver's rollout in the same scene."""

    subscores: SubscoreVector


# ---------------------------------------------------------------------------
# shared per-rollout arrays

def _corners_batch(xy: np.ndarray, heading: np.ndarray, length: float, width: float) -> np.ndarray:
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = np.cos(heading), np.sin(heading)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)  # (n,2,2)
    return np.einsum("kj,nij->nki", local, rot) + xy[:, None, :]


class _Frame:
    """Arrays shared by the subscore computations for one rollout."""

    def __init__(self, r: Rollout):
        sc = r.scenario
        self.rollout = r
        self.sc = sc
        self.idx = map_index(sc.map)
        states = r.ego_states
        self.n = len(states)
        self.t = np.array([s.timestamp for s in states])
        self.xy = np.array([[s.pose.x, s.pose.y] for s in states])
        self.heading = np.array([s.pose.heading for s in states])
        self.v = np.array([s.velocity for s in states])
        self.ego_dims = sc.ego_footprint
        self.ego_corners = _corners_batch(self.xy, self.heading, *self.ego_dims)

        self.route_s, self.route_d, _ = self.idx.route.project_batch(self.xy)

        # nearest lane distances/tangents, any direction and same direction
        lanes = sc.map.lanes
        if lanes:
            dists, tangents = [], []
            for lane in lanes:
                line = self.idx.lane_lines[lane.id]
                s, _, dist = line.project_batch(self.xy)
                dists.append(dist)
                tangents.append(line.heading_at_batch(s))
            dist_m = np.stack(dists)  # (L, n)
            tang_m = np.stack(tangents)
            nearest = np.argmin(dist_m, axis=0)
            cols = np.arange(self.n)
            self.nearest_lane_tangent = tang_m[nearest, cols]
            rel = np.abs(((tang_m - self.heading[None, :]) + np.pi) % (2 * np.pi) - np.pi)
            same = np.where(rel <= np.pi / 2, dist_m, np.inf)
            self.same_dir_lane_dist = np.min(same, axis=0)
        else:
            self.nearest_lane_tangent = self.heading.copy()
            self.same_dir_lane_dist = np.zeros(self.n)

        # per-agent trace arrays
        self.agents = []
        for agent in sc.agents:
            axy = np.empty((self.n, 2))
            ah = np.empty(self.n)
            av = np.empty(self.n)
            for k, ts in enumerate(r.traffic_states):
                pose, vel = agent_pose(sc, ts, agent, self.t[k])
                axy[k] = (pose.x, pose.y)
                ah[k] = pose.heading
                av[k] = vel
            self.agents.append((agent, axy, ah, av))


# ---------------------------------------------------------------------------
# safety: collisions and time to collision

def _route_half_width(frame: _Frame, k: int) -> float:
    return frame.idx.path_width_at(frame.sc.map.route, frame.route_s[k]) / 2.0


def _no_at_fault_collision(frame: _Frame, c: MetricConstants) -> float:
    ego_l, ego_w = frame.ego_dims
    ego_diag = math.hypot(ego_l, ego_w) / 2.0
    nc = 1.0
    front_shift = np.stack([np.cos(frame.heading), np.sin(frame.heading)], -1) * (ego_l / 4.0)
    front_centers = frame.xy + front_shift

    for agent, axy, ah, av in frame.agents:
        a_diag = math.hypot(agent.length, agent.width) / 2.0
        center_d = np.hypot(*(frame.xy - axy).T)
        hits = np.flatnonzero(center_d <= ego_diag + a_diag)
        stationary = bool(np.max(av) < c.stationary_speed)
        for k in hits:
            a_corners = _corners_batch(axy[k : k + 1], ah[k : k + 1], agent.length, agent.width)[0]
            if not obb_overlap(frame.ego_corners[k], a_corners):
                continue
            front_corners = _corners_batch(
                front_centers[k : k + 1], frame.heading[k : k + 1], ego_l / 2.0, ego_w
            )[0]
            off_lane = abs(frame.route_d[k]) > _route_half_width(frame, k)
            at_fault = obb_overlap(front_corners, a_corners) or off_lane
            if at_fault:
                nc = min(nc, 0.5 if stationary else 0.0)
            break  # first contact with this agent settles its classification
    return nc


def _time_to_collision(frame: _Frame, c: MetricConstants) -> float:
    steps = int(round(c.ttc_horizon / TICK))
    taus = (np.arange(steps) + 1) * TICK
    ego_dir = np.stack([np.cos(frame.heading), np.sin(frame.heading)], -1)
    ego_proj = frame.xy[:, None, :] + (frame.v[:, None] * taus[None, :])[:, :, None] * ego_dir[:, None, :]
    moving = frame.v > c.ttc_min_speed
    if not moving.any():
        return 1.0
    ego_l, ego_w = frame.ego_dims
    ego_diag = math.hypot(ego_l, ego_w) / 2.0

    for agent, axy, ah, av in frame.agents:
        a_dir = np.stack([np.cos(ah), np.sin(ah)], -1)
        a_proj = axy[:, None, :] + (av[:, None] * taus[None, :])[:, :, None] * a_dir[:, None, :]
        a_diag = math.hypot(agent.length, agent.width) / 2.0
        center_d = np.hypot(*(ego_proj - a_proj).transpose(2, 0, 1))
        hit_k, hit_j = np.nonzero((center_d <= ego_diag + a_diag) & moving[:, None])
        for k, j in zip(hit_k, hit_j):
            ego_box = _corners_batch(ego_proj[k, j][None], frame.heading[k : k + 1], ego_l, ego_w)[0]
            a_box = _corners_batch(a_proj[k, j][None], ah[k : k + 1], agent.length, agent.width)[0]
            if obb_overlap(ego_box, a_box):
                return 0.0
    return 1.0


def evaluate_safety(r: Rollout, constants: MetricConstants = ENGINE) -> tuple:
    """(nc, ttc) for a rollout."""
    frame = _Frame(r)
    return _no_at_fault_collision(frame, constants), _time_to_collision(frame, constants)


# ---------------------------------------------------------------------------
# compliance: drivable area, direction, lights, lane keeping

def _drivable_area_compliance(frame: _Frame) -> float:
    corners = frame.ego_corners.reshape(-1, 2)
    return 1.0 if frame.idx.contains(corners).all() else 0.0


def _driving_direction_compliance(frame: _Frame, c: MetricConstants) -> float:
    rel = np.abs(
        ((frame.heading - frame.nearest_lane_tangent) + np.pi) % (2 * np.pi) - np.pi
    )
    opposing = rel > np.pi / 2
    step = np.hypot(*np.diff(frame.xy, axis=0).T)
    oncoming = float(np.sum(step[opposing[:-1]]))
    if oncoming > c.ddc_zero_credit:
        return 0.0
    if oncoming > c.ddc_half_credit:
        return 0.5
    return 1.0


def _traffic_light_compliance(frame: _Frame) -> float:
    for sl, s_line in frame.idx.route_stop_lines():
        (x1, y1), (x2, y2) = sl.segment
        mid = np.array([(x1 + x2) / 2.0, (y1 + y2) / 2.0])
        half_span = math.hypot(x2 - x1, y2 - y1) / 2.0
        reach = math.hypot(*frame.ego_dims) / 2.0 + half_span
        near = np.hypot(*(frame.xy - mid).T) <= reach
        for k in np.flatnonzero(near):
            if sl.state_at(frame.t[k]) is not LightState.RED:
                continue
            box = frame.ego_corners[k]
            inside = any(_point_in_corners(box, x, y) for x, y in ((x1, y1), (x2, y2)))
            edges = any(
                segments_intersect(box[i], box[(i + 1) % 4], (x1, y1), (x2, y2))
                for i in range(4)
            )
            if inside or edges:
                return 0.0
    return 1.0


def _point_in_corners(corners: np.ndarray, x: float, y: float) -> bool:
    # corners are ordered; test with two edge-axis projections
    p = np.array([x, y])
    u = corners[1] - corners[0]
    w = corners[3] - corners[0]
    rel = p - corners[0]
    tu = rel @ u / (u @ u)
    tw = rel @ w / (w @ w)
    return -1e-12 <= tu <= 1.0 + 1e-12 and -1e-12 <= tw <= 1.0 + 1e-12


def _lane_keeping(frame: _Frame, c: MetricConstants) -> float:
    required = int(round(c.lk_duration / TICK)) + 1  # strictly more than lk_duration
    run = 0
    for k in range(frame.n):
        if frame.same_dir_lane_dist[k] > c.lk_deviation_limit:
            run += 1
            if run >= required:
                return 0.0
        else:
            run = 0
    return 1.0


def evaluate_compliance(r: Rollout, constants: MetricConstants = ENGINE) -> tuple:
    """(dac, ddc, tlc, lk) for a rollout."""
    frame = _Frame(r)
    return (
        _drivable_area_compliance(frame),
        _driving_direction_compliance(frame, constants),
        _traffic_light_compliance(frame),
        _lane_keeping(frame, constants),
    )


# ---------------------------------------------------------------------------
# progress

def _ego_progress(frame: _Frame, reference_progress: float, c: MetricConstants) -> float:
    if reference_progress < c.ep_reference_floor:
        return 1.0
    progress = max(frame.route_s[-1] - frame.route_s[0], 0.0)
    return float(min(progress / reference_progress, 1.0))


def evaluate_progress(r: Rollout, reference_progress: float, constants: MetricConstants = ENGINE) -> float:
    """Route progress relative to the privileged reference, clamped to [0, 1].
    References below the floor demand nothing (score 1)."""
    return _ego_progress(_Frame(r), reference_progress, constants)


# ---------------------------------------------------------------------------
# comfort

def _comfort_ok(xy: np.ndarray, heading: np.ndarray, c: MetricConstants) -> bool:
    """Difference-quotient comfort bounds over a pose sequence at 10 Hz."""
    if len(xy) < 3:
        return True
    v_vec = np.diff(xy, axis=0) / TICK
    a_vec = np.diff(v_vec, axis=0) / TICK
    mid = heading[1 : 1 + len(a_vec)]
    cos_h, sin_h = np.cos(mid), np.sin(mid)
    a_lon = a_vec[:, 0] * cos_h + a_vec[:, 1] * sin_h
    a_lat = -a_vec[:, 0] * sin_h + a_vec[:, 1] * cos_h
    if np.max(np.abs(a_lon)) > c.max_abs_lon_accel:
        return False
    if np.max(np.abs(a_lat)) > c.max_abs_lat_accel:
        return False
    if len(a_vec) >= 2:
        jerk = np.hypot(*np.diff(a_vec, axis=0).T) / TICK
        if jerk.size and np.max(jerk) > c.max_abs_jerk:
            return False
    dh = (np.diff(heading) + np.pi) % (2 * np.pi) - np.pi
    yaw_rate = dh / TICK
    if np.max(np.abs(yaw_rate)) > c.max_abs_yaw_rate:
        return False
    if len(yaw_rate) >= 2:
        yaw_acc = np.diff(yaw_rate) / TICK
        if np.max(np.abs(yaw_acc)) > c.max_abs_yaw_accel:
            return False
    return True


def _history_prefixed_poses(r: Rollout) -> tuple:
    history = r.scenario.ego_history
    prefix = [st for st in history if st.timestamp < r.ego_states[0].timestamp - 1e-9]
    seq = list(prefix) + list(r.ego_states)
    xy = np.array([[s.pose.x, s.pose.y] for s in seq])
    heading = np.array([s.pose.heading for s in seq])
    return xy, heading


def _history_comfort(r: Rollout, c: MetricConstants) -> float:
    xy, heading = _history_prefixed_poses(r)
    return 1.0 if _comfort_ok(xy, heading, c) else 0.0


def _comfort_positions_ok(xy: np.ndarray, c: MetricConstants) -> bool:
    """First-difference comfort bounds with headings derived from position
    chords, so plan predictions and executed states compare on equal footing.

    Second-difference terms (jerk, yaw acceleration) are deliberately not
    checked across the splice junction: there they measure the integration
    convention mismatch between a planned polyline and the executed rollout,
    not driving behavior. A replanning jump still trips the acceleration
    terms (speed jump) or the yaw rate (heading jump)."""
    if len(xy) < 3:
        return True
    v_vec = np.diff(xy, axis=0) / TICK
    speed = np.hypot(v_vec[:, 0], v_vec[:, 1])
    heading = np.zeros(len(v_vec))
    last = 0.0
    for i in range(len(v_vec)):
        if speed[i] > 1e-3:
            last = math.atan2(v_vec[i, 1], v_vec[i, 0])
        heading[i] = last
    a_vec = np.diff(v_vec, axis=0) / TICK
    cos_h, sin_h = np.cos(heading[:-1]), np.sin(heading[:-1])
    a_lon = a_vec[:, 0] * cos_h + a_vec[:, 1] * sin_h
    a_lat = -a_vec[:, 0] * sin_h + a_vec[:, 1] * cos_h
    if np.max(np.abs(a_lon)) > c.max_abs_lon_accel or np.max(np.abs(a_lat)) > c.max_abs_lat_accel:
        return False
    moving = speed > 1e-3
    dh = (np.diff(heading) + np.pi) % (2 * np.pi) - np.pi
    dh[~(moving[:-1] & moving[1:])] = 0.0  # standstill turns no yaw signal
    yaw_rate = dh / TICK
    return not (yaw_rate.size and np.max(np.abs(yaw_rate)) > c.max_abs_yaw_rate)


def splice_comfort(
    prev_plan_world: Trajectory, new_plan_world: Trajectory, constants: MetricConstants = ENGINE
) -> bool:
    """Comfort bounds over the previously committed plan's first 0.1 s
    spliced with the newly committed motion; detects replanning jumps.

    Both plans are world-frame trajectories carrying their commitment origin
    as waypoint zero (plan_to_world does this); the new one is what the
    rollout executes."""
    t0 = new_plan_world.waypoints[0][1]
    window = int(round(constants.ec_window / TICK))
    seq = [prev_plan_world.pose_at(t0 - TICK), prev_plan_world.pose_at(t0)]
    seq += [new_plan_world.pose_at(t0 + k * TICK) for k in range(1, window + 1)]
    xy = np.array([[p.x, p.y] for p in seq])
    return _comfort_positions_ok(xy, constants)


def _extended_comfort(r: Rollout, c: MetricConstants) -> float:
    if r.previous_plan is None or r.committed_plan is None:
        return 1.0
    return 1.0 if splice_comfort(r.previous_plan, r.committed_plan, c) else 0.0


def evaluate_comfort(r: Rollout, constants: MetricConstants = ENGINE) -> tuple:
    """(hc, ec). hc checks the history-prefixed rollout; ec checks the splice
    of the previously committed plan's first tick with the new rollout and
    defaults to 1 when no previous plan exists."""
    return _history_comfort(r, constants), _extended_comfort(r, constants)


# ---------------------------------------------------------------------------
# filter and composition

def apply_human_filter(agent_scores: SubscoreVector, human: HumanReference) -> SubscoreVector:
    """Nullify penalties the expert also commits: wherever the human subscore
    is exactly 0 the output is 1.0, otherwise the agent value passes through."""
    h = human.subscores
    return SubscoreVector(
        **{
            f: (1.0 if getattr(h, f) == 0.0 else getattr(agent_scores, f))
            for f in ALL_FIELDS
        }
    )


def penalty_product(s: SubscoreVector, w: MetricWeights) -> float:
    out = 1.0
    for f in w.pen_fields():
        out *= getattr(s, f)
    return out


def weighted_average(s: SubscoreVector, w: MetricWeights) -> float:
    fields = w.avg_fields()
    if not fields:
        raise ConfigError("no average terms enabled")
    total = sum(w.weight(f) for f in fields)
    return sum(w.weight(f) * getattr(s, f) for f in fields) / total


def compose_epdms(filtered: SubscoreVector, w: MetricWeights = MetricWeights()) -> float:
    """Penalty product times the weighted average over enabled subscores."""
    return penalty_product(filtered, w) * weighted_average(filtered, w)


def compute_subscores(
    r: Rollout, reference_progress: float, constants: MetricConstants = ENGINE
) -> SubscoreVector:
    """All nine raw subscores for one rollout."""
    frame = _Frame(r)
    nc = _no_at_fault_collision(frame, constants)
    ttc = _time_to_collision(frame, constants)
    dac = _drivable_area_compliance(frame)
    ddc = _driving_direction_compliance(frame, constants)
    tlc = _traffic_light_compliance(frame)
    lk = _lane_keeping(frame, constants)
    ep = _ego_progress(frame, reference_progress, constants)
    hc = _history_comfort(r, constants)
    ec = _extended_comfort(r, constants)
    return SubscoreVector(nc=nc, dac=dac, ddc=ddc, tlc=tlc, ep=ep, ttc=ttc, lk=lk, hc=hc, ec=ec)


def score_rollout(
    r: Rollout,
    human: HumanReference,
    weights: MetricWeights,
    reference_progress: float,
    constants: MetricConstants = ENGINE,
) -> tuple:
    """(raw, filtered, epdms) for a rollout against its scene's expert."""
    raw = compute_subscores(r, reference_progress, constants)
    filtered = apply_human_filter(raw, human)
    return raw, filtered, compose_epdms(filtered, weights)
