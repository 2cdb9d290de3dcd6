"""Reactive background traffic.

Agents ride their assigned lane-centerline paths; longitudinal control is
the Intelligent Driver Model against the nearest leading vehicle (other
agents or the ego, which is treated identically) and against Red stop
lines, which act as stationary virtual leaders. Replay agents advance along
their recorded states instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .geometry import Pose2D, wrap_angle
from .scene import (
    TICK,
    AgentBehavior,
    AgentTrack,
    EgoState,
    LightState,
    MapIndex,
    Scenario,
    map_index,
)


@dataclass(frozen=True)
class IdmParams:
    v0: float = 13.0  # desired speed, m/s
    T: float = 1.5  # desired time headway, s
    s0: float = 2.0  # minimum gap, m
    a_max: float = 1.5  # m/s^2
    b: float = 2.0  # comfortable deceleration, m/s^2 (positive)
    delta: float = 4.0

    def overridden(self, overrides: Optional[dict]) -> "IdmParams":
        if not overrides:
            return self
        known = {k: v for k, v in overrides.items() if k in ("v0", "T", "s0", "a_max", "b", "delta")}
        return IdmParams(**{**self.__dict__, **known})


@dataclass(frozen=True)
class AgentMotion:
    agent_id: str
    path_progress: float  # m along the assigned path
    velocity: float  # m/s


@dataclass(frozen=True)
class TrafficState:
    motions: tuple  # of AgentMotion, ordered as Scenario.agents
    tick: int

    def motion_of(self, agent_id: str) -> AgentMotion:
        for m in self.motions:
            if m.agent_id == agent_id:
                return m
        raise KeyError(agent_id)


def idm_acceleration(v: float, v_lead: float, gap: float, p: IdmParams) -> float:
    """IDM longitudinal acceleration; gap = +inf encodes free flow.

    Raises DomainError for a non-positive gap with a leader present (the
    caller is already in a collision state).
    """
    if math.isinf(gap):
        interaction = 0.0
    else:
        if gap <= 0.0:
            raise DomainError(f"non-positive gap {gap:.3f} with leader present")
        s_star = p.s0 + v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b))
        s_star = max(s_star, p.s0)
        interaction = (s_star / gap) ** 2
    a = p.a_max * (1.0 - (max(v, 0.0) / p.v0) ** p.delta - interaction)
    return min(max(a, -2.0 * p.b), p.a_max)


LOOKAHEAD = 100.0  # m, leader search range along the path


def agent_params(agent: AgentTrack, idx: MapIndex) -> IdmParams:
    """Effective IDM parameters: defaults, lane speed limit, file overrides."""
    v0 = 13.0
    if agent.lane_path:
        v0 = idx.map.lane_by_id(agent.lane_path[0]).speed_limit
    return IdmParams(v0=v0).overridden(agent.idm)


def agent_pose(sc: Scenario, ts: TrafficState, agent: AgentTrack, t: float) -> tuple:
    """Current (Pose2D, velocity) of an agent under a traffic state."""
    m = ts.motion_of(agent.id)
    if agent.behavior is AgentBehavior.REPLAY or not agent.lane_path:
        st = agent.state_at(t)
        return st.pose, st.velocity
    path = map_index(sc.map).path_polyline(agent.lane_path)
    return path.pose_at(min(m.path_progress, path.length)), m.velocity


def find_lead(
    ts: TrafficState, agent_id: str, ego: EgoState, sc: Scenario, ego_footprint: tuple = (4.6, 1.9)
) -> Optional[tuple]:
    """Nearest entity ahead on the agent's path within 100 m and half a lane
    width laterally. Returns (v_lead, gap) or None; the ego is just another
    candidate leader."""
    agent = next(a for a in sc.agents if a.id == agent_id)
    if not agent.lane_path:
        return None
    idx = map_index(sc.map)
    path = idx.path_polyline(agent.lane_path)
    s_self = ts.motion_of(agent.id).path_progress
    t_now = ego.timestamp

    best = None
    candidates = []
    for other in sc.agents:
        if other.id == agent_id:
            continue
        pose, vel = agent_pose(sc, ts, other, t_now)
        candidates.append((pose, vel, other.length))
    candidates.append((ego.pose, ego.velocity, ego_footprint[0]))

    for pose, vel, length in candidates:
        s_c, d_c, _ = path.project(pose.x, pose.y)
        ahead = s_c - s_self
        if ahead <= 0.0 or ahead > LOOKAHEAD:
            continue
        if abs(d_c) > idx.path_width_at(agent.lane_path, s_c) / 2.0:
            continue
        gap = ahead - agent.length / 2.0 - length / 2.0
        tangent = path.heading_at(s_c)
        v_along = vel * math.cos(wrap_angle(pose.heading - tangent))
        if best is None or ahead < best[0]:
            best = (ahead, v_along, gap)
    if best is None:
        return None
    return best[1], best[2]


def _next_red_stop(idx: MapIndex, lane_ids: tuple, s_self: float, t: float) -> Optional[float]:
    for sl, s_line in idx.stop_lines_on(lane_ids):
        if s_line > s_self and sl.state_at(t) is LightState.RED:
            return s_line
    return None


def init_traffic(sc: Scenario, t: float) -> TrafficState:
    """Traffic state at time t, seeded from recorded agent states."""
    idx = map_index(sc.map)
    motions = []
    for agent in sc.agents:
        st = agent.state_at(t)
        if agent.lane_path:
            s, _, _ = idx.path_polyline(agent.lane_path).project(st.pose.x, st.pose.y)
        else:
            s = 0.0
        motions.append(AgentMotion(agent.id, s, max(st.velocity, 0.0)))
    return TrafficState(tuple(motions), tick=round(t / TICK))


def step_traffic(ts: TrafficState, ego: EgoState, sc: Scenario, dt: float = TICK) -> TrafficState:
    """Advance all agents one tick. Reactive agents apply IDM against the
    nearest leader and Red stop lines; Replay agents follow their recording.
    Pure in (ts, ego, sc): updates read the previous tick's snapshot only."""
    idx = map_index(sc.map)
    t_now = ego.timestamp
    t_next = t_now + dt
    new = []
    for agent in sc.agents:
        m = ts.motion_of(agent.id)
        if agent.behavior is AgentBehavior.REPLAY or not agent.lane_path:
            st = agent.state_at(t_next)
            if agent.lane_path:
                s, _, _ = idx.path_polyline(agent.lane_path).project(st.pose.x, st.pose.y)
                s = max(s, m.path_progress)  # projection noise must not reverse
            else:
                s = m.path_progress
            new.append(AgentMotion(agent.id, s, max(st.velocity, 0.0)))
            continue

        p = agent_params(agent, idx)
        v = m.velocity
        a_candidates = [idm_acceleration(v, 0.0, math.inf, p)]

        lead = find_lead(ts, agent.id, ego, sc, ego_footprint=sc.ego_footprint)
        if lead is not None:
            v_lead, gap = lead
            if gap <= 0.0:
                a_candidates.append(-2.0 * p.b)  # already overlapping: full brake
            else:
                a_candidates.append(idm_acceleration(v, v_lead, gap, p))

        s_red = _next_red_stop(idx, agent.lane_path, m.path_progress, t_now)
        if s_red is not None:
            gap_line = s_red - m.path_progress - agent.length / 2.0
            if gap_line > 0.0:
                a_candidates.append(idm_acceleration(v, 0.0, gap_line, p))

        a = min(a_candidates)
        v_new = max(v + a * dt, 0.0)
        new.append(AgentMotion(agent.id, m.path_progress + v_new * dt, v_new))
    return TrafficState(tuple(new), tick=ts.tick + 1)


def traffic_rollout(sc: Scenario, ego_states: list, t0: float) -> list:
    """Traffic states aligned with an ego rollout; agents read the ego state
    current at the start of each tick."""
    states = [init_traffic(sc, t0)]
    for ego in ego_states[:-1]:
        states.append(step_traffic(states[-1], ego, sc))
    return states


def agent_poses_at(sc: Scenario, ts: TrafficState, t: float) -> list:
    """[(AgentTrack, Pose2D, velocity)] for all agents at a traffic state."""
    out = []
    for agent in sc.agents:
        pose, vel = agent_pose(sc, ts, agent, t)
        out.append((agent, pose, vel))
    return out
