"""Pre-generation of Stage-2 synthetic observations.

Start points are sampled on a lateral/longitudinal grid around the expert's
4-second endpoint, matched against a trajectory bank for a plausible heading
and 1.5 s motion history, rejection-sampled against the multiplicative
subscores (collision, drivable area, direction, lights), and re-packaged as
full scenarios re-timed to the 4-second mark. Scenes keeping fewer than five
valid observations are discarded. None of this depends on any planner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParseError, SchemaError
from .geometry import Pose2D, boxes_overlap, obb_corners, wrap_angle
from .scene import (
    TICK,
    AgentState,
    AgentTrack,
    DrivingCommand,
    EgoState,
    LightPhase,
    LightState,
    MapModel,
    Scenario,
    StopLine,
    Trajectory,
    ego_states_from_trajectory,
    grid_time,
    map_index,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)

LAT_SPAN = 2.0  # m each side
LAT_STEP = 0.5  # m
LON_STEP = 5.0  # m
REACH_ACCEL = 4.0  # m/s^2 assumed for the reachability bounds
PLAN_SECONDS = 4.0
MAX_CANDIDATES = 20
MIN_SURVIVORS = 5
MATCH_MAX_DV = 1.0  # m/s
MATCH_MAX_DA = 1.0  # m/s^2
MATCH_MAX_DHEADING = math.radians(20.0)
HISTORY_STATES = 16


def compute_longitudinal_bounds(v0: float) -> tuple:
    """(d_min, d_max): minimum stopping distance to maximum reachable
    distance over 4 s at +/-4 m/s^2."""
    assert v0 >= 0.0
    t_stop = v0 / REACH_ACCEL
    if t_stop <= PLAN_SECONDS:
        d_min = v0 * v0 / (2.0 * REACH_ACCEL)
    else:
        d_min = PLAN_SECONDS * v0 - 0.5 * REACH_ACCEL * PLAN_SECONDS**2
    d_max = PLAN_SECONDS * v0 + 0.5 * REACH_ACCEL * PLAN_SECONDS**2
    return d_min, d_max


def sample_start_grid(sc: Scenario) -> list:
    """Grid offsets (lat, lon) in the route frame anchored at the scene
    start, ranked by distance to the expert's 4 s endpoint and truncated to
    the 20 nearest."""
    idx = map_index(sc.map)
    ego = sc.current_ego
    s_now, _, _ = idx.route.project(ego.pose.x, ego.pose.y)
    d_min, d_max = compute_longitudinal_bounds(max(ego.velocity, 0.0))

    endpoint = sc.expert_trajectory.pose_at(sc.start_time + PLAN_SECONDS)
    ex, ey = endpoint.x, endpoint.y

    cands = []
    lon = d_min
    while lon <= d_max + 1e-9:
        for j in range(-4, 5):
            lat = j * LAT_STEP
            s_c = s_now + lon
            if s_c > idx.route.length:
                continue
            pose = idx.route.pose_at(s_c, lat)
            dist = math.hypot(pose.x - ex, pose.y - ey)
            cands.append((round(dist, 9), lon, lat))
        lon += LON_STEP
    cands.sort()
    return [(lat, lon) for _, lon, lat in cands[:MAX_CANDIDATES]]


@dataclass(frozen=True)
class StartCandidate:
    lat: float
    lon: float
    pose: Pose2D  # world frame, matched heading
    matched_history: tuple  # 16 EgoState, world poses, timestamps 0.0..1.5
    matched_velocity: float
    matched_acceleration: float
    source_trajectory_id: str


@dataclass(frozen=True)
class SyntheticObservation:
    parent_scenario_id: str
    index: int
    start: StartCandidate
    scenario: Scenario  # re-timed derived scene


class TrajectoryBank:
    """Expert trajectories indexed for nearest-state lookup on lateral
    offset, velocity, acceleration, and route-relative heading. Entries keep
    at least 1.5 s of states so any matched state has a full history."""

    _W_D, _W_V, _W_A, _W_H = 1.0, 1.0, 0.5, 3.0

    def __init__(self):
        self._entries = []  # (trajectory_id, states, features (n, 4))

    def add_scenario(self, sc: Scenario) -> None:
        states = ego_states_from_trajectory(sc.expert_trajectory)
        if len(states) < HISTORY_STATES:
            return
        route = map_index(sc.map).route
        xy = np.array([[st.pose.x, st.pose.y] for st in states])
        s, d, _ = route.project_batch(xy)
        tangent = route.heading_at_batch(s)
        feats = np.stack(
            [
                d,
                np.array([st.velocity for st in states]),
                np.array([st.acceleration for st in states]),
                np.array([wrap_angle(st.pose.heading - t) for st, t in zip(states, tangent)]),
            ],
            axis=1,
        )
        self._entries.append((sc.id, states, feats))

    @classmethod
    def from_scenarios(cls, scenarios) -> "TrajectoryBank":
        bank = cls()
        for sc in scenarios:
            bank.add_scenario(sc)
        return bank

    def __len__(self) -> int:
        return len(self._entries)

    def nearest(self, lat: float, v: float, a: float):
        """Best (trajectory_id, states, state_index, rel_heading) for a
        target lateral offset at the expert endpoint's speed/acceleration;
        ties keep the first entry in insertion order."""
        best = None
        target = np.array([lat, v, a, 0.0])
        weights = np.array([self._W_D, self._W_V, self._W_A, self._W_H])
        for trajectory_id, states, feats in self._entries:
            cost = np.abs(feats - target) @ weights
            cost[: HISTORY_STATES - 1] = np.inf  # need 1.5 s of history before
            k = int(np.argmin(cost))
            c = float(cost[k])
            if best is None or c < best[0]:
                best = (c, trajectory_id, states, k, float(feats[k, 3]))
        if best is None:
            return None
        return best[1], best[2], best[3], best[4]


_EXPERT_END_CACHE: dict = {}


def _expert_end_state(sc: Scenario) -> EgoState:
    hit = _EXPERT_END_CACHE.get(sc.id)
    if hit is not None and hit[0] is sc:
        return hit[1]
    states = ego_states_from_trajectory(sc.expert_trajectory)
    k_end = round(PLAN_SECONDS / TICK)
    end_state = states[min(k_end, len(states) - 1)]
    if len(_EXPERT_END_CACHE) >= 128:
        _EXPERT_END_CACHE.pop(next(iter(_EXPERT_END_CACHE)))
    _EXPERT_END_CACHE[sc.id] = (sc, end_state)
    return end_state


def match_heading_history(
    offsets: tuple, sc: Scenario, bank: TrajectoryBank
) -> Optional[StartCandidate]:
    """Attach a heading and 1.5 s history to a grid offset by matching the
    bank; None when the match violates the velocity/acceleration/heading
    filters relative to the expert's endpoint state."""
    lat, lon = offsets
    if len(bank) == 0:
        return None
    idx = map_index(sc.map)
    ego = sc.current_ego
    s_now, _, _ = idx.route.project(ego.pose.x, ego.pose.y)
    s_c = s_now + lon
    if s_c > idx.route.length:
        return None
    base = idx.route.pose_at(s_c, lat)

    end_state = _expert_end_state(sc)

    hit = bank.nearest(lat, end_state.velocity, end_state.acceleration)
    if hit is None:
        return None
    trajectory_id, states, k, rel = hit
    matched = states[k]
    heading = wrap_angle(base.heading + rel)

    if abs(matched.velocity - end_state.velocity) > MATCH_MAX_DV:
        return None
    if abs(matched.acceleration - end_state.acceleration) > MATCH_MAX_DA:
        return None
    if abs(wrap_angle(heading - end_state.pose.heading)) > MATCH_MAX_DHEADING:
        return None

    pose = Pose2D(base.x, base.y, heading)
    rot = wrap_angle(pose.heading - matched.pose.heading)
    c, s = math.cos(rot), math.sin(rot)
    history = []
    for i, st in enumerate(states[k - HISTORY_STATES + 1 : k + 1]):
        dx, dy = st.pose.x - matched.pose.x, st.pose.y - matched.pose.y
        history.append(
            EgoState(
                pose=Pose2D(
                    pose.x + c * dx - s * dy,
                    pose.y + s * dx + c * dy,
                    wrap_angle(st.pose.heading + rot),
                ),
                velocity=st.velocity,
                acceleration=st.acceleration,
                timestamp=grid_time(i),
            )
        )
    return StartCandidate(
        lat=lat,
        lon=lon,
        pose=pose,
        matched_history=tuple(history),
        matched_velocity=matched.velocity,
        matched_acceleration=matched.acceleration,
        source_trajectory_id=trajectory_id,
    )


def reject_invalid(c: StartCandidate, sc: Scenario, t4: float) -> bool:
    """Zero-length-rollout check of the multiplicative subscores at the
    start state; True keeps the candidate."""
    idx = map_index(sc.map)
    ego_fp = sc.ego_footprint

    for agent in sc.agents:
        st = agent.state_at(t4)
        if boxes_overlap(c.pose, ego_fp, st.pose, agent.footprint):
            return False  # NC

    corners = obb_corners(c.pose, *ego_fp)
    if not idx.contains(corners).all():
        return False  # DAC

    near = idx.nearest_lane(c.pose.x, c.pose.y)
    if near is not None and abs(wrap_angle(c.pose.heading - near[4])) > math.pi / 2:
        return False  # DDC (instantaneous direction)

    ego = sc.current_ego
    s_now, _, _ = idx.route.project(ego.pose.x, ego.pose.y)
    s_c = s_now + c.lon
    for sl, s_line in idx.route_stop_lines():
        if s_now < s_line <= s_c + ego_fp[0] / 2.0 and sl.state_at(t4) is LightState.RED:
            return False  # TLC: it would have crossed this line on red
    return True


def derive_scenario(sc: Scenario, c: StartCandidate, index: int) -> Scenario:
    """Re-package the parent scene as of t0 + 4 s with the candidate as the
    new ego start; all clocks shift so the derived history spans [0, 1.5]."""
    t0 = sc.start_time
    shift = t0 + PLAN_SECONDS - 1.5

    def re_time(t: float) -> float:
        return grid_time(round((t - shift) / TICK))

    lights = tuple(
        StopLine(
            id=sl.id,
            segment=sl.segment,
            schedule=tuple(
                LightPhase(ph.t_start - shift, ph.t_end - shift, ph.state) for ph in sl.schedule
            ),
        )
        for sl in sc.map.stop_lines
    )
    new_map = MapModel(
        drivable_areas=sc.map.drivable_areas,
        lanes=sc.map.lanes,
        stop_lines=lights,
        route=sc.map.route,
    )

    t_cut = t0 + PLAN_SECONDS - 1.5
    agents = tuple(
        AgentTrack(
            id=a.id,
            length=a.length,
            width=a.width,
            states=tuple(
                AgentState(pose=st.pose, velocity=st.velocity, timestamp=re_time(st.timestamp))
                for st in a.states
                if st.timestamp >= t_cut - 1e-9
            ),
            lane_path=a.lane_path,
            behavior=a.behavior,
            idm=a.idm,
        )
        for a in sc.agents
    )

    tail = sc.expert_trajectory.slice(t0 + PLAN_SECONDS, sc.expert_trajectory.end_time)
    expert = Trajectory(
        waypoints=tuple((pose, re_time(t)) for pose, t in tail.waypoints),
        frame="world",
    )

    net_turn = wrap_angle(
        expert.waypoints[min(40, len(expert.waypoints) - 1)][0].heading
        - expert.waypoints[0][0].heading
    )
    if net_turn > 0.35:
        command = DrivingCommand.LEFT
    elif net_turn < -0.35:
        command = DrivingCommand.RIGHT
    else:
        command = DrivingCommand.STRAIGHT

    return Scenario(
        id=f"{sc.id}#s2-{index:02d}",
        map=new_map,
        ego_history=c.matched_history,
        agents=agents,
        command=command,
        expert_trajectory=expert,
        rng_seed=sc.rng_seed,
        ego_footprint=sc.ego_footprint,
    )


def build_stage2_set(sc: Scenario, bank: TrajectoryBank) -> Optional[list]:
    """Full pipeline: sample, match, reject, derive. Returns the ordered
    observations or None when fewer than five survive (scene discard)."""
    t4 = sc.start_time + PLAN_SECONDS
    survivors = []
    for offsets in sample_start_grid(sc):
        cand = match_heading_history(offsets, sc, bank)
        if cand is None:
            continue
        if not reject_invalid(cand, sc, t4):
            continue
        survivors.append(cand)
    if len(survivors) < MIN_SURVIVORS:
        return None
    out = []
    for i, cand in enumerate(survivors):
        derived = derive_scenario(sc, cand, i)
        if validate_scenario(derived):
            continue  # defensive: never emit an invalid derived scene
        out.append(
            SyntheticObservation(
                parent_scenario_id=sc.id, index=i, start=cand, scenario=derived
            )
        )
    if len(out) < MIN_SURVIVORS:
        return None
    return out


def downsample(observations: list, density: float) -> list:
    """Every k-th observation of the ordered set (density 1.0, 0.5, 0.25)."""
    if density >= 1.0:
        return list(observations)
    k = int(round(1.0 / density))
    return list(observations[::k])


# ---------------------------------------------------------------------------
# serialization

def stage2_to_dict(parent_id: str, observations: Optional[list]) -> dict:
    if observations is None:
        return {"parent": parent_id, "discarded": True, "observations": []}
    return {
        "parent": parent_id,
        "discarded": False,
        "observations": [
            {
                "index": o.index,
                "lat": o.start.lat,
                "lon": o.start.lon,
                "matched_velocity": o.start.matched_velocity,
                "matched_acceleration": o.start.matched_acceleration,
                "source_trajectory_id": o.start.source_trajectory_id,
                "scenario": scenario_to_dict(o.scenario),
            }
            for o in observations
        ],
    }


def stage2_from_dict(doc: dict) -> tuple:
    try:
        parent = doc["parent"]
        if doc["discarded"]:
            return parent, None
        out = []
        for entry in doc["observations"]:
            derived = scenario_from_dict(entry["scenario"])
            start = StartCandidate(
                lat=float(entry["lat"]),
                lon=float(entry["lon"]),
                pose=derived.current_ego.pose,
                matched_history=derived.ego_history,
                matched_velocity=float(entry["matched_velocity"]),
                matched_acceleration=float(entry["matched_acceleration"]),
                source_trajectory_id=str(entry["source_trajectory_id"]),
            )
            out.append(
                SyntheticObservation(
                    parent_scenario_id=parent,
                    index=int(entry["index"]),
                    start=start,
                    scenario=derived,
                )
            )
        return parent, out
    except KeyError as e:
        raise SchemaError(f"stage2 document missing key {e}") from None


def save_stage2(path, parent_id: str, observations: Optional[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stage2_to_dict(parent_id, observations), fh, indent=1)
        fh.write("\n")


def load_stage2(path) -> tuple:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    return stage2_from_dict(doc)
