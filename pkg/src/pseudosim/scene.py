"""Scenario data model, validation, file format, and route-frame geometry.

A scenario is a single-route BEV scene: drivable polygons, directed lanes
with successor links, scheduled stop lines, the ego's motion history, agent
tracks, a driving command, and the expert trajectory. Everything lives on a
10 Hz time grid; timestamps are seconds and multiples of 0.1.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import OutOfCorridor, ParseError, SchemaError, ValidationError
from .geometry import (
    Polyline,
    Pose2D,
    concatenate_polylines,
    points_in_polygon,
    polygon_is_simple,
    wrap_angle,
)

TICK = 0.1  # scenario grid period, seconds
HISTORY_STATES = 16  # 1.5 s of history inclusive of the current state
PLAN_HORIZON_STATES = 40  # 4 s planner output


def grid_time(k: int) -> float:
    """Canonical timestamp for grid index k (exact shared float)."""
    return k / 10.0


def on_grid(t: float, tol: float = 1e-6) -> bool:
    return abs(t * 10.0 - round(t * 10.0)) <= tol * 10.0


class DrivingCommand(enum.Enum):
    LEFT = "left"
    STRAIGHT = "straight"
    RIGHT = "right"


class LightState(enum.Enum):
    RED = "red"
    GREEN = "green"


class AgentBehavior(enum.Enum):
    REPLAY = "replay"
    REACTIVE = "reactive"


@dataclass(frozen=True)
class EgoState:
    pose: Pose2D
    velocity: float  # m/s, signed
    acceleration: float  # m/s^2
    timestamp: float  # s, multiple of 0.1


@dataclass(frozen=True)
class Trajectory:
    """Ordered waypoints at 0.1 s spacing. frame is 'world' or 'ego-local'."""

    waypoints: tuple  # of (Pose2D, timestamp)
    frame: str = "world"

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def start_time(self) -> float:
        return self.waypoints[0][1]

    @property
    def end_time(self) -> float:
        return self.waypoints[-1][1]

    def poses(self) -> list[Pose2D]:
        return [p for p, _ in self.waypoints]

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p, _ in self.waypoints])

    def pose_at(self, t: float) -> Pose2D:
        k = round((t - self.start_time) / TICK)
        k = min(max(k, 0), len(self.waypoints) - 1)
        return self.waypoints[k][0]

    def slice(self, t0: float, t1: float) -> "Trajectory":
        wps = tuple(wp for wp in self.waypoints if t0 - 1e-9 <= wp[1] <= t1 + 1e-9)
        return Trajectory(wps, self.frame)


@dataclass(frozen=True)
class FrenetCoord:
    """Arc length along the route centerline and signed lateral offset
    (left positive)."""

    s: float
    d: float


@dataclass(frozen=True)
class DrivablePolygon:
    id: str
    vertices: tuple  # of (x, y), implicitly closed


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: tuple  # of (x, y)
    width: float
    speed_limit: float
    successors: tuple = ()


@dataclass(frozen=True)
class LightPhase:
    t_start: float
    t_end: float
    state: LightState


@dataclass(frozen=True)
class StopLine:
    id: str
    segment: tuple  # ((x1, y1), (x2, y2))
    schedule: tuple = ()  # of LightPhase; uncovered times default to GREEN

    def state_at(self, t: float) -> LightState:
        for ph in self.schedule:
            if ph.t_start - 1e-9 <= t < ph.t_end - 1e-9:
                return ph.state
        return LightState.GREEN


@dataclass(frozen=True)
class MapModel:
    drivable_areas: tuple  # of DrivablePolygon
    lanes: tuple  # of Lane
    stop_lines: tuple  # of StopLine
    route: tuple  # ordered lane ids

    def lane_by_id(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)


@dataclass(frozen=True)
class AgentState:
    pose: Pose2D
    velocity: float
    timestamp: float


@dataclass(frozen=True)
class AgentTrack:
    id: str
    length: float
    width: float
    states: tuple  # of AgentState on the scenario grid
    lane_path: tuple  # lane ids the agent follows; empty for free agents
    behavior: AgentBehavior = AgentBehavior.REPLAY
    idm: Optional[dict] = None  # per-agent IDM overrides from the file

    @property
    def footprint(self) -> tuple:
        return (self.length, self.width)

    def state_at(self, t: float) -> AgentState:
        k = round((t - self.states[0].timestamp) / TICK)
        k = min(max(k, 0), len(self.states) - 1)
        return self.states[k]


@dataclass(frozen=True)
class Scenario:
    id: str
    map: MapModel
    ego_history: tuple  # of EgoState, >= 16 states, newest last
    agents: tuple  # of AgentTrack
    command: DrivingCommand
    expert_trajectory: Trajectory  # world frame
    rng_seed: int
    ego_footprint: tuple = (4.6, 1.9)

    @property
    def start_time(self) -> float:
        """Time of the initial observation (end of history)."""
        return self.ego_history[-1].timestamp

    @property
    def current_ego(self) -> EgoState:
        return self.ego_history[-1]


# ---------------------------------------------------------------------------
# route frame / map index

class MapIndex:
    """Precomputed geometry for one map: route polyline, per-lane polylines,
    drivable polygon arrays, and stop-line arc positions."""

    def __init__(self, map_model: MapModel):
        self.map = map_model
        self.lane_lines: dict[str, Polyline] = {
            lane.id: Polyline(lane.centerline) for lane in map_model.lanes
        }
        self.route = concatenate_polylines([self.lane_lines[i] for i in map_model.route])
        self._drivable = [np.asarray(p.vertices, dtype=float) for p in map_model.drivable_areas]
        self._path_cache: dict[tuple, Polyline] = {}
        self._stop_cache: dict[tuple, tuple] = {}
        # lane tangent headings for nearest-lane queries
        self._lane_ids = [lane.id for lane in map_model.lanes]
        self._lane_widths = {lane.id: lane.width for lane in map_model.lanes}

    # -- drivable area ------------------------------------------------------
    def contains(self, points: np.ndarray) -> np.ndarray:
        """True per point when inside the union of drivable polygons."""
        pts = np.atleast_2d(points)
        inside = np.zeros(len(pts), dtype=bool)
        for poly in self._drivable:
            missing = ~inside
            if not missing.any():
                break
            inside[missing] |= points_in_polygon(pts[missing], poly)
        return inside

    def contains_point(self, x: float, y: float) -> bool:
        return bool(self.contains(np.array([[x, y]]))[0])

    # -- lanes ---------------------------------------------------------------
    def path_polyline(self, lane_ids: tuple) -> Polyline:
        key = tuple(lane_ids)
        if key not in self._path_cache:
            self._path_cache[key] = concatenate_polylines(
                [self.lane_lines[i] for i in key]
            )
        return self._path_cache[key]

    def nearest_lane(self, x: float, y: float, heading: Optional[float] = None):
        """Nearest lane centerline; optionally restricted to lanes whose
        local direction is within 90 degrees of `heading`.

        Returns (lane_id, s, d, distance, tangent_heading) or None.
        """
        best = None
        for lane_id in self._lane_ids:
            line = self.lane_lines[lane_id]
            s, d, dist = line.project(x, y)
            tangent = line.heading_at(s)
            if heading is not None and abs(wrap_angle(tangent - heading)) > math.pi / 2:
                continue
            if best is None or dist < best[3]:
                best = (lane_id, s, d, dist, tangent)
        return best

    def lane_width(self, lane_id: str) -> float:
        return self._lane_widths[lane_id]

    def path_width_at(self, lane_ids: tuple, s: float) -> float:
        """Width of the lane the arc position s falls in along a lane path."""
        acc = 0.0
        for lane_id in lane_ids:
            acc += self.lane_lines[lane_id].length
            if s <= acc:
                return self._lane_widths[lane_id]
        return self._lane_widths[lane_ids[-1]] if lane_ids else 3.5

    # -- stop lines -----------------------------------------------------------
    def stop_lines_on(self, lane_ids: tuple) -> tuple:
        """Stop lines crossing the given lane path as (StopLine, s) pairs,
        ordered by arc length."""
        key = tuple(lane_ids)
        if key not in self._stop_cache:
            path = self.path_polyline(key)
            found = []
            for sl in self.map.stop_lines:
                (x1, y1), (x2, y2) = sl.segment
                mx, my = (x1 + x2) / 2.0, (y1 + y2) / 2.0
                s, d, dist = path.project(mx, my)
                half_span = math.hypot(x2 - x1, y2 - y1) / 2.0
                if dist <= half_span + 0.5 and 0.0 < s < path.length:
                    found.append((sl, s))
            self._stop_cache[key] = tuple(sorted(found, key=lambda p: p[1]))
        return self._stop_cache[key]

    def route_stop_lines(self) -> tuple:
        return self.stop_lines_on(self.map.route)


_INDEX_CACHE: dict[int, tuple] = {}
_INDEX_CACHE_MAX = 32


def map_index(map_model: MapModel) -> MapIndex:
    """Memoized MapIndex; keyed by object identity with a strong reference so
    ids cannot be recycled while cached."""
    key = id(map_model)
    hit = _INDEX_CACHE.get(key)
    if hit is not None and hit[0] is map_model:
        return hit[1]
    idx = MapIndex(map_model)
    if len(_INDEX_CACHE) >= _INDEX_CACHE_MAX:
        _INDEX_CACHE.pop(next(iter(_INDEX_CACHE)))
    _INDEX_CACHE[key] = (map_model, idx)
    return idx


MAX_ROUTE_DISTANCE = 50.0  # m; beyond this projection refuses


def project_to_route(map_model: MapModel, p: Pose2D) -> FrenetCoord:
    """Project a pose onto the route centerline.

    Raises OutOfCorridor when the point is farther than 50 m away.
    """
    s, d, dist = map_index(map_model).route.project(p.x, p.y)
    if dist > MAX_ROUTE_DISTANCE:
        raise OutOfCorridor(f"point ({p.x:.1f}, {p.y:.1f}) is {dist:.1f} m from route")
    return FrenetCoord(s, d)


def embed_on_route(map_model: MapModel, fc: FrenetCoord) -> Pose2D:
    """Inverse of project_to_route away from curvature singularities."""
    return map_index(map_model).route.pose_at(fc.s, fc.d)


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    invariant: str
    element: str
    detail: str = ""

    def __str__(self) -> str:
        msg = f"{self.invariant} [{self.element}]"
        return f"{msg}: {self.detail}" if self.detail else msg


def _check_pose(v: list, pose: Pose2D, element: str) -> None:
    if not (math.isfinite(pose.x) and math.isfinite(pose.y) and math.isfinite(pose.heading)):
        v.append(Violation("pose_finite", element))
    elif not (-math.pi < pose.heading <= math.pi + 1e-12):
        v.append(Violation("heading_normalized", element, f"heading={pose.heading:.4f}"))


_SIMPLE_CACHE: dict = {}


def _polygon_is_simple_cached(vertices: tuple) -> bool:
    # derived scenarios share parent polygon tuples; the O(n^2) check is
    # worth memoizing by identity (the key keeps the tuple alive)
    key = id(vertices)
    hit = _SIMPLE_CACHE.get(key)
    if hit is not None and hit[0] is vertices:
        return hit[1]
    result = polygon_is_simple(vertices)
    if len(_SIMPLE_CACHE) >= 256:
        _SIMPLE_CACHE.pop(next(iter(_SIMPLE_CACHE)))
    _SIMPLE_CACHE[key] = (vertices, result)
    return result


def validate_scenario(sc: Scenario) -> list[Violation]:
    """Check every scenario invariant. Violations are data, not faults;
    an empty report means the scenario is valid."""
    v: list[Violation] = []

    # map: polygons
    for poly in sc.map.drivable_areas:
        if len(poly.vertices) < 3:
            v.append(Violation("polygon_vertices", poly.id, f"{len(poly.vertices)} < 3"))
            continue
        first, last = poly.vertices[0], poly.vertices[-1]
        if math.hypot(first[0] - last[0], first[1] - last[1]) < 1e-9:
            v.append(Violation("polygon_closed", poly.id, "explicit duplicate end vertex"))
        if not _polygon_is_simple_cached(poly.vertices):
            v.append(Violation("polygon_simple", poly.id, "self-intersecting"))

    # map: lanes
    lane_ids = set()
    for lane in sc.map.lanes:
        lane_ids.add(lane.id)
        pts = np.asarray(lane.centerline, dtype=float)
        if len(pts) < 2:
            v.append(Violation("centerline_points", lane.id, f"{len(pts)} < 2"))
        elif np.any(np.hypot(*np.diff(pts, axis=0).T) <= 0.0):
            v.append(Violation("centerline_segments", lane.id, "zero-length segment"))
        if lane.width <= 0:
            v.append(Violation("lane_width", lane.id))

    # map: route connectivity
    if not sc.map.route:
        v.append(Violation("route_nonempty", "route"))
    for i, rid in enumerate(sc.map.route):
        if rid not in lane_ids:
            v.append(Violation("route_exists", rid))
        elif i > 0 and sc.map.route[i - 1] in lane_ids:
            prev = sc.map.lane_by_id(sc.map.route[i - 1])
            if rid not in prev.successors:
                v.append(Violation("route_connected", rid, f"not a successor of {prev.id}"))

    # ego history
    if len(sc.ego_history) < HISTORY_STATES:
        v.append(
            Violation("history_length", "ego_history", f"{len(sc.ego_history)} < {HISTORY_STATES}")
        )
    for i, st in enumerate(sc.ego_history):
        _check_pose(v, st.pose, f"ego_history[{i}]")
        if not on_grid(st.timestamp):
            v.append(Violation("timestamp_grid", f"ego_history[{i}]", f"t={st.timestamp}"))
        if not (math.isfinite(st.velocity) and math.isfinite(st.acceleration)):
            v.append(Violation("state_finite", f"ego_history[{i}]"))
        elif st.velocity < -0.5:
            v.append(Violation("velocity_range", f"ego_history[{i}]", f"v={st.velocity:.2f}"))
    for a, b in zip(sc.ego_history, sc.ego_history[1:]):
        if abs((b.timestamp - a.timestamp) - TICK) > 1e-6:
            v.append(Violation("history_spacing", "ego_history"))
            break

    # expert trajectory
    wps = sc.expert_trajectory.waypoints
    if sc.expert_trajectory.frame != "world":
        v.append(Violation("expert_frame", "expert_trajectory", sc.expert_trajectory.frame))
    if len(wps) < 81:
        v.append(Violation("expert_length", "expert_trajectory", f"{len(wps)} states < 81 (8 s)"))
    for i, (pose, t) in enumerate(wps):
        _check_pose(v, pose, f"expert[{i}]")
        if not on_grid(t):
            v.append(Violation("timestamp_grid", f"expert[{i}]", f"t={t}"))
    for (pa, ta), (pb, tb) in zip(wps, wps[1:]):
        if abs((tb - ta) - TICK) > 1e-6:
            v.append(Violation("trajectory_spacing", "expert_trajectory"))
            break
    if sc.ego_history and wps:
        if abs(sc.ego_history[-1].timestamp - wps[0][1]) > 1e-6:
            v.append(
                Violation(
                    "history_contact",
                    "expert_trajectory",
                    f"history ends {sc.ego_history[-1].timestamp}, expert starts {wps[0][1]}",
                )
            )

    # expert stays in the drivable area
    if sc.map.drivable_areas and wps:
        idx = map_index(sc.map)
        pos = sc.expert_trajectory.positions()
        inside = idx.contains(pos)
        if not inside.all():
            bad = int(np.argmin(inside))
            v.append(Violation("expert_in_drivable", f"expert[{bad}]"))

    # agents
    for agent in sc.agents:
        if agent.length <= 0 or agent.width <= 0:
            v.append(Violation("footprint_positive", agent.id))
        if not agent.states:
            v.append(Violation("agent_states", agent.id, "empty"))
            continue
        for i, st in enumerate(agent.states):
            if not on_grid(st.timestamp):
                v.append(Violation("timestamp_grid", f"{agent.id}[{i}]", f"t={st.timestamp}"))
                break
        for a, b in zip(agent.states, agent.states[1:]):
            if abs((b.timestamp - a.timestamp) - TICK) > 1e-6:
                v.append(Violation("agent_spacing", agent.id))
                break
        for rid in agent.lane_path:
            if rid not in lane_ids:
                v.append(Violation("agent_lane_exists", agent.id, rid))

    return v


# ---------------------------------------------------------------------------
# serialization

SCHEMA_KEYS = {
    "scenario": {"id", "rng_seed", "command", "map", "ego_history", "agents", "expert_trajectory"},
    "map": {"drivable_areas", "lanes", "stop_lines", "route"},
    "polygon": {"id", "vertices"},
    "lane": {"id", "centerline", "width", "speed_limit", "successors"},
    "stop_line": {"id", "segment", "schedule"},
    "phase": {"t_start", "t_end", "state"},
    "ego_state": {"x", "y", "heading", "velocity", "acceleration", "t"},
    "agent": {"id", "length", "width", "behavior", "lane_path", "states", "idm"},
    "agent_state": {"x", "y", "heading", "velocity", "t"},
    "trajectory": {"frame", "waypoints"},
    "waypoint": {"x", "y", "heading", "t"},
}

_OPTIONAL = {"agent": {"idm"}}


def _expect(obj, kind: str, ctx: str) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{ctx}: expected object, got {type(obj).__name__}")
    allowed = SCHEMA_KEYS[kind]
    optional = _OPTIONAL.get(kind, set())
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = allowed - optional - set(obj)
    if missing:
        raise SchemaError(f"{ctx}: missing keys {sorted(missing)}")
    return obj


def _num(obj, ctx: str) -> float:
    if not isinstance(obj, (int, float)) or isinstance(obj, bool):
        raise SchemaError(f"{ctx}: expected number")
    return float(obj)


def _snap_time(t: float) -> float:
    k = round(t * 10.0)
    return grid_time(int(k)) if abs(t * 10.0 - k) <= 1e-6 else t


def _t3(t: float) -> float:
    return round(t, 3)


def scenario_to_dict(sc: Scenario) -> dict:
    def pose_fields(p: Pose2D) -> dict:
        return {"x": p.x, "y": p.y, "heading": p.heading}

    return {
        "id": sc.id,
        "rng_seed": sc.rng_seed,
        "command": sc.command.value,
        "map": {
            "drivable_areas": [
                {"id": p.id, "vertices": [list(v) for v in p.vertices]}
                for p in sc.map.drivable_areas
            ],
            "lanes": [
                {
                    "id": l.id,
                    "centerline": [list(v) for v in l.centerline],
                    "width": l.width,
                    "speed_limit": l.speed_limit,
                    "successors": list(l.successors),
                }
                for l in sc.map.lanes
            ],
            "stop_lines": [
                {
                    "id": s.id,
                    "segment": [list(s.segment[0]), list(s.segment[1])],
                    "schedule": [
                        {"t_start": _t3(ph.t_start), "t_end": _t3(ph.t_end), "state": ph.state.value}
                        for ph in s.schedule
                    ],
                }
                for s in sc.map.stop_lines
            ],
            "route": list(sc.map.route),
        },
        "ego_history": [
            {
                **pose_fields(st.pose),
                "velocity": st.velocity,
                "acceleration": st.acceleration,
                "t": _t3(st.timestamp),
            }
            for st in sc.ego_history
        ],
        "agents": [
            {
                "id": a.id,
                "length": a.length,
                "width": a.width,
                "behavior": a.behavior.value,
                "lane_path": list(a.lane_path),
                **({"idm": a.idm} if a.idm is not None else {}),
                "states": [
                    {**pose_fields(st.pose), "velocity": st.velocity, "t": _t3(st.timestamp)}
                    for st in a.states
                ],
            }
            for a in sc.agents
        ],
        "expert_trajectory": {
            "frame": sc.expert_trajectory.frame,
            "waypoints": [
                {**pose_fields(p), "t": _t3(t)} for p, t in sc.expert_trajectory.waypoints
            ],
        },
    }


def scenario_from_dict(doc: dict) -> Scenario:
    d = _expect(doc, "scenario", "scenario")
    md = _expect(d["map"], "map", "map")

    polys = tuple(
        DrivablePolygon(
            id=str(_expect(p, "polygon", f"drivable_areas[{i}]")["id"]),
            vertices=tuple((_num(v[0], "vertex"), _num(v[1], "vertex")) for v in p["vertices"]),
        )
        for i, p in enumerate(md["drivable_areas"])
    )
    lanes = tuple(
        Lane(
            id=str(_expect(l, "lane", f"lanes[{i}]")["id"]),
            centerline=tuple((_num(v[0], "pt"), _num(v[1], "pt")) for v in l["centerline"]),
            width=_num(l["width"], "lane.width"),
            speed_limit=_num(l["speed_limit"], "lane.speed_limit"),
            successors=tuple(str(s) for s in l["successors"]),
        )
        for i, l in enumerate(md["lanes"])
    )
    stop_lines = tuple(
        StopLine(
            id=str(_expect(s, "stop_line", f"stop_lines[{i}]")["id"]),
            segment=(
                (_num(s["segment"][0][0], "seg"), _num(s["segment"][0][1], "seg")),
                (_num(s["segment"][1][0], "seg"), _num(s["segment"][1][1], "seg")),
            ),
            schedule=tuple(
                LightPhase(
                    t_start=_num(_expect(ph, "phase", "phase")["t_start"], "t_start"),
                    t_end=_num(ph["t_end"], "t_end"),
                    state=_parse_enum(LightState, ph["state"], "phase.state"),
                )
                for ph in s["schedule"]
            ),
        )
        for i, s in enumerate(md["stop_lines"])
    )

    def parse_ego(e: dict, ctx: str) -> EgoState:
        e = _expect(e, "ego_state", ctx)
        return EgoState(
            pose=Pose2D(_num(e["x"], ctx), _num(e["y"], ctx), _num(e["heading"], ctx)),
            velocity=_num(e["velocity"], ctx),
            acceleration=_num(e["acceleration"], ctx),
            timestamp=_snap_time(_num(e["t"], ctx)),
        )

    agents = tuple(
        AgentTrack(
            id=str(_expect(a, "agent", f"agents[{i}]")["id"]),
            length=_num(a["length"], "agent.length"),
            width=_num(a["width"], "agent.width"),
            behavior=_parse_enum(AgentBehavior, a["behavior"], "agent.behavior"),
            lane_path=tuple(str(x) for x in a["lane_path"]),
            idm=dict(a["idm"]) if a.get("idm") is not None else None,
            states=tuple(
                AgentState(
                    pose=Pose2D(_num(s["x"], "agent"), _num(s["y"], "agent"), _num(s["heading"], "agent")),
                    velocity=_num(s["velocity"], "agent"),
                    timestamp=_snap_time(_num(s["t"], "agent")),
                )
                for s in (_expect(s, "agent_state", f"agents[{i}].states") for s in a["states"])
            ),
        )
        for i, a in enumerate(d["agents"])
    )

    traj = _expect(d["expert_trajectory"], "trajectory", "expert_trajectory")
    waypoints = tuple(
        (
            Pose2D(_num(w["x"], "wp"), _num(w["y"], "wp"), _num(w["heading"], "wp")),
            _snap_time(_num(w["t"], "wp")),
        )
        for w in (_expect(w, "waypoint", "expert waypoint") for w in traj["waypoints"])
    )

    if not isinstance(d["rng_seed"], int) or isinstance(d["rng_seed"], bool):
        raise SchemaError("rng_seed: expected integer")

    return Scenario(
        id=str(d["id"]),
        map=MapModel(drivable_areas=polys, lanes=lanes, stop_lines=stop_lines, route=tuple(str(r) for r in md["route"])),
        ego_history=tuple(parse_ego(e, f"ego_history[{i}]") for i, e in enumerate(d["ego_history"])),
        agents=agents,
        command=_parse_enum(DrivingCommand, d["command"], "command"),
        expert_trajectory=Trajectory(waypoints=waypoints, frame=str(traj["frame"])),
        rng_seed=int(d["rng_seed"]),
    )


def _parse_enum(cls, value, ctx: str):
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(f"{ctx}: invalid value {value!r}") from None


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    """Parse, schema-check, and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    sc = scenario_from_dict(doc)
    report = validate_scenario(sc)
    if report:
        raise ValidationError(f"{path}: {report[0]}" + (f" (+{len(report) - 1} more)" if len(report) > 1 else ""))
    return sc


def ego_states_from_trajectory(traj: Trajectory, initial_velocity: Optional[float] = None) -> list[EgoState]:
    """Convert world-frame waypoints into EgoStates with finite-difference
    velocities and accelerations."""
    wps = traj.waypoints
    n = len(wps)
    vs = np.zeros(n)
    for i in range(n - 1):
        pa, pb = wps[i][0], wps[i + 1][0]
        vs[i] = math.hypot(pb.x - pa.x, pb.y - pa.y) / TICK
    vs[-1] = vs[-2] if n > 1 else (initial_velocity or 0.0)
    accs = np.zeros(n)
    accs[:-1] = np.diff(vs) / TICK
    if n > 1:
        accs[-1] = accs[-2]
    return [
        EgoState(pose=wps[i][0], velocity=float(vs[i]), acceleration=float(accs[i]), timestamp=wps[i][1])
        for i in range(n)
    ]
