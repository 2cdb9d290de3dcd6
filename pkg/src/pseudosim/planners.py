"""Planner interface and the rule-based planner zoo.

Planners consume an ego-frame BEV snapshot (history, agent boxes, map view,
command) and emit a 40-waypoint ego-local trajectory. The zoo spans a
quality spectrum: constant-kinematics extrapolation, IDM centerline
followers, a PDM-closed-style proposal scorer, and a degradation wrapper
that injects waypoint jitter, heading bias, and plan latency. An external
wire protocol lets planners in any language join over stdin/stdout.
"""

from __future__ import annotations

import hashlib
import json
import math
import select
import subprocess
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import DEFAULT_LQR, DEFAULT_VEHICLE, track_trajectory
from .errors import ExitError, ExternalTimeout, NoLaneError, PlannerError, ProtocolError
from .geometry import Polyline, Pose2D, boxes_overlap, obb_corners, points_in_polygon, wrap_angle
from .scene import TICK, DrivingCommand, EgoState, LightState, Trajectory, grid_time
from .traffic import IdmParams, idm_acceleration

PLAN_STEPS = 40
PROTOCOL_VERSION = "pseudosim/1"


@dataclass(frozen=True)
class AgentBox:
    pose: Pose2D  # ego frame
    velocity: float
    length: float
    width: float


@dataclass(frozen=True)
class LaneView:
    id: str
    centerline: tuple  # ego-frame points
    width: float
    speed_limit: float
    successors: tuple


@dataclass(frozen=True)
class StopLineView:
    id: str
    segment: tuple  # ego-frame endpoints
    state: LightState  # resolved at the inference time


@dataclass(frozen=True)
class MapView:
    drivable: tuple  # of vertex tuples, ego frame
    lanes: tuple  # of LaneView
    stop_lines: tuple  # of StopLineView


@dataclass(frozen=True)
class PlannerInput:
    ego_history: tuple  # 16 EgoState, ego-local, newest at origin, t <= 0
    agent_boxes: tuple
    map_view: MapView
    command: DrivingCommand


@dataclass(frozen=True)
class PlannerOutput:
    trajectory: Trajectory  # ego-local, 40 waypoints at 0.1 s

    def validate(self) -> None:
        wps = self.trajectory.waypoints
        if len(wps) != PLAN_STEPS:
            raise ProtocolError(f"expected {PLAN_STEPS} waypoints, got {len(wps)}")
        for pose, _ in wps:
            if not (math.isfinite(pose.x) and math.isfinite(pose.y) and math.isfinite(pose.heading)):
                raise ProtocolError("non-finite waypoint")


def _waypoints_from_xyh(xyh) -> Trajectory:
    return Trajectory(
        waypoints=tuple(
            (Pose2D(float(x), float(y), float(h)), grid_time(k + 1)) for k, (x, y, h) in enumerate(xyh)
        ),
        frame="ego-local",
    )


class Planner:
    planner_id: str = "planner"

    def plan(self, inp: PlannerInput, scenario_id: str, tick: int) -> PlannerOutput:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# constant kinematics

class ConstantKinematicsPlanner(Planner):
    """Extrapolates the current speed (scaled) and yaw rate (biased)."""

    def __init__(self, speed_scale: float = 1.0, curvature_bias: float = 0.0, planner_id: str = None):
        self.speed_scale = speed_scale
        self.curvature_bias = curvature_bias
        self.planner_id = planner_id or f"ck-{speed_scale:g}-{curvature_bias:g}"

    def plan(self, inp: PlannerInput, scenario_id: str, tick: int) -> PlannerOutput:
        h = inp.ego_history
        v = max(h[-1].velocity, 0.0) * self.speed_scale
        yaw_rate = self.curvature_bias
        if len(h) >= 2:
            yaw_rate += wrap_angle(h[-1].pose.heading - h[-2].pose.heading) / TICK
        pts = []
        for k in range(1, PLAN_STEPS + 1):
            t = k * TICK
            if abs(yaw_rate) < 1e-9:
                pts.append((v * t, 0.0, 0.0))
            else:
                r = v / yaw_rate
                th = yaw_rate * t
                pts.append((r * math.sin(th), r * (1.0 - math.cos(th)), wrap_angle(th)))
        return PlannerOutput(_waypoints_from_xyh(pts))


# ---------------------------------------------------------------------------
# lane-following helpers shared by IDM and PDM planners

MAX_LAT_ACCEL = 2.5  # curvature speed cap used by lane-following planners


def _lane_lines(view: MapView) -> dict:
    return {lv.id: Polyline(lv.centerline) for lv in view.lanes}


def _nearest_same_direction(view: MapView, lines: dict) -> tuple:
    """(lane_id, s, d, dist) of the nearest centerline pointing forward in
    the ego frame; NoLaneError beyond 10 m."""
    best = None
    for lv in view.lanes:
        line = lines[lv.id]
        s, d, dist = line.project(0.0, 0.0)
        if math.cos(line.heading_at(s)) <= 0.0:  # opposes ego heading (+x)
            continue
        if best is None or dist < best[3]:
            best = (lv.id, s, d, dist)
    if best is None or best[3] > 10.0:
        raise NoLaneError("no same-direction centerline within 10 m")
    return best


def _successor_by_command(view: MapView, lines: dict, lane_id: str, command: DrivingCommand) -> Optional[str]:
    lane = next(lv for lv in view.lanes if lv.id == lane_id)
    if not lane.successors:
        return None
    scored = []
    for succ_id in lane.successors:
        if succ_id not in lines:
            continue
        line = lines[succ_id]
        turn = wrap_angle(line.heading_at(line.length) - line.heading_at(0.0))
        scored.append((succ_id, turn))
    if not scored:
        return None
    if command is DrivingCommand.LEFT:
        return max(scored, key=lambda p: p[1])[0]
    if command is DrivingCommand.RIGHT:
        return min(scored, key=lambda p: p[1])[0]
    return min(scored, key=lambda p: abs(p[1]))[0]


def _build_path(view: MapView, lines: dict, command: DrivingCommand, needed: float) -> tuple:
    """(path Polyline, s0, d0, lane widths along path) following successors
    per the driving command until `needed` meters past the ego projection."""
    lane_id, s0, d0, _ = _nearest_same_direction(view, lines)
    ids = [lane_id]
    total = lines[lane_id].length
    while total - s0 < needed:
        nxt = _successor_by_command(view, lines, ids[-1], command)
        if nxt is None or nxt in ids:
            break
        ids.append(nxt)
        total += lines[nxt].length
    pts = [lines[ids[0]].points]
    for lid in ids[1:]:
        nxt_pts = lines[lid].points
        if np.hypot(*(nxt_pts[0] - pts[-1][-1])) < 1e-6:
            nxt_pts = nxt_pts[1:]
        pts.append(nxt_pts)
    path = Polyline(np.vstack(pts))
    widths = [(lines[lid].length, next(lv.width for lv in view.lanes if lv.id == lid)) for lid in ids]
    speed_limits = [(lines[lid].length, next(lv.speed_limit for lv in view.lanes if lv.id == lid)) for lid in ids]
    return path, s0, d0, widths, speed_limits


def _path_attr_at(spans: list, s: float) -> float:
    acc = 0.0
    for length, value in spans:
        acc += length
        if s <= acc:
            return value
    return spans[-1][1]


class _CurvatureCap:
    """Per-path curvature speed cap sampled once on a 2 m grid."""

    def __init__(self, path: Polyline):
        grid = np.arange(0.0, path.length + 2.0, 2.0)
        headings = path.heading_at_batch(grid)
        dh = np.abs(np.diff(np.unwrap(headings)))
        kappa = np.concatenate([dh, [0.0]]) / 2.0
        self.grid = grid
        self.v_curve = np.sqrt(MAX_LAT_ACCEL / np.maximum(kappa, 1e-6))

    def cap(self, s: float, limit: float) -> float:
        return min(limit, float(np.interp(s, self.grid, self.v_curve)))


def _leader_on_path(path: Polyline, s_ego: float, boxes, widths, ego_length: float) -> Optional[tuple]:
    best = None
    for box in boxes:
        s_b, d_b, _ = path.project(box.pose.x, box.pose.y)
        ahead = s_b - s_ego
        if ahead <= 0.0 or ahead > 100.0:
            continue
        if abs(d_b) > _path_attr_at(widths, s_b) / 2.0:
            continue
        gap = ahead - ego_length / 2.0 - box.length / 2.0
        tangent = path.heading_at(s_b)
        v_along = box.velocity * math.cos(wrap_angle(box.pose.heading - tangent))
        if best is None or ahead < best[0]:
            best = (ahead, v_along, gap)
    if best is None:
        return None
    return best[1], best[2]


def _red_line_on_path(path: Polyline, s_ego: float, view: MapView) -> Optional[float]:
    nearest = None
    for sl in view.stop_lines:
        if sl.state is not LightState.RED:
            continue
        (x1, y1), (x2, y2) = sl.segment
        s_l, d_l, dist = path.project((x1 + x2) / 2.0, (y1 + y2) / 2.0)
        half_span = math.hypot(x2 - x1, y2 - y1) / 2.0
        if dist > half_span + 0.5 or s_l <= s_ego:
            continue
        if nearest is None or s_l < nearest:
            nearest = s_l
    return nearest


def _integrate_profile(
    inp: PlannerInput,
    path: Polyline,
    s0: float,
    d0: float,
    widths,
    speed_limits,
    idm: IdmParams,
    v0_scale: float,
    lateral_target: float,
    ego_length: float,
    curve_cap: Optional[_CurvatureCap] = None,
    leader: Optional[tuple] = None,
) -> list:
    """IDM speed profile along the path with a cosine lateral blend from the
    current offset to the target; returns 40 (x, y, heading) triples."""
    v = max(inp.ego_history[-1].velocity, 0.0)
    s = s0
    blend = max(12.0, 2.0 * max(v, 1.0))
    if curve_cap is None:
        curve_cap = _CurvatureCap(path)
    if leader is None:
        leader = _leader_on_path(path, s0, inp.agent_boxes, widths, ego_length)
    red_s = _red_line_on_path(path, s0, inp.map_view)

    pts = []
    lead_s = None
    if leader is not None:
        v_lead, gap0 = leader
        lead_s = s0 + gap0 + ego_length / 2.0  # path position of the leader gap origin
    for k in range(PLAN_STEPS):
        limit = _path_attr_at(speed_limits, s) * v0_scale
        v_tgt = max(curve_cap.cap(s, limit), 0.3)
        p = IdmParams(v0=v_tgt, T=idm.T, s0=idm.s0, a_max=idm.a_max, b=idm.b, delta=idm.delta)
        cands = [idm_acceleration(v, 0.0, math.inf, p)]
        if leader is not None:
            v_lead, _ = leader
            gap = lead_s + max(v_lead, 0.0) * k * TICK - s  # leader coasts at v_lead
            if gap <= 0.2:
                cands.append(-2.0 * p.b)
            else:
                cands.append(idm_acceleration(v, max(v_lead, 0.0), gap, p))
        if red_s is not None:
            gap_line = red_s - s - ego_length / 2.0
            if gap_line > 0.0:
                cands.append(idm_acceleration(v, 0.0, gap_line, p))
        a = min(cands)
        v = max(v + a * TICK, 0.0)
        s = min(s + v * TICK, path.length)
        u = min(max((s - s0) / blend, 0.0), 1.0)
        d = lateral_target + (d0 - lateral_target) * 0.5 * (1.0 + math.cos(math.pi * u))
        pose = path.pose_at(s, d)
        pts.append([pose.x, pose.y, pose.heading])

    # headings from consecutive positions (offset-curve consistent)
    arr = np.asarray(pts)
    deltas = np.diff(arr[:, :2], axis=0)
    moved = np.hypot(deltas[:, 0], deltas[:, 1]) > 1e-4
    for k in range(len(arr) - 1):
        if moved[k]:
            arr[k, 2] = math.atan2(deltas[k, 1], deltas[k, 0])
        elif k > 0:
            arr[k, 2] = arr[k - 1, 2]
    if len(arr) > 1:
        arr[-1, 2] = arr[-2, 2]
    return [tuple(row) for row in arr]


class IdmPlanner(Planner):
    """Follows the nearest same-direction centerline with IDM speed control
    against the nearest leading box and Red stop lines."""

    def __init__(self, params: IdmParams = IdmParams(), v0_scale: float = 1.0, planner_id: str = None):
        self.params = params
        self.v0_scale = v0_scale
        self.planner_id = planner_id or f"idm-{v0_scale:g}-T{params.T:g}"

    def plan(self, inp: PlannerInput, scenario_id: str, tick: int) -> PlannerOutput:
        lines = _lane_lines(inp.map_view)
        v = max(inp.ego_history[-1].velocity, 1.0)
        path, s0, d0, widths, limits = _build_path(
            inp.map_view, lines, inp.command, needed=v * 4.0 + 60.0
        )
        pts = _integrate_profile(
            inp, path, s0, d0, widths, limits, self.params, self.v0_scale, 0.0, DEFAULT_VEHICLE.footprint[0]
        )
        return PlannerOutput(_waypoints_from_xyh(pts))


class PdmClosedPlanner(Planner):
    """Scores a grid of lateral-offset x speed-fraction proposals with an
    internal reduced-score proxy (tracked rollout against constant-velocity
    agent predictions) and returns the argmax."""

    def __init__(
        self,
        speed_fractions: tuple = (0.25, 0.5, 0.75, 1.0),
        lateral_offsets: tuple = (-1.0, 0.0, 1.0),
        planner_id: str = None,
    ):
        self.speed_fractions = speed_fractions
        self.lateral_offsets = lateral_offsets
        self.planner_id = planner_id or "pdm-closed"

    def plan(self, inp: PlannerInput, scenario_id: str, tick: int) -> PlannerOutput:
        lines = _lane_lines(inp.map_view)
        v_now = max(inp.ego_history[-1].velocity, 1.0)
        path, s0, d0, widths, limits = _build_path(
            inp.map_view, lines, inp.command, needed=v_now * 4.0 + 60.0
        )
        ego_l, ego_w = DEFAULT_VEHICLE.footprint

        # one-step constant-velocity prediction shared by all proposals
        pred = []
        for box in inp.agent_boxes:
            c, s = math.cos(box.pose.heading), math.sin(box.pose.heading)
            pred.append((box, box.velocity * c, box.velocity * s))

        drivable = [np.asarray(p, dtype=float) for p in inp.map_view.drivable]

        curve_cap = _CurvatureCap(path)
        leader = _leader_on_path(path, s0, inp.agent_boxes, widths, ego_l)
        candidates = []
        for frac in self.speed_fractions:
            for offset in self.lateral_offsets:
                pts = _integrate_profile(
                    inp, path, s0, d0, widths, limits, IdmParams(), frac, offset, ego_l,
                    curve_cap=curve_cap, leader=leader,
                )
                candidates.append((frac, offset, pts))
        brake = self._brake_candidate(inp, path, s0, d0, widths)

        scored = []
        for frac, offset, pts in candidates:
            score = self._proxy_score(inp, pts, pred, drivable, path, s0, v_now, ego_l, ego_w)
            # quantize so near-ties resolve by the deterministic preference
            # for small offsets and high speed instead of tracking noise
            scored.append((round(score, 2), -abs(offset), frac, pts))
        scored.sort(key=lambda c: (-c[0], -c[1], -c[2]))
        best = scored[0]
        if best[0] <= 0.0:
            return PlannerOutput(_waypoints_from_xyh(brake))
        return PlannerOutput(_waypoints_from_xyh(best[3]))

    def _brake_candidate(self, inp: PlannerInput, path, s0, d0, widths) -> list:
        v = max(inp.ego_history[-1].velocity, 0.0)
        s = s0
        pts = []
        for _ in range(PLAN_STEPS):
            v = max(v - 3.5 * TICK, 0.0)
            s += v * TICK
            pose = path.pose_at(s, d0)
            pts.append((pose.x, pose.y, pose.heading))
        return pts

    def _proxy_score(self, inp, pts, pred, drivable, path, s0, v_now, ego_l, ego_w) -> float:
        plan = _waypoints_from_xyh(pts)
        init = EgoState(pose=Pose2D(0.0, 0.0, 0.0), velocity=v_now, acceleration=0.0, timestamp=0.0)
        states = track_trajectory(init, plan, DEFAULT_VEHICLE, DEFAULT_LQR)

        xy = np.array([[st.pose.x, st.pose.y] for st in states])
        nc = 1.0
        ttc = 1.0
        for box, vx, vy in pred:
            for k in range(0, len(states), 2):
                t = k * TICK
                bp = Pose2D(box.pose.x + vx * t, box.pose.y + vy * t, box.pose.heading)
                if boxes_overlap(states[k].pose, (ego_l, ego_w), bp, (box.length, box.width)):
                    nc = 0.0
                    break
                bp1 = Pose2D(box.pose.x + vx * (t + 1.0), box.pose.y + vy * (t + 1.0), box.pose.heading)
                ego1 = Pose2D(
                    states[k].pose.x + states[k].velocity * math.cos(states[k].pose.heading),
                    states[k].pose.y + states[k].velocity * math.sin(states[k].pose.heading),
                    states[k].pose.heading,
                )
                if states[k].velocity > 0.5 and boxes_overlap(ego1, (ego_l, ego_w), bp1, (box.length, box.width)):
                    ttc = 0.0
            if nc == 0.0:
                break

        dac = 1.0
        if drivable:
            corners = np.vstack(
                [obb_corners(states[k].pose, ego_l, ego_w) for k in range(0, len(states), 4)]
            )
            inside = np.zeros(len(corners), dtype=bool)
            for poly in drivable:
                inside |= points_in_polygon(corners, poly)
            if not inside.all():
                dac = 0.0

        s_end, _, _ = path.project(xy[-1, 0], xy[-1, 1])
        denom = max(v_now * 4.0, 1.0)
        ep = min(max(s_end - s0, 0.0) / denom, 1.0)
        return nc * dac * (5.0 * ep + 5.0 * ttc) / 10.0


# ---------------------------------------------------------------------------
# degradation wrapper

class DegradedPlanner(Planner):
    """Adds seeded waypoint jitter, a constant heading bias, and plan
    latency (stale plans reused for `latency` ticks) to a base planner."""

    def __init__(self, base: Planner, jitter: float = 0.0, heading_bias: float = 0.0, latency: int = 0, seed: int = 0, planner_id: str = None):
        self.base = base
        self.jitter = jitter
        self.heading_bias = heading_bias
        self.latency = latency
        self.seed = seed
        self.planner_id = planner_id or f"{base.planner_id}+noise"
        self._cache: dict = {}

    def plan(self, inp: PlannerInput, scenario_id: str, tick: int) -> PlannerOutput:
        if self.latency > 0:
            cached = self._cache.get(scenario_id)
            if cached is not None and tick - cached[0] <= self.latency:
                return cached[1]
        out = self._degrade(self.base.plan(inp, scenario_id, tick), scenario_id, tick)
        if self.latency > 0:
            self._cache = {scenario_id: (tick, out)}
        return out

    def _degrade(self, out: PlannerOutput, scenario_id: str, tick: int) -> PlannerOutput:
        if self.jitter == 0.0 and self.heading_bias == 0.0:
            return out
        digest = hashlib.sha256(
            f"{self.seed}|{scenario_id}|{tick}".encode("utf-8")
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        c, s = math.cos(self.heading_bias), math.sin(self.heading_bias)
        pts = []
        for pose, _ in out.trajectory.waypoints:
            x = c * pose.x - s * pose.y
            y = s * pose.x + c * pose.y
            if self.jitter > 0.0:
                noise = rng.normal(0.0, self.jitter, size=2)
                x += noise[0]
                y += noise[1]
            pts.append((x, y, wrap_angle(pose.heading + self.heading_bias)))
        return PlannerOutput(_waypoints_from_xyh(pts))


# ---------------------------------------------------------------------------
# external wire protocol

def _pose_dict(p: Pose2D) -> dict:
    return {"x": p.x, "y": p.y, "heading": p.heading}


def planner_input_to_dict(inp: PlannerInput) -> dict:
    return {
        "ego_history": [
            {**_pose_dict(st.pose), "velocity": st.velocity, "acceleration": st.acceleration, "t": round(st.timestamp, 3)}
            for st in inp.ego_history
        ],
        "agent_boxes": [
            {**_pose_dict(b.pose), "velocity": b.velocity, "length": b.length, "width": b.width}
            for b in inp.agent_boxes
        ],
        "map_view": {
            "drivable": [[list(v) for v in poly] for poly in inp.map_view.drivable],
            "lanes": [
                {
                    "id": lv.id,
                    "centerline": [list(v) for v in lv.centerline],
                    "width": lv.width,
                    "speed_limit": lv.speed_limit,
                    "successors": list(lv.successors),
                }
                for lv in inp.map_view.lanes
            ],
            "stop_lines": [
                {"id": sv.id, "segment": [list(sv.segment[0]), list(sv.segment[1])], "state": sv.state.value}
                for sv in inp.map_view.stop_lines
            ],
        },
        "command": inp.command.value,
    }


class ExternalPlanner(Planner):
    """Line-delimited JSON over a subprocess's stdin/stdout.

    The child greets with {"protocol": "pseudosim/1"}; each request line is
    {"scenario_id", "tick", "input"}; each response line carries
    {"waypoints": [[x, y, heading] x 40]}. 10 s timeout per request.
    """

    TIMEOUT = 10.0

    def __init__(self, argv: list, planner_id: str = "external"):
        self.planner_id = planner_id
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        greeting = self._read_line()
        try:
            doc = json.loads(greeting)
        except json.JSONDecodeError:
            raise ProtocolError(f"bad handshake line: {greeting!r}") from None
        if doc.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol: {doc.get('protocol')!r}")

    def _read_line(self) -> str:
        if self._proc.poll() is not None:
            raise ExitError(f"external planner exited with {self._proc.returncode}")
        ready, _, _ = select.select([self._proc.stdout], [], [], self.TIMEOUT)
        if not ready:
            raise ExternalTimeout(f"no response within {self.TIMEOUT} s")
        line = self._proc.stdout.readline()
        if line == "":
            raise ExitError("external planner closed its stdout")
        return line

    def plan(self, inp: PlannerInput, scenario_id: str, tick: int) -> PlannerOutput:
        request = {"scenario_id": scenario_id, "tick": tick, "input": planner_input_to_dict(inp)}
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError):
            raise ExitError("external planner pipe closed") from None
        line = self._read_line()
        try:
            doc = json.loads(line)
            waypoints = doc["waypoints"]
            out = PlannerOutput(_waypoints_from_xyh([(float(x), float(y), float(h)) for x, y, h in waypoints]))
        except ProtocolError:
            raise
        except Exception as e:
            raise ProtocolError(f"malformed response: {e}") from None
        out.validate()
        return out

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5.0)


# ---------------------------------------------------------------------------
# zoo construction

def build_planner(spec: dict) -> Planner:
    """Instantiate a planner from a manifest entry."""
    kind = spec["kind"]
    params = spec.get("params", {})
    planner_id = spec.get("id")
    if kind == "constant_kinematics":
        base = ConstantKinematicsPlanner(
            speed_scale=params.get("speed_scale", 1.0),
            curvature_bias=params.get("curvature_bias", 0.0),
            planner_id=planner_id,
        )
    elif kind == "idm":
        idm = IdmParams(
            v0=params.get("v0", 13.0),
            T=params.get("T", 1.5),
            s0=params.get("s0", 2.0),
            a_max=params.get("a_max", 1.5),
            b=params.get("b", 2.0),
            delta=params.get("delta", 4.0),
        )
        base = IdmPlanner(params=idm, v0_scale=params.get("v0_scale", 1.0), planner_id=planner_id)
    elif kind == "pdm_closed":
        base = PdmClosedPlanner(
            speed_fractions=tuple(params.get("speed_fractions", (0.25, 0.5, 0.75, 1.0))),
            lateral_offsets=tuple(params.get("lateral_offsets", (-1.0, 0.0, 1.0))),
            planner_id=planner_id,
        )
    elif kind == "external":
        base = ExternalPlanner(argv=list(params["argv"]), planner_id=planner_id or "external")
    else:
        raise PlannerError(planner_id or kind, f"unknown planner kind '{kind}'")

    degrade = spec.get("degrade")
    if degrade:
        return DegradedPlanner(
            base,
            jitter=degrade.get("jitter", 0.0),
            heading_bias=degrade.get("heading_bias", 0.0),
            latency=degrade.get("latency", 0),
            seed=degrade.get("seed", 0),
            planner_id=planner_id,
        )
    return base


def default_zoo() -> list:
    """22 planner specs spanning the quality spectrum: constant-kinematics,
    IDM, and PDM-closed families plus degraded variants."""
    zoo = []
    for scale, bias, tag in [
        (1.0, 0.0, "ck-full"),
        (0.7, 0.0, "ck-slow"),
        (0.4, 0.0, "ck-crawl"),
        (0.15, 0.0, "ck-creep"),
        (1.0, 0.03, "ck-drift-l"),
        (1.0, -0.03, "ck-drift-r"),
    ]:
        zoo.append({"id": tag, "kind": "constant_kinematics", "params": {"speed_scale": scale, "curvature_bias": bias}})
    zoo.append({"id": "ck-jitter", "kind": "constant_kinematics", "params": {"speed_scale": 1.0}, "degrade": {"jitter": 0.4, "seed": 11}})

    for v0s, T, tag in [(1.0, 1.5, "idm-default"), (1.0, 1.0, "idm-fast"), (0.8, 2.5, "idm-cautious"), (0.6, 2.0, "idm-slow")]:
        zoo.append({"id": tag, "kind": "idm", "params": {"v0_scale": v0s, "T": T}})
    zoo.append({"id": "idm-jitter-s", "kind": "idm", "params": {}, "degrade": {"jitter": 0.25, "seed": 21}})
    zoo.append({"id": "idm-jitter-m", "kind": "idm", "params": {}, "degrade": {"jitter": 0.5, "seed": 22}})
    zoo.append({"id": "idm-bias", "kind": "idm", "params": {}, "degrade": {"heading_bias": 0.02, "seed": 23}})
    zoo.append({"id": "idm-latency", "kind": "idm", "params": {}, "degrade": {"latency": 4, "seed": 24}})

    zoo.append({"id": "pdm-default", "kind": "pdm_closed", "params": {}})
    zoo.append({"id": "pdm-conservative", "kind": "pdm_closed", "params": {"speed_fractions": (0.25, 0.5, 0.75)}})
    zoo.append({"id": "pdm-narrow", "kind": "pdm_closed", "params": {"lateral_offsets": (0.0,)}})
    zoo.append({"id": "pdm-fast", "kind": "pdm_closed", "params": {"speed_fractions": (0.75, 1.0)}})
    zoo.append({"id": "pdm-jitter", "kind": "pdm_closed", "params": {}, "degrade": {"jitter": 0.3, "seed": 31}})
    zoo.append({"id": "pdm-latency", "kind": "pdm_closed", "params": {}, "degrade": {"latency": 3, "seed": 32}})
    zoo.append({"id": "pdm-bias", "kind": "pdm_closed", "params": {}, "degrade": {"heading_bias": 0.015, "seed": 33}})
    return zoo
