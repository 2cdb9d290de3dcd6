"""Two-stage pseudo-simulation and the reference closed-loop simulator.

Stage 1 runs one planner inference on the original observation and executes
the committed plan for 4 s against reactive traffic. Stage 2 repeats the
pipeline on each pre-generated synthetic observation and fuses the scores
with a Gaussian proximity weighting anchored at the Stage-1 rollout
endpoint. The closed loop re-plans at every 10 Hz tick for 8 s (80
inferences) and serves as the correlation ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dynamics import BicycleState, DEFAULT_LQR, DEFAULT_VEHICLE, step_along_plan, track_trajectory
from .errors import PlannerError, PseudosimError, StageError
from .geometry import Pose2D, points_to_frame, transform_from_frame, transform_to_frame, wrap_angle
from .metrics import (
    ENGINE,
    HumanReference,
    MetricConstants,
    MetricWeights,
    Rollout,
    SubscoreVector,
    apply_human_filter,
    compose_epdms,
    compute_subscores,
    penalty_product,
    score_rollout,
    splice_comfort,
    weighted_average,
)
from .planners import AgentBox, LaneView, MapView, Planner, PlannerInput, StopLineView
from .scene import TICK, EgoState, Scenario, Trajectory, ego_states_from_trajectory, grid_time, map_index
from .traffic import init_traffic, step_traffic, traffic_rollout, agent_poses_at

PLAN_TICKS = 40
CLOSED_LOOP_TICKS = 80
MAP_CLIP_RADIUS = 100.0


@dataclass(frozen=True)
class AggregationConfig:
    sigma2: float = 0.1  # m^2
    stage_mode: str = "product"  # product | mean | hybrid | stage1
    weighting: str = "gaussian"  # gaussian | uniform | knn
    knn_k: int = 3

    def __post_init__(self):
        assert self.sigma2 > 0.0
        assert self.stage_mode in ("product", "mean", "hybrid", "stage1")
        assert self.weighting in ("gaussian", "uniform", "knn")
        assert self.knn_k >= 1


@dataclass(frozen=True)
class StageOneResult:
    s1: float
    endpoint: tuple  # (x, y), simulated rollout endpoint, world frame
    rollout: Rollout
    subscores: SubscoreVector  # filtered (as composed)
    raw_subscores: SubscoreVector


@dataclass(frozen=True)
class ObservationResult:
    index: int
    score: float
    position: tuple  # start point x^i
    weight_raw: float
    weight: float  # normalized
    subscores: SubscoreVector
    raw_subscores: SubscoreVector


@dataclass(frozen=True)
class StageTwoResult:
    observations: tuple  # of ObservationResult
    s2: float
    failed_indices: tuple = ()


@dataclass(frozen=True)
class CombinedScore:
    s_combined: float
    s1: float
    s2: Optional[float]
    scenario_id: str
    planner_id: str
    stage_mode: str
    inference_count: int


@dataclass(frozen=True)
class ClosedLoopResult:
    cls: Optional[float]  # None when the planner failed
    inference_count: int
    subscores: Optional[SubscoreVector]
    raw_subscores: Optional[SubscoreVector]
    failure: str = ""


# ---------------------------------------------------------------------------
# planner input construction

def build_planner_input(sc: Scenario, history: tuple, ts, t: float) -> PlannerInput:
    """Ego-frame BEV snapshot at time t, clipped to 100 m."""
    frame = history[-1].pose
    idx = map_index(sc.map)

    local_history = tuple(
        EgoState(
            pose=transform_to_frame(st.pose, frame),
            velocity=st.velocity,
            acceleration=st.acceleration,
            timestamp=round(st.timestamp - t, 3),
        )
        for st in history[-16:]
    )

    boxes = []
    for agent, pose, vel in agent_poses_at(sc, ts, t):
        if math.hypot(pose.x - frame.x, pose.y - frame.y) > MAP_CLIP_RADIUS:
            continue
        boxes.append(
            AgentBox(
                pose=transform_to_frame(pose, frame),
                velocity=vel,
                length=agent.length,
                width=agent.width,
            )
        )

    lanes = []
    for lane in sc.map.lanes:
        line = idx.lane_lines[lane.id]
        _, _, dist = line.project(frame.x, frame.y)
        if dist > MAP_CLIP_RADIUS:
            continue
        pts = points_to_frame(np.asarray(lane.centerline, dtype=float), frame)
        lanes.append(
            LaneView(
                id=lane.id,
                centerline=tuple(map(tuple, pts)),
                width=lane.width,
                speed_limit=lane.speed_limit,
                successors=lane.successors,
            )
        )

    polys = []
    for poly in sc.map.drivable_areas:
        verts = np.asarray(poly.vertices, dtype=float)
        if np.min(np.hypot(verts[:, 0] - frame.x, verts[:, 1] - frame.y)) > MAP_CLIP_RADIUS + 50.0:
            continue
        polys.append(tuple(map(tuple, points_to_frame(verts, frame))))

    stop_lines = []
    for sl in sc.map.stop_lines:
        (x1, y1), (x2, y2) = sl.segment
        if math.hypot((x1 + x2) / 2 - frame.x, (y1 + y2) / 2 - frame.y) > MAP_CLIP_RADIUS:
            continue
        seg = points_to_frame(np.array([[x1, y1], [x2, y2]]), frame)
        stop_lines.append(
            StopLineView(id=sl.id, segment=(tuple(seg[0]), tuple(seg[1])), state=sl.state_at(t))
        )

    return PlannerInput(
        ego_history=local_history,
        agent_boxes=tuple(boxes),
        map_view=MapView(drivable=tuple(polys), lanes=tuple(lanes), stop_lines=tuple(stop_lines)),
        command=sc.command,
    )


def plan_to_world(plan: Trajectory, frame: Pose2D, t0: float) -> Trajectory:
    """World-frame copy of an ego-local plan, with the commitment origin
    prepended as waypoint zero (extended comfort needs the chord into the
    first waypoint)."""
    origin = ((frame, round(t0 * 10.0) / 10.0),)
    return Trajectory(
        waypoints=origin
        + tuple(
            (transform_from_frame(pose, frame), round((t0 + t_rel) * 10.0) / 10.0)
            for pose, t_rel in plan.waypoints
        ),
        frame="world",
    )


# ---------------------------------------------------------------------------
# human reference

_HUMAN_CACHE: dict = {}
_HUMAN_CACHE_MAX = 256


def human_reference(
    sc: Scenario, horizon_ticks: int, constants: MetricConstants = ENGINE
) -> tuple:
    """(HumanReference, reference_progress) for the expert's rollout over the
    given horizon; the expert doubles as the privileged progress reference."""
    key = (sc.id, horizon_ticks)
    hit = _HUMAN_CACHE.get(key)
    if hit is not None and hit[0] is sc:
        return hit[1], hit[2]
    t0 = sc.start_time
    t1 = t0 + horizon_ticks * TICK
    tail = sc.expert_trajectory.slice(t0, t1 + 1e-9)
    states = ego_states_from_trajectory(tail)
    traffic = traffic_rollout(sc, states, t0)
    rollout = Rollout(tuple(states), tuple(traffic), sc)

    route = map_index(sc.map).route
    s0, _, _ = route.project(states[0].pose.x, states[0].pose.y)
    s1, _, _ = route.project(states[-1].pose.x, states[-1].pose.y)
    progress = max(s1 - s0, 0.0)

    raw = compute_subscores(rollout, progress, constants)
    ref = HumanReference(subscores=raw)
    if len(_HUMAN_CACHE) >= _HUMAN_CACHE_MAX:
        _HUMAN_CACHE.pop(next(iter(_HUMAN_CACHE)))
    _HUMAN_CACHE[key] = (sc, ref, progress)
    return ref, progress


def expert_reference_progress(sc: Scenario, horizon_ticks: int) -> float:
    return human_reference(sc, horizon_ticks)[1]


# ---------------------------------------------------------------------------
# stage 1

def run_stage1(
    sc: Scenario,
    planner: Planner,
    weights: MetricWeights = MetricWeights(),
    constants: MetricConstants = ENGINE,
) -> StageOneResult:
    """One inference, one committed 4 s rollout, one score."""
    t0 = sc.start_time
    ts0 = init_traffic(sc, t0)
    inp = build_planner_input(sc, sc.ego_history, ts0, t0)
    try:
        out = planner.plan(inp, sc.id, 0)
        out.validate()
    except PlannerError:
        raise
    except PseudosimError as e:
        raise PlannerError(planner.planner_id, str(e)) from e

    ego_states = track_trajectory(sc.current_ego, out.trajectory, DEFAULT_VEHICLE, DEFAULT_LQR)
    traffic = traffic_rollout(sc, ego_states, t0)
    committed = plan_to_world(out.trajectory, sc.current_ego.pose, t0)
    rollout = Rollout(tuple(ego_states), tuple(traffic), sc, committed_plan=committed)

    human, ref_progress = human_reference(sc, PLAN_TICKS, constants)
    raw, filtered, s1 = score_rollout(rollout, human, weights, ref_progress, constants)
    endpoint = (ego_states[-1].pose.x, ego_states[-1].pose.y)
    return StageOneResult(
        s1=s1, endpoint=endpoint, rollout=rollout, subscores=filtered, raw_subscores=raw
    )


# ---------------------------------------------------------------------------
# gaussian proximity weighting

def gaussian_weights(points, endpoint, sigma2: float) -> np.ndarray:
    """Normalized Gaussian kernel weights; computed with a log-domain shift
    so the sigma^2 -> 0 limit recovers the nearest point exactly. Degenerate
    inputs (all raw weights underflow) fall back to uniform."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    e = np.asarray(endpoint, dtype=float)
    d2 = np.sum((pts - e) ** 2, axis=1)
    logw = -d2 / (2.0 * sigma2)
    w = np.exp(logw - np.max(logw))
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        return np.full(len(pts), 1.0 / len(pts))
    return w / total


def raw_gaussian_weights(points, endpoint, sigma2: float) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    e = np.asarray(endpoint, dtype=float)
    d2 = np.sum((pts - e) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * sigma2))


# ---------------------------------------------------------------------------
# stage 2

def run_stage2(
    observations: list,
    planner: Planner,
    endpoint,
    cfg: AggregationConfig = AggregationConfig(),
    weights: MetricWeights = MetricWeights(),
    constants: MetricConstants = ENGINE,
) -> StageTwoResult:
    """Stage-1 pipeline per synthetic observation, then proximity-weighted
    aggregation. Failed observations are excluded and the weights
    renormalized; at least one success is required."""
    assert observations, "scene was discarded; no observations to run"
    results = []
    failed = []
    for obs in observations:
        try:
            r = run_stage1(obs.scenario, planner, weights, constants)
        except PlannerError:
            failed.append(obs.index)
            continue
        pos = (obs.scenario.current_ego.pose.x, obs.scenario.current_ego.pose.y)
        results.append((obs, pos, r))
    if not results:
        raise StageError(f"all {len(observations)} stage-2 observations failed")

    positions = np.array([pos for _, pos, _ in results])
    scores = np.array([r.s1 for _, _, r in results])
    n = len(results)

    if cfg.weighting == "gaussian":
        w_hat = gaussian_weights(positions, endpoint, cfg.sigma2)
        w_raw = raw_gaussian_weights(positions, endpoint, cfg.sigma2)
    elif cfg.weighting == "uniform":
        w_hat = np.full(n, 1.0 / n)
        w_raw = np.ones(n)
    else:  # knn
        d2 = np.sum((positions - np.asarray(endpoint)) ** 2, axis=1)
        order = sorted(range(n), key=lambda i: (d2[i], results[i][0].index))
        chosen = set(order[: min(cfg.knn_k, n)])
        w_raw = np.array([1.0 if i in chosen else 0.0 for i in range(n)])
        w_hat = w_raw / w_raw.sum()

    s2 = float(np.dot(w_hat, scores))
    obs_results = tuple(
        ObservationResult(
            index=obs.index,
            score=float(r.s1),
            position=tuple(pos),
            weight_raw=float(w_raw[i]),
            weight=float(w_hat[i]),
            subscores=r.subscores,
            raw_subscores=r.raw_subscores,
        )
        for i, (obs, pos, r) in enumerate(results)
    )
    return StageTwoResult(observations=obs_results, s2=s2, failed_indices=tuple(failed))


# ---------------------------------------------------------------------------
# aggregation across stages

def aggregate(
    stage1: StageOneResult,
    stage2: Optional[StageTwoResult],
    cfg: AggregationConfig,
    weights: MetricWeights = MetricWeights(),
    scenario_id: str = "",
    planner_id: str = "",
    observation_count: int = 0,
) -> CombinedScore:
    """Fuse stage scores: product (default), arithmetic mean, hybrid
    (stage-wise penalty products multiplied, averages averaged), or
    stage-1 only."""
    s1 = stage1.s1
    if cfg.stage_mode == "stage1" or stage2 is None:
        return CombinedScore(
            s_combined=s1, s1=s1, s2=None, scenario_id=scenario_id, planner_id=planner_id,
            stage_mode="stage1", inference_count=1,
        )
    s2 = stage2.s2
    if cfg.stage_mode == "product":
        s = s1 * s2
    elif cfg.stage_mode == "mean":
        s = (s1 + s2) / 2.0
    else:  # hybrid
        pen1 = penalty_product(stage1.subscores, weights)
        avg1 = weighted_average(stage1.subscores, weights)
        w = np.array([o.weight for o in stage2.observations])
        pen2 = float(np.dot(w, [penalty_product(o.subscores, weights) for o in stage2.observations]))
        avg2 = float(np.dot(w, [weighted_average(o.subscores, weights) for o in stage2.observations]))
        s = (pen1 * pen2) * ((avg1 + avg2) / 2.0)
    return CombinedScore(
        s_combined=float(s), s1=s1, s2=s2, scenario_id=scenario_id, planner_id=planner_id,
        stage_mode=cfg.stage_mode, inference_count=1 + observation_count,
    )


@dataclass(frozen=True)
class PseudoSimResult:
    combined: CombinedScore
    stage1: StageOneResult
    stage2: Optional[StageTwoResult]


def evaluate_pseudo(
    sc: Scenario,
    stage2_set: Optional[list],
    planner: Planner,
    cfg: AggregationConfig = AggregationConfig(),
    weights: MetricWeights = MetricWeights(),
    constants: MetricConstants = ENGINE,
) -> PseudoSimResult:
    """Full pseudo-simulation of one (planner, scenario) pair."""
    stage1 = run_stage1(sc, planner, weights, constants)
    stage2 = None
    n_obs = 0
    if cfg.stage_mode != "stage1":
        assert stage2_set, "stage-2 observations required outside stage1 mode"
        n_obs = len(stage2_set)
        stage2 = run_stage2(stage2_set, planner, stage1.endpoint, cfg, weights, constants)
    combined = aggregate(
        stage1, stage2, cfg, weights,
        scenario_id=sc.id, planner_id=planner.planner_id, observation_count=n_obs,
    )
    return PseudoSimResult(combined=combined, stage1=stage1, stage2=stage2)


def run_pseudo_simulation(
    sc: Scenario,
    stage2_set: Optional[list],
    planner: Planner,
    cfg: AggregationConfig = AggregationConfig(),
    weights: MetricWeights = MetricWeights(),
) -> CombinedScore:
    return evaluate_pseudo(sc, stage2_set, planner, cfg, weights).combined


# ---------------------------------------------------------------------------
# reference closed loop

def run_closed_loop(
    sc: Scenario,
    planner: Planner,
    weights: MetricWeights = MetricWeights(),
    constants: MetricConstants = ENGINE,
) -> ClosedLoopResult:
    """8 s interactive rollout at 10 Hz: the planner is re-invoked every
    tick and only the first 0.1 s of each plan is executed. 80 inferences."""
    t0 = sc.start_time
    k0 = round(t0 / TICK)
    ego = sc.current_ego
    bstate = BicycleState(ego.pose, max(ego.velocity, 0.0), 0.0)
    history = list(sc.ego_history)
    ts = init_traffic(sc, t0)
    traffic_states = [ts]
    ego_states = [ego]
    plans: list = []

    for k in range(CLOSED_LOOP_TICKS):
        t_k = grid_time(k0 + k)
        inp = build_planner_input(sc, tuple(history[-16:]), ts, t_k)
        try:
            out = planner.plan(inp, sc.id, k)
            out.validate()
        except PlannerError as e:
            return ClosedLoopResult(None, k + 1, None, None, failure=str(e))
        except PseudosimError as e:
            return ClosedLoopResult(None, k + 1, None, None, failure=f"{planner.planner_id}: {e}")

        current = ego_states[-1]
        plans.append(plan_to_world(out.trajectory, current.pose, t_k))
        bstate, u = step_along_plan(
            bstate, out.trajectory, current.pose, current.velocity, DEFAULT_VEHICLE, DEFAULT_LQR
        )
        new_state = EgoState(
            pose=bstate.pose,
            velocity=bstate.velocity,
            acceleration=min(max(u.acceleration, DEFAULT_VEHICLE.accel_limits[0]), DEFAULT_VEHICLE.accel_limits[1]),
            timestamp=grid_time(k0 + k + 1),
        )
        ts = step_traffic(ts, current, sc)
        traffic_states.append(ts)
        ego_states.append(new_state)
        history.append(new_state)

    rollout = Rollout(
        tuple(ego_states), tuple(traffic_states), sc, committed_plan=plans[0]
    )
    human, ref_progress = human_reference(sc, CLOSED_LOOP_TICKS, constants)
    raw = compute_subscores(rollout, ref_progress, constants)
    if "ec" in weights.enabled:
        ec = 1.0
        for j in range(1, CLOSED_LOOP_TICKS):
            if plans[j] is not plans[j - 1] and not splice_comfort(plans[j - 1], plans[j], constants):
                ec = 0.0
                break
        raw = replace(raw, ec=ec)
    filtered = apply_human_filter(raw, human)
    cls = compose_epdms(filtered, weights)
    return ClosedLoopResult(
        cls=float(cls), inference_count=CLOSED_LOOP_TICKS, subscores=filtered, raw_subscores=raw
    )
