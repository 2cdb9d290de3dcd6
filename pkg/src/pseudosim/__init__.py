"""pseudosim: two-stage pseudo-simulation benchmark for driving planners."""

from .errors import (
    ConfigError,
    DegenerateData,
    DomainError,
    ExitError,
    ExternalTimeout,
    GenerationError,
    GridMismatch,
    NoLaneError,
    OutOfCorridor,
    ParseError,
    PlannerError,
    ProtocolError,
    PseudosimError,
    RiccatiDivergence,
    SchemaError,
    StageError,
    ValidationError,
)
from .geometry import Polyline, Pose2D, wrap_angle
from .scene import (
    AgentBehavior,
    AgentState,
    AgentTrack,
    DrivingCommand,
    DrivablePolygon,
    EgoState,
    FrenetCoord,
    Lane,
    LightPhase,
    LightState,
    MapModel,
    Scenario,
    StopLine,
    Trajectory,
    embed_on_route,
    load_scenario,
    map_index,
    project_to_route,
    save_scenario,
    validate_scenario,
)
from .generate import GeneratorConfig, generate_scenario
from .dynamics import (
    BicycleState,
    ControlInput,
    LqrConfig,
    VehicleParams,
    bicycle_step,
    lqr_gain,
    track_trajectory,
)
from .traffic import IdmParams, TrafficState, find_lead, idm_acceleration, step_traffic
from .metrics import (
    HumanReference,
    MetricConstants,
    MetricWeights,
    Rollout,
    SubscoreVector,
    apply_human_filter,
    compose_epdms,
    evaluate_comfort,
    evaluate_compliance,
    evaluate_progress,
    evaluate_safety,
)
from .stage2 import (
    StartCandidate,
    SyntheticObservation,
    TrajectoryBank,
    build_stage2_set,
    compute_longitudinal_bounds,
    match_heading_history,
    reject_invalid,
    sample_start_grid,
)
from .planners import (
    ConstantKinematicsPlanner,
    DegradedPlanner,
    ExternalPlanner,
    IdmPlanner,
    PdmClosedPlanner,
    Planner,
    PlannerInput,
    PlannerOutput,
    build_planner,
    default_zoo,
)
from .evaluator import (
    AggregationConfig,
    CombinedScore,
    StageOneResult,
    StageTwoResult,
    aggregate,
    evaluate_pseudo,
    gaussian_weights,
    run_closed_loop,
    run_pseudo_simulation,
    run_stage1,
    run_stage2,
)
from .harness import (
    ExperimentManifest,
    correlation_report,
    load_manifest,
    main,
    pearson_r,
    save_manifest,
    spearman_rho,
)

__version__ = "0.1.0"
