"""Traffic scene graphs from tracked detections, query tools over them, and a ReAct agent."""

__version__ = "0.1.0"

from .agent import (
    AgentConfig,
    AgentStep,
    AgentTrajectory,
    initial_context,
    parse_model_reply,
    parse_trajectory,
    render_trajectory,
    replay_trajectory,
    run_agent,
)
from .backends import RemoteBackend, RemoteConfig, RemoteVLM, ScriptedBackend, ScriptedVLM
from .evaluation import EvalRecord, EvalTable, evaluate
from .geometry import (
    Calibration,
    RoadPoint,
    assign_lane,
    derive_kinematics,
    ground_anchor,
    point_polyline_distance,
    project_to_road,
)
from .graph import (
    Edge,
    EdgeKind,
    FrameNode,
    InstanceNode,
    LaneNode,
    Observation,
    SceneGraph,
    export_statements,
    load_snapshot,
    save_snapshot,
    validate_graph,
)
from .ingest import (
    DetectionRecord,
    IngestConfig,
    QARecord,
    build_scene_graph,
    parse_calibration,
    parse_detections,
    parse_lanes,
    parse_qa_set,
)
from .tools import InstanceTuple, ToolCall, ToolProviders, ToolResult, registry_dispatch
