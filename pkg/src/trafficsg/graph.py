"""Embedded spatio-temporal scene graph.

Nodes are frames, instances (tracks) and lanes. Per-frame state of a track
is an :class:`Observation`, carried by the frame-membership edge between a
frame and an instance. Edge kinds:

* ``FrameMembership``: frame -> instance, one per observation.
* ``Temporal``: observation -> next observation of the same track, gaps bridged.
* ``LaneAssignment``: observation -> lane, at most one per observation.
* ``Spatial``: computed on demand by the relative-position tool, never stored.

Node references inside edges are plain tuples: ``("Frame", frame_id)``,
``("Instance", track_id)``, ``("Lane", lane_id)`` and
``("Observation", track_id, frame_id)``.
"""

from __future__ import annotations

import bisect
import io
import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any

from .errors import (
    DegeneratePolyline,
    DuplicateFrame,
    DuplicateInstance,
    DuplicateLane,
    DuplicateObservation,
    GraphError,
    InvalidBBox,
    NonMonotonicTimestamp,
    SinkError,
    SnapshotError,
    UnknownFrame,
    UnknownObservation,
    UnknownTrack,
)
from .geometry import polyline_length, size_prior_for, validate_bbox

SNAPSHOT_FORMAT = "trafficsg-graph"
SNAPSHOT_VERSION = 1


def id_key(value):
    """Sort key for mixed int/str identifiers: ints numerically, then strings."""
    return (1, value) if isinstance(value, str) else (0, value)


def _tuple(values, n=None):
    out = tuple(float(v) for v in values)
    if n is not None and len(out) != n:
        raise ValueError(f"expected {n} components, got {len(out)}")
    return out


@dataclass(frozen=True)
class FrameNode:
    frame_id: int
    timestamp_s: float

    def __post_init__(self):
        if isinstance(self.frame_id, bool) or not isinstance(self.frame_id, int) or self.frame_id < 0:
            raise GraphError(f"frame_id must be a non-negative integer, got {self.frame_id!r}")
        if not (self.timestamp_s >= 0 and math.isfinite(self.timestamp_s)):
            raise GraphError(f"timestamp_s must be finite and >= 0, got {self.timestamp_s!r}")


@dataclass(frozen=True)
class InstanceNode:
    track_id: int | str
    class_label: str
    size_prior_m: tuple[float, float, float] = (4.5, 1.8, 1.5)

    def __post_init__(self):
        if not self.class_label:
            raise GraphError(f"track {self.track_id!r}: class_label must be non-empty")
        dims = _tuple(self.size_prior_m, 3)
        if min(dims) <= 0:
            raise GraphError(f"track {self.track_id!r}: size prior must be positive")
        object.__setattr__(self, "size_prior_m", dims)


@dataclass(frozen=True)
class LaneNode:
    lane_id: int | str
    polyline_road: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(p[0]), float(p[1])) for p in self.polyline_road)
        if len(pts) < 2:
            raise DegeneratePolyline(f"lane {self.lane_id!r}: polyline needs at least 2 points")
        for i in range(1, len(pts)):
            if pts[i] == pts[i - 1]:
                raise DegeneratePolyline(
                    f"lane {self.lane_id!r}: zero-length segment at point {i}"
                )
        object.__setattr__(self, "polyline_road", pts)

    @property
    def length_m(self) -> float:
        return polyline_length(self.polyline_road)


@dataclass(frozen=True)
class Observation:
    """State of one track in one frame."""

    track_id: int | str
    frame_id: int
    bbox_px: tuple[float, float, float, float]
    pos3d_road: tuple[float, float, float]
    speed_mps: float | None = None
    heading_deg: float | None = None
    vel3d_mps: tuple[float, float, float] | None = None
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bbox_px", validate_bbox(self.bbox_px))
        object.__setattr__(self, "pos3d_road", _tuple(self.pos3d_road, 3))
        if self.vel3d_mps is not None:
            object.__setattr__(self, "vel3d_mps", _tuple(self.vel3d_mps, 3))
        if not 0.0 <= self.confidence <= 1.0:
            raise GraphError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def key(self) -> tuple:
        return (self.track_id, self.frame_id)

    @property
    def bbox_center(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.bbox_px
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)


class EdgeKind(str, Enum):
    TEMPORAL = "Temporal"
    FRAME_MEMBERSHIP = "FrameMembership"
    LANE_ASSIGNMENT = "LaneAssignment"
    SPATIAL = "Spatial"


@dataclass(frozen=True)
class Edge:
    kind: EdgeKind
    source: tuple
    target: tuple
    attributes: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def key(self) -> tuple:
        return (self.kind, self.source, self.target)


def frame_ref(frame_id):
    return ("Frame", frame_id)


def instance_ref(track_id):
    return ("Instance", track_id)


def lane_ref(lane_id):
    return ("Lane", lane_id)


def observation_ref(track_id, frame_id):
    return ("Observation", track_id, frame_id)


class SceneGraph:
    """Indexed in-memory store for one video.

    Built single-threaded through the ``insert_*`` methods; treat it as
    read-only afterwards.
    """

    def __init__(self, video_id: str = "video", fps: float = 25.0, size_priors=None):
        if not fps > 0:
            raise GraphError(f"fps must be positive, got {fps}")
        self.video_id = video_id
        self.fps = float(fps)
        self.size_priors = size_priors
        self.frames: dict[int, FrameNode] = {}
        self.instances: dict[Any, InstanceNode] = {}
        self.lanes: dict[Any, LaneNode] = {}
        self.observations: dict[tuple, Observation] = {}
        self._frame_order: list[int] = []
        self._edges: dict[tuple, Edge] = {}
        # frame_id -> track ids present
        self.frame_index: dict[int, set] = {}
        # track_id -> sorted frame ids observed
        self.track_index: dict[Any, list[int]] = {}
        # (frame_id, lane_id) -> track ids assigned
        self.lane_index: dict[tuple, set] = {}
        self._class_votes: dict[Any, dict[int, str]] = {}
        # observation ref -> lane_id
        self._lane_of: dict[tuple, Any] = {}

    def __repr__(self):
        return (
            f"SceneGraph(video_id={self.video_id!r}, frames={len(self.frames)}, "
            f"instances={len(self.instances)}, lanes={len(self.lanes)}, "
            f"observations={len(self.observations)}, edges={len(self._edges)})"
        )

    # ---- build ----

    def insert_frame(self, frame: FrameNode) -> "SceneGraph":
        fid = frame.frame_id
        if fid in self.frames:
            raise DuplicateFrame(f"frame {fid} already present")
        pos = bisect.bisect_left(self._frame_order, fid)
        if pos > 0:
            prev = self.frames[self._frame_order[pos - 1]]
            if not prev.timestamp_s < frame.timestamp_s:
                raise NonMonotonicTimestamp(
                    f"frame {fid} @ {frame.timestamp_s}s is not after frame {prev.frame_id} "
                    f"@ {prev.timestamp_s}s"
                )
        if pos < len(self._frame_order):
            nxt = self.frames[self._frame_order[pos]]
            if not frame.timestamp_s < nxt.timestamp_s:
                raise NonMonotonicTimestamp(
                    f"frame {fid} @ {frame.timestamp_s}s is not before frame {nxt.frame_id} "
                    f"@ {nxt.timestamp_s}s"
                )
        self.frames[fid] = frame
        self._frame_order.insert(pos, fid)
        self.frame_index.setdefault(fid, set())
        return self

    def insert_instance(self, instance: InstanceNode) -> "SceneGraph":
        if instance.track_id in self.instances:
            raise DuplicateInstance(f"track {instance.track_id!r} already present")
        self.instances[instance.track_id] = instance
        self.track_index.setdefault(instance.track_id, [])
        return self

    def insert_lane(self, lane: LaneNode) -> "SceneGraph":
        if lane.lane_id in self.lanes:
            raise DuplicateLane(f"lane {lane.lane_id!r} already present")
        self.lanes[lane.lane_id] = lane
        return self

    def insert_observation(self, obs: Observation, class_label: str | None = None) -> "SceneGraph":
        """Store an observation and wire its membership and temporal edges.

        An unseen track is created on the fly from ``class_label``. When
        several observations of a track disagree on the class, the majority
        wins and ties go to the label seen at the earliest frame.
        """
        tid, fid = obs.track_id, obs.frame_id
        if fid not in self.frames:
            raise UnknownFrame(f"frame {fid} does not exist")
        if (tid, fid) in self.observations:
            raise DuplicateObservation(f"track {tid!r} already observed at frame {fid}")
        if tid not in self.instances:
            if not class_label:
                raise UnknownTrack(f"track {tid!r} does not exist and no class label was given")
            self.insert_instance(
                InstanceNode(tid, class_label, size_prior_for(class_label, self.size_priors))
            )
        self.observations[(tid, fid)] = obs
        self.frame_index[fid].add(tid)
        self._add_edge(Edge(EdgeKind.FRAME_MEMBERSHIP, frame_ref(fid), instance_ref(tid),
                            {"observation": obs}))

        frames = self.track_index[tid]
        pos = bisect.bisect_left(frames, fid)
        prev_f = frames[pos - 1] if pos > 0 else None
        next_f = frames[pos] if pos < len(frames) else None
        if prev_f is not None and next_f is not None:
            del self._edges[(EdgeKind.TEMPORAL, observation_ref(tid, prev_f),
                             observation_ref(tid, next_f))]
        if prev_f is not None:
            self._add_edge(Edge(EdgeKind.TEMPORAL, observation_ref(tid, prev_f),
                                observation_ref(tid, fid)))
        if next_f is not None:
            self._add_edge(Edge(EdgeKind.TEMPORAL, observation_ref(tid, fid),
                                observation_ref(tid, next_f)))
        frames.insert(pos, fid)

        if class_label:
            self._class_votes.setdefault(tid, {})[fid] = class_label
            self._revote(tid)
        return self

    def insert_lane_assignment(self, track_id, frame_id, lane_id, distance_m: float) -> "SceneGraph":
        if (track_id, frame_id) not in self.observations:
            raise UnknownObservation(f"no observation of track {track_id!r} at frame {frame_id}")
        if lane_id not in self.lanes:
            raise GraphError(f"lane {lane_id!r} does not exist")
        src = observation_ref(track_id, frame_id)
        if src in self._lane_of:
            raise GraphError(f"track {track_id!r} at frame {frame_id} already has a lane")
        self._add_edge(Edge(EdgeKind.LANE_ASSIGNMENT, src, lane_ref(lane_id),
                            {"distance_m": float(distance_m)}))
        self._lane_of[src] = lane_id
        self.lane_index.setdefault((frame_id, lane_id), set()).add(track_id)
        return self

    def _add_edge(self, edge: Edge):
        self._edges[edge.key] = edge

    def _revote(self, tid):
        votes = self._class_votes[tid]
        counts = Counter(votes.values())
        first_seen = {}
        for fid in sorted(votes):
            first_seen.setdefault(votes[fid], fid)
        label = min(counts, key=lambda c: (-counts[c], first_seen[c]))
        inst = self.instances[tid]
        if inst.class_label != label:
            self.instances[tid] = InstanceNode(tid, label, size_prior_for(label, self.size_priors))

    # ---- read ----

    @property
    def frame_ids(self) -> list[int]:
        return list(self._frame_order)

    @property
    def track_ids(self) -> list:
        return sorted(self.instances, key=id_key)

    @property
    def edges(self) -> list[Edge]:
        return list(self._edges.values())

    def edges_of_kind(self, kind: EdgeKind) -> list[Edge]:
        return [e for e in self._edges.values() if e.kind is kind]

    def edge_counts(self) -> dict[str, int]:
        counts = Counter(e.kind.value for e in self._edges.values())
        return {k.value: counts.get(k.value, 0) for k in EdgeKind if k is not EdgeKind.SPATIAL}

    def resolve_track(self, track_id):
        """Return the stored form of ``track_id``, tolerating int/str mismatch."""
        if track_id in self.instances:
            return track_id
        if isinstance(track_id, str):
            try:
                as_int = int(track_id)
            except ValueError:
                as_int = None
            if as_int is not None and as_int in self.instances:
                return as_int
        elif isinstance(track_id, int) and str(track_id) in self.instances:
            return str(track_id)
        raise UnknownTrack(f"track {track_id!r} does not exist")

    def resolve_lane(self, lane_id):
        if lane_id in self.lanes:
            return lane_id
        for candidate in self.lanes:
            if str(candidate) == str(lane_id):
                return candidate
        raise GraphError(f"lane {lane_id!r} does not exist")

    def require_frame(self, frame_id) -> FrameNode:
        try:
            return self.frames[frame_id]
        except (KeyError, TypeError):
            raise UnknownFrame(f"frame {frame_id!r} does not exist") from None

    def track_observations(self, track_id) -> list[Observation]:
        tid = self.resolve_track(track_id)
        return [self.observations[(tid, f)] for f in self.track_index[tid]]

    def observations_at(self, frame_id) -> list[Observation]:
        self.require_frame(frame_id)
        tids = sorted(self.frame_index[frame_id], key=id_key)
        return [self.observations[(t, frame_id)] for t in tids]

    def observation(self, track_id, frame_id) -> Observation:
        try:
            tid = self.resolve_track(track_id)
        except UnknownTrack:
            raise UnknownObservation(f"track {track_id!r} is not observed at frame {frame_id}") from None
        obs = self.observations.get((tid, frame_id))
        if obs is None:
            raise UnknownObservation(f"track {track_id!r} is not observed at frame {frame_id}")
        return obs

    def lane_of(self, track_id, frame_id):
        """``(lane_id, distance_m)`` for an observation, or ``None``."""
        src = observation_ref(track_id, frame_id)
        lane_id = self._lane_of.get(src)
        if lane_id is None:
            return None
        return lane_id, self._edges[(EdgeKind.LANE_ASSIGNMENT, src, lane_ref(lane_id))].attributes["distance_m"]


# ---- integrity ----


def validate_graph(graph: SceneGraph) -> list[str]:
    """List every invariant violation in ``graph``; empty when consistent."""
    problems: list[str] = []

    order = graph._frame_order
    if order != sorted(graph.frames):
        problems.append("frame order list does not match stored frames")
    for a, b in zip(order, order[1:]):
        if a in graph.frames and b in graph.frames:
            if not graph.frames[a].timestamp_s < graph.frames[b].timestamp_s:
                problems.append(f"timestamps not increasing between frames {a} and {b}")

    for (tid, fid), obs in graph.observations.items():
        if fid not in graph.frames:
            problems.append(f"observation of track {tid!r} at frame {fid}: dangling frame reference")
        if tid not in graph.instances:
            problems.append(f"observation of track {tid!r} at frame {fid}: dangling track reference")
        if obs.key != (tid, fid):
            problems.append(f"observation stored under ({tid!r}, {fid}) has key {obs.key!r}")

    for tid, inst in graph.instances.items():
        if not inst.class_label:
            problems.append(f"track {tid!r}: empty class label")

    # membership edges mirror the observation set
    membership = {}
    temporal = set()
    lane_edges = {}
    for edge in graph._edges.values():
        if edge.kind is EdgeKind.FRAME_MEMBERSHIP:
            (_, fid), (_, tid) = edge.source, edge.target
            membership[(tid, fid)] = edge
        elif edge.kind is EdgeKind.TEMPORAL:
            temporal.add((edge.source, edge.target))
        elif edge.kind is EdgeKind.LANE_ASSIGNMENT:
            lane_edges[edge.source] = edge.target[1]
    for key in graph.observations.keys() - membership.keys():
        problems.append(f"track {key[0]!r} at frame {key[1]}: missing frame-membership edge")
    for key in membership.keys() - graph.observations.keys():
        problems.append(f"track {key[0]!r} at frame {key[1]}: membership edge without observation")

    expected_frame_index: dict[int, set] = {f: set() for f in graph.frames}
    expected_track_index: dict[Any, list] = {t: [] for t in graph.instances}
    for tid, fid in graph.observations:
        expected_frame_index.setdefault(fid, set()).add(tid)
        expected_track_index.setdefault(tid, []).append(fid)
    for fid in sorted(expected_frame_index.keys() | graph.frame_index.keys()):
        want = expected_frame_index.get(fid, set())
        have = graph.frame_index.get(fid, set())
        for tid in sorted(want - have, key=id_key):
            problems.append(f"frame index drift: track {tid!r} observed at frame {fid} but not indexed")
        for tid in sorted(have - want, key=id_key):
            problems.append(f"frame index drift: track {tid!r} indexed at frame {fid} without observation")
    for tid in sorted(expected_track_index.keys() | graph.track_index.keys(), key=id_key):
        want = sorted(expected_track_index.get(tid, []))
        have = graph.track_index.get(tid)
        if have != want:
            problems.append(f"track index drift for track {tid!r}: indexed {have} vs observed {want}")

    expected_temporal = set()
    for tid, frames in expected_track_index.items():
        frames = sorted(frames)
        for a, b in zip(frames, frames[1:]):
            expected_temporal.add((observation_ref(tid, a), observation_ref(tid, b)))
    for src, dst in sorted(expected_temporal - temporal, key=repr):
        problems.append(f"track {src[1]!r}: missing temporal edge {src[2]} -> {dst[2]}")
    for src, dst in sorted(temporal - expected_temporal, key=repr):
        problems.append(f"track {src[1]!r}: unexpected temporal edge {src[2]} -> {dst[2]}")

    expected_lane_index: dict[tuple, set] = {}
    for src, lane_id in lane_edges.items():
        _, tid, fid = src
        if (tid, fid) not in graph.observations:
            problems.append(f"lane edge from unknown observation ({tid!r}, {fid})")
        if lane_id not in graph.lanes:
            problems.append(f"lane edge to unknown lane {lane_id!r}")
        expected_lane_index.setdefault((fid, lane_id), set()).add(tid)
    have_lane_index = {k: v for k, v in graph.lane_index.items() if v}
    if have_lane_index != expected_lane_index:
        problems.append("lane index does not match lane-assignment edges")
    return problems


# ---- statement export ----

_NODE_FIELDS = {
    "Frame": ("frame_id", "timestamp_s"),
    "Instance": ("track_id", "class_label", "size_prior_m"),
    "Lane": ("lane_id", "polyline_x", "polyline_y"),
    "Observation": ("track_id", "frame_id", "bbox_px", "pos3d_road", "speed_mps",
                    "heading_deg", "vel3d_mps", "confidence"),
}
_REL_NAMES = {
    EdgeKind.FRAME_MEMBERSHIP: "FRAME_MEMBERSHIP",
    EdgeKind.TEMPORAL: "TEMPORAL",
    EdgeKind.LANE_ASSIGNMENT: "LANE_ASSIGNMENT",
}


def cypher_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(cypher_literal(v) for v in value) + "]"
    raise TypeError(f"cannot render {type(value).__name__} as a literal")


def _props(pairs) -> str:
    body = ", ".join(f"{k}: {cypher_literal(v)}" for k, v in pairs if v is not None)
    return "{" + body + "}"


def _node_pattern(ref) -> str:
    kind = ref[0]
    if kind == "Frame":
        return f"(:Frame {_props([('frame_id', ref[1])])})"
    if kind == "Instance":
        return f"(:Instance {_props([('track_id', ref[1])])})"
    if kind == "Lane":
        return f"(:Lane {_props([('lane_id', ref[1])])})"
    return f"(:Observation {_props([('track_id', ref[1]), ('frame_id', ref[2])])})"


def _match_clause(source, target) -> str:
    a = _node_pattern(source).replace("(:", "(a:", 1)
    b = _node_pattern(target).replace("(:", "(b:", 1)
    return f"MATCH {a}, {b}"


def _ref_key(ref):
    return (ref[0],) + tuple(id_key(v) for v in ref[1:])


def iter_statements(graph: SceneGraph):
    """Yield creation statements, nodes before relationships, each group sorted by id."""
    for fid in graph._frame_order:
        f = graph.frames[fid]
        yield f"CREATE (:Frame {_props([('frame_id', f.frame_id), ('timestamp_s', float(f.timestamp_s))])})"
    for tid in graph.track_ids:
        inst = graph.instances[tid]
        yield ("CREATE (:Instance " + _props([("track_id", tid), ("class_label", inst.class_label),
                                              ("size_prior_m", inst.size_prior_m)]) + ")")
    for lid in sorted(graph.lanes, key=id_key):
        lane = graph.lanes[lid]
        xs = [p[0] for p in lane.polyline_road]
        ys = [p[1] for p in lane.polyline_road]
        yield "CREATE (:Lane " + _props([("lane_id", lid), ("polyline_x", xs), ("polyline_y", ys)]) + ")"
    for key in sorted(graph.observations, key=lambda k: (id_key(k[0]), k[1])):
        o = graph.observations[key]
        yield "CREATE (:Observation " + _props([
            ("track_id", o.track_id), ("frame_id", o.frame_id), ("bbox_px", o.bbox_px),
            ("pos3d_road", o.pos3d_road), ("speed_mps", o.speed_mps),
            ("heading_deg", o.heading_deg), ("vel3d_mps", o.vel3d_mps),
            ("confidence", float(o.confidence)),
        ]) + ")"
    for kind in (EdgeKind.FRAME_MEMBERSHIP, EdgeKind.TEMPORAL, EdgeKind.LANE_ASSIGNMENT):
        edges = sorted((e for e in graph._edges.values() if e.kind is kind),
                       key=lambda e: (_ref_key(e.source), _ref_key(e.target)))
        for e in edges:
            if kind is EdgeKind.LANE_ASSIGNMENT:
                props = _props([("distance_m", float(e.attributes["distance_m"]))])
            else:
                props = "{}"
            yield f"{_match_clause(e.source, e.target)} CREATE (a)-[:{_REL_NAMES[kind]} {props}]->(b)"


def export_statements(graph: SceneGraph, sink=None) -> str:
    """Render the graph as one creation statement per line.

    ``sink`` may be a path or a writable text stream. The returned text is
    deterministic for a given graph.
    """
    lines = list(iter_statements(graph))
    text = "".join(line + "\n" for line in lines)
    if sink is not None:
        try:
            if isinstance(sink, (str, os.PathLike)):
                with open(sink, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sink.write(text)
        except (OSError, ValueError, io.UnsupportedOperation) as exc:
            raise SinkError(f"could not write statements: {exc}") from exc
    return text


# ---- snapshot ----


def to_snapshot(graph: SceneGraph) -> dict:
    lane_assignments = []
    for e in sorted(graph.edges_of_kind(EdgeKind.LANE_ASSIGNMENT),
                    key=lambda e: _ref_key(e.source)):
        lane_assignments.append([e.source[1], e.source[2], e.target[1], e.attributes["distance_m"]])
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "video_id": graph.video_id,
        "fps": graph.fps,
        "frames": [[f, graph.frames[f].timestamp_s] for f in graph._frame_order],
        "instances": [asdict(graph.instances[t]) for t in graph.track_ids],
        "lanes": [{"lane_id": lid, "polyline_road": [list(p) for p in graph.lanes[lid].polyline_road]}
                  for lid in sorted(graph.lanes, key=id_key)],
        "observations": [asdict(graph.observations[k])
                         for k in sorted(graph.observations, key=lambda k: (id_key(k[0]), k[1]))],
        "lane_assignments": lane_assignments,
    }


def from_snapshot(data: dict) -> SceneGraph:
    if data.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError("not a scene-graph snapshot")
    if data.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {data.get('version')!r}")
    g = SceneGraph(data["video_id"], data["fps"])
    for fid, ts in data["frames"]:
        g.insert_frame(FrameNode(fid, ts))
    for inst in data["instances"]:
        g.insert_instance(InstanceNode(inst["track_id"], inst["class_label"], inst["size_prior_m"]))
    for lane in data["lanes"]:
        g.insert_lane(LaneNode(lane["lane_id"], lane["polyline_road"]))
    for o in data["observations"]:
        g.insert_observation(Observation(**o))
    for tid, fid, lid, dist in data["lane_assignments"]:
        g.insert_lane_assignment(tid, fid, lid, dist)
    return g


def save_snapshot(graph: SceneGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_snapshot(graph), fh, separators=(",", ":"))


def load_snapshot(path) -> SceneGraph:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return from_snapshot(data)
    except (KeyError, TypeError, ValueError, InvalidBBox) as exc:
        raise SnapshotError(f"{path}: malformed snapshot ({exc})") from exc

