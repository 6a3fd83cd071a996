from __future__ import annotations

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cypher_reader import graph_edge_multiset, read_statements
from synth import random_detections, scaling_calibration
from trafficsg import tools
from trafficsg.errors import (
    DegeneratePolyline,
    DuplicateFrame,
    DuplicateLane,
    DuplicateObservation,
    InvalidBBox,
    NonMonotonicTimestamp,
    SinkError,
    SnapshotError,
    UnknownFrame,
)
from trafficsg.graph import (
    EdgeKind,
    FrameNode,
    InstanceNode,
    LaneNode,
    Observation,
    SceneGraph,
    export_statements,
    from_snapshot,
    load_snapshot,
    save_snapshot,
    to_snapshot,
    validate_graph,
)
from trafficsg.ingest import build_scene_graph


def obs(tid, fid, x=0.0):
    return Observation(tid, fid, (x, 0.0, x + 10.0, 10.0), (x, 0.0, 0.0))


def graph_with_frames(n, fps=25.0):
    g = SceneGraph("v", fps)
    for f in range(n):
        g.insert_frame(FrameNode(f, f / fps))
    return g


def temporal_pairs(g, tid=None):
    return sorted((e.source[2], e.target[2]) for e in g.edges_of_kind(EdgeKind.TEMPORAL)
                  if tid is None or e.source[1] == tid)


# ---- insert_frame ----


def test_first_frame():
    g = SceneGraph()
    g.insert_frame(FrameNode(0, 0.0))
    assert g.frame_ids == [0]


def test_second_frame_ordered():
    g = SceneGraph()
    g.insert_frame(FrameNode(0, 0.0))
    g.insert_frame(FrameNode(1, 0.04))
    assert g.frame_ids == [0, 1]


def test_out_of_order_timestamp_rejected():
    g = SceneGraph()
    g.insert_frame(FrameNode(1, 0.04))
    with pytest.raises(NonMonotonicTimestamp):
        g.insert_frame(FrameNode(0, 0.10))


def test_duplicate_frame():
    g = graph_with_frames(1)
    with pytest.raises(DuplicateFrame):
        g.insert_frame(FrameNode(0, 0.0))


# ---- insert_observation ----


def test_consecutive_frames_one_temporal_edge():
    g = graph_with_frames(5)
    g.insert_observation(obs("A", 3), "car")
    g.insert_observation(obs("A", 4), "car")
    assert temporal_pairs(g) == [(3, 4)]


def test_gap_bridged_by_one_temporal_edge():
    g = graph_with_frames(8)
    g.insert_observation(obs("A", 3), "car")
    g.insert_observation(obs("A", 7), "car")
    assert temporal_pairs(g) == [(3, 7)]


def test_middle_insert_rewires_temporal_chain():
    g = graph_with_frames(8)
    for f in (1, 6, 3):
        g.insert_observation(obs("A", f), "car")
    assert temporal_pairs(g) == [(1, 3), (3, 6)]
    assert validate_graph(g) == []


def test_duplicate_observation():
    g = graph_with_frames(5)
    g.insert_observation(obs("A", 3), "car")
    with pytest.raises(DuplicateObservation):
        g.insert_observation(obs("A", 3), "car")


def test_degenerate_bbox():
    with pytest.raises(InvalidBBox):
        Observation("A", 0, (4, 4, 4, 8), (0, 0, 0))


def test_observation_needs_frame():
    g = SceneGraph()
    with pytest.raises(UnknownFrame):
        g.insert_observation(obs("A", 0), "car")


def test_class_is_majority_vote():
    g = graph_with_frames(5)
    for f, c in enumerate(["car", "truck", "truck", "car", "truck"]):
        g.insert_observation(obs(1, f), c)
    assert g.instances[1].class_label == "truck"


def test_class_vote_tie_goes_to_earliest_label():
    g = graph_with_frames(4)
    for f, c in [(3, "car"), (2, "car"), (0, "bus"), (1, "bus")]:
        g.insert_observation(obs(1, f), c)
    assert g.instances[1].class_label == "bus"


def test_explicit_instance_before_observations():
    g = graph_with_frames(2)
    g.insert_instance(InstanceNode(9, "bus", (12.0, 2.5, 3.2)))
    g.insert_observation(obs(9, 0))
    assert g.instances[9].class_label == "bus"


# ---- lanes ----


def test_lane_length():
    g = SceneGraph()
    g.insert_lane(LaneNode("L1", ((0, 0), (100, 0))))
    assert g.lanes["L1"].length_m == pytest.approx(100.0)


def test_single_point_lane():
    with pytest.raises(DegeneratePolyline):
        LaneNode("L1", ((0, 0),))


def test_repeated_point_lane():
    with pytest.raises(DegeneratePolyline):
        LaneNode("L1", ((0, 0), (0, 0), (5, 0)))


def test_duplicate_lane():
    g = SceneGraph()
    g.insert_lane(LaneNode("L1", ((0, 0), (1, 0))))
    with pytest.raises(DuplicateLane):
        g.insert_lane(LaneNode("L1", ((0, 0), (2, 0))))


# ---- validate_graph ----


def test_empty_graph_validates():
    assert validate_graph(SceneGraph()) == []


def test_removed_frame_index_entry_is_one_violation():
    g = graph_with_frames(3)
    g.insert_observation(obs(4, 1), "car")
    g.insert_observation(obs(5, 1, 50.0), "car")
    g.frame_index[1].remove(4)
    problems = validate_graph(g)
    assert len(problems) == 1
    assert "4" in problems[0] and "frame 1" in problems[0]


def test_missing_temporal_edge_detected():
    g = graph_with_frames(3)
    for f in range(3):
        g.insert_observation(obs(1, f), "car")
    del g._edges[(EdgeKind.TEMPORAL, ("Observation", 1, 0), ("Observation", 1, 1))]
    assert validate_graph(g)


# ---- export ----


def test_export_single_observation():
    g = graph_with_frames(1)
    g.insert_observation(obs(1, 0), "car")
    lines = export_statements(g).splitlines()
    nodes = [ln for ln in lines if ln.startswith("CREATE")]
    rels = [ln for ln in lines if ln.startswith("MATCH")]
    # frame, instance and the observation itself; membership is the only relationship
    assert len(nodes) == 3 and len(rels) == 1
    assert "FRAME_MEMBERSHIP" in rels[0]


def test_export_empty_graph():
    assert export_statements(SceneGraph()) == ""


def test_export_to_stream_and_path(tmp_path):
    g = graph_with_frames(2)
    g.insert_observation(obs(1, 0), "car")
    buf = io.StringIO()
    text = export_statements(g, buf)
    assert buf.getvalue() == text
    p = tmp_path / "g.cql"
    export_statements(g, p)
    assert p.read_text() == text


def test_export_sink_failure(tmp_path):
    g = graph_with_frames(1)
    with pytest.raises(SinkError):
        export_statements(g, tmp_path / "missing" / "dir" / "g.cql")


def test_export_string_escaping():
    g = graph_with_frames(1)
    g.insert_observation(obs('we"ird\\id', 0), "car's")
    nodes, edges = read_statements(export_statements(g))
    assert ("Instance", 'we"ird\\id') in nodes
    assert nodes[("Instance", 'we"ird\\id')]["class_label"] == "car's"


@pytest.fixture(scope="module")
def random_graph():
    rng = np.random.default_rng(11)
    recs = random_detections(rng, 25, 80, string_ids=False)
    return build_scene_graph(recs, [LaneNode("L1", ((0, 20), (100, 20))), LaneNode("L2", ((0, 35), (100, 35)))],
                             scaling_calibration())


def test_export_deterministic(random_graph):
    assert export_statements(random_graph) == export_statements(random_graph)


def test_export_parse_back_isomorphic(random_graph):
    nodes, edges = read_statements(export_statements(random_graph))
    g = random_graph
    counts = {}
    for key in nodes:
        counts[key[0]] = counts.get(key[0], 0) + 1
    assert counts.get("Frame", 0) == len(g.frames)
    assert counts.get("Instance", 0) == len(g.instances)
    assert counts.get("Lane", 0) == len(g.lanes)
    assert counts.get("Observation", 0) == len(g.observations)
    assert edges == graph_edge_multiset(g)
    assert any(k[0] == "LANE_ASSIGNMENT" for k in edges)


# ---- snapshot ----


def test_snapshot_round_trip(random_graph, tmp_path):
    p = tmp_path / "g.json"
    save_snapshot(random_graph, p)
    g2 = load_snapshot(p)
    assert export_statements(g2) == export_statements(random_graph)
    assert validate_graph(g2) == []


def test_snapshot_version_checked():
    data = to_snapshot(SceneGraph())
    data["version"] = 99
    with pytest.raises(SnapshotError):
        from_snapshot(data)


def test_snapshot_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"hello": 1}))
    with pytest.raises(SnapshotError):
        load_snapshot(p)


# ---- properties ----


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_tracks=st.integers(0, 50), n_frames=st.integers(1, 200))
def test_frame_index_matches_brute_force(seed, n_tracks, n_frames):
    rng = np.random.default_rng(seed)
    recs = random_detections(rng, n_tracks, n_frames)
    g = build_scene_graph(recs, [], scaling_calibration())
    brute = {}
    for r in recs:
        if r.confidence >= 0.3:
            brute.setdefault(r.frame_id, set()).add(r.track_id)
    for f in g.frame_ids:
        assert set(g.frame_index.get(f, [])) == brute.get(f, set())
    for tid in g.track_ids:
        chain = g.track_observations(tid)
        assert len(temporal_pairs(g, tid)) == len(chain) - 1
        assert temporal_pairs(g, tid) == [(a.frame_id, b.frame_id) for a, b in zip(chain, chain[1:])]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), perm_seed=st.integers(0, 2**32 - 1))
def test_insert_order_independent(seed, perm_seed):
    rng = np.random.default_rng(seed)
    g1 = build_scene_graph(random_detections(rng, 10, 40), [], scaling_calibration())
    g2 = SceneGraph(g1.video_id, g1.fps)
    for f in g1.frame_ids:
        g2.insert_frame(g1.frames[f])
    items = list(g1.observations.values())
    labels = {o.key: g1.instances[o.track_id].class_label for o in items}
    order = np.random.default_rng(perm_seed).permutation(len(items))
    for i in order:
        g2.insert_observation(items[i], labels[items[i].key])
    assert validate_graph(g2) == []
    for f in g1.frame_ids:
        for name, args in [("query_objects_at_frame", {"frame_id": f}), ("count_objects", {"frame_id": f})]:
            r1 = tools.registry_dispatch(g1, None, tools.ToolCall(name, args))
            r2 = tools.registry_dispatch(g2, None, tools.ToolCall(name, args))
            assert r1.to_dict() == r2.to_dict()
    for t in g1.track_ids:
        for name in ("time_window", "trajectory_summary"):
            r1 = tools.registry_dispatch(g1, None, tools.ToolCall(name, {"track_id": t}))
            r2 = tools.registry_dispatch(g2, None, tools.ToolCall(name, {"track_id": t}))
            assert r1.to_dict() == r2.to_dict()
    assert export_statements(g1) == export_statements(g2)
