from __future__ import annotations

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synth import random_detections, scaling_calibration
from trafficsg.errors import (
    CalibrationDegenerate,
    DegeneratePolyline,
    FormatError,
    HorizonDegenerate,
    MixedVideoIds,
    UnknownHierarchy,
    UnknownType,
)
from trafficsg.geometry import Calibration
from trafficsg.graph import EdgeKind, export_statements, validate_graph
from trafficsg.ingest import (
    DetectionRecord,
    IngestConfig,
    build_scene_graph,
    parse_calibration,
    parse_detections,
    parse_lanes,
    parse_qa_set,
)


def det_line(**kw):
    rec = {"video_id": "v", "frame_id": 0, "track_id": 1, "class": "car", "bbox": [0, 0, 10, 10],
           "confidence": 0.9}
    rec.update(kw)
    return json.dumps(rec)


def stream(*lines):
    return io.StringIO("\n".join(lines) + "\n")


# ---- detections ----


def test_three_lines():
    recs = parse_detections(stream(det_line(frame_id=0), det_line(frame_id=1), det_line(frame_id=2)))
    assert [r.frame_id for r in recs] == [0, 1, 2]
    assert recs[0].class_label == "car" and recs[0].bbox_px == (0, 0, 10, 10)


def test_inverted_bbox_names_line():
    with pytest.raises(FormatError) as ei:
        parse_detections(stream(det_line(), det_line(bbox=[10, 0, 5, 10])))
    assert "line 2" in str(ei.value)


def test_empty_file():
    assert parse_detections(io.StringIO("")) == []


def test_errors_aggregate_unless_fail_fast():
    bad = stream("not json", det_line(), det_line(confidence=2.0), det_line(bbox=[1, 2]))
    with pytest.raises(FormatError) as ei:
        parse_detections(bad)
    assert [n for n, _ in ei.value.problems] == [1, 3, 4]
    bad.seek(0)
    with pytest.raises(FormatError) as ei:
        parse_detections(bad, fail_fast=True)
    assert len(ei.value.problems) == 1


def test_missing_key():
    with pytest.raises(FormatError):
        parse_detections(stream(json.dumps({"video_id": "v", "frame_id": 0})))


def test_detections_from_path(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(det_line() + "\n\n" + det_line(frame_id=1) + "\n")
    assert len(parse_detections(p)) == 2


# ---- calibration ----


def test_calibration_homography():
    cal = parse_calibration({"homography": [0.1, 0, 0, 0, 0.1, 0, 0, 0, 1], "fps": 30, "image_size": [640, 480]})
    assert cal.fps == 30 and cal.image_size_px == (640, 480)
    assert np.allclose(cal.homography_px_to_road, np.diag([0.1, 0.1, 1]))


def test_calibration_singular():
    with pytest.raises(CalibrationDegenerate):
        parse_calibration({"homography": [1, 2, 3, 2, 4, 6, 0, 0, 1]})


def test_calibration_krt():
    K = [[800, 0, 320], [0, 800, 240], [0, 0, 1]]
    cal = parse_calibration({"K": K, "R": np.eye(3).tolist(), "t": [0, 0, 5]})
    assert cal.homography_px_to_road.shape == (3, 3)


# ---- lanes ----


def lane_line(lane_id, space, pts):
    return json.dumps({"lane_id": lane_id, "coord_space": space, "points": pts})


def test_pixel_lane_identity():
    (lane,) = parse_lanes(stream(lane_line("L1", "pixel", [[0, 0], [10, 5]])), Calibration(np.eye(3)))
    assert lane.polyline_road == ((0.0, 0.0), (10.0, 5.0))


def test_pixel_lane_scaled():
    cal = Calibration(np.diag([0.1, 0.1, 1.0]))
    (lane,) = parse_lanes(stream(lane_line("L1", "pixel", [[100, 0], [300, 50]])), cal)
    assert np.allclose(lane.polyline_road, [(10.0, 0.0), (30.0, 5.0)])


def test_road_lane_passes_through():
    (lane,) = parse_lanes(stream(lane_line("L1", "road", [[1, 2], [3, 4]])))
    assert lane.polyline_road == ((1.0, 2.0), (3.0, 4.0))


def test_collapsing_lane():
    with pytest.raises(DegeneratePolyline):
        parse_lanes(stream(lane_line("L1", "road", [[1, 2], [1, 2 + 1e-9]])))


def test_lane_near_duplicates_collapsed():
    (lane,) = parse_lanes(stream(lane_line("L1", "road", [[0, 0], [0, 1e-9], [5, 0]])))
    assert len(lane.polyline_road) == 2


def test_lane_horizon_names_lane_and_point():
    H = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0.01, -1.0]])
    with pytest.raises(HorizonDegenerate) as ei:
        parse_lanes(stream(lane_line("L9", "pixel", [[0, 0], [0, 100]])), Calibration(H))
    assert "L9" in str(ei.value) and "1" in str(ei.value)


def test_lane_bad_space():
    with pytest.raises(FormatError):
        parse_lanes(stream(lane_line("L1", "sky", [[0, 0], [1, 1]])))


# ---- QA ----


def qa_line(**kw):
    rec = {"question_id": "q1", "type": "Counting", "hierarchy": "H1", "question": "How many?",
           "answer": "3", "video_id": "v"}
    rec.update(kw)
    return json.dumps(rec)


def test_qa_counting_h1():
    (q,) = parse_qa_set(stream(qa_line()))
    assert (q.type, q.hierarchy, q.free_form) == ("Counting", "H1", True)


def test_qa_unknown_type():
    with pytest.raises(UnknownType):
        parse_qa_set(stream(qa_line(type="Weather")))


def test_qa_unknown_hierarchy():
    with pytest.raises(UnknownHierarchy):
        parse_qa_set(stream(qa_line(hierarchy="H7")))


def test_qa_options_gold_letter():
    (q,) = parse_qa_set(stream(qa_line(options={"A": "1", "B": "2", "C": "3", "D": "4"}, answer="C")))
    assert q.options["C"] == "3" and not q.free_form


def test_qa_options_list():
    (q,) = parse_qa_set(stream(qa_line(options=["x", "y"], answer="A")))
    assert q.options == {"A": "x", "B": "y"}


# ---- build ----


def rec(f, t, conf=0.9, cls="car", x=0.0, video="v"):
    return DetectionRecord(video, f, t, cls, (x, 0.0, x + 10.0, 10.0), conf)


def test_one_track_two_frames():
    g = build_scene_graph([rec(0, 1), rec(1, 1)], [], Calibration(np.eye(3)))
    assert (len(g.frames), len(g.instances), len(g.observations)) == (2, 1, 2)
    assert g.edge_counts()["Temporal"] == 1
    assert g.edge_counts()["FrameMembership"] == 2


def test_low_confidence_dropped():
    g = build_scene_graph([rec(0, 1), rec(0, 2, conf=0.1)], [], Calibration(np.eye(3)))
    assert list(g.instances) == [1]
    assert 0 in g.frames


def test_mixed_videos():
    with pytest.raises(MixedVideoIds):
        build_scene_graph([rec(0, 1), rec(0, 2, video="w")], [], Calibration(np.eye(3)))


def test_timestamp_default_from_fps():
    g = build_scene_graph([rec(0, 1), rec(5, 1)], [], Calibration(np.eye(3), fps=10.0))
    assert g.frames[5].timestamp_s == pytest.approx(0.5)


def test_fps_override_from_config():
    g = build_scene_graph([rec(0, 1), rec(5, 1)], [], Calibration(np.eye(3), fps=10.0), IngestConfig(fps=50.0))
    assert g.fps == 50.0


def test_closed_form_counts_10_by_100():
    recs = [rec(f, t, x=10.0 * t) for t in range(10) for f in range(t * 5, 100)]
    g = build_scene_graph(recs, [], Calibration(np.eye(3)))
    ks = [100 - 5 * t for t in range(10)]
    assert len(g.frames) == 100
    assert len(g.instances) == 10
    assert len(g.observations) == sum(ks)
    assert g.edge_counts()["FrameMembership"] == sum(ks)
    assert g.edge_counts()["Temporal"] == sum(k - 1 for k in ks)


def test_build_deterministic():
    rng = np.random.default_rng(1)
    recs = random_detections(rng, 20, 60)
    g1 = build_scene_graph(recs, [], scaling_calibration())
    g2 = build_scene_graph(list(reversed(recs)), [], scaling_calibration())
    assert export_statements(g1) == export_statements(g2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_observation_per_confident_detection(seed):
    rng = np.random.default_rng(seed)
    recs = random_detections(rng, 15, 50, string_ids=bool(seed % 2))
    g = build_scene_graph(recs, [], scaling_calibration())
    kept = {(r.track_id, r.frame_id) for r in recs if r.confidence >= 0.3}
    assert set(g.observations) == kept
    assert validate_graph(g) == []
    ks = {}
    for tid, _ in kept:
        ks[tid] = ks.get(tid, 0) + 1
    assert len(g.edges_of_kind(EdgeKind.TEMPORAL)) == sum(k - 1 for k in ks.values())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_dropping_a_detection_is_local(seed):
    rng = np.random.default_rng(seed)
    recs = [r for r in random_detections(rng, 8, 40, low_conf=0.0) if r.confidence >= 0.3]
    victim = recs[int(rng.integers(len(recs)))]
    rest = [r for r in recs if r is not victim]
    g1 = build_scene_graph(recs, [], scaling_calibration())
    g2 = build_scene_graph(rest, [], scaling_calibration())
    for key, o in g1.observations.items():
        if key[0] != victim.track_id:
            assert g2.observations[key] == o
    # within the victim's track, observations further than the window from the gap are untouched
    chain = [o.frame_id for o in g1.track_observations(victim.track_id)]
    i = chain.index(victim.frame_id)
    for j, f in enumerate(chain):
        if abs(j - i) > 4:
            assert g2.observations[(victim.track_id, f)] == g1.observations[(victim.track_id, f)]
