"""Call the query tools directly, the same way the agent does."""

from __future__ import annotations

import toy_street
from trafficsg import ToolCall, build_scene_graph, registry_dispatch

graph = build_scene_graph(toy_street.detections(), toy_street.lanes(), toy_street.calibration())


def call(tool, **args):
    result = registry_dispatch(graph, None, ToolCall(tool, args))
    print(f"{tool:<24} [{result.status}] {result.message}")
    return result


call("count_objects", frame_id=30)
call("count_objects", frame_id=30, class_filter="pedestrian")
call("list_all_tracks", class_filter="car")
call("time_window", track_id=4)
call("motion_at_frame", frame_id=30, track_id=1)
call("motion_at_frame", frame_id=30, track_id=3)  # parked, so no heading
call("relative_position", frame_id=30, track_a=2, track_b=1)
call("trajectory_summary", track_id=4)

# a pixel position plus a class label resolves to the nearest matching track
call("parse_instances", class_label="truck", frame_id=5, center_px=[985, 560])

# mistakes come back as error results instead of exceptions
call("time_window", track_id=404)
call("count_objects", frame_id="five")
