"""Run the reasoning loop with a scripted model so the whole thing is reproducible offline.

Swap ScriptedBackend for RemoteBackend (see the README) to talk to a real chat endpoint.
"""

from __future__ import annotations

import json

import toy_street
from trafficsg import AgentConfig, ScriptedBackend, build_scene_graph, render_trajectory, run_agent

graph = build_scene_graph(toy_street.detections(), toy_street.lanes(), toy_street.calibration())

replies = [
    "Thought: I should see what is in frame 30.\n"
    'Action: count_objects\nAction Input: {"frame_id": 30}',
    "Thought: Which car leads?\nCandidate: 1\n"
    'Action: relative_position\nAction Input: {"frame_id": 30, "track_a": 2, "track_b": 1}',
    "Thought: Track 1 is ahead of track 2 so it leads.\nFinal Answer: 1",
]
traj = run_agent(graph, "Which car is in front at frame 30?", ScriptedBackend(replies),
                 AgentConfig(max_steps=6))
print(render_trajectory(traj, "text"))

# the structured form is JSON lines, one header plus one record per step
lines = render_trajectory(traj, "structured").splitlines()
print(len(lines), "json lines, header keys:", sorted(json.loads(lines[0])))

# a model that never commits runs out of steps and keeps its last candidate
stubborn = ScriptedBackend([replies[1]], cycle=True)
traj = run_agent(graph, "Which car is in front at frame 30?", stubborn, AgentConfig(max_steps=3))
print(traj.termination, "->", traj.final_answer)
