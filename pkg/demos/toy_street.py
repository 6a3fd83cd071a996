"""A tiny synthetic street used by the demo scripts.

Pixels map to metres at 5 cm per pixel. Two lanes run along road y = 20 m and y = 30 m,
i.e. pixel rows 400 and 600.
"""

from __future__ import annotations

import numpy as np

from trafficsg import Calibration, DetectionRecord, LaneNode

FPS = 25.0
H = np.diag([0.05, 0.05, 1.0])


def calibration():
    return Calibration(H, fps=FPS, image_size_px=(1920, 1080))


def lanes():
    return [LaneNode("L1", ((0.0, 20.0), (96.0, 20.0))), LaneNode("L2", ((0.0, 30.0), (96.0, 30.0)))]


def detections(n_frames=60):
    recs = []
    for f in range(n_frames):
        # car 1 drives east in lane L1 at 10 m/s, car 2 follows 8 m behind
        for tid, x0 in ((1, 300.0), (2, 140.0)):
            x = x0 + 200.0 / FPS * f * 1.0
            recs.append(DetectionRecord("street", f, tid, "car", (x - 40, 360, x + 40, 400), 0.9))
        # a truck parked in lane L2
        recs.append(DetectionRecord("street", f, 3, "truck", (900, 520, 1060, 600), 0.95))
        # a pedestrian crossing north from frame 20 on
        if f >= 20:
            y = 900.0 - 1.4 / 0.05 / FPS * (f - 20)
            recs.append(DetectionRecord("street", f, 4, "pedestrian", (1200, y - 35, 1215, y), 0.8))
    # one unsure detection that ingest drops
    recs.append(DetectionRecord("street", 10, 99, "car", (10, 10, 20, 20), 0.1))
    return recs
