"""Ground-plane projection, track kinematics and lane geometry.

Everything here is a pure function of its inputs. Road coordinates are
meters on the plane z = 0; headings are degrees in [0, 360), measured
counter-clockwise from the +x road axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CalibrationDegenerate, HorizonDegenerate, InvalidBBox

DEFAULT_SIZE_PRIORS: dict[str, tuple[float, float, float]] = {
    "car": (4.5, 1.8, 1.5),
    "van": (5.2, 2.0, 2.2),
    "truck": (10.0, 2.5, 3.5),
    "trailer": (10.0, 2.5, 3.5),
    "bus": (12.0, 2.55, 3.2),
    "motorcycle": (2.0, 0.8, 1.5),
    "bicycle": (1.8, 0.6, 1.7),
    "pedestrian": (0.6, 0.6, 1.7),
}
FALLBACK_SIZE_PRIOR = (4.5, 1.8, 1.5)

KINEMATICS_WINDOW = 5
LANE_THRESHOLD_M = 2.0

_DET_EPS = 1e-12
_W_EPS = 1e-9
_STILL_EPS = 1e-6


@dataclass(frozen=True)
class RoadPoint:
    x: float
    y: float
    z: float = 0.0
    outside_image: bool = field(default=False, compare=False)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass
class Calibration:
    """Pixel to road-plane mapping plus the timing and size priors of a camera."""

    homography_px_to_road: np.ndarray
    fps: float = 25.0
    image_size_px: tuple[int, int] = (1920, 1080)
    size_priors_m: dict[str, tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_SIZE_PRIORS)
    )

    def __post_init__(self):
        H = np.asarray(self.homography_px_to_road, dtype=float)
        if H.shape != (3, 3):
            raise CalibrationDegenerate(f"homography must be 3x3, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise CalibrationDegenerate("homography has non-finite entries")
        if abs(np.linalg.det(H)) <= _DET_EPS:
            raise CalibrationDegenerate("homography is singular (|det H| <= 1e-12)")
        self.homography_px_to_road = H
        if not self.fps > 0:
            raise CalibrationDegenerate(f"fps must be positive, got {self.fps}")
        w, h = self.image_size_px
        if not (w > 0 and h > 0):
            raise CalibrationDegenerate(f"image size must be positive, got {self.image_size_px}")
        self.image_size_px = (w, h)
        priors = {}
        for label, dims in self.size_priors_m.items():
            dims = tuple(float(d) for d in dims)
            if len(dims) != 3 or min(dims) <= 0:
                raise CalibrationDegenerate(f"size prior for {label!r} must be 3 positive numbers")
            priors[label] = dims
        self.size_priors_m = priors

    @classmethod
    def from_krt(cls, K, R, t, **kwargs) -> "Calibration":
        """Build the ground-plane homography from pinhole intrinsics and road->camera pose.

        The road plane is z = 0, so the projection ``K [R|t]`` loses R's third
        column; the remaining 3x3 maps road to pixel and its inverse is H.
        """
        K = np.asarray(K, dtype=float).reshape(3, 3)
        R = np.asarray(R, dtype=float).reshape(3, 3)
        t = np.asarray(t, dtype=float).reshape(3)
        road_to_px = K @ np.column_stack([R[:, 0], R[:, 1], t])
        if abs(np.linalg.det(road_to_px)) <= _DET_EPS:
            raise CalibrationDegenerate("camera pose is degenerate for the ground plane")
        return cls(np.linalg.inv(road_to_px), **kwargs)

    def size_prior(self, class_label: str) -> tuple[float, float, float]:
        return self.size_priors_m.get(class_label, FALLBACK_SIZE_PRIOR)

    def in_image(self, u: float, v: float) -> bool:
        w, h = self.image_size_px
        return 0 <= u <= w and 0 <= v <= h


def _as_homography(calibration) -> np.ndarray:
    if isinstance(calibration, Calibration):
        return calibration.homography_px_to_road
    return np.asarray(calibration, dtype=float)


def project_to_road(calibration, pixel_point: Sequence[float]) -> RoadPoint:
    """Map a pixel ``(u, v)`` onto the road plane through the homography.

    ``calibration`` may be a :class:`Calibration` or a bare 3x3 matrix.
    Points outside the image are still projected and carry
    ``outside_image=True``.
    """
    H = _as_homography(calibration)
    u, v = float(pixel_point[0]), float(pixel_point[1])
    x, y, w = H @ np.array([u, v, 1.0])
    if abs(w) <= _W_EPS:
        raise HorizonDegenerate(f"pixel ({u}, {v}) maps to infinity (|w| = {abs(w):.3g})")
    outside = isinstance(calibration, Calibration) and not calibration.in_image(u, v)
    return RoadPoint(float(x / w), float(y / w), 0.0, outside_image=outside)


def project_to_pixel(calibration, road_point) -> tuple[float, float]:
    """Inverse of :func:`project_to_road` for points on the plane."""
    H = _as_homography(calibration)
    x, y = float(road_point[0]), float(road_point[1])
    u, v, w = np.linalg.solve(H, np.array([x, y, 1.0]))
    if abs(w) <= _W_EPS:
        raise HorizonDegenerate(f"road point ({x}, {y}) has no finite image")
    return (float(u / w), float(v / w))


def validate_bbox(bbox: Sequence[float]) -> tuple[float, float, float, float]:
    if len(bbox) != 4:
        raise InvalidBBox(f"bbox needs 4 values, got {len(bbox)}")
    x1, y1, x2, y2 = (float(b) for b in bbox)
    if not all(math.isfinite(b) for b in (x1, y1, x2, y2)):
        raise InvalidBBox(f"bbox has non-finite values: {bbox}")
    if not (x1 < x2 and y1 < y2):
        raise InvalidBBox(f"degenerate bbox {tuple(bbox)}: need x1 < x2 and y1 < y2")
    return (x1, y1, x2, y2)


def ground_anchor(bbox_px: Sequence[float]) -> tuple[float, float]:
    """Bottom-center of a box, the usual proxy for the road contact point."""
    x1, _, x2, y2 = validate_bbox(bbox_px)
    return ((x1 + x2) / 2.0, y2)


def heading_from_velocity(vx: float, vy: float) -> float:
    deg = math.degrees(math.atan2(vy, vx)) % 360.0
    # tiny negative angles wrap to exactly 360.0 under float modulo
    return 0.0 if deg >= 360.0 else deg


def derive_kinematics(track_observations, fps: float, window: int = KINEMATICS_WINDOW):
    """Fill ``vel3d_mps``, ``speed_mps`` and ``heading_deg`` for one track.

    ``track_observations`` must be frame-ordered observations of a single
    track with ``pos3d_road`` set. Velocity at index i is the difference
    between the positions ``window // 2`` observations either side, clipped
    at the ends of the track, divided by the elapsed frame time. Heading is
    left unset when the object is effectively still.
    """
    obs = list(track_observations)
    if fps <= 0:
        raise ValueError("fps must be positive")
    k = len(obs)
    if k < 2:
        return [replace(o, speed_mps=None, heading_deg=None, vel3d_mps=None) for o in obs]
    half = max(1, int(window) // 2)
    frames = np.array([o.frame_id for o in obs], dtype=float)
    pos = np.array([o.pos3d_road for o in obs], dtype=float)
    out = []
    for i, o in enumerate(obs):
        lo, hi = max(0, i - half), min(k - 1, i + half)
        dt = (frames[hi] - frames[lo]) / fps
        vel = (pos[hi] - pos[lo]) / dt
        vx, vy, vz = (float(c) for c in vel)
        speed = math.sqrt(vx * vx + vy * vy + vz * vz)
        heading = heading_from_velocity(vx, vy) if speed > _STILL_EPS else None
        out.append(replace(o, vel3d_mps=(vx, vy, vz), speed_mps=speed, heading_deg=heading))
    return out


def point_polyline_distance(point, polyline) -> tuple[float, int, float]:
    """Distance from a point to a polyline.

    Returns ``(distance_m, segment_index, t)`` where ``t`` in [0, 1] is the
    position of the closest point along that segment. The lowest segment
    index wins ties.
    """
    p = np.array([float(point[0]), float(point[1])])
    pts = np.asarray(polyline, dtype=float)[:, :2]
    a, b = pts[:-1], pts[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / denom
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    d = np.hypot(closest[:, 0] - p[0], closest[:, 1] - p[1])
    idx = int(np.argmin(d))
    return float(d[idx]), idx, float(t[idx])


def _id_key(value):
    # ints sort numerically ahead of strings
    return (1, str(value)) if isinstance(value, str) else (0, value)


def assign_lane(observation, lanes: Iterable, threshold_m: float = LANE_THRESHOLD_M,
                tie_eps: float = 1e-12):
    """Nearest lane within ``threshold_m`` of a position, or ``None``.

    ``observation`` is anything with ``pos3d_road`` or a bare (x, y) point;
    ``lanes`` are :class:`~trafficsg.graph.LaneNode` objects (or any
    objects with ``lane_id`` and ``polyline_road``).
    """
    pos = getattr(observation, "pos3d_road", observation)
    best = None
    for lane in sorted(lanes, key=lambda ln: _id_key(ln.lane_id)):
        d, _, _ = point_polyline_distance(pos, lane.polyline_road)
        if best is None or d < best[1] - tie_eps:
            best = (lane.lane_id, d)
    if best is None or best[1] > threshold_m:
        return None
    return best


def polyline_length(polyline) -> float:
    pts = np.asarray(polyline, dtype=float)
    return float(np.sum(np.hypot(*np.diff(pts[:, :2], axis=0).T)))


def size_prior_for(class_label: str, priors: Mapping[str, Sequence[float]] | None = None):
    table = DEFAULT_SIZE_PRIORS if priors is None else priors
    dims = table.get(class_label, FALLBACK_SIZE_PRIOR)
    return tuple(float(d) for d in dims)
