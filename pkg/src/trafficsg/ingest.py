"""Input parsers and scene-graph construction from perception outputs.

All input files are line-delimited JSON, one record per line. Blank lines
and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    CalibrationDegenerate,
    DegeneratePolyline,
    FormatError,
    GraphIntegrityError,
    HorizonDegenerate,
    InvalidBBox,
    MixedVideoIds,
    UnknownHierarchy,
    UnknownType,
)
from .geometry import (
    DEFAULT_SIZE_PRIORS,
    KINEMATICS_WINDOW,
    LANE_THRESHOLD_M,
    Calibration,
    assign_lane,
    derive_kinematics,
    ground_anchor,
    project_to_road,
    validate_bbox,
)
from .graph import FrameNode, LaneNode, Observation, SceneGraph, id_key, validate_graph

log = logging.getLogger(__name__)

QUESTION_TYPES = ("Class", "Motion", "Positioning", "Existence", "Counting")
HIERARCHIES = ("H0", "H1")
OPTION_LABELS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class DetectionRecord:
    video_id: str
    frame_id: int
    track_id: int | str
    class_label: str
    bbox_px: tuple[float, float, float, float]
    confidence: float
    timestamp_s: float | None = None


@dataclass
class IngestConfig:
    fps: float | None = None  # None: take it from the calibration
    kinematics_window_frames: int = KINEMATICS_WINDOW
    lane_threshold_m: float = LANE_THRESHOLD_M
    min_confidence: float = 0.3
    size_priors: dict = field(default_factory=lambda: dict(DEFAULT_SIZE_PRIORS))

    def __post_init__(self):
        if self.fps is not None and not self.fps > 0:
            raise ValueError("fps must be positive")
        if self.kinematics_window_frames < 1:
            raise ValueError("kinematics window must be >= 1 frame")
        if not self.lane_threshold_m > 0:
            raise ValueError("lane threshold must be positive")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in [0, 1]")


@dataclass(frozen=True)
class QARecord:
    question_id: str
    type: str
    hierarchy: str
    question: str
    answer: str
    options: dict[str, str] | None = None
    video_id: str | None = None

    @property
    def free_form(self) -> bool:
        return self.options is None


def _lines(stream) -> Iterator[tuple[int, str]]:
    """Number the meaningful lines of a path, text stream or iterable of lines."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8") as fh:
            yield from _lines(fh)
        return
    for n, line in enumerate(stream, start=1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield n, line


def _load_json_line(n: int, line: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise ValueError("record must be a JSON object")
    return rec


def _identifier(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, str)) or value == "":
        raise ValueError(f"{what} must be a non-empty string or an integer")
    return value


def _detection_from(rec: dict) -> DetectionRecord:
    missing = [k for k in ("video_id", "frame_id", "track_id", "class", "bbox", "confidence") if k not in rec]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")
    frame_id = rec["frame_id"]
    if isinstance(frame_id, bool) or not isinstance(frame_id, int) or frame_id < 0:
        raise ValueError(f"frame_id must be a non-negative integer, got {frame_id!r}")
    if not isinstance(rec["class"], str) or not rec["class"]:
        raise ValueError("class must be a non-empty string")
    try:
        bbox = validate_bbox(rec["bbox"])
    except (InvalidBBox, TypeError) as exc:
        raise ValueError(str(exc)) from None
    conf = rec["confidence"]
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
        raise ValueError(f"confidence must be in [0, 1], got {conf!r}")
    ts = rec.get("timestamp_s")
    if ts is not None and (not isinstance(ts, (int, float)) or not math.isfinite(ts) or ts < 0):
        raise ValueError(f"timestamp_s must be a non-negative number, got {ts!r}")
    return DetectionRecord(
        video_id=str(_identifier(rec["video_id"], "video_id")),
        frame_id=frame_id,
        track_id=_identifier(rec["track_id"], "track_id"),
        class_label=rec["class"],
        bbox_px=bbox,
        confidence=float(conf),
        timestamp_s=None if ts is None else float(ts),
    )


def parse_detections(stream, fail_fast: bool = False) -> list[DetectionRecord]:
    """Read detection records, collecting every malformed line before failing."""
    records, problems = [], []
    for n, line in _lines(stream):
        try:
            records.append(_detection_from(_load_json_line(n, line)))
        except ValueError as exc:
            problems.append((n, str(exc)))
            if fail_fast:
                break
    if problems:
        raise FormatError(problems, "detections")
    return records


def parse_calibration(source) -> Calibration:
    """Calibration from a JSON object, a path, or a text stream.

    Accepts either ``homography`` (9 numbers, row-major, pixel to road) or
    ``K``, ``R``, ``t`` (road to camera pose), plus ``fps``,
    ``image_size`` and ``size_priors``.
    """
    if isinstance(source, dict):
        data = source
    else:
        try:
            if isinstance(source, (str, os.PathLike)):
                data = json.loads(Path(source).read_text(encoding="utf-8"))
            else:
                data = json.load(source)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON ({exc.msg})", "calibration") from None
    if not isinstance(data, dict):
        raise FormatError("calibration must be a JSON object", "calibration")
    kwargs = {}
    if "fps" in data:
        kwargs["fps"] = float(data["fps"])
    if "image_size" in data:
        kwargs["image_size_px"] = tuple(int(v) for v in data["image_size"])
    priors = dict(DEFAULT_SIZE_PRIORS)
    priors.update({k: tuple(v) for k, v in data.get("size_priors", {}).items()})
    kwargs["size_priors_m"] = priors
    try:
        if "homography" in data:
            H = np.asarray(data["homography"], dtype=float)
            if H.size != 9:
                raise FormatError("homography needs 9 numbers", "calibration")
            return Calibration(H.reshape(3, 3), **kwargs)
        if all(k in data for k in ("K", "R", "t")):
            return Calibration.from_krt(data["K"], data["R"], data["t"], **kwargs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad calibration values ({exc})", "calibration") from None
    raise FormatError("calibration needs 'homography' or 'K', 'R', 't'", "calibration")


def parse_lanes(stream, calibration: Calibration | None = None) -> list[LaneNode]:
    """Lane polylines in road coordinates.

    Pixel-space lanes are projected point by point; consecutive points that
    land within 1e-6 m of each other are merged.
    """
    lanes, problems = [], []
    seen = set()
    for n, line in _lines(stream):
        try:
            rec = _load_json_line(n, line)
            lane_id = _identifier(rec.get("lane_id"), "lane_id")
            space = rec.get("coord_space")
            if space not in ("pixel", "road"):
                raise ValueError(f"coord_space must be 'pixel' or 'road', got {space!r}")
            raw = rec.get("points")
            if not isinstance(raw, list) or not all(
                isinstance(p, (list, tuple)) and len(p) == 2 for p in raw
            ):
                raise ValueError("points must be a list of [x, y] pairs")
            if lane_id in seen:
                raise ValueError(f"duplicate lane_id {lane_id!r}")
            seen.add(lane_id)
        except ValueError as exc:
            problems.append((n, str(exc)))
            continue
        if space == "pixel":
            if calibration is None:
                raise FormatError([(n, "pixel-space lane needs a calibration")], "lanes")
            pts = []
            for i, p in enumerate(raw):
                try:
                    rp = project_to_road(calibration, p)
                except HorizonDegenerate as exc:
                    raise HorizonDegenerate(f"lane {lane_id!r} point {i}: {exc}") from None
                pts.append((rp.x, rp.y))
        else:
            pts = [(float(p[0]), float(p[1])) for p in raw]
        collapsed = []
        for p in pts:
            if collapsed and math.hypot(p[0] - collapsed[-1][0], p[1] - collapsed[-1][1]) <= 1e-6:
                continue
            collapsed.append(p)
        if len(collapsed) < 2:
            raise DegeneratePolyline(f"lane {lane_id!r} collapses to a single point")
        lanes.append(LaneNode(lane_id, tuple(collapsed)))
    if problems:
        raise FormatError(problems, "lanes")
    return lanes


def _qa_from(rec: dict) -> QARecord:
    missing = [k for k in ("question_id", "type", "hierarchy", "question", "answer") if k not in rec]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")
    qtype = next((t for t in QUESTION_TYPES if t.casefold() == str(rec["type"]).casefold()), None)
    if qtype is None:
        raise UnknownType(f"unknown question type {rec['type']!r}; expected one of {', '.join(QUESTION_TYPES)}")
    hier = str(rec["hierarchy"]).upper()
    if hier not in HIERARCHIES:
        raise UnknownHierarchy(f"unknown hierarchy {rec['hierarchy']!r}; expected H0 or H1")
    options = rec.get("options")
    if options is not None:
        if isinstance(options, list):
            if len(options) > len(OPTION_LABELS):
                raise ValueError("at most 4 options (A-D)")
            options = dict(zip(OPTION_LABELS, options))
        if not isinstance(options, dict) or not options:
            raise ValueError("options must be a list or an A-D keyed object")
        options = {str(k).upper(): str(v) for k, v in options.items()}
        if not set(options) <= set(OPTION_LABELS):
            raise ValueError(f"option labels must be A-D, got {sorted(options)}")
    question = str(rec["question"]).strip()
    if not question:
        raise ValueError("question text is empty")
    return QARecord(
        question_id=str(rec["question_id"]),
        type=qtype,
        hierarchy=hier,
        question=question,
        answer=str(rec["answer"]),
        options=options,
        video_id=None if rec.get("video_id") is None else str(rec["video_id"]),
    )


def parse_qa_set(stream) -> list[QARecord]:
    records, problems, seen = [], [], set()
    for n, line in _lines(stream):
        try:
            rec = _qa_from(_load_json_line(n, line))
        except (UnknownType, UnknownHierarchy) as exc:
            raise type(exc)(f"line {n}: {exc}") from None
        except ValueError as exc:
            problems.append((n, str(exc)))
            continue
        if rec.question_id in seen:
            problems.append((n, f"duplicate question_id {rec.question_id!r}"))
            continue
        seen.add(rec.question_id)
        records.append(rec)
    if problems:
        raise FormatError(problems, "qa")
    return records


def parse_frame_manifest(stream, base_dir=None) -> dict[int, Path]:
    base = Path(base_dir) if base_dir is not None else None
    if base is None and isinstance(stream, (str, os.PathLike)):
        base = Path(stream).parent
    out, problems = {}, []
    for n, line in _lines(stream):
        try:
            rec = _load_json_line(n, line)
            fid = rec["frame_id"]
            if isinstance(fid, bool) or not isinstance(fid, int):
                raise ValueError("frame_id must be an integer")
            path = Path(rec["path"])
        except (KeyError, ValueError, TypeError) as exc:
            problems.append((n, f"bad manifest record ({exc})"))
            continue
        out[fid] = path if path.is_absolute() or base is None else base / path
    if problems:
        raise FormatError(problems, "frame manifest")
    return out


class ManifestImageProvider:
    """Loads frame images listed in a manifest on demand, as RGB arrays."""

    def __init__(self, manifest: dict[int, Path]):
        self.manifest = dict(manifest)

    def get_frame(self, frame_id: int):
        path = self.manifest.get(frame_id)
        if path is None or not Path(path).exists():
            return None
        from PIL import Image

        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))


def build_scene_graph(
    detections: Iterable[DetectionRecord],
    lanes: Iterable[LaneNode],
    calibration: Calibration,
    config: IngestConfig | None = None,
    video_id: str | None = None,
) -> SceneGraph:
    """Stage one: frames, instances, observations, kinematics, lanes and edges."""
    config = config or IngestConfig()
    if not isinstance(calibration, Calibration):
        raise CalibrationDegenerate("a Calibration is required")
    H = calibration.homography_px_to_road
    if abs(np.linalg.det(H)) <= 1e-12:
        raise CalibrationDegenerate("homography is singular")
    detections = list(detections)
    videos = sorted({d.video_id for d in detections})
    if len(videos) > 1:
        raise MixedVideoIds(f"detections span several videos: {', '.join(videos)}")
    if video_id is None:
        video_id = videos[0] if videos else "video"
    elif videos and videos[0] != video_id:
        raise MixedVideoIds(f"detections are for {videos[0]!r}, expected {video_id!r}")
    fps = config.fps or calibration.fps
    priors = dict(calibration.size_priors_m)
    priors.update(config.size_priors or {})

    graph = SceneGraph(video_id, fps, size_priors=priors)

    timestamps: dict[int, float] = {}
    for d in detections:
        if d.frame_id not in timestamps or (timestamps[d.frame_id] is None and d.timestamp_s is not None):
            timestamps[d.frame_id] = d.timestamp_s
    for fid in sorted(timestamps):
        ts = timestamps[fid]
        graph.insert_frame(FrameNode(fid, fid / fps if ts is None else ts))

    kept = [d for d in detections if d.confidence >= config.min_confidence]
    if len(kept) < len(detections):
        log.info("dropped %d detections below confidence %.2f", len(detections) - len(kept),
                 config.min_confidence)

    per_track: dict = {}
    labels: dict = {}
    for d in kept:
        try:
            anchor = project_to_road(calibration, ground_anchor(d.bbox_px))
        except HorizonDegenerate as exc:
            raise HorizonDegenerate(f"track {d.track_id!r} frame {d.frame_id}: {exc}") from None
        obs = Observation(d.track_id, d.frame_id, d.bbox_px, anchor.as_tuple(), confidence=d.confidence)
        per_track.setdefault(d.track_id, []).append(obs)
        labels[(d.track_id, d.frame_id)] = d.class_label

    lane_list = sorted(lanes, key=lambda ln: id_key(ln.lane_id))
    for lane in lane_list:
        graph.insert_lane(lane)

    for tid in sorted(per_track, key=id_key):
        track = sorted(per_track[tid], key=lambda o: o.frame_id)
        for obs in derive_kinematics(track, fps, config.kinematics_window_frames):
            graph.insert_observation(obs, labels[obs.key])
            if lane_list:
                hit = assign_lane(obs, lane_list, config.lane_threshold_m)
                if hit is not None:
                    graph.insert_lane_assignment(obs.track_id, obs.frame_id, hit[0], hit[1])

    problems = validate_graph(graph)
    if problems:
        raise GraphIntegrityError(problems)
    return graph


def load_inputs(detections_path, calibration_path, lanes_path=None, config: IngestConfig | None = None):
    """Parse the three input files and build the graph in one go."""
    calibration = parse_calibration(calibration_path)
    detections = parse_detections(detections_path)
    lanes = parse_lanes(lanes_path, calibration) if lanes_path else []
    return build_scene_graph(detections, lanes, calibration, config)
