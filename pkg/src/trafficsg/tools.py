"""Query and visual tools over a scene graph, plus the registry the agent calls.

Each tool is a plain function returning a JSON-friendly payload dict and
raising package errors on bad input. :func:`registry_dispatch` validates
arguments against the published schema, runs the tool and always hands
back a :class:`ToolResult`, so a bad call never aborts the agent loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .errors import (
    BackendError,
    ImageUnavailable,
    NoMatch,
    TrafficSGError,
    UnknownObservation,
)
from .graph import SceneGraph

PARSE_MATCH_RADIUS_PX = 50.0
TRAJECTORY_MAX_POINTS = 20
CROP_PADDING = 0.10

RELATIONS = ("ahead", "ahead-left", "left", "behind-left",
             "behind", "behind-right", "right", "ahead-right")


@dataclass(frozen=True)
class InstanceTuple:
    class_label: str
    frame_id: int
    center_px: tuple[float, float]


@dataclass
class ToolCall:
    tool_name: str
    args: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tool": self.tool_name, "args": self.args}


@dataclass
class ToolResult:
    tool_name: str
    status: str  # ok | empty | error
    payload: dict | None
    message: str

    def to_dict(self) -> dict:
        return {"tool": self.tool_name, "status": self.status,
                "payload": self.payload, "message": self.message}

    @classmethod
    def from_dict(cls, d: dict) -> "ToolResult":
        return cls(d["tool"], d["status"], d["payload"], d["message"])


# ---- providers for the visual tools ----


class ImageProvider(Protocol):
    def get_frame(self, frame_id: int) -> np.ndarray | None: ...


class VisualBackend(Protocol):
    def answer(self, images: Sequence["ImageInput"], question: str) -> str: ...


@dataclass
class ImageInput:
    """An image handed to the visual backend. ``pixels`` is None for rect-only crops."""

    ref: str
    frame_id: int
    track_id: Any = None
    rect_px: tuple[float, float, float, float] | None = None
    pixels: np.ndarray | None = None


@dataclass
class ToolProviders:
    image_provider: ImageProvider | None = None
    vlm: VisualBackend | None = None
    require_pixels: bool = False
    image_size: tuple[int, int] | None = None


# ---- scene-graph tools ----


def _class_matches(label: str, wanted: str | None) -> bool:
    return wanted is None or label.casefold() == wanted.casefold()


def parse_instances(graph: SceneGraph, instance: InstanceTuple) -> dict:
    """Resolve an (class, frame, pixel center) tuple to a tracked instance."""
    fid = instance.frame_id
    graph.require_frame(fid)
    known = {inst.class_label.casefold() for inst in graph.instances.values()}
    label = instance.class_label if instance.class_label and instance.class_label.casefold() in known else None
    cx, cy = float(instance.center_px[0]), float(instance.center_px[1])
    best = None
    for obs in graph.observations_at(fid):
        if not _class_matches(graph.instances[obs.track_id].class_label, label):
            continue
        bx, by = obs.bbox_center
        d = math.hypot(bx - cx, by - cy)
        # observations_at is track-sorted, so strict < keeps the smallest id on ties
        if best is None or d < best[0]:
            best = (d, obs.track_id)
    if best is None or best[0] > PARSE_MATCH_RADIUS_PX:
        raise NoMatch(f"no instance within {PARSE_MATCH_RADIUS_PX:g} px of ({cx:g}, {cy:g}) at frame {fid}")
    return {"frame_id": fid, "track_id": best[1], "distance_px": best[0]}


def query_objects_at_frame(graph: SceneGraph, frame_id: int, class_filter: str | None = None) -> dict:
    objects = []
    for obs in graph.observations_at(frame_id):
        label = graph.instances[obs.track_id].class_label
        if not _class_matches(label, class_filter):
            continue
        objects.append({
            "track_id": obs.track_id,
            "class": label,
            "bbox": list(obs.bbox_px),
            "speed": obs.speed_mps,
            "pos3d": list(obs.pos3d_road),
        })
    return {"frame_id": frame_id, "class_filter": class_filter, "objects": objects}


def motion_at_frame(graph: SceneGraph, frame_id: int, track_id) -> dict:
    obs = graph.observation(track_id, frame_id)
    return {
        "frame_id": frame_id,
        "track_id": obs.track_id,
        "speed": obs.speed_mps,
        "heading": obs.heading_deg,
        "vel3d": list(obs.vel3d_mps) if obs.vel3d_mps is not None else None,
    }


def count_objects(graph: SceneGraph, frame_id: int, class_filter: str | None = None) -> dict:
    by_class: dict[str, int] = {}
    for obs in graph.observations_at(frame_id):
        label = graph.instances[obs.track_id].class_label
        by_class[label] = by_class.get(label, 0) + 1
    if class_filter is not None:
        count = sum(n for c, n in by_class.items() if _class_matches(c, class_filter))
        return {"frame_id": frame_id, "class_filter": class_filter, "count": count, "by_class": None}
    return {"frame_id": frame_id, "class_filter": None, "count": sum(by_class.values()),
            "by_class": dict(sorted(by_class.items()))}


def time_window(graph: SceneGraph, track_id) -> dict:
    tid = graph.resolve_track(track_id)
    frames = graph.track_index[tid]
    if not frames:
        return {"track_id": tid, "start_frame": None, "end_frame": None,
                "duration_s": 0.0, "fps": graph.fps}
    start, end = frames[0], frames[-1]
    return {"track_id": tid, "start_frame": start, "end_frame": end,
            "duration_s": (end - start) / graph.fps, "fps": graph.fps}


def sample_indices(k: int, max_points: int) -> list[int]:
    """Evenly spaced indices into ``k`` items, first and last always included."""
    if k <= max_points:
        return list(range(k))
    if max_points == 1:
        return [0]
    return [(i * (k - 1)) // (max_points - 1) for i in range(max_points)]


def trajectory_summary(graph: SceneGraph, track_id, max_points: int = TRAJECTORY_MAX_POINTS) -> dict:
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    tid = graph.resolve_track(track_id)
    obs = graph.track_observations(tid)
    points = [[obs[i].frame_id, obs[i].pos3d_road[0], obs[i].pos3d_road[1]]
              for i in sample_indices(len(obs), max_points)]
    return {"track_id": tid, "total_observations": len(obs), "points": points}


def list_all_tracks(graph: SceneGraph, class_filter: str | None = None) -> dict:
    tracks = []
    for tid in graph.track_ids:
        label = graph.instances[tid].class_label
        if not _class_matches(label, class_filter):
            continue
        frames = graph.track_index[tid]
        tracks.append({"track_id": tid, "class": label,
                       "start_frame": frames[0] if frames else None,
                       "end_frame": frames[-1] if frames else None})
    return {"video_id": graph.video_id, "class_filter": class_filter, "tracks": tracks}


def relation_label(dx: float, dy: float) -> str:
    """Quantize a (longitudinal, lateral) offset into 8 compass sectors of 45 degrees."""
    if dx == 0.0 and dy == 0.0:
        return "ahead"
    angle = math.degrees(math.atan2(dy, dx))
    # sectors are (center - 22.5, center + 22.5]
    return RELATIONS[math.ceil((angle - 22.5) / 45.0) % 8]


def relative_position(graph: SceneGraph, frame_id: int, track_a, track_b) -> dict:
    """Offset of ``track_b`` in ``track_a``'s heading frame (road axes if a has no heading)."""
    a = graph.observation(track_a, frame_id)
    b = graph.observation(track_b, frame_id)
    ex = b.pos3d_road[0] - a.pos3d_road[0]
    ey = b.pos3d_road[1] - a.pos3d_road[1]
    if a.heading_deg is None:
        dx, dy, axes = ex, ey, "road"
    else:
        th = math.radians(a.heading_deg)
        c, s = math.cos(th), math.sin(th)
        dx, dy, axes = c * ex + s * ey, -s * ex + c * ey, "heading"
    return {"frame_id": frame_id, "track_a": a.track_id, "track_b": b.track_id,
            "relation": relation_label(dx, dy), "dx": dx, "dy": dy,
            "distance": math.hypot(ex, ey), "axes": axes}


# ---- visual tools ----


def crop_rect(bbox, image_size, padding: float = CROP_PADDING):
    x1, y1, x2, y2 = bbox
    px, py = (x2 - x1) * padding, (y2 - y1) * padding
    w, h = image_size
    return (max(0.0, x1 - px), max(0.0, y1 - py), min(float(w), x2 + px), min(float(h), y2 + py))


def crop_ref(frame_id, track_id) -> str:
    return f"crop:{frame_id}:{track_id}"


def crop_image(image_provider, graph: SceneGraph, frame_id: int, track_ids,
               image_size=None, require_pixels: bool = False) -> list[ImageInput]:
    """Padded crops of the requested tracks at one frame.

    Pixels are attached when the provider has the frame; otherwise only the
    rectangles come back (image size then defaults to the frame extent known
    from calibration, or is left unclamped on the far side).
    """
    observations = [graph.observation(t, frame_id) for t in track_ids]
    frame = image_provider.get_frame(frame_id) if image_provider is not None else None
    if frame is None and require_pixels:
        raise ImageUnavailable(f"no image available for frame {frame_id}")
    if frame is not None:
        size = (frame.shape[1], frame.shape[0])
    elif image_size is not None:
        size = tuple(image_size)
    else:
        size = (math.inf, math.inf)
    crops = []
    for obs in observations:
        rect = crop_rect(obs.bbox_px, size)
        pixels = None
        if frame is not None:
            x1, y1 = int(math.floor(rect[0])), int(math.floor(rect[1]))
            x2, y2 = int(math.ceil(rect[2])), int(math.ceil(rect[3]))
            pixels = frame[y1:y2, x1:x2].copy()
        crops.append(ImageInput(crop_ref(frame_id, obs.track_id), frame_id, obs.track_id, rect, pixels))
    return crops


def visual_qa(vlm_backend, images: Sequence[ImageInput], question: str) -> str:
    if not images:
        raise ValueError("visual_qa needs at least one image")
    if not question or not question.strip():
        raise ValueError("visual_qa needs a non-empty question")
    if vlm_backend is None:
        raise BackendError("no visual backend configured")
    return vlm_backend.answer(list(images), question)


# ---- registry ----


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: str
    required: bool = True
    description: str = ""


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    args: tuple[ArgSpec, ...]
    run: Callable[[SceneGraph, ToolProviders, dict], dict]
    items_key: str | None = None


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


_TYPE_CHECKS: dict[str, Callable[[Any], bool]] = {
    "integer": _is_int,
    "number": _is_number,
    "string": lambda v: isinstance(v, str),
    "track_id": lambda v: _is_int(v) or isinstance(v, str),
    "point": lambda v: isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_number(c) for c in v),
    "track_list": lambda v: isinstance(v, (list, tuple)) and len(v) > 0
    and all(_is_int(t) or isinstance(t, str) for t in v),
    "string_list": lambda v: isinstance(v, (list, tuple)) and len(v) > 0
    and all(isinstance(s, str) for s in v),
}


class ArgumentError(TrafficSGError):
    pass


def validate_args(spec: ToolSpec, args) -> dict:
    if not isinstance(args, dict):
        raise ArgumentError("arguments must be a key-value record")
    known = {a.name for a in spec.args}
    extra = sorted(set(args) - known)
    if extra:
        raise ArgumentError(f"unexpected argument: {', '.join(extra)}")
    out = {}
    for a in spec.args:
        if a.name not in args or args[a.name] is None:
            if a.required:
                raise ArgumentError(f"missing argument: {a.name}")
            continue
        value = args[a.name]
        if not _TYPE_CHECKS[a.type](value):
            raise ArgumentError(f"type mismatch: {a.name} (expected {a.type}, got {value!r})")
        out[a.name] = value
    return out


def _run_parse_instances(graph, providers, a):
    return parse_instances(graph, InstanceTuple(a["class_label"], a["frame_id"], tuple(a["center_px"])))


def _run_crop(graph, providers, a):
    crops = crop_image(providers.image_provider, graph, a["frame_id"], a["track_ids"],
                       image_size=providers.image_size,
                       require_pixels=providers.require_pixels)
    with_pixels = all(c.pixels is not None for c in crops)
    return {
        "frame_id": a["frame_id"],
        "status": "pixels" if with_pixels else "rect-only",
        "crops": [{"track_id": c.track_id, "image_ref": c.ref, "crop_rect_px": list(c.rect_px),
                   "pixels_shape": list(c.pixels.shape) if c.pixels is not None else None}
                  for c in crops],
    }


def resolve_image_ref(graph: SceneGraph, providers: ToolProviders, ref: str) -> ImageInput:
    """Turn an image handle (``crop:<frame>:<track>`` or ``frame:<frame>``) into an image."""
    parts = ref.split(":")
    try:
        if parts[0] == "crop" and len(parts) == 3:
            fid = int(parts[1])
            tid = graph.resolve_track(parts[2])
            return crop_image(providers.image_provider, graph, fid, [tid],
                              image_size=providers.image_size,
                              require_pixels=providers.require_pixels)[0]
        if parts[0] == "frame" and len(parts) == 2:
            fid = int(parts[1])
            graph.require_frame(fid)
            frame = providers.image_provider.get_frame(fid) if providers.image_provider else None
            if frame is None and providers.require_pixels:
                raise ImageUnavailable(f"no image available for frame {fid}")
            return ImageInput(ref, fid, None, None, frame)
    except (ValueError, TrafficSGError) as exc:
        raise UnknownObservation(f"cannot resolve image {ref!r}: {exc}") from exc
    raise ValueError(f"bad image reference {ref!r}; use crop:<frame>:<track> or frame:<frame>")


def _run_visual_qa(graph, providers, a):
    images = [resolve_image_ref(graph, providers, r) for r in a["images"]]
    answer = visual_qa(providers.vlm, images, a["question"])
    return {"images": list(a["images"]), "question": a["question"], "answer": answer}


TOOLS: dict[str, ToolSpec] = {}


def register(spec: ToolSpec) -> ToolSpec:
    TOOLS[spec.name] = spec
    return spec


_frame = ArgSpec("frame_id", "integer", True, "frame index")
_class = ArgSpec("class_filter", "string", False, "restrict to one class label")

register(ToolSpec(
    "parse_instances", "Resolve an instance tuple (class, frame, pixel center) to frame and track id.",
    (ArgSpec("class_label", "string", True, "class of the instance"), _frame,
     ArgSpec("center_px", "point", True, "[cx, cy] pixel center")),
    _run_parse_instances))
register(ToolSpec(
    "query_objects_at_frame", "List objects at a frame with bbox, speed and road position.",
    (_frame, _class),
    lambda g, p, a: query_objects_at_frame(g, a["frame_id"], a.get("class_filter")),
    items_key="objects"))
register(ToolSpec(
    "motion_at_frame", "Speed, heading and 3D velocity of one track at one frame.",
    (_frame, ArgSpec("track_id", "track_id", True, "track id")),
    lambda g, p, a: motion_at_frame(g, a["frame_id"], a["track_id"])))
register(ToolSpec(
    "count_objects", "Count objects at a frame, per class when no filter is given.",
    (_frame, _class),
    lambda g, p, a: count_objects(g, a["frame_id"], a.get("class_filter"))))
register(ToolSpec(
    "time_window", "First and last frame of a track, duration in seconds and fps.",
    (ArgSpec("track_id", "track_id", True, "track id"),),
    lambda g, p, a: time_window(g, a["track_id"])))
register(ToolSpec(
    "trajectory_summary", "Road positions of a track sampled evenly across its lifespan.",
    (ArgSpec("track_id", "track_id", True, "track id"),
     ArgSpec("max_points", "integer", False, f"sample size, default {TRAJECTORY_MAX_POINTS}")),
    lambda g, p, a: trajectory_summary(g, a["track_id"], a.get("max_points", TRAJECTORY_MAX_POINTS)),
    items_key="points"))
register(ToolSpec(
    "list_all_tracks", "Enumerate all tracks in the video with class and lifespan.",
    (_class,),
    lambda g, p, a: list_all_tracks(g, a.get("class_filter")),
    items_key="tracks"))
register(ToolSpec(
    "relative_position", "Relation, dx (ahead), dy (left) and distance of track b seen from track a.",
    (_frame, ArgSpec("track_a", "track_id", True, "reference track"),
     ArgSpec("track_b", "track_id", True, "other track")),
    lambda g, p, a: relative_position(g, a["frame_id"], a["track_a"], a["track_b"])))
register(ToolSpec(
    "crop_image", "Crop image regions of tracks at a frame; returns image refs for visual_qa.",
    (_frame, ArgSpec("track_ids", "track_list", True, "tracks to crop")),
    _run_crop, items_key="crops"))
register(ToolSpec(
    "visual_qa", "Ask the vision model a question about images (crop:<f>:<t> or frame:<f> refs).",
    (ArgSpec("images", "string_list", True, "image refs"),
     ArgSpec("question", "string", True, "question about the images")),
    _run_visual_qa))


def catalog() -> list[dict]:
    return [{"name": s.name, "description": s.description,
             "args": [{"name": a.name, "type": a.type, "required": a.required,
                       "description": a.description} for a in s.args]}
            for s in TOOLS.values()]


def render_catalog() -> str:
    lines = []
    for s in TOOLS.values():
        arglist = ", ".join(f"{a.name}: {a.type}" + ("" if a.required else "?") for a in s.args)
        lines.append(f"- {s.name}({arglist}): {s.description}")
    return "\n".join(lines)


# ---- message rendering ----


def fmt_num(value) -> str:
    if value is None:
        return "unavailable"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        text = f"{value:.3f}".rstrip("0").rstrip(".")
        return "0" if text in ("-0", "") else text
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(fmt_num(v) for v in value) + "]"
    return str(value)


def _kv(pairs) -> str:
    return " ".join(f"{k}={fmt_num(v)}" for k, v in pairs)


def render_message(tool_name: str, payload: dict) -> str:
    p = payload
    if tool_name == "parse_instances":
        return _kv([("frame_id", p["frame_id"]), ("track_id", p["track_id"]),
                    ("distance_px", p["distance_px"])])
    if tool_name == "query_objects_at_frame":
        head = _kv([("frame_id", p["frame_id"]), ("class", p["class_filter"] or "any"),
                    ("objects", len(p["objects"]))])
        rows = [_kv([("track_id", o["track_id"]), ("class", o["class"]), ("bbox", o["bbox"]),
                     ("speed", o["speed"]), ("pos3d", o["pos3d"])]) for o in p["objects"]]
        return "\n".join([head] + rows)
    if tool_name == "motion_at_frame":
        return _kv([("frame_id", p["frame_id"]), ("track_id", p["track_id"]), ("speed", p["speed"]),
                    ("heading", p["heading"]), ("vel3d", p["vel3d"])])
    if tool_name == "count_objects":
        if p["by_class"] is None:
            return _kv([("frame_id", p["frame_id"]), ("class", p["class_filter"]), ("count", p["count"])])
        return _kv([("frame_id", p["frame_id"]), ("count", p["count"])] + list(p["by_class"].items()))
    if tool_name == "time_window":
        return _kv([("start", p["start_frame"]), ("end", p["end_frame"]),
                    ("duration", p["duration_s"]), ("fps", p["fps"])])
    if tool_name == "trajectory_summary":
        head = _kv([("track_id", p["track_id"]), ("points", len(p["points"])),
                    ("observations", p["total_observations"])])
        return "\n".join([head] + [_kv([("frame", f), ("x", x), ("y", y)]) for f, x, y in p["points"]])
    if tool_name == "list_all_tracks":
        head = _kv([("class", p["class_filter"] or "any"), ("tracks", len(p["tracks"]))])
        rows = [_kv([("track_id", t["track_id"]), ("class", t["class"]), ("start", t["start_frame"]),
                     ("end", t["end_frame"])]) for t in p["tracks"]]
        return "\n".join([head] + rows)
    if tool_name == "relative_position":
        return _kv([("relation", p["relation"]), ("dx", p["dx"]), ("dy", p["dy"]),
                    ("distance", p["distance"]), ("axes", p["axes"])])
    if tool_name == "crop_image":
        head = _kv([("frame_id", p["frame_id"]), ("status", p["status"])])
        rows = [_kv([("track_id", c["track_id"]), ("image", c["image_ref"]), ("rect", c["crop_rect_px"])])
                for c in p["crops"]]
        return "\n".join([head] + rows)
    if tool_name == "visual_qa":
        return f"answer={p['answer']}"
    return _kv(sorted(p.items()))


def _error(tool_name: str, msg: str) -> ToolResult:
    return ToolResult(tool_name, "error", None, f"{tool_name} error: {msg}")


def registry_dispatch(graph: SceneGraph, providers: ToolProviders | None, tool_call: ToolCall) -> ToolResult:
    """Validate and run one tool call. Never raises."""
    name = getattr(tool_call, "tool_name", None)
    try:
        spec = TOOLS.get(name) if isinstance(name, str) else None
        if spec is None:
            return _error(str(name), f"unknown tool {name!r}; valid tools: {', '.join(TOOLS)}")
        args = validate_args(spec, tool_call.args)
        payload = spec.run(graph, providers or ToolProviders(), args)
        status = "ok"
        if spec.items_key is not None and not payload[spec.items_key]:
            status = "empty"
        return ToolResult(name, status, payload, render_message(name, payload))
    except (TrafficSGError, ValueError, TypeError, KeyError) as exc:
        return _error(str(name), f"{type(exc).__name__}: {exc}" if not isinstance(exc, ArgumentError) else str(exc))
    except Exception as exc:  # noqa: BLE001 - the loop must survive any tool failure
        return _error(str(name), f"internal {type(exc).__name__}: {exc}")
