"""ReAct question answering over a scene graph.

Each step the reasoner sees the question, a compact summary of the graph
and every previous Thought/Action/Observation, and replies in a fixed
grammar::

    Thought: <free text, optionally a "Candidate: <answer>" line>
    Action: <tool name>
    Action Input: <one-line JSON object>

or ``Thought: ...`` followed by ``Final Answer: <text>``, which stops the
loop. Tool calls go through :func:`~trafficsg.tools.registry_dispatch`
and their rendered results are appended to the context.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field

from .errors import ParseFailure, TrafficSGError
from .graph import SceneGraph
from .tools import ToolCall, ToolProviders, ToolResult, registry_dispatch, render_catalog

TERMINATIONS = ("stop_signal", "max_steps_reached", "backend_failure")
_TOOL_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class AgentConfig:
    max_steps: int = 10
    reprompt_limit: int = 1
    context_budget_chars: int = 24000
    reasoner: str = "scripted"
    visual: str = "scripted"

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.reprompt_limit < 0:
            raise ValueError("reprompt_limit must be >= 0")
        if self.context_budget_chars < 1:
            raise ValueError("context budget must be positive")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ParsedReply:
    thought: str
    action: ToolCall | None
    final_answer: str | None
    candidate: str | None = None

    @property
    def is_stop(self) -> bool:
        return self.action is None


@dataclass
class AgentStep:
    step: int
    thought: str
    action: ToolCall | None  # None marks the stop step
    observation: ToolResult | None
    candidate: str | None = None
    final_answer: str | None = None
    reply: str = ""

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "thought": self.thought,
            "action": {"type": "stop"} if self.action is None
            else {"type": "tool", **self.action.to_dict()},
            "observation": None if self.observation is None else self.observation.to_dict(),
            "candidate": self.candidate,
            "final_answer": self.final_answer,
            "reply": self.reply,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentStep":
        act = d["action"]
        action = None if act["type"] == "stop" else ToolCall(act["tool"], act["args"])
        obs = None if d["observation"] is None else ToolResult.from_dict(d["observation"])
        return cls(d["step"], d["thought"], action, obs, d.get("candidate"),
                   d.get("final_answer"), d.get("reply", ""))


@dataclass
class AgentTrajectory:
    question: str
    video_id: str
    steps: list[AgentStep]
    final_answer: str
    termination: str
    question_id: str | None = None
    config_digest: str = ""
    initial_context: str = ""
    failures: list[dict] = field(default_factory=list)


@dataclass
class _Entry:
    kind: str  # question | graph | step | observation
    text: str
    digest: str | None = None


@dataclass
class AgentState:
    """Context s_t at step t plus the latest candidate answer."""

    step: int
    entries: list[_Entry]
    candidate: str | None = None

    def render(self, budget: int) -> str:
        text = _join(self.entries)
        for entry in self.entries:
            if len(text) <= budget:
                break
            if entry.kind == "observation" and entry.digest is not None:
                entry.text, entry.digest = entry.digest, None
                text = _join(self.entries)
        return text


def _join(entries) -> str:
    return "\n".join(e.text for e in entries)


SYSTEM_PROMPT = """You answer questions about a roadside traffic video. The video has been turned into a scene graph of frames, tracked objects and lanes, which you query with tools.

Tools:
{catalog}

Reply in exactly one of these two forms and nothing else.

Thought: <your reasoning; you may add a line "Candidate: <current best answer>">
Action: <tool name>
Action Input: <JSON object with the tool arguments, on one line>

Thought: <your reasoning>
Final Answer: <the answer; for multiple-choice questions give the option letter>"""


def system_prompt() -> str:
    return SYSTEM_PROMPT.format(catalog=render_catalog())


def initial_context(graph: SceneGraph, question: str) -> str:
    """Question plus a compact, deterministic summary of the graph."""
    frames = graph.frame_ids
    if frames:
        frame_line = f"Frames: {frames[0]}-{frames[-1]} ({len(frames)} frames) at {graph.fps:g} fps"
    else:
        frame_line = f"Frames: none at {graph.fps:g} fps"
    counts = Counter(inst.class_label for inst in graph.instances.values())
    breakdown = ", ".join(f"{c}={n}" for c, n in sorted(counts.items()))
    track_line = f"Tracks: {len(graph.instances)} tracks" + (f" ({breakdown})" if breakdown else "")
    lane_ids = ", ".join(str(lid) for lid in sorted(graph.lanes, key=str))
    lane_line = f"Lanes: {len(graph.lanes)}" + (f" ({lane_ids})" if lane_ids else "")
    return "\n".join([
        f"Question: {question}",
        f"Video: {graph.video_id}",
        frame_line,
        track_line,
        lane_line,
        "Tools:",
        render_catalog(),
    ])


def _strip_prefix(line: str, prefix: str) -> str | None:
    s = line.strip()
    return s[len(prefix):].strip() if s.startswith(prefix) else None


def parse_model_reply(text) -> ParsedReply:
    """Parse one reasoner reply; raises :class:`ParseFailure` with a diagnostic."""
    if not isinstance(text, str):
        raise ParseFailure(f"reply is not text ({type(text).__name__})", repr(text))
    lines = text.strip().splitlines()
    if not lines or _strip_prefix(lines[0], "Thought:") is None:
        raise ParseFailure("reply must start with 'Thought:'", text)
    thought_lines = [_strip_prefix(lines[0], "Thought:")]
    i = 1
    while i < len(lines):
        s = lines[i].strip()
        if s.startswith("Action:") or s.startswith("Final Answer:"):
            break
        if s.startswith("Action Input:") or s.startswith("Observation:") or s.startswith("Thought:"):
            raise ParseFailure(f"unexpected '{s.split(':')[0]}:' line inside the thought", text)
        thought_lines.append(s)
        i += 1
    if i == len(lines):
        raise ParseFailure("missing 'Action:' or 'Final Answer:' after the thought", text)
    thought = "\n".join(thought_lines).strip()
    candidate = None
    for ln in thought_lines:
        c = _strip_prefix(ln, "Candidate:")
        if c:
            candidate = c

    head = lines[i].strip()
    rest = [ln.strip() for ln in lines[i + 1:]]
    if head.startswith("Final Answer:"):
        for ln in rest:
            if ln.split(":")[0] in ("Thought", "Action", "Action Input", "Observation", "Final Answer"):
                raise ParseFailure("nothing may follow the final answer except its text", text)
        answer = "\n".join([head[len("Final Answer:"):].strip()] + rest).strip()
        if not answer:
            raise ParseFailure("empty final answer", text)
        return ParsedReply(thought, None, answer, candidate)

    name = head[len("Action:"):].strip()
    if not _TOOL_NAME.match(name):
        raise ParseFailure(f"invalid tool name {name!r}", text)
    if not rest or _strip_prefix(rest[0], "Action Input:") is None:
        raise ParseFailure("'Action:' must be followed by an 'Action Input:' line", text)
    raw_args = _strip_prefix(rest[0], "Action Input:")
    if any(ln for ln in rest[1:]):
        raise ParseFailure("'Action Input:' must be a single line and end the reply", text)
    try:
        args = json.loads(raw_args) if raw_args else None
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"Action Input is not valid JSON ({exc.msg})", text) from None
    if not isinstance(args, dict):
        raise ParseFailure("Action Input must be a JSON object", text)
    return ParsedReply(thought, ToolCall(name, args), None, candidate)


def _render_step_entry(reply: ParsedReply) -> str:
    lines = [f"Thought: {reply.thought}"]
    if reply.action is not None:
        lines.append(f"Action: {reply.action.tool_name}")
        lines.append("Action Input: " + json.dumps(reply.action.args, sort_keys=True, ensure_ascii=False))
    return "\n".join(lines)


def _observation_entry(result: ToolResult) -> _Entry:
    text = f"Observation: {result.message}"
    digest = f"Observation: [digest] {result.tool_name} status={result.status} ({len(result.message)} chars)"
    return _Entry("observation", text, digest if len(digest) < len(text) else None)


def run_agent(graph: SceneGraph, question: str, backend, config: AgentConfig | None = None,
              providers: ToolProviders | None = None, question_id: str | None = None) -> AgentTrajectory:
    """Run the reasoning loop until a final answer, the step budget, or a backend failure."""
    config = config or AgentConfig()
    providers = providers or ToolProviders()
    s1 = initial_context(graph, question)
    state = AgentState(1, [_Entry("question", s1)])
    system = system_prompt()
    steps: list[AgentStep] = []
    failures: list[dict] = []

    def finish(termination: str, answer: str) -> AgentTrajectory:
        return AgentTrajectory(question, graph.video_id, steps, answer, termination, question_id,
                               config.digest(), s1, failures)

    for t in range(1, config.max_steps + 1):
        state.step = t
        prompt = state.render(config.context_budget_chars)
        reply_text, parsed = None, None
        for attempt in range(config.reprompt_limit + 1):
            messages = [{"role": "system", "content": system}, {"role": "user", "content": prompt}]
            try:
                reply_text = backend.complete(messages)
            except Exception as exc:  # noqa: BLE001 - any backend fault ends the run, recorded
                failures.append({"step": t, "attempt": attempt, "kind": "backend_error",
                                 "detail": f"{type(exc).__name__}: {exc}"})
                return finish("backend_failure", state.candidate or "unknown")
            try:
                parsed = parse_model_reply(reply_text)
                break
            except ParseFailure as pf:
                failures.append({"step": t, "attempt": attempt, "kind": "parse_failure",
                                 "detail": pf.diagnostic,
                                 "reply": reply_text if isinstance(reply_text, str) else repr(reply_text)})
                prompt = (prompt + f"\n\nYour previous reply could not be parsed: {pf.diagnostic}\n"
                          "Reply again using exactly the required format.")
        if parsed is None:
            return finish("backend_failure", state.candidate or "unknown")

        if parsed.candidate is not None:
            state.candidate = parsed.candidate
        if parsed.is_stop:
            steps.append(AgentStep(t, parsed.thought, None, None, parsed.candidate,
                                   parsed.final_answer, reply_text))
            return finish("stop_signal", parsed.final_answer)

        result = registry_dispatch(graph, providers, parsed.action)
        steps.append(AgentStep(t, parsed.thought, parsed.action, result, parsed.candidate, None, reply_text))
        state.entries.append(_Entry("step", _render_step_entry(parsed)))
        state.entries.append(_observation_entry(result))

    return finish("max_steps_reached", state.candidate or "unknown")


# ---- rendering and replay ----


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def render_trajectory(trajectory: AgentTrajectory, format: str = "text") -> str:
    if format == "structured":
        header = {
            "record": "header",
            "question": trajectory.question,
            "question_id": trajectory.question_id,
            "video_id": trajectory.video_id,
            "config_digest": trajectory.config_digest,
            "termination": trajectory.termination,
            "final_answer": trajectory.final_answer,
            "initial_context": trajectory.initial_context,
            "failures": trajectory.failures,
        }
        lines = [_dumps(header)] + [_dumps({"record": "step", **s.to_dict()}) for s in trajectory.steps]
        return "\n".join(lines) + "\n"
    if format != "text":
        raise ValueError(f"unknown format {format!r}; use 'text' or 'structured'")
    out = [f"Question: {trajectory.question}", f"Video: {trajectory.video_id}", ""]
    for s in trajectory.steps:
        out.append(f"[step {s.step}]")
        out.append(f"Thought: {s.thought}")
        if s.action is None:
            out.append(f"Final Answer: {s.final_answer}")
        else:
            out.append(f"Action: {s.action.tool_name}")
            out.append(f"Action Input: {_dumps(s.action.args)}")
            out.append(f"Observation ({s.observation.status}): {s.observation.message}")
        out.append("")
    for f in trajectory.failures:
        out.append(f"! step {f['step']} attempt {f['attempt']}: {f['kind']}: {f['detail']}")
    out.append(f"Termination: {trajectory.termination}")
    out.append(f"Answer: {trajectory.final_answer}")
    return "\n".join(out) + "\n"


def parse_trajectory(text: str) -> AgentTrajectory:
    """Read back the structured rendering."""
    records = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not records or records[0].get("record") != "header":
        raise TrafficSGError("trajectory document has no header record")
    h = records[0]
    steps = [AgentStep.from_dict({k: v for k, v in r.items() if k != "record"}) for r in records[1:]]
    return AgentTrajectory(h["question"], h["video_id"], steps, h["final_answer"], h["termination"],
                           h.get("question_id"), h.get("config_digest", ""),
                           h.get("initial_context", ""), h.get("failures", []))


def replay_trajectory(graph: SceneGraph, trajectory: AgentTrajectory,
                      providers: ToolProviders | None = None) -> list[str]:
    """Re-run every recorded tool call; returns descriptions of results that differ."""
    mismatches = []
    for s in trajectory.steps:
        if s.action is None:
            continue
        fresh = registry_dispatch(graph, providers, ToolCall(s.action.tool_name, s.action.args))
        if json.loads(_dumps(fresh.to_dict())) != json.loads(_dumps(s.observation.to_dict())):
            mismatches.append(f"step {s.step}: {s.action.tool_name} result differs")
    return mismatches
