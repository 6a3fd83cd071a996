"""Command-line entry point: build graphs, run tools, ask questions, evaluate QA sets.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .agent import AgentConfig, render_trajectory, run_agent
from .backends import RemoteBackend, RemoteConfig, RemoteVLM, ScriptedBackend, ScriptedVLM, load_script
from .errors import BackendError, ConfigError, TrafficSGError
from .evaluation import evaluate, format_question, load_results, write_results
from .graph import export_statements, load_snapshot, save_snapshot
from .ingest import (
    IngestConfig,
    ManifestImageProvider,
    build_scene_graph,
    parse_calibration,
    parse_detections,
    parse_frame_manifest,
    parse_lanes,
    parse_qa_set,
)
from .tools import TOOLS, ToolCall, ToolProviders, registry_dispatch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

log = logging.getLogger("trafficsg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _require_file(path, what):
    if path is None:
        raise UsageError(f"missing {what} path")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _ingest_config(cfg: dict) -> IngestConfig:
    known = IngestConfig.__dataclass_fields__
    return IngestConfig(**{k: v for k, v in cfg.get("ingest", {}).items() if k in known})


def _agent_config(cfg: dict, args) -> AgentConfig:
    known = AgentConfig.__dataclass_fields__
    values = {k: v for k, v in cfg.get("agent", {}).items() if k in known}
    if getattr(args, "max_steps", None) is not None:
        values["max_steps"] = args.max_steps
    values["reasoner"] = args.backend
    return AgentConfig(**values)


def _providers(cfg: dict, args, graph) -> ToolProviders:
    manifest_path = args.frames or cfg.get("frames_manifest")
    image_provider = None
    if manifest_path:
        image_provider = ManifestImageProvider(parse_frame_manifest(_require_file(manifest_path, "frame manifest")))
    vlm = None
    vlm_script = args.vlm_script or cfg.get("vlm_script")
    if vlm_script:
        vlm = ScriptedVLM.from_entries(load_script(vlm_script))
    elif args.backend == "remote":
        vlm = RemoteVLM(RemoteConfig.from_dict(cfg.get("vlm") or cfg.get("remote") or {}))
    return ToolProviders(image_provider=image_provider, vlm=vlm)


def _backend_factory(cfg: dict, args):
    """Returns ``make(question_id) -> backend``."""
    if args.backend == "remote":
        remote = RemoteBackend(RemoteConfig.from_dict(cfg.get("remote") or {}))
        return lambda qid: remote
    script_path = args.script or cfg.get("script")
    if not script_path:
        raise UsageError("scripted backend needs --script")
    script = load_script(script_path)
    return lambda qid: ScriptedBackend.from_script(script, qid)


def _parse_kv(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise UsageError(f"tool arguments must be key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


# ---- commands ----


def cmd_build_graph(args, cfg) -> int:
    det = _require_file(args.detections or cfg.get("detections"), "detections")
    cal = _require_file(args.calibration or cfg.get("calibration"), "calibration")
    lanes_path = args.lanes or cfg.get("lanes")
    calibration = parse_calibration(cal)
    lanes = parse_lanes(_require_file(lanes_path, "lanes"), calibration) if lanes_path else []
    graph = build_scene_graph(parse_detections(det), lanes, calibration, _ingest_config(cfg))
    if not args.out:
        raise UsageError("build-graph needs --out for the graph snapshot")
    save_snapshot(graph, args.out)
    if args.export_cypher:
        export_statements(graph, args.export_cypher)
    counts = graph.edge_counts()
    print(f"video={graph.video_id} frames={len(graph.frames)} instances={len(graph.instances)} "
          f"lanes={len(graph.lanes)} observations={len(graph.observations)}")
    print("edges " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_export_cypher(args, cfg) -> int:
    graph = load_snapshot(_require_file(args.graph, "graph"))
    if args.out:
        export_statements(graph, args.out)
    else:
        sys.stdout.write(export_statements(graph))
    return EXIT_OK


def cmd_query(args, cfg) -> int:
    graph = load_snapshot(_require_file(args.graph, "graph"))
    providers = _providers(cfg, args, graph) if (args.frames or args.vlm_script) else None
    result = registry_dispatch(graph, providers, ToolCall(args.tool, _parse_kv(args.args)))
    print(result.message)
    if result.status == "error":
        return EXIT_USAGE if result.tool_name not in TOOLS else EXIT_DATA
    return EXIT_OK


def _ask_once(graph, question, backend, config, providers, out_path):
    traj = run_agent(graph, question, backend, config, providers)
    if out_path:
        Path(out_path).write_text(render_trajectory(traj, "structured"), encoding="utf-8")
    print(traj.final_answer)
    if traj.termination == "backend_failure":
        for f in traj.failures:
            print(f"error: step {f['step']}: {f['kind']}: {f['detail']}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_ask(args, cfg) -> int:
    graph = load_snapshot(_require_file(args.graph, "graph"))
    make_backend = _backend_factory(cfg, args)
    config = _agent_config(cfg, args)
    providers = _providers(cfg, args, graph)
    out = args.out or "trajectory.jsonl"
    if not args.interactive:
        if not args.question:
            raise UsageError("ask needs a question (or --interactive)")
        return _ask_once(graph, args.question, make_backend(args.question_id), config, providers, out)
    status, n = EXIT_OK, 0
    for line in sys.stdin:
        question = line.strip()
        if not question:
            continue
        if question in ("quit", "exit"):
            break
        n += 1
        path = Path(out)
        path = path.with_name(f"{path.stem}_{n}{path.suffix}")
        status = max(status, _ask_once(graph, question, make_backend(None), config, providers, path))
    return status


def cmd_eval(args, cfg) -> int:
    out_dir = Path(args.out or "eval_out")
    if args.results:
        qa, preds = load_results(_require_file(args.results, "results"))
        table, _ = evaluate(qa, preds)
        sys.stdout.write(table.render())
        return EXIT_OK
    graph = load_snapshot(_require_file(args.graph, "graph"))
    qa = parse_qa_set(_require_file(args.qa or cfg.get("qa"), "QA"))
    make_backend = _backend_factory(cfg, args)
    config = _agent_config(cfg, args)
    providers = _providers(cfg, args, graph)
    traj_dir = out_dir / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)

    def run_one(q):
        try:
            backend = make_backend(q.question_id)
            traj = run_agent(graph, format_question(q), backend, config, providers, q.question_id)
        except TrafficSGError as exc:
            log.warning("question %s failed: %s", q.question_id, exc)
            return q.question_id, None, "backend_failure"
        (traj_dir / f"{q.question_id}.jsonl").write_text(render_trajectory(traj, "structured"),
                                                         encoding="utf-8")
        answer = traj.final_answer if traj.termination != "backend_failure" else None
        return q.question_id, answer, traj.termination

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            outcomes = list(pool.map(run_one, qa))
    else:
        outcomes = [run_one(q) for q in qa]
    preds = {qid: ans for qid, ans, _ in outcomes if ans is not None}
    terms = {qid: term for qid, _, term in outcomes}
    table, records = evaluate(qa, preds, terms)
    write_results(records, out_dir / "results.jsonl")
    rendered = table.render()
    (out_dir / "table.txt").write_text(rendered, encoding="utf-8")
    sys.stdout.write(rendered)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trafficsg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out")
    common.add_argument("--seed", type=int, help="reserved; runs are deterministic")

    agentic = _Parser(add_help=False)
    agentic.add_argument("--graph")
    agentic.add_argument("--backend", choices=["scripted", "remote"], default="scripted")
    agentic.add_argument("--script", help="scripted backend replies (JSON)")
    agentic.add_argument("--vlm-script", help="scripted visual answers (JSON list)")
    agentic.add_argument("--frames", help="frame image manifest (JSONL)")
    agentic.add_argument("--max-steps", type=int)

    b = sub.add_parser("build-graph", parents=[common], help="build a scene graph snapshot")
    b.add_argument("--detections")
    b.add_argument("--calibration")
    b.add_argument("--lanes")
    b.add_argument("--export-cypher", metavar="PATH")
    b.set_defaults(func=cmd_build_graph)

    e = sub.add_parser("export-cypher", parents=[common], help="write graph creation statements")
    e.add_argument("--graph")
    e.set_defaults(func=cmd_export_cypher)

    q = sub.add_parser("query", parents=[common], help="run one tool")
    q.add_argument("--graph")
    q.add_argument("--frames")
    q.add_argument("--vlm-script")
    q.add_argument("--backend", default="scripted", choices=["scripted"])
    q.add_argument("tool")
    q.add_argument("args", nargs="*", metavar="key=value")
    q.set_defaults(func=cmd_query)

    a = sub.add_parser("ask", parents=[common, agentic], help="answer a question with the agent")
    a.add_argument("question", nargs="?")
    a.add_argument("--question-id")
    a.add_argument("--interactive", action="store_true")
    a.set_defaults(func=cmd_ask)

    v = sub.add_parser("eval", parents=[common, agentic], help="run and score a QA set")
    v.add_argument("--qa")
    v.add_argument("--results", help="re-score a saved results file instead of running the agent")
    v.add_argument("--jobs", type=int, default=1)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (TrafficSGError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
