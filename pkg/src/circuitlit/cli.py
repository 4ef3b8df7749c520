"""Command-line interface.

Subcommands: ingest | search | ask | netlist | eval | serve, plus the
tool-name aliases search_db (with --load_data) and paper_fetcher. All
commands share the same config sources: flags > env (CIRCUITLIT_*) > config
file > defaults.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

from .agent import SessionLimits, run_session
from .config import ServiceConfig, load_config
from .errors import CircuitLitError
from .evalharness import AgentTarget, RagTarget, run_eval
from .netlist import NetlistConfig, generate
from .providers import FetchRequest
from .service import build_state, create_app, save_transcript
from .tools import parse_fetch_ref, tool_load_data, tool_paper_fetcher, tool_search_db


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (key=value lines)")
    parser.add_argument("--db", dest="db_path", help="index file path")
    parser.add_argument("--sessions-dir", dest="sessions_dir")
    parser.add_argument("--cache", dest="cache_path")
    parser.add_argument("--fetch-dir", dest="fetch_dir")
    parser.add_argument("--fixture-dir", dest="fixture_dir")
    parser.add_argument("--w-sem", dest="w_sem", type=float, help="semantic fusion weight")
    parser.add_argument("--w-kw", dest="w_kw", type=float, help="keyword fusion weight")
    parser.add_argument("--max-steps", dest="max_steps", type=int)
    parser.add_argument(
        "--scripted",
        dest="chat_script",
        help="JSONL of scripted model outputs; implies chat_mode=scripted",
    )
    parser.add_argument(
        "--fallback-all",
        action="store_true",
        help="force all providers into offline fallback mode (no secrets)",
    )


def _config_from_args(args: argparse.Namespace) -> ServiceConfig:
    flags = {
        key: getattr(args, key, None)
        for key in (
            "db_path",
            "sessions_dir",
            "cache_path",
            "fetch_dir",
            "fixture_dir",
            "w_sem",
            "w_kw",
            "max_steps",
            "chat_script",
        )
    }
    if getattr(args, "chat_script", None):
        flags["chat_mode"] = "scripted"
    if getattr(args, "fallback_all", False):
        flags.update(chat_mode="fallback", embed_mode="fallback", rerank_mode="fallback", fetch_mode="fixture")
        flags.pop("chat_script", None)
    return load_config(getattr(args, "config", None), flags=flags)


def _print_hits(hits) -> None:
    if not hits:
        print("no results")
        return
    for hit in hits:
        title = hit.metadata.get("title", "")
        marker = f" path={hit.metadata.get('image_path')}" if hit.modality == "image" else ""
        print(f"{hit.rank:>3}  {hit.score:.6f}  {hit.modality:<5} {hit.record_id}  {title}{marker}")
        print(f"     {hit.snippet}")


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    state = build_state(cfg)
    for manifest in args.manifests:
        result = tool_load_data(manifest, state.pipeline)
        print(result.text)
        if result.text.startswith("load failed"):
            return 1
    state.index.save(cfg.db_path)
    print(f"index saved to {cfg.db_path} ({len(state.index)} records)")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    state = build_state(cfg)
    _print_hits(state.engine.search(args.query, k=args.k))
    return 0


def cmd_search_db(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    state = build_state(cfg)
    if args.load_data:
        result = tool_load_data(args.load_data, state.pipeline)
        print(result.text)
        if result.text.startswith("load failed"):
            return 1
        state.index.save(cfg.db_path)
        return 0
    if not args.query:
        print("search_db: provide a query or --load_data <manifest>", file=sys.stderr)
        return 2
    print(tool_search_db(args.query, args.k, state.engine).text)
    return 0


def cmd_ask(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    state = build_state(cfg)

    def on_event(kind: str, item) -> None:
        if kind != "step":
            return
        print(f"Thought: {item.thought}")
        if item.action:
            print(f"Action: {item.action.tool_name}")
            print(f"Action Input: {item.action.tool_input}")
            print(f"Observation: {item.observation}")
        print()

    transcript = run_session(
        args.question,
        state.registry,
        state.chat,
        SessionLimits(max_steps=cfg.max_steps, max_tool_output_chars=cfg.max_tool_output_chars),
        on_event=on_event,
    )
    path = save_transcript(state.sessions_dir, transcript)
    print(f"Final Answer: {transcript.final_answer}")
    if transcript.citations:
        print("Citations:")
        for c in transcript.citations:
            extra = f" image={c.image_path}" if c.image_path else ""
            print(f"  - {c.record_id} ({c.modality}){extra}")
    print(f"[session {transcript.session_id} -> {path}; terminated_by={transcript.terminated_by}]")
    return 0 if transcript.terminated_by == "answer" else 1


def cmd_netlist(args: argparse.Namespace) -> int:
    try:
        netlist = generate(args.image, args.detections, NetlistConfig(threshold=args.threshold))
    except CircuitLitError as exc:
        print(f"netlist failed: {exc}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(netlist.text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(netlist.text, end="")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    state = build_state(cfg)
    if args.mode == "rag":
        target = RagTarget(engine=state.engine, chat=state.chat, budget_tokens=cfg.budget_tokens)
    else:
        target = AgentTarget(
            registry=state.registry,
            chat=state.chat,
            limits=SessionLimits(max_steps=cfg.max_steps),
        )
    report = run_eval(args.dataset, target)
    for name, m in report.per_class.items():
        print(
            f"{name:<9} precision={m.precision:.3f} recall={m.recall:.3f} "
            f"f1={m.f1:.3f} n={m.count}"
        )
    print(f"evaluated={report.items_evaluated} skipped={report.items_skipped}")
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")
        print(f"report written to {args.report}")
    return 0


def cmd_paper_fetcher(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    state = build_state(cfg)
    from .service import make_fetcher

    fetcher = make_fetcher(cfg)
    if fetcher is None:
        print("no fetch provider: set --fixture-dir or fetch_mode=remote", file=sys.stderr)
        return 2
    req: FetchRequest = parse_fetch_ref(args.ref, Path(cfg.fetch_dir))
    result = tool_paper_fetcher(req, fetcher)
    print(f"fetched {result.source_uri} -> {result.doc_path} ({result.bytes} bytes)")
    if not result.needs_extraction:
        print(f"ready to ingest: circuitlit ingest {result.doc_path}")
        return 0
    manifest_path = result.doc_path.with_suffix(".manifest.json")
    if args.extractor_cmd:
        cmd = [*args.extractor_cmd.split(), str(result.doc_path), str(manifest_path)]
        proc = subprocess.run(cmd)
        if proc.returncode != 0:
            print(f"extractor failed with exit code {proc.returncode}", file=sys.stderr)
            return 1
        print(f"extracted manifest: {manifest_path}")
        result2 = tool_load_data(manifest_path, state.pipeline)
        print(result2.text)
        state.index.save(cfg.db_path)
    else:
        print(f"needs extraction; expected manifest path: {manifest_path}")
        print("provide --extractor-cmd to convert automatically")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    cfg = _config_from_args(args)
    if args.bind:
        cfg.bind_addr = args.bind
    host, _, port = cfg.bind_addr.partition(":")
    app = create_app(cfg)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8777))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circuitlit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest bundle manifests and save the index")
    p.add_argument("manifests", nargs="+")
    _add_shared(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("search", help="hybrid search against the index")
    p.add_argument("-q", "--query", required=True)
    p.add_argument("-k", type=int, default=5)
    _add_shared(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("search_db", help="tool-parity search (supports --load_data)")
    p.add_argument("query", nargs="?")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--load_data", help="ingest a bundle manifest instead of searching")
    _add_shared(p)
    p.set_defaults(fn=cmd_search_db)

    p = sub.add_parser("ask", help="run a reasoning session, streaming steps")
    p.add_argument("question")
    _add_shared(p)
    p.set_defaults(fn=cmd_ask)

    p = sub.add_parser("netlist", help="schematic image + detections -> SPICE netlist")
    p.add_argument("--image", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out")
    p.add_argument("--threshold", type=int, default=128)
    p.set_defaults(fn=cmd_netlist)

    p = sub.add_parser("eval", help="run a QA dataset and report metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=("rag", "agent"), default="rag")
    p.add_argument("--report")
    _add_shared(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("paper_fetcher", help="fetch a document (tool parity)")
    p.add_argument("ref")
    p.add_argument("--extractor-cmd", help="command run as '<cmd> <doc> <manifest-out>'")
    _add_shared(p)
    p.set_defaults(fn=cmd_paper_fetcher)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", help="host:port")
    _add_shared(p)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
