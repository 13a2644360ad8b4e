"""Command-line entry points.

Subcommands: run (one agent session), bench (configuration matrix),
index (build/persist vector indexes), mcp (stdio tool server), serve-ui
(HTTP/SSE gateway), backends (probe execution backends). Heavy modules
are imported inside each handler to keep worker startup fast.
"""

from __future__ import annotations

import argparse
import json
import sys

RAG_CHOICES = ("none", "ocr", "pdf", "enhanced")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridscribe")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one agent session")
    run.add_argument("--request", required=True, help="natural-language analysis request")
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--rag-mode", choices=RAG_CHOICES, default=None)
    run.add_argument("--backend", choices=("mock", "octave"), default=None)
    run.add_argument("--events", action="store_true",
                     help="stream events as JSON lines to stderr")
    run.add_argument("--emit-result-packet", action="store_true",
                     help="append the sentinel-framed result packet to stdout")
    run.add_argument("--feedback", action=argparse.BooleanOptionalAction, default=None)
    run.add_argument("--planner", action=argparse.BooleanOptionalAction, default=None)
    run.add_argument("--validator", action=argparse.BooleanOptionalAction, default=None)
    run.add_argument("--n-threshold", type=int, default=None)

    bench = sub.add_parser("bench", help="run the benchmark matrix")
    bench.add_argument("--tasks", default=None, help="JSON-lines task file (default: bundled)")
    bench.add_argument("--matrix", default=None, help="configuration matrix (default: bundled)")
    bench.add_argument("--out", default="bench-out", help="report output directory")
    bench.add_argument("--scenario", default=None,
                       help="scripted outcomes file for offline runs (default: bundled)")
    bench.add_argument("--live", action="store_true",
                       help="use config-built deps instead of the scripted mocks")
    bench.add_argument("--config", default=None)

    index = sub.add_parser("index", help="build and persist vector indexes from a corpus manifest")
    index.add_argument("--manifest", default=None, help="corpus manifest (default: bundled)")
    index.add_argument("--out", required=True, help="output directory")
    index.add_argument("--dim", type=int, default=256)

    mcp = sub.add_parser("mcp", help="serve the MCP tool over stdio")
    mcp.add_argument("--config", default=None)

    serve = sub.add_parser("serve-ui", help="serve the HTTP/SSE gateway for the web UI")
    serve.add_argument("--config", default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8799)

    backends = sub.add_parser("backends", help="list available execution backends")
    backends.add_argument("--config", default=None)
    return parser


def _cmd_run(args) -> int:
    from .config import build_agent_setup, load_config

    cfg = load_config(args.config)
    agent_config, deps = build_agent_setup(
        cfg,
        rag_mode=args.rag_mode,
        backend=args.backend,
        feedback=args.feedback,
        planner=args.planner,
        validator=args.validator,
        n_threshold=args.n_threshold,
    )

    on_event = None
    if args.events:
        def on_event(event):
            print(json.dumps(event.to_dict(), sort_keys=True), file=sys.stderr, flush=True)

    from .agent import run_agent

    result = run_agent(args.request, agent_config, deps, on_event=on_event)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    if args.emit_result_packet:
        from .mcp import SENTINEL, result_packet

        print(SENTINEL + result_packet(result).to_json_line(), flush=True)
    return 0 if result.status == "success" else 1


def _cmd_bench(args) -> int:
    from . import assets
    from .bench import format_table, load_matrix, load_tasks, run_benchmark
    from .retrieval import RetrievalMode

    tasks = load_tasks(args.tasks or assets.asset_path("tasks.jsonl"))
    matrix = load_matrix(args.matrix or assets.asset_path("matrix_ablation.json"))

    if args.live:
        from .config import build_executor, build_llm, build_stores, load_config

        cfg = load_config(args.config)
        stores_cache: dict = {}

        def deps_factory(entry, task):
            from .agent import AgentDeps

            mode = entry.agent_config.rag_mode
            if mode not in stores_cache:
                stores_cache[mode] = build_stores(cfg, mode)
            return AgentDeps(
                llm=build_llm(cfg),
                executor=build_executor(cfg, None),
                stores=stores_cache[mode],
            )
    else:
        from .scripted import ScriptedDepsFactory, build_sample_stores, load_scenario

        scenario = load_scenario(args.scenario or assets.asset_path("bench_scenario.json"))
        needs_stores = any(
            e.agent_config.rag_mode != RetrievalMode.NONE for e in matrix
        )
        stores = build_sample_stores() if needs_stores else None
        deps_factory = ScriptedDepsFactory(scenario, stores=stores)

    summaries = run_benchmark(tasks, matrix, deps_factory, out_dir=args.out)
    print(format_table(summaries), end="")
    print(f"reports written to {args.out}")
    return 0


def _cmd_index(args) -> int:
    from pathlib import Path

    from . import assets
    from .corpus import (
        OCR_MARKDOWN,
        RAW_TEXT,
        build_section_index,
        chunk_sliding,
        load_manifest,
        load_source,
        merge_enhanced,
    )
    from .embedding import HashingEmbedder
    from .vectorstore import build_index, persist_index

    manifest = load_manifest(args.manifest or assets.asset_path("corpus_manifest.json"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    embedder = HashingEmbedder(dim=args.dim)

    md = raw = None
    for path, kind in manifest.sources:
        doc = load_source(path, kind)
        if kind == OCR_MARKDOWN and md is None:
            md = doc
        elif kind == RAW_TEXT and raw is None:
            raw = doc

    if md is not None:
        sections = build_section_index(md)
        print(f"section index: {len(sections)} sections from {md.id}")
    if raw is not None:
        chunks = chunk_sliding(raw, manifest.window, manifest.stride)
        index = build_index(chunks, embedder)
        persist_index(index, out / "pdf.gsix")
        print(f"pdf index: {len(index)} chunks -> {out / 'pdf.gsix'}")
    if md is not None and raw is not None:
        chunks = chunk_sliding(merge_enhanced(md, raw), manifest.window, manifest.stride)
        index = build_index(chunks, embedder)
        persist_index(index, out / "enhanced.gsix")
        print(f"enhanced index: {len(index)} chunks -> {out / 'enhanced.gsix'}")
    return 0


def _cmd_mcp(args) -> int:
    from .config import load_config
    from .mcp import McpServer

    cfg = load_config(args.config)
    server = McpServer(config=cfg, config_path=args.config)
    server.serve_forever()
    return 0


def _cmd_serve_ui(args) -> int:
    import uvicorn

    from .config import load_config
    from .gateway import create_app

    cfg = load_config(args.config)
    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_backends(args) -> int:
    from .config import load_config
    from .executor import list_backends

    cfg = load_config(args.config)
    for descriptor in list_backends(cfg):
        detail = f" ({descriptor.detail})" if descriptor.detail else ""
        print(f"{descriptor.name}{detail}")
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "bench": _cmd_bench,
    "index": _cmd_index,
    "mcp": _cmd_mcp,
    "serve-ui": _cmd_serve_ui,
    "backends": _cmd_backends,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except BrokenPipeError:
        return 0
    except Exception as exc:
        print(f"gridscribe: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
