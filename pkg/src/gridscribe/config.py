"""Config file handling and dependency wiring for the CLI, MCP server and
UI gateway.

The config is a flat JSON object; relative paths resolve against the
config file's directory. Anything not set falls back to a default that
keeps the tool usable offline: mock LLM (bundled demo script), mock
executor (bundled demo scenario), bundled sample corpus for retrieval.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from . import assets
from .agent import AgentConfig, AgentDeps
from .errors import ConfigError
from .retrieval import RetrievalMode

DEFAULTS: dict = {
    "octave_bin": "octave-cli",
    "matpower_dir": None,
    "exec_timeout_ms": 120_000,
    "exec_pool": 2,
    "executor_backend": "mock",
    "mock_executor_scenario": None,
    "llm_backend": "mock",
    "llm_mock_script": None,
    "llm_base_url": None,
    "llm_model": None,
    "llm_api_key_env": "LLM_API_KEY",
    "rag_mode": "none",
    "corpus_manifest": None,
    "embedder": "hashing",
    "embedder_dim": 256,
    "embedder_base_url": None,
    "embedder_model": None,
    "k": 4,
    "context_budget": 6000,
    "n_threshold": 5,
    "feedback": True,
    "planner": True,
    "validator": True,
    "mcp_worker_limit": 4,
    "mcp_worker_budget_ms": 300_000,
}

_PATH_KEYS = ("mock_executor_scenario", "llm_mock_script", "corpus_manifest", "matpower_dir")


def load_config(path: str | Path | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        data = json.loads(p.read_text(encoding="utf-8"))
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in _PATH_KEYS:
            value = data.get(key)
            if isinstance(value, str) and value and not Path(value).is_absolute():
                data[key] = str(p.parent / value)
        cfg.update(data)
    return cfg


def build_llm(cfg: dict):
    kind = cfg.get("llm_backend", "mock")
    if kind == "mock":
        from .llm import MockChatBackend, load_mock_script

        script_path = cfg.get("llm_mock_script") or assets.asset_path("demo_llm_script.json")
        return MockChatBackend(load_mock_script(script_path))
    if kind == "http":
        from .llm import HttpChatBackend

        base = cfg.get("llm_base_url") or os.environ.get("LLM_BASE_URL")
        model = cfg.get("llm_model") or os.environ.get("LLM_MODEL")
        if not base or not model:
            raise ConfigError(
                "http llm backend needs llm_base_url/llm_model (or LLM_BASE_URL/LLM_MODEL)"
            )
        return HttpChatBackend(
            base_url=base, model=model, api_key_env=cfg.get("llm_api_key_env", "LLM_API_KEY")
        )
    raise ConfigError(f"unknown llm backend {kind!r}")


def build_executor(cfg: dict, backend_name: str | None = None):
    name = backend_name or cfg.get("executor_backend", "mock")
    if name == "mock":
        from .executor import MockExecutorBackend

        scenario = cfg.get("mock_executor_scenario") or assets.asset_path(
            "demo_exec_scenario.json"
        )
        return MockExecutorBackend.from_file(scenario)
    if name == "octave":
        from .executor import OctaveBackend

        return OctaveBackend(
            octave_bin=cfg.get("octave_bin", "octave-cli"),
            matpower_dir=cfg.get("matpower_dir"),
            pool=int(cfg.get("exec_pool", 2)),
        )
    raise ConfigError(f"unknown executor backend {name!r}")


def _build_embedder(cfg: dict):
    kind = cfg.get("embedder", "hashing")
    if kind == "hashing":
        from .embedding import HashingEmbedder

        return HashingEmbedder(dim=int(cfg.get("embedder_dim", 256)))
    if kind == "http":
        from .embedding import HttpEmbedder

        base = cfg.get("embedder_base_url")
        model = cfg.get("embedder_model")
        if not base or not model:
            raise ConfigError("http embedder needs embedder_base_url and embedder_model")
        return HttpEmbedder(
            base_url=base,
            model=model,
            dim=int(cfg.get("embedder_dim", 256)),
            api_key_env=cfg.get("llm_api_key_env", "LLM_API_KEY"),
        )
    raise ConfigError(f"unknown embedder {kind!r}")


def build_stores(cfg: dict, mode: RetrievalMode):
    """In-memory retrieval stores for the requested mode (None for mode none).

    The corpus is small (one manual), so indexes are rebuilt on the fly
    from the manifest rather than loaded from disk; persisted indexes are
    for the `gridscribe index` workflow and tests.
    """
    if mode == RetrievalMode.NONE:
        return None
    from .corpus import (
        OCR_MARKDOWN,
        RAW_TEXT,
        build_section_index,
        chunk_sliding,
        load_manifest,
        load_source,
        merge_enhanced,
    )
    from .retrieval import RetrievalStores
    from .vectorstore import build_index

    manifest_path = cfg.get("corpus_manifest") or assets.asset_path("corpus_manifest.json")
    manifest = load_manifest(manifest_path)
    md = raw = None
    for path, kind in manifest.sources:
        doc = load_source(path, kind)
        if kind == OCR_MARKDOWN and md is None:
            md = doc
        elif kind == RAW_TEXT and raw is None:
            raw = doc

    stores = RetrievalStores()
    if mode == RetrievalMode.OCR_KEYWORD:
        if md is None:
            raise ConfigError("ocr mode needs an ocr_markdown source in the manifest")
        stores.section_index = build_section_index(md)
        return stores

    stores.embedder = _build_embedder(cfg)
    if mode == RetrievalMode.PDF_VECTOR:
        if raw is None:
            raise ConfigError("pdf mode needs a raw_text source in the manifest")
        stores.pdf_index = build_index(
            chunk_sliding(raw, manifest.window, manifest.stride), stores.embedder
        )
        return stores
    if md is None or raw is None:
        raise ConfigError("enhanced mode needs both ocr_markdown and raw_text sources")
    stores.enhanced_index = build_index(
        chunk_sliding(merge_enhanced(md, raw), manifest.window, manifest.stride),
        stores.embedder,
    )
    return stores


def build_agent_setup(
    cfg: dict,
    *,
    rag_mode: str | None = None,
    backend: str | None = None,
    feedback: bool | None = None,
    planner: bool | None = None,
    validator: bool | None = None,
    n_threshold: int | None = None,
) -> tuple[AgentConfig, AgentDeps]:
    """Resolve one agent run's config + deps from file config and overrides."""
    mode = RetrievalMode.from_cli(rag_mode if rag_mode is not None else cfg["rag_mode"])
    agent_config = AgentConfig(
        rag_mode=mode,
        feedback_enabled=cfg["feedback"] if feedback is None else feedback,
        planner_enabled=cfg["planner"] if planner is None else planner,
        validator_enabled=cfg["validator"] if validator is None else validator,
        n_threshold=int(cfg["n_threshold"] if n_threshold is None else n_threshold),
        k=int(cfg["k"]),
        context_budget=int(cfg["context_budget"]),
        exec_timeout_ms=int(cfg["exec_timeout_ms"]),
    )
    deps = AgentDeps(
        llm=build_llm(cfg),
        executor=build_executor(cfg, backend),
        stores=build_stores(cfg, mode),
    )
    return agent_config, deps
