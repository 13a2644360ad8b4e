"""gridscribe: natural-language requests to executed MATPOWER scripts.

Submodules are imported lazily so short-lived worker processes only pay
for what they use (the vector stack in particular).
"""

__version__ = "0.1.0"

_LAZY = {
    "corpus": ".corpus",
    "embedding": ".embedding",
    "vectorstore": ".vectorstore",
    "retrieval": ".retrieval",
    "llm": ".llm",
    "prompts": ".prompts",
    "precheck": ".precheck",
    "executor": ".executor",
    "validator": ".validator",
    "agent": ".agent",
    "bench": ".bench",
    "scripted": ".scripted",
    "mcp": ".mcp",
    "gateway": ".gateway",
    "config": ".config",
    "errors": ".errors",
}


def __getattr__(name):
    if name in _LAZY:
        import importlib

        module = importlib.import_module(_LAZY[name], __package__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
