"""Bundled data assets: prompt templates, stopwords, the MATPOWER
convention catalog, a sample manual corpus, and the benchmark suite."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path


def asset_path(name: str) -> Path:
    """Filesystem path of a bundled asset (package installed normally)."""
    return Path(str(resources.files(__package__) / name))


def read_text(name: str) -> str:
    return (resources.files(__package__) / name).read_text(encoding="utf-8")


def read_json(name: str):
    return json.loads(read_text(name))


def stopwords() -> frozenset[str]:
    return frozenset(
        line.strip() for line in read_text("stopwords.txt").splitlines() if line.strip()
    )
