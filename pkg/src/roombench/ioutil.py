"""Serialization helpers shared by every file-emitting module."""

from __future__ import annotations

import json
import os
from pathlib import Path


def canonical_dumps(obj) -> str:
    """Deterministic JSON: sorted keys, 2-space indent, trailing newline.

    Identical inputs produce byte-identical text, which the rerun checks
    rely on.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_canonical_json(path: str | Path, obj) -> None:
    Path(path).write_text(canonical_dumps(obj), encoding="utf-8")


def load_json(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
