"""Run manifest: what was run, with which inputs, and where the outputs went."""
from __future__ import annotations

import datetime as dt
import json
import os
import platform
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np
import pandas as pd
import scipy


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def module_versions() -> dict:
    return {
        "artifact": _version("artifact"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    versions: dict = field(default_factory=module_versions)
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def finish(self, outputs) -> "RunManifest":
        self.outputs = sorted(os.path.abspath(p) for p in outputs)
        self.finished = _now()
        return self

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path
