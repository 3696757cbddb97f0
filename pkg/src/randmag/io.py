"""CSV tables, JSON sidecars, run manifests and eigenvector dumps.

Floats are written with ``repr`` so that a table read back reproduces the
computed doubles exactly; timestamps live only in manifests so that table
files are byte-identical across reruns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

ENV_OUTPUT_DIR = "RANDMAG_OUTPUT_DIR"


def default_output_dir() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_DIR, "randmag_out"))


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    return path


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def output_name(experiment: str, L_list: Sequence[int], seed: int, suffix: str = ".csv") -> str:
    return f"{experiment}_L{'-'.join(str(int(L)) for L in L_list)}_seed{int(seed)}{suffix}"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    """SHA-256 of the key-sorted JSON encoding; insensitive to key order."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_sidecar(csv_path: str | os.PathLike, config: dict, seed: int, **extra) -> Path:
    path = Path(csv_path).with_suffix(".json")
    payload = {"config": config, "master_seed": int(seed), "version": __version__, **extra}
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    master_seed: int
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    suites: dict[str, str] = field(default_factory=dict)
    status: str = "running"

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def finish(self, status: str = "ok") -> None:
        self.finished = _now()
        self.status = status

    def write(self, directory: str | os.PathLike) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"manifest_{self.command}_seed{int(self.master_seed)}.json"
        d = asdict(self)
        d["config_hash"] = self.config_hash
        d["version"] = __version__
        path.write_text(json.dumps(d, sort_keys=True, indent=1) + "\n")
        return path


def write_eigenvectors(path: str | os.PathLike, V: np.ndarray) -> Path:
    """Raw little-endian complex128, one row per site, one column per eigenvector."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(V, dtype="<c16").tofile(path)
    return path


def read_eigenvectors(path: str | os.PathLike, n_sites: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<c16")
    return data.reshape(n_sites, -1)
