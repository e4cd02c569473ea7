"""Output files: round-trip CSV series, JSON documents, the run manifest and
field snapshots. Every file is written through a temporary sibling and an
atomic rename."""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, serialize
from .grid import read_snapshot, write_snapshot

MANIFEST = "manifest.json"


def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode, **({} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": ""})) as fh:
        fh.write(data)
    os.replace(tmp, path)


def format_value(v) -> str:
    """Shortest round-trip text for floats; plain text for everything else."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row has {len(r)} entries, header has {len(header)}")
        w.writerow([format_value(x) for x in r])
    return buf.getvalue()


def write_csv(path: str | Path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


def read_csv(path: str | Path):
    """Return ``(header, rows)`` with numeric cells parsed back to float."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for line in r:
            row = []
            for cell in line:
                if cell in ("true", "false"):
                    row.append(cell == "true")
                    continue
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
            rows.append(tuple(row))
    return header, rows


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _clean(o):
    """Map non-finite floats to strings so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path: str | Path, obj) -> None:
    atomic_write(path, json_text(obj))


class Manifest:
    """The single manifest of an output directory; rewritten whole on every update."""

    def __init__(self, out_dir: str | Path, cfg: RunConfig):
        self.path = Path(out_dir) / MANIFEST
        self.doc = {
            "completed": False,
            "code_version": __version__,
            "config": asdict(cfg),
            "config_text": serialize(cfg),
            "seed": cfg.seed,
            "start_time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "end_time": None,
            "hypothesis_flags": {},
            "artifacts": [],
            "error": None,
            "exit_code": None,
        }
        self.write()

    def write(self) -> None:
        write_json(self.path, self.doc)

    def add_artifact(self, name: str) -> None:
        if name not in self.doc["artifacts"]:
            self.doc["artifacts"].append(name)

    def finish(self, exit_code: int, error: str | None = None, completed: bool | None = None) -> None:
        self.doc["completed"] = (exit_code == 0) if completed is None else completed
        self.doc["exit_code"] = exit_code
        self.doc["error"] = error
        self.doc["end_time"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.write()


def read_manifest(out_dir: str | Path) -> dict:
    return json.loads((Path(out_dir) / MANIFEST).read_text(encoding="utf-8"))


def save_fields(out_dir: str | Path, tag: str, fields: dict, eps: float) -> list[str]:
    """One STRIPFLD file per field, named ``<tag>_<field>.bin``."""
    names = []
    for name, f in fields.items():
        fname = f"{tag}_{name}.bin"
        tmp = Path(out_dir) / f".{fname}.tmp"
        write_snapshot(tmp, f, eps)
        os.replace(tmp, Path(out_dir) / fname)
        names.append(fname)
    return names


def inspect_snapshot(path: str | Path) -> dict:
    f, hdr = read_snapshot(path)
    return {
        "path": str(path),
        **hdr,
        "min": float(f.min()),
        "max": float(f.max()),
        "mean": float(f.mean()),
        "rms": float(np.sqrt(np.mean(f * f))),
        "finite": bool(np.all(np.isfinite(f))),
    }
