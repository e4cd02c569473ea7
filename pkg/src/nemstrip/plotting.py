"""Deterministic SVG figures.

The figure is rendered through matplotlib's SVG canvas with a fixed hash salt
and no date stamp, so equal inputs give byte-identical documents. Fit
parameters shown as overlays are embedded as JSON in the document
description.
"""

from __future__ import annotations

import io
import json
import math
import xml.etree.ElementTree as ET
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("svg", force=False)
from matplotlib import rc_context  # noqa: E402
from matplotlib.backends.backend_svg import FigureCanvasSVG  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .errors import ContractViolation  # noqa: E402

HASH_SALT = "nemstrip"
KINDS = {
    "energy": ("t", "energy", True),
    "regime": ("t", "energy", True),
    "order": ("eps", "sup H", True),
    "profile": ("eta", "value", False),
    "series": ("t", "value", False),
}
_RC = {"svg.hashsalt": HASH_SALT, "svg.fonttype": "none", "path.simplify": False}


def _normalise(series) -> dict[str, list[tuple[float, float]]]:
    if isinstance(series, Mapping):
        items = {str(k): list(v) for k, v in series.items()}
    else:
        items = {"series": list(series)}
    if not items or all(len(v) == 0 for v in items.values()):
        raise ContractViolation("cannot plot an empty series")
    out = {}
    for name, pts in items.items():
        clean = []
        for i, p in enumerate(pts):
            if len(p) != 2:
                raise ContractViolation(f"sample {i} of {name!r} is not an (x, y) pair")
            clean.append((float(p[0]), float(p[1])))
        out[name] = clean
    return out


def emit_plot(
    series,
    kind: str = "series",
    *,
    log_y: bool | None = None,
    log_x: bool = False,
    envelope=None,
    fit: dict | None = None,
    title: str | None = None,
) -> str:
    """Render ``series`` (``[(x, y), ...]`` or ``{name: [(x, y), ...]}``) as SVG text.

    ``envelope`` is an object with ``mode``, ``params`` and ``curve(x)``; it is
    drawn as a dashed overlay and its parameters are embedded as metadata,
    together with ``fit``.
    """
    if kind not in KINDS:
        raise ContractViolation(f"unknown plot kind {kind!r}")
    data = _normalise(series)
    xlabel, ylabel, default_log = KINDS[kind]
    log_y = default_log if log_y is None else log_y
    for name, pts in data.items():
        for i, (x, y) in enumerate(pts):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ContractViolation(f"sample {i} of {name!r} is not finite: ({x}, {y})")
            if log_y and y <= 0:
                raise ContractViolation(f"log-scale plot: sample {i} of {name!r} has nonpositive value {y!r}")
            if log_x and x <= 0:
                raise ContractViolation(f"log-scale plot: sample {i} of {name!r} has nonpositive abscissa {x!r}")

    meta = {}
    if envelope is not None:
        meta["envelope"] = {"mode": envelope.mode, "f0": envelope.f0, "params": envelope.params}
    if fit is not None:
        meta["fit"] = fit

    with rc_context(_RC):
        fig = Figure(figsize=(6.0, 4.0))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot(1, 1, 1)
        for name, pts in data.items():
            xs, ys = zip(*pts) if pts else ((), ())
            ax.plot(xs, ys, marker="o" if len(pts) <= 12 else None, ms=3, lw=1.2, label=name)
        if envelope is not None:
            xs = sorted({x for pts in data.values() for x, _ in pts})
            ys = list(envelope.curve([x - xs[0] for x in xs]))
            ax.plot(xs, ys, ls="--", color="k", lw=1.0, label=f"{envelope.mode} envelope")
        if log_y:
            ax.set_yscale("log")
        if log_x:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(data) > 1 or envelope is not None:
            ax.legend(fontsize="small")
        fig.tight_layout()
        buf = io.StringIO()
        md = {"Date": None, "Creator": "nemstrip"}
        if meta:
            md["Description"] = json.dumps(meta, sort_keys=True)
        fig.savefig(buf, format="svg", metadata=md)
    return buf.getvalue()


def write_plot(path, svg: str) -> None:
    from .io import atomic_write

    atomic_write(path, svg)


def embedded_metadata(svg: str) -> dict:
    """Parse back the JSON description written by :func:`emit_plot` ({} if absent)."""
    root = ET.fromstring(svg)
    for el in root.iter():
        if el.tag.endswith("}description") or el.tag == "description":
            if el.text:
                return json.loads(el.text)
    return {}


def series_from_rows(header: Sequence[str], rows, x: str, ys: Sequence[str]) -> dict:
    ix = list(header).index(x)
    out = {}
    for name in ys:
        iy = list(header).index(name)
        out[name] = [(r[ix], r[iy]) for r in rows]
    return out
