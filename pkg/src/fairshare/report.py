"""Rendering an :class:`AllocationReport` to disk.

``report.json`` holds everything; ``payoffs.csv`` has one row per player
(label, contribution, stability bound, payoff); ``bounds.svg`` draws payoff
bars with a tick at each player's bound.  Output is a pure function of the
report, so identical reports give identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable
from xml.sax.saxutils import escape

from .errors import BadConfig, IoError
from .pipeline import AllocationReport
from .serialize import dumps, format_float

FORMATS = ("json", "csv", "svg")
FILENAMES = {"json": "report.json", "csv": "payoffs.csv", "svg": "bounds.svg"}

# svg layout (user units)
_W_SLOT, _MARGIN, _PLOT_H, _TOP = 60, 50, 240, 30


def render_json(report: AllocationReport) -> str:
    return dumps(report.to_dict())


def _csv_num(x: float) -> str:
    s = format_float(float(x))
    return s[:-2] if s.endswith(".0") else s


def render_csv(report: AllocationReport) -> str:
    lines = ["player,phi,bound,x"]
    for lab, p, b, x in zip(report.labels, report.phi, report.bounds, report.payoffs):
        name = f'"{lab}"' if any(c in lab for c in ',"\n') else lab
        lines.append(",".join([name, _csv_num(p), _csv_num(b), _csv_num(x)]))
    return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(report: AllocationReport) -> str:
    n = report.n
    width = 2 * _MARGIN + _W_SLOT * n
    height = _TOP + _PLOT_H + 40
    top = max(report.grand_value, float(report.bounds.max(initial=0.0)), float(report.payoffs.max(initial=0.0)))
    scale = _PLOT_H / top if top > 0 else 0.0
    base_y = _TOP + _PLOT_H
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}">',
        f'<title>{escape(report.status)}</title>',
        f'<line class="axis" x1="{_MARGIN}" y1="{base_y}" x2="{width - _MARGIN}" y2="{base_y}" stroke="black"/>',
    ]
    for i in range(n):
        x0 = _MARGIN + _W_SLOT * i
        h = float(report.payoffs[i]) * scale
        out.append(
            f'<rect class="bar" x="{x0 + 10}" y="{_fmt(base_y - h)}" width="{_W_SLOT - 20}" height="{_fmt(h)}" fill="steelblue"/>'
        )
        by = base_y - float(report.bounds[i]) * scale
        out.append(
            f'<line class="bound" x1="{x0 + 4}" y1="{_fmt(by)}" x2="{x0 + _W_SLOT - 4}" y2="{_fmt(by)}" stroke="crimson" stroke-width="3"/>'
        )
        out.append(
            f'<text x="{x0 + _W_SLOT // 2}" y="{base_y + 20}" text-anchor="middle" font-size="12">{escape(report.labels[i])}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


_RENDER = {"json": render_json, "csv": render_csv, "svg": render_svg}


def emit_report(report: AllocationReport, formats: Iterable[str], out_dir: str | Path) -> list[Path]:
    formats = list(dict.fromkeys(formats))
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise BadConfig(f"unknown report format(s) {bad}; choose from {FORMATS}")
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for fmt in FORMATS:
            if fmt in formats:
                path = out_dir / FILENAMES[fmt]
                path.write_text(_RENDER[fmt](report))
                written.append(path)
    except OSError as err:
        raise IoError(f"cannot write report to {out_dir}: {err}") from err
    return written


def load_report(path: str | Path) -> AllocationReport:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as err:
        raise IoError(f"cannot read report {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise BadConfig(f"{path}: invalid JSON: {err}") from err
    return AllocationReport.from_dict(doc)
