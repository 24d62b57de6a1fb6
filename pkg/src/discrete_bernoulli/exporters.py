"""Plain-text outputs: CSV tables and layered SVG overlays.

Every number goes through a fixed format so reruns are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .geometry import Polygon, Polyline


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


def export_csv(columns: Sequence[str], rows: Iterable[Sequence], path) -> Path:
    """Header line plus one comma-separated line per row; floats with 17 significant digits."""
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
        lines.append(",".join(_fmt(v) for v in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def polylines_csv(curves: Sequence[Polyline | Polygon], path) -> Path:
    """Several curves in one ``x,y,ring_id`` file; ring ids run on across curves."""
    rows = []
    ring = 0
    for c in curves:
        line = Polyline.from_polygon(c) if isinstance(c, Polygon) else c
        for pts in line.rings:
            rows.extend((x, y, ring) for x, y in pts)
            ring += 1
    return export_csv(("x", "y", "ring_id"), rows, path)


STYLE = {
    "inner": "stroke:#1f4e9c;stroke-width:2;fill:#1f4e9c;fill-opacity:0.15",
    "level": "stroke:#d97a00;stroke-width:1.5;fill:none;stroke-dasharray:6 3",
    "free-boundary": "stroke:#b2182b;stroke-width:2;fill:none",
    "outer": "stroke:#333333;stroke-width:2;fill:none",
    "reference": "stroke:#4d9221;stroke-width:1;fill:none;stroke-dasharray:2 2",
}

LEGEND = {
    "inner": "inner body",
    "level": "level curve",
    "free-boundary": "free boundary",
    "outer": "fixed outer body",
    "reference": "reference",
}


@dataclass(frozen=True)
class Layer:
    css_class: str
    shape: Polyline | Polygon
    label: str | None = None


def export_svg(layers: Sequence[Layer], path, bbox, size: int = 600) -> Path:
    """Layered polylines on a fixed viewBox mapped from ``bbox`` (xmin, xmax, ymin, ymax), y up."""
    x0, x1, y0, y1 = (float(b) for b in bbox)
    scale = size / max(x1 - x0, y1 - y0)
    width, height = (x1 - x0) * scale, (y1 - y0) * scale
    legend_h = 22 * len({l.css_class for l in layers}) + 10

    def xy(p):
        return f"{(p[0] - x0) * scale:.3f},{(y1 - p[1]) * scale:.3f}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.3f} {height + legend_h:.3f}" '
        f'width="{width:.0f}" height="{height + legend_h:.0f}">',
        "<style>",
    ]
    out += [f"  .{k} {{ {v} }}" for k, v in STYLE.items()]
    out += ["  text { font-family: sans-serif; font-size: 13px; }", "</style>"]
    out.append(f'<rect x="0" y="0" width="{width:.3f}" height="{height:.3f}" fill="white" stroke="#999"/>')
    seen: dict[str, str] = {}
    for layer in layers:
        line = Polyline.from_polygon(layer.shape) if isinstance(layer.shape, Polygon) else layer.shape
        out.append(f'<g class="{layer.css_class}">')
        for pts, closed in zip(line.rings, line.closed):
            tag = "polygon" if closed else "polyline"
            out.append(f'  <{tag} class="{layer.css_class}" points="{" ".join(xy(p) for p in pts)}"/>')
        out.append("</g>")
        seen.setdefault(layer.css_class, layer.label or LEGEND.get(layer.css_class, layer.css_class))
    out.append(f'<g class="legend" transform="translate(10,{height + 8:.3f})">')
    for k, (cls, label) in enumerate(seen.items()):
        y = 22 * k + 8
        out.append(f'  <line class="{cls}" x1="0" y1="{y}" x2="30" y2="{y}"/>')
        out.append(f'  <text x="38" y="{y + 4}">{escape(label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
