"""Heat-map rendering of per-chunk unreliability scores.

Colour scale: a score ``s`` in [0, 1] maps to HSV hue ``240 * (1 - s)``
degrees (blue for 0, through cyan, green and yellow, to red for 1) at fixed
saturation 0.85 and value 0.95. The scale is absolute, so reports from
different sessions are comparable.
"""

from __future__ import annotations

import colorsys
import html
from dataclasses import dataclass


@dataclass(frozen=True)
class ChunkScore:
    id: str
    score: float
    debug_count: int
    file: str | None = None
    first_line: int | None = None
    last_line: int | None = None
    class_label: str | None = None

    @property
    def line_range(self) -> str:
        if self.first_line is None:
            return ""
        return f"{self.first_line}-{self.last_line}"


def heat_hue(score: float) -> float:
    """Hue in degrees, strictly decreasing in ``score``."""
    s = min(max(score, 0.0), 1.0)
    return 240.0 * (1.0 - s)


def heat_color(score: float) -> str:
    r, g, b = colorsys.hsv_to_rgb(heat_hue(score) / 360.0, 0.85, 0.95)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_dot(scores: list[ChunkScore], edges=(), p_hat: float | None = None) -> str:
    lines = ["digraph resid {", "  node [shape=box, style=filled, fontname=Helvetica];"]
    if p_hat is not None:
        lines.append(f"  label={_dot_id(f'p_hat = {p_hat:.6g}')};")
    for c in scores:
        label = c.id if not c.line_range else f"{c.id}\\nlines {c.line_range}"
        label += f"\\n{c.score:.6g}"
        lines.append(
            f"  {_dot_id(c.id)} [label=\"{label.replace(chr(34), '')}\", fillcolor=\"{heat_color(c.score)}\"];"
        )
    for src, dst in edges:
        lines.append(f"  {_dot_id(src)} -> {_dot_id(dst)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_html(scores: list[ChunkScore], p_hat: float | None = None, alpha: float | None = None) -> str:
    rows = []
    for c in scores:
        rows.append(
            "<tr>"
            f"<td>{html.escape(c.id)}</td>"
            f"<td>{html.escape(c.file or '')}</td>"
            f"<td>{html.escape(c.line_range)}</td>"
            f"<td>{c.debug_count}</td>"
            f"<td>{html.escape(c.class_label or '')}</td>"
            f"<td style=\"background:{heat_color(c.score)}\">{c.score:.6g}</td>"
            "</tr>"
        )
    summary = []
    if p_hat is not None:
        summary.append(f"p&#770; = {p_hat:.6g}")
    if alpha is not None:
        summary.append(f"&alpha; = {alpha:g}")
    return (
        "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Chunk unreliability</title>\n"
        "<style>table{border-collapse:collapse}td,th{border:1px solid #999;padding:2px 8px}</style>\n"
        "</head>\n<body>\n"
        f"<p>{', '.join(summary)}</p>\n"
        "<table>\n<tr><th>chunk</th><th>file</th><th>lines</th><th>debugged</th>"
        "<th>class</th><th>score</th></tr>\n" + "\n".join(rows) + "\n</table>\n</body>\n</html>\n"
    )
