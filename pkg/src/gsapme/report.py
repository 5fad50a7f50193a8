"""Result documents and their JSON and SVG renderings."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from .errors import ConfigError

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3")


@dataclass
class ResultDocument:
    """Per-method rows ``{name, estimate, ci_low, ci_high, rank}`` plus run metadata.

    ``timings`` are kept apart from ``meta`` so that the JSON of two runs with
    the same configuration is byte-identical.
    """

    methods: dict
    meta: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def estimates(self, method: str) -> list[float]:
        return [row["estimate"] for row in self.methods[method]]


def rank_rows(names, estimates, ci_low=None, ci_high=None) -> list[dict]:
    """Rows ranked by descending estimate; ties keep the declaration order."""
    order = sorted(range(len(names)), key=lambda i: (-estimates[i], i))
    rank = {i: r + 1 for r, i in enumerate(order)}
    rows = []
    for i, name in enumerate(names):
        rows.append({
            "name": name,
            "estimate": float(estimates[i]),
            "ci_low": None if ci_low is None else float(ci_low[i]),
            "ci_high": None if ci_high is None else float(ci_high[i]),
            "rank": rank[i],
        })
    return rows


def _dump(obj) -> str:
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        text = format(obj, ".17g")
        # keep a float recognisable as such in the output
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if hasattr(obj, "tolist"):
        return _dump(obj.tolist())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def document_json(doc: ResultDocument, timings: bool = False) -> str:
    meta = dict(doc.meta)
    if timings:
        meta["timings"] = doc.timings
    body = {"method": list(doc.methods), "inputs": doc.methods, "meta": meta}
    return _dump(body) + "\n"


def emit_json(doc: ResultDocument, path, timings: bool = False) -> None:
    """Write the document; floats carry 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(document_json(doc, timings))


def emit_svg(doc: ResultDocument, path, title: str | None = None) -> None:
    """Grouped bar chart: one group per input, one bar per method.

    Whiskers show the intervals when present, and a dotted line marks the
    average share ``1/d``. Negative estimates are drawn below the axis.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(doc, title))


def render_svg(doc: ResultDocument, title: str | None = None) -> str:
    methods = list(doc.methods)
    if not methods:
        raise ConfigError("cannot draw a chart without methods")
    names = [row["name"] for row in doc.methods[methods[0]]]
    d = len(names)
    values = []
    for m in methods:
        for row in doc.methods[m]:
            values.append(row["estimate"])
            values += [v for v in (row["ci_low"], row["ci_high"]) if v is not None]
    top = max(max(values), 1.0 / d, 0.0)
    bottom = min(min(values), 0.0)
    span = (top - bottom) or 1.0
    top += 0.05 * span
    bottom -= 0.05 * span if bottom < 0 else 0.0

    width, height = max(360, 90 * d + 120), 360
    left, right, upper, lower = 60, 20, 40, 60
    plot_w, plot_h = width - left - right, height - upper - lower

    def ypos(v):
        return upper + (top - v) / (top - bottom) * plot_h

    group = plot_w / d
    bar = group * 0.8 / len(methods)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    # y axis with five ticks
    for t in range(6):
        v = bottom + (top - bottom) * t / 5
        y = ypos(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{v:.2f}</text>')
    out.append(f'<line x1="{left}" y1="{upper}" x2="{left}" y2="{upper + plot_h}" stroke="black"/>')
    zero = ypos(0.0)
    out.append(f'<line class="axis" x1="{left}" y1="{zero:.2f}" x2="{left + plot_w}" y2="{zero:.2f}" stroke="black"/>')

    for j, m in enumerate(methods):
        colour = PALETTE[j % len(PALETTE)]
        for i, row in enumerate(doc.methods[m]):
            x = left + i * group + group * 0.1 + j * bar
            v = row["estimate"]
            y0, y1 = sorted((ypos(v), zero))
            out.append(f'<rect class="bar" data-method="{escape(m)}" data-input="{escape(row["name"])}" '
                       f'x="{x:.2f}" y="{y0:.2f}" width="{bar:.2f}" height="{y1 - y0:.2f}" fill="{colour}"/>')
            if row["ci_low"] is not None and row["ci_high"] is not None:
                cx = x + bar / 2
                lo, hi = ypos(row["ci_low"]), ypos(row["ci_high"])
                out.append(f'<g class="whisker" stroke="black">'
                           f'<line x1="{cx:.2f}" y1="{lo:.2f}" x2="{cx:.2f}" y2="{hi:.2f}"/>'
                           f'<line x1="{cx - bar / 4:.2f}" y1="{lo:.2f}" x2="{cx + bar / 4:.2f}" y2="{lo:.2f}"/>'
                           f'<line x1="{cx - bar / 4:.2f}" y1="{hi:.2f}" x2="{cx + bar / 4:.2f}" y2="{hi:.2f}"/></g>')
    for i, name in enumerate(names):
        cx = left + (i + 0.5) * group
        out.append(f'<text x="{cx:.2f}" y="{upper + plot_h + 18}" text-anchor="middle">{escape(name)}</text>')

    ref = ypos(1.0 / d)
    out.append(f'<line class="reference" x1="{left}" y1="{ref:.2f}" x2="{left + plot_w}" y2="{ref:.2f}" '
               f'stroke="gray" stroke-dasharray="2,3" data-value="{1.0 / d:.6g}"/>')
    for j, m in enumerate(methods):
        x = left + j * 110
        y = height - 16
        out.append(f'<rect x="{x}" y="{y - 9}" width="10" height="10" fill="{PALETTE[j % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 14}" y="{y}">{escape(m)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
