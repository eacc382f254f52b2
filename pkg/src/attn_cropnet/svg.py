"""Minimal hand-written SVG line charts."""
from __future__ import annotations

from xml.sax.saxutils import escape


def line_chart(x, series: dict, title: str = "", xlabel: str = "", width: int = 480,
               height: int = 320) -> str:
    """Line chart with one independently scaled panel per series, stacked vertically."""
    x = [float(v) for v in x]
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    left, right, top, gap = 60, 20, 30, 40
    panel_h = (height - top - gap * len(series)) / max(1, len(series))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    x0, x1 = min(x), max(x)
    xs = lambda v: left + (v - x0) / ((x1 - x0) or 1.0) * (width - left - right)
    for k, (name, ys) in enumerate(series.items()):
        ys = [float(v) for v in ys]
        y0, y1 = min(ys), max(ys)
        pad = (y1 - y0) * 0.1 or 0.5
        y0, y1 = y0 - pad, y1 + pad
        ptop = top + k * (panel_h + gap)
        pbot = ptop + panel_h
        ysc = lambda v: pbot - (v - y0) / (y1 - y0) * panel_h
        c = colors[k % len(colors)]
        out.append(f'<line x1="{left}" y1="{pbot}" x2="{width - right}" y2="{pbot}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{ptop}" x2="{left}" y2="{pbot}" stroke="black"/>')
        for v in (y0 + pad, y1 - pad):
            out.append(f'<text x="{left - 4}" y="{ysc(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
        for v in x:
            out.append(f'<text x="{xs(v):.1f}" y="{pbot + 14}" text-anchor="middle">{v:g}</text>')
        out.append(f'<text x="14" y="{(ptop + pbot) / 2:.1f}" transform="rotate(-90 14 '
                   f'{(ptop + pbot) / 2:.1f})" text-anchor="middle">{escape(name)}</text>')
        pts = " ".join(f"{xs(a):.1f},{ysc(b):.1f}" for a, b in zip(x, ys))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{pts}"/>')
        for a, b in zip(x, ys):
            out.append(f'<circle cx="{xs(a):.1f}" cy="{ysc(b):.1f}" r="3" fill="{c}"/>')
    out.append(f'<text x="{width / 2}" y="{height - 4}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
