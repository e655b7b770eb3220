"""Standalone SVG line charts of experiment reports (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .exceptions import EmptyReportError
from .reporting import read_csv

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def load_series(path, column: str = "mean_objective") -> dict:
    """``{method: (t, values)}`` from an experiment CSV."""
    _, rows = read_csv(path)
    series: dict = {}
    for r in rows:
        ts, ys = series.setdefault(r["method"], ([], []))
        ts.append(int(r["t"]))
        ys.append(float(r[column]))
    return {k: (np.array(t), np.array(y)) for k, (t, y) in series.items()}


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def render_svg(series: dict, *, log_y: bool = False, title: str = "",
               width: int = 640, height: int = 400) -> str:
    if not series:
        raise EmptyReportError("report has no series to plot")
    left, right, top, bottom = 70, 20, 30, 45
    pw, ph = width - left - right, height - top - bottom

    def ty(y):
        return np.log10(y) if log_y else y

    xs = np.concatenate([np.asarray(t, float) for t, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ok = np.isfinite(ys) & ((ys > 0) if log_y else True)
    if not ok.any():
        raise EmptyReportError("no plottable values")
    x0, x1 = xs.min(), xs.max()
    y0, y1 = ty(ys[ok]).min(), ty(ys[ok]).max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        pad = abs(y0) * 0.1 or 1.0
        y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{width / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for v in _ticks(y0, y1):
        label = f"{10 ** v:.3g}" if log_y else f"{v:.3g}"
        out.append(f'<text x="{left - 5}" y="{py(v) + 4:.1f}" text-anchor="end">{label}</text>')
    for v in _ticks(x0, x1):
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 15}" text-anchor="middle">'
                   f'{v:.0f}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">t</text>')

    for n, (name, (t, y)) in enumerate(series.items()):
        t, y = np.asarray(t, float), np.asarray(y, float)
        keep = np.isfinite(y) & ((y > 0) if log_y else True)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t[keep], ty(y[keep])))
        color = PALETTE[n % len(PALETTE)]
        out.append(f'<polyline class="series" data-method="{escape(name)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 15 + 15 * n
        out.append(f'<line x1="{left + pw - 150}" y1="{ly}" x2="{left + pw - 130}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{left + pw - 125}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_figure(report_path, out_path=None, *, column: str = "mean_objective",
                log_y: bool = False, title: str = "") -> str:
    svg = render_svg(load_series(report_path, column), log_y=log_y, title=title)
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write(svg)
    return svg


def final_values(series: dict) -> dict:
    return {k: float(y[-1]) for k, (_, y) in series.items()}

