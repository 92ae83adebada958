"""Minimal SVG 1.1 line-and-band plotting.

Figures are regression artifacts: deterministic text output, no
external renderer.  Supports line series, filled confidence bands, and
scatter markers on a single linear-axis panel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Figure", "PALETTE"]

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#17becf", "#7f7f7f",
)

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 64, 16, 28, 48


@dataclass
class Figure:
    """One SVG panel accumulating series before rendering."""

    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    _series: list = field(default_factory=list)

    def line(self, x, y, color: str | None = None, dashed: bool = False,
             label: str = ""):
        self._series.append(("line", np.asarray(x, float), np.asarray(y, float),
                             color, dashed, label))

    def band(self, x, lower, upper, color: str | None = None, label: str = ""):
        self._series.append(("band", np.asarray(x, float),
                             (np.asarray(lower, float), np.asarray(upper, float)),
                             color, False, label))

    def points(self, x, y, color: str | None = None, label: str = ""):
        self._series.append(("points", np.asarray(x, float),
                             np.asarray(y, float), color, False, label))

    def _limits(self):
        xs, ys = [], []
        for kind, x, y, *_ in self._series:
            xs.append(x)
            if kind == "band":
                ys.extend(y)
            else:
                ys.append(y)
        x_all = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        y_all = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        x_all = x_all[np.isfinite(x_all)]
        y_all = y_all[np.isfinite(y_all)]

        def pad(lo, hi):
            if hi == lo:
                lo, hi = lo - 0.5, hi + 0.5
            span = hi - lo
            return lo - 0.05 * span, hi + 0.05 * span

        return pad(x_all.min(), x_all.max()), pad(y_all.min(), y_all.max())

    def render(self) -> str:
        (x0, x1), (y0, y1) = self._limits()

        def sx(x):
            return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

        def sy(y):
            return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

        def pts(x, y):
            return " ".join(
                f"{sx(a):.2f},{sy(b):.2f}"
                for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b)
            )

        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
        ]
        # axes and ticks
        ax = (f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
              'stroke="black"/>'
              f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
              'stroke="black"/>')
        out.append(ax)
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = x0 + frac * (x1 - x0)
            yv = y0 + frac * (y1 - y0)
            out.append(
                f'<line x1="{sx(xv):.2f}" y1="{_H - _MB}" x2="{sx(xv):.2f}" '
                f'y2="{_H - _MB + 5}" stroke="black"/>'
                f'<text x="{sx(xv):.2f}" y="{_H - _MB + 18}" font-size="11" '
                f'text-anchor="middle">{xv:.4g}</text>'
                f'<line x1="{_ML - 5}" y1="{sy(yv):.2f}" x2="{_ML}" '
                f'y2="{sy(yv):.2f}" stroke="black"/>'
                f'<text x="{_ML - 8}" y="{sy(yv):.2f}" font-size="11" '
                f'text-anchor="end" dominant-baseline="middle">{yv:.4g}</text>'
            )
        if self.title:
            out.append(f'<text x="{_W / 2}" y="{_MT - 10}" font-size="13" '
                       f'text-anchor="middle">{self.title}</text>')
        if self.xlabel:
            out.append(f'<text x="{_W / 2}" y="{_H - 10}" font-size="12" '
                       f'text-anchor="middle">{self.xlabel}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{_H / 2}" font-size="12" '
                       f'text-anchor="middle" '
                       f'transform="rotate(-90 14 {_H / 2})">{self.ylabel}</text>')
        legend_y = _MT + 6
        for k, (kind, x, y, color, dashed, label) in enumerate(self._series):
            c = color or PALETTE[k % len(PALETTE)]
            if kind == "band":
                lower, upper = y
                poly = pts(x, lower) + " " + pts(x[::-1], upper[::-1])
                out.append(f'<polygon points="{poly}" fill="{c}" '
                           'fill-opacity="0.25" stroke="none"/>')
            elif kind == "line":
                dash = ' stroke-dasharray="6,4"' if dashed else ""
                out.append(f'<polyline points="{pts(x, y)}" fill="none" '
                           f'stroke="{c}" stroke-width="1.5"{dash}/>')
            else:
                for a, b in zip(x, y):
                    if np.isfinite(a) and np.isfinite(b):
                        out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" '
                                   f'r="3" fill="{c}"/>')
            if label:
                out.append(
                    f'<line x1="{_W - 170}" y1="{legend_y}" x2="{_W - 146}" '
                    f'y2="{legend_y}" stroke="{c}" stroke-width="2"/>'
                    f'<text x="{_W - 140}" y="{legend_y + 4}" '
                    f'font-size="11">{label}</text>'
                )
                legend_y += 16
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(), encoding="utf-8")
        return path
