"""A minimal SVG line-plot writer: axes, ticks, labels, legend.

Enough to eyeball boundary curves and frontiers without a plotting
dependency. CSV files remain the canonical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    dashed: bool = False


@dataclass
class LinePlot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 420
    series: list = field(default_factory=list)

    def add(self, x, y, label: str = "", dashed: bool = False) -> "LinePlot":
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, dashed))
        return self

    def render(self) -> str:
        ml, mr, mt, mb = 70, 150, 40, 55
        pw, ph = self.width - ml - mr, self.height - mt - mb
        xs = np.concatenate([s.x[np.isfinite(s.y)] for s in self.series]) if self.series else np.zeros(1)
        ys = np.concatenate([s.y[np.isfinite(s.y)] for s in self.series]) if self.series else np.zeros(1)
        x0, x1 = _pad(xs.min(), xs.max())
        y0, y1 = _pad(ys.min(), ys.max())

        def px(v):
            return ml + (v - x0) / (x1 - x0) * pw

        def py(v):
            return mt + ph - (v - y0) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
               f'font-family="sans-serif" font-size="12">',
               f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
               f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
        for v in np.linspace(x0, x1, 6):
            out.append(f'<line x1="{px(v):.1f}" y1="{mt + ph}" x2="{px(v):.1f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px(v):.1f}" y="{mt + ph + 18}" text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(y0, y1, 6):
            out.append(f'<line x1="{ml - 5}" y1="{py(v):.1f}" x2="{ml}" y2="{py(v):.1f}" stroke="black"/>')
            out.append(f'<text x="{ml - 8}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
        out.append(f'<text x="{ml + pw / 2}" y="{self.height - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {mt + ph / 2})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{ml + pw / 2}" y="24" text-anchor="middle" font-size="14">{escape(self.title)}</text>')
        for i, s in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            ok = np.isfinite(s.y) & np.isfinite(s.x)
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(s.x[ok], s.y[ok]))
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>')
            if s.label:
                ly = mt + 14 + 18 * i
                out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 34}" y2="{ly}" '
                           f'stroke="{color}" stroke-width="2"{dash}/>')
                out.append(f'<text x="{ml + pw + 40}" y="{ly + 4}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())


def _pad(lo, hi):
    if not np.isfinite(lo) or not np.isfinite(hi):
        return 0.0, 1.0
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    m = 0.04 * (hi - lo)
    return lo - m, hi + m
