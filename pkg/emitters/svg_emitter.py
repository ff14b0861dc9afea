"""
Line charts of the sweep: standalone SVG 1.1 written by hand, plus plotly HTML.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple
from xml.sax.saxutils import escape

import pandas as pd
import plotly.express as px
import plotly.io as pio

from emitters.base_emitter import BaseEmitter
from utils import format_sig

logger = logging.getLogger(__name__)

# Series colours in legend order
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

CHARTS = {
    "frequency_vs_speed": ("frequency_hz", "Shedding frequency by design", "Frequency (Hz)"),
    "drift_vs_speed": ("drift", "Drift coefficient CL/CD by design", "Drift coefficient CL/CD (dimensionless)"),
}
X_LABEL = "Wind speed U (m/s)"


def nice_ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    """Round tick values whose span covers [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / count
    magnitude = 10 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 2.5, 5, 10) if m * magnitude >= raw)
    start = math.floor(lo / step) * step
    stop = math.ceil(hi / step) * step
    n = int(round((stop - start) / step))
    return [round(start + k * step, 12) for k in range(n + 1)]


class SVG:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.svg = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
            f'<svg version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" '
            'xmlns="http://www.w3.org/2000/svg">\n'
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n'
        )

    def line(self, x1, y1, x2, y2, stroke="black", extra=""):
        self.svg += f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}" {extra}/>\n'

    def polyline(self, points: Sequence[Tuple[float, float]], stroke: str, title: str):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.svg += (f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="2">'
                     f'<title>{escape(title)}</title></polyline>\n')

    def circle(self, x, y, r, fill):
        self.svg += f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{fill}"/>\n'

    def text(self, x, y, string, extra=""):
        self.svg += f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="12" {extra}>{escape(string)}</text>\n'

    def get_svg(self) -> str:
        return f"{self.svg}</svg>\n"


def line_chart(series: Dict[str, Tuple[Sequence[float], Sequence[float]]], title: str,
               x_label: str, y_label: str, width: int = 640, height: int = 420) -> str:
    """
    Render one polyline per series with axes, ticks and a legend.

    Args:
        series: Label -> (x values, y values); NaN points are skipped
        title: Chart title
        x_label: Horizontal axis label
        y_label: Vertical axis label

    Returns:
        SVG document text
    """
    left, right, top, bottom = 70, 130, 40, 55
    plot_w, plot_h = width - left - right, height - top - bottom

    clean = {}
    for label, (xs, ys) in series.items():
        clean[label] = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    all_x = [x for pts in clean.values() for x, _ in pts]
    all_y = [y for pts in clean.values() for _, y in pts]
    x_ticks = nice_ticks(min(all_x, default=0.0), max(all_x, default=1.0))
    y_ticks = nice_ticks(min(all_y, default=0.0), max(all_y, default=1.0))
    x_lo, x_hi, y_lo, y_hi = x_ticks[0], x_ticks[-1], y_ticks[0], y_ticks[-1]

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    svg = SVG(width, height)
    svg.text(left, top - 15, title, 'font-weight="bold" font-size="14"')
    svg.line(left, top + plot_h, left + plot_w, top + plot_h)
    svg.line(left, top, left, top + plot_h)
    for t in x_ticks:
        svg.line(sx(t), top + plot_h, sx(t), top + plot_h + 5)
        svg.text(sx(t), top + plot_h + 18, format_sig(t, 4), 'text-anchor="middle"')
    for t in y_ticks:
        svg.line(left - 5, sy(t), left, sy(t))
        svg.line(left, sy(t), left + plot_w, sy(t), "#dddddd")
        svg.text(left - 8, sy(t) + 4, format_sig(t, 4), 'text-anchor="end"')
    svg.text(left + plot_w / 2, height - 12, x_label, 'text-anchor="middle"')
    svg.text(16, top + plot_h / 2, y_label,
             f'text-anchor="middle" transform="rotate(-90 16 {top + plot_h / 2:.2f})"')

    for idx, (label, points) in enumerate(clean.items()):
        color = PALETTE[idx % len(PALETTE)]
        scaled = [(sx(x), sy(y)) for x, y in points]
        svg.polyline(scaled, color, label)
        for x, y in scaled:
            svg.circle(x, y, 3, color)
        ly = top + 10 + 20 * idx
        svg.line(left + plot_w + 15, ly, left + plot_w + 40, ly, color, 'stroke-width="2"')
        svg.text(left + plot_w + 46, ly + 4, label)
    return svg.get_svg()


class ChartEmitter(BaseEmitter):
    def emit_plots(self, table) -> List[Path]:
        """
        Write frequency_vs_speed and drift_vs_speed as SVG and HTML.

        Args:
            table: SweepTable with at least one row

        Returns:
            Paths of the written files
        """
        frame = table.to_frame()
        if frame.empty:
            raise ValueError("Cannot plot an empty table")
        written = []
        for name, (column, title, y_label) in CHARTS.items():
            series = {tag: (group["U_mps"].tolist(), group[column].tolist())
                      for tag, group in frame.groupby("design", sort=True)}
            written.append(self.write_text(f"{name}.svg", line_chart(series, title, X_LABEL, y_label)))
            written.append(self.write_text(f"{name}.html", self._html(frame, column, title, y_label, name)))
        logger.info(f"Wrote {len(written)} chart files to {self.out_dir}")
        return written

    @staticmethod
    def _html(frame: pd.DataFrame, column: str, title: str, y_label: str, div_id: str) -> str:
        fig = px.line(frame.dropna(subset=[column]), x="U_mps", y=column, color="design", markers=True,
                      title=title, labels={"U_mps": X_LABEL, column: y_label, "design": "Design"},
                      color_discrete_sequence=PALETTE)
        return pio.to_html(fig, include_plotlyjs="cdn", full_html=True, div_id=div_id)
