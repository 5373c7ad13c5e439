"""Minimal SVG emitters for Q-Q plots, line plots, heatmaps and residual scatters.

Coordinates are printed with fixed precision so output is byte-stable.
"""

from __future__ import annotations

from html import escape

import numpy as np

from . import __version__

__all__ = ["qq_plot", "line_plot", "heatmap", "scatter_lowess"]

W, H = 420, 360
ML, MR, MT, MB = 60, 20, 36, 50
NA_COLOR = "#9e9e9e"
PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, title: str, width=W, height=H):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f"<!-- ppdiag {__version__} -->",
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]

    def add(self, s: str):
        self.parts.append(s)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(self.parts + ["</svg>"]) + "\n")


class _Axes:
    """Linear data-to-pixel map for the plotting area."""

    def __init__(self, canvas, xlim, ylim, xlabel="", ylabel=""):
        self.c = canvas
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.left, self.right = ML, canvas.width - MR
        self.top, self.bottom = MT, canvas.height - MB
        canvas.add(
            f'<rect class="frame" x="{self.left}" y="{self.top}" width="{self.right - self.left}" '
            f'height="{self.bottom - self.top}" fill="none" stroke="black"/>'
        )
        for v, anchor in ((self.x0, "start"), (self.x1, "end")):
            canvas.add(f'<text x="{_f(self.px(v))}" y="{self.bottom + 16}" text-anchor="{anchor}" font-size="10">{v:.3g}</text>')
        for v in (self.y0, self.y1):
            canvas.add(f'<text x="{self.left - 4}" y="{_f(self.py(v) + 4)}" text-anchor="end" font-size="10">{v:.3g}</text>')
        canvas.add(f'<text x="{(self.left + self.right) / 2:.1f}" y="{canvas.height - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
        canvas.add(
            f'<text x="14" y="{(self.top + self.bottom) / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {(self.top + self.bottom) / 2:.1f})">{escape(ylabel)}</text>'
        )

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, y):
        return self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def polyline(self, x, y, color="black", cls="series"):
        pts = " ".join(f"{_f(self.px(a))},{_f(self.py(b))}" for a, b in zip(x, y))
        self.c.add(f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')

    def points(self, x, y, color="black", r=2.5, cls="point"):
        for a, b in zip(x, y):
            self.c.add(f'<circle class="{cls}" cx="{_f(self.px(a))}" cy="{_f(self.py(b))}" r="{r}" fill="{color}"/>')


def qq_plot(path, qq, title: str = "Q-Q plot") -> None:
    """Empirical against Exp(1) quantiles with the y = x reference line."""
    theo, emp = qq.theoretical, qq.empirical
    hi = float(max(theo.max(), emp.max()))
    canvas = _Canvas(title)
    ax = _Axes(canvas, (0.0, hi), (0.0, hi), "Exp(1) quantile", "rescaled time")
    canvas.add(
        f'<line class="diagonal" x1="{_f(ax.px(0))}" y1="{_f(ax.py(0))}" x2="{_f(ax.px(hi))}" '
        f'y2="{_f(ax.py(hi))}" stroke="grey" stroke-dasharray="4,3"/>'
    )
    ax.points(theo, emp)
    canvas.save(path)


def line_plot(path, x, y, title: str = "", xlabel: str = "t", ylabel: str = "intensity") -> None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    canvas = _Canvas(title)
    ax = _Axes(canvas, (float(x.min()), float(x.max())), (0.0, float(y.max()) * 1.05), xlabel, ylabel)
    ax.polyline(x, y, "#1f4e79")
    canvas.save(path)


def _sequential(v, vmax):
    u = 0.0 if vmax <= 0 else min(max(v / vmax, 0.0), 1.0)
    g = int(round(255 * (1 - 0.85 * u)))
    return f"#{int(round(255 * (1 - 0.2 * u))):02x}{g:02x}{g:02x}"


def _diverging(v, vmax):
    """Red for positive, blue for negative, white at zero."""
    u = 0.0 if vmax <= 0 else min(abs(v) / vmax, 1.0)
    fade = int(round(255 * (1 - u)))
    return f"#ff{fade:02x}{fade:02x}" if v > 0 else f"#{fade:02x}{fade:02x}ff"


def heatmap(path, matrix, title: str = "", diverging: bool = False, labels=None) -> None:
    """Sender x receiver heatmap; masked cells drawn in a distinct NA colour.

    ``labels`` are the node ids shown for rows/columns in display order.
    """
    values = np.ma.asarray(getattr(matrix, "values", matrix))
    mask = np.ma.getmaskarray(values)
    data = values.data
    n = data.shape[0]
    labels = list(range(1, n + 1)) if labels is None else list(labels)
    vmax = float(np.abs(data[~mask]).max()) if (~mask).any() else 0.0
    size = 300
    cell = size / n
    canvas = _Canvas(title, width=ML + size + 70, height=MT + size + 40)
    for i in range(n):
        for j in range(n):
            x, y = ML + j * cell, MT + i * cell
            if mask[i, j]:
                fill, cls = NA_COLOR, "na"
            else:
                v = float(data[i, j])
                fill, cls = (_diverging(v, vmax) if diverging else _sequential(v, vmax)), "cell"
            canvas.add(f'<rect class="{cls}" x="{_f(x)}" y="{_f(y)}" width="{_f(cell)}" height="{_f(cell)}" fill="{fill}"/>')
    for k, lab in enumerate(labels):
        canvas.add(f'<text x="{_f(ML + (k + 0.5) * cell)}" y="{MT - 4}" text-anchor="middle" font-size="9">{lab}</text>')
        canvas.add(f'<text x="{ML - 4}" y="{_f(MT + (k + 0.5) * cell + 3)}" text-anchor="end" font-size="9">{lab}</text>')
    lo = -vmax if diverging else 0.0
    canvas.add(f'<text x="{ML + size + 8}" y="{MT + 10}" font-size="10">max {vmax:.3g}</text>')
    canvas.add(f'<text x="{ML + size + 8}" y="{MT + size}" font-size="10">min {lo:.3g}</text>')
    canvas.add(f'<text x="{ML}" y="{MT + size + 16}" font-size="10">rows: sender, columns: receiver, grey: NA</text>')
    canvas.save(path)


def scatter_lowess(path, series: dict, fits: dict | None = None, title: str = "",
                   xlabel: str = "event count", ylabel: str = "residual") -> None:
    """One colour per named series, with optional smoothed ``(x, y)`` lines."""
    fits = fits or {}
    xs = np.concatenate([np.asarray(v[0], dtype=float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], dtype=float) for v in series.values()])
    ylo, yhi = float(min(ys.min(), 0.0)), float(max(ys.max(), 0.0))
    canvas = _Canvas(title, width=W + 110)
    ax = _Axes(canvas, (float(xs.min()), float(xs.max())), (ylo, yhi), xlabel, ylabel)
    canvas.add(f'<line class="zero" x1="{ax.left}" y1="{_f(ax.py(0))}" x2="{ax.right}" y2="{_f(ax.py(0))}" stroke="grey"/>')
    for k, (name, (x, y)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        ax.points(x, y, color, r=2.0)
        if name in fits:
            ax.polyline(fits[name][:, 0], fits[name][:, 1], color, cls="lowess")
        canvas.add(f'<text x="{W + 4}" y="{MT + 14 * (k + 1)}" font-size="11" fill="{color}">{escape(name)}</text>')
    canvas.save(path)
