"""Minimal native SVG emission for line plots, bands, and panel grids.

No plotting dependency: panels are laid out on a fixed grid, each with its
own data-driven viewport, axis frame, min/max tick labels, polylines, and
optional shaded bands.  Every plot the CLI writes also gets a raw-data CSV
sibling so external tools can re-render.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Series", "Band", "Panel", "render_panels"]

PANEL_W = 360
PANEL_H = 260
MARGIN = {"left": 52, "right": 14, "top": 30, "bottom": 36}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str | None = None
    dashed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))
        if self.x.size != self.y.size:
            raise ValueError("series x and y must have equal length")


@dataclass(frozen=True)
class Band:
    x: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    color: str = "#1f77b4"
    opacity: float = 0.25

    def __post_init__(self):
        for name in ("x", "lo", "hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if not (self.x.size == self.lo.size == self.hi.size):
            raise ValueError("band x, lo, hi must have equal length")


@dataclass(frozen=True)
class Panel:
    title: str = ""
    series: tuple = ()
    bands: tuple = ()
    points: tuple = ()  # scatter overlays: (x, y, color) triples
    x_label: str = ""
    y_label: str = ""


def _limits(panel: Panel):
    xs, ys = [], []
    for s in panel.series:
        xs.append(s.x)
        ys.append(s.y)
    for b in panel.bands:
        xs.append(b.x)
        ys.extend([b.lo, b.hi])
    for px, py, _ in panel.points:
        xs.append(np.asarray(px, dtype=float))
        ys.append(np.asarray(py, dtype=float))
    x = np.concatenate(xs) if xs else np.array([0.0, 1.0])
    y = np.concatenate(ys) if ys else np.array([0.0, 1.0])
    x = x[np.isfinite(x)]
    y = y[np.isfinite(y)]
    if x.size == 0:
        x = np.array([0.0, 1.0])
    if y.size == 0:
        y = np.array([0.0, 1.0])
    pad = lambda lo, hi: (lo - 0.05 * (hi - lo or 1.0), hi + 0.05 * (hi - lo or 1.0))
    return pad(float(x.min()), float(x.max())), pad(float(y.min()), float(y.max()))


def _mapper(xlim, ylim, ox, oy):
    inner_w = PANEL_W - MARGIN["left"] - MARGIN["right"]
    inner_h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]

    def to_px(x, y):
        fx = (np.asarray(x) - xlim[0]) / (xlim[1] - xlim[0])
        fy = (np.asarray(y) - ylim[0]) / (ylim[1] - ylim[0])
        return (
            ox + MARGIN["left"] + fx * inner_w,
            oy + MARGIN["top"] + (1.0 - fy) * inner_h,
        )

    return to_px


def _fmt(value: float) -> str:
    return f"{value:.3g}"


def _panel_svg(panel: Panel, ox: float, oy: float) -> list:
    xlim, ylim = _limits(panel)
    to_px = _mapper(xlim, ylim, ox, oy)
    x0, y0 = ox + MARGIN["left"], oy + MARGIN["top"]
    x1 = ox + PANEL_W - MARGIN["right"]
    y1 = oy + PANEL_H - MARGIN["bottom"]
    parts = [
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    ]
    if panel.title:
        parts.append(
            f'<text x="{ox + PANEL_W / 2}" y="{oy + 18}" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">{panel.title}</text>'
        )
    # min/max tick labels
    parts.append(
        f'<text x="{x0}" y="{y1 + 16}" text-anchor="middle" font-size="10" '
        f'font-family="sans-serif">{_fmt(xlim[0])}</text>'
    )
    parts.append(
        f'<text x="{x1}" y="{y1 + 16}" text-anchor="middle" font-size="10" '
        f'font-family="sans-serif">{_fmt(xlim[1])}</text>'
    )
    parts.append(
        f'<text x="{x0 - 4}" y="{y1 + 4}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{_fmt(ylim[0])}</text>'
    )
    parts.append(
        f'<text x="{x0 - 4}" y="{y0 + 4}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{_fmt(ylim[1])}</text>'
    )
    if panel.x_label:
        parts.append(
            f'<text x="{(x0 + x1) / 2}" y="{y1 + 28}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{panel.x_label}</text>'
        )
    for band in panel.bands:
        bx = np.concatenate([band.x, band.x[::-1]])
        by = np.concatenate([band.hi, band.lo[::-1]])
        px, py = to_px(bx, by)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        parts.append(
            f'<polygon points="{pts}" fill="{band.color}" '
            f'opacity="{band.opacity}" stroke="none"/>'
        )
    for i, series in enumerate(panel.series):
        color = series.color or PALETTE[i % len(PALETTE)]
        px, py = to_px(series.x, series.y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        dash = ' stroke-dasharray="6,4"' if series.dashed else ""
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>'
        )
        if series.label:
            ly = y0 + 14 + 13 * i
            parts.append(
                f'<line x1="{x1 - 60}" y1="{ly - 4}" x2="{x1 - 44}" y2="{ly - 4}" '
                f'stroke="{color}" stroke-width="1.5"{dash}/>'
            )
            parts.append(
                f'<text x="{x1 - 40}" y="{ly}" font-size="10" '
                f'font-family="sans-serif">{series.label}</text>'
            )
    for px_raw, py_raw, color in panel.points:
        px, py = to_px(np.asarray(px_raw, dtype=float), np.asarray(py_raw, dtype=float))
        for a, b in zip(np.atleast_1d(px), np.atleast_1d(py)):
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2" fill="{color}"/>')
    return parts


def render_panels(panels, ncols: int = 3) -> str:
    """Lay panels out on a grid and return the SVG document text."""
    panels = list(panels)
    if not panels:
        panels = [Panel(title="(empty)")]
    ncols = max(1, min(ncols, len(panels)))
    nrows = -(-len(panels) // ncols)
    width, height = ncols * PANEL_W, nrows * PANEL_H
    body = []
    for i, panel in enumerate(panels):
        ox = (i % ncols) * PANEL_W
        oy = (i // ncols) * PANEL_H
        body.extend(_panel_svg(panel, ox, oy))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )
