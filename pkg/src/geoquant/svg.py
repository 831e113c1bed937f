"""Minimal SVG markup for 2-D contour and black-hole pictures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = {
    "geometric": "#000000",
    "power:1": "#ff8c00",
    "power:2": "#1f4fd1",
    "power:4": "#8b4513",
    "power:5": "#d62728",
    "power:10": "#2ca02c",
}


def color_for(label: str) -> str:
    return PALETTE.get(label, "#7f7f7f")


def _num(v: float) -> str:
    return f"{v:.6g}"


@dataclass
class Canvas:
    """A square plotting area mapping data coordinates to pixels (y up)."""

    lo: np.ndarray
    hi: np.ndarray
    size: int = 600
    items: list = field(default_factory=list)

    @classmethod
    def around(cls, points, pad: float = 0.05, size: int = 600) -> "Canvas":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = max(float((hi - lo).max()), 1e-9)
        mid = 0.5 * (lo + hi)
        half = 0.5 * span * (1.0 + 2.0 * pad)
        return cls(mid - half, mid + half, size)

    def _xy(self, p):
        s = self.size / float((self.hi - self.lo).max())
        return (p[0] - self.lo[0]) * s, self.size - (p[1] - self.lo[1]) * s

    def _len(self, r):
        return r * self.size / float((self.hi - self.lo).max())

    def polyline(self, points, stroke="#000000", dashed=False, closed=True, width=1.2, title=None):
        pts = [p for p in np.asarray(points, float) if np.all(np.isfinite(p))]
        if len(pts) < 2:
            return
        coords = " ".join(f"{_num(x)},{_num(y)}" for x, y in map(self._xy, pts))
        tag = "polygon" if closed else "polyline"
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        head = f'<{tag} points="{coords}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash}'
        if title:
            self.items.append(f"{head}><title>{escape(title)}</title></{tag}>")
        else:
            self.items.append(head + "/>")

    def circle(self, center, r, stroke="#000000", fill="none", opacity=1.0):
        x, y = self._xy(center)
        self.items.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{_num(self._len(r))}" '
                          f'stroke="{stroke}" fill="{fill}" fill-opacity="{_num(opacity)}"/>')

    def dots(self, points, radius_px=1.2, fill="#999999"):
        for p in np.asarray(points, float):
            x, y = self._xy(p)
            self.items.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{radius_px}" fill="{fill}"/>')

    def cross(self, p, size_px=6, stroke="#000000"):
        x, y = self._xy(p)
        s = size_px
        self.items.append(f'<path d="M{_num(x - s)},{_num(y - s)}L{_num(x + s)},{_num(y + s)}'
                          f'M{_num(x - s)},{_num(y + s)}L{_num(x + s)},{_num(y - s)}" '
                          f'stroke="{stroke}" stroke-width="1.5"/>')

    def text(self, p_px, label, size=12):
        self.items.append(f'<text x="{_num(p_px[0])}" y="{_num(p_px[1])}" font-size="{size}" '
                          f'font-family="sans-serif">{escape(label)}</text>')

    def render(self) -> str:
        n = self.size
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{n}" height="{n}" '
                f'viewBox="0 0 {n} {n}">\n<rect width="{n}" height="{n}" fill="#ffffff"/>\n'
                f"{body}\n</svg>\n")


def contour_svg(data, curves, median=None, size: int = 600) -> str:
    """``curves`` is a list of (label, alpha, points); geometric curves solid, others dashed."""
    pts = [np.asarray(data, float)] + [np.asarray(c[2], float) for c in curves]
    canvas = Canvas.around(np.vstack(pts), size=size)
    canvas.dots(data)
    for label, alpha, points in curves:
        canvas.polyline(points, stroke=color_for(label), dashed=label != "geometric",
                        title=f"{label} alpha={alpha}")
    if median is not None:
        canvas.cross(median)
    return canvas.render()


def black_hole_svg(holes, size: int = 600) -> str:
    """Unit ball with each black hole drawn as a filled disk."""
    canvas = Canvas(np.array([-1.05, -1.05]), np.array([1.05, 1.05]), size)
    circle = [(math.cos(t), math.sin(t)) for t in np.linspace(0, 2 * math.pi, 257)[:-1]]
    canvas.polyline(circle, stroke="#000000")
    for h in holes:
        canvas.circle(h.center, h.radius, stroke="#1f4fd1", fill="#1f4fd1", opacity=0.3)
        canvas.dots([h.center], radius_px=2.0, fill="#1f4fd1")
    return canvas.render()
