"""Static SVG figure emission: contour maps, phase portraits, and RoA
boundary overlays.

SVG is written directly (no graphics dependency) so output is a
deterministic pure function of the input data: no timestamps, no random
ids, floats formatted with a fixed precision.
"""

from __future__ import annotations

import numpy as np

COLOR_TRAINED = "#1f77b4"    # blue: trained estimate
COLOR_VERIFIED = "#2ca02c"   # green: verified inner approximation
COLOR_QUAD = "#d62728"       # red: standard quadratic
COLOR_QUAD_OPT = "#ff7f0e"   # orange: optimized quadratic
COLOR_FLOW = "#9a9a9a"
COLOR_CONTOUR = "#555555"


def _fmt(v: float) -> str:
    return f"{v:.3f}"


class SvgCanvas:
    def __init__(self, xlim, ylim, size=560, margin=40, title=""):
        self.xlim, self.ylim = xlim, ylim
        self.size, self.margin = size, margin
        self.parts = []
        w = size + 2 * margin
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
            f'height="{w}" viewBox="0 0 {w} {w}">')
        self.parts.append(f'<rect width="{w}" height="{w}" fill="white"/>')
        if title:
            self.parts.append(
                f'<text x="{w / 2}" y="{margin / 2 + 5}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="14">{title}</text>')
        self.parts.append(
            f'<rect x="{margin}" y="{margin}" width="{size}" height="{size}" '
            f'fill="none" stroke="black" stroke-width="1"/>')

    def _map(self, x, y):
        sx = self.margin + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.size
        sy = self.margin + (self.ylim[1] - y) / (self.ylim[1] - self.ylim[0]) * self.size
        return sx, sy

    def polyline(self, pts, color, width=1.2, opacity=1.0):
        if len(pts) < 2:
            return
        coords = " ".join("%s,%s" % tuple(_fmt(c) for c in self._map(x, y))
                          for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>')

    def segments(self, segs, color, width=1.6):
        for (x1, y1), (x2, y2) in segs:
            a = self._map(x1, y1)
            b = self._map(x2, y2)
            self.parts.append(
                f'<line x1="{_fmt(a[0])}" y1="{_fmt(a[1])}" '
                f'x2="{_fmt(b[0])}" y2="{_fmt(b[1])}" stroke="{color}" '
                f'stroke-width="{width}"/>')

    def marker(self, x, y, color, r=4):
        sx, sy = self._map(x, y)
        self.parts.append(
            f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="{r}" fill="none" '
            f'stroke="{color}" stroke-width="1.5"/>')

    def annotation(self, text, y_offset=0):
        w = self.size + 2 * self.margin
        self.parts.append(
            f'<text x="{w / 2}" y="{w - 8 - y_offset}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{text}</text>')

    def legend(self, entries):
        x = self.margin + 8
        y = self.margin + 16
        for label, color in entries:
            self.parts.append(
                f'<line x1="{x}" y1="{y - 4}" x2="{x + 22}" y2="{y - 4}" '
                f'stroke="{color}" stroke-width="2.5"/>')
            self.parts.append(
                f'<text x="{x + 28}" y="{y}" font-family="sans-serif" '
                f'font-size="11">{label}</text>')
            y += 16

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


# -- marching squares -----------------------------------------------------

def marching_squares(xs: np.ndarray, ys: np.ndarray, Z: np.ndarray,
                     level: float):
    """Contour segments of Z (indexed Z[i, j] at (xs[i], ys[j])) at the
    given level, via linear edge interpolation."""
    segs = []
    nx, ny = Z.shape

    def interp(pa, pb, va, vb):
        t = 0.5 if vb == va else (level - va) / (vb - va)
        return (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))

    for i in range(nx - 1):
        for j in range(ny - 1):
            v = [Z[i, j], Z[i + 1, j], Z[i + 1, j + 1], Z[i, j + 1]]
            p = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                 (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            idx = sum(1 << k for k in range(4) if v[k] > level)
            if idx in (0, 15):
                continue
            edges = []
            for k in range(4):
                a, b = k, (k + 1) % 4
                if (v[a] > level) != (v[b] > level):
                    edges.append(interp(p[a], p[b], v[a], v[b]))
            if len(edges) == 2:
                segs.append((edges[0], edges[1]))
            elif len(edges) == 4:  # saddle: connect pairwise in edge order
                segs.append((edges[0], edges[1]))
                segs.append((edges[2], edges[3]))
    return segs


def cell_union_outline(mask: np.ndarray, points: np.ndarray, shape,
                       gamma: float):
    """Boundary segments of the union of grid cells selected by mask."""
    m = np.asarray(mask, dtype=bool).reshape(shape)
    half = gamma / 2.0
    segs = []
    nx, ny = shape
    centers = points.reshape(shape + (2,))
    for i in range(nx):
        for j in range(ny):
            if not m[i, j]:
                continue
            cx, cy = centers[i, j]
            if i == 0 or not m[i - 1, j]:
                segs.append(((cx - half, cy - half), (cx - half, cy + half)))
            if i == nx - 1 or not m[i + 1, j]:
                segs.append(((cx + half, cy - half), (cx + half, cy + half)))
            if j == 0 or not m[i, j - 1]:
                segs.append(((cx - half, cy - half), (cx + half, cy - half)))
            if j == ny - 1 or not m[i, j + 1]:
                segs.append(((cx - half, cy + half), (cx + half, cy + half)))
    return segs


def render_field(fn, domain, res: int = 200):
    """Evaluate a batch function over a res x res grid of the domain."""
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, res)
    ys = np.linspace(y0, y1, res)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    Z = fn(pts).reshape(res, res)
    return xs, ys, Z


def quantile_levels(Z: np.ndarray, k: int = 10):
    qs = np.linspace(0.08, 0.92, k)
    levels = sorted(set(float(np.quantile(Z, q)) for q in qs))
    return levels


def contour_figure(title, domain, xs, ys, Z, levels, overlays=(),
                   annotations=(), legend=()):
    canvas = SvgCanvas(domain[0], domain[1], title=title)
    for lv in levels:
        canvas.segments(marching_squares(xs, ys, Z, lv), COLOR_CONTOUR,
                        width=0.8)
    for segs, color in overlays:
        canvas.segments(segs, color)
    for i, text in enumerate(annotations):
        canvas.annotation(text, y_offset=14 * i)
    if legend:
        canvas.legend(legend)
    return canvas.render()


def phase_portrait_figure(title, domain, trajectories, overlays=(),
                          markers=(), annotations=(), legend=()):
    canvas = SvgCanvas(domain[0], domain[1], title=title)
    for traj in trajectories:
        canvas.polyline(traj, COLOR_FLOW, width=0.7, opacity=0.8)
    for segs, color in overlays:
        canvas.segments(segs, color)
    for (x, y), color in markers:
        canvas.marker(x, y, color)
    for i, text in enumerate(annotations):
        canvas.annotation(text, y_offset=14 * i)
    if legend:
        canvas.legend(legend)
    return canvas.render()
