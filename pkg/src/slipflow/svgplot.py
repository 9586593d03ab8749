"""Small native SVG line/scatter plots (no plotting dependency).

CSV files are the data contract; these plots are a convenience for eyeing
wall profiles, constitutive-relation scatters and probe histories.  Output
is deterministic: fixed canvas, fixed tick logic, fixed color cycle.
"""

from __future__ import annotations

import math

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo: float, hi: float, target: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    t0 = math.ceil(lo / step) * step
    out = []
    t = t0
    while t <= hi + 1e-12 * span:
        out.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return out


class SvgPlot:
    """Polyline/scatter plot with axes, ticks and a legend."""

    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "",
                 width: int = 640, height: int = 480):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.width = width
        self.height = height
        self.series = []          # (kind, x, y, label, color)

    def _color(self):
        return COLORS[len(self.series) % len(COLORS)]

    def add_line(self, x, y, label: str = "", color: str = ""):
        self.series.append(
            ("line", [float(v) for v in x], [float(v) for v in y],
             label, color or self._color())
        )

    def add_scatter(self, x, y, label: str = "", color: str = ""):
        self.series.append(
            ("scatter", [float(v) for v in x], [float(v) for v in y],
             label, color or self._color())
        )

    def save(self, path) -> None:
        ml, mr, mt, mb = 70, 20, 40, 50
        pw = self.width - ml - mr
        ph = self.height - mt - mb

        xs = [v for s in self.series for v in s[1]] or [0.0, 1.0]
        ys = [v for s in self.series for v in s[2]] or [0.0, 1.0]
        xlo, xhi = min(xs), max(xs)
        ylo, yhi = min(ys), max(ys)
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0
        padx = 0.05 * (xhi - xlo)
        pady = 0.05 * (yhi - ylo)
        xlo, xhi = xlo - padx, xhi + padx
        ylo, yhi = ylo - pady, yhi + pady

        def X(v):
            return ml + (v - xlo) / (xhi - xlo) * pw

        def Y(v):
            return mt + ph - (v - ylo) / (yhi - ylo) * ph

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
            f'stroke="black" stroke-width="1"/>',
        ]
        if self.title:
            parts.append(
                f'<text x="{self.width/2:.1f}" y="{mt-15}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="15">{self.title}</text>'
            )
        for tv in _ticks(xlo, xhi):
            px = X(tv)
            parts.append(
                f'<line x1="{px:.2f}" y1="{mt+ph}" x2="{px:.2f}" '
                f'y2="{mt+ph+5}" stroke="black"/>'
            )
            parts.append(
                f'<text x="{px:.2f}" y="{mt+ph+18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{tv:g}</text>'
            )
        for tv in _ticks(ylo, yhi):
            py = Y(tv)
            parts.append(
                f'<line x1="{ml-5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" '
                f'stroke="black"/>'
            )
            parts.append(
                f'<text x="{ml-8}" y="{py+4:.2f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{tv:g}</text>'
            )
        if self.xlabel:
            parts.append(
                f'<text x="{ml+pw/2:.1f}" y="{self.height-12}" '
                f'text-anchor="middle" font-family="sans-serif" '
                f'font-size="13">{self.xlabel}</text>'
            )
        if self.ylabel:
            parts.append(
                f'<text x="18" y="{mt+ph/2:.1f}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="13" '
                f'transform="rotate(-90 18 {mt+ph/2:.1f})">{self.ylabel}</text>'
            )

        for kind, sx, sy, label, color in self.series:
            if kind == "line":
                pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(sx, sy))
                parts.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"/>'
                )
            else:
                for a, b in zip(sx, sy):
                    parts.append(
                        f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="2.4" '
                        f'fill="{color}"/>'
                    )
        ly = mt + 14
        for kind, _, _, label, color in self.series:
            if not label:
                continue
            parts.append(
                f'<line x1="{ml+pw-130}" y1="{ly-4}" x2="{ml+pw-106}" '
                f'y2="{ly-4}" stroke="{color}" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{ml+pw-100}" y="{ly}" font-family="sans-serif" '
                f'font-size="11">{label}</text>'
            )
            ly += 16
        parts.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
