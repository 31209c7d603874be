"""Minimal static SVG charts: axes, points, lines, bands and bars.

Output is a pure function of the inputs (fixed number formatting, no
timestamps or ids), so regenerated files are byte-identical.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _f(x: float) -> str:
    return f"{x:.2f}"


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class Panel:
    """One plotting area with its own data-to-pixel mapping."""

    def __init__(self, x0, y0, width, height, xlim, ylim, title="", xlabel="", ylabel=""):
        self.x0, self.y0, self.w, self.h = x0, y0, width, height
        self.xlim, self.ylim = _pad(xlim), _pad(ylim)
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.items: list[str] = []

    def px(self, x):
        a, b = self.xlim
        return self.x0 + (x - a) / (b - a) * self.w

    def py(self, y):
        a, b = self.ylim
        return self.y0 + self.h - (y - a) / (b - a) * self.h

    def line(self, xs, ys, color="#000", width=1.0, dash=None):
        pts = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}/>')

    def points(self, xs, ys, color="#000", r=2.0, fill=None):
        fill = fill or color
        for x, y in zip(xs, ys):
            self.items.append(f'<circle cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="{r}" '
                              f'fill="{fill}" stroke="{color}"/>')

    def band(self, xs, lo, hi, color="#999", opacity=0.25):
        upper = [f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, hi)]
        lower = [f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(reversed(xs), reversed(lo))]
        self.items.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                          f'fill-opacity="{opacity}" stroke="none"/>')

    def rect(self, x, y, width, height, color="#ccc", opacity=1.0, stroke="#555"):
        """Rectangle in data coordinates anchored at (x, y) lower-left."""
        left, right = self.px(x), self.px(x + width)
        top, bottom = self.py(y + height), self.py(y)
        self.items.append(f'<rect x="{_f(left)}" y="{_f(top)}" width="{_f(right - left)}" '
                          f'height="{_f(bottom - top)}" fill="{color}" fill-opacity="{opacity}" '
                          f'stroke="{stroke}" stroke-width="0.5"/>')

    def text(self, x, y, s, size=10, anchor="middle"):
        self.items.append(f'<text x="{_f(self.px(x))}" y="{_f(self.py(y))}" font-size="{size}" '
                          f'text-anchor="{anchor}">{escape(s)}</text>')

    def render(self) -> list[str]:
        out = [f'<rect x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.w)}" height="{_f(self.h)}" '
               f'fill="none" stroke="#000" stroke-width="0.8"/>']
        for t in nice_ticks(*self.xlim):
            x = self.px(t)
            out.append(f'<line x1="{_f(x)}" y1="{_f(self.y0 + self.h)}" x2="{_f(x)}" '
                       f'y2="{_f(self.y0 + self.h + 4)}" stroke="#000"/>')
            out.append(f'<text x="{_f(x)}" y="{_f(self.y0 + self.h + 15)}" font-size="9" '
                       f'text-anchor="middle">{t:g}</text>')
        for t in nice_ticks(*self.ylim):
            y = self.py(t)
            out.append(f'<line x1="{_f(self.x0 - 4)}" y1="{_f(y)}" x2="{_f(self.x0)}" y2="{_f(y)}" '
                       f'stroke="#000"/>')
            out.append(f'<text x="{_f(self.x0 - 6)}" y="{_f(y + 3)}" font-size="9" '
                       f'text-anchor="end">{t:g}</text>')
        out.append("<g>")
        out += self.items
        out.append("</g>")
        cx = self.x0 + self.w / 2
        if self.title:
            out.append(f'<text x="{_f(cx)}" y="{_f(self.y0 - 8)}" font-size="12" '
                       f'text-anchor="middle">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{_f(cx)}" y="{_f(self.y0 + self.h + 32)}" font-size="10" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cy = self.y0 + self.h / 2
            out.append(f'<text x="{_f(self.x0 - 38)}" y="{_f(cy)}" font-size="10" text-anchor="middle" '
                       f'transform="rotate(-90 {_f(self.x0 - 38)} {_f(cy)})">{escape(self.ylabel)}</text>')
        return out


def _pad(lim, frac=0.05):
    lo, hi = float(lim[0]), float(lim[1])
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    d = (hi - lo) * frac
    return lo - d, hi + d


class Figure:
    def __init__(self, width=480, height=400):
        self.width, self.height = width, height
        self.panels: list[Panel] = []

    def panel(self, *args, **kwargs) -> Panel:
        p = Panel(*args, **kwargs)
        self.panels.append(p)
        return p

    def grid(self, nrows, ncols, xlims, ylims, titles=None, xlabel="", ylabel="",
             margin=(60, 40, 50, 20), gap=(60, 60)):
        """Regular grid of panels, filled row by row."""
        left, top, bottom, right = margin
        gw = (self.width - left - right - gap[0] * (ncols - 1)) / ncols
        gh = (self.height - top - bottom - gap[1] * (nrows - 1)) / nrows
        out = []
        for k in range(len(xlims)):
            r, c = divmod(k, ncols)
            out.append(self.panel(left + c * (gw + gap[0]), top + r * (gh + gap[1]), gw, gh,
                                  xlims[k], ylims[k], (titles or [""] * len(xlims))[k], xlabel, ylabel))
        return out

    def to_string(self) -> str:
        body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">',
                f'<rect width="{self.width}" height="{self.height}" fill="#fff"/>']
        for p in self.panels:
            body += p.render()
        body.append("</svg>")
        return "\n".join(body) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())
