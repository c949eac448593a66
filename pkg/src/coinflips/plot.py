"""Deterministic SVG figures rendered from the harness CSV files.

No plotting library is used; every coordinate is formatted with a fixed
number of decimals so identical data always yields identical bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

from .harness import SWEEP_COLUMNS, WEIGHT_SWEEP_COLUMNS, OMEGA_NAMES

HISTOGRAM_COLUMNS = ("outcome", "label", "count", "frequency", "exact", "target")

COLORS = ("#348ABD", "#E24A33", "#988ED5", "#777777", "#FBC15E", "#8EBA42")
LOG_FLOOR = 1e-12


class PlotDataError(ValueError):
    """CSV input that cannot be plotted."""


def _f(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.1e}"
    return f"{v:.4g}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.floor(lo / step + 1e-9)
    last = math.ceil(hi / step - 1e-9)
    return [round(i * step, 12) for i in range(first, last + 1)]


class Panel:
    """One set of axes inside an SVG canvas."""

    def __init__(self, x, y, width, height, title, xlabel, ylabel,
                 xrange, yrange, xlog=False, ylog=False, xcategories=None):
        self.x, self.y, self.w, self.h = x, y, width, height
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.xlog, self.ylog = xlog, ylog
        self.xcategories = xcategories
        self.xlo, self.xhi = xrange if xcategories else self._range(xrange, xlog)
        self.ylo, self.yhi = self._range(yrange, ylog)
        self.parts = []

    @staticmethod
    def _range(r, log):
        lo, hi = r
        if log:
            lo, hi = math.log10(max(lo, LOG_FLOOR)), math.log10(max(hi, LOG_FLOOR))
            lo, hi = math.floor(lo), math.ceil(hi)
            if hi == lo:
                hi = lo + 1
            return lo, hi
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        ticks = _nice_ticks(lo, hi)
        return ticks[0], ticks[-1]

    def px(self, v):
        if self.xlog:
            v = math.log10(max(v, LOG_FLOOR))
        return self.x + (v - self.xlo) / (self.xhi - self.xlo) * self.w

    def py(self, v):
        if self.ylog:
            v = math.log10(max(v, LOG_FLOOR))
        return self.y + self.h - (v - self.ylo) / (self.yhi - self.ylo) * self.h

    def scatter(self, xs, ys, color, r=2.5, opacity=0.6):
        for a, b in zip(xs, ys):
            self.parts.append(f'<circle cx="{_f(self.px(a))}" cy="{_f(self.py(b))}" r="{r}" '
                              f'fill="{color}" fill-opacity="{opacity}"/>')

    def line(self, xs, ys, color, width=2, dash=None):
        pts = " ".join(f"{_f(self.px(a))},{_f(self.py(b))}" for a, b in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}/>')

    def bars(self, xs, ys, color, width):
        base = self.py(max(self.ylo, 0.0) if not self.ylog else 10 ** self.ylo)
        for a, b in zip(xs, ys):
            top = self.py(b)
            self.parts.append(f'<rect x="{_f(self.px(a) - width / 2)}" y="{_f(top)}" '
                              f'width="{_f(width)}" height="{_f(base - top)}" fill="{color}"/>')

    def legend(self, entries):
        lx = self.x + self.w - 150
        for i, (label, color) in enumerate(entries):
            ly = self.y + 14 + 16 * i
            self.parts.append(f'<rect x="{_f(lx)}" y="{_f(ly - 9)}" width="10" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{_f(lx + 15)}" y="{_f(ly)}" font-size="11">{escape(label)}</text>')

    def _axis_ticks(self, lo, hi, log):
        if log:
            return [10.0 ** e for e in range(int(lo), int(hi) + 1)]
        return _nice_ticks(lo, hi)

    def render(self) -> str:
        out = [f'<g>',
               f'<rect x="{_f(self.x)}" y="{_f(self.y)}" width="{_f(self.w)}" height="{_f(self.h)}" '
               f'fill="none" stroke="#444" stroke-width="1"/>',
               f'<text x="{_f(self.x + self.w / 2)}" y="{_f(self.y - 10)}" text-anchor="middle" '
               f'font-size="14" font-weight="bold">{escape(self.title)}</text>',
               f'<text x="{_f(self.x + self.w / 2)}" y="{_f(self.y + self.h + 38)}" text-anchor="middle" '
               f'font-size="12">{escape(self.xlabel)}</text>',
               f'<text transform="translate({_f(self.x - 58)},{_f(self.y + self.h / 2)}) rotate(-90)" '
               f'text-anchor="middle" font-size="12">{escape(self.ylabel)}</text>']
        if self.xcategories:
            xticks = [(i, lab) for i, lab in enumerate(self.xcategories)]
        else:
            xticks = [(t, _tick_label(t)) for t in self._axis_ticks(self.xlo, self.xhi, self.xlog)]
        for t, lab in xticks:
            x = self.px(t)
            yb = self.y + self.h
            out.append(f'<line x1="{_f(x)}" y1="{_f(yb)}" x2="{_f(x)}" y2="{_f(yb + 5)}" stroke="#444"/>')
            out.append(f'<text x="{_f(x)}" y="{_f(yb + 18)}" text-anchor="middle" font-size="10">{escape(lab)}</text>')
        for t in self._axis_ticks(self.ylo, self.yhi, self.ylog):
            y = self.py(t)
            out.append(f'<line x1="{_f(self.x - 5)}" y1="{_f(y)}" x2="{_f(self.x)}" y2="{_f(y)}" stroke="#444"/>')
            out.append(f'<line x1="{_f(self.x)}" y1="{_f(y)}" x2="{_f(self.x + self.w)}" y2="{_f(y)}" '
                       f'stroke="#ddd" stroke-width="0.5"/>')
            out.append(f'<text x="{_f(self.x - 8)}" y="{_f(y + 3)}" text-anchor="end" font-size="10">'
                       f'{_tick_label(t)}</text>')
        out.extend(self.parts)
        out.append("</g>")
        return "\n".join(out)


def _document(width, height, title, panels) -> str:
    body = "\n".join(p.render() for p in panels)
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n'
            f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16" '
            f'font-weight="bold">{escape(title)}</text>\n'
            f"{body}\n</svg>\n")


# -- figures -------------------------------------------------------------------

def sweep_svg(rows: list) -> str:
    """KL and total energy vs sample size; per-trial points plus trial means."""
    sizes = sorted({int(r["sample_size"]) for r in rows})
    by_size = {n: [r for r in rows if int(r["sample_size"]) == n] for n in sizes}
    kl = {n: [float(r["kl_nats"]) for r in rs] for n, rs in by_size.items()}
    en = {n: [float(r["total_energy_fj"]) for r in rs] for n, rs in by_size.items()}
    device = rows[0]["device"]
    all_kl = [v for vs in kl.values() for v in vs]
    all_en = [v for vs in en.values() for v in vs]
    xr = (0.0, max(sizes))
    top = Panel(90, 60, 620, 240, "KL divergence vs samples", "number of samples",
                "KL divergence (nats)", xr, (0.0, max(all_kl)))
    bottom = Panel(90, 380, 620, 240, "Energy vs samples", "number of samples",
                   "total energy (fJ)", xr, (0.0, max(all_en)))
    for panel, data, color in ((top, kl, COLORS[0]), (bottom, en, COLORS[1])):
        for n in sizes:
            panel.scatter([n] * len(data[n]), data[n], color)
        panel.line(sizes, [sum(data[n]) / len(data[n]) for n in sizes], color)
        panel.legend([("trials", color), ("trial mean", "#444")])
    return _document(800, 680, f"Sample-size sweep ({device})", [top, bottom])


def histogram_svg(rows: list) -> str:
    """Empirical outcome frequencies as bars with the target overlaid."""
    rows = sorted(rows, key=lambda r: int(r["outcome"]))
    labels = [f'{r["outcome"]} ({r["label"]})' for r in rows]
    freq = [float(r["frequency"]) for r in rows]
    target = [float(r["target"]) for r in rows]
    exact = [float(r["exact"]) for r in rows]
    total = sum(int(r["count"]) for r in rows)
    ymax = 1.1 * max(freq + target + exact)
    panel = Panel(90, 60, 620, 320, f"Empirical distribution, {total} samples", "outcome",
                  "probability", (-0.5, len(rows) - 0.5), (0.0, ymax), xcategories=labels)
    xs = list(range(len(rows)))
    panel.bars(xs, freq, COLORS[0], 60)
    panel.scatter(xs, target, COLORS[1], r=5, opacity=1.0)
    panel.scatter(xs, exact, COLORS[2], r=3, opacity=1.0)
    panel.legend([("empirical", COLORS[0]), ("target", COLORS[1]), ("exact circuit", COLORS[2])])
    return _document(800, 460, "Outcome histogram vs target", [panel])


def weight_sweep_svg(rows: list) -> str:
    """Best KL (top row) and energy (bottom row) against each varied weight."""
    panels = []
    varied = [o for o in OMEGA_NAMES if any(r["varied_omega"] == o for r in rows)]
    width = 250
    for col, omega in enumerate(varied):
        sub = [r for r in rows if r["varied_omega"] == omega]
        xs = [float(r[omega]) for r in sub]
        xr = (min(xs), max(xs))
        xlog = min(xs) > 0
        for row, (key, label, color) in enumerate((("best_kl_nats", "best KL (nats)", COLORS[0]),
                                                    ("best_energy_fj", "best energy (fJ)", COLORS[1]))):
            ys = [float(r[key]) for r in sub]
            ylog = key == "best_kl_nats"
            yr = (min(ys), max(ys)) if ylog else (0.0, max(ys))
            p = Panel(80 + col * (width + 90), 60 + row * 300, width, 220, f"varying {omega}",
                      omega, label, xr, yr, xlog=xlog, ylog=ylog)
            p.scatter(xs, ys, color, r=3)
            grid = sorted(set(xs))
            p.line(grid, [min(y for x, y in zip(xs, ys) if x == g) for g in grid], color, width=1.5)
            panels.append(p)
    return _document(80 + len(varied) * (width + 90), 640, "Objective-weight tradeoff", panels)


def _read_csv(path: Path) -> tuple:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PlotDataError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    if not reader.fieldnames:
        raise PlotDataError(f"{path} is empty")
    rows = list(reader)
    if not rows:
        raise PlotDataError(f"{path} has no data rows")
    return tuple(reader.fieldnames), rows


def render_csv(path) -> str:
    """Pick the figure type from the CSV header and render it."""
    header, rows = _read_csv(path)
    try:
        if header == SWEEP_COLUMNS:
            return sweep_svg(rows)
        if header == HISTOGRAM_COLUMNS:
            return histogram_svg(rows)
        if header == WEIGHT_SWEEP_COLUMNS:
            return weight_sweep_svg(rows)
    except (KeyError, TypeError, ValueError) as exc:
        raise PlotDataError(f"malformed row in {path}: {exc}") from exc
    raise PlotDataError(f"{path}: unrecognized CSV columns {list(header)}")
