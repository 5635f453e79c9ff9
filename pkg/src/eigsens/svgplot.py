"""Self-contained SVG plots rendered directly from result tables.

No plotting dependency: the renderer is a pure function of the rows, so
identical rows produce byte-identical SVG files.  Three kinds are
supported: ``overlap`` (mean |overlap| against k, log-compressed k
axis), ``variance`` (log-log variance scaling with a reference slope
-1/3 guide line), and ``collapse`` (mean overlap against the multiplier
k / N^(5/3), one curve per N).
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import DomainError
from .experiments import ResultRow

_WIDTH, _HEIGHT = 640.0, 440.0
_LEFT, _RIGHT, _TOP, _BOTTOM = 70.0, 170.0, 40.0, 55.0

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
    '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
    f'<svg version="1.1" width="{_WIDTH:.0f}" height="{_HEIGHT:.0f}" '
    f'viewBox="0 0 {_WIDTH:.0f} {_HEIGHT:.0f}" '
    'xmlns="http://www.w3.org/2000/svg">\n'
)


class _Frame:
    """Maps data coordinates to pixel coordinates inside the axes box."""

    def __init__(self, xs, ys):
        self.x0, self.x1 = self._padded(min(xs), max(xs))
        self.y0, self.y1 = self._padded(min(ys), max(ys))
        self.px0, self.px1 = _LEFT, _WIDTH - _RIGHT
        self.py0, self.py1 = _HEIGHT - _BOTTOM, _TOP

    @staticmethod
    def _padded(lo, hi):
        if hi <= lo:
            pad = 0.5 if lo == 0 else abs(lo) * 0.1 + 1e-12
            return lo - pad, hi + pad
        pad = (hi - lo) * 0.06
        return lo - pad, hi + pad

    def x(self, v):
        return self.px0 + (v - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def y(self, v):
        return self.py0 + (v - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _axes(frame, x_label, y_label, title):
    parts = [
        f'<rect x="{frame.px0:.2f}" y="{frame.py1:.2f}" '
        f'width="{frame.px1 - frame.px0:.2f}" height="{frame.py0 - frame.py1:.2f}" '
        'fill="none" stroke="#202020" stroke-width="1"/>\n'
    ]
    for v in _ticks(frame.x0, frame.x1):
        px = frame.x(v)
        parts.append(
            f'<line x1="{px:.2f}" y1="{frame.py0:.2f}" x2="{px:.2f}" '
            f'y2="{frame.py0 + 5:.2f}" stroke="#202020" stroke-width="1"/>\n'
            f'<text x="{px:.2f}" y="{frame.py0 + 18:.2f}" font-size="11" '
            f'text-anchor="middle" font-family="monospace">{v:.3g}</text>\n'
        )
    for v in _ticks(frame.y0, frame.y1):
        py = frame.y(v)
        parts.append(
            f'<line x1="{frame.px0 - 5:.2f}" y1="{py:.2f}" x2="{frame.px0:.2f}" '
            f'y2="{py:.2f}" stroke="#202020" stroke-width="1"/>\n'
            f'<text x="{frame.px0 - 8:.2f}" y="{py + 4:.2f}" font-size="11" '
            f'text-anchor="end" font-family="monospace">{v:.3g}</text>\n'
        )
    parts.append(
        f'<text x="{(frame.px0 + frame.px1) / 2:.2f}" y="{_HEIGHT - 12:.2f}" '
        f'font-size="13" text-anchor="middle" font-family="monospace">{x_label}</text>\n'
        f'<text x="16" y="{(frame.py0 + frame.py1) / 2:.2f}" font-size="13" '
        f'text-anchor="middle" font-family="monospace" '
        f'transform="rotate(-90 16 {(frame.py0 + frame.py1) / 2:.2f})">{y_label}</text>\n'
        f'<text x="{(frame.px0 + frame.px1) / 2:.2f}" y="24" font-size="14" '
        f'text-anchor="middle" font-family="monospace">{title}</text>\n'
    )
    return parts


def _series_svg(frame, series):
    parts = []
    for s_idx, (label, points) in enumerate(series):
        color = _PALETTE[s_idx % len(_PALETTE)]
        pts = sorted(points)
        if len(pts) >= 2:
            joined = " ".join(f"{frame.x(x):.2f},{frame.y(y):.2f}" for x, y, _ in pts)
            parts.append(
                f'<polyline points="{joined}" fill="none" stroke="{color}" '
                'stroke-width="1.5"/>\n'
            )
        for x, y, se in pts:
            px, py = frame.x(x), frame.y(y)
            if se > 0:
                y_lo, y_hi = frame.y(y - 2 * se), frame.y(y + 2 * se)
                parts.append(
                    f'<line x1="{px:.2f}" y1="{y_lo:.2f}" x2="{px:.2f}" '
                    f'y2="{y_hi:.2f}" stroke="{color}" stroke-width="1"/>\n'
                )
            parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}"/>\n'
            )
        legend_y = _TOP + 16 * s_idx + 10
        parts.append(
            f'<rect x="{_WIDTH - _RIGHT + 12:.2f}" y="{legend_y - 8:.2f}" width="10" '
            f'height="10" fill="{color}"/>\n'
            f'<text x="{_WIDTH - _RIGHT + 27:.2f}" y="{legend_y + 1:.2f}" font-size="11" '
            f'font-family="monospace">{label}</text>\n'
        )
    return parts


def _collect(rows, statistic, x_of):
    series = {}
    for row in rows:
        if row.statistic != statistic:
            continue
        x = x_of(row)
        if x is None or not math.isfinite(row.mean):
            continue
        series.setdefault(row.N, []).append((x, row.mean, row.stderr))
    return [(f"N={n}", pts) for n, pts in sorted(series.items())]


def emit_plot(rows: Sequence[ResultRow], kind: str, out_path) -> str:
    """Render the rows as an SVG file; returns the written path."""
    if kind == "overlap":
        series = _collect(rows, "overlap_abs", lambda r: math.log10(1 + r.k))
        x_label, y_label = "log10(1 + k)", "mean |overlap|"
        guide = None
    elif kind == "variance":
        series = _collect(
            rows,
            "lambda_var",
            lambda r: math.log10(r.N) if r.N > 0 and r.mean > 0 else None,
        )
        series = [
            (label, [(x, math.log10(y), se / (y * math.log(10))) for x, y, se in pts])
            for label, pts in series
        ]
        x_label, y_label = "log10 N", "log10 Var(lambda)"
        guide = -1.0 / 3.0
    elif kind == "collapse":
        series = _collect(
            rows,
            "overlap_abs",
            lambda r: math.log10(r.multiplier)
            if math.isfinite(r.multiplier) and r.multiplier > 0
            else None,
        )
        x_label, y_label = "log10 multiplier", "mean |overlap|"
        guide = None
    else:
        raise DomainError(f"unknown plot kind {kind!r}")

    points = [p for _, pts in series for p in pts]
    if not points:
        raise DomainError(f"no plottable rows for kind {kind!r}")
    frame = _Frame([p[0] for p in points], [p[1] for p in points])

    parts = [_HEADER]
    parts.extend(_axes(frame, x_label, y_label, f"eigsens {kind}"))
    if guide is not None:
        x_anchor, y_anchor, _ = sorted(points)[0]
        x_end = frame.x1
        y_end = y_anchor + guide * (x_end - x_anchor)
        parts.append(
            f'<line x1="{frame.x(x_anchor):.2f}" y1="{frame.y(y_anchor):.2f}" '
            f'x2="{frame.x(x_end):.2f}" y2="{frame.y(y_end):.2f}" '
            'stroke="#707070" stroke-width="1" stroke-dasharray="5,4"/>\n'
            f'<text x="{frame.x(x_end) - 4:.2f}" y="{frame.y(y_end) - 6:.2f}" '
            'font-size="11" text-anchor="end" font-family="monospace" '
            'fill="#707070">slope -1/3</text>\n'
        )
    parts.extend(_series_svg(frame, series))
    parts.append("</svg>\n")

    data = "".join(parts)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(data)
    return str(out_path)
