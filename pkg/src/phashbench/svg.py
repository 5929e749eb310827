"""Minimal deterministic SVG charts (no plotting dependency, stable bytes)."""

from __future__ import annotations

_WIDTH = 640
_HEIGHT = 400
_MARGIN = 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _scale(vals: list[float]) -> tuple[float, float]:
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        pad = max(abs(hi), 1.0) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def line_chart(
    series: list[tuple[str, list[tuple[float, float]]]],
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    """Multi-series line chart; input order fixes colors and legend order."""
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    if not xs:
        raise ValueError("no points to chart")
    x0, x1 = _scale(xs)
    y0, y1 = _scale(ys)
    iw = _WIDTH - 2 * _MARGIN
    ih = _HEIGHT - 2 * _MARGIN

    def px(x: float) -> float:
        return _MARGIN + (x - x0) / (x1 - x0) * iw

    def py(y: float) -> float:
        return _HEIGHT - _MARGIN - (y - y0) / (y1 - y0) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{_HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT / 2:.1f})">{y_label}</text>',
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
    ]
    for t in range(5):
        xv = x0 + (x1 - x0) * t / 4
        yv = y0 + (y1 - y0) * t / 4
        parts.append(
            f'<text x="{px(xv):.1f}" y="{_HEIGHT - _MARGIN + 16}" text-anchor="middle" '
            f'font-size="10">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" '
            f'font-size="10">{yv:.3g}</text>'
        )
    for i, (label, pts) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in pts:
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        ly = _MARGIN + 16 * i
        parts.append(
            f'<rect x="{_WIDTH - _MARGIN - 120}" y="{ly - 9}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_WIDTH - _MARGIN - 104}" y="{ly + 1}" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart(labels: list[str], values: list[float], title: str, y_label: str) -> str:
    """Single-series bar chart with labels under each bar."""
    if not labels or len(labels) != len(values):
        raise ValueError("labels and values must be non-empty and equal length")
    y0 = min(0.0, min(values))
    y1 = max(values) if max(values) > 0 else 1.0
    y1 += (y1 - y0) * 0.05 or 0.1
    iw = _WIDTH - 2 * _MARGIN
    ih = _HEIGHT - 2 * _MARGIN
    slot = iw / len(labels)

    def py(y: float) -> float:
        return _HEIGHT - _MARGIN - (y - y0) / (y1 - y0) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="16" y="{_HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT / 2:.1f})">{y_label}</text>',
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
    ]
    for i, (label, val) in enumerate(zip(labels, values)):
        x = _MARGIN + slot * i + slot * 0.15
        w = slot * 0.7
        top = py(val)
        parts.append(
            f'<rect x="{x:.2f}" y="{top:.2f}" width="{w:.2f}" '
            f'height="{py(y0) - top:.2f}" fill="{_COLORS[0]}"/>'
        )
        parts.append(
            f'<text x="{x + w / 2:.2f}" y="{_HEIGHT - _MARGIN + 16}" text-anchor="middle" '
            f'font-size="10">{label}</text>'
        )
        parts.append(
            f'<text x="{x + w / 2:.2f}" y="{top - 4:.2f}" text-anchor="middle" '
            f'font-size="10">{val:.3g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
