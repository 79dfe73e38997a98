"""Self-contained SVG rendering of convergence trends.

Hand-rolled on purpose: the output must be a pure function of the report,
byte for byte, so no plotting library with embedded ids, timestamps, or
font probing is acceptable.  Everything is written with fixed two-decimal
coordinates.
"""

import math

WIDTH = 640.0
HEIGHT = 420.0
MARGIN_LEFT = 70.0
MARGIN_RIGHT = 20.0
MARGIN_TOP = 20.0
MARGIN_BOTTOM = 50.0

LINE_COLOR = "#1f6fb4"
BAND_COLOR = "#9ecae1"
AXIS_COLOR = "#333333"
GRID_COLOR = "#dddddd"


def _fmt(value: float) -> str:
    text = f"{value:.2f}"
    # avoid the two distinct zeros
    return "0.00" if text == "-0.00" else text


def _collect(report):
    rows = []
    for agg in report.aggregates:
        get = agg.get if isinstance(agg, dict) else lambda k, d=None: getattr(agg, k, d)
        median = get("median_distance")
        if median is None:
            continue
        rows.append((int(get("n")), float(median),
                     float(get("q10_distance", median)),
                     float(get("q90_distance", median))))
    rows.sort()
    return rows


def render_convergence(report, title: str = "median distance vs n") -> str:
    """Log-log median-distance trend with a decile band, as an SVG string."""
    rows = _collect(report)
    if len({n for n, *_ in rows}) < 2:
        raise ValueError("need at least two distinct sample sizes to plot")

    values = [v for _, m, lo, hi in rows for v in (m, lo, hi)]
    positive = [v for v in values if v > 0]
    floor = min(positive) / 2.0 if positive else 1e-12

    def logy(v: float) -> float:
        return math.log10(max(v, floor))

    xs = [math.log10(n) for n, *_ in rows]
    ys = [logy(v) for v in values]
    x_lo, x_hi = min(xs), max(xs)
    x_pad = 0.05 * (x_hi - x_lo)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = min(ys), max(ys)
    y_span = y_hi - y_lo
    y_pad = 0.05 * y_span if y_span > 0 else 0.5
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(WIDTH)}" '
        f'height="{_fmt(HEIGHT)}" viewBox="0 0 {_fmt(WIDTH)} {_fmt(HEIGHT)}">')
    parts.append(f'<rect width="{_fmt(WIDTH)}" height="{_fmt(HEIGHT)}" '
                 f'fill="#ffffff"/>')

    bottom = MARGIN_TOP + plot_h
    right = MARGIN_LEFT + plot_w

    # y grid lines and labels at powers of ten
    for k in range(math.ceil(y_lo), math.floor(y_hi) + 1):
        y = _fmt(py(float(k)))
        parts.append(f'<line x1="{_fmt(MARGIN_LEFT)}" y1="{y}" '
                     f'x2="{_fmt(right)}" y2="{y}" stroke="{GRID_COLOR}" '
                     f'stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(MARGIN_LEFT - 8)}" y="{y}" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="{AXIS_COLOR}" text-anchor="end" '
                     f'dominant-baseline="middle">1e{k}</text>')

    # x ticks at the observed sample sizes
    for n, *_ in rows:
        x = _fmt(px(math.log10(n)))
        parts.append(f'<line x1="{x}" y1="{_fmt(bottom)}" x2="{x}" '
                     f'y2="{_fmt(bottom + 5)}" stroke="{AXIS_COLOR}" '
                     f'stroke-width="1"/>')
        parts.append(f'<text x="{x}" y="{_fmt(bottom + 20)}" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="{AXIS_COLOR}" text-anchor="middle">{n}</text>')

    # decile band: upper edge left to right, lower edge back
    band = []
    for n, _, _, hi in rows:
        band.append(f"{_fmt(px(math.log10(n)))},{_fmt(py(logy(hi)))}")
    for n, _, lo, _ in reversed(rows):
        band.append(f"{_fmt(px(math.log10(n)))},{_fmt(py(logy(lo)))}")
    parts.append(f'<polygon points="{" ".join(band)}" fill="{BAND_COLOR}" '
                 f'fill-opacity="0.45" stroke="none"/>')

    median_pts = " ".join(
        f"{_fmt(px(math.log10(n)))},{_fmt(py(logy(m)))}" for n, m, _, _ in rows)
    parts.append(f'<polyline points="{median_pts}" fill="none" '
                 f'stroke="{LINE_COLOR}" stroke-width="2"/>')
    for n, m, _, _ in rows:
        parts.append(f'<circle cx="{_fmt(px(math.log10(n)))}" '
                     f'cy="{_fmt(py(logy(m)))}" r="4" fill="{LINE_COLOR}"/>')

    # axes frame
    parts.append(f'<rect x="{_fmt(MARGIN_LEFT)}" y="{_fmt(MARGIN_TOP)}" '
                 f'width="{_fmt(plot_w)}" height="{_fmt(plot_h)}" fill="none" '
                 f'stroke="{AXIS_COLOR}" stroke-width="1"/>')
    parts.append(f'<text x="{_fmt(MARGIN_LEFT + plot_w / 2)}" '
                 f'y="{_fmt(HEIGHT - 12)}" font-family="sans-serif" '
                 f'font-size="13" fill="{AXIS_COLOR}" '
                 f'text-anchor="middle">n</text>')
    parts.append(f'<text x="16" y="{_fmt(MARGIN_TOP + plot_h / 2)}" '
                 f'font-family="sans-serif" font-size="13" fill="{AXIS_COLOR}" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{_fmt(MARGIN_TOP + plot_h / 2)})">distance</text>')
    parts.append(f'<text x="{_fmt(MARGIN_LEFT + plot_w / 2)}" y="14" '
                 f'font-family="sans-serif" font-size="13" fill="{AXIS_COLOR}" '
                 f'text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
