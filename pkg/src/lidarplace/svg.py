"""Minimal dependency-free SVG plots (scatter and line)."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

W, H, PAD = 640, 480, 50


def color(i: int) -> str:
    if i < len(PALETTE):
        return PALETTE[i]
    # golden-angle hues beyond the base palette
    return f"hsl({(i * 137.508) % 360:.1f},65%,50%)"


def _scale(vals, lo_px, hi_px):
    lo, hi = min(vals), max(vals)
    span = hi - lo or 1.0
    return lambda v: lo_px + (v - lo) / span * (hi_px - lo_px)


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
        f'fill="none" stroke="black"/>',
    ]


def scatter(xs, ys, groups, title="", xlabel="x", ylabel="y") -> str:
    """One ``<circle>`` per point, filled by group index."""
    sx = _scale(list(xs), PAD + 5, W - PAD - 5)
    sy = _scale(list(ys), H - PAD - 5, PAD + 5)
    out = _frame(title, xlabel, ylabel)
    for x, y, g in zip(xs, ys, groups):
        out.append(f'<circle class="pt" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" '
                   f'fill="{color(int(g))}" data-group="{int(g)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_plot(series: dict, title="", xlabel="x", ylabel="y") -> str:
    """``series`` maps a label to ``(xs, ys)``; each becomes one ``<polyline>``."""
    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [y for _, ys in series.values() for y in ys] + [0.0]
    sx = _scale(all_x, PAD + 5, W - PAD - 5)
    sy = _scale(all_y, H - PAD - 5, PAD + 5)
    out = _frame(title, xlabel, ylabel)
    for i, (label, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline class="series" points="{pts}" fill="none" '
                   f'stroke="{color(i)}" stroke-width="2"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color(i)}"/>')
        out.append(f'<text x="{W - PAD - 5}" y="{PAD + 16 + 16 * i}" text-anchor="end" '
                   f'font-size="12" fill="{color(i)}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
