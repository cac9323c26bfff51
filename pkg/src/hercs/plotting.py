"""Dependency-free SVG line chart: mean curve plus shaded min-max band per series."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]

WIDTH, HEIGHT = 760, 460
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 50, 60


def band_chart_svg(
    series: Mapping[str, Mapping[str, Sequence[float]]],
    title: str = "",
    x_label: str = "epoch",
    y_label: str = "success rate",
) -> str:
    """Render series ``{name: {"x", "mean", "min", "max"}}`` on a [0, 1] y-axis."""
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM
    xs_all = [x for s in series.values() for x in s["x"]]
    x_lo = min(xs_all) if xs_all else 0
    x_hi = max(xs_all) if xs_all else 1
    if x_hi == x_lo:
        x_hi = x_lo + 1

    def px(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return TOP + (1.0 - y) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{LEFT + plot_w / 2:.1f}" y="28" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]
    for i in range(6):
        y = i / 5
        out.append(f'<line x1="{LEFT}" y1="{py(y):.1f}" x2="{LEFT + plot_w}" y2="{py(y):.1f}" '
                   'stroke="#e5e5e5"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py(y) + 4:.1f}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{y:.1f}</text>')
    for i in range(6):
        x = x_lo + (x_hi - x_lo) * i / 5
        out.append(f'<text x="{px(x):.1f}" y="{TOP + plot_h + 18}" text-anchor="middle" '
                   f'font-size="11" font-family="sans-serif">{x:g}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" '
               'stroke="#333333"/>')
    out.append(f'<text x="{LEFT + plot_w / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle" '
               f'font-size="13" font-family="sans-serif">{escape(x_label)}</text>')
    out.append(f'<text x="18" y="{TOP + plot_h / 2:.1f}" text-anchor="middle" font-size="13" '
               f'font-family="sans-serif" transform="rotate(-90 18 {TOP + plot_h / 2:.1f})">'
               f'{escape(y_label)}</text>')

    for i, (name, s) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        xs = list(s["x"])
        upper = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, s["max"]))
        lower = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(reversed(xs), reversed(list(s["min"]))))
        out.append(f'<polygon class="band" data-series="{escape(name)}" points="{upper} {lower}" '
                   f'fill="{color}" fill-opacity="0.2" stroke="none"/>')
        mean = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, s["mean"]))
        out.append(f'<polyline class="mean" data-series="{escape(name)}" points="{mean}" '
                   f'fill="none" stroke="{color}" stroke-width="2"/>')
        ly = TOP + 16 + 20 * i
        lx = LEFT + plot_w + 16
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}" font-size="12" font-family="sans-serif">'
                   f'{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_band_chart(path, series, title: str = "", **kwargs) -> Path:
    path = Path(path)
    path.write_text(band_chart_svg(series, title=title, **kwargs))
    return path
