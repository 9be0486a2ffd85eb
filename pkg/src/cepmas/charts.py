"""Native SVG grouped-bar charts for experiment outputs.

No plotting dependency: the experiment CSVs stay the primary artifact and
these charts are quick visual summaries of the same tables.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#2a6fd6", "#8b97a5", "#2e9e4f", "#d9a400", "#7048c9", "#0ca3b7")


def grouped_bar_svg(
    title: str,
    unit: str,
    groups: list[tuple[str, dict[str, float]]],
    width: int = 720,
    height: int = 400,
) -> str:
    """Render groups of labelled bars; series share colors across groups."""
    if not groups:
        raise ValueError("at least one group is required")
    series: list[str] = []
    for _, values in groups:
        for name in values:
            if name not in series:
                series.append(name)
    peak = max((v for _, values in groups for v in values.values()), default=0.0)
    peak = peak if peak > 0 else 1.0

    margin_left, margin_right = 64, 16
    margin_top, margin_bottom = 48, 64
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom
    group_w = plot_w / len(groups)
    bar_w = max(4.0, group_w * 0.8 / max(1, len(series)))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]
    # Horizontal gridlines with axis labels.
    for i in range(5):
        value = peak * i / 4
        y = margin_top + plot_h - plot_h * i / 4
        parts.append(
            f'<line x1="{margin_left}" y1="{y:.1f}" x2="{width - margin_right}" '
            f'y2="{y:.1f}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{margin_left - 6}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{value:g}</text>'
        )
    parts.append(
        f'<text x="14" y="{margin_top - 10}" font-family="sans-serif" '
        f'font-size="10">{escape(unit)}</text>'
    )
    for g, (label, values) in enumerate(groups):
        base_x = margin_left + g * group_w + group_w * 0.1
        for s, name in enumerate(series):
            value = values.get(name)
            if value is None:
                continue
            bar_h = plot_h * value / peak
            x = base_x + s * bar_w
            y = margin_top + plot_h - bar_h
            color = PALETTE[s % len(PALETTE)]
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w * 0.92:.1f}" '
                f'height="{bar_h:.1f}" fill="{color}">'
                f"<title>{escape(f'{label} / {name}: {value:g} {unit}')}</title></rect>"
            )
        parts.append(
            f'<text x="{margin_left + g * group_w + group_w / 2:.1f}" '
            f'y="{margin_top + plot_h + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{escape(label)}</text>'
        )
    # Legend row.
    legend_x = margin_left
    legend_y = height - 18
    for s, name in enumerate(series):
        color = PALETTE[s % len(PALETTE)]
        parts.append(
            f'<rect x="{legend_x}" y="{legend_y - 9}" width="10" height="10" '
            f'fill="{color}"/>'
        )
        parts.append(
            f'<text x="{legend_x + 14}" y="{legend_y}" font-family="sans-serif" '
            f'font-size="11">{escape(name)}</text>'
        )
        legend_x += 14 + 8 * len(name) + 18
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
