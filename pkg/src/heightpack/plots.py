"""Dependency-free SVG output: learning curves and board grids.

Output is plain text with fixed number formatting so identical inputs give
identical bytes.
"""

from __future__ import annotations

from html import escape

from .env import PackingEnv

PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")
PIECE_COLOURS = ("#ffffff", "#59a14f", "#8cd17d", "#edc948", "#f1ce63", "#4e79a7", "#a0cbe8")


def _n(v: float) -> str:
    return f"{v:.2f}"


def svg_curves(series: dict[str, list[tuple[float, float]]], title: str, ylabel: str,
               width: int = 640, height: int = 360) -> str:
    left, right, top, bottom = 60, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    points = [p for pts in series.values() for p in pts]
    if points:
        x0, x1 = min(p[0] for p in points), max(p[0] for p in points)
        y0, y1 = min(p[1] for p in points), max(p[1] for p in points)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>']
    for frac in (0.0, 0.5, 1.0):
        yv = y0 + frac * (y1 - y0)
        xv = x0 + frac * (x1 - x0)
        out.append(f'<text x="{left - 4}" y="{_n(sy(yv) + 4)}" text-anchor="end">{yv:.4g}</text>')
        out.append(f'<text x="{_n(sx(xv))}" y="{top + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.0f}" y="{height - 6}" text-anchor="middle">steps</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.0f})">{escape(ylabel)}</text>')
    for i, (name, pts) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        if pts:
            coords = " ".join(f"{_n(sx(x))},{_n(sy(y))}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        ly = top + 12 + 14 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_boards(env: PackingEnv, cell: int = 24, title: str = "") -> str:
    """Boards side by side, one coloured square per occupied cell, labelled by piece type."""
    gap, top = cell, 30 if title else 10
    widths = [s.width * cell for s in env.specs]
    total_w = sum(widths) + gap * (len(widths) + 1)
    total_h = max(s.length for s in env.specs) * cell + top + 30
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
           f'font-family="sans-serif" font-size="{cell // 2}">',
           f'<rect width="{total_w}" height="{total_h}" fill="white"/>']
    if title:
        out.append(f'<text x="{total_w / 2:.0f}" y="18" text-anchor="middle">{escape(title)}</text>')
    ox = gap
    for b, (board, spec) in enumerate(zip(env.boards, env.specs)):
        for x in range(spec.length):
            for y in range(spec.width):
                label = int(board.labels[x, y])
                colour = PIECE_COLOURS[label % len(PIECE_COLOURS)]
                px, py = ox + y * cell, top + x * cell
                out.append(f'<rect x="{px}" y="{py}" width="{cell}" height="{cell}" '
                           f'fill="{colour}" stroke="#555"/>')
                if label:
                    out.append(f'<text x="{px + cell / 2:.0f}" y="{py + cell * 0.7:.0f}" '
                               f'text-anchor="middle">{label}</text>')
        out.append(f'<text x="{ox}" y="{top + spec.length * cell + 18}">board {b} '
                   f'(h={spec.height_limit:g})</text>')
        ox += widths[b] + gap
    out.append("</svg>")
    return "\n".join(out) + "\n"
