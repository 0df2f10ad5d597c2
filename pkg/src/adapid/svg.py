"""Minimal SVG line charts with a logarithmic y axis."""
from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _log(v, floor):
    return np.log10(np.maximum(np.asarray(v, dtype=float), floor))


def line_chart(x, series: dict, markers=None, title: str = "", floor: float = 1e-16) -> str:
    """Polyline chart of ``log10`` of each series against ``x``.

    Parameters
    ----------
    series : dict
        Label to y-values; values below ``floor`` are clipped to it.
    markers : array_like of bool, optional
        Positions marked with a red cross on the first series.
    """
    x = np.asarray(x, dtype=float)
    logs = {k: _log(v, floor) for k, v in series.items()}
    lo = min(float(v.min()) for v in logs.values())
    hi = max(float(v.max()) for v in logs.values())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    x0, x1 = float(x.min()), float(x.max())
    if x1 == x0:
        x1 = x0 + 1.0

    def px(xv):
        return MARGIN + (np.asarray(xv) - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def py(yv):
        return HEIGHT - MARGIN - (np.asarray(yv) - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
           f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>']
    for dec in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
        y = py(dec)
        out.append(f'<text x="{MARGIN - 6}" y="{y + 4:.1f}" text-anchor="end" '
                   f'font-size="10">1e{dec}</text>')
    out.append(f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 16}" font-size="10">{x0:g}</text>')
    out.append(f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="end" '
               f'font-size="10">{x1:g}</text>')
    for i, (label, ys) in enumerate(logs.items()):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x), py(ys)))
        out.append(f'<polyline class="series" data-label="{label}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 * i}" text-anchor="end" '
                   f'font-size="11" fill="{color}">{label}</text>')
    if markers is not None:
        first = next(iter(logs.values()))
        for j in np.nonzero(np.asarray(markers, dtype=bool))[0]:
            cx, cy = float(px(x[j])), float(py(first[j]))
            out.append(f'<path class="violation" d="M{cx - 4:.2f},{cy - 4:.2f}L{cx + 4:.2f},'
                       f'{cy + 4:.2f}M{cx - 4:.2f},{cy + 4:.2f}L{cx + 4:.2f},{cy - 4:.2f}" '
                       f'stroke="red" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
