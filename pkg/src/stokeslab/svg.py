"""Minimal static SVG line charts (no plotting dependency)."""

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + k * step for k in range(n)]


def write_line_chart(path, series, title="", xlabel="", ylabel="",
                     width=640, height=420, logy=False):
    """Write a polyline chart.  ``series`` is a list of (label, xs, ys)."""
    import math

    ml, mr, mt, mb = 64, 16, 34, 44
    pw, ph = width - ml - mr, height - mt - mb

    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    if logy:
        ys_all = [math.log10(max(y, 1e-300)) for y in ys_all]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        if logy:
            y = math.log10(max(y, 1e-300))
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" font-family="monospace" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
           f'stroke="#444"/>']
    if title:
        out.append(f'<text x="{width / 2}" y="18" text-anchor="middle" '
                   f'font-size="13">{title}</text>')
    for tx in _ticks(x0, x1):
        out.append(f'<line x1="{sx(tx):.1f}" y1="{mt + ph}" x2="{sx(tx):.1f}" '
                   f'y2="{mt + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{sx(tx):.1f}" y="{mt + ph + 16}" '
                   f'text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(y0, y1):
        yy = mt + ph - (ty - y0) / (y1 - y0) * ph
        label = f"1e{ty:.1f}" if logy else f"{ty:.3g}"
        out.append(f'<line x1="{ml - 4}" y1="{yy:.1f}" x2="{ml}" y2="{yy:.1f}" '
                   f'stroke="#444"/>')
        out.append(f'<text x="{ml - 7}" y="{yy + 4:.1f}" '
                   f'text-anchor="end">{label}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" '
                   f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {mt + ph / 2})">{ylabel}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        if label:
            out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * k}" '
                       f'fill="{color}">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))
