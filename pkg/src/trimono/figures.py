"""Standalone SVG drawing of the triangle, a moving line, and a moving domain."""
from __future__ import annotations

from typing import Optional

from .geometry import MovingDomain, MovingLine, TriangleSpec


def geometry_svg(spec: TriangleSpec, line: Optional[MovingLine] = None,
                 domain: Optional[MovingDomain] = None, size: int = 560) -> str:
    pts = list(spec.vertices)
    if domain is not None and not domain.empty:
        pts += list(domain.polygon)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    pad = 30
    span = max(max(xs) - min(xs), max(ys) - min(ys)) or 1.0
    scale = (size - 2 * pad) / span

    def sx(p):
        return pad + (p[0] - min(xs)) * scale

    def sy(p):
        return size - pad - (p[1] - min(ys)) * scale

    def poly(points, style):
        body = " ".join(f"{sx(p):.2f},{sy(p):.2f}" for p in points)
        return f'<polygon points="{body}" {style}/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if domain is not None and not domain.empty:
        parts.append(poly(domain.polygon,
                          'fill="#7fbf7f" fill-opacity="0.6" stroke="none"'))
    parts.append(poly(spec.vertices,
                      'fill="none" stroke="black" stroke-width="1.6"'))
    if line is not None:
        lo = line.point_at(-2.0 * spec.diameter)
        hi = line.point_at(2.0 * spec.diameter)
        parts.append(f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" '
                     f'x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
                     'stroke="red" stroke-width="1.6"/>')
        parts.append(f'<circle cx="{sx(line.base):.2f}" cy="{sy(line.base):.2f}" '
                     'r="3" fill="red"/>')
    if domain is not None:
        for p0, p1, tag in domain.segments:
            mx, my = (p0[0] + p1[0]) / 2, (p0[1] + p1[1]) / 2
            parts.append(f'<text x="{sx((mx, my)):.1f}" y="{sy((mx, my)):.1f}" '
                         f'font-size="10" fill="#205020">{tag}</text>')
    for name, p in zip("OAB", spec.vertices):
        parts.append(f'<text x="{sx(p) + 4:.1f}" y="{sy(p) - 4:.1f}" '
                     f'font-size="13">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
