"""Triangle family and moving-plane geometry.

The domain is the triangle O-A-B with the Neumann vertex O at the origin,
the Dirichlet side on the vertical line x1 = 1, the lower Neumann side
ending at A = (1, -cot(alpha)) and the upper one at B = (1, cot(beta)).
This module parameterizes that family, the sweeping lines T(lam, vartheta)
anchored on the Neumann carriers, their reflections, the clipped moving
domains with tagged boundaries, and the threshold constants that control
how far the lines can sweep.

All angles are radians.  Points are (x1, x2) tuples of floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import AngleDomain, NonPositive, ParamDomain, Singular

Point = tuple[float, float]

# Family identifiers for moving lines.
LOWER = "Lower"
UPPER = "Upper"

# Boundary tags of a moving domain.
GAMMA0 = "Gamma0"    # on the moving line itself
GAMMA1 = "Gamma1"    # on the Dirichlet side or its mirror image
GAMMA2A = "Gamma2A"  # lower Neumann carrier, its mirror, or the inner wedge line
GAMMA2B = "Gamma2B"  # upper Neumann carrier or its mirror

_MERGE_TOL = 1e-12   # vertex-merge tolerance in polygon clipping
_EMPTY_AREA = 1e-14  # below this the clipped polygon counts as empty
_TAG_TOL = 1e-10     # midpoint-to-line tolerance for boundary tagging


def unit(theta: float) -> Point:
    """Unit vector (cos theta, sin theta)."""
    return (math.cos(theta), math.sin(theta))


@dataclass(frozen=True)
class DirectionVector:
    """A unit direction stored with the angle that generated it."""

    theta: float
    components: Point

    @staticmethod
    def from_angle(theta: float) -> "DirectionVector":
        return DirectionVector(theta, unit(theta))


@dataclass(frozen=True)
class TriangleSpec:
    """The (alpha, beta) triangle with derived vertices and side lengths."""

    alpha: float
    beta: float
    gamma: float
    O: Point
    A: Point
    B: Point
    phi0: float           # length of the lower Neumann side, csc(alpha)
    psi0: float           # length of the upper Neumann side, csc(beta)
    dirichlet_len: float  # cot(alpha) + cot(beta)

    @property
    def vertices(self) -> tuple[Point, Point, Point]:
        return (self.O, self.A, self.B)

    @property
    def area(self) -> float:
        return 0.5 * self.dirichlet_len

    @property
    def diameter(self) -> float:
        return max(self.phi0, self.psi0, self.dirichlet_len)

    def lower_carrier(self) -> tuple[Point, Point]:
        """(base, unit normal) of the line containing the lower Neumann side."""
        return (self.O, unit(self.alpha))

    def upper_carrier(self) -> tuple[Point, Point]:
        return (self.O, unit(-self.beta))

    def dirichlet_carrier(self) -> tuple[Point, Point]:
        return ((1.0, 0.0), (1.0, 0.0))

    def contains(self, p: Point, tol: float = 1e-12) -> bool:
        x, y = p
        if x > 1.0 + tol:
            return False
        bl, nl = self.lower_carrier()
        bu, nu = self.upper_carrier()
        # Interior lies on the positive side of both Neumann carriers.
        if (x - bl[0]) * nl[0] + (y - bl[1]) * nl[1] < -tol:
            return False
        if (x - bu[0]) * nu[0] + (y - bu[1]) * nu[1] < -tol:
            return False
        return True


def make_triangle(alpha: float, beta: float) -> TriangleSpec:
    """Build the triangle for mixed-vertex angles (alpha, beta).

    Requires alpha, beta > 0 and alpha + beta < pi; the Neumann-vertex
    angle is gamma = pi - alpha - beta.
    """
    if not (alpha > 0.0 and beta > 0.0 and alpha + beta < math.pi):
        raise AngleDomain(
            f"need alpha, beta > 0 and alpha + beta < pi, got ({alpha}, {beta})"
        )
    gamma = math.pi - alpha - beta
    A = (1.0, -_cot(alpha))
    B = (1.0, _cot(beta))
    return TriangleSpec(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        O=(0.0, 0.0),
        A=A,
        B=B,
        phi0=1.0 / math.sin(alpha),
        psi0=1.0 / math.sin(beta),
        dirichlet_len=_cot(alpha) + _cot(beta),
    )


def _cot(x: float) -> float:
    return math.cos(x) / math.sin(x)


@dataclass(frozen=True)
class Classification:
    neumann_vertex: str        # "acute" | "right" | "obtuse"
    isosceles: bool
    longer_neumann_side: str   # LOWER | UPPER | "Equal"
    middle_side: str           # "Dirichlet" | "NeumannLower" | "NeumannUpper" | "NeumannEqual" | "Equal"


def classify(spec: TriangleSpec, tol: float = 1e-12) -> Classification:
    """Classify the Neumann vertex, side ordering and the middle side."""
    if abs(spec.gamma - math.pi / 2) <= tol:
        vertex = "right"
    elif spec.gamma > math.pi / 2:
        vertex = "obtuse"
    else:
        vertex = "acute"
    iso = abs(spec.alpha - spec.beta) <= tol * max(spec.alpha, spec.beta)

    if iso:
        longer = "Equal"
    elif spec.psi0 > spec.phi0:
        longer = UPPER
    else:
        longer = LOWER

    sides = [
        ("NeumannLower", spec.phi0),
        ("NeumannUpper", spec.psi0),
        ("Dirichlet", spec.dirichlet_len),
    ]
    scale = max(s for _, s in sides)
    ordered = sorted(sides, key=lambda kv: kv[1])
    lo, mid, hi = ordered
    if hi[1] - lo[1] <= tol * scale:
        middle = "Equal"
    elif abs(mid[1] - lo[1]) <= tol * scale or abs(mid[1] - hi[1]) <= tol * scale:
        # Two-way tie; the tied pair is necessarily the two Neumann sides
        # for an isosceles spec, otherwise report the tied pair generically.
        tied = {lo[0], mid[0]} if abs(mid[1] - lo[1]) <= tol * scale else {mid[0], hi[0]}
        if tied == {"NeumannLower", "NeumannUpper"}:
            middle = "NeumannEqual"
        else:
            middle = mid[0]
    else:
        middle = mid[0]
    return Classification(vertex, iso, longer, middle)


def is_obtuse(spec: TriangleSpec, tol: float = 1e-9) -> bool:
    """Is the Neumann vertex angle obtuse, beyond float fuzz at pi/2?"""
    return spec.gamma > math.pi / 2 + tol


def condition_13(alpha: float, beta: float) -> bool:
    """Evaluate max(alpha, beta) >= min(pi/4, 2 alpha + 2 beta - pi/2)."""
    if not (alpha > 0.0 and beta > 0.0 and alpha + beta < math.pi):
        raise AngleDomain(f"invalid angles ({alpha}, {beta})")
    return max(alpha, beta) >= min(math.pi / 4, 2 * alpha + 2 * beta - math.pi / 2)


@dataclass(frozen=True)
class MovingLine:
    """A sweeping line anchored on a Neumann carrier.

    For the lower family the line passes through P = lam*(sin a, -cos a)
    and has unit normal e(vartheta + alpha); the cap swept by the line is
    the side where the signed offset is negative.  The upper family mirrors
    this with base Q = lam*(sin b, cos b) and normal e(-vartheta - beta).
    """

    family: str
    lam: float
    vartheta: float
    base: Point
    normal: DirectionVector

    @property
    def direction(self) -> Point:
        nx, ny = self.normal.components
        return (-ny, nx)

    def signed_offset(self, p: Point) -> float:
        nx, ny = self.normal.components
        return (p[0] - self.base[0]) * nx + (p[1] - self.base[1]) * ny

    def reflect(self, p: Point) -> Point:
        """Mirror image of p across the line; an involution."""
        s = self.signed_offset(p)
        nx, ny = self.normal.components
        return (p[0] - 2.0 * s * nx, p[1] - 2.0 * s * ny)

    def point_at(self, t: float) -> Point:
        dx, dy = self.direction
        return (self.base[0] + t * dx, self.base[1] + t * dy)


def moving_line(spec: TriangleSpec, family: str, lam: float, vartheta: float) -> MovingLine:
    """The line through P_lam (or Q_lam) forming angle vartheta with its carrier."""
    if not (0.0 <= vartheta <= math.pi):
        raise AngleDomain(f"vartheta must lie in [0, pi], got {vartheta}")
    if lam < 0.0:
        raise ParamDomain(f"lam must be >= 0, got {lam}")
    if family == LOWER:
        base = (lam * math.sin(spec.alpha), -lam * math.cos(spec.alpha))
        normal = DirectionVector.from_angle(vartheta + spec.alpha)
    elif family == UPPER:
        base = (lam * math.sin(spec.beta), lam * math.cos(spec.beta))
        normal = DirectionVector.from_angle(-vartheta - spec.beta)
    else:
        raise ParamDomain(f"family must be {LOWER!r} or {UPPER!r}, got {family!r}")
    return MovingLine(family, lam, vartheta, base, normal)


def reflect_point(line: MovingLine, p: Point) -> Point:
    return line.reflect(p)


def lambda_max(spec: TriangleSpec, vartheta: float, family: str = LOWER) -> float:
    """Largest lam for which the moving line still meets the closed triangle.

    The line sits at signed level -lam*sin(vartheta) in its normal
    direction, so it meets the triangle exactly while that level stays
    above the smallest vertex offset.
    """
    if not (0.0 < vartheta < math.pi):
        raise AngleDomain(f"vartheta must lie in (0, pi), got {vartheta}")
    line = moving_line(spec, family, 0.0, vartheta)
    s = math.sin(vartheta)
    return -min(line.signed_offset(v) for v in spec.vertices) / s


# ---------------------------------------------------------------------------
# Convex polygon utilities (successive half-plane clipping)
# ---------------------------------------------------------------------------

def polygon_area(poly: Sequence[Point]) -> float:
    """Signed area, positive for counterclockwise order."""
    a = 0.0
    m = len(poly)
    for i in range(m):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % m]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def polygon_perimeter(poly: Sequence[Point]) -> float:
    total = 0.0
    m = len(poly)
    for i in range(m):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % m]
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def clip_halfplane(poly: Sequence[Point], base: Point, normal: Point,
                   tol: float = _MERGE_TOL) -> list[Point]:
    """Keep the part of a convex polygon with (x - base) . normal <= 0."""
    out: list[Point] = []
    m = len(poly)
    if m == 0:
        return out
    offs = [
        (p[0] - base[0]) * normal[0] + (p[1] - base[1]) * normal[1] for p in poly
    ]
    for i in range(m):
        j = (i + 1) % m
        pi_, pj = poly[i], poly[j]
        si, sj = offs[i], offs[j]
        if si <= tol:
            out.append(pi_)
        if (si < -tol and sj > tol) or (si > tol and sj < -tol):
            t = si / (si - sj)
            out.append((pi_[0] + t * (pj[0] - pi_[0]), pi_[1] + t * (pj[1] - pi_[1])))
    return _merge_close(out, tol)


def _merge_close(poly: list[Point], tol: float) -> list[Point]:
    if not poly:
        return poly
    cleaned: list[Point] = [poly[0]]
    for p in poly[1:]:
        q = cleaned[-1]
        if math.hypot(p[0] - q[0], p[1] - q[1]) > tol:
            cleaned.append(p)
    if len(cleaned) > 1:
        p, q = cleaned[0], cleaned[-1]
        if math.hypot(p[0] - q[0], p[1] - q[1]) <= tol:
            cleaned.pop()
    return cleaned


def clip_convex(poly: Sequence[Point], convex: Sequence[Point],
                tol: float = _MERGE_TOL) -> list[Point]:
    """Intersect a convex polygon with another convex polygon."""
    ring = list(convex)
    if polygon_area(ring) < 0:
        ring.reverse()
    out = list(poly)
    m = len(ring)
    for i in range(m):
        p0, p1 = ring[i], ring[(i + 1) % m]
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        # Outward normal of a ccw edge is (dy, -dx).
        out = clip_halfplane(out, p0, (dy, -dx), tol)
        if not out:
            return out
    return out


def is_convex(poly: Sequence[Point], tol: float = 1e-10) -> bool:
    m = len(poly)
    if m < 4:
        return True
    scale = max(abs(c) for p in poly for c in p) or 1.0
    for i in range(m):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % m]
        cx, cy = poly[(i + 2) % m]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if cross < -tol * scale * scale:
            return False
    return True


def right_cap(spec: TriangleSpec, lam: float, vartheta: float,
              family: str = LOWER) -> list[Point]:
    """The open cap of the triangle cut off by the moving line."""
    line = moving_line(spec, family, lam, vartheta)
    return clip_halfplane(list(spec.vertices), line.base, line.normal.components)


# ---------------------------------------------------------------------------
# Moving domains with tagged boundary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MovingDomain:
    """The clipped comparison polygon D(lam, vartheta, vartheta1).

    Points x of the triangle whose mirror image across the moving line
    stays inside the triangle, restricted to the wedge between the lines
    at angles vartheta1 and vartheta.  `segments` carries the boundary
    decomposition; `gamma1_equality` flags the borderline case
    vartheta == pi/2 - alpha where the Dirichlet-related piece sits on
    the mirror image of the Dirichlet side as well.
    """

    polygon: tuple[Point, ...]
    segments: tuple[tuple[Point, Point, str], ...]
    lam: float
    vartheta: float
    vartheta1: Optional[float]
    line: MovingLine
    gamma1_equality: bool

    @property
    def empty(self) -> bool:
        return len(self.polygon) == 0

    @property
    def area(self) -> float:
        return polygon_area(self.polygon) if self.polygon else 0.0

    def tag_length(self, tag: str) -> float:
        total = 0.0
        for p0, p1, t in self.segments:
            if t == tag:
                total += math.hypot(p1[0] - p0[0], p1[1] - p0[1])
        return total


def moving_domain(spec: TriangleSpec, lam: float, vartheta: float,
                  vartheta1: Optional[float] = None) -> MovingDomain:
    """Clip the moving domain and tag its boundary.

    With vartheta1 = None only the reflection constraint and the leading
    half-plane apply (the full domain D(lam, vartheta)); otherwise the
    wedge 0 <= vartheta1 < vartheta is enforced as well.
    """
    if lam < 0.0:
        raise ParamDomain(f"lam must be >= 0, got {lam}")
    if not (0.0 < vartheta <= math.pi):
        raise ParamDomain(f"vartheta must lie in (0, pi], got {vartheta}")
    if vartheta1 is not None and not (0.0 <= vartheta1 < vartheta):
        raise ParamDomain(
            f"need 0 <= vartheta1 < vartheta, got vartheta1={vartheta1}, vartheta={vartheta}"
        )
    line = moving_line(spec, LOWER, lam, vartheta)
    tri = list(spec.vertices)

    poly = clip_halfplane(tri, line.base, line.normal.components)
    if poly and vartheta1 is not None:
        n1 = unit(vartheta1 + spec.alpha)
        # Keep (x - P) . e(vartheta1 + alpha) >= 0.
        poly = clip_halfplane(poly, line.base, (-n1[0], -n1[1]))
    if poly:
        mirrored = [line.reflect(v) for v in tri]
        poly = clip_convex(poly, mirrored)

    if not poly or abs(polygon_area(poly)) < _EMPTY_AREA:
        return MovingDomain((), (), lam, vartheta, vartheta1, line,
                            _gamma1_borderline(spec, vartheta))

    if polygon_area(poly) < 0:
        poly.reverse()
    segments = _tag_boundary(spec, poly, line, vartheta1)
    return MovingDomain(tuple(poly), tuple(segments), lam, vartheta, vartheta1,
                        line, _gamma1_borderline(spec, vartheta))


def _gamma1_borderline(spec: TriangleSpec, vartheta: float) -> bool:
    return abs(vartheta - (math.pi / 2 - spec.alpha)) <= 1e-12


def _dist_to_line(p: Point, base: Point, normal: Point) -> float:
    return abs((p[0] - base[0]) * normal[0] + (p[1] - base[1]) * normal[1])


def _reflect_line(line: MovingLine, base: Point, normal: Point) -> tuple[Point, Point]:
    """Image of the line (base, normal) under reflection across the moving line."""
    b = line.reflect(base)
    nT = line.normal.components
    d = normal[0] * nT[0] + normal[1] * nT[1]
    n = (normal[0] - 2.0 * d * nT[0], normal[1] - 2.0 * d * nT[1])
    return b, n


def _tag_boundary(spec: TriangleSpec, poly: list[Point], line: MovingLine,
                  vartheta1: Optional[float]) -> list[tuple[Point, Point, str]]:
    carriers_gamma1 = [spec.dirichlet_carrier(),
                       _reflect_line(line, *spec.dirichlet_carrier())]
    carriers_2a = [spec.lower_carrier(), _reflect_line(line, *spec.lower_carrier())]
    if vartheta1 is not None:
        carriers_2a.append((line.base, unit(vartheta1 + spec.alpha)))
    carriers_2b = [spec.upper_carrier(), _reflect_line(line, *spec.upper_carrier())]

    segments: list[tuple[Point, Point, str]] = []
    m = len(poly)
    for i in range(m):
        p0, p1 = poly[i], poly[(i + 1) % m]
        mid = ((p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0)
        if _dist_to_line(mid, line.base, line.normal.components) <= _TAG_TOL:
            tag = GAMMA0
        elif any(_dist_to_line(mid, b, n) <= _TAG_TOL for b, n in carriers_gamma1):
            tag = GAMMA1
        elif any(_dist_to_line(mid, b, n) <= _TAG_TOL for b, n in carriers_2a):
            tag = GAMMA2A
        elif any(_dist_to_line(mid, b, n) <= _TAG_TOL for b, n in carriers_2b):
            tag = GAMMA2B
        else:
            raise ParamDomain(
                f"boundary segment at {mid} matches no defining line "
                f"(lam={line.lam}, vartheta={line.vartheta})"
            )
        segments.append((p0, p1, tag))
    return segments


# ---------------------------------------------------------------------------
# Hat/check reparameterization of the reflected upper carrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HatCheck:
    """The mirror image of the upper carrier, in both line families.

    Each parameterization exists only where its own denominator is nonzero
    (sin(vartheta - gamma) for the hat pair, sin(2 vartheta - gamma) for
    the check pair); a singular side is reported as None.
    """

    lambda_hat: Optional[float]
    vartheta_hat: float
    lambda_check: Optional[float]
    vartheta_check: float


def hat_check_map(spec: TriangleSpec, lam: float, vartheta: float) -> HatCheck:
    """Parameters of the mirror image of the upper Neumann carrier.

    Reflecting the upper carrier across the lower-family line T(lam, vartheta)
    yields one line expressible in both families: in the upper family at
    (lambda_hat, vartheta_hat) and in the lower family at
    (lambda_check, vartheta_check).  Raises only when both sides degenerate.
    """
    g = spec.gamma
    d_hat = math.sin(vartheta - g)
    d_check = math.sin(2.0 * vartheta - g)
    lam_hat = lam * math.sin(vartheta) / d_hat if abs(d_hat) >= 1e-12 else None
    lam_check = (lam + lam * math.sin(g) / d_check
                 if abs(d_check) >= 1e-12 else None)
    if lam_hat is None and lam_check is None:
        raise Singular(
            f"both sin(vartheta - gamma) and sin(2*vartheta - gamma) vanish "
            f"at vartheta={vartheta}")
    return HatCheck(
        lambda_hat=lam_hat,
        vartheta_hat=math.pi - 2.0 * vartheta + 2.0 * g,
        lambda_check=lam_check,
        vartheta_check=2.0 * vartheta - g,
    )


# ---------------------------------------------------------------------------
# Sweep thresholds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    """Start values for the sweeping line, per family.

    phi1/phi2/alpha_star require alpha < pi/2 and are None otherwise;
    symmetrically for the psi side.
    """

    phi1: Optional[float]
    psi1: Optional[float]
    phi2: Optional[float]
    psi2: Optional[float]
    alpha_star: Optional[float]
    beta_star: Optional[float]


def _star_angle(angle: float) -> float:
    if angle >= math.pi / 4:
        return math.pi / 2
    if angle >= math.pi / 8:
        return 3 * math.pi / 4
    return math.pi - 2.0 * angle


def thresholds(spec: TriangleSpec) -> Thresholds:
    g = spec.gamma
    phi1 = psi1 = phi2 = psi2 = a_star = b_star = None
    if spec.alpha < math.pi / 2:
        phi1 = max(0.5 * spec.phi0, spec.psi0 * math.cos(g))
        a_star = _star_angle(spec.alpha)
        phi2 = max(math.sin(a_star - g) / math.sin(a_star) * spec.psi0,
                   spec.phi0 / (1.0 + math.sin(g)))
    if spec.beta < math.pi / 2:
        psi1 = max(0.5 * spec.psi0, spec.phi0 * math.cos(g))
        b_star = _star_angle(spec.beta)
        psi2 = max(math.sin(b_star - g) / math.sin(b_star) * spec.phi0,
                   spec.psi0 / (1.0 + math.sin(g)))
    return Thresholds(phi1, psi1, phi2, psi2, a_star, b_star)


def upsilon(spec: TriangleSpec, phi: float, vartheta: float) -> float:
    """Offset making T(upsilon, vartheta), T(phi, pi/2) and {x1 = 1} concurrent."""
    if not (math.pi / 2 < vartheta < math.pi):
        raise Singular(f"vartheta must lie strictly in (pi/2, pi), got {vartheta}")
    return phi + (spec.phi0 - phi) * math.tan(spec.alpha) / math.tan(math.pi - vartheta)


def narrow_width(c0: float) -> float:
    """Width below which the narrow-domain maximum principle applies."""
    if c0 <= 0.0:
        raise NonPositive(f"coefficient bound must be positive, got {c0}")
    return math.pi / (2.0 * math.sqrt(c0))
