"""Moduli-space sweeps over (alpha, beta) and the domain-deformation path.

Each grid point is an independent eigen solve plus the verdict suite;
failures are captured per record so a sweep never aborts wholesale.  With
workers > 1 the records are computed in a process pool; results are always
gathered in input order, so identical configurations produce byte-identical
CSV files.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import fem, qualify
from .errors import IllConditioned, ParamDomain
from .geometry import TriangleSpec, condition_13, is_obtuse, make_triangle
from .mesh import default_grading, generate

THIN_MIN_ANGLE = math.radians(5.0)

CSV_HEADER = ("alpha_deg,beta_deg,gamma_deg,mu,max_class,max_x,max_y,cond13,"
              "min_normal_slope,symmetry_err,omega_fit,thin,error")


@dataclass
class SweepOptions:
    n: int = 64
    seed: int = 0
    tol: float = fem.DEFAULT_TOL
    workers: int = 1
    grading: Optional[float] = None   # None: per-spec default


@dataclass
class SweepRecord:
    alpha: float
    beta: float
    gamma: float
    mu: float = math.nan
    max_class: str = ""
    max_x: float = math.nan
    max_y: float = math.nan
    cond13: bool = False
    min_normal_slope: float = math.nan   # min over barycenters of -du/dx1
    symmetry_err: Optional[float] = None
    omega_fit: Optional[float] = None
    thin: bool = False
    error: str = ""
    runtime: float = 0.0                 # not part of the CSV schema


def _solve_record(args) -> SweepRecord:
    alpha, beta, opts = args
    rec = SweepRecord(alpha=alpha, beta=beta, gamma=math.pi - alpha - beta)
    started = time.perf_counter()
    try:
        spec = make_triangle(alpha, beta)
        rec.cond13 = condition_13(alpha, beta)
        rec.thin = min(alpha, beta, spec.gamma) < THIN_MIN_ANGLE
        grading = opts.grading if opts.grading is not None else default_grading(spec)
        mesh = generate(spec, opts.n, grading)
        eig = fem.solve_eigen(mesh, tol=opts.tol, seed=opts.seed)
        rec.mu = eig.mu
        resolved = qualify.resolve_max_class(mesh, eig.u, spec, eig.mu)
        rec.max_class = resolved.klass
        rec.max_x, rec.max_y = resolved.point
        g = fem.gradient_field(mesh, eig.u)
        mask = qualify._vertex_mask(mesh, spec, 2.0 * mesh.h)
        if mask.any():
            rec.min_normal_slope = float((-g[mask, 0]).min())
        from .geometry import classify

        cls = classify(spec)
        if cls.isosceles:
            rec.symmetry_err = qualify.symmetry_error(mesh, eig.u)[1]
        if is_obtuse(spec):
            try:
                rec.omega_fit = qualify.corner_fit(mesh, eig.u, spec, mu=eig.mu).omega
            except IllConditioned:
                pass            # mesh too coarse for the fit window
    except Exception as exc:
        rec.error = str(exc)
    rec.runtime = time.perf_counter() - started
    return rec


def sweep_angles(grid: Sequence[tuple[float, float]], opts: SweepOptions
                 ) -> list[SweepRecord]:
    """One record per (alpha, beta) pair, gathered in input order."""
    if not grid:
        raise ParamDomain("empty sweep grid")
    jobs = [(a, b, opts) for a, b in grid]
    if opts.workers <= 1:
        return [_solve_record(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=opts.workers) as pool:
        return list(pool.map(_solve_record, jobs, chunksize=4))


def angle_grid(lo: float, hi: float, count: int,
               max_sum: float = math.radians(170.0)
               ) -> list[tuple[float, float]]:
    """The (alpha, beta) product grid, keeping valid triangles only."""
    vals = np.linspace(lo, hi, count)
    return [(float(a), float(b)) for a in vals for b in vals if a + b < max_sum]


# ---------------------------------------------------------------------------
# Deformation path (continuity method)
# ---------------------------------------------------------------------------

@dataclass
class PathRecord:
    t: float
    alpha: float
    beta: float
    gamma: float
    mu: float
    monotone: qualify.Verdict
    max_class: str


@dataclass
class DeformationPath:
    a: float
    b: float
    t_grid: list[float]
    records: list[PathRecord] = field(default_factory=list)

    @property
    def all_monotone(self) -> bool:
        return all(r.monotone.passed for r in self.records)

    def first_failure(self) -> Optional[float]:
        for r in self.records:
            if not r.monotone.passed:
                return r.t
        return None

    def gamma_increasing(self) -> bool:
        gs = [r.gamma for r in self.records]
        return all(g2 > g1 for g1, g2 in zip(gs, gs[1:]))


def deformation_spec(a: float, b: float, t: float) -> TriangleSpec:
    """Triangle with vertices (0,0), (1, t a), (1, t b) in spec coordinates."""
    return make_triangle(math.atan(1.0 / (-a * t)), math.atan(1.0 / (b * t)))


def continuation_t(a: float, b: float, t_grid: Sequence[float],
                   opts: SweepOptions) -> DeformationPath:
    """Eigen solve and the longer-side monotonicity verdict along the path.

    The monotone direction for the triangle (0,0), (1, ta), (1, tb) is
    (tb, -1)/|.|, the inward normal of the longer (upper) Neumann side.
    """
    if not (b > -a > 0.0):
        raise ParamDomain(f"need b > -a > 0, got a={a}, b={b}")
    if not (-a * b > 1.0):
        raise ParamDomain(f"need -a*b > 1, got {-a * b}")
    ts = sorted(float(t) for t in t_grid)
    if not ts or ts[0] < 1.0:
        raise ParamDomain("t grid must be nonempty with t >= 1")
    path = DeformationPath(a, b, ts)
    for t in ts:
        spec = deformation_spec(a, b, t)
        grading = opts.grading if opts.grading is not None else default_grading(spec)
        mesh = generate(spec, opts.n, grading)
        eig = fem.solve_eigen(mesh, tol=opts.tol, seed=opts.seed)
        verdict = qualify.directional_monotonicity(mesh, eig.u, spec, -spec.beta)
        resolved = qualify.resolve_max_class(mesh, eig.u, spec, eig.mu)
        path.records.append(PathRecord(t, spec.alpha, spec.beta, spec.gamma,
                                       eig.mu, verdict, resolved.klass))
    return path


# ---------------------------------------------------------------------------
# CSV and SVG emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.17g}"
    return str(x)


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    if not records:
        raise ParamDomain("refusing to emit an empty record list")
    lines = [CSV_HEADER]
    for r in records:
        err = r.error.replace('"', "'")
        if "," in err or "\n" in err:
            err = '"' + err.replace("\n", " ") + '"'
        lines.append(",".join([
            _fmt(math.degrees(r.alpha)),
            _fmt(math.degrees(r.beta)),
            _fmt(math.degrees(r.gamma)),
            _fmt(r.mu),
            r.max_class,
            _fmt(r.max_x),
            _fmt(r.max_y),
            _fmt(r.cond13),
            _fmt(r.min_normal_slope),
            _fmt(r.symmetry_err),
            _fmt(r.omega_fit),
            _fmt(r.thin),
            err,
        ]))
    return "\n".join(lines) + "\n"


def emit_csv(records: Sequence[SweepRecord], path) -> None:
    text = records_to_csv(records)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as exc:
        raise OSError(f"writing sweep CSV to {path}: {exc}") from exc


def parse_csv(text: str) -> list[SweepRecord]:
    """Re-read an emitted CSV; numeric fields round-trip bit-exactly."""
    import csv as _csv
    import io

    rows = list(_csv.reader(io.StringIO(text)))
    if not rows or ",".join(rows[0]) != CSV_HEADER:
        raise ParamDomain("unrecognized sweep CSV header")
    out = []
    for row in rows[1:]:
        (a, b, gm, mu, klass, mx, my, c13, slope, sym, om, thin, err) = row
        out.append(SweepRecord(
            alpha=math.radians(float(a)),
            beta=math.radians(float(b)),
            gamma=math.radians(float(gm)),
            mu=float(mu) if mu else math.nan,
            max_class=klass,
            max_x=float(mx) if mx else math.nan,
            max_y=float(my) if my else math.nan,
            cond13=c13 == "true",
            min_normal_slope=float(slope) if slope else math.nan,
            symmetry_err=float(sym) if sym else None,
            omega_fit=float(om) if om else None,
            thin=thin == "true",
            error=err,
        ))
    return out


_CLASS_COLORS = {
    qualify.MAX_AT_NEUMANN_VERTEX: "#4878cf",
    qualify.MAX_ON_LONGER_INTERIOR: "#ee854a",
    qualify.MAX_OTHER: "#999999",
    "": "#d65f5f",
}


def phase_svg(records: Sequence[SweepRecord], size: int = 640) -> str:
    """Heatmap of max_class over the (alpha, beta) plane, degrees axes.

    Draws the isosceles diagonal and the alpha + beta = 90 line (the
    right-Neumann-vertex transition).  Standalone SVG 1.1, no external
    references.
    """
    if not records:
        raise ParamDomain("refusing to plot an empty record list")
    adeg = sorted({round(math.degrees(r.alpha), 9) for r in records})
    bdeg = sorted({round(math.degrees(r.beta), 9) for r in records})
    lo = min(adeg[0], bdeg[0])
    hi = max(adeg[-1], bdeg[-1])
    step = min([adeg[i + 1] - adeg[i] for i in range(len(adeg) - 1)] or [5.0])
    pad = 46
    span = hi - lo + step

    def sx(a):
        return pad + (a - lo + step / 2) / span * (size - 2 * pad)

    def sy(b):
        return size - pad - (b - lo + step / 2) / span * (size - 2 * pad)

    cell = (size - 2 * pad) / span * step
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for r in records:
        a = math.degrees(r.alpha)
        b = math.degrees(r.beta)
        color = _CLASS_COLORS.get(r.max_class, "#d65f5f")
        extra = ' stroke="black" stroke-width="0.6"' if r.thin else ""
        parts.append(
            f'<rect x="{sx(a) - cell / 2:.2f}" y="{sy(b) - cell / 2:.2f}" '
            f'width="{cell:.2f}" height="{cell:.2f}" fill="{color}"{extra}/>')
    x0, y0 = sx(lo - step / 2), sy(lo - step / 2)
    x1, y1 = sx(hi + step / 2), sy(hi + step / 2)
    parts.append(f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" '
                 'stroke="black" stroke-dasharray="6 3" stroke-width="1.2"/>')
    if lo <= 90 - lo <= hi + step:
        ga0 = max(lo - step / 2, 90 - (hi + step / 2))
        ga1 = min(hi + step / 2, 90 - (lo - step / 2))
        parts.append(f'<line x1="{sx(ga0):.1f}" y1="{sy(90 - ga0):.1f}" '
                     f'x2="{sx(ga1):.1f}" y2="{sy(90 - ga1):.1f}" '
                     'stroke="#333333" stroke-width="1.8"/>')
    for cls, color in list(_CLASS_COLORS.items())[:3]:
        parts.append(f'<text x="{pad}" y="{18 + 16 * list(_CLASS_COLORS).index(cls)}" '
                     f'font-size="12" fill="{color}">{cls or "error"}</text>')
    parts.append(f'<text x="{size / 2:.0f}" y="{size - 8}" font-size="13" '
                 'text-anchor="middle">alpha (deg)</text>')
    parts.append(f'<text x="14" y="{size / 2:.0f}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 14 {size / 2:.0f})">'
                 'beta (deg)</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg_phase(records: Sequence[SweepRecord], path) -> None:
    text = phase_svg(records)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as exc:
        raise OSError(f"writing phase SVG to {path}: {exc}") from exc
