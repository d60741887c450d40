import math

import numpy as np
import pytest

from trimono import fem
from trimono import geometry as geo
from trimono import mesh as msh
from trimono import qualify as q
from trimono.errors import AsymmetricMesh, EmptyDomain, IllConditioned, ParamDomain

DEG = math.pi / 180.0


def _solve(a_deg, b_deg, n, grading=None):
    spec = geo.make_triangle(a_deg * DEG, b_deg * DEG)
    if grading is None:
        grading = msh.default_grading(spec)
    mesh = msh.generate(spec, n, grading)
    res = fem.solve_eigen(mesh)
    return spec, mesh, res


# --- directional monotonicity -------------------------------------------------

def test_directional_right_isosceles_all_negative():
    spec, mesh, res = _solve(45, 45, 32)
    v = q.directional_monotonicity(mesh, res.u, spec, 0.0)
    assert v.passed
    assert v.worst_value < 0          # strictly negative even without slack
    assert v.tolerance > 0 and v.excluded_radius == pytest.approx(2 * mesh.h)


def test_directional_isosceles_obtuse():
    spec, mesh, res = _solve(30, 30, 32)
    assert q.directional_monotonicity(mesh, res.u, spec, 0.0).passed


def test_directional_edge_of_cone_right_gamma():
    # theta = alpha sits on the boundary of the monotone directional cone
    spec, mesh, res = _solve(60, 30, 48)
    assert q.directional_monotonicity(mesh, res.u, spec, spec.alpha).passed
    assert q.directional_monotonicity(mesh, res.u, spec, -spec.beta).passed


def test_directional_fails_outside_cone():
    # pointing back toward the Neumann vertex the derivative is positive
    spec, mesh, res = _solve(45, 45, 16)
    v = q.directional_monotonicity(mesh, res.u, spec, math.pi)
    assert not v.passed


# --- middle-side monotonicity --------------------------------------------------

def test_middle_side_48_33():
    spec, mesh, res = _solve(48, 33, 48)
    mv = q.normal_monotonicity_middle_side(mesh, res.u, spec)
    assert mv.middle_side == "NeumannUpper"
    b = 1.0 / math.tan(33 * DEG)
    expected = (b / math.hypot(b, 1.0), -1.0 / math.hypot(b, 1.0))
    assert mv.direction == pytest.approx(expected, rel=1e-12)
    assert mv.verdict.passed


def test_middle_side_isosceles_falls_back_to_horizontal():
    spec, mesh, res = _solve(30, 30, 32)
    mv = q.normal_monotonicity_middle_side(mesh, res.u, spec)
    assert mv.middle_side == "NeumannEqual"
    assert mv.direction == (1.0, 0.0)
    assert mv.verdict.passed


def test_middle_side_right_gamma_upper():
    spec, mesh, res = _solve(60, 30, 48)
    mv = q.normal_monotonicity_middle_side(mesh, res.u, spec)
    assert mv.middle_side == "NeumannUpper"
    assert mv.verdict.passed


# --- reflection positivity -----------------------------------------------------

def test_reflection_positivity_60_40_phi1_range():
    spec, mesh, res = _solve(60, 40, 48)
    thr = geo.thresholds(spec)
    lam_hi = geo.lambda_max(spec, math.pi / 2)
    for lam in np.linspace(thr.phi1, lam_hi * 0.99, 6):
        v = q.reflection_positivity(mesh, res.u, spec, float(lam), math.pi / 2, 0.0,
                                    samples=150)
        assert v.passed
        assert v.worst_value >= -v.tolerance


def test_reflection_zero_on_moving_line():
    spec, mesh, res = _solve(60, 40, 32)
    dom = geo.moving_domain(spec, 0.8, math.pi / 2, 0.0)
    assert q.reflection_zeros(mesh, res.u, dom) <= 1e-10


def test_reflection_positivity_right_gamma_all_lambda():
    spec, mesh, res = _solve(60, 30, 48)
    for lam in np.linspace(0.1, geo.lambda_max(spec, math.pi / 2) * 0.98, 6):
        v = q.reflection_positivity(mesh, res.u, spec, float(lam), math.pi / 2, 0.0,
                                    samples=120)
        assert v.passed


def test_reflection_positivity_narrow_regime_strict():
    spec, mesh, res = _solve(60, 40, 48)
    lam = 0.97 * geo.lambda_max(spec, math.pi / 2)
    v = q.reflection_positivity(mesh, res.u, spec, lam, math.pi / 2, 0.0, samples=200)
    assert v.worst_value > 0


def test_reflection_positivity_empty_raises():
    spec, mesh, res = _solve(60, 40, 8)
    lam = geo.lambda_max(spec, math.pi / 2) * 1.1
    with pytest.raises(EmptyDomain):
        q.reflection_positivity(mesh, res.u, spec, lam, math.pi / 2, 0.0)


# --- symmetry -------------------------------------------------------------------

def test_symmetry_error_small_for_isosceles():
    spec, mesh, res = _solve(45, 45, 32)
    err_abs, err_rel = q.symmetry_error(mesh, res.u)
    assert err_rel <= 1e-8


def test_symmetry_sign_verdict_30_30():
    spec, mesh, res = _solve(30, 30, 32)
    assert q.symmetry_sign_verdict(mesh, res.u, spec).passed


def test_symmetry_refuses_asymmetric_mesh():
    spec, mesh, res = _solve(48, 33, 8)
    with pytest.raises(AsymmetricMesh):
        q.symmetry_error(mesh, res.u)


# --- maximum location -----------------------------------------------------------

def test_locate_max_right_isosceles_at_vertex():
    spec, mesh, res = _solve(45, 45, 32)
    loc = q.locate_max(mesh, res.u, spec)
    assert loc.klass == q.MAX_AT_NEUMANN_VERTEX
    assert loc.distance_to_vertex <= 2 * mesh.h


def test_locate_max_isosceles_obtuse_at_vertex():
    spec, mesh, res = _solve(30, 30, 32)
    assert q.locate_max(mesh, res.u, spec).klass == q.MAX_AT_NEUMANN_VERTEX


def test_resolved_max_48_33_interior_of_longer_side():
    spec, mesh, res = _solve(48, 33, 64)
    rm = q.resolve_max_class(mesh, res.u, spec, res.mu)
    assert rm.klass == q.MAX_ON_LONGER_INTERIOR
    assert rm.resolved_by == "corner_expansion"
    assert rm.c1_relative > q.C1_RELATIVE_TOL
    # the resolved point lies on the upper side, strictly between endpoints
    t = np.asarray(rm.point) @ (np.asarray(spec.B) / spec.psi0)
    assert 0 < t < spec.psi0
    assert rm.distance_to_vertex == pytest.approx(t, rel=1e-9)


def test_resolved_max_mirror_symmetry_of_sides():
    # swapping alpha and beta flips the side the maximum moves to
    spec, mesh, res = _solve(33, 48, 64)
    rm = q.resolve_max_class(mesh, res.u, spec, res.mu)
    assert rm.klass == q.MAX_ON_LONGER_INTERIOR
    assert rm.c1_relative < 0          # lower side now longer
    assert rm.point[1] < 0


def test_resolved_max_isosceles_stays_at_vertex():
    spec, mesh, res = _solve(30, 30, 64)
    rm = q.resolve_max_class(mesh, res.u, spec, res.mu)
    assert rm.klass == q.MAX_AT_NEUMANN_VERTEX
    assert abs(rm.c1_relative) <= q.C1_RELATIVE_TOL


def test_resolved_max_class_stable_under_refinement():
    for n in (32, 48, 64):
        spec, mesh, res = _solve(48, 33, n)
        rm = q.resolve_max_class(mesh, res.u, spec, res.mu)
        assert rm.klass == q.MAX_ON_LONGER_INTERIOR


# --- critical points -------------------------------------------------------------

def test_critical_points_empty_for_monotone_case():
    spec, mesh, res = _solve(60, 30, 48)
    assert q.critical_points(mesh, res.u, spec, mu=res.mu) == []


def test_critical_points_empty_for_isosceles_obtuse():
    spec, mesh, res = _solve(30, 30, 48)
    assert q.critical_points(mesh, res.u, spec, mu=res.mu) == []


def test_critical_points_one_cluster_48_33():
    spec, mesh, res = _solve(48, 33, 64)
    clusters = q.critical_points(mesh, res.u, spec, mu=res.mu)
    assert len(clusters) == 1
    c = clusters[0]
    assert c.side == msh.NEUMANN_UPPER
    assert 0 < c.param < spec.psi0
    assert c.non_degenerate
    assert c.second_derivative < 0       # a maximum along the side


def test_critical_points_without_mu_sees_no_artifacts():
    # the gradient route alone must not report the corner-decay zones
    spec, mesh, res = _solve(30, 30, 48)
    assert q.critical_points(mesh, res.u, spec) == []


# --- corner fit -------------------------------------------------------------------

def test_corner_fit_synthetic_recovery():
    spec = geo.make_triangle(30 * DEG, 30 * DEG)
    mesh = msh.generate(spec, 64, msh.default_grading(spec))
    r = np.linalg.norm(mesh.vertices, axis=1)
    phi = np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0]) - (spec.alpha - math.pi / 2)
    u = 1.0 - r ** 1.5 * np.cos(1.5 * phi)
    fit = q.corner_fit(mesh, u, spec)
    assert abs(fit.omega - 1.5) / 1.5 <= 0.005
    assert fit.c1 == pytest.approx(1.0, rel=0.01)
    assert fit.c0 == pytest.approx(1.0, rel=0.01)


def test_corner_fit_48_33_within_2_percent():
    spec, mesh, res = _solve(48, 33, 64)
    fit = q.corner_fit(mesh, res.u, spec, mu=res.mu)
    target = math.pi / spec.gamma
    assert abs(fit.omega - target) / target <= 0.02
    assert fit.c1 > 0


def test_corner_fit_30_30_within_2_percent():
    spec, mesh, res = _solve(30, 30, 64)
    fit = q.corner_fit(mesh, res.u, spec, mu=res.mu)
    assert abs(fit.omega - 1.5) / 1.5 <= 0.02
    assert abs(fit.c1) <= 0.01           # the odd mode is absent by symmetry


def test_corner_fit_refuses_non_obtuse():
    spec, mesh, res = _solve(60, 40, 16)
    with pytest.raises(ParamDomain):
        q.corner_fit(mesh, res.u, spec, mu=res.mu)


def test_corner_fit_ill_conditioned_on_coarse_mesh():
    spec, mesh, res = _solve(48, 33, 3)
    with pytest.raises(IllConditioned):
        q.corner_fit(mesh, res.u, spec, mu=res.mu)


# --- angular derivative -------------------------------------------------------------

def test_angular_derivative_linear_field():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 8)
    u = mesh.vertices[:, 0].copy()
    R = q.angular_derivative(mesh, u, (0.0, 0.0))
    b = mesh.barycenters()
    assert np.abs(R + b[:, 1]).max() <= 1e-13


def test_angular_derivative_radial_field_vanishes():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 12)
    xbar = (0.6, 0.05)
    u = (mesh.vertices[:, 0] - xbar[0]) ** 2 + (mesh.vertices[:, 1] - xbar[1]) ** 2
    R = q.angular_derivative(mesh, u, xbar, at="circumcenter")
    assert np.abs(R).max() <= 1e-12


def test_angular_derivative_linearity():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 10)
    rng = np.random.default_rng(8)
    u = rng.standard_normal(mesh.num_vertices)
    v = rng.standard_normal(mesh.num_vertices)
    a, b = 2.3, -1.7
    lhs = q.angular_derivative(mesh, a * u + b * v, (0.2, 0.1))
    rhs = a * q.angular_derivative(mesh, u, (0.2, 0.1)) \
        + b * q.angular_derivative(mesh, v, (0.2, 0.1))
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(lhs).max())


def test_angular_trace_l_equals_one_48_33():
    # near O the angular derivative behaves like a single positive lobe
    spec, mesh, res = _solve(48, 33, 64)
    for radius in (0.2, 0.3):
        _, vals = q.angular_trace(mesh, res.u, spec, radius)
        assert q.interior_sign_changes(vals) == 0
        assert vals.max() > 0            # c1 > 0 orientation


# --- difference quotient --------------------------------------------------------------

def test_difference_quotient_linear_exact():
    spec, mesh, res = _solve(60, 40, 24)
    dom = geo.moving_domain(spec, 0.7, math.pi / 2, 0.0)
    vals, bound = q.difference_quotient_coeff(mesh, res.u, fem.linear(res.mu), dom)
    assert np.abs(vals - res.mu).max() <= 1e-9
    assert bound == pytest.approx(res.mu, rel=1e-9)
    assert geo.narrow_width(bound) == pytest.approx(math.pi / (2 * math.sqrt(res.mu)),
                                                    rel=1e-9)


def test_difference_quotient_cubic_identity():
    spec, mesh, res = _solve(60, 40, 24)
    dom = geo.moving_domain(spec, 0.7, math.pi / 2, 0.0)
    loc = fem.locator_for(mesh)
    pts = q.sample_polygon_interior(dom.polygon, 200)
    refl = np.array([dom.line.reflect(tuple(p)) for p in pts])
    a = loc.interpolate(res.u, refl)
    b = loc.interpolate(res.u, pts)
    expected = a * a + a * b + b * b
    vals, bound = q.difference_quotient_coeff(mesh, res.u, fem.power(3), dom,
                                              samples=200)
    assert np.abs(vals - expected).max() <= 1e-8 * max(1.0, np.abs(expected).max())
    assert bound == pytest.approx(expected.max(), rel=1e-6)


def test_difference_quotient_zero_f():
    spec, mesh, res = _solve(60, 40, 16)
    dom = geo.moving_domain(spec, 0.7, math.pi / 2, 0.0)
    zero = fem.custom("zero", lambda u: 0.0 * u, lambda u: 0.0 * u)
    vals, bound = q.difference_quotient_coeff(mesh, res.u, zero, dom)
    assert bound == 0.0


# --- report ---------------------------------------------------------------------------

def test_report_text_round_trip_keys():
    spec, mesh, res = _solve(48, 33, 32)
    rep = q.build_report(mesh, res.u, res.mu, spec)
    text = q.report_to_text(rep)
    for key in ("mu =", "max.class =", "max.resolved_class =", "corner.omega =",
                "critical.count =", "all_passed ="):
        assert key in text
    for line in text.strip().splitlines():
        assert " = " in line


def test_report_all_passed_cases():
    for a, b, n in [(45, 45, 24), (48, 33, 32), (30, 30, 24)]:
        spec, mesh, res = _solve(a, b, n)
        rep = q.build_report(mesh, res.u, res.mu, spec)
        assert rep.all_passed(), q.report_to_text(rep)


def test_verdict_margin_tracks_refinement():
    # a strict-sign verdict passing at n keeps passing at 2n, and its worst
    # value does not regress by more than the coarse-mesh allowance
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    coarse = msh.generate(spec, 32)
    rc = fem.solve_eigen(coarse)
    vc = q.directional_monotonicity(coarse, rc.u, spec, 0.0)
    fine = msh.generate(spec, 64)
    rf = fem.solve_eigen(fine)
    vf = q.directional_monotonicity(fine, rf.u, spec, 0.0)
    assert vc.passed and vf.passed
    assert vf.worst_value <= vc.worst_value + vc.tolerance


def test_report_wide_mixed_angle():
    # alpha beyond a right angle: A sits above the axis, the phi-side
    # thresholds are absent, and the report still runs end to end
    spec = geo.make_triangle(100 * DEG, 30 * DEG)
    assert spec.A[1] > 0
    mesh = msh.generate(spec, 24)
    res = fem.solve_eigen(mesh)
    rep = q.build_report(mesh, res.u, res.mu, spec)
    assert rep.monotone_middle_normal.middle_side == "Dirichlet"
    assert rep.tangential_lower is None
    assert rep.all_passed()
