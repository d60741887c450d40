import math

import numpy as np
import pytest

from trimono import fem
from trimono import geometry as geo
from trimono import mesh as msh
from trimono.errors import NoConvergence, OutsideDomain

DEG = math.pi / 180.0


def _unit_right_cell():
    return msh.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                    np.array([[0, 1, 2]]),
                    [(0, 1, msh.NEUMANN_LOWER)], 1, 1.0)


def test_element_stiffness_unit_right():
    K, _ = fem.assemble(_unit_right_cell())
    expected = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    assert np.allclose(K.toarray(), expected, atol=1e-14)


def test_element_mass_unit_right():
    _, M = fem.assemble(_unit_right_cell())
    expected = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    assert np.allclose(M.toarray(), expected, atol=1e-15)


def test_constant_field_identities():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 8)
    K, M = fem.assemble(mesh)
    c = 3.7 * np.ones(mesh.num_vertices)
    assert np.abs(K @ c).max() <= 1e-12
    assert c @ (M @ c) == pytest.approx(3.7 ** 2 * spec.area, rel=1e-12)
    assert fem.symmetry_error(K) <= 1e-13
    assert fem.symmetry_error(M) <= 1e-13


def test_lumped_mass_preserves_row_sums():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 6)
    _, M = fem.assemble(mesh)
    _, ML = fem.assemble(mesh, lumped=True)
    assert np.allclose(np.asarray(M.sum(axis=1)).ravel(),
                       ML.diagonal(), atol=1e-14)


def test_apply_dirichlet_counts_and_embedding():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    mesh = msh.generate(spec, 1)
    K, M = fem.assemble(mesh)
    red = fem.apply_dirichlet(K, M, mesh)
    assert red.K.shape == (1, 1)           # 2 of 3 vertices are Dirichlet
    u = red.embed(np.array([2.5]))
    assert u[red.dirichlet].max() == 0.0
    assert u.sum() == 2.5
    assert np.array_equal(red.restrict(u), np.array([2.5]))


def test_reduced_stiffness_positive_definite():
    for a, b in [(45, 45), (48, 33), (70, 20)]:
        spec = geo.make_triangle(a * DEG, b * DEG)
        mesh = msh.generate(spec, 6)
        K, M = fem.assemble(mesh)
        red = fem.apply_dirichlet(K, M, mesh)
        evals = np.linalg.eigvalsh(red.K.toarray())
        assert evals.min() > 0


def test_eigen_closed_form_convergence():
    # Double reflection across the Neumann legs tiles the square [-1,1]^2,
    # so the first mixed eigenvalue of the (pi/4, pi/4) spec triangle is
    # pi^2/2 (the unit-leg normalization of the same triangle gives pi^2).
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    target = math.pi ** 2 / 2
    errs = []
    for n in (16, 32, 64):
        res = fem.solve_eigen(msh.generate(spec, n))
        assert res.positive
        errs.append(res.mu - target)
    assert errs[0] > errs[1] > errs[2] > 0          # from above, decreasing
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)   # O(h^2)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_eigen_monotone_under_nested_refinement():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 4)
    mus = []
    for _ in range(4):
        mus.append(fem.solve_eigen(mesh, tol=1e-11).mu)
        mesh = msh.refine(mesh)
    assert all(m2 <= m1 + 1e-12 for m1, m2 in zip(mus, mus[1:]))


def test_eigen_deterministic():
    spec = geo.make_triangle(48 * DEG, 33 * DEG)
    mesh = msh.generate(spec, 12)
    r1 = fem.solve_eigen(mesh, seed=3)
    r2 = fem.solve_eigen(mesh, seed=3)
    assert r1.mu == r2.mu
    assert np.array_equal(r1.u, r2.u)


def test_eigen_normalization_and_zero_boundary():
    spec = geo.make_triangle(60 * DEG, 30 * DEG)
    mesh = msh.generate(spec, 16)
    res = fem.solve_eigen(mesh)
    _, M = fem.assemble(mesh)
    assert res.u @ (M @ res.u) == pytest.approx(1.0, abs=1e-10)
    assert np.abs(res.u[mesh.dirichlet_vertices()]).max() == 0.0
    assert res.residual <= fem.DEFAULT_TOL


def test_eigen_no_convergence_error():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    mesh = msh.generate(spec, 8)
    K, M = fem.assemble(mesh)
    red = fem.apply_dirichlet(K, M, mesh)
    with pytest.raises(NoConvergence):
        fem.smallest_eigenpair(red.K, red.M, tol=1e-16, max_iter=3)


def test_isosceles_discrete_symmetry():
    spec = geo.make_triangle(30 * DEG, 30 * DEG)
    mesh = msh.generate(spec, 32, msh.default_grading(spec))
    res = fem.solve_eigen(mesh)
    v = mesh.vertices
    order = np.lexsort((np.round(v[:, 1], 9), np.round(v[:, 0], 9)))
    mirror = np.lexsort((np.round(-v[:, 1], 9), np.round(v[:, 0], 9)))
    err = np.abs(res.u[order] - res.u[mirror]).max()
    assert err <= 1e-8 * np.abs(res.u).max()


def test_semilinear_linear_from_eigenfunction():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    mesh = msh.generate(spec, 16)
    eig = fem.solve_eigen(mesh)
    result = fem.solve_semilinear(mesh, fem.linear(eig.mu), eig.u)
    assert result.converged
    assert result.iterations <= 1
    assert result.positivity


def test_semilinear_power3_positive_and_quadratic():
    spec = geo.make_triangle(math.pi / 3, math.pi / 6)
    mesh = msh.generate(spec, 32)
    eig = fem.solve_eigen(mesh)
    nl = fem.power(3)
    u0 = fem.eigenfunction_start(mesh, nl, eig)
    result = fem.solve_semilinear(mesh, nl, u0, tol=1e-12)
    assert result.converged and result.positivity
    h = result.newton_history
    # quadratic contraction r_{k+1} <= C r_k^2 on every step above the
    # machine-precision floor
    pairs = [(h[k + 1], h[k]) for k in range(len(h) - 1) if h[k + 1] > 1e-13]
    assert len(pairs) >= 3
    assert all(nxt <= 50.0 * prev ** 2 for nxt, prev in pairs)


def test_semilinear_zero_f_gives_zero():
    spec = geo.make_triangle(math.pi / 3, math.pi / 6)
    mesh = msh.generate(spec, 8)
    eig = fem.solve_eigen(mesh)
    zero = fem.custom("zero", lambda u: 0.0 * u, lambda u: 0.0 * u)
    result = fem.solve_semilinear(mesh, zero, eig.u, tol=1e-12)
    assert np.abs(result.u).max() <= 1e-12


def test_semilinear_jacobian_matches_finite_differences():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 8)
    K, M = fem.assemble(mesh)
    red = fem.apply_dirichlet(K, M, mesh)
    nl = fem.logistic(8.0, 2.0)
    rng = np.random.default_rng(0)
    u = np.zeros(mesh.num_vertices)
    u[red.free] = rng.uniform(0.2, 1.0, red.free.size)
    dv = np.zeros(mesh.num_vertices)
    dv[red.free] = rng.standard_normal(red.free.size)
    eps = 1e-6
    fd = (fem.semilinear_residual(K, M, red.free, nl, u + eps * dv)
          - fem.semilinear_residual(K, M, red.free, nl, u - eps * dv)) / (2 * eps)
    J = (K - M @ __import__("scipy.sparse", fromlist=["diags"]).diags(nl.fprime(u)))
    exact = (J @ dv)[red.free]
    assert np.abs(fd - exact).max() <= 1e-5 * (np.abs(exact).max() + 1.0)


def test_nonlinearity_derivative_consistency():
    for nl in (fem.linear(5.0), fem.power(3), fem.logistic(4.0, 1.5)):
        assert fem.derivative_consistency(nl, 0.1, 2.0) <= 1e-6


def test_gradient_field_exact_for_linears():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 8)
    u = mesh.vertices[:, 0]
    assert np.abs(fem.gradient_field(mesh, u) - [1.0, 0.0]).max() <= 1e-13
    u2 = 3 * mesh.vertices[:, 0] - 2 * mesh.vertices[:, 1]
    assert np.abs(fem.gradient_field(mesh, u2) - [3.0, -2.0]).max() <= 1e-12


def test_gradient_field_first_order_on_quadratic():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    errs = []
    for n in (8, 16, 32):
        mesh = msh.generate(spec, n)
        u = mesh.vertices[:, 0] ** 2
        b = mesh.barycenters()
        g = fem.gradient_field(mesh, u)
        errs.append(np.abs(g[:, 0] - 2 * b[:, 0]).max())
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.2)


def test_interpolate_exactness():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    mesh = msh.generate(spec, 8)
    u = 3 * mesh.vertices[:, 0] - 2 * mesh.vertices[:, 1] + 0.5
    for k in (0, 7, 20):
        p = tuple(mesh.vertices[k])
        assert fem.interpolate(mesh, u, p) == pytest.approx(u[k], rel=1e-13)
    rng = np.random.default_rng(2)
    for _ in range(30):
        lam = rng.dirichlet([1, 1, 1])
        p = lam @ np.array([spec.O, spec.A, spec.B])
        assert fem.interpolate(mesh, u, tuple(p)) == pytest.approx(
            3 * p[0] - 2 * p[1] + 0.5, rel=1e-12)


def test_interpolate_dirichlet_boundary_zero():
    spec = geo.make_triangle(math.pi / 3, math.pi / 6)
    mesh = msh.generate(spec, 16)
    res = fem.solve_eigen(mesh)
    for y in np.linspace(spec.A[1] + 1e-6, spec.B[1] - 1e-6, 9):
        assert abs(fem.interpolate(mesh, res.u, (1.0, float(y)))) <= 1e-12


def test_interpolate_outside_raises():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    mesh = msh.generate(spec, 4)
    u = np.ones(mesh.num_vertices)
    with pytest.raises(OutsideDomain):
        fem.interpolate(mesh, u, (2.0, 0.0))
    with pytest.raises(OutsideDomain):
        fem.interpolate(mesh, u, (0.5, 0.9))


def test_eigenfunction_start_rejects_subcritical_logistic():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    mesh = msh.generate(spec, 8)
    eig = fem.solve_eigen(mesh)
    with pytest.raises(Exception):
        fem.eigenfunction_start(mesh, fem.logistic(eig.mu * 0.5, 1.0), eig)


def test_eigen_positive_at_free_nodes_across_specs():
    for a, b in [(45, 45), (60, 40), (48, 33), (30, 30), (70, 20)]:
        spec = geo.make_triangle(a * DEG, b * DEG)
        mesh = msh.generate(spec, 24, msh.default_grading(spec))
        res = fem.solve_eigen(mesh)
        assert res.positive, (a, b, res.min_free_value)
