import io
import math

import numpy as np
import pytest

from trimono import geometry as geo
from trimono import mesh as msh
from trimono.errors import ParamDomain

DEG = math.pi / 180.0


def test_counts_small():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    m1 = msh.generate(spec, 1)
    assert m1.num_vertices == 3 and m1.num_cells == 1
    assert len(m1.boundary_edges) == 3
    m4 = msh.generate(spec, 4)
    assert m4.num_vertices == 15 and m4.num_cells == 16


@pytest.mark.parametrize("n", [1, 2, 5, 8, 13])
def test_count_formulas(n):
    spec = geo.make_triangle(50 * DEG, 40 * DEG)
    m = msh.generate(spec, n)
    assert m.num_vertices == (n + 1) * (n + 2) // 2
    assert m.num_cells == n * n


def test_generate_rejects_bad_params():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    with pytest.raises(ParamDomain):
        msh.generate(spec, 0)
    with pytest.raises(ParamDomain):
        msh.generate(spec, 4, 0.5)


def test_area_and_tag_lengths():
    for a, b in [(45, 45), (60, 40), (48, 33), (30, 30)]:
        spec = geo.make_triangle(a * DEG, b * DEG)
        m = msh.generate(spec, 8, msh.default_grading(spec))
        assert m.signed_areas().sum() == pytest.approx(spec.area, rel=1e-12)

        def taglen(tag):
            return sum(np.linalg.norm(m.vertices[i] - m.vertices[j])
                       for i, j, t in m.boundary_edges if t == tag)

        assert taglen(msh.DIRICHLET) == pytest.approx(spec.dirichlet_len, rel=1e-10)
        assert taglen(msh.NEUMANN_LOWER) == pytest.approx(spec.phi0, rel=1e-10)
        assert taglen(msh.NEUMANN_UPPER) == pytest.approx(spec.psi0, rel=1e-10)


def test_validate_structured_uniform():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    report = msh.validate(msh.generate(spec, 8), spec)
    assert report.ok
    assert report.min_angle == pytest.approx(45.0, abs=1e-9)


def test_validate_flags_flipped_cell():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    m = msh.generate(spec, 4)
    cells = m.cells.copy()
    cells[3] = cells[3][::-1]
    bad = msh.Mesh(m.vertices.copy(), cells, list(m.boundary_edges), m.n, m.grading)
    report = msh.validate(bad, spec)
    assert any("non-positive area" in v for v in report.violations)


def test_graded_mesh_valid_and_min_angle_stable():
    spec = geo.make_triangle(30 * DEG, 30 * DEG)
    s = msh.default_grading(spec)
    assert s == pytest.approx(4.0 / 3.0, rel=1e-12)
    angles = []
    for n in (8, 16, 32):
        m = msh.generate(spec, n, s)
        report = msh.validate(m, spec)
        assert report.ok
        angles.append(report.min_angle)
    assert min(angles) > 0.8 * max(angles)   # bounded below, no degeneration


def test_grading_shrinks_cells_near_vertex():
    spec = geo.make_triangle(30 * DEG, 30 * DEG)
    for n in (16, 32):
        uniform = msh.generate(spec, n, 1.0)
        graded = msh.generate(spec, n, 4.0 / 3.0)
        ratio = graded.edge_lengths().min() / uniform.edge_lengths().min()
        assert ratio == pytest.approx(n ** (1 - 4.0 / 3.0), rel=1e-6)


def test_default_grading_non_obtuse_is_one():
    assert msh.default_grading(geo.make_triangle(math.pi / 3, math.pi / 6)) == 1.0
    assert msh.default_grading(geo.make_triangle(48 * DEG, 33 * DEG)) == \
        pytest.approx(2 * (99 * DEG) / math.pi, rel=1e-12)


def test_refine_counts_and_nesting():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    m1 = msh.generate(spec, 1)
    m2 = msh.refine(m1)
    assert m2.num_vertices == 6 and m2.num_cells == 4
    m = msh.generate(spec, 2)
    mm = msh.refine(msh.refine(m))
    assert mm.num_cells == 16 * m.num_cells
    coarse = {tuple(v) for v in m.vertices}
    fine = {tuple(v) for v in mm.vertices}
    assert coarse <= fine


def test_refine_preserves_invariants_and_quarters_areas():
    spec = geo.make_triangle(60 * DEG, 40 * DEG)
    m = msh.generate(spec, 4)
    r = msh.refine(m)
    assert msh.validate(r, spec).ok
    assert r.signed_areas().sum() == pytest.approx(spec.area, rel=1e-12)
    assert r.signed_areas().max() == pytest.approx(m.signed_areas().max() / 4, rel=1e-12)
    assert r.signed_areas().min() == pytest.approx(m.signed_areas().min() / 4, rel=1e-12)


def test_text_round_trip_bit_exact():
    spec = geo.make_triangle(48 * DEG, 33 * DEG)
    m = msh.generate(spec, 6, 1.2)
    buf = io.StringIO()
    msh.write_text(m, buf)
    buf.seek(0)
    m2 = msh.read_text(buf)
    assert (m2.vertices == m.vertices).all()
    assert (m2.cells == m.cells).all()
    assert m2.boundary_edges == m.boundary_edges
    assert m2.n == m.n and m2.grading == m.grading
    buf2 = io.StringIO()
    msh.write_text(m2, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_mesh_arrays_are_readonly():
    spec = geo.make_triangle(math.pi / 4, math.pi / 4)
    m = msh.generate(spec, 2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
