import math

import numpy as np
import pytest

from dmpfem.mesh import (DIRICHLET, INTERIOR, NEUMANN, MeshError, build_mesh,
                         canonical_form, edge_cot_sums, generate_equilateral,
                         generate_unit_square, quality_report, read_mesh,
                         red_refine, same_mesh, write_mesh)

BENCH_BC = {"bottom": "d", "right": "d", "left": "n", "top": "n"}


def square_one_diagonal():
    return build_mesh([[0, 0], [1, 0], [0, 1], [1, 1]], [[0, 1, 2], [1, 3, 2]])


def stretched_rectangle():
    # 1 x 4 rectangle cut along the diagonal, then sheared so one angle
    # exceeds pi/2
    return build_mesh([[0, 0], [4, 0], [5, 1], [1, 1]], [[0, 1, 2], [0, 2, 3]])


@pytest.mark.parametrize("level", range(6))
def test_unit_square_counts(level):
    m = generate_unit_square(level)
    assert m.n_nodes == (2 ** level + 1) ** 2
    assert m.n_cells == 2 * 4 ** level
    assert np.all(m.signed_areas > 0)
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-13)


def test_unit_square_node_count_enumerated():
    m = generate_unit_square(5)
    distinct = {(round(x * 32), round(y * 32)) for x, y in m.points}
    assert len(distinct) == m.n_nodes == 33 ** 2


def test_level_zero_diagonal():
    m = generate_unit_square(0)
    assert m.n_nodes == 4 and m.n_cells == 2
    inner = m.edges[m.interior_edge_mask]
    assert len(inner) == 1
    ends = {tuple(m.points[k]) for k in inner[0]}
    assert ends == {(0.0, 1.0), (1.0, 0.0)}


def test_node_ordering_and_corners():
    m = generate_unit_square(3, BENCH_BC)
    k = m.kinds
    M = m.n_free
    assert np.all(k[:M] != DIRICHLET) and np.all(k[M:] == DIRICHLET)
    # corners touching a Dirichlet side are Dirichlet
    for corner in [(0, 0), (1, 0), (1, 1)]:
        idx = np.flatnonzero(np.all(m.points == corner, axis=1))[0]
        assert k[idx] == DIRICHLET
    top_left = np.flatnonzero(np.all(m.points == (0, 1), axis=1))[0]
    assert k[top_left] == NEUMANN


def test_conforming_topology():
    m = generate_unit_square(3)
    ec = m.edge_cells
    inner = ec[:, 1] >= 0
    assert (~inner).sum() == 4 * 8
    assert np.all(ec[:, 0] >= 0)


def test_lumping_volumes():
    m = generate_unit_square(3)
    assert m.lumping_volumes.sum() == pytest.approx(1.0, rel=1e-13)
    patch_area = np.array([m.areas[m.patch(i)].sum() for i in range(m.n_nodes)])
    np.testing.assert_allclose(m.lumping_volumes, patch_area / 3, rtol=1e-14)


def test_connected():
    assert generate_unit_square(2).is_connected()


def test_red_refine_counts_and_angles():
    m0 = generate_unit_square(0)
    m1 = red_refine(m0)
    assert m1.n_cells == 8 and m1.n_nodes == 9
    np.testing.assert_allclose(np.sort(m1.angles, axis=1)[::4],
                               np.sort(m0.angles, axis=1), atol=1e-14)


def test_red_refine_twice_matches_generator():
    m = red_refine(red_refine(generate_unit_square(0, BENCH_BC)))
    assert same_mesh(m, generate_unit_square(2, BENCH_BC))


def test_red_refine_preserves_flags():
    for base in (generate_unit_square(1), generate_equilateral(2),
                 stretched_rectangle()):
        a, b = quality_report(base), quality_report(red_refine(base))
        assert (a.weakly_acute, a.xz_satisfied, a.delaunay) == \
               (b.weakly_acute, b.xz_satisfied, b.delaunay)


def test_red_refine_inherits_boundary_kinds():
    m = red_refine(generate_unit_square(1, BENCH_BC))
    n = generate_unit_square(2, BENCH_BC)
    _, ka, _ = canonical_form(m)
    _, kb, _ = canonical_form(n)
    np.testing.assert_array_equal(ka, kb)


def test_quality_single_diagonal():
    rep = quality_report(square_one_diagonal())
    assert rep.weakly_acute
    assert rep.strictly_acute_margin == pytest.approx(0.0, abs=1e-14)
    assert rep.xz_satisfied and rep.delaunay
    m = square_one_diagonal()
    cs = edge_cot_sums(m)[m.interior_edge_mask]
    assert cs == pytest.approx([0.0], abs=1e-15)


def test_quality_stretched_not_weakly_acute():
    rep = quality_report(stretched_rectangle())
    assert not rep.weakly_acute
    assert rep.max_angle > math.pi / 2


def test_quality_equilateral():
    rep = quality_report(generate_equilateral(4))
    assert rep.strictly_acute_margin == pytest.approx(math.pi / 6, abs=1e-12)
    assert rep.weakly_acute and rep.xz_satisfied and rep.delaunay


@pytest.mark.parametrize("level", range(1, 6))
def test_quality_unit_square_family(level):
    rep = quality_report(generate_unit_square(level))
    assert rep.weakly_acute and rep.xz_satisfied and rep.delaunay
    assert rep.connected


def test_obtuse_pair_violates_xz_and_delaunay():
    # two cells sharing an edge whose opposite angles sum past pi
    m = build_mesh([[0, 0], [1, 0], [0.5, 0.1], [0.5, -0.1]],
                   [[0, 1, 2], [0, 3, 1]])
    rep = quality_report(m)
    assert not rep.xz_satisfied and not rep.delaunay
    assert len(rep.xz_violations) == 1
    a, b, s = rep.xz_violations[0]
    assert {tuple(m.points[a]), tuple(m.points[b])} == {(0.0, 0.0), (1.0, 0.0)}
    assert s < 0


def test_weakly_acute_implies_xz_and_xz_iff_delaunay(rng):
    checked = 0
    while checked < 40:
        ang = np.sort(rng.uniform(0, 2 * np.pi, 4))
        pts = np.column_stack([np.cos(ang), np.sin(ang)]) \
            * rng.uniform(0.3, 1.0, (4, 1))
        e = np.roll(pts, -1, axis=0) - pts
        turn = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] \
            - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(turn <= 1e-6):
            continue                   # keep convex quadrilaterals only
        checked += 1
        m = build_mesh(pts, [[0, 1, 2], [0, 2, 3]])
        rep = quality_report(m)
        if rep.weakly_acute:
            assert rep.xz_satisfied
        assert rep.xz_satisfied == rep.delaunay


def test_mesh_roundtrip(tmp_path):
    m = generate_unit_square(2, BENCH_BC)
    p = tmp_path / "m.txt"
    write_mesh(m, p)
    assert same_mesh(read_mesh(p), m)


def test_mesh_file_missing_node(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("dmpfem-mesh v1\nnodes 3\n0 0 d\n1 0 d\n0 1 d\n"
                 "cells 1\n1 2 4\n")
    with pytest.raises(MeshError, match="cell 1"):
        read_mesh(p)


def test_mesh_file_bad_coordinate(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("dmpfem-mesh v1\nnodes 1\n0 zero d\ncells 0\n")
    with pytest.raises(MeshError, match="line 3, column 2"):
        read_mesh(p)


def test_mesh_file_clockwise_reoriented(tmp_path):
    p = tmp_path / "cw.txt"
    p.write_text("dmpfem-mesh v1\n# clockwise cell\nnodes 3\n0 0 d\n1 0 d\n"
                 "0 1 d\ncells 1\n1 3 2\n")
    with pytest.warns(UserWarning, match="reoriented"):
        m = read_mesh(p)
    assert m.reoriented == 1
    assert quality_report(m).reoriented == 1
    assert np.all(m.signed_areas > 0)


def test_non_conforming_rejected():
    with pytest.raises(MeshError, match="non-conforming"):
        build_mesh([[0, 0], [1, 0], [0, 1], [0, -1], [1, 1]],
                   [[0, 1, 2], [0, 3, 1], [0, 1, 4]])


def test_interior_nodes_first():
    m = generate_unit_square(2)
    assert m.n_free == 9
    assert np.all(m.kinds[:9] == INTERIOR)
