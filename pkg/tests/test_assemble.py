import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from dmpfem.assemble import (ONE, ROTATING, ZERO, Field, ProblemSpec,
                             apply_dirichlet, assemble_convection,
                             assemble_diffusion, assemble_mass, assemble_rhs,
                             constant, local_gradients)
from dmpfem.linalg import solve
from dmpfem.mesh import build_mesh, generate_unit_square

from oracles import p1_local_diffusion

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def reference_mesh():
    return build_mesh(REF, [[0, 1, 2]])


def perturbed_mesh(rng, level=3):
    m = generate_unit_square(level)
    h = 2.0 ** -level
    p = m.points.copy()
    inner = ~m.on_boundary
    p[inner] += rng.uniform(-0.2, 0.2, (inner.sum(), 2)) * h
    return build_mesh(p, m.cells)


def test_local_gradients_reference():
    np.testing.assert_array_equal(local_gradients(REF),
                                  [[-1, -1], [1, 0], [0, 1]])


def test_local_gradients_sum_and_scaling(rng):
    for _ in range(20):
        P = rng.random((3, 2))
        G = local_gradients(P)
        np.testing.assert_allclose(G.sum(axis=0), 0, atol=1e-9 * abs(G).max())
        np.testing.assert_allclose(local_gradients(3.0 * P), G / 3.0,
                                   rtol=1e-12)


def test_degenerate_cell_rejected():
    with pytest.raises(ValueError):
        local_gradients([[0, 0], [1, 1], [2, 2]])


def test_reference_diffusion_matrix():
    A = assemble_diffusion(reference_mesh()).toarray()
    # reorder to the reference vertex order
    m = reference_mesh()
    order = [np.flatnonzero(np.all(m.points == v, axis=1))[0] for v in REF]
    np.testing.assert_allclose(A[np.ix_(order, order)],
                               [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]],
                               rtol=1e-13, atol=1e-15)


def test_diffusion_matches_dense_oracle(rng):
    m = perturbed_mesh(rng)
    A = assemble_diffusion(m).toarray()
    ref = np.zeros_like(A)
    for c in m.cells:
        ref[np.ix_(c, c)] += p1_local_diffusion(m.points[c])
    np.testing.assert_allclose(A, ref, atol=1e-12)


def test_diffusion_cotangent_form():
    m = generate_unit_square(2)
    A = assemble_diffusion(m)
    cot = m.cotangents
    for e, (a, b) in enumerate(m.edges):
        s = sum(cot[c, k] for c, k in zip(m.edge_cells[e], m.edge_local[e])
                if c >= 0)
        assert A[a, b] == pytest.approx(-0.5 * s, abs=1e-14)


@pytest.mark.parametrize("level", [1, 3, 5])
def test_diffusion_row_sums_and_signs(level):
    A = assemble_diffusion(generate_unit_square(level))
    np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 0, atol=1e-12)
    off = A - sp.diags(A.diagonal())
    assert off.max() <= 1e-14
    assert abs(A - A.T).max() == 0


def test_diffusion_energy_exact(rng):
    m = perturbed_mesh(rng)
    A = assemble_diffusion(m)
    # u = 2x - 3y + 1, v = x + y: grad u . grad v = -1 everywhere
    x, y = m.points.T
    u, v = 2 * x - 3 * y + 1, x + y
    assert v @ (A @ u) == pytest.approx(-1.0, rel=1e-12)


def test_convection_reference_constant_b():
    m = reference_mesh()
    C = assemble_convection(m, constant((1.0, 0.0))).toarray()
    order = [np.flatnonzero(np.all(m.points == v, axis=1))[0] for v in REF]
    C = C[np.ix_(order, order)]
    for i in range(3):
        np.testing.assert_allclose(C[i], [-1 / 6, 1 / 6, 0], atol=1e-15)


def test_convection_row_sums_rotating():
    for level in (2, 4):
        m = generate_unit_square(level)
        A = 1e-5 * assemble_diffusion(m) + assemble_convection(m, ROTATING)
        np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 0,
                                   atol=1e-10)


def test_convection_partial_antisymmetry():
    # solenoidal affine field; interior node pairs only
    m = generate_unit_square(3)
    C = assemble_convection(m, ROTATING).toarray()
    inner = ~m.on_boundary
    S = C[np.ix_(inner, inner)]
    np.testing.assert_allclose(S, -S.T, atol=1e-10)


def test_convection_quadrature_exact_affine_b(rng):
    # (b . grad phi_j, phi_i) with affine b: dense oracle from the
    # degree-2 exactness of the edge-midpoint rule applied per cell
    m = perturbed_mesh(rng, 2)
    b = Field("affine", lambda x, y, t: np.column_stack([1 + 2 * x - y,
                                                         0.5 - x + 3 * y]),
              vector=True)
    C = assemble_convection(m, b).toarray()
    ref = np.zeros_like(C)
    for c in m.cells:
        P = m.points[c]
        G = p1_gradients(P)
        area = 0.5 * abs(np.linalg.det(np.column_stack([np.ones(3), P])))
        # integral of phi_i b exactly: b affine, phi_i linear -> product
        # of linears integrated with the vertex-mass matrix
        bv = b(P)
        Mloc = area / 12 * (np.ones((3, 3)) + np.eye(3))
        ref[np.ix_(c, c)] += Mloc @ (bv @ G.T)
    np.testing.assert_allclose(C, ref, atol=1e-13)


def p1_gradients(P):
    V = np.column_stack([np.ones(3), P])
    return np.linalg.inv(V)[1:].T


def test_local_mass_exact():
    m = reference_mesh()
    Mc, Ml = assemble_mass(m)
    ref = (0.5 / 12) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    np.testing.assert_allclose(Mc.toarray(), ref, rtol=1e-13)


def test_lumped_mass_row_sums_bitwise():
    m = generate_unit_square(4)
    Mc, Ml = assemble_mass(m)
    assert np.array_equal(Ml.diagonal(), np.asarray(Mc.sum(axis=1)).ravel())
    assert Ml.diagonal().sum() == pytest.approx(1.0, rel=1e-13)
    np.testing.assert_allclose(Ml.diagonal(), m.lumping_volumes, rtol=1e-14)
    assert abs(Mc - Mc.T).max() == 0


def test_rhs_values(rng):
    m = perturbed_mesh(rng)
    np.testing.assert_array_equal(assemble_rhs(m, ZERO), 0)
    np.testing.assert_allclose(assemble_rhs(m, ONE), m.lumping_volumes,
                               rtol=1e-13)
    f = Field("lin", lambda x, y, t: 1 + 2 * x - 3 * y)
    Mc = assemble_mass(m)[0]
    x, y = m.points.T
    exact = Mc @ (1 + 2 * x - 3 * y)      # (f, phi_i) for f in the P1 space
    np.testing.assert_allclose(assemble_rhs(m, f), exact, rtol=1e-13)


def test_apply_dirichlet_block_shape():
    m = generate_unit_square(2, {"left": "n"})
    A = assemble_diffusion(m)
    sysm = apply_dirichlet(A, np.ones(m.n_nodes), m, ZERO)
    M = m.n_free
    np.testing.assert_array_equal(sysm.rhs[M:], 0)
    np.testing.assert_array_equal(sysm.rhs[:M], 1)
    low = sysm.matrix[M:].toarray()
    np.testing.assert_array_equal(low, np.eye(m.n_nodes)[M:])
    np.testing.assert_array_equal(sysm.matrix[:M].toarray(), A[:M].toarray())


def test_determinant_equivalence():
    m = generate_unit_square(2, {"left": "n", "top": "n"})
    assert 10 <= m.n_nodes <= 30
    A = assemble_diffusion(m) + assemble_convection(m, ROTATING)
    sysm = apply_dirichlet(A, np.zeros(m.n_nodes), m, ZERO)
    M = m.n_free
    full = np.linalg.det(sysm.matrix.toarray())
    assert full == pytest.approx(np.linalg.det(A.toarray()[:M, :M]), rel=1e-12)


def test_dirichlet_rejects_non_finite():
    m = generate_unit_square(1)
    with pytest.raises(ValueError, match="not finite"):
        apply_dirichlet(assemble_diffusion(m), np.zeros(m.n_nodes), m,
                        Field("bad", lambda x, y, t: np.full_like(x, np.nan)))


def test_poisson_reproduces_linear():
    m = generate_unit_square(3)
    g = Field("lin", lambda x, y, t: 0.3 + x - 2 * y)
    sysm = apply_dirichlet(assemble_diffusion(m), np.zeros(m.n_nodes), m, g)
    u = solve(sysm.matrix, sysm.rhs)
    np.testing.assert_allclose(u, g(m.points), atol=1e-10)


def test_problem_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec(epsilon=0.0)
    with pytest.raises(ValueError):
        ProblemSpec(epsilon=1.0, sigma=-1.0)


triangles = st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
                     min_size=3, max_size=3).filter(
    lambda P: abs((P[1][0] - P[0][0]) * (P[2][1] - P[0][1])
                  - (P[1][1] - P[0][1]) * (P[2][0] - P[0][0])) > 1e-3)


@given(triangles)
def test_property_local_matrices(P):
    m = build_mesh(P, [[0, 1, 2]])
    A = assemble_diffusion(m).toarray()
    Mc, Ml = assemble_mass(m)
    scale = abs(A).max()
    np.testing.assert_allclose(A.sum(axis=1), 0, atol=1e-12 * scale)
    np.testing.assert_allclose(A, A.T, atol=1e-14 * scale)
    assert np.linalg.eigvalsh(A).min() >= -1e-12 * scale
    assert Mc.sum() == pytest.approx(m.areas[0], rel=1e-12)
    assert np.all(Ml.diagonal() > 0)


@given(st.integers(0, 3), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_property_diffusion_kills_affine(level, c, a, b):
    m = generate_unit_square(level)
    u = c + a * m.points[:, 0] + b * m.points[:, 1]
    # interior rows of the stiffness matrix annihilate affine functions
    r = (assemble_diffusion(m) @ u)[~m.on_boundary]
    np.testing.assert_allclose(r, 0, atol=1e-11 * (1 + abs(a) + abs(b) + abs(c)))
