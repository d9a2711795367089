"""
P1 finite element operators on triangles.

Diffusion and consistent mass use closed-form local matrices; convection
and the load vector use the three-point edge-midpoint rule, which is exact
for polynomials of degree two.  All matrices are assembled without
boundary conditions ("Neumann matrices"); :func:`apply_dirichlet` then
produces the block system ``[[A_I, A_B], [0, I]]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

# local mass matrix for |K| = 12
_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])


# ----------------------------------------------------------------------
# coefficient fields

@dataclass(frozen=True)
class Field:
    """Named analytic function of (x, y, t).

    ``func`` receives coordinate arrays and a scalar time and returns an
    array of values (shape ``(n,)`` for scalars, ``(n, 2)`` for vectors).
    """

    name: str
    func: Callable
    vector: bool = False
    time_dependent: bool = False

    def __call__(self, pts, t: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        val = np.asarray(self.func(x, y, t), dtype=float)
        shape = (len(x), 2) if self.vector else (len(x),)
        return np.broadcast_to(val, shape).copy()


def constant(c, name=None) -> Field:
    if np.ndim(c) == 0:
        return Field(name or f"const({c})", lambda x, y, t: float(c))
    c = np.asarray(c, dtype=float)
    return Field(name or f"const({c[0]},{c[1]})", lambda x, y, t: c,
                 vector=True)


ZERO = constant(0.0, "zero")
ONE = constant(1.0, "one")
ZERO_VECTOR = constant((0.0, 0.0), "zero-vector")
ROTATING = Field("rotating", lambda x, y, t: np.column_stack([-y, x]),
                 vector=True)


@dataclass
class ProblemSpec:
    """Coefficients of ``-eps lap u + b.grad u + sigma u = f``, u = g on
    the Dirichlet boundary.

    ``bc`` maps the unit-square sides to ``"d"`` or ``"n"``.
    """

    epsilon: float
    sigma: float = 0.0
    b: Field = ZERO_VECTOR
    f: Field = ZERO
    g: Field = ZERO
    u0: Field = ZERO
    bc: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")


# ----------------------------------------------------------------------
# local quantities

def local_gradients(coords) -> np.ndarray:
    """Gradients of the three barycentric basis functions of one cell.

    Parameters
    ----------
    coords : (3, 2) array
        Vertex coordinates.

    Returns
    -------
    (3, 2) array, row k is grad phi_k.
    """
    coords = np.asarray(coords, dtype=float)
    G = cell_gradients(coords[None])
    return G[0]


def cell_gradients(P: np.ndarray) -> np.ndarray:
    """Vectorised :func:`local_gradients` for (C, 3, 2) vertex arrays."""
    e = np.stack([P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]],
                 axis=1)
    area2 = e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0])
    if np.any(area2 == 0.0):
        raise ValueError("degenerate cell")
    # grad phi_k = perp(e_k) / (2|K|), perp(v) = (-v_y, v_x)
    return np.stack([-e[..., 1], e[..., 0]], axis=-1) / area2[:, None, None]


def mesh_gradients(mesh: Mesh) -> np.ndarray:
    return cell_gradients(mesh.points[mesh.cells])


def edge_midpoints(mesh: Mesh) -> np.ndarray:
    """(C, 3, 2) midpoint of the edge opposite each local vertex."""
    P = mesh.points[mesh.cells]
    return 0.5 * (P[:, [1, 2, 0]] + P[:, [2, 0, 1]])


# phi_i at the midpoint opposite vertex k: 0 if i == k else 1/2
_PHI_AT_MID = 0.5 * (1.0 - np.eye(3))


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_nodes
    rows = np.repeat(mesh.cells, 3, axis=1).reshape(-1)
    cols = np.tile(mesh.cells, (1, 3)).reshape(-1)
    A = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    A.sort_indices()
    return A


def local_diffusion(mesh: Mesh, weights=None) -> np.ndarray:
    """(C, 3, 3) local matrices (grad phi_j, grad phi_i)_K."""
    G = mesh_gradients(mesh)
    w = mesh.areas if weights is None else mesh.areas * weights
    return w[:, None, None] * np.einsum("cid,cjd->cij", G, G)


def assemble_diffusion(mesh: Mesh, weights=None) -> sp.csr_matrix:
    """Stiffness matrix A_d; ``weights`` scales each cell contribution."""
    return _scatter(mesh, local_diffusion(mesh, weights))


def local_convection(mesh: Mesh, b: Field, t: float = 0.0) -> np.ndarray:
    """(C, 3, 3) local entries (b.grad phi_j, phi_i)_K, midpoint rule."""
    G = mesh_gradients(mesh)
    mids = edge_midpoints(mesh)
    bv = b(mids.reshape(-1, 2), t).reshape(-1, 3, 2)
    bg = np.einsum("ckd,cjd->ckj", bv, G)          # b(m_k).grad phi_j
    w = mesh.areas / 3.0
    return w[:, None, None] * np.einsum("ik,ckj->cij", _PHI_AT_MID, bg)


def assemble_convection(mesh: Mesh, b: Field, t: float = 0.0) -> sp.csr_matrix:
    return _scatter(mesh, local_convection(mesh, b, t))


def assemble_mass(mesh: Mesh, weights=None):
    """Consistent and lumped mass matrices ``(M_c, M_l)``.

    The lumped diagonal is taken as the row sums of the assembled
    consistent matrix.  ``weights`` scales each cell contribution.
    """
    w = mesh.areas if weights is None else mesh.areas * weights
    local = (w / 12.0)[:, None, None] * _MASS_REF
    Mc = _scatter(mesh, local)
    Ml = sp.diags(np.asarray(Mc.sum(axis=1)).ravel(), format="csr")
    return Mc, Ml


def assemble_rhs(mesh: Mesh, f: Field, t: float = 0.0,
                 weights=None) -> np.ndarray:
    """Load vector (f, phi_i) with the edge-midpoint rule.

    ``weights`` scales each cell contribution.
    """
    mids = edge_midpoints(mesh)
    fv = f(mids.reshape(-1, 2), t).reshape(-1, 3)
    w = mesh.areas if weights is None else mesh.areas * weights
    loc = (w / 3.0)[:, None] * (fv @ _PHI_AT_MID.T)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.cells.reshape(-1), loc.reshape(-1))
    return out


def cell_integrals(mesh: Mesh, f: Field, t: float = 0.0) -> np.ndarray:
    """Per-cell integral of f with the edge-midpoint rule."""
    fv = f(edge_midpoints(mesh).reshape(-1, 2), t).reshape(-1, 3)
    return mesh.areas / 3.0 * fv.sum(axis=1)


def lumped_rhs(mesh: Mesh, f: Field, t: float = 0.0) -> np.ndarray:
    """Lumped load vector |D_i| f(x_i)."""
    return mesh.lumping_volumes * f(mesh.points, t)


@dataclass
class OperatorBundle:
    """Neumann matrices of one mesh and problem."""

    A_d: sp.csr_matrix
    A_c: sp.csr_matrix
    M_c: sp.csr_matrix
    M_l: sp.csr_matrix


def assemble_operators(mesh: Mesh, problem: ProblemSpec,
                       t: float = 0.0) -> OperatorBundle:
    Mc, Ml = assemble_mass(mesh)
    return OperatorBundle(A_d=assemble_diffusion(mesh),
                          A_c=assemble_convection(mesh, problem.b, t),
                          M_c=Mc, M_l=Ml)


# ----------------------------------------------------------------------
# Dirichlet rows

@dataclass
class DirichletSystem:
    """Block system ``[[A_I, A_B], [0, I]] u = rhs``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_free: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def dirichlet_values(mesh: Mesh, g: Field, t: float = 0.0) -> np.ndarray:
    vals = g(mesh.points[mesh.n_free:], t)
    if not np.all(np.isfinite(vals)):
        bad = mesh.n_free + int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"boundary data not finite at node {bad}")
    return vals


def replace_dirichlet_rows(A: sp.spmatrix, M: int) -> sp.csr_matrix:
    """Keep rows ``< M`` of ``A`` and put identity rows below."""
    A = sp.csr_matrix(A)
    N = A.shape[0]
    top = A[:M]
    bottom = sp.eye(N, format="csr")[M:]
    out = sp.vstack([top, bottom], format="csr")
    out.sort_indices()
    return out


def apply_dirichlet(A_neumann, rhs, mesh: Mesh, g: Field,
                    t: float = 0.0) -> DirichletSystem:
    """Impose ``u_i = g(x_i)`` on the Dirichlet rows.

    The coupling block A_B of the non-Dirichlet rows is retained, so the
    returned matrix has the full block shape used by the DMP checks.
    """
    M = mesh.n_free
    b = np.array(rhs, dtype=float)
    b[M:] = dirichlet_values(mesh, g, t)
    return DirichletSystem(replace_dirichlet_rows(A_neumann, M), b, M)
