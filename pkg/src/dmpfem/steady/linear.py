"""Linear steady schemes: Galerkin, USFEM, isotropic artificial diffusion,
Tabata upwind and the edge-averaged (exponentially fitted) method."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .. import linalg
from ..assemble import (ProblemSpec, assemble_convection, assemble_diffusion,
                        assemble_mass, assemble_rhs, lumped_rhs,
                        mesh_gradients)
from ..mesh import NEUMANN, Mesh, quality_report
from .common import (MeshConditionError, SchemeError, SolveReport, audit,
                     b_vanishes, cell_b_norm, dirichlet_system, timed)


def _finish(name, mesh, problem, A, rhs, meta=None) -> SolveReport:
    sys_ = dirichlet_system(A, rhs, mesh, problem.g)
    u = linalg.solve(sys_.matrix, sys_.rhs)
    rep = SolveReport(solution=u, scheme=name, system=sys_, meta=meta or {})
    return audit(rep)


@timed
def galerkin(problem: ProblemSpec, mesh: Mesh) -> SolveReport:
    """Standard P1 Galerkin method with consistent reaction term."""
    Mc, _ = assemble_mass(mesh)
    A = (problem.epsilon * assemble_diffusion(mesh)
         + assemble_convection(mesh, problem.b) + problem.sigma * Mc)
    return _finish("galerkin", mesh, problem, A, assemble_rhs(mesh, problem.f))


def galerkin_dmp_condition(problem: ProblemSpec, mesh: Mesh,
                           delta: float | None = None) -> bool:
    """Sufficient mesh condition for the Galerkin matrix to be of
    non-negative type.

    Requires ``(h_K + h_K') |b|_inf / (3 tan(delta/2)) <= eps`` for all
    pairs of cells sharing an interior edge, with ``delta`` the average
    acute margin of the mesh.
    """
    if delta is None:
        delta = quality_report(mesh).average_acute_margin
    if delta <= 0:
        return False
    h = mesh.cell_diameters
    ec = mesh.edge_cells[mesh.interior_edge_mask]
    hsum = (h[ec[:, 0]] + h[ec[:, 1]]).max(initial=0.0)
    bmax = cell_b_norm(mesh, problem.b).max()
    return hsum * bmax / (3.0 * np.tan(delta / 2.0)) <= problem.epsilon


@timed
def usfem(problem: ProblemSpec, mesh: Mesh) -> SolveReport:
    """Unusual stabilized FEM for reaction-diffusion problems.

    The reaction term and the load are weighted cellwise by
    ``eps / (sigma h_K^2 + eps)``, i.e. the stabilization with
    ``tau_K = h_K^2 / (sigma h_K^2 + eps)`` subtracts ``sigma tau_K``
    times the reaction residual from both sides.
    """
    if not b_vanishes(mesh, problem.b):
        raise SchemeError("USFEM is defined for b = 0 only")
    eps, sig = problem.epsilon, problem.sigma
    w = eps / (sig * mesh.cell_diameters ** 2 + eps)
    Mw, _ = assemble_mass(mesh, weights=sig * w)
    A = eps * assemble_diffusion(mesh) + Mw
    rhs = assemble_rhs(mesh, problem.f, weights=w)
    return _finish("usfem", mesh, problem, A, rhs,
                   {"sigma_eff_max": float((sig * w).max())})


def artdiff_c0_floor(mesh: Mesh) -> float:
    """Smallest admissible ``c0`` for the artificial-diffusion method.

    Maximum over cell pairs sharing an interior edge of
    ``(h_K + h_K') / (3 min(h_K, h_K'))``.
    """
    h = mesh.cell_diameters
    ec = mesh.edge_cells[mesh.interior_edge_mask]
    if not len(ec):
        return 0.0
    a, b = h[ec[:, 0]], h[ec[:, 1]]
    return float(((a + b) / (3.0 * np.minimum(a, b))).max())


def artdiff_viscosity(problem: ProblemSpec, mesh: Mesh, c0: float,
                      delta: float) -> np.ndarray:
    """Cellwise added diffusion ``max{c0 h_K |b|_inf / tan(delta/2) - eps, 0}``."""
    bmax = cell_b_norm(mesh, problem.b).max()
    val = c0 * mesh.cell_diameters * bmax / np.tan(delta / 2.0)
    return np.maximum(val - problem.epsilon, 0.0)


@timed
def artificial_diffusion(problem: ProblemSpec, mesh: Mesh,
                         c0: float | None = None,
                         delta: float | None = None) -> SolveReport:
    """Isotropic linear artificial diffusion with lumped reaction.

    Parameters
    ----------
    c0 : float, optional
        Defaults to the mesh floor from :func:`artdiff_c0_floor`; smaller
        values are rejected.
    delta : float, optional
        Average-acute margin.  Computed from the mesh when omitted; an
        explicit value lets callers study meshes whose computed margin is
        zero, where the DMP theory does not apply.
    """
    floor = artdiff_c0_floor(mesh)
    if c0 is None:
        c0 = floor
    elif c0 < floor - 1e-14:
        raise SchemeError(f"c0 = {c0} below the mesh floor {floor:.6g}")
    computed = quality_report(mesh).average_acute_margin
    if delta is None:
        delta = computed
        if delta <= 0:
            raise MeshConditionError(
                f"mesh is not average acute (margin {delta:.3e} rad)")
    elif not delta > 0:
        raise ValueError("delta must be positive")
    eps_t = artdiff_viscosity(problem, mesh, c0, delta)
    _, Ml = assemble_mass(mesh)
    A = (assemble_diffusion(mesh, weights=problem.epsilon + eps_t)
         + assemble_convection(mesh, problem.b) + problem.sigma * Ml)
    meta = {"c0": c0, "c0_floor": floor, "delta": delta,
            "delta_computed": computed, "eps_tilde_max": float(eps_t.max())}
    return _finish("artdiff", mesh, problem, A,
                   assemble_rhs(mesh, problem.f), meta)


# ----------------------------------------------------------------------
# upwind

def upwind_cells(mesh: Mesh, bnodal: np.ndarray, rtol: float = 1e-12):
    """Upwind cell of every node.

    The upwind cell of node i is the cell K containing x_i for which
    ``-b(x_i)`` points into K, i.e. lies in the cone spanned by the two
    edges of K leaving x_i.  Ties (``-b`` along a shared edge) go to the
    lowest cell index.  Returns -1 where ``b(x_i) = 0`` or no such cell
    exists (outflow corners of the boundary).
    """
    C = mesh.n_cells
    cells = mesh.cells
    P = mesh.points
    i = cells.reshape(-1)
    p = cells[:, [1, 2, 0]].reshape(-1)
    q = cells[:, [2, 0, 1]].reshape(-1)
    cid = np.repeat(np.arange(C), 3)
    w = -bnodal[i]
    ep = P[p] - P[i]
    eq = P[q] - P[i]
    nw = np.linalg.norm(w, axis=1)
    cp = ep[:, 0] * w[:, 1] - ep[:, 1] * w[:, 0]      # ep x w
    cq = w[:, 0] * eq[:, 1] - w[:, 1] * eq[:, 0]      # w x eq
    tp = rtol * nw * np.linalg.norm(ep, axis=1)
    tq = rtol * nw * np.linalg.norm(eq, axis=1)
    ok = (nw > 0) & (cp >= -tp) & (cq >= -tq)
    up = np.full(mesh.n_nodes, C)
    np.minimum.at(up, i[ok], cid[ok])
    up[up == C] = -1
    return up


def assemble_upwind_convection(mesh: Mesh, b, t: float = 0.0) -> sp.csr_matrix:
    """Tabata's upwind convection matrix.

    Row i holds ``|D_i| b(x_i) . grad phi_j |_{K_i}`` for the vertices j of
    the upwind cell K_i, and is empty when K_i does not exist.
    """
    bn = b(mesh.points, t)
    up = upwind_cells(mesh, bn)
    G = mesh_gradients(mesh)
    rows = np.flatnonzero(up >= 0)
    K = up[rows]
    vals = np.einsum("nd,nkd->nk", bn[rows], G[K]) \
        * mesh.lumping_volumes[rows, None]
    n = mesh.n_nodes
    C = sp.coo_matrix((vals.ravel(), (np.repeat(rows, 3),
                                      mesh.cells[K].ravel())), shape=(n, n))
    return C.tocsr()


@timed
def tabata_upwind(problem: ProblemSpec, mesh: Mesh) -> SolveReport:
    """Tabata's upwind method with lumped reaction and lumped load."""
    _, Ml = assemble_mass(mesh)
    A = (problem.epsilon * assemble_diffusion(mesh)
         + assemble_upwind_convection(mesh, problem.b)
         + problem.sigma * Ml)
    return _finish("upwind", mesh, problem, A, lumped_rhs(mesh, problem.f))


# ----------------------------------------------------------------------
# edge-averaged

_EXP_CLAMP = 700.0


def bernoulli(t) -> np.ndarray:
    """B(t) = t / (exp(t) - 1), B(0) = 1.

    A four-term series is used for |t| < 1e-4 and the exponent is clamped
    at +-700.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    ts = t[small]
    out[small] = 1.0 - ts / 2.0 + ts ** 2 / 12.0 - ts ** 4 / 720.0
    tl = t[~small]
    # beyond the clamp expm1 is -1 or huge, giving B = -t or ~0
    out[~small] = tl / np.expm1(np.clip(tl, -_EXP_CLAMP, _EXP_CLAMP))
    return out


def assemble_edge_averaged(mesh: Mesh, problem: ProblemSpec,
                           t: float = 0.0) -> sp.csr_matrix:
    """Matrix of the edge-averaged finite element method.

    Off-diagonal ``a_ij = eps l_ij B(beta_ij)`` with
    ``beta_ij = b(m_E) . (x_j - x_i) / eps`` evaluated at the edge
    midpoint, and diagonal entries chosen so every column sums to zero.
    """
    eps = problem.epsilon
    Ad = assemble_diffusion(mesh)
    E = mesh.edges
    i, j = E[:, 0], E[:, 1]
    ell = np.asarray(Ad[i, j]).ravel()
    P = mesh.points
    bm = problem.b(0.5 * (P[i] + P[j]), t)
    beta = (bm * (P[j] - P[i])).sum(axis=1) / eps
    a_ij = eps * ell * bernoulli(beta)
    a_ji = eps * ell * bernoulli(-beta)
    n = mesh.n_nodes
    diag = np.zeros(n)
    np.add.at(diag, j, -a_ij)       # column j holds a_ij
    np.add.at(diag, i, -a_ji)
    A = sp.coo_matrix((np.concatenate([a_ij, a_ji, diag]),
                       (np.concatenate([i, j, np.arange(n)]),
                        np.concatenate([j, i, np.arange(n)]))),
                      shape=(n, n)).tocsr()
    A.sort_indices()
    return A


def boundary_flux_term(mesh: Mesh, b, t: float = 0.0) -> sp.csr_matrix:
    """Lumped ``int_{Gamma_N} (b.n) u v`` over the Neumann edges.

    Each Neumann edge gives ``|E| (b(m_E).n_E) / 2`` to both endpoint
    diagonals, with n_E the outward unit normal.
    """
    E = mesh.bnd_edges[mesh.bnd_kinds == NEUMANN]
    n = mesh.n_nodes
    if not len(E):
        return sp.csr_matrix((n, n))
    P = mesh.points
    a, c = P[E[:, 0]], P[E[:, 1]]
    t_vec = c - a
    nrm = np.column_stack([t_vec[:, 1], -t_vec[:, 0]])
    # orient outward: away from the barycentre of the adjacent cell
    eid = {tuple(e): k for k, e in enumerate(mesh.edges.tolist())}
    cell = mesh.edge_cells[[eid[tuple(e)] for e in E.tolist()], 0]
    inward = mesh.barycenters[cell] - a
    nrm[(nrm * inward).sum(axis=1) > 0] *= -1.0
    # |E| n_E equals the unnormalised normal
    flux = 0.5 * (b(0.5 * (a + c), t) * nrm).sum(axis=1)
    d = np.zeros(n)
    np.add.at(d, E[:, 0], flux)
    np.add.at(d, E[:, 1], flux)
    return sp.diags(d, format="csr")


@timed
def edge_averaged_xz(problem: ProblemSpec, mesh: Mesh) -> SolveReport:
    """Edge-averaged (Xu-Zikatanov) finite element method, sigma = 0."""
    if problem.sigma != 0:
        raise SchemeError("the edge-averaged method requires sigma = 0")
    # the conservative form needs the boundary term for eps du/dn = 0
    A = (assemble_edge_averaged(mesh, problem)
         + boundary_flux_term(mesh, problem.b))
    return _finish("xz", mesh, problem, A, assemble_rhs(mesh, problem.f))
