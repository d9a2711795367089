"""Nonlinear steady schemes: algebraic flux correction, monotone local
projection stabilization, Mizukami-Hughes and Burman-Ern."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .. import linalg
from ..assemble import (ProblemSpec, apply_dirichlet, assemble_convection,
                        assemble_diffusion, assemble_mass, assemble_rhs,
                        cell_integrals, dirichlet_values, mesh_gradients,
                        replace_dirichlet_rows)
from ..mesh import Mesh, quality_report
from .common import (FixedPointResult, FixedPointStop, MeshConditionError,
                     NonConvergenceError, SchemeError, SolveReport, SolverConfig, audit,
                     edge_patch_b_norm, fixed_point_driver, residual_norm,
                     timed)
from .limiters import (LimiterState, afc_d_matrix, bjk_gamma, edge_matrix,
                       limiter_bbk, limiter_bjk, limiter_kuzmin,
                       smoothness_indicator)


def lumped_galerkin_matrix(problem: ProblemSpec, mesh: Mesh) -> sp.csr_matrix:
    """Neumann matrix ``eps A_d + A_c + sigma M_l``."""
    _, Ml = assemble_mass(mesh)
    return (problem.epsilon * assemble_diffusion(mesh)
            + assemble_convection(mesh, problem.b) + problem.sigma * Ml).tocsr()


def _report(name, mesh, problem, A_eff, f, res: FixedPointResult, meta,
            strict: bool) -> SolveReport:
    sys_ = apply_dirichlet(A_eff, f, mesh, problem.g)
    rep = SolveReport(solution=res.u, scheme=name, iterations=res.iterations,
                      residual_history=res.history, converged=res.converged,
                      system=sys_, meta=dict(meta, stop=res.reason or "tol"))
    audit(rep, matrix_type=False)
    if strict and not res.converged:
        raise NonConvergenceError(
            f"{name}: fixed point stopped ({res.reason}) after "
            f"{res.iterations} iterations, residual {res.history[-1]:.3e}",
            rep)
    return rep


def _with_dirichlet(f, g, M):
    r = np.array(f, dtype=float)
    r[M:] = g
    return r


def factorized_fixed_point(A, L, nonlinear, f, g, M, cfg: SolverConfig,
                           u0=None) -> FixedPointResult:
    """Solve ``(A + N(u)) u = f`` on rows < M, ``u = g`` below.

    Each sweep solves ``L u_new = f + (L - A - N(u)) u`` with the
    Dirichlet rows of ``L`` replaced by identity rows, so ``L`` is
    factorized once.  ``nonlinear(u)`` returns ``N(u) u`` as a vector.

    Parameters
    ----------
    A, L : sparse matrix
        Neumann matrices of the linear part and the preconditioner.
    nonlinear : callable
    f : (N,) array
        Load vector (rows >= M are ignored).
    g : (N - M,) array
        Dirichlet values.
    """
    LD = linalg.Factorization(replace_dirichlet_rows(L, M))
    LminA = (L - A).tocsr()
    if u0 is None:
        u0 = LD.solve(_with_dirichlet(f, g, M))

    def step(u):
        Nu = nonlinear(u)
        res = float(np.linalg.norm((A @ u + Nu - f)[:M]))
        return res, LD.solve(_with_dirichlet(f + LminA @ u - Nu, g, M))

    return fixed_point_driver(step, u0, cfg)


def picard_fixed_point(A, matrix_of, f, g, M, cfg: SolverConfig,
                       u0=None) -> FixedPointResult:
    """Solve ``(A + N(u)) u = f`` by ``(A + N(u_k)) u_{k+1} = f``.

    ``matrix_of(u)`` returns the sparse matrix ``N(u)``; the system is
    reassembled and factorized every sweep.
    """
    rhs = _with_dirichlet(f, g, M)
    if u0 is None:
        u0 = np.zeros(len(f))
        u0[M:] = g

    def step(u):
        K = (A + matrix_of(u)).tocsr()
        return (residual_norm(K, u, f, M),
                linalg.solve(replace_dirichlet_rows(K, M), rhs))

    return fixed_point_driver(step, u0, cfg)


ITERATIONS = ("rhs", "matrix")


# ----------------------------------------------------------------------
# AFC

AFC_LIMITERS = ("kuzmin", "kuzmin-modified", "bjk", "bbk")


@timed
def afc_solve(problem: ProblemSpec, mesh: Mesh, limiter: str = "kuzmin",
              cfg: SolverConfig | None = None, gamma="computed",
              gamma0: float = 0.75, p: float = 10.0, iteration: str | None = None,
              strict: bool = False) -> SolveReport:
    """Algebraically stabilized scheme ``A u + B(u) u = f``.

    ``A`` is the Galerkin matrix with lumped reaction.

    Parameters
    ----------
    limiter : {"kuzmin", "kuzmin-modified", "bjk", "bbk"}
    gamma : "computed" or float or array
        BJK constants.
    gamma0, p : float
        BBK parameters.
    iteration : {"rhs", "matrix"}, optional
        ``"rhs"`` keeps ``A + D`` on the left, factorized once, and moves
        ``(D - B(u)) u`` to the right.  ``"matrix"`` solves
        ``(A + B(u_k)) u_{k+1} = f``.  Default ``"matrix"`` for ``bbk``,
        whose viscosity does not derive from ``D``, else ``"rhs"``.
    strict : bool
        Raise :class:`NonConvergenceError` instead of returning a report
        flagged ``converged=False``.
    """
    if limiter not in AFC_LIMITERS:
        raise ValueError(f"unknown limiter {limiter!r}; "
                         f"choose from {', '.join(AFC_LIMITERS)}")
    if iteration is None:
        iteration = "matrix" if limiter == "bbk" else "rhs"
    if iteration not in ITERATIONS:
        raise ValueError(f"iteration must be one of {ITERATIONS}")
    cfg = cfg or SolverConfig()
    A = lumped_galerkin_matrix(problem, mesh)
    M = mesh.n_free
    f = assemble_rhs(mesh, problem.f)
    g = dirichlet_values(mesh, problem.g)
    D = afc_d_matrix(A)
    if limiter == "bjk" and isinstance(gamma, str):
        if gamma != "computed":
            raise ValueError("gamma must be 'computed' or numeric")
        gamma = bjk_gamma(mesh)

    def state(u) -> LimiterState:
        if limiter == "kuzmin":
            return limiter_kuzmin(A, D, u, "classic", M)
        if limiter == "kuzmin-modified":
            return limiter_kuzmin(A, D, u, "modified", M)
        if limiter == "bjk":
            return limiter_bjk(A, D, u, mesh, gamma, M)
        return limiter_bbk(u, mesh, gamma0, p)

    if iteration == "rhs":
        res = factorized_fixed_point(A, (A + D).tocsr(),
                                     lambda u: state(u).stabilization(u),
                                     f, g, M, cfg)
    else:
        res = picard_fixed_point(A, lambda u: state(u).B(), f, g, M, cfg)
    B = state(res.u).B()
    meta = {"limiter": limiter, "iteration": iteration}
    if limiter == "bbk":
        meta.update(gamma0=gamma0, p=p)
    if limiter == "bjk":
        meta["gamma_max"] = float(np.max(gamma))
    return _report(f"afc-{limiter}", mesh, problem, (A + B).tocsr(), f, res,
                   meta, strict)


# ----------------------------------------------------------------------
# monotone LPS

class _EdgePatches:
    """Per interior edge: the four nodes of omega_F and local matrices."""

    def __init__(self, mesh: Mesh):
        inner = np.flatnonzero(mesh.interior_edge_mask)
        ec = mesh.edge_cells[inner]
        el = mesh.edge_local[inner]
        K1, K2 = ec[:, 0], ec[:, 1]
        cells = mesh.cells
        # nodes: the three vertices of K1, then the vertex of K2 opposite F
        opp2 = cells[K2, el[:, 1]]
        nodes = np.column_stack([cells[K1], opp2])
        G = mesh_gradients(mesh)
        n = len(inner)
        G1 = np.zeros((n, 4, 2))
        G1[:, :3] = G[K1]
        G2 = np.zeros((n, 4, 2))
        # place K2's gradients at the matching positions of ``nodes``
        for k in range(3):
            v = cells[K2, k]
            pos = np.where(v[:, None] == nodes, np.arange(4)[None], -1).max(axis=1)
            G2[np.arange(n), pos] = G[K2, k]
        a1 = mesh.areas[K1][:, None, None]
        a2 = mesh.areas[K2][:, None, None]
        S = a1 * np.einsum("eid,ejd->eij", G1, G1) \
            + a2 * np.einsum("eid,ejd->eij", G2, G2)
        m = a1 * G1 + a2 * G2
        area = (a1 + a2)[:, 0, 0]
        P = S - np.einsum("eid,ejd->eij", m, m) / area[:, None, None]
        self.edges = inner
        self.nodes = nodes
        self.S = S
        self.P = P
        self.rows = np.repeat(nodes, 4, axis=1).ravel()
        self.cols = np.tile(nodes, (1, 4)).ravel()
        self.n = mesh.n_nodes
        self.h = mesh.edge_lengths[inner]

    def assemble(self, wS, wP) -> sp.csr_matrix:
        data = (wS[:, None, None] * self.S + wP[:, None, None] * self.P).ravel()
        return sp.coo_matrix((data, (self.rows, self.cols)),
                             shape=(self.n, self.n)).tocsr()


def lps_switch(u, mesh: Mesh, patches: _EdgePatches, p: float) -> np.ndarray:
    """``alpha_F = max over the nodes of omega_F of xi_u^p``."""
    xi = smoothness_indicator(u, mesh.edges[:, 0], mesh.edges[:, 1],
                              mesh.n_nodes)
    return (xi[patches.nodes] ** p).max(axis=1)


@timed
def monotone_lps(problem: ProblemSpec, mesh: Mesh, c0: float = 1.0,
                 gamma0: float = 1.0, p: float = 10.0,
                 cfg: SolverConfig | None = None, iteration: str = "matrix",
                 strict: bool = False) -> SolveReport:
    """Monotone local projection stabilization on interior edges.

    ``d_h = sum_F tau_F alpha_F (grad u, grad v)_{omega_F}
    + gamma_F (1 - alpha_F) (grad u - G_F grad u, grad v)_{omega_F}`` with
    ``tau_F = c0 |b|_{inf,omega_F} h_F``,
    ``gamma_F = gamma0 min{|b| h_F, h_F^2 / eps}`` and the smoothness
    switch of :func:`lps_switch`.  With ``iteration="rhs"`` the
    left-hand matrix is the linear scheme with ``alpha_F = 1``; the
    default ``"matrix"`` reassembles ``A + D_h(u_k)`` every sweep.

    Raises
    ------
    MeshConditionError
        On meshes that are not weakly acute.  A zero average-acute
        margin is accepted with a note, since the DMP theory then gives
        no admissible ``c0``.
    """
    rep_q = quality_report(mesh)
    if not rep_q.weakly_acute:
        raise MeshConditionError("monotone LPS needs a weakly acute mesh")
    cfg = cfg or SolverConfig()
    A = lumped_galerkin_matrix(problem, mesh)
    M = mesh.n_free
    f = assemble_rhs(mesh, problem.f)
    g = dirichlet_values(mesh, problem.g)
    pt = _EdgePatches(mesh)
    bF = edge_patch_b_norm(mesh, problem.b)[pt.edges]
    tau = c0 * bF * pt.h
    gam = gamma0 * np.minimum(bF * pt.h, pt.h ** 2 / problem.epsilon)
    L = (A + pt.assemble(tau, np.zeros_like(tau))).tocsr()

    def stab(u):
        al = lps_switch(u, mesh, pt, p)
        return pt.assemble(tau * al, gam * (1.0 - al))

    if iteration == "rhs":
        res = factorized_fixed_point(A, L, lambda u: stab(u) @ u, f, g, M, cfg)
    elif iteration == "matrix":
        res = picard_fixed_point(A, stab, f, g, M, cfg)
    else:
        raise ValueError(f"iteration must be one of {ITERATIONS}")
    meta = {"c0": c0, "gamma0": gamma0, "p": p, "iteration": iteration,
            "average_acute_margin": rep_q.average_acute_margin}
    rep = _report("lps", mesh, problem, (A + stab(res.u)).tocsr(), f, res,
                  meta, strict)
    if rep_q.average_acute_margin <= 0:
        rep.meta["note"] = ("mesh not average acute: DMP hypotheses unmet, "
                            "bounds are audited only")
    return rep


# ----------------------------------------------------------------------
# Mizukami-Hughes

_THIRD = 1.0 / 3.0


def _interval_feasible(s, t, m):
    """Whether some alpha gives ``s_m + alpha t_m > 0`` and
    ``s_l + alpha t_l <= 0`` for l != m, row-wise.

    ``s``, ``t`` are (n, 3) arrays, ``m`` an (n,) index array.
    """
    n = s.shape[0]
    lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    lo_open, hi_open = np.zeros(n, bool), np.zeros(n, bool)
    ok = np.ones(n, bool)
    for l in range(3):
        strict = m == l
        sgn = np.where(strict, 1.0, -1.0)
        S, T = sgn * s[:, l], sgn * t[:, l]     # need S + alpha T (>=) 0
        ok &= (T != 0) | np.where(strict, S > 0, S >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = -S / T
        up, down = T > 0, T < 0
        lo_open = np.where(up & (r > lo), strict,
                           np.where(up & (r == lo), lo_open | strict, lo_open))
        lo = np.where(up & (r > lo), r, lo)
        hi_open = np.where(down & (r < hi), strict,
                           np.where(down & (r == hi), hi_open | strict, hi_open))
        hi = np.where(down & (r < hi), r, hi)
    return ok & ((lo < hi) | ((lo == hi) & ~lo_open & ~hi_open))


def mh_constants(mesh: Mesh, u, bK, G, tol: float = 1e-14,
                 boundary=None, grad_tol: float = 1e-8) -> np.ndarray:
    """Weighting constants ``C_i^K`` (C, 3) for the current iterate.

    ``boundary`` marks the nodes whose cells get the boundary-layer
    rule (all constants -1/3 in an edge zone); default: Dirichlet nodes.
    """
    C = mesh.n_cells
    s = np.einsum("cd,ckd->ck", bK, G)
    scale = np.linalg.norm(bK, axis=1) * np.linalg.norm(G, axis=2).max(axis=1)
    s = np.where(np.abs(s) <= tol * scale[:, None], 0.0, s)
    out = np.zeros((C, 3))
    nonzero = np.linalg.norm(bK, axis=1) > 0
    npos = (s > 0).sum(axis=1)
    vz = nonzero & (npos == 1)
    ez = nonzero & (npos == 2)
    # vertex zone: 2/3 at the upwind-most vertex
    k = np.argmax(s, axis=1)
    out[vz] = -_THIRD
    out[vz, k[vz]] = 2 * _THIRD
    if not ez.any():
        return out
    kz = np.argmin(s, axis=1)
    if boundary is None:
        boundary = np.arange(mesh.n_nodes) >= mesh.n_free
    bnd_cell = boundary[mesh.cells].any(axis=1)
    idx = np.flatnonzero(ez)
    res = np.full((len(idx), 3), 1.0 / 6.0)
    res[np.arange(len(idx)), kz[idx]] = -_THIRD
    gu = np.einsum("ck,ckd->cd", u[mesh.cells[idx]], G[idx])
    bgu = (bK[idx] * gu).sum(axis=1)
    # b.grad u counts as zero relative to the data scale range(u)/h_K
    urange = max(float(np.ptp(u)), 1e-300)
    gscale = np.linalg.norm(bK[idx], axis=1) * urange / mesh.cell_diameters[idx]
    active = np.abs(bgu) > grad_tol * gscale
    a = np.flatnonzero(active)
    if len(a):
        w = np.column_stack([-gu[a, 1], gu[a, 0]])
        t = np.einsum("nd,nkd->nk", w, G[idx[a]])
        kk = kz[idx[a]]
        m2 = (kk + 1) % 3
        m3 = (kk + 2) % 3
        v2 = _interval_feasible(s[idx[a]], t, m2)
        v3 = _interval_feasible(s[idx[a]], t, m3)
        only2 = v2 & ~v3
        only3 = v3 & ~v2
        rows = a
        for sel, mm in ((only2, m2), (only3, m3)):
            r = rows[sel]
            res[r] = -_THIRD
            res[r, mm[sel]] = 2 * _THIRD
    res[bnd_cell[idx]] = -_THIRD
    out[idx] = res
    return out


@timed
def mizukami_hughes(problem: ProblemSpec, mesh: Mesh,
                    cfg: SolverConfig | None = None,
                    strict: bool = False) -> SolveReport:
    """Mizukami-Hughes method with upwind weighting constants.

    The test function of row i on cell K is ``phi_i + C_i^K`` with the
    constants of :func:`mh_constants`, evaluated with ``b_K`` at the
    barycentre.  The iteration stops when the residual falls below
    ``cfg.residual_tol`` (reached as soon as the constants stop
    changing) or, unconverged, when the constants alternate between two
    sets.
    """
    if problem.sigma != 0:
        raise SchemeError("Mizukami-Hughes is implemented for sigma = 0")
    cfg = cfg or SolverConfig()
    G = mesh_gradients(mesh)
    bK = problem.b(mesh.barycenters)
    Ad = problem.epsilon * assemble_diffusion(mesh)
    f_cell = cell_integrals(mesh, problem.f)
    f0 = assemble_rhs(mesh, problem.f)
    M = mesh.n_free
    g = dirichlet_values(mesh, problem.g)
    n = mesh.n_nodes
    cells = mesh.cells
    rows = np.repeat(cells, 3, axis=1).ravel()
    cols = np.tile(cells, (1, 3)).ravel()
    bg = np.einsum("cd,cjd->cj", bK, G) * mesh.areas[:, None]    # (C, 3)

    def system(Cc):
        loc = (_THIRD + Cc)[:, :, None] * bg[:, None, :]
        Cm = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        A = (Ad + Cm).tocsr()
        rhs = f0.copy()
        np.add.at(rhs, cells.ravel(), (Cc * f_cell[:, None]).ravel())
        return A, rhs

    seen = []      # constants of the last two sweeps

    def step(u):
        Cc = mh_constants(mesh, u, bK, G)
        if len(seen) == 2 and np.array_equal(Cc, seen[0]) \
                and not np.array_equal(Cc, seen[1]):
            raise FixedPointStop("weighting constants cycle with period 2")
        seen[:] = (seen + [Cc])[-2:]
        A, rhs = system(Cc)
        res = residual_norm(A, u, rhs, M)
        rhs[M:] = g
        return res, linalg.solve(replace_dirichlet_rows(A, M), rhs)

    u0 = np.zeros(n)
    u0[M:] = g
    res = fixed_point_driver(step, u0, cfg)
    Cc = mh_constants(mesh, res.u, bK, G)
    A, rhs = system(Cc)
    return _report("mh", mesh, problem, A, rhs, res, {}, strict)


# ----------------------------------------------------------------------
# Burman-Ern

def gradient_jumps(mesh: Mesh, u) -> np.ndarray:
    """|grad u_K - grad u_K'| on interior edges (0 on boundary edges)."""
    G = mesh_gradients(mesh)
    gu = np.einsum("ck,ckd->cd", u[mesh.cells], G)
    ec = mesh.edge_cells
    out = np.zeros(mesh.n_edges)
    inner = ec[:, 1] >= 0
    out[inner] = np.linalg.norm(gu[ec[inner, 0]] - gu[ec[inner, 1]], axis=1)
    return out


def burman_ern_matrix(mesh: Mesh, u, weight, eta_rel: float = 1e-8):
    """Regularized jump stabilization as a graph Laplacian.

    ``kappa_F = w_F |[grad u]_F| / (|u_j - u_i| + eta)`` on interior edges
    with ``eta = eta_rel max_F |u_j - u_i|``.
    """
    E = mesh.edges
    du = np.abs(u[E[:, 1]] - u[E[:, 0]])
    eta = eta_rel * max(du.max(initial=0.0), 1e-300)
    kappa = weight * gradient_jumps(mesh, u) / (du + eta)
    kappa[~mesh.interior_edge_mask] = 0.0
    return edge_matrix(mesh.n_nodes, E[:, 0], E[:, 1], -kappa)


@timed
def burman_ern(problem: ProblemSpec, mesh: Mesh, c_rho: float = 0.005,
               cfg: SolverConfig | None = None, rho: float = 1.0,
               eta_rel: float = 1e-8, strict: bool = False) -> SolveReport:
    """Burman-Ern edge stabilization with regularized sign.

    ``j(u; v) = c_rho sum_F (|b|_{inf} + rho sigma h_F) h_F^2
    |[grad u]_F| sign(u_j - u_i)(v_j - v_i)``; the sign is replaced by
    ``t / (|t| + eta)`` and the nonlinear system is solved by a Picard
    iteration that reassembles the matrix each sweep.
    """
    cfg = cfg or SolverConfig()
    A0 = lumped_galerkin_matrix(problem, mesh)
    M = mesh.n_free
    f = assemble_rhs(mesh, problem.f)
    g = dirichlet_values(mesh, problem.g)
    h = mesh.edge_lengths
    bF = edge_patch_b_norm(mesh, problem.b)
    weight = c_rho * (bF + rho * problem.sigma * h) * h ** 2

    def step(u):
        A = (A0 + burman_ern_matrix(mesh, u, weight, eta_rel)).tocsr()
        res = residual_norm(A, u, f, M)
        rhs = f.copy()
        rhs[M:] = g
        return res, linalg.solve(replace_dirichlet_rows(A, M), rhs)

    rhs0 = f.copy()
    rhs0[M:] = g
    u0 = linalg.solve(replace_dirichlet_rows(A0, M), rhs0)
    res = fixed_point_driver(step, u0, cfg)
    A = (A0 + burman_ern_matrix(mesh, res.u, weight, eta_rel)).tocsr()
    return _report("be", mesh, problem, A, f, res, {"c_rho": c_rho}, strict)
