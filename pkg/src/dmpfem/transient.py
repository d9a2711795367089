"""
One-step theta schemes for ``u_t - eps lap u + b.grad u + sigma u = f``
and the FEM-FCT family built on them.

Each time step is a map ``TransientState -> (TransientState, StepAudit)``.
The audit records the extrema of every computed iterate together with the
bounds implied by the old state and the boundary data; with ``sigma = 0``,
``f = 0`` and a steady field ``b`` the FCT variants and the low-order and
upwind schemes (under their CFL conditions) are guaranteed to stay inside
those bounds.  When these hypotheses do not hold the audit is marked
``"hypotheses unmet"`` instead of pass/fail.

Fluxes are stored once per edge ``e = (i, j)``, ``i < j``; the reverse
flux is ``-f_e``, so antisymmetry holds exactly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .assemble import (Field, ProblemSpec, ROTATING, assemble_diffusion,
                       assemble_convection, assemble_mass, assemble_rhs,
                       dirichlet_values, lumped_rhs, replace_dirichlet_rows)
from .linalg import Factorization
from .mesh import Mesh
from .steady.limiters import afc_d_matrix, entries
from .steady.linear import assemble_upwind_convection

SCHEMES = ("galerkin-theta", "low-order", "upwind-theta", "fct-nonlinear",
           "fct-linear", "fct-predictor-corrector")
FCT_SCHEMES = ("fct-nonlinear", "fct-linear", "fct-predictor-corrector")
# schemes whose explicit part must stay non-negative
CFL_SCHEMES = ("low-order", "upwind-theta") + FCT_SCHEMES
AUDIT_TOL = 1e-8
UNMET = "hypotheses unmet"


class CFLError(ValueError):
    """Time step above the admissible bound of the explicit part."""


@dataclass
class TimeSteppingConfig:
    theta: float = 1.0
    tau: float = 1e-2
    t_end: float = 1.0
    scheme: str = "fct-nonlinear"
    inner_tol: float = 1e-10
    inner_max_iter: int = 200
    damping: float = 1.0
    audit: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from "
                             f"{', '.join(SCHEMES)}")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")

    @property
    def n_steps(self) -> int:
        n = self.t_end / self.tau
        k = int(round(n))
        if abs(n - k) > 1e-9 * max(1.0, n):
            raise ValueError(f"t_end = {self.t_end} is not a multiple of "
                             f"tau = {self.tau}")
        return k


@dataclass
class TransientState:
    u: np.ndarray
    t: float = 0.0
    step: int = 0


@dataclass
class StepAudit:
    """Extrema of the iterates of one step against the global bounds.

    ``status`` is ``"pass"``, ``"fail"`` or ``"hypotheses unmet"``.
    """

    step: int
    t: float
    min: float
    max: float
    bound_lo: float
    bound_hi: float
    status: str
    iterations: int = 1
    converged: bool = True
    residual: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def row(self):
        return (self.step, f"{self.t:.12g}", f"{self.min:.16e}",
                f"{self.max:.16e}", f"{self.bound_lo:.16e}",
                f"{self.bound_hi:.16e}", self.status)


AUDIT_HEADER = ("step", "t", "min", "max", "bound_lo", "bound_hi", "pass")


def audit_csv(audits, out=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AUDIT_HEADER)
    w.writerows(a.row() for a in audits)
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


# ----------------------------------------------------------------------
# operators

@dataclass
class TransientOperators:
    """Neumann matrices of one mesh and problem plus per-edge entries.

    ``A`` is the Galerkin matrix ``eps A_d + A_c + sigma M_c``, ``D`` its
    artificial diffusion and ``L = A + D`` the low-order operator.
    """

    mesh: Mesh
    problem: ProblemSpec
    M_c: sp.csr_matrix
    M_l: sp.csr_matrix
    A: sp.csr_matrix
    D: sp.csr_matrix
    L: sp.csr_matrix
    m: np.ndarray
    i: np.ndarray
    j: np.ndarray
    m_e: np.ndarray
    d_e: np.ndarray
    t: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_free(self) -> int:
        return self.mesh.n_free

    def factor(self, key, build):
        if key not in self._cache:
            self._cache[key] = Factorization(build())
        return self._cache[key]

    def apply(self, name: str, u) -> np.ndarray:
        """Product of the operator ``name`` with ``u`` in edge form.

        ``sum_{j != i} s_ij (u_j - u_i) + sigma m_i u_i``.  The Neumann
        rows of every operator sum to the reaction term, so this equals
        ``S u`` analytically and vanishes exactly on constants when
        ``sigma = 0``.
        """
        key = ("edges", name)
        if key not in self._cache:
            S = {"galerkin": self.A, "low-order": self.L,
                 "upwind": self.upwind}[name].tocoo()
            off = S.row != S.col
            self._cache[key] = (S.row[off], S.col[off], S.data[off])
        r, c, v = self._cache[key]
        out = np.bincount(r, v * (u[c] - u[r]), minlength=self.n)
        if self.problem.sigma:
            out = out + self.problem.sigma * self.m * u
        return out

    @property
    def upwind(self) -> sp.csr_matrix:
        if "upwind" not in self._cache:
            p = self.problem
            self._cache["upwind"] = (
                p.epsilon * assemble_diffusion(self.mesh)
                + assemble_upwind_convection(self.mesh, p.b, self.t)
                + p.sigma * self.M_l).tocsr()
        return self._cache["upwind"]


def build_operators(problem: ProblemSpec, mesh: Mesh,
                    t: float = 0.0) -> TransientOperators:
    Mc, Ml = assemble_mass(mesh)
    A = (problem.epsilon * assemble_diffusion(mesh)
         + assemble_convection(mesh, problem.b, t)
         + problem.sigma * Mc).tocsr()
    D = afc_d_matrix(A)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    return TransientOperators(mesh, problem, Mc.tocsr(), Ml.tocsr(), A, D,
                              (A + D).tocsr(), Ml.diagonal().copy(), i, j,
                              entries(Mc, i, j), entries(D, i, j), t)


def hypotheses_hold(problem: ProblemSpec, mesh: Mesh,
                    times=(0.0,)) -> bool:
    """sigma = 0, a steady convection field and f = 0 at the nodes at
    every time in ``times``."""
    if problem.sigma != 0 or problem.b.time_dependent:
        return False
    return not any(np.any(problem.f(mesh.points, t)) for t in times)


def cfl_max_tau(M_l, L, theta: float, n_free: int | None = None) -> float:
    """Largest tau with ``m_i - (1 - theta) tau l_ii >= 0`` on free rows.

    ``M_l`` may be the lumped matrix or its diagonal.
    """
    if theta >= 1.0:
        return math.inf
    m = M_l.diagonal() if sp.issparse(M_l) else np.asarray(M_l, dtype=float)
    l = sp.csr_matrix(L).diagonal()
    M = len(m) if n_free is None else n_free
    l, m = l[:M], m[:M]
    pos = l > 0
    if not pos.any():
        return math.inf
    return float(np.min(m[pos] / ((1.0 - theta) * l[pos])))


def _check_cfl(ops, cfg, matrix):
    if not cfg.audit or cfg.scheme not in CFL_SCHEMES or cfg.theta >= 1:
        return
    tmax = cfl_max_tau(ops.m, matrix, cfg.theta, ops.n_free)
    if cfg.tau > tmax:
        raise CFLError(f"tau = {cfg.tau:.6g} exceeds the CFL bound "
                       f"{tmax:.6g} for theta = {cfg.theta}")


def _node_sum(n, i, j, v):
    """``sum_j v_ij`` per node for antisymmetric edge values ``v``."""
    return (np.bincount(i, v, minlength=n) - np.bincount(j, v, minlength=n))


def _load(ops, t0, t1, theta, lumped):
    """``tau``-free source contribution at ``theta t1 + (1 - theta) t0``."""
    f, mesh = ops.problem.f, ops.mesh
    rhs = lumped_rhs if lumped else assemble_rhs
    return theta * rhs(mesh, f, t1) + (1.0 - theta) * rhs(mesh, f, t0)


def _boundary(ops, t):
    return dirichlet_values(ops.mesh, ops.problem.g, t)


def _solve_increment(ops, key, B, rhs, u_old, g_new):
    """``u_old + du`` with ``B du = rhs`` on free rows, ``u = g_new`` on
    Dirichlet rows.

    Solving for the increment keeps stationary states fixed to the bit.
    """
    M = ops.n_free
    fac = ops.factor(key, lambda: replace_dirichlet_rows(B, M))
    b = np.array(rhs, dtype=float)
    b[M:] = g_new - u_old[M:]
    u = u_old + fac.solve(b)
    u[M:] = g_new
    return u


# ----------------------------------------------------------------------
# system matrices (used by the dense certificates)

def theta_matrices(ops: TransientOperators, cfg: TimeSteppingConfig,
                   mass: str = "lumped", stiffness: str = "low-order"):
    """``(B, K)`` of ``B u^{n+1} = K u^n`` with Dirichlet rows in ``B``.

    ``mass`` is ``"lumped"`` or ``"consistent"``; ``stiffness`` one of
    ``"low-order"`` (L), ``"galerkin"`` (A) or ``"upwind"``.
    """
    Mm = {"lumped": ops.M_l, "consistent": ops.M_c}[mass]
    S = {"low-order": ops.L, "galerkin": ops.A, "upwind": ops.upwind}[stiffness]
    th, tau = cfg.theta, cfg.tau
    B = replace_dirichlet_rows(Mm + th * tau * S, ops.n_free)
    K = (Mm - (1.0 - th) * tau * S).tocsr()
    return B, K


# ----------------------------------------------------------------------
# linear steps

def _audit(ops, cfg, step, t, iterates, lo, hi, iterations=1,
           converged=True, residual=0.0, guaranteed=True):
    mn = min(float(np.min(v)) for v in iterates)
    mx = max(float(np.max(v)) for v in iterates)
    times = (t - cfg.tau, t)
    if not (guaranteed and hypotheses_hold(ops.problem, ops.mesh, times)):
        status = UNMET
    else:
        ok = mn >= lo - AUDIT_TOL and mx <= hi + AUDIT_TOL
        status = "pass" if ok else "fail"
    return StepAudit(step, t, mn, mx, lo, hi, status, iterations, converged,
                     residual)


def _theta_step(ops, state, cfg, Mm, key, lumped, guaranteed):
    th, tau = cfg.theta, cfg.tau
    t1 = state.t + tau
    S = {"galerkin": ops.A, "low-order": ops.L, "upwind": ops.upwind}[key]
    # (Mm + theta tau S) du = -tau S u^n + tau f
    rhs = -tau * ops.apply(key, state.u)
    if np.any(ops.problem.f(ops.mesh.points, t1)) or \
            np.any(ops.problem.f(ops.mesh.points, state.t)):
        rhs = rhs + tau * _load(ops, state.t, t1, th, lumped)
    g1 = _boundary(ops, t1)
    u = _solve_increment(ops, (key, th, tau), Mm + th * tau * S, rhs,
                         state.u, g1)
    lo = min(state.u.min(), g1.min(initial=np.inf))
    hi = max(state.u.max(), g1.max(initial=-np.inf))
    aud = _audit(ops, cfg, state.step + 1, t1, [u], lo, hi,
                 guaranteed=guaranteed)
    return TransientState(u, t1, state.step + 1), aud


def galerkin_theta_step(ops, state, cfg):
    """Consistent-mass Galerkin theta step; no bound guarantee."""
    return _theta_step(ops, state, cfg, ops.M_c, "galerkin", False,
                       False)


def low_order_step(ops, state, cfg):
    """``(M_l + theta tau L) u^{n+1} = (M_l - (1-theta) tau L) u^n``."""
    _check_cfl(ops, cfg, ops.L)
    return _theta_step(ops, state, cfg, ops.M_l, "low-order", True,
                       True)


def upwind_theta_step(ops, state, cfg):
    """Lumped-mass theta step with the upwind convection matrix."""
    _check_cfl(ops, cfg, ops.upwind)
    return _theta_step(ops, state, cfg, ops.M_l, "upwind", True,
                       True)


# ----------------------------------------------------------------------
# fluxes and the Zalesak limiter

@dataclass
class EdgeFluxes:
    n: int
    i: np.ndarray
    j: np.ndarray
    f: np.ndarray

    def node_sums(self, alpha=None) -> np.ndarray:
        """``sum_j alpha_ij f_ij`` for every node."""
        v = self.f if alpha is None else alpha * self.f
        return _node_sum(self.n, self.i, self.j, v)


def antidiffusive_fluxes(u_new, u_old, M_c, D, theta: float, tau: float,
                         edges=None) -> EdgeFluxes:
    """Fluxes ``f_ij`` of the Galerkin-minus-low-order difference.

    ``f_ij = [-m_ij (du_new) + m_ij (du_old)] / tau
    + theta d_ij du_new + (1 - theta) d_ij du_old`` with ``du = u_j - u_i``.
    ``edges`` is an ``(i, j)`` pair of arrays; by default the pattern of
    ``M_c``.
    """
    from .steady.limiters import matrix_edges
    i, j = matrix_edges(M_c) if edges is None else edges
    return _fluxes(len(u_new), i, j, entries(M_c, i, j), entries(D, i, j),
                   u_new, u_old, theta, tau)


def _fluxes(n, i, j, m_e, d_e, u_new, u_old, theta, tau):
    dn = u_new[j] - u_new[i]
    do = u_old[j] - u_old[i]
    f = m_e * (do - dn) / tau + d_e * (theta * dn + (1.0 - theta) * do)
    return EdgeFluxes(n, i, j, f)


def _rate_fluxes(ops, udot, v):
    """``f_ij = -m_ij (udot_j - udot_i) + d_ij (v_j - v_i)``."""
    i, j = ops.i, ops.j
    f = -ops.m_e * (udot[j] - udot[i]) + ops.d_e * (v[j] - v[i])
    return EdgeFluxes(ops.n, i, j, f)


@dataclass
class ZalesakState:
    """Intermediate and final quantities of one Zalesak evaluation."""

    fluxes: EdgeFluxes
    u_min: np.ndarray
    u_max: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    R_plus: np.ndarray
    R_minus: np.ndarray
    alpha: np.ndarray

    def correction(self) -> np.ndarray:
        return self.fluxes.node_sums(self.alpha)


def local_bounds(u, n, i, j):
    """Min and max of ``u`` over ``S_k`` and ``k`` itself."""
    lo = np.array(u, dtype=float)
    hi = lo.copy()
    np.minimum.at(lo, i, u[j])
    np.minimum.at(lo, j, u[i])
    np.maximum.at(hi, i, u[j])
    np.maximum.at(hi, j, u[i])
    return lo, hi


def _ratio(Q, P, n_free):
    R = np.ones_like(P)
    nz = P != 0
    with np.errstate(over="ignore"):
        R[nz] = np.minimum(1.0, Q[nz] / P[nz])
    R[n_free:] = 1.0
    return R


def zalesak(fluxes: EdgeFluxes, u_bar, m, tau: float,
            n_free: int | None = None) -> ZalesakState:
    """Zalesak's limiter for the edge fluxes around ``u_bar``.

    Parameters
    ----------
    fluxes : EdgeFluxes
    u_bar : ndarray
        Explicit low-order state whose local extrema bound the result.
    m : ndarray
        Lumped mass diagonal.
    tau : float
    n_free : int, optional
        Nodes ``>= n_free`` are Dirichlet; their R factors are 1.
    """
    n, i, j, f = fluxes.n, fluxes.i, fluxes.j, fluxes.f
    u_bar = np.asarray(u_bar, dtype=float)
    n_free = n if n_free is None else n_free
    lo, hi = local_bounds(u_bar, n, i, j)
    fp, fm = np.maximum(f, 0.0), np.minimum(f, 0.0)
    # f_ji = -f_ij: the positive part of f_ji is minus the negative part
    Pp = np.bincount(i, fp, minlength=n) - np.bincount(j, fm, minlength=n)
    Pm = np.bincount(i, fm, minlength=n) - np.bincount(j, fp, minlength=n)
    Qp = m / tau * (hi - u_bar)
    Qm = m / tau * (lo - u_bar)
    Rp, Rm = _ratio(Qp, Pp, n_free), _ratio(Qm, Pm, n_free)
    alpha = np.where(f > 0, np.minimum(Rp[i], Rm[j]),
                     np.where(f < 0, np.minimum(Rm[i], Rp[j]), 1.0))
    return ZalesakState(fluxes, lo, hi, Pp, Pm, Qp, Qm, Rp, Rm, alpha)


# ----------------------------------------------------------------------
# FCT steps

def _explicit_low_order(ops, state, cfg):
    """``u_bar = u^n - (1-theta) tau M_l^{-1} L u^n`` on free rows."""
    M = ops.n_free
    ub = state.u - (1.0 - cfg.theta) * cfg.tau * (
        ops.apply("low-order", state.u) / ops.m)
    ub[M:] = _boundary(ops, state.t + (1.0 - cfg.theta) * cfg.tau)
    return ub


def _fct_bounds(state, *gs):
    lo = min([state.u.min()] + [g.min() for g in gs if g.size])
    hi = max([state.u.max()] + [g.max() for g in gs if g.size])
    return lo, hi


def _implicit_matrix(ops, cfg):
    return ops.M_l + cfg.theta * cfg.tau * ops.L


def fct_step_nonlinear(ops, state, cfg):
    """Nonlinear FEM-FCT step solved by the damped fixed-point iteration.

    Every iterate enters the audit.  The iteration stops when
    ``|(M_l + theta tau L) u^(m) - M_l u_tilde|`` (free rows, 2-norm) is at
    most ``cfg.inner_tol``; after ``cfg.inner_max_iter`` sweeps the last
    iterate is returned with ``converged = False``.
    """
    _check_cfl(ops, cfg, ops.L)
    th, tau, M, rho = cfg.theta, cfg.tau, ops.n_free, cfg.damping
    t1 = state.t + tau
    ub = _explicit_low_order(ops, state, cfg)
    g1 = _boundary(ops, t1)
    B = _implicit_matrix(ops, cfg).tocsr()
    u = state.u.copy()
    iterates = []
    converged, res = False, math.inf
    it = 0
    for it in range(cfg.inner_max_iter + 1):
        fl = _fluxes(ops.n, ops.i, ops.j, ops.m_e, ops.d_e, u, state.u, th, tau)
        z = zalesak(fl, ub, ops.m, tau, M)
        # residual B u - M_l u_tilde, also the increment right-hand side
        r = ops.m * (u - ub) + th * tau * ops.apply("low-order", u) \
            - tau * z.correction()
        res = float(np.linalg.norm(r[:M]))
        if res <= cfg.inner_tol:
            converged = True
            break
        if it == cfg.inner_max_iter:
            break
        uh = _solve_increment(ops, ("fct", th, tau), B, -r, u, g1)
        u = u + rho * (uh - u)
        u[M:] = uh[M:]
        iterates.append(u)
    if not iterates:
        iterates = [u]
    lo, hi = _fct_bounds(state, ub[M:], g1)
    aud = _audit(ops, cfg, state.step + 1, t1, iterates, lo, hi,
                 iterations=it, converged=converged, residual=res)
    return TransientState(u, t1, state.step + 1), aud


def _low_order_rate(ops, u):
    """``udot`` with ``M_l udot = -L u`` on free rows."""
    return -ops.apply("low-order", u) / ops.m


def fct_step_linear(ops, state, cfg):
    """Linear FEM-FCT step with fluxes frozen at the old time level.

    ``u^{n+1}`` in the flux formula is replaced by ``u^n + tau udot`` with
    the explicit low-order rate ``udot``; for ``theta = 1/2`` this is the
    extrapolation ``2 u_bar - u^n``.
    """
    _check_cfl(ops, cfg, ops.L)
    th, tau, M = cfg.theta, cfg.tau, ops.n_free
    t1 = state.t + tau
    ub = _explicit_low_order(ops, state, cfg)
    g1 = _boundary(ops, t1)
    udot = _low_order_rate(ops, state.u)
    udot[M:] = (g1 - state.u[M:]) / tau
    z = zalesak(_rate_fluxes(ops, udot, state.u + th * tau * udot),
                ub, ops.m, tau, M)
    # B du = M_l (u_bar - u^n) - theta tau L u^n + tau correction
    rhs = ops.m * (ub - state.u) - th * tau * ops.apply("low-order", state.u) \
        + tau * z.correction()
    u = _solve_increment(ops, ("fct", th, tau), _implicit_matrix(ops, cfg),
                         rhs, state.u, g1)
    lo, hi = _fct_bounds(state, ub[M:], g1)
    aud = _audit(ops, cfg, state.step + 1, t1, [u], lo, hi)
    return TransientState(u, t1, state.step + 1), aud


def fct_step_predictor_corrector(ops, state, cfg):
    """Low-order predictor at ``t^{n+1}`` plus one limited correction.

    Fluxes ``-m_ij (udot_j - udot_i) + d_ij (u_bar_j - u_bar_i)`` use the
    predictor ``u_bar`` and the explicit low-order rate ``udot``.
    """
    pred, _ = low_order_step(ops, state, cfg)
    ub, t1, M, tau = pred.u, pred.t, ops.n_free, cfg.tau
    g1 = ub[M:].copy()
    udot = _low_order_rate(ops, state.u)
    udot[M:] = (g1 - state.u[M:]) / tau
    z = zalesak(_rate_fluxes(ops, udot, ub), ub, ops.m, tau, M)
    u = ub + tau * z.correction() / ops.m
    u[M:] = g1
    lo, hi = _fct_bounds(state, g1)
    aud = _audit(ops, cfg, state.step + 1, t1, [u], lo, hi)
    return TransientState(u, t1, state.step + 1), aud


STEPS = {
    "galerkin-theta": galerkin_theta_step,
    "low-order": low_order_step,
    "upwind-theta": upwind_theta_step,
    "fct-nonlinear": fct_step_nonlinear,
    "fct-linear": fct_step_linear,
    "fct-predictor-corrector": fct_step_predictor_corrector,
}


# ----------------------------------------------------------------------
# driver

@dataclass
class TransientResult:
    state: TransientState
    audits: list
    snapshots: list    # (step, t, u)
    config: TimeSteppingConfig

    @property
    def u(self) -> np.ndarray:
        return self.state.u

    @property
    def all_passed(self) -> bool:
        return all(a.passed for a in self.audits)


def initial_state(problem: ProblemSpec, mesh: Mesh) -> TransientState:
    """Nodal interpolant of ``u0`` with Dirichlet values of ``g(0)``."""
    u = problem.u0(mesh.points, 0.0)
    u[mesh.n_free:] = dirichlet_values(mesh, problem.g, 0.0)
    return TransientState(u, 0.0, 0)


def run_transient(problem: ProblemSpec, mesh: Mesh,
                  cfg: TimeSteppingConfig | None = None,
                  snapshot_every: int = 0, u0=None,
                  callback=None) -> TransientResult:
    """March ``cfg.n_steps`` uniform steps from ``t = 0``.

    Parameters
    ----------
    snapshot_every : int
        Keep ``(step, t, u)`` every that many steps (0: only the initial
        and final states).
    u0 : ndarray, optional
        Initial nodal values replacing the interpolant of ``problem.u0``.
    callback : callable, optional
        Called as ``callback(state, audit)`` after each step.
    """
    cfg = cfg or TimeSteppingConfig()
    n_steps = cfg.n_steps
    ops = build_operators(problem, mesh)
    state = initial_state(problem, mesh)
    if u0 is not None:
        state = replace(state, u=np.array(u0, dtype=float))
    step = STEPS[cfg.scheme]
    snaps = [(0, 0.0, state.u.copy())]
    audits = []
    for k in range(1, n_steps + 1):
        if problem.b.time_dependent:
            ops = build_operators(problem, mesh, state.t + cfg.tau)
        state, aud = step(ops, state, cfg)
        audits.append(aud)
        if callback is not None:
            callback(state, aud)
        if (snapshot_every and k % snapshot_every == 0) or k == n_steps:
            if snaps[-1][0] != k:
                snaps.append((k, state.t, state.u.copy()))
    return TransientResult(state, audits, snaps, cfg)


# ----------------------------------------------------------------------
# problems

def _bump(x, y, t, cx=0.75, cy=0.25, r=0.15):
    s = np.hypot(x - cx, y - cy) / r
    return np.where(s < 1.0, 0.5 * (1.0 + np.cos(np.pi * s)), 0.0)


def rotating_bump_problem(epsilon: float = 1e-5) -> ProblemSpec:
    """Cosine hill carried by ``b = (-y, x)``, zero inflow data.

    Dirichlet on the inflow sides ``y = 0`` and ``x = 1``, Neumann on the
    outflow sides.
    """
    return ProblemSpec(epsilon=epsilon, b=ROTATING,
                       u0=Field("cosine-hill", _bump),
                       bc={"bottom": "d", "right": "d", "left": "n",
                           "top": "n"},
                       name="rotating-bump")
