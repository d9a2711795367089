"""Shared data types, audits and the damped fixed-point driver."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .. import linalg
from ..assemble import DirichletSystem, Field, edge_midpoints
from ..mesh import Mesh


class SchemeError(ValueError):
    """Scheme called outside its hypotheses (e.g. b != 0 for USFEM)."""


class MeshConditionError(SchemeError):
    """Mesh lacks an angle property the scheme requires."""


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class SolverConfig:
    residual_tol: float = 1e-10
    max_iterations: int = 10000
    damping: float = 1.0
    # adaptive damping: shrink on residual growth, grow back on success
    adaptive: bool = True
    min_damping: float = 1e-3
    divergence_window: int = 50
    divergence_factor: float = 10.0
    # stop when the best residual has not improved for this many sweeps
    stagnation_window: int = 500

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stagnation_window < 0:
            raise ValueError("stagnation_window must be non-negative")


@dataclass
class SolveReport:
    solution: np.ndarray
    scheme: str
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    converged: bool = True
    system: DirichletSystem | None = None
    meta: dict = field(default_factory=dict)
    seconds: float = 0.0

    def certificate(self, kind):
        for c in self.certificates:
            if c.kind == kind:
                return c
        raise KeyError(kind)


# ----------------------------------------------------------------------
# helpers

def nodal_b(mesh: Mesh, b: Field) -> np.ndarray:
    return b(mesh.points)


def cell_b_norm(mesh: Mesh, b: Field) -> np.ndarray:
    """max |b| per cell sampled at vertices and edge midpoints."""
    nb = np.linalg.norm(b(mesh.points), axis=1)[mesh.cells].max(axis=1)
    mids = edge_midpoints(mesh).reshape(-1, 2)
    mb = np.linalg.norm(b(mids), axis=1).reshape(-1, 3).max(axis=1)
    return np.maximum(nb, mb)


def b_vanishes(mesh: Mesh, b: Field) -> bool:
    return not np.any(cell_b_norm(mesh, b))


def edge_patch_b_norm(mesh: Mesh, b: Field) -> np.ndarray:
    """max |b| over omega_E (the cells sharing each edge)."""
    cn = cell_b_norm(mesh, b)
    ec = mesh.edge_cells
    out = cn[ec[:, 0]].copy()
    inner = ec[:, 1] >= 0
    out[inner] = np.maximum(out[inner], cn[ec[inner, 1]])
    return out


def audit(report: SolveReport, tol: float = 1e-10,
          matrix_type: bool = True) -> SolveReport:
    """Attach local and global DMP certificates, preceded by the
    non-negative-type certificate of the system matrix if
    ``matrix_type`` (linear schemes, where that matrix is the scheme)."""
    sys_ = report.system
    if sys_ is None:
        return report
    A, M = sys_.matrix, sys_.n_free
    certs = [linalg.check_nonnegative_type(A, M)] if matrix_type else []
    certs += [
        linalg.verify_steady_local_dmp(A, report.solution, sys_.rhs, M, tol),
        linalg.verify_steady_global_dmp(A, report.solution, sys_.rhs, M, tol),
    ]
    report.certificates = certs
    return report


def m_matrix_certificate(report: SolveReport,
                         cap: int = linalg.DENSE_CAP) -> linalg.DmpCertificate:
    return linalg.check_m_matrix(report.system.matrix, cap=cap)


def residual_norm(A, u, f, M) -> float:
    r = (A @ u - f)[:M]
    return float(np.linalg.norm(r))


# ----------------------------------------------------------------------
# fixed point

class FixedPointStop(Exception):
    """Raised by a fixed-point step to end the iteration early."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class FixedPointResult:
    u: np.ndarray
    iterations: int
    history: list
    converged: bool
    reason: str = ""


def fixed_point_driver(step, u0, cfg: SolverConfig) -> FixedPointResult:
    """Damped fixed-point iteration.

    Parameters
    ----------
    step : callable
        ``step(u) -> (residual_norm, candidate)`` where the candidate is the
        undamped next iterate.  It may raise :class:`FixedPointStop` to
        end the iteration, which is then reported as not converged.
    u0 : ndarray
        Initial iterate.
    cfg : SolverConfig

    The iteration stops when the residual of the current iterate drops
    below ``cfg.residual_tol``.  It is declared divergent when the residual
    grows by ``divergence_factor`` over ``divergence_window`` iterations
    and stagnant when the best residual so far is ``stagnation_window``
    iterations old.
    With ``cfg.adaptive`` the damping factor is halved whenever the
    residual grows and relaxed back towards ``cfg.damping`` otherwise.
    """
    if not 0 < cfg.damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    u = np.array(u0, dtype=float)
    rho = cfg.damping
    history = []
    best = (np.inf, u)
    best_at = 0
    for k in range(cfg.max_iterations + 1):
        try:
            res, cand = step(u)
        except FixedPointStop as stop:
            return FixedPointResult(best[1], k, history, False, stop.reason)
        history.append(res)
        if res < best[0]:
            best, best_at = (res, u), k
        if res < cfg.residual_tol:
            return FixedPointResult(u, k, history, True)
        if not np.isfinite(res):
            return FixedPointResult(best[1], k, history, False, "non-finite")
        w = cfg.divergence_window
        if k >= w and res > cfg.divergence_factor * history[k - w]:
            return FixedPointResult(best[1], k, history, False, "diverged")
        if cfg.stagnation_window and k - best_at >= cfg.stagnation_window:
            return FixedPointResult(best[1], k, history, False, "stagnated")
        if k == cfg.max_iterations:
            break
        if cfg.adaptive and k > 0:
            if res > history[-2]:
                rho = max(0.5 * rho, cfg.min_damping)
            else:
                rho = min(1.1 * rho, cfg.damping)
        u = u + rho * (cand - u)
    return FixedPointResult(best[1], cfg.max_iterations, history, False,
                            "max_iterations")


def timed(fn):
    """Decorator filling ``SolveReport.seconds``."""
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.seconds = time.perf_counter() - t0
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def dirichlet_system(A_neumann, rhs, mesh, g) -> DirichletSystem:
    from ..assemble import apply_dirichlet
    return apply_dirichlet(sp.csr_matrix(A_neumann), rhs, mesh, g)
