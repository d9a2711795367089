"""
Sparse solves and executable certificates for algebraic maximum
principles.

Every check returns a :class:`DmpCertificate`; ``passed`` is true exactly
when the violation list is empty.  Checks that need a dense inverse refuse
matrices above ``DENSE_CAP`` rows instead of approximating.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CAP = 2000
# entries with |a_ij| <= SIGN_TOL * max_j |a_ij| count as zero
SIGN_TOL = 1e-13
# relative slack on inverse entries computed by dense LU
INVERSE_TOL = 1e-10
ITERATIVE_THRESHOLD = 2_000_000


class LinearSolverError(RuntimeError):
    pass


class DenseCapError(ValueError):
    """Raised when a dense certificate is requested for a large matrix."""


# ----------------------------------------------------------------------
# solving

class Factorization:
    """Sparse LU factorization reused across right-hand sides."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        self.A = A
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise LinearSolverError(f"factorization failed: {exc}") from exc

    def solve(self, b, refine: int = 2) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("matrix singular to working precision")
        nb = np.linalg.norm(b)
        # a couple of refinement sweeps to reach a 1e-12 relative residual
        for _ in range(refine):
            r = b - self.A @ x
            if np.linalg.norm(r) <= 1e-12 * nb:
                break
            x = x + self._lu.solve(r)
        return x


def solve(A, b, iterative_threshold: int = ITERATIVE_THRESHOLD,
          rtol: float = 1e-12) -> np.ndarray:
    """Solve ``A x = b``.

    Sparse LU with partial pivoting up to ``iterative_threshold``
    unknowns; restarted GMRES with a diagonal preconditioner above it.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if A.shape[0] <= iterative_threshold:
        return Factorization(A).solve(b)
    d = A.diagonal()
    if np.any(d == 0):
        raise LinearSolverError("zero diagonal, no Jacobi preconditioner")
    P = spla.LinearOperator(A.shape, matvec=lambda v: v / d)
    x, info = spla.gmres(A, b, M=P, rtol=rtol, restart=100, maxiter=1000)
    if info != 0:
        res = np.linalg.norm(b - A @ x)
        raise LinearSolverError(f"GMRES did not converge, residual {res:.3e}")
    return x


# ----------------------------------------------------------------------
# certificates

@dataclass
class DmpCertificate:
    kind: str
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def report(self, max_rows: int = 20) -> str:
        lines = [f"certificate: {self.kind}",
                 f"passed: {str(self.passed).lower()}"]
        for k, v in self.details.items():
            lines.append(f"{k}: {v}")
        for n in self.notes:
            lines.append(f"note: {n}")
        lines.append(f"violations: {len(self.violations)}")
        if self.violations:
            lines.append("  row col value")
            for r, c, v in self.violations[:max_rows]:
                lines.append(f"  {r + 1} {c + 1 if c >= 0 else '-'} {v:.6e}")
            if len(self.violations) > max_rows:
                lines.append(f"  ... {len(self.violations) - max_rows} more")
        return "\n".join(lines)


def _row_scale(A: sp.csr_matrix) -> np.ndarray:
    absA = abs(A)
    return np.asarray(absA.max(axis=1).todense()).ravel()


def check_nonnegative_type(A, M: int, tol: float = SIGN_TOL) -> DmpCertificate:
    """Non-positive off-diagonals and non-negative row sums in rows < M.

    ``details`` records the two conditions separately and whether every
    one of the first M rows sums to zero.
    """
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    scale = _row_scale(A)[:M]
    cert = DmpCertificate("non-negative-type")
    top = A[:M].tocoo()
    off = (top.row != top.col) & (top.data > tol * scale[top.row])
    nn1 = [(int(i), int(j), float(v)) for i, j, v in
           zip(top.row[off], top.col[off], top.data[off])]
    rs = np.asarray(A[:M].sum(axis=1)).ravel()
    bad = np.flatnonzero(rs < -tol * np.maximum(scale, 1e-300))
    nn2 = [(int(i), -1, float(rs[i])) for i in bad]
    cert.violations = nn1 + nn2
    cert.details = {
        "nn1_offdiag_nonpositive": not nn1,
        "nn2_rowsum_nonnegative": not nn2,
        "zero_row_sum": bool(np.all(np.abs(rs) <= tol * np.maximum(scale, 1e-300))),
        "rows_checked": M,
    }
    return cert


def zero_row_sums(A, M: int, tol: float = SIGN_TOL) -> bool:
    A = sp.csr_matrix(A)
    rs = np.asarray(A[:M].sum(axis=1)).ravel()
    return bool(np.all(np.abs(rs) <= tol * np.maximum(_row_scale(A)[:M], 1e-300)))


def _dense(A, cap):
    n = A.shape[0]
    if n > cap:
        raise DenseCapError(f"matrix has {n} rows, dense cap is {cap}")
    return A.toarray() if sp.issparse(A) else np.array(A, dtype=float)


def _negative_entries(X, tol):
    lim = -tol * max(np.abs(X).max(), 1e-300)
    r, c = np.nonzero(X < lim)
    return [(int(i), int(j), float(X[i, j])) for i, j in zip(r, c)]


def check_m_matrix(A, monotone_only: bool = False, cap: int = DENSE_CAP,
                   tol: float = INVERSE_TOL) -> DmpCertificate:
    """M-matrix (or monotone-matrix) certificate via a dense inverse.

    Raises :class:`DenseCapError` above ``cap`` rows.
    """
    D = _dense(A, cap)
    cert = DmpCertificate("monotone" if monotone_only else "m-matrix")
    if not monotone_only:
        S = sp.csr_matrix(D)
        scale = _row_scale(S)
        coo = S.tocoo()
        off = (coo.row != coo.col) & (coo.data > SIGN_TOL * scale[coo.row])
        cert.violations += [(int(i), int(j), float(v)) for i, j, v in
                            zip(coo.row[off], coo.col[off], coo.data[off])]
        cert.details["offdiag_nonpositive"] = not bool(off.any())
    try:
        lu = scipy.linalg.lu_factor(D, check_finite=True)
        if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * np.abs(D).max()):
            raise scipy.linalg.LinAlgError("singular")
        inv = scipy.linalg.lu_solve(lu, np.eye(D.shape[0]))
    except (scipy.linalg.LinAlgError, ValueError):
        cert.details["invertible"] = False
        cert.violations.append((-1, -1, 0.0))
        return cert
    cert.details["invertible"] = True
    neg = _negative_entries(inv, tol)
    cert.details["inverse_nonnegative"] = not neg
    cert.details["min_inverse_entry"] = float(inv.min())
    cert.violations += neg
    return cert


def _stencil_extrema(A: sp.csr_matrix, u: np.ndarray, M: int):
    """Max and min of u_j over j != i with a_ij != 0, rows < M."""
    A = sp.csr_matrix(A[:M])
    A.eliminate_zeros()
    coo = A.tocoo()
    mask = coo.row != coo.col
    r, c = coo.row[mask], coo.col[mask]
    vmax = np.full(M, -np.inf)
    vmin = np.full(M, np.inf)
    np.maximum.at(vmax, r, u[c])
    np.minimum.at(vmin, r, u[c])
    return vmax, vmin


def _unpack(A, M):
    """Accept either a matrix with ``M`` or a DirichletSystem."""
    if hasattr(A, "matrix"):
        return sp.csr_matrix(A.matrix), A.n_free
    if M is None:
        raise TypeError("M is required when passing a bare matrix")
    return sp.csr_matrix(A), M


def verify_steady_local_dmp(A, u, f, M: int | None = None, tol: float = 1e-10,
                            zero_tol: float = SIGN_TOL) -> DmpCertificate:
    """Local DMP for a system matrix of non-negative type.

    Rows with f_i <= 0 must satisfy u_i <= max over the stencil of u_j^+
    (without the positive part when the row sums to zero); rows with
    f_i >= 0 satisfy the mirrored lower bound.  ``A`` may also be a
    DirichletSystem, in which case ``M`` is taken from it.
    """
    A, M = _unpack(A, M)
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)[:M]
    vmax, vmin = _stencil_extrema(A, u, M)
    rs = np.asarray(A[:M].sum(axis=1)).ravel()
    zr = np.abs(rs) <= zero_tol * np.maximum(_row_scale(A)[:M], 1e-300)
    upper = np.where(zr, vmax, np.maximum(vmax, 0.0))
    lower = np.where(zr, vmin, np.minimum(vmin, 0.0))
    ui = u[:M]
    bad_hi = (f <= 0) & (ui > upper + tol)
    bad_lo = (f >= 0) & (ui < lower - tol)
    cert = DmpCertificate("local-dmp")
    cert.violations = (
        [(int(i), -1, float(ui[i] - upper[i])) for i in np.flatnonzero(bad_hi)]
        + [(int(i), -1, float(ui[i] - lower[i])) for i in np.flatnonzero(bad_lo)])
    cert.details = {"rows_zero_sum": int(zr.sum()), "rows_checked": M}
    return cert


def verify_steady_global_dmp(A, u, f, M: int | None = None, tol: float = 1e-10,
                             zero_tol: float = SIGN_TOL) -> DmpCertificate:
    """Global DMP against the Dirichlet values ``u[M:]``.

    The upper bound is asserted when f <= 0 on every non-Dirichlet row
    and the lower bound when f >= 0; with zero row sums the bounds are
    the Dirichlet max/min themselves, otherwise their positive/negative
    parts.
    """
    A, M = _unpack(A, M)
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)[:M]
    cert = DmpCertificate("global-dmp")
    if M == len(u):
        cert.notes.append("no Dirichlet nodes, bound undefined")
        return cert
    ub = u[M:]
    zr = zero_row_sums(A, M, zero_tol)
    hi = ub.max() if zr else max(ub.max(), 0.0)
    lo = ub.min() if zr else min(ub.min(), 0.0)
    cert.details = {"zero_row_sum": zr, "bound_hi": float(hi),
                    "bound_lo": float(lo), "u_max": float(u.max()),
                    "u_min": float(u.min())}
    if np.all(f <= 0):
        bad = np.flatnonzero(u > hi + tol)
        cert.violations += [(int(i), -1, float(u[i] - hi)) for i in bad]
    else:
        cert.notes.append("f <= 0 fails, upper bound not asserted")
    if np.all(f >= 0):
        bad = np.flatnonzero(u < lo - tol)
        cert.violations += [(int(i), -1, float(u[i] - lo)) for i in bad]
    else:
        cert.notes.append("f >= 0 fails, lower bound not asserted")
    return cert


def verify_transient_conditions(B, K, M: int, cap: int = DENSE_CAP,
                                tol: float = INVERSE_TOL,
                                rowsum_tol: float = 1e-12) -> DmpCertificate:
    """Positivity and global-DMP conditions of ``B u^{n+1} = K u^n``.

    Checks ``B_I^{-1} (K_I | K_B) >= 0``, ``-B_I^{-1} B_B >= 0`` and equal
    row sums of ``(B_I | B_B)`` and ``(K_I | K_B)``.
    """
    if M > cap:
        raise DenseCapError(f"{M} unknowns, dense cap is {cap}")
    Bd = sp.csr_matrix(B)[:M].toarray()
    Kd = sp.csr_matrix(K)[:M].toarray()
    BI, BB = Bd[:, :M], Bd[:, M:]
    cert = DmpCertificate("fct-conditions")
    lu = scipy.linalg.lu_factor(BI)
    X = scipy.linalg.lu_solve(lu, Kd)
    Y = -scipy.linalg.lu_solve(lu, BB) if BB.shape[1] else np.zeros((M, 0))
    v_rhs = _negative_entries(X, tol)
    v_bdry = _negative_entries(Y, tol) if Y.size else []
    diff = Bd.sum(axis=1) - Kd.sum(axis=1)
    scale = np.maximum(np.abs(Bd).max(axis=1), np.abs(Kd).max(axis=1))
    bad_rows = np.flatnonzero(np.abs(diff) > rowsum_tol * scale)
    cert.details = {
        "cond_rhs": not v_rhs,
        "cond_bdry": not v_bdry,
        "cond_rows": not bad_rows.size,
        "positivity_preserving": not v_rhs and not v_bdry,
    }
    cert.violations = (v_rhs + [(i, j + M, v) for i, j, v in v_bdry]
                       + [(int(i), -1, float(diff[i])) for i in bad_rows])
    return cert


# ----------------------------------------------------------------------
# MatrixMarket

def write_matrix(A, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), precision=17)


def read_matrix(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))
