"""Algebraic flux correction: artificial diffusion matrix and limiters.

All limiters work on the undirected edge list of a matrix pattern.  An
edge ``e = (i, j)`` with ``i < j`` carries the flux ``f_ij = d_ij (u_j -
u_i)``; the reverse flux is ``-f_ij``.  Limiters return a
:class:`LimiterState` whose ``b`` entries define the symmetric matrix
``B(u)`` of the stabilization term ``sum_j b_ij (u_j - u_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mesh import Mesh


# ----------------------------------------------------------------------
# edge views

def matrix_edges(A) -> tuple[np.ndarray, np.ndarray]:
    """Undirected off-diagonal pattern of ``A`` as sorted pairs ``i < j``.

    Explicitly stored zeros count as pattern entries.
    """
    if sp.isspmatrix_csr(A):
        row = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        col = A.indices
    else:
        coo = sp.coo_matrix(A)
        row, col = coo.row, coo.col
    off = row != col
    a = np.minimum(row[off], col[off])
    b = np.maximum(row[off], col[off])
    key = np.unique(a.astype(np.int64) * A.shape[0] + b)
    return key // A.shape[0], key % A.shape[0]


def entries(A, i, j) -> np.ndarray:
    """Values ``A[i_k, j_k]`` (0 outside the pattern)."""
    if not len(i):
        return np.zeros(0)
    A = A if sp.isspmatrix_csr(A) else sp.csr_matrix(A)
    if not A.has_canonical_format:
        A = A.copy()
        A.sum_duplicates()
    # row-major keys of a canonical CSR matrix are sorted
    n_col = A.shape[1]
    rows = np.repeat(np.arange(A.shape[0], dtype=np.int64), np.diff(A.indptr))
    keys = rows * n_col + A.indices
    q = np.asarray(i, dtype=np.int64) * n_col + np.asarray(j)
    pos = np.minimum(np.searchsorted(keys, q), max(len(keys) - 1, 0))
    if not len(keys):
        return np.zeros(len(q))
    return np.where(keys[pos] == q, A.data[pos], 0.0)


def edge_matrix(n, i, j, b) -> sp.csr_matrix:
    """Symmetric matrix with off-diagonals ``b`` and zero row sums."""
    diag = -np.bincount(i, b, minlength=n) - np.bincount(j, b, minlength=n)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    order = np.lexsort((cols, rows))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    vals = np.concatenate([b, b, diag])[order]
    return sp.csr_matrix((vals, cols[order], indptr), shape=(n, n))


def afc_d_matrix(A) -> sp.csr_matrix:
    """Artificial diffusion matrix, ``d_ij = -max{0, a_ij, a_ji}``.

    The diagonal makes row and column sums vanish.
    """
    A = A if sp.isspmatrix_csr(A) else sp.csr_matrix(A)
    i, j = matrix_edges(A)
    d = -np.maximum(0.0, np.maximum(entries(A, i, j), entries(A, j, i)))
    return edge_matrix(A.shape[0], i, j, d)


@dataclass
class LimiterState:
    """Intermediate and final quantities of one limiter evaluation.

    Edge arrays are indexed like ``i``/``j`` (``i < j``).  ``alpha_ij``
    and ``alpha_ji`` are the directed factors, ``alpha`` the factor used
    in ``b``, and ``b`` the off-diagonal of B(u).  The smoothness-based
    viscosity has no P/Q/R quantities and stores its indicator in ``xi``.
    """

    n: int
    i: np.ndarray
    j: np.ndarray
    flux: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    R_plus: np.ndarray
    R_minus: np.ndarray
    alpha_ij: np.ndarray
    alpha_ji: np.ndarray
    alpha: np.ndarray
    b: np.ndarray
    xi: np.ndarray | None = None

    def B(self) -> sp.csr_matrix:
        return edge_matrix(self.n, self.i, self.j, self.b)

    def stabilization(self, u) -> np.ndarray:
        """``sum_j b_ij (u_j - u_i)`` for every node."""
        u = np.asarray(u, dtype=float)
        t = self.b * (u[self.j] - u[self.i])
        out = np.zeros(self.n)
        np.add.at(out, self.i, t)
        np.add.at(out, self.j, -t)
        return out


def _node_sum(n, i, j, vi, vj):
    out = np.zeros(n)
    np.add.at(out, i, vi)
    np.add.at(out, j, vj)
    return out


def _ratio(Q, P, n_free):
    """``min{1, Q/P}``, 1 where P = 0 and at Dirichlet nodes."""
    R = np.ones_like(P)
    nz = P != 0
    with np.errstate(over="ignore"):     # Q/P = inf still gives 1
        R[nz] = np.minimum(1.0, Q[nz] / P[nz])
    R[n_free:] = 1.0
    return R


def _directed_alpha(f, Rp, Rm):
    """alpha-tilde of a directed flux given the limiter of its tail."""
    return np.where(f > 0, Rp, np.where(f < 0, Rm, 1.0))


def _setup(A, D, u, n_free):
    A = A if sp.isspmatrix_csr(A) else sp.csr_matrix(A)
    n = A.shape[0]
    u = np.asarray(u, dtype=float)
    if u.shape != (n,):
        raise ValueError(f"u has shape {u.shape}, expected ({n},)")
    i, j = matrix_edges(A)
    d = entries(D, i, j)
    f = d * (u[j] - u[i])
    return A, n, u, i, j, d, f, (n if n_free is None else n_free)


def limiter_kuzmin(A, D, u, variant: str = "classic",
                   n_free: int | None = None) -> LimiterState:
    """Kuzmin limiter for the AFC scheme.

    Parameters
    ----------
    A : sparse matrix
        Neumann matrix whose entries select the flux directions.
    D : sparse matrix
        Artificial diffusion matrix from :func:`afc_d_matrix`.
    u : (N,) array
    variant : {"classic", "modified"}
        ``classic`` sums fluxes with ``a_ji <= a_ij`` into P and
        symmetrizes alpha through the same condition; ties
        ``a_ij = a_ji`` take the factor of the lower node index.
        ``modified`` uses ``P = sum_{a_ij > 0} a_ij (u_i - u_j)^{+/-}`` and
        ``b_ij = -max{0, (1 - at_ij) a_ij, (1 - at_ji) a_ji}``.
    n_free : int, optional
        Rows ``>= n_free`` are Dirichlet rows with R = 1.
    """
    if variant not in ("classic", "modified"):
        raise ValueError(f"unknown Kuzmin variant {variant!r}")
    A, n, u, i, j, d, f, M = _setup(A, D, u, n_free)
    a_ij, a_ji = entries(A, i, j), entries(A, j, i)
    fp, fm = np.maximum(f, 0.0), np.minimum(f, 0.0)
    if variant == "classic":
        si = a_ji <= a_ij          # edge counts for node i
        sj = a_ij <= a_ji          # edge counts for node j (flux -f)
        Pp = _node_sum(n, i, j, np.where(si, fp, 0.0), np.where(sj, -fm, 0.0))
        Pm = _node_sum(n, i, j, np.where(si, fm, 0.0), np.where(sj, -fp, 0.0))
    else:
        du = u[i] - u[j]
        wi = np.where(a_ij > 0, a_ij, 0.0)
        wj = np.where(a_ji > 0, a_ji, 0.0)
        Pp = _node_sum(n, i, j, wi * np.maximum(du, 0), wj * np.maximum(-du, 0))
        Pm = _node_sum(n, i, j, wi * np.minimum(du, 0), wj * np.minimum(-du, 0))
    Qp = -_node_sum(n, i, j, fm, -fp)
    Qm = -_node_sum(n, i, j, fp, -fm)
    Rp, Rm = _ratio(Qp, Pp, M), _ratio(Qm, Pm, M)
    at_ij = _directed_alpha(f, Rp[i], Rm[i])
    at_ji = _directed_alpha(-f, Rp[j], Rm[j])
    if variant == "classic":
        alpha = np.where(a_ji <= a_ij, at_ij, at_ji)
        b = (1.0 - alpha) * d
    else:
        alpha = np.minimum(at_ij, at_ji)
        b = -np.maximum(0.0, np.maximum((1 - at_ij) * a_ij, (1 - at_ji) * a_ji))
    return LimiterState(n, i, j, f, Pp, Pm, Qp, Qm, Rp, Rm, at_ij, at_ji,
                        alpha, b)


# ----------------------------------------------------------------------
# BJK

def _hull(pts):
    """Convex hull vertices (counterclockwise, collinear points dropped)."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    P = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in P[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def bjk_gamma(mesh: Mesh, nodes=None, rtol: float = 1e-10) -> np.ndarray:
    """Linearity-preserving constants ``gamma_i`` of the BJK limiter.

    ``gamma_i = max_j |x_i - x_j| / dist(x_i, boundary of conv(omega_i))``
    over the neighbours x_j.  For nodes on the boundary of the domain the
    distance is taken to the hull edges that do not pass through x_i.
    Nodes outside ``nodes`` (default: the non-Dirichlet nodes) get 1.

    Raises
    ------
    ValueError
        If the distance is zero (degenerate patch).
    """
    if nodes is None:
        nodes = np.arange(mesh.n_free)
    gamma = np.ones(mesh.n_nodes)
    adj = mesh.adjacency
    P = mesh.points
    for i in nodes:
        nb = adj.indices[adj.indptr[i]:adj.indptr[i + 1]]
        x = P[i]
        rad = np.linalg.norm(P[nb] - x, axis=1).max()
        H = _hull(np.vstack([P[nb], x]))
        a, b = H, np.roll(H, -1, axis=0)
        e = b - a
        dist = np.abs(e[:, 0] * (x[1] - a[:, 1]) - e[:, 1] * (x[0] - a[:, 0])) \
            / np.linalg.norm(e, axis=1)
        dist = dist[dist > rtol * rad]
        if not len(dist):
            raise ValueError(f"degenerate patch at node {i}")
        gamma[i] = rad / dist.min()
    return gamma


def limiter_bjk(A, D, u, mesh: Mesh | None = None, gamma="computed",
                n_free: int | None = None) -> LimiterState:
    """BJK limiter.

    Parameters
    ----------
    gamma : "computed", float or (N,) array
        ``"computed"`` evaluates :func:`bjk_gamma` on ``mesh``; a number
        or array fixes the constants.
    """
    A, n, u, i, j, d, f, M = _setup(A, D, u, n_free)
    if isinstance(gamma, str):
        if gamma != "computed":
            raise ValueError(f"unknown gamma mode {gamma!r}")
        if mesh is None:
            raise ValueError("computed gamma needs the mesh")
        gamma = bjk_gamma(mesh, np.arange(M))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
    fp, fm = np.maximum(f, 0.0), np.minimum(f, 0.0)
    Pp = _node_sum(n, i, j, fp, -fm)
    Pm = _node_sum(n, i, j, fm, -fp)
    umax, umin = u.copy(), u.copy()
    np.maximum.at(umax, i, u[j])
    np.maximum.at(umax, j, u[i])
    np.minimum.at(umin, i, u[j])
    np.minimum.at(umin, j, u[i])
    q = gamma * _node_sum(n, i, j, d, d)
    Qp = q * (u - umax)
    Qm = q * (u - umin)
    Rp, Rm = _ratio(Qp, Pp, M), _ratio(Qm, Pm, M)
    at_ij = _directed_alpha(f, Rp[i], Rm[i])
    at_ji = _directed_alpha(-f, Rp[j], Rm[j])
    alpha = np.minimum(at_ij, at_ji)
    return LimiterState(n, i, j, f, Pp, Pm, Qp, Qm, Rp, Rm, at_ij, at_ji,
                        alpha, (1.0 - alpha) * d)


# ----------------------------------------------------------------------
# BBK

def smoothness_indicator(u, i, j, n) -> np.ndarray:
    """``xi_i = |sum_j (u_i - u_j)| / sum_j |u_i - u_j|`` (0 if the
    denominator vanishes)."""
    u = np.asarray(u, dtype=float)
    du = u[i] - u[j]
    num = np.abs(_node_sum(n, i, j, du, -du))
    den = _node_sum(n, i, j, np.abs(du), np.abs(du))
    xi = np.zeros(n)
    nz = den > 0
    xi[nz] = num[nz] / den[nz]
    return np.minimum(xi, 1.0)


def limiter_bbk(u, mesh: Mesh, gamma0: float = 0.75, p: float = 10.0):
    """Smoothness-based viscosity ``b_ij = -gamma0 h_E max(xi_i, xi_j)^p``.

    Returns a :class:`LimiterState` with ``alpha = 1 - max(xi)^p`` so the
    matrix interface matches the flux limiters.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_nodes
    xi = smoothness_indicator(u, i, j, n)
    s = np.maximum(xi[i], xi[j]) ** p
    b = -gamma0 * mesh.edge_lengths * s
    return LimiterState(n, i, j, np.zeros(len(i)), None, None, None, None,
                        None, None, 1.0 - s, 1.0 - s, 1.0 - s, b, xi)
