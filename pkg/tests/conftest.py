import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, echoed in the terminal summary
CRITERIA = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


def random_graph(rng, n):
    """Connected random symmetric adjacency (no self loops)."""
    adj = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    for k in range(1, n):               # random spanning tree
        a, b = order[k], order[rng.integers(k)]
        adj[a, b] = adj[b, a] = True
    extra = rng.random((n, n)) < rng.uniform(0.1, 0.6)
    extra = np.triu(extra, 1)
    adj |= extra | extra.T
    np.fill_diagonal(adj, False)
    return adj


def random_instance(rng, ties=False):
    """Random limiter instance: ``(A dense, A sparse, u, adj, n_free)``.

    ``A`` has independent random entries on the pattern, so both signs
    occur in both directions.  With ``ties`` some edges get ``a_ij = a_ji``
    and ``u`` is rounded so zero fluxes and equal extrema show up.
    """
    n = int(rng.integers(5, 13))
    adj = random_graph(rng, n)
    A = np.where(adj, rng.normal(size=(n, n)), 0.0)
    if ties:
        sym = np.triu(rng.random((n, n)) < 0.4, 1)
        A[sym.T] = A.T[sym.T]
    np.fill_diagonal(A, rng.uniform(1.0, 3.0, n))
    u = rng.uniform(-1.0, 1.0, n)
    if ties:
        u = np.round(u * 2) / 2
    n_free = int(rng.integers(1, n + 1))
    r, c = np.nonzero(adj | np.eye(n, dtype=bool))
    As = sp.csr_matrix((A[r, c], (r, c)), shape=(n, n))
    return A, As, u, adj, n_free


def edge_values(M, i, j):
    return np.array([M[a, b] for a, b in zip(i, j)])


def zalesak_instance(rng, ties=False):
    """Random antisymmetric fluxes on a random graph.

    Returns ``(EdgeFluxes, F dense, u_bar, m, tau, adj, n_free)``.
    """
    from dmpfem.steady.limiters import matrix_edges
    from dmpfem.transient import EdgeFluxes

    A, As, u, adj, M = random_instance(rng, ties=ties)
    n = len(u)
    F = np.where(adj, rng.normal(size=(n, n)), 0.0)
    F = np.triu(F, 1)
    F = F - F.T
    if ties:
        F[np.abs(F) < 0.3] = 0.0
    m = rng.uniform(0.1, 1.0, n)
    tau = float(rng.uniform(0.01, 1.0))
    i, j = matrix_edges(As)
    return EdgeFluxes(n, i, j, edge_values(F, i, j)), F, u, m, tau, adj, M


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
