"""
Conforming triangular meshes of polygonal domains.

Nodes are stored so that all non-Dirichlet nodes (interior and Neumann)
come first, ids ``0..M-1``, followed by the Dirichlet nodes ``M..N-1``.
Boundary conditions are attached to boundary edges; a node inherits the
kind of its boundary edges with Dirichlet taking precedence, so corner
nodes shared by a Dirichlet and a Neumann side become Dirichlet.

Example
-------
>>> m = generate_unit_square(3, {"bottom": "d", "right": "d",
...                              "left": "n", "top": "n"})
>>> m.n_nodes, m.n_cells
(81, 128)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
KIND_CHARS = {INTERIOR: "i", DIRICHLET: "d", NEUMANN: "n"}
CHAR_KINDS = {v: k for k, v in KIND_CHARS.items()}

# slack used by all angle predicates so exact right angles count as acute
ANGLE_TOL = 1e-12

MESH_HEADER = "dmpfem-mesh v1"


class MeshError(ValueError):
    """Raised for malformed mesh files or invalid topology."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    points : (N, 2) array
        Node coordinates, non-Dirichlet nodes first.
    cells : (C, 3) int array
        Counterclockwise vertex triples.
    kinds : (N,) int array
        ``INTERIOR``, ``DIRICHLET`` or ``NEUMANN`` per node.
    bnd_edges : (B, 2) int array
        Boundary edges (sorted node pairs).
    bnd_kinds : (B,) int array
        ``DIRICHLET`` or ``NEUMANN`` per boundary edge.
    reoriented : int
        Number of cells flipped to counterclockwise order on input.
    """

    points: np.ndarray
    cells: np.ndarray
    kinds: np.ndarray
    bnd_edges: np.ndarray
    bnd_kinds: np.ndarray
    reoriented: int = field(default=0)

    # ------------------------------------------------------------------
    # sizes
    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @cached_property
    def n_free(self) -> int:
        """Number M of non-Dirichlet nodes."""
        return int(np.count_nonzero(self.kinds != DIRICHLET))

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return np.arange(self.n_free, self.n_nodes)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.bnd_edges)

    @cached_property
    def on_boundary(self) -> np.ndarray:
        flag = np.zeros(self.n_nodes, dtype=bool)
        flag[self.boundary_nodes] = True
        return flag

    # ------------------------------------------------------------------
    # cell geometry
    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.points[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        """(C, 3, 2) vectors of the edge opposite each local vertex."""
        p = self.points[self.cells]
        return np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2],
                         p[:, 1] - p[:, 0]], axis=1)

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        """h_K, the longest edge of each cell."""
        return np.linalg.norm(self.edge_vectors, axis=2).max(axis=1)

    @cached_property
    def angles(self) -> np.ndarray:
        """(C, 3) interior angle at each local vertex."""
        ev = self.edge_vectors
        out = np.empty((self.n_cells, 3))
        for k in range(3):
            # the two edges leaving vertex k
            a = -ev[:, (k + 2) % 3]
            b = ev[:, (k + 1) % 3]
            cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            dot = (a * b).sum(axis=1)
            out[:, k] = np.arctan2(np.abs(cross), dot)
        return out

    @cached_property
    def cotangents(self) -> np.ndarray:
        """(C, 3) cotangent of the angle at each local vertex."""
        ev = self.edge_vectors
        out = np.empty((self.n_cells, 3))
        for k in range(3):
            a = -ev[:, (k + 2) % 3]
            b = ev[:, (k + 1) % 3]
            cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            out[:, k] = (a * b).sum(axis=1) / np.abs(cross)
        return out

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.points[self.cells].mean(axis=1)

    # ------------------------------------------------------------------
    # topology
    @cached_property
    def _edge_topology(self):
        C = self.n_cells
        # local edge k is opposite local vertex k
        loc = np.stack([self.cells[:, [1, 2]], self.cells[:, [2, 0]],
                        self.cells[:, [0, 1]]], axis=1).reshape(-1, 2)
        loc = np.sort(loc, axis=1)
        edges, inv, counts = np.unique(loc, axis=0, return_inverse=True,
                                       return_counts=True)
        inv = inv.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-conforming topology: edge shared by more "
                            "than two cells")
        cell_edges = inv.reshape(C, 3)
        edge_cells = -np.ones((len(edges), 2), dtype=np.int64)
        edge_local = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        cell_of = order // 3
        local_of = order % 3
        sorted_inv = inv[order]
        first = np.r_[True, sorted_inv[1:] != sorted_inv[:-1]]
        edge_cells[sorted_inv[first], 0] = cell_of[first]
        edge_local[sorted_inv[first], 0] = local_of[first]
        edge_cells[sorted_inv[~first], 1] = cell_of[~first]
        edge_local[sorted_inv[~first], 1] = local_of[~first]
        return edges, cell_edges, edge_cells, edge_local

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) sorted node pairs."""
        return self._edge_topology[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(C, 3) edge id opposite each local vertex."""
        return self._edge_topology[1]

    @property
    def edge_cells(self) -> np.ndarray:
        """(E, 2) incident cells, second column -1 on boundary edges."""
        return self._edge_topology[2]

    @property
    def edge_local(self) -> np.ndarray:
        """(E, 2) local index of the vertex opposite the edge in each cell."""
        return self._edge_topology[3]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def interior_edge_mask(self) -> np.ndarray:
        return self.edge_cells[:, 1] >= 0

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Boolean node-node adjacency through edges (S_i as CSR rows)."""
        n = self.n_nodes
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i), dtype=bool)
        A = sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))
        A.sort_indices()
        return A

    def neighbors(self, i: int) -> np.ndarray:
        """Neighbour set S_i of node ``i``."""
        A = self.adjacency
        return A.indices[A.indptr[i]:A.indptr[i + 1]]

    @cached_property
    def node_cells(self) -> sp.csr_matrix:
        """Node-to-cell incidence; row i lists the patch omega_i."""
        C = self.n_cells
        rows = self.cells.reshape(-1)
        cols = np.repeat(np.arange(C), 3)
        M = sp.csr_matrix((np.ones(3 * C, dtype=bool), (rows, cols)),
                          shape=(self.n_nodes, C))
        M.sort_indices()
        return M

    def patch(self, i: int) -> np.ndarray:
        """Cell ids of the patch omega_i."""
        M = self.node_cells
        return M.indices[M.indptr[i]:M.indptr[i + 1]]

    @cached_property
    def lumping_volumes(self) -> np.ndarray:
        """|D_i| = |omega_i| / 3."""
        vol = np.zeros(self.n_nodes)
        np.add.at(vol, self.cells.reshape(-1), np.repeat(self.areas / 3.0, 3))
        return vol

    def is_connected(self) -> bool:
        ncomp, _ = sp.csgraph.connected_components(self.adjacency,
                                                    directed=False)
        return ncomp == 1


# ----------------------------------------------------------------------
# construction

def node_kinds_from_edges(n_nodes, bnd_edges, bnd_kinds):
    """Derive node kinds from boundary-edge kinds, Dirichlet wins."""
    kinds = np.full(n_nodes, INTERIOR, dtype=np.int8)
    for kind in (NEUMANN, DIRICHLET):
        kinds[bnd_edges[bnd_kinds == kind].reshape(-1)] = kind
    return kinds


def build_mesh(points, cells, bnd_kinds_of=None, node_kinds=None,
               edge_kinds=None) -> Mesh:
    """Assemble a :class:`Mesh` and re-establish the node ordering.

    Boundary edge kinds are taken from ``edge_kinds`` (a dict keyed by
    sorted node pairs), from ``bnd_kinds_of`` (a callable mapping an
    edge midpoint to a kind), or from ``node_kinds`` (an edge is
    Dirichlet when both ends are Dirichlet).  Without any of these the
    whole boundary is Dirichlet.
    """
    points = np.asarray(points, dtype=float)
    cells = np.array(cells, dtype=np.int64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise MeshError("points must have shape (N, 2)")
    if not np.all(np.isfinite(points)):
        raise MeshError("non-finite node coordinates")
    if cells.size and (cells.min() < 0 or cells.max() >= len(points)):
        raise MeshError("cell references a missing node")

    p = points[cells]
    sa = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    if np.any(sa == 0.0):
        raise MeshError(f"degenerate cell {int(np.flatnonzero(sa == 0)[0])}")
    flip = sa < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]

    loc = np.sort(np.concatenate([cells[:, [1, 2]], cells[:, [2, 0]],
                                  cells[:, [0, 1]]]), axis=1)
    edges, counts = np.unique(loc, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-conforming topology: edge shared by more than "
                        "two cells")
    bnd = edges[counts == 1]

    if edge_kinds is not None:
        bk = np.array([edge_kinds.get((int(a), int(b)), DIRICHLET)
                       for a, b in bnd], dtype=np.int8)
    elif bnd_kinds_of is not None:
        mid = 0.5 * (points[bnd[:, 0]] + points[bnd[:, 1]])
        bk = np.array([bnd_kinds_of(x, y) for x, y in mid], dtype=np.int8)
    elif node_kinds is not None:
        nk = np.asarray(node_kinds)
        both_d = (nk[bnd[:, 0]] == DIRICHLET) & (nk[bnd[:, 1]] == DIRICHLET)
        bk = np.where(both_d, DIRICHLET, NEUMANN).astype(np.int8)
    else:
        bk = np.full(len(bnd), DIRICHLET, dtype=np.int8)

    kinds = node_kinds_from_edges(len(points), bnd, bk)
    if node_kinds is not None:
        nk = np.asarray(node_kinds, dtype=np.int8)
        # an explicit 'd' on a boundary node is honoured even when its
        # edges are Neumann (isolated Dirichlet points)
        onb = np.zeros(len(points), dtype=bool)
        onb[bnd.reshape(-1)] = True
        kinds = np.where(onb & (nk == DIRICHLET), DIRICHLET, kinds)
        if np.any(~onb & (nk != INTERIOR)):
            raise MeshError("boundary kind assigned to an interior node")

    # non-Dirichlet first, stable within each group
    perm = np.argsort(kinds == DIRICHLET, kind="stable")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    bnd_new = np.sort(inv[bnd], axis=1)
    return Mesh(points=points[perm].copy(), cells=inv[cells],
                kinds=kinds[perm].copy(), bnd_edges=bnd_new,
                bnd_kinds=bk, reoriented=int(flip.sum()))


def _square_side(x, y, tol=1e-12):
    if abs(y) <= tol:
        return "bottom"
    if abs(x - 1.0) <= tol:
        return "right"
    if abs(y - 1.0) <= tol:
        return "top"
    return "left"


def generate_unit_square(level: int, bc_spec=None) -> Mesh:
    """Uniform mesh of the unit square after ``level`` red refinements.

    Level 0 is the two-triangle split along the diagonal from (0, 1) to
    (1, 0); every finer level has the same diagonal direction in each
    grid square.

    Parameters
    ----------
    level : int
        Refinement level, giving ``(2**level + 1)**2`` nodes.
    bc_spec : dict, optional
        Maps ``"bottom"``, ``"right"``, ``"top"``, ``"left"`` to ``"d"``
        or ``"n"``.  Missing sides default to Dirichlet.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    n = 2 ** level
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)          # row-major in y, so (y, x) sorted
    points = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    p00 = idx[:-1, :-1].ravel()
    p10 = idx[:-1, 1:].ravel()
    p01 = idx[1:, :-1].ravel()
    p11 = idx[1:, 1:].ravel()
    lower = np.column_stack([p00, p10, p01])
    upper = np.column_stack([p10, p11, p01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return build_mesh(points, cells, bnd_kinds_of=_side_kinds(bc_spec))


def generate_equilateral(n: int, kind_of=None) -> Mesh:
    """Strictly acute mesh of a rhombus by equilateral triangles.

    The rhombus has vertices (0, 0), (1, 0), (3/2, sqrt(3)/2) and
    (1/2, sqrt(3)/2) and is split into ``2 n**2`` equilateral cells, so
    every angle is pi/3.

    Parameters
    ----------
    n : int
        Cells per side.
    kind_of : callable, optional
        ``kind_of(x, y)`` gives the kind of the boundary edge with this
        midpoint.  Defaults to Dirichlet everywhere.
    """
    if n < 1:
        raise ValueError("n must be positive")
    h = 1.0 / n
    j, i = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    points = np.column_stack([(i + 0.5 * j).ravel() * h,
                              (j * np.sqrt(3.0) / 2.0).ravel() * h])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    p00 = idx[:-1, :-1].ravel()
    p10 = idx[:-1, 1:].ravel()
    p01 = idx[1:, :-1].ravel()
    p11 = idx[1:, 1:].ravel()
    cells = np.concatenate([np.column_stack([p00, p10, p01]),
                            np.column_stack([p10, p11, p01])])
    if kind_of is None:
        def kind_of(x, y):
            return DIRICHLET
    return build_mesh(points, cells, bnd_kinds_of=kind_of)


def _side_kinds(bc_spec):
    spec = {"bottom": "d", "right": "d", "top": "d", "left": "d"}
    if bc_spec:
        unknown = set(bc_spec) - set(spec)
        if unknown:
            raise ValueError(f"unknown sides {sorted(unknown)}")
        spec.update(bc_spec)

    def kind_of(x, y):
        return CHAR_KINDS[spec[_square_side(x, y)]]
    return kind_of


def red_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children.

    New nodes sit at edge midpoints; boundary-edge kinds pass to both
    halves of a split boundary edge.
    """
    N = mesh.n_nodes
    mids = 0.5 * (mesh.points[mesh.edges[:, 0]] + mesh.points[mesh.edges[:, 1]])
    points = np.vstack([mesh.points, mids])
    v = mesh.cells
    m = mesh.cell_edges + N           # midpoint opposite local vertex k
    cells = np.concatenate([
        np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([m[:, 2], v[:, 1], m[:, 0]]),
        np.column_stack([m[:, 1], m[:, 0], v[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    # children of each parent stay adjacent in the cell list
    cells = cells.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)

    edge_id = {tuple(e): k for k, e in enumerate(mesh.edges.tolist())}
    edge_kinds = {}
    for (a, b), kind in zip(mesh.bnd_edges.tolist(), mesh.bnd_kinds.tolist()):
        mid = N + edge_id[(a, b)]
        edge_kinds[(min(a, mid), max(a, mid))] = kind
        edge_kinds[(min(b, mid), max(b, mid))] = kind
    return build_mesh(points, cells, edge_kinds=edge_kinds)


def canonical_form(mesh: Mesh):
    """Numbering-independent representation for mesh comparison.

    Nodes are sorted lexicographically by (y, x) and cells by their sorted
    node triples.  Returns ``(points, kinds, cells)``.
    """
    order = np.lexsort((mesh.points[:, 0], mesh.points[:, 1]))
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    cells = np.sort(inv[mesh.cells], axis=1)
    cells = cells[np.lexsort(cells.T[::-1])]
    return mesh.points[order], mesh.kinds[order], cells


def same_mesh(a: Mesh, b: Mesh, atol: float = 1e-14) -> bool:
    pa, ka, ca = canonical_form(a)
    pb, kb, cb = canonical_form(b)
    return (pa.shape == pb.shape and ca.shape == cb.shape
            and np.allclose(pa, pb, rtol=0.0, atol=atol)
            and np.array_equal(ka, kb) and np.array_equal(ca, cb))


# ----------------------------------------------------------------------
# quality

@dataclass
class MeshQualityReport:
    weakly_acute: bool
    strictly_acute_margin: float
    average_acute_margin: float
    xz_satisfied: bool
    xz_violations: list
    delaunay: bool
    connected: bool
    max_angle: float
    reoriented: int = 0

    def lines(self):
        yield f"weakly_acute: {self.weakly_acute}"
        yield f"strictly_acute_margin: {self.strictly_acute_margin:.12g}"
        yield f"average_acute_margin: {self.average_acute_margin:.12g}"
        yield f"max_angle_deg: {np.degrees(self.max_angle):.12g}"
        yield f"xz_satisfied: {self.xz_satisfied}"
        yield f"delaunay: {self.delaunay}"
        yield f"connected: {self.connected}"
        yield f"reoriented_cells: {self.reoriented}"
        if self.xz_violations:
            yield "xz_violations:"
            yield "  node_a node_b cot_sum"
            for a, b, s in self.xz_violations:
                yield f"  {a + 1} {b + 1} {s:.6e}"

    def __str__(self):
        return "\n".join(self.lines())


def edge_cot_sums(mesh: Mesh) -> np.ndarray:
    """Sum of cot of the angles opposite each edge (one or two cells)."""
    cot = mesh.cotangents
    ec, el = mesh.edge_cells, mesh.edge_local
    s = cot[ec[:, 0], el[:, 0]].copy()
    inner = ec[:, 1] >= 0
    s[inner] += cot[ec[inner, 1], el[inner, 1]]
    return s


def _incircle(a, b, c, d):
    """Positive when d lies strictly inside the circumcircle of ccw abc."""
    ad, bd, cd = a - d, b - d, c - d
    A = np.stack([
        np.stack([ad[:, 0], ad[:, 1], (ad ** 2).sum(1)], axis=1),
        np.stack([bd[:, 0], bd[:, 1], (bd ** 2).sum(1)], axis=1),
        np.stack([cd[:, 0], cd[:, 1], (cd ** 2).sum(1)], axis=1),
    ], axis=1)
    return np.linalg.det(A)


def quality_report(mesh: Mesh, tol: float = ANGLE_TOL) -> MeshQualityReport:
    """Evaluate the mesh-quality predicates used by the DMP theory."""
    ang = mesh.angles
    max_angle = float(ang.max())
    weakly = max_angle <= 0.5 * np.pi + tol
    strict = 0.5 * np.pi - max_angle

    inner = mesh.interior_edge_mask
    ec, el = mesh.edge_cells[inner], mesh.edge_local[inner]
    if inner.any():
        opp = ang[ec[:, 0], el[:, 0]] + ang[ec[:, 1], el[:, 1]]
        avg = float(np.pi - opp.max())
    else:
        avg = np.inf

    cs = edge_cot_sums(mesh)
    bad = np.flatnonzero(inner & (cs < -tol))
    violations = [(int(mesh.edges[k, 0]), int(mesh.edges[k, 1]),
                   float(cs[k])) for k in bad]

    # Delaunay via the in-circle determinant, independent of the angles
    delaunay = True
    if inner.any():
        cells = mesh.cells
        P = mesh.points
        d = P[cells[ec[:, 1], el[:, 1]]]
        tri = P[cells[ec[:, 0]]]
        det = _incircle(tri[:, 0], tri[:, 1], tri[:, 2], d)
        scale = (mesh.cell_diameters[ec[:, 0]] ** 4)
        delaunay = bool(np.all(det <= tol * scale))

    return MeshQualityReport(
        weakly_acute=bool(weakly), strictly_acute_margin=float(strict),
        average_acute_margin=avg, xz_satisfied=not violations,
        xz_violations=violations, delaunay=delaunay,
        connected=mesh.is_connected(), max_angle=max_angle,
        reoriented=mesh.reoriented)


# ----------------------------------------------------------------------
# text format

def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(MESH_HEADER + "\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for (x, y), k in zip(mesh.points, mesh.kinds):
            fh.write(f"{float(x)!r} {float(y)!r} {KIND_CHARS[int(k)]}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for a, b, c in mesh.cells + 1:
            fh.write(f"{a} {b} {c}\n")


def _tokens(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format.

    Clockwise cells are reoriented; the count is kept in
    ``Mesh.reoriented`` and a warning is issued.
    """
    it = _tokens(path)

    def expect(word):
        try:
            ln, tok = next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file, expected '{word}'")
        if tok[0] != word or len(tok) != 2:
            raise MeshError(f"line {ln}, column 1: expected '{word} <count>'")
        try:
            return int(tok[1])
        except ValueError:
            raise MeshError(f"line {ln}, column 2: bad count {tok[1]!r}")

    try:
        ln, tok = next(it)
    except StopIteration:
        raise MeshError("empty mesh file")
    if " ".join(tok) != MESH_HEADER:
        raise MeshError(f"line {ln}, column 1: missing header '{MESH_HEADER}'")

    n = expect("nodes")
    pts = np.empty((n, 2))
    kinds = np.empty(n, dtype=np.int8)
    for k in range(n):
        try:
            ln, tok = next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file in node {k + 1}")
        if len(tok) != 3:
            raise MeshError(f"line {ln}: node {k + 1} needs 'x y kind'")
        for col in (0, 1):
            try:
                pts[k, col] = float(tok[col])
            except ValueError:
                raise MeshError(f"line {ln}, column {col + 1}: bad "
                                f"coordinate {tok[col]!r}")
        if tok[2] not in CHAR_KINDS:
            raise MeshError(f"line {ln}, column 3: kind must be i, d or n")
        kinds[k] = CHAR_KINDS[tok[2]]

    c = expect("cells")
    cells = np.empty((c, 3), dtype=np.int64)
    for k in range(c):
        try:
            ln, tok = next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file in cell {k + 1}")
        if len(tok) != 3:
            raise MeshError(f"line {ln}: cell {k + 1} needs three node ids")
        for col in range(3):
            try:
                v = int(tok[col])
            except ValueError:
                raise MeshError(f"line {ln}, column {col + 1}: bad node id "
                                f"{tok[col]!r} in cell {k + 1}")
            if not 1 <= v <= n:
                raise MeshError(f"line {ln}, column {col + 1}: cell {k + 1} "
                                f"references missing node {v}")
            cells[k, col] = v - 1
    for ln, tok in it:
        raise MeshError(f"line {ln}: trailing content")

    mesh = build_mesh(pts, cells, node_kinds=kinds)
    if mesh.reoriented:
        warnings.warn(f"{mesh.reoriented} clockwise cells reoriented")
    return mesh
