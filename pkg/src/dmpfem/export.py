"""
Plain-text output: node-value dumps and legacy-VTK files.

A node dump has one comment header line with the DOF count, optional
further ``#`` lines, then one ``x y u`` line per node.
"""
from __future__ import annotations

import numpy as np

from .mesh import Mesh


def write_nodes(path, mesh: Mesh, u, header_lines=()) -> None:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"expected {mesh.n_nodes} values, got {u.shape}")
    with open(path, "w") as fh:
        fh.write(f"# dofs {mesh.n_nodes}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        np.savetxt(fh, np.column_stack([mesh.points, u]), fmt="%.17g")


def read_nodes(path):
    """Return ``(points, u)`` from a node dump."""
    with open(path) as fh:
        first = fh.readline().split()
    if first[:2] != ["#", "dofs"]:
        raise ValueError(f"{path}: missing '# dofs' header")
    data = np.loadtxt(path, comments="#", ndmin=2)
    if len(data) != int(first[2]):
        raise ValueError(f"{path}: header says {first[2]} rows, "
                         f"found {len(data)}")
    return data[:, :2], data[:, 2]


def write_vtk(path, mesh: Mesh, point_data: dict, title="dmpfem") -> None:
    """ASCII legacy VTK unstructured grid with scalar point fields."""
    n, c = mesh.n_nodes, mesh.n_cells
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\n"
                 "DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        np.savetxt(fh, np.column_stack([mesh.points, np.zeros(n)]),
                   fmt="%.17g")
        fh.write(f"CELLS {c} {4 * c}\n")
        np.savetxt(fh, np.column_stack([np.full(c, 3), mesh.cells]), fmt="%d")
        fh.write(f"CELL_TYPES {c}\n")
        np.savetxt(fh, np.full(c, 5), fmt="%d")     # VTK_TRIANGLE
        fh.write(f"POINT_DATA {n}\n")
        for name, vals in point_data.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (n,):
                raise ValueError(f"field {name!r} has shape {vals.shape}")
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, vals, fmt="%.17g")
