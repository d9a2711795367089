import numpy as np
import pytest

from dmpfem.export import read_nodes, write_nodes, write_vtk
from dmpfem.mesh import generate_unit_square


def test_nodes_roundtrip_exact(tmp_path, rng):
    m = generate_unit_square(3)
    u = rng.normal(size=m.n_nodes) * 1e-7
    p = tmp_path / "u.nodes"
    write_nodes(p, m, u, ["method = upwind"])
    lines = p.read_text().splitlines()
    assert lines[0] == f"# dofs {m.n_nodes}"
    assert lines[1] == "# method = upwind"
    pts, v = read_nodes(p)
    np.testing.assert_array_equal(pts, m.points)
    np.testing.assert_array_equal(v, u)


def test_nodes_shape_checked(tmp_path):
    m = generate_unit_square(1)
    with pytest.raises(ValueError):
        write_nodes(tmp_path / "x", m, np.zeros(3))


def test_nodes_header_checked(tmp_path):
    p = tmp_path / "bad.nodes"
    p.write_text("0 0 1\n")
    with pytest.raises(ValueError, match="dofs"):
        read_nodes(p)
    p.write_text("# dofs 2\n0 0 1\n")
    with pytest.raises(ValueError, match="header says 2"):
        read_nodes(p)


def test_vtk_layout(tmp_path):
    m = generate_unit_square(1)
    p = tmp_path / "u.vtk"
    write_vtk(p, m, {"u": np.arange(m.n_nodes, dtype=float)})
    lines = p.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert f"POINTS {m.n_nodes} double" in lines
    assert f"CELLS {m.n_cells} {4 * m.n_cells}" in lines
    k = lines.index(f"CELL_TYPES {m.n_cells}")
    assert lines[k + 1:k + 1 + m.n_cells] == ["5"] * m.n_cells
    k = lines.index("LOOKUP_TABLE default")
    assert [float(s) for s in lines[k + 1:]] == list(range(m.n_nodes))


def test_vtk_field_shape_checked(tmp_path):
    m = generate_unit_square(1)
    with pytest.raises(ValueError, match="field 'u'"):
        write_vtk(tmp_path / "u.vtk", m, {"u": np.zeros(2)})
