import csv
import io

import numpy as np
import pytest

from dmpfem.bench import (CSV_HEADER, QOI_NAMES, REFERENCE, XI, QoIRecord,
                          extract_outlet_qoi, inlet_profile, outlet_trace,
                          qoi_from_trace, rotating_profile_problem,
                          run_benchmark, run_single, superlevel_measure,
                          within_bounds)
from dmpfem.mesh import generate_unit_square

# exact outlet trace for vanishing diffusion: the inlet rotated by a
# quarter turn, so u(0, y) = inlet(y)
Y = np.union1d(np.linspace(0, 1, 20001),
               [0.375 - XI, 0.375, 0.5, 0.625, 0.625 + XI, 0.75, 0.875])
EXACT = inlet_profile(Y)


def test_inlet_values():
    assert inlet_profile(0.5) == pytest.approx(0.25)
    assert inlet_profile(0.875) == pytest.approx(0.5)
    assert inlet_profile(0.2) == 0.0
    assert inlet_profile(0.375) == pytest.approx(1.0)
    assert inlet_profile(0.625) == pytest.approx(0.5)
    assert inlet_profile(0.7) == 0.0
    assert inlet_profile(1.0) == 0.0
    np.testing.assert_allclose(inlet_profile([0.0, 0.5]), [0.0, 0.25])


def test_inlet_continuity():
    # jumps only inside the two layers of width XI
    x = np.linspace(0, 1, 100001)
    v = inlet_profile(x)
    assert v.min() == 0.0 and v.max() == pytest.approx(1.0, abs=1e-12)
    big = np.flatnonzero(np.abs(np.diff(v)) > 0.05)
    assert np.all((np.abs(x[big] - 0.375) < XI + 1e-5)
                  | (np.abs(x[big] - 0.625) < XI + 1e-5))


def test_exact_trace_qoi():
    q = qoi_from_trace(Y, EXACT)
    assert q.first_max == pytest.approx(1.0, abs=1e-9)
    assert q.min_val == pytest.approx(0.25, abs=1e-9)
    assert q.second_max == pytest.approx(0.5, abs=1e-9)
    assert q.left_profile_width == pytest.approx(0.25 + 1.7 * XI, abs=1e-6)
    assert q.bump_height == pytest.approx(0.5, abs=1e-9)
    width = 0.25 - (0.25 - np.sqrt(0.25 ** 2 - 4 / 320)) / 2
    assert q.bump_width == pytest.approx(width, abs=1e-6)
    assert q.u_at_0_1 == 0.0


def test_zero_trace():
    q = qoi_from_trace(Y, np.zeros_like(Y))
    assert all(v == 0.0 for v in q.as_dict().values())


def test_reference_record():
    assert REFERENCE.first_max == pytest.approx(0.9148468)
    assert REFERENCE.u_at_0_1 == pytest.approx(0.01914778)
    assert all(v == 0 for v in REFERENCE.errors().values())
    assert tuple(REFERENCE.as_dict()) == QOI_NAMES
    assert len(QOI_NAMES) == 7


def test_superlevel_measure_hat():
    y = np.array([0.0, 0.5, 1.0])
    u = np.array([0.0, 1.0, 0.0])
    assert superlevel_measure(y, u, 0.5, 0.0, 1.0) == pytest.approx(0.5)
    assert superlevel_measure(y, u, 0.5, 0.0, 0.5) == pytest.approx(0.25)
    assert superlevel_measure(y, u, 2.0, 0.0, 1.0) == 0.0


def test_outlet_trace_sorted():
    m = generate_unit_square(3)
    y, tr = outlet_trace(m.points[:, 1], m)
    assert len(y) == 9 and np.all(np.diff(y) > 0)
    np.testing.assert_array_equal(y, tr)


def test_extract_from_interpolant():
    bench = rotating_profile_problem()
    m = bench.mesh(8)
    u = inlet_profile(m.points[:, 1])
    q = extract_outlet_qoi(u, m)
    assert q.bump_height == pytest.approx(0.5, abs=1e-3)
    assert q.min_val == pytest.approx(0.25, abs=1e-9)


def test_within_bounds():
    assert within_bounds([0.0, 1.0])
    assert within_bounds([-1e-9, 1 + 1e-9])
    assert not within_bounds([-1e-6, 0.5])


def test_upwind_error_decreases():
    e4 = run_single("upwind", 4).qoi.errors()["first_max"]
    e7 = run_single("upwind", 7).qoi.errors()["first_max"]
    assert e7 < e4


def test_failing_run_recorded():
    r = run_single("artdiff", 3)
    assert r.qoi is None and not r.dmp_pass
    assert r.error.startswith("MeshConditionError")


def test_benchmark_csv():
    text, results = run_benchmark(["upwind", "artdiff"], [2, 3])
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    up = [r for r in rows[1:] if r[0] == "upwind"]
    assert len(up) == 2 * 7
    assert {r[3] for r in up} == set(QOI_NAMES)
    err = [r for r in rows[1:] if r[0] == "artdiff"]
    assert len(err) == 2 and all(r[3] == "error" for r in err)
    assert [(r.method, r.level) for r in results] == \
        [("upwind", 2), ("upwind", 3), ("artdiff", 2), ("artdiff", 3)]


def test_benchmark_empty_and_unknown(tmp_path):
    p = tmp_path / "out.csv"
    text, results = run_benchmark([], [1, 2], out=p)
    assert text == ",".join(CSV_HEADER) + "\n"
    assert p.read_text() == text and results == []
    with pytest.raises(KeyError):
        run_benchmark(["nope"], [1])


def test_benchmark_parallel_order():
    a, _ = run_benchmark(["upwind", "xz"], [2, 3])
    b, _ = run_benchmark(["upwind", "xz"], [2, 3], workers=2)
    strip = lambda t: [r[:-1] for r in csv.reader(io.StringIO(t))]
    assert strip(a) == strip(b)


def test_qoi_errors_absolute():
    q = QoIRecord(1, 0, 0, 0, 0, 0, 0)
    e = q.errors()
    assert e["first_max"] == pytest.approx(1 - REFERENCE.first_max)
    assert e["min_val"] == pytest.approx(REFERENCE.min_val)
