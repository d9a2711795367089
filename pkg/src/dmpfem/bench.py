"""
Rotating-profile benchmark: problem definition, outlet quantities of
interest and the method/level sweep.

A piecewise-linear and quadratic inlet profile on ``y = 0`` is carried by
``b = (-y, x)`` through a quarter turn and read off on the outlet ``x = 0``.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, fields

import numpy as np

from .assemble import ROTATING, ZERO, Field, ProblemSpec
from .mesh import Mesh, generate_unit_square
from .steady import SCHEMES, SolverConfig, solve

XI = 1e-3
BOUND_TOL = 1e-8

# extremum search windows on the outlet (our convention)
FIRST_MAX_WINDOW = (0.25, 0.45)
MIN_WINDOW = (0.45, 0.55)
SECOND_MAX_WINDOW = (0.55, 0.70)
BUMP_START = 0.70
WIDTH_LEVEL = 0.1


def inlet_profile(x):
    """Inlet data ``u(x, 0)``; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    conds = [
        (x >= 0.375 - XI) & (x < 0.375),
        (x >= 0.375) & (x < 0.5),
        (x >= 0.5) & (x < 0.625),
        (x >= 0.625) & (x < 0.625 + XI),
        (x >= 0.75) & (x <= 1.0),
    ]
    funcs = [
        lambda s: (s - 0.375) / XI + 1.0,
        lambda s: -0.75 * (s - 0.5) / 0.125 + 0.25,
        lambda s: 0.25 * (s - 0.625) / 0.125 + 0.5,
        lambda s: -0.5 * (s - 0.625) / XI + 0.5,
        lambda s: 32.0 * (s - 0.75) * (1.0 - s),
        0.0,
    ]
    out = np.piecewise(x, conds, funcs)
    return float(out) if out.ndim == 0 else out


def _boundary_data(x, y, t):
    # inlet profile on y = 0, zero on x = 1 (the profile vanishes there too)
    return np.where(np.abs(y) < 1e-12, inlet_profile(np.clip(x, 0, 1)), 0.0)


BENCH_BC = {"bottom": "d", "right": "d", "left": "n", "top": "n"}


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    problem: ProblemSpec
    bc: dict

    def mesh(self, level: int) -> Mesh:
        return generate_unit_square(level, self.bc)

    def qoi(self, u, mesh) -> "QoIRecord":
        return extract_outlet_qoi(u, mesh)


def rotating_profile_problem(epsilon: float = 1e-5) -> BenchmarkProblem:
    prob = ProblemSpec(epsilon=epsilon, sigma=0.0, b=ROTATING, f=ZERO,
                       g=Field("inlet-profile", _boundary_data),
                       bc=dict(BENCH_BC), name="rotating-profile")
    return BenchmarkProblem("rotating-profile", prob, dict(BENCH_BC))


BENCHMARKS = {"rotating-profile": rotating_profile_problem}


# ----------------------------------------------------------------------
# quantities of interest

@dataclass(frozen=True)
class QoIRecord:
    first_max: float
    min_val: float
    second_max: float
    left_profile_width: float
    bump_height: float
    bump_width: float
    u_at_0_1: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def errors(self, ref: "QoIRecord | None" = None) -> dict:
        ref = REFERENCE if ref is None else ref
        return {k: abs(v - getattr(ref, k)) for k, v in self.as_dict().items()}


REFERENCE = QoIRecord(
    first_max=9.148468e-01,
    min_val=2.642484e-01,
    second_max=4.699239e-01,
    left_profile_width=2.628492e-01,
    bump_height=4.989947e-01,
    bump_width=2.367020e-01,
    u_at_0_1=1.914778e-02,
)

QOI_NAMES = tuple(f.name for f in fields(QoIRecord))


def outlet_trace(u, mesh: Mesh, tol: float = 1e-12):
    """Nodal values on ``x = 0`` sorted by ``y``."""
    sel = np.flatnonzero(np.abs(mesh.points[:, 0]) < tol)
    if sel.size == 0:
        raise ValueError("mesh has no nodes on the outlet x = 0")
    y = mesh.points[sel, 1]
    order = np.argsort(y, kind="stable")
    return y[order], np.asarray(u, dtype=float)[sel[order]]


def _window_extremum(y, u, lo, hi, fn, open_lo=False):
    m = (y > lo if open_lo else y >= lo) & (y <= hi)
    return float(fn(u[m])) if m.any() else float("nan")


def _crossings(y, u, level):
    """Points where the piecewise-linear trace crosses ``level``."""
    s = u - level
    out = []
    for k in range(len(y) - 1):
        a, b = s[k], s[k + 1]
        if (a < 0) != (b < 0):
            out.append(y[k] + (y[k + 1] - y[k]) * a / (a - b))
    return np.array(out)


def superlevel_measure(y, u, level, lo, hi) -> float:
    """Length of ``{s in [lo, hi] : u(s) >= level}`` for the linear
    interpolant of ``(y, u)``."""
    grid = np.unique(np.concatenate([y[(y >= lo) & (y <= hi)],
                                     _crossings(y, u, level), [lo, hi]]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    vals = np.interp(grid, y, u)
    mids = np.interp(0.5 * (grid[1:] + grid[:-1]), y, u)
    # a sub-interval between consecutive break points is either fully
    # above or fully below the level
    above = (mids >= level) | ((vals[1:] >= level) & (vals[:-1] >= level))
    return float(np.sum(np.diff(grid)[above]))


def extract_outlet_qoi(u, mesh: Mesh) -> QoIRecord:
    return qoi_from_trace(*outlet_trace(u, mesh))


def qoi_from_trace(y, tr) -> QoIRecord:
    """Quantities of interest of the outlet trace ``tr`` sampled at the
    increasing coordinates ``y``."""
    y, tr = np.asarray(y, dtype=float), np.asarray(tr, dtype=float)
    if not tr.any():
        return QoIRecord(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    bump_cross = [c for c in _crossings(y, tr, WIDTH_LEVEL) if c > BUMP_START]
    if bump_cross:
        bump_width = 1.0 - bump_cross[0]
    else:
        top = tr[y > BUMP_START]
        bump_width = 1.0 - BUMP_START if top.size and top[0] >= WIDTH_LEVEL else 0.0
    u01 = tr[-1] if abs(y[-1] - 1.0) < 1e-12 else float("nan")
    return QoIRecord(
        first_max=_window_extremum(y, tr, *FIRST_MAX_WINDOW, np.max),
        min_val=_window_extremum(y, tr, *MIN_WINDOW, np.min),
        second_max=_window_extremum(y, tr, *SECOND_MAX_WINDOW, np.max),
        left_profile_width=superlevel_measure(y, tr, WIDTH_LEVEL, 0.0, BUMP_START),
        bump_height=_window_extremum(y, tr, BUMP_START, 1.0, np.max, open_lo=True),
        bump_width=float(bump_width),
        u_at_0_1=float(u01),
    )


def within_bounds(u, lo=0.0, hi=1.0, tol=BOUND_TOL) -> bool:
    u = np.asarray(u)
    return bool(u.min() >= lo - tol and u.max() <= hi + tol)


# ----------------------------------------------------------------------
# sweep

CSV_HEADER = ("method", "level", "n_dofs", "qoi", "value", "abs_error",
              "dmp_pass", "iters", "seconds")


@dataclass
class RunResult:
    method: str
    level: int
    n_dofs: int
    qoi: QoIRecord | None
    dmp_pass: bool
    iterations: int
    seconds: float
    error: str = ""
    solution: np.ndarray | None = None
    mesh: Mesh | None = None


def run_single(method: str, level: int, cfg: SolverConfig | None = None,
               bench: BenchmarkProblem | None = None, **params) -> RunResult:
    bench = bench or rotating_profile_problem()
    mesh = bench.mesh(level)
    t0 = time.perf_counter()
    try:
        rep = solve(method, bench.problem, mesh, cfg, **params)
    except Exception as exc:   # recorded, the sweep goes on
        return RunResult(method, level, mesh.n_nodes, None, False, 0,
                         time.perf_counter() - t0, f"{type(exc).__name__}: {exc}",
                         mesh=mesh)
    u = rep.solution
    return RunResult(method, level, mesh.n_nodes, bench.qoi(u, mesh),
                     within_bounds(u), rep.iterations,
                     time.perf_counter() - t0, "" if rep.converged else "not converged",
                     solution=u, mesh=mesh)


def result_rows(r: RunResult):
    if r.qoi is None:
        yield (r.method, r.level, r.n_dofs, "error", "nan", "nan", False,
               r.iterations, f"{r.seconds:.3f}")
        return
    errs = r.qoi.errors()
    for name, val in r.qoi.as_dict().items():
        yield (r.method, r.level, r.n_dofs, name, f"{val:.9e}",
               f"{errs[name]:.9e}", r.dmp_pass, r.iterations, f"{r.seconds:.3f}")


def run_benchmark(methods, levels, cfg: SolverConfig | None = None, out=None,
                  params: dict | None = None, workers: int = 1):
    """Solve every (method, level) pair and write the CSV report.

    Parameters
    ----------
    methods : sequence of str
        Registered scheme names.
    levels : iterable of int
    cfg : SolverConfig, optional
    out : path or text stream, optional
        Destination of the CSV; a string with the CSV text is returned
        either way.
    params : dict, optional
        Per-method keyword parameters, ``{method: {name: value}}``.
    workers : int
        Process pool size; rows are written in (method, level) order
        regardless.

    Returns
    -------
    (csv_text, results)
    """
    params = params or {}
    for m in methods:
        if m not in SCHEMES:
            raise KeyError(f"unknown method {m!r}")
    jobs = [(m, lv) for m in methods for lv in levels]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(run_single, m, lv, cfg, None, **params.get(m, {}))
                    for m, lv in jobs]
            results = [f.result() for f in futs]
    else:
        results = [run_single(m, lv, cfg, None, **params.get(m, {}))
                   for m, lv in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerows(result_rows(r))
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w", newline="") as fh:
                fh.write(text)
    return text, results
