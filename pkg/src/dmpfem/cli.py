"""
Command-line front end.

Every subcommand resolves its settings from built-in defaults, an
optional ``--config`` file and the command-line flags (flags win), echoes
the resolved settings as a ``#``-prefixed header and writes its outputs
into ``--out-dir``.

Config files hold one ``key = value`` per line; keys mirror the long
flags (``t-end`` and ``t_end`` are both accepted) and ``#`` starts a
comment.  Unknown keys are rejected.

Exit codes: 0 success, 1 configuration or I/O error, 2 solver failure,
3 failed check (``check-mesh`` and ``check-matrix`` only).
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import linalg, plotting
from .bench import (BENCHMARKS, rotating_profile_problem, run_benchmark,
                    within_bounds)
from .export import write_nodes, write_vtk
from .mesh import MeshError, generate_unit_square, quality_report, read_mesh
from .steady import PARAMETERS, SCHEMES, SolverConfig, solve
from .transient import (SCHEMES as TRANSIENT_SCHEMES, CFLError,
                        TimeSteppingConfig, audit_csv, rotating_bump_problem,
                        run_transient)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3

PROBLEMS = {
    "rotating-profile": lambda: rotating_profile_problem().problem,
    "rotating-bump": rotating_bump_problem,
}

# key -> (type, default); None means "not set"
KEYS = {
    "method": (str, None),
    "problem": (str, None),
    "level": (str, None),
    "mesh": (str, None),
    "theta": (float, 1.0),
    "tau": (float, 0.01),
    "t_end": (float, 1.0),
    "tol": (float, 1e-10),
    "max_iter": (int, None),
    "damping": (float, 1.0),
    "c0": (float, None),
    "gamma0": (float, None),
    "p": (float, None),
    "c_rho": (float, None),
    "out_dir": (str, "."),
    "audit": (str, "on"),
    "workers": (int, 1),
    "snapshot_every": (int, 0),
}
METHOD_PARAMS = ("c0", "gamma0", "p", "c_rho")


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def _norm(key: str) -> str:
    return key.strip().replace("-", "_")


def _convert(key, raw):
    typ = KEYS[key][0]
    try:
        val = typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ.__name__}")
    if key == "audit" and val not in ("on", "off"):
        raise ConfigError("audit must be 'on' or 'off'")
    return val


def read_config(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _norm(key)
        if key not in KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}; known keys: "
                              f"{', '.join(k.replace('_', '-') for k in KEYS)}")
        out[key] = _convert(key, val)
    return out


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def header(self):
        return [f"{k.replace('_', '-')} = {v}" for k, v in
                sorted(self.values.items())]


def resolve(command_defaults: dict, config_path, flags: dict) -> RunConfig:
    vals = {k: d for k, (_, d) in KEYS.items()}
    vals.update(command_defaults)
    if config_path:
        vals.update(read_config(config_path))
    for k, v in flags.items():
        if v is not None:
            vals[k] = _convert(k, v)
    return RunConfig(vals)


# ----------------------------------------------------------------------
# shared pieces

def _problem(cfg: RunConfig):
    name = cfg["problem"]
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; choose from "
                          f"{', '.join(PROBLEMS)}")
    return PROBLEMS[name]()


def _levels(spec: str):
    spec = str(spec)
    try:
        if ".." in spec:
            a, b = spec.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(s) for s in spec.split(",")]
    except ValueError:
        raise ConfigError(f"level: cannot parse {spec!r} (use 5, 3,4,5 or 3..6)")


def _mesh(cfg: RunConfig, problem):
    if cfg["mesh"]:
        try:
            return read_mesh(cfg["mesh"]), Path(cfg["mesh"]).stem
        except (OSError, MeshError) as exc:
            raise ConfigError(f"cannot read mesh: {exc}")
    lv = _levels(cfg["level"])
    if len(lv) != 1:
        raise ConfigError("this command takes a single level")
    return generate_unit_square(lv[0], problem.bc), f"L{lv[0]}"


def _method_params(cfg: RunConfig, method: str) -> dict:
    allowed = PARAMETERS[method]
    out = {}
    for k in METHOD_PARAMS:
        if cfg[k] is None:
            continue
        if k not in allowed:
            raise ConfigError(f"{method} does not take {k.replace('_', '-')}")
        out[k] = cfg[k]
    return out


def _solver_config(cfg: RunConfig) -> SolverConfig:
    kw = dict(residual_tol=cfg["tol"], damping=cfg["damping"])
    if cfg["max_iter"] is not None:
        kw["max_iterations"] = cfg["max_iter"]
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["out_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {out}: {exc}")
    return out


def _echo_header(cfg: RunConfig, extra=()):
    for line in list(cfg.header()) + list(extra):
        click.echo(f"# {line}")


def _check_method(method, registry):
    if method not in registry:
        raise ConfigError(f"unknown method {method!r}; registered methods: "
                          f"{', '.join(registry)}")


def common_options(fn):
    opts = [
        click.option("--method"), click.option("--problem"),
        click.option("--level"), click.option("--mesh"),
        click.option("--theta"), click.option("--tau"),
        click.option("--t-end", "t_end"), click.option("--tol"),
        click.option("--max-iter", "max_iter"), click.option("--damping"),
        click.option("--c0"), click.option("--gamma0"), click.option("--p"),
        click.option("--c-rho", "c_rho"), click.option("--out-dir", "out_dir"),
        click.option("--audit", type=click.Choice(["on", "off"])),
        click.option("--workers"), click.option("--snapshot-every",
                                                "snapshot_every"),
        click.option("--config", "config_path",
                     type=click.Path(dir_okay=False),
                     help="key = value file; flags override it"),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


# ----------------------------------------------------------------------
# commands

@click.group()
def cli():
    """Maximum-principle-preserving finite element solvers."""


@cli.command("solve")
@common_options
def cmd_solve(config_path, **flags):
    """Solve a steady problem and write nodes, VTK and a report."""
    cfg = resolve({"method": "upwind", "problem": "rotating-profile",
                   "level": "4"}, config_path, flags)
    method = cfg["method"]
    _check_method(method, SCHEMES)
    params = _method_params(cfg, method)
    problem = _problem(cfg)
    mesh, where = _mesh(cfg, problem)
    scfg = _solver_config(cfg)
    out = _out_dir(cfg)
    header = cfg.header() + [f"mesh: {where}", f"dofs: {mesh.n_nodes}"]
    try:
        rep = solve(method, problem, mesh, scfg, **params)
    except Exception as exc:
        click.echo(f"solver failed: {type(exc).__name__}: {exc}", err=True)
        return EXIT_SOLVER
    u = rep.solution
    stem = out / f"{method}_{where}"
    write_nodes(stem.with_suffix(".nodes"), mesh, u, header)
    write_vtk(stem.with_suffix(".vtk"), mesh, {"u": u}, title=method)
    lines = [f"# {h}" for h in header]
    lines += [f"converged: {rep.converged}", f"iterations: {rep.iterations}",
              f"seconds: {rep.seconds:.3f}", f"min: {u.min():.16e}",
              f"max: {u.max():.16e}"]
    if cfg["audit"] == "on":
        lines += [c.report() for c in rep.certificates]
    if cfg["problem"] in BENCHMARKS:
        bench = BENCHMARKS[cfg["problem"]]()
        lines.append(f"within_bounds: {within_bounds(u)}")
        q, e = bench.qoi(u, mesh).as_dict(), bench.qoi(u, mesh).errors()
        lines += [f"qoi {k}: {v:.9e} (abs error {e[k]:.3e})"
                  for k, v in q.items()]
    text = "\n".join(lines) + "\n"
    stem.with_suffix(".report.txt").write_text(text)
    click.echo(text, nl=False)
    return EXIT_OK if rep.converged else EXIT_SOLVER


@cli.command("check-mesh")
@common_options
def cmd_check_mesh(config_path, **flags):
    """Mesh-quality predicates; exit 3 unless the XZ criterion holds on a
    connected mesh."""
    cfg = resolve({"problem": "rotating-profile", "level": "4"},
                  config_path, flags)
    mesh, where = _mesh(cfg, _problem(cfg))
    _echo_header(cfg, [f"mesh: {where}", f"dofs: {mesh.n_nodes}"])
    rep = quality_report(mesh)
    click.echo(str(rep))
    ok = rep.xz_satisfied and rep.connected
    click.echo(f"passed: {str(ok).lower()}")
    return EXIT_OK if ok else EXIT_AUDIT


@cli.command("check-matrix")
@click.argument("matrix", required=False, type=click.Path(dir_okay=False))
@click.option("--n-free", type=int, default=None,
              help="rows above the Dirichlet block (default: all rows)")
@common_options
def cmd_check_matrix(matrix, n_free, config_path, **flags):
    """DMP certificates of a MatrixMarket file or of an assembled system.

    Without MATRIX the system of --method on --problem/--level is
    assembled (nonlinear methods: the matrix of the final iterate).
    """
    cfg = resolve({"method": "upwind", "problem": "rotating-profile",
                   "level": "4"}, config_path, flags)
    if matrix:
        try:
            A = linalg.read_matrix(matrix)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read matrix: {exc}")
        M = A.shape[0] if n_free is None else n_free
        where = f"matrix file {matrix}"
    else:
        method = cfg["method"]
        _check_method(method, SCHEMES)
        problem = _problem(cfg)
        mesh, where = _mesh(cfg, problem)
        try:
            rep = solve(method, problem, mesh, _solver_config(cfg),
                        **_method_params(cfg, method))
        except Exception as exc:
            click.echo(f"solver failed: {type(exc).__name__}: {exc}", err=True)
            return EXIT_SOLVER
        A, M = rep.system.matrix, rep.system.n_free
    _echo_header(cfg, [where, f"rows: {A.shape[0]}", f"n_free: {M}"])
    certs = [linalg.check_nonnegative_type(A, M)]
    if A.shape[0] <= linalg.DENSE_CAP:
        certs.append(linalg.check_m_matrix(A))
    else:
        click.echo(f"note: {A.shape[0]} rows exceed the dense cap "
                   f"{linalg.DENSE_CAP}; M-matrix check skipped")
    click.echo(f"zero_row_sums: {linalg.zero_row_sums(A, M)}")
    for c in certs:
        click.echo(c.report())
    return EXIT_OK if all(c.passed for c in certs) else EXIT_AUDIT


@cli.command("transient")
@common_options
def cmd_transient(config_path, **flags):
    """Theta-scheme / FEM-FCT time stepping with per-step bound audits."""
    cfg = resolve({"method": "fct-nonlinear", "problem": "rotating-bump",
                   "level": "5"}, config_path, flags)
    _check_method(cfg["method"], TRANSIENT_SCHEMES)
    problem = _problem(cfg)
    mesh, where = _mesh(cfg, problem)
    kw = dict(theta=cfg["theta"], tau=cfg["tau"], t_end=cfg["t_end"],
              scheme=cfg["method"], inner_tol=cfg["tol"],
              damping=cfg["damping"], audit=cfg["audit"] == "on")
    if cfg["max_iter"] is not None:
        kw["inner_max_iter"] = cfg["max_iter"]
    try:
        tcfg = TimeSteppingConfig(**kw)
        n_steps = tcfg.n_steps
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = _out_dir(cfg)
    header = cfg.header() + [f"mesh: {where}", f"dofs: {mesh.n_nodes}",
                             f"steps: {n_steps}"]
    for line in header:
        click.echo(f"# {line}")
    try:
        res = run_transient(problem, mesh, tcfg,
                            snapshot_every=cfg["snapshot_every"])
    except CFLError as exc:
        raise ConfigError(str(exc))
    except Exception as exc:
        click.echo(f"solver failed: {type(exc).__name__}: {exc}", err=True)
        return EXIT_SOLVER
    stem = f"{cfg['method']}"
    for k, t, u in res.snapshots:
        write_nodes(out / f"{stem}_{k:06d}.nodes", mesh, u,
                    header + [f"step {k} t {t:.12g}"])
    write_vtk(out / f"{stem}_final.vtk", mesh, {"u": res.u}, title=stem)
    audit_csv(res.audits, out / f"{stem}_audit.csv")
    plotting.plot_solution(mesh, res.u, out / f"{stem}_final.png",
                           f"{stem}, t = {res.state.t:.4g}")
    if res.audits:
        plotting.plot_audit(res.audits, out / f"{stem}_audit.png")
    status = {s: sum(a.status == s for a in res.audits)
              for s in ("pass", "fail", "hypotheses unmet")}
    click.echo(f"steps: {len(res.audits)}  audits: {status}")
    click.echo(f"final min {res.u.min():.6e} max {res.u.max():.6e}")
    return EXIT_OK


@cli.command("bench")
@common_options
def cmd_bench(config_path, **flags):
    """Benchmark sweep: CSV of outlet quantities plus error and outlet
    figures.  --method takes a comma list, --level a list or a..b range."""
    cfg = resolve({"method": "upwind,afc-kuzmin", "problem": "rotating-profile",
                   "level": "3..6"}, config_path, flags)
    methods = [m.strip() for m in cfg["method"].split(",") if m.strip()]
    for m in methods:
        _check_method(m, SCHEMES)
    if cfg["problem"] not in BENCHMARKS:
        raise ConfigError(f"bench needs a benchmark problem: "
                          f"{', '.join(BENCHMARKS)}")
    levels = _levels(cfg["level"])
    params = {m: _method_params_lenient(cfg, m) for m in methods}
    scfg = _solver_config(cfg)
    out = _out_dir(cfg)
    _echo_header(cfg)
    text, results = run_benchmark(methods, levels, scfg, out / "bench.csv",
                                  params, workers=cfg["workers"])
    (out / "bench_config.txt").write_text(
        "".join(f"# {h}\n" for h in cfg.header()))
    plotting.plot_errors(results, out / "bench_errors.png")
    finest = {}
    for r in results:
        if r.solution is not None:
            finest[r.method] = r
    plotting.plot_outlet({f"{m} L{r.level}": (r.solution, r.mesh)
                          for m, r in finest.items()},
                         out / "bench_outlet.png")
    for r in results:
        status = r.error or "ok"
        click.echo(f"{r.method:16s} level {r.level} dofs {r.n_dofs:7d} "
                   f"bounds {'pass' if r.dmp_pass else 'FAIL'} "
                   f"iters {r.iterations:5d} {r.seconds:8.2f}s {status}")
    return EXIT_OK


def _method_params_lenient(cfg, method):
    """Parameters of a sweep: each method takes the ones it accepts."""
    return {k: cfg[k] for k in METHOD_PARAMS
            if cfg[k] is not None and k in PARAMETERS[method]}


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="dmpfem", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.Abort:
        return EXIT_CONFIG
    return int(rv or 0)


if __name__ == "__main__":
    sys.exit(main())
