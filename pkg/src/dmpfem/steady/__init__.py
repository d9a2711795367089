"""Steady discretizations and the scheme registry.

``SCHEMES`` maps the public scheme identifiers to callables
``fn(problem, mesh, **params) -> SolveReport``.
"""
from __future__ import annotations

from .common import (FixedPointStop, MeshConditionError, NonConvergenceError,
                     SchemeError, SolveReport, SolverConfig, audit,
                     fixed_point_driver, m_matrix_certificate)
from .limiters import (LimiterState, afc_d_matrix, bjk_gamma, limiter_bbk,
                       limiter_bjk, limiter_kuzmin, smoothness_indicator)
from .linear import (artdiff_c0_floor, artificial_diffusion,
                     assemble_edge_averaged, assemble_upwind_convection,
                     bernoulli, edge_averaged_xz, galerkin,
                     galerkin_dmp_condition, tabata_upwind, upwind_cells,
                     usfem)
from .nonlinear import (afc_solve, burman_ern, factorized_fixed_point,
                        lumped_galerkin_matrix, mh_constants, mizukami_hughes,
                        monotone_lps, picard_fixed_point)


def _afc(limiter):
    def run(problem, mesh, cfg=None, **kw):
        return afc_solve(problem, mesh, limiter, cfg, **kw)
    run.__name__ = f"afc_{limiter.replace('-', '_')}"
    return run


SCHEMES = {
    "galerkin": galerkin,
    "usfem": usfem,
    "artdiff": artificial_diffusion,
    "upwind": tabata_upwind,
    "xz": edge_averaged_xz,
    "mh": mizukami_hughes,
    "be": burman_ern,
    "afc-kuzmin": _afc("kuzmin"),
    "afc-kuzmin-mod": _afc("kuzmin-modified"),
    "afc-bjk": _afc("bjk"),
    "afc-bbk": _afc("bbk"),
    "lps": monotone_lps,
}

NONLINEAR = {"mh", "be", "afc-kuzmin", "afc-kuzmin-mod", "afc-bjk",
             "afc-bbk", "lps"}

# scheme parameters accepted by each identifier (besides cfg)
PARAMETERS = {
    "galerkin": (), "usfem": (), "upwind": (), "xz": (),
    "artdiff": ("c0", "delta"),
    "mh": (), "be": ("c_rho",),
    "afc-kuzmin": ("iteration",), "afc-kuzmin-mod": ("iteration",),
    "afc-bjk": ("gamma", "iteration"), "afc-bbk": ("gamma0", "p", "iteration"),
    "lps": ("c0", "gamma0", "p", "iteration"),
}


def solve(method: str, problem, mesh, cfg: SolverConfig | None = None,
          **params) -> SolveReport:
    """Run the scheme registered under ``method``."""
    try:
        fn = SCHEMES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from "
                         f"{', '.join(SCHEMES)}") from None
    bad = set(params) - set(PARAMETERS[method])
    if bad:
        raise ValueError(f"{method} does not take {sorted(bad)}")
    if method in NONLINEAR:
        return fn(problem, mesh, cfg=cfg, **params)
    return fn(problem, mesh, **params)
