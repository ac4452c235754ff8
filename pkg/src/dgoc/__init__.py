"""Obstacle-constrained elliptic optimal control on broken P1 spaces.

The package solves distributed control problems whose state equation is
a nonsymmetric second-order operator discretized with an interior-penalty
discontinuous Galerkin method, enforces pointwise upper bounds on the
state through a primal-dual active set solver, and ships a CLI for
convergence studies against closed-form benchmark solutions.

Submodules are imported lazily so that the command-line entry point can
configure BLAS threading before numpy loads.
"""

from importlib import import_module

_EXPORTS = {
    # mesh
    "PolygonalDomain": ".mesh", "square_domain": ".mesh",
    "lshape_domain": ".mesh", "get_domain": ".mesh",
    "Triangulation": ".mesh", "triangulate_uniform": ".mesh",
    "triangulate_graded": ".mesh", "classify_boundary_edges": ".mesh",
    "grading_profile": ".mesh",
    # dg_space
    "DGFunction": ".dg_space", "ConformingFunction": ".dg_space",
    "interpolate_nodal": ".dg_space", "l2_project": ".dg_space",
    "connect": ".dg_space", "write_field_csv": ".dg_space",
    # assembly
    "Coefficients": ".assembly", "constant_coefficients": ".assembly",
    "BlockDiagonalMass": ".assembly", "assemble_mass": ".assembly",
    "assemble_sip": ".assembly", "assemble_ar": ".assembly",
    "assemble_operator": ".assembly", "assemble_boundary_data": ".assembly",
    "load_vector": ".assembly", "apply_Lhg": ".assembly",
    "assemble_Bh": ".assembly", "assemble_rhs_qp": ".assembly",
    # galerkin
    "StateOperators": ".galerkin", "build_state_operators": ".galerkin",
    "solve_state": ".galerkin", "ritz_project": ".galerkin",
    "ReferenceField": ".galerkin", "compute_singular_obstacle": ".galerkin",
    "sparse_lu": ".galerkin",
    # pdas
    "ObstacleQP": ".pdas", "PDASResult": ".pdas", "pdas_solve": ".pdas",
    "default_penalty": ".pdas", "recover_control": ".pdas",
    "check_kkt": ".pdas",
    # problems
    "ProblemSpec": ".problems", "ExactState": ".problems",
    "example_square": ".problems", "example_lshape": ".problems",
    "get_problem": ".problems", "apply_L": ".problems",
    "apply_LtL": ".problems",
    "manufactured_derivatives_check": ".problems",
    # metrics
    "error_l2": ".metrics", "error_energy": ".metrics",
    "error_linf": ".metrics", "energy_norm": ".metrics",
    "norm_h": ".metrics", "observed_orders": ".metrics",
    # cli
    "StudyConfig": ".cli", "solve_level": ".cli",
    "run_convergence": ".cli", "run_single": ".cli",
    "run_selftest": ".cli", "main": ".cli",
}

__all__ = sorted(_EXPORTS)
__version__ = "0.1.0"


def __getattr__(name):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(import_module(module, __name__), name)


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
