"""Command-line driver: convergence studies, field exports, self test.

The driver reads a small INI-style config (sections `problem`, `mesh`,
`solver`, `output`), runs the requested benchmark over a range of mesh
levels, and writes a machine-readable CSV table, an aligned text table,
and a log-log convergence figure.  A single-level mode exports the state,
control, multiplier, and active-set fields for external plotting, and
`--selftest` runs a quick property battery.

Exit codes: 0 success, 1 self-test property failure, 2 PDAS failed to
converge at some level, 3 bad configuration.

Heavy imports happen inside functions so the `DGOC_THREADS` environment
variable can be propagated to the BLAS thread-count variables before
numpy initializes.
"""

import argparse
import configparser
import csv
import os
import sys
import time
from dataclasses import dataclass, field

CSV_COLUMNS = ["level", "dofs", "h", "e_L2", "ord_L2", "e_energy",
               "ord_energy", "e_ctrlL2", "ord_ctrlL2", "e_Linf",
               "ord_Linf", "pdas_iters", "status"]


@dataclass
class StudyConfig:
    problem: str = "square"
    levels: tuple = (1, 4)
    mu: float = 0.6
    ref_level: int = 0          # 0 = max level + 2
    sigma: float = 6.0
    max_iter: int = 50
    c: float = 0.0              # 0 = automatic
    warm_start: bool = True
    out_dir: str = "."
    figures: bool = True
    single_level: int = 0       # 0 = full study


class ConfigError(Exception):
    pass


def _parse_levels(text):
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"cannot parse level range {text!r}")
    if lo < 0 or hi < lo:
        raise ConfigError(f"bad level range {lo}..{hi}")
    return lo, hi


def load_config(path):
    """Read an INI config file into a StudyConfig."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    cfg = StudyConfig()
    try:
        if parser.has_section("problem"):
            sec = parser["problem"]
            cfg.problem = sec.get("name", cfg.problem)
            cfg.sigma = sec.getfloat("sigma", cfg.sigma)
        if parser.has_section("mesh"):
            sec = parser["mesh"]
            if "levels" in sec:
                cfg.levels = _parse_levels(sec["levels"])
            cfg.mu = sec.getfloat("mu", cfg.mu)
            cfg.ref_level = sec.getint("ref_level", cfg.ref_level)
        if parser.has_section("solver"):
            sec = parser["solver"]
            cfg.max_iter = sec.getint("max_iter", cfg.max_iter)
            cfg.c = sec.getfloat("c", cfg.c)
            cfg.warm_start = sec.getboolean("warm_start", cfg.warm_start)
        if parser.has_section("output"):
            sec = parser["output"]
            cfg.out_dir = sec.get("dir", cfg.out_dir)
            cfg.figures = sec.getboolean("figures", cfg.figures)
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}")
    return cfg


@dataclass
class LevelResult:
    level: int
    dofs: int
    h: float
    errors: dict
    iterations: int
    converged: bool
    seconds: float
    mesh: object = None
    y: object = None
    u: object = None
    lam: object = None
    active: object = None


@dataclass
class StudyReport:
    problem: str
    rows: list
    orders: dict = field(default_factory=dict)
    csv_path: str = ""
    txt_path: str = ""
    fig_path: str = ""
    converged: bool = True


def _build_mesh(spec, level):
    from .mesh import triangulate_graded, triangulate_uniform

    if spec.mesh_mode == "graded":
        return triangulate_graded(spec.domain, level, spec.mu)
    return triangulate_uniform(spec.domain, level)


def _warm_seed(mesh, psi_h, prev):
    """Initial PDAS guess interpolated from a coarser solution.

    Dofs whose prolongated coarse state comes within a quarter of h^2 of
    the obstacle are seeded active (y pinned to the obstacle, unit
    multiplier); elsewhere the coarse state is clamped to feasibility.
    The h^2 scale matches the interpolation gap of a quadratic obstacle,
    so the band covers the contact zone without flooding its exterior."""
    import numpy as np

    prev_mesh, prev_y, _ = prev
    elems, bary = prev_mesh.locate(mesh.dof_points())
    yp = prev_y.eval_at(elems, bary)
    seed = yp >= psi_h - 0.25 * float(mesh.h_elem.max()) ** 2
    y0 = np.minimum(yp, psi_h)
    y0[seed] = psi_h[seed]
    lam0 = np.where(seed, 1.0, 0.0)
    return y0, lam0


def _band_predict(qp, y0, lam0, mesh, c, max_iter):
    """Refine a warm-start guess by solving the problem restricted to a
    band of dofs near the seeded contact region.

    Away from the contact zone the constraint is slack, so the guess only
    needs correcting where activity may change.  Dofs farther than a fixed
    multiple of the mesh width from every seeded dof stay frozen at the
    guess and enter the restricted problem as fixed data.  The band solve
    touches a small matrix and is cheap; its active set is usually already
    the converged one, so the subsequent full-size solve needs very few
    sweeps over the expensive full factorization.  The full solve is
    unchanged aside from its initial guess, so the converged result is
    identical with or without this step."""
    import numpy as np
    from scipy.spatial import cKDTree

    from .pdas import ObstacleQP, pdas_solve

    seed = lam0 > 0.0
    if not seed.any():
        return y0, lam0
    pts = mesh.dof_points()
    radius = 16.0 * float(mesh.h_elem.max())
    dist, _ = cKDTree(pts[seed]).query(pts, distance_upper_bound=radius)
    band = dist <= radius
    if band.all():
        return y0, lam0
    B = qp.B.tocsr()
    frozen = B[band][:, ~band] @ y0[~band]
    sub = ObstacleQP(B[band][:, band].tocsc(), qp.ytilde[band] - frozen,
                     qp.psi[band],
                     mass_diag=None if qp.mass_diag is None
                     else qp.mass_diag[band])
    res = pdas_solve(sub, c=c, y0=y0[band], lam0=lam0[band],
                     max_iter=max_iter)
    y0 = y0.copy()
    lam0 = np.zeros_like(lam0)
    y0[band] = np.minimum(res.y, sub.psi)
    lam0[band] = np.maximum(res.lam, 0.0)
    return y0, lam0


def solve_level(spec, level, max_iter=50, c=None, warm=None):
    """Assemble and solve one level of a constrained benchmark."""
    import numpy as np

    from .assembly import assemble_Bh, assemble_rhs_qp
    from .dg_space import DGFunction, interpolate_nodal
    from .galerkin import build_state_operators
    from .metrics import error_energy, error_l2, error_linf
    from .pdas import ObstacleQP, pdas_solve, recover_control

    t0 = time.time()
    mesh = _build_mesh(spec, level)
    ops = build_state_operators(mesh, spec.coeffs, spec.sigma)
    gvec = ops.boundary_vector(spec.g)
    B = assemble_Bh(ops.M, ops.A, spec.beta)
    ytd = assemble_rhs_qp(ops.M, ops.A, gvec, spec.y_d, spec.beta, mesh)
    psi_h = interpolate_nodal(spec.psi, mesh).flat()
    qp = ObstacleQP(B, ytd, psi_h, mass_diag=ops.M.diagonal())

    y0 = lam0 = None
    if warm is not None:
        y0, lam0 = _warm_seed(mesh, psi_h, warm)
        if mesh.num_dofs >= 50_000:
            y0, lam0 = _band_predict(qp, y0, lam0, mesh, c, max_iter)
    res = pdas_solve(qp, c=c, y0=y0, lam0=lam0, max_iter=max_iter)

    y = DGFunction(mesh, res.y)
    u = recover_control(res.y, ops.A, ops.M, gvec, mesh=mesh)
    errors = {
        "l2": error_l2(y, spec.exact_value),
        "energy": error_energy(y, spec.exact_value, spec.exact_grad,
                               spec.sigma),
        "ctrl": error_l2(u, spec.exact_control),
        "linf": error_linf(y, spec.exact_value),
    }
    return LevelResult(
        level=level, dofs=mesh.num_dofs, h=float(mesh.h_elem.max()),
        errors=errors, iterations=res.iterations, converged=res.converged,
        seconds=time.time() - t0, mesh=mesh, y=y, u=u,
        lam=res.lam, active=res.active)


def _format_cell(x, fmt):
    return fmt % x if x == x else ""       # NaN renders empty


def _write_tables(report, out_dir):
    import numpy as np

    rows = report.rows
    orders = {k: np.concatenate([[np.nan], report.orders[k]])
              for k in ("l2", "energy", "ctrl", "linf")}
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report.problem)

    report.csv_path = base + "_table.csv"
    with open(report.csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i, r in enumerate(rows):
            writer.writerow([
                r.level, r.dofs, _format_cell(r.h, "%.6e"),
                _format_cell(r.errors["l2"], "%.6e"),
                _format_cell(orders["l2"][i], "%.2f"),
                _format_cell(r.errors["energy"], "%.6e"),
                _format_cell(orders["energy"][i], "%.2f"),
                _format_cell(r.errors["ctrl"], "%.6e"),
                _format_cell(orders["ctrl"][i], "%.2f"),
                _format_cell(r.errors["linf"], "%.6e"),
                _format_cell(orders["linf"][i], "%.2f"),
                r.iterations,
                "ok" if r.converged else "max_iter",
            ])

    header = ["lvl", "dofs", "h", "L2 err", "ord", "energy", "ord",
              "ctrl L2", "ord", "Linf", "ord", "it", "status"]
    widths = [3, 7, 9, 12, 5, 12, 5, 12, 5, 12, 5, 3, 8]
    lines = ["  ".join(f"{t:>{w}}" for t, w in zip(header, widths))]
    for i, r in enumerate(rows):
        cells = [
            str(r.level), str(r.dofs), f"{r.h:.3e}",
            f"{r.errors['l2']:.6e}",
            _format_cell(orders["l2"][i], "%.2f") or "--",
            f"{r.errors['energy']:.6e}",
            _format_cell(orders["energy"][i], "%.2f") or "--",
            f"{r.errors['ctrl']:.6e}",
            _format_cell(orders["ctrl"][i], "%.2f") or "--",
            f"{r.errors['linf']:.6e}",
            _format_cell(orders["linf"][i], "%.2f") or "--",
            str(r.iterations),
            "ok" if r.converged else "max_iter",
        ]
        lines.append("  ".join(f"{t:>{w}}" for t, w in zip(cells, widths)))
    report.txt_path = base + "_table.txt"
    with open(report.txt_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_figure(report, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = report.rows
    h = [r.h for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    series = [("l2", "o-", "state L2"), ("energy", "s-", "state energy"),
              ("ctrl", "d-", "control L2"), ("linf", "^-", "state max")]
    for key, style, label in series:
        ax.loglog(h, [r.errors[key] for r in rows], style, label=label)
    href = [h[0], h[-1]]
    anchor = rows[0].errors["energy"]
    for slope, ls in ((1.0, ":"), (2.0, "--")):
        ref = [anchor * (x / h[0]) ** slope for x in href]
        ax.loglog(href, ref, "k" + ls, linewidth=0.8,
                  label=f"slope {slope:g}")
    ax.set_xlabel("mesh size h")
    ax.set_ylabel("error")
    ax.set_title(f"{report.problem}: errors vs mesh size")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    ax.invert_xaxis()
    report.fig_path = os.path.join(out_dir, report.problem + "_convergence.png")
    fig.savefig(report.fig_path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def run_convergence(cfg, log=print):
    """Solve a benchmark over a level range and emit the rate tables."""
    from .metrics import observed_orders
    from .problems import get_problem

    lo, hi = cfg.levels
    ref_level = cfg.ref_level or hi + 2
    spec = get_problem(cfg.problem, ref_level=ref_level, mu=cfg.mu)
    if cfg.sigma:
        spec.sigma = cfg.sigma

    rows = []
    warm = None
    c = cfg.c or None
    for level in range(lo, hi + 1):
        r = solve_level(spec, level, max_iter=cfg.max_iter, c=c, warm=warm)
        rows.append(r)
        log(f"[level {level}] dofs={r.dofs} h={r.h:.3e} "
            f"iters={r.iterations}{'' if r.converged else ' (max_iter!)'} "
            f"L2={r.errors['l2']:.3e} energy={r.errors['energy']:.3e} "
            f"({r.seconds:.1f}s)")
        if cfg.warm_start and r.converged:
            warm = (r.mesh, r.y, r.active)
        else:
            warm = None

    report = StudyReport(problem=cfg.problem, rows=rows)
    report.converged = all(r.converged for r in rows)
    for key in ("l2", "energy", "ctrl", "linf"):
        report.orders[key] = observed_orders([r.errors[key] for r in rows])
    _write_tables(report, cfg.out_dir)
    if cfg.figures:
        _write_figure(report, cfg.out_dir)
    return report


def _field_figure(path, mesh, values, title, active=None):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import matplotlib.tri as mtri
    import numpy as np

    pts = mesh.dof_points()
    tri = mtri.Triangulation(pts[:, 0], pts[:, 1],
                             np.arange(len(pts)).reshape(-1, 3))
    fig, ax = plt.subplots(figsize=(5.6, 5.0))
    im = ax.tripcolor(tri, values, shading="gouraud")
    fig.colorbar(im, ax=ax, shrink=0.85)
    if active is not None and active.any():
        ax.plot(pts[active, 0], pts[active, 1], "k.", markersize=1.5)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def run_single(cfg, log=print):
    """Solve one level and export mesh plus field data for plotting."""
    import numpy as np

    from .dg_space import DGFunction, write_field_csv
    from .problems import get_problem

    level = cfg.single_level
    ref_level = cfg.ref_level or level + 2
    spec = get_problem(cfg.problem, ref_level=ref_level, mu=cfg.mu)
    if cfg.sigma:
        spec.sigma = cfg.sigma
    r = solve_level(spec, level, max_iter=cfg.max_iter, c=cfg.c or None)
    log(f"[level {level}] dofs={r.dofs} iters={r.iterations}"
        f"{'' if r.converged else ' (max_iter!)'} "
        f"active={int(r.active.sum())} max|u|={np.abs(r.u.coeffs).max():.4e}")

    os.makedirs(cfg.out_dir, exist_ok=True)
    base = os.path.join(cfg.out_dir, f"{cfg.problem}_L{level}")
    paths = {"mesh": base + "_mesh.txt"}
    r.mesh.write_text(paths["mesh"], zeta=spec.coeffs.zeta_const())
    fields = {
        "state": r.y,
        "control": r.u,
        "multiplier": DGFunction(r.mesh, r.lam),
        "active": DGFunction(r.mesh, r.active.astype(float)),
    }
    for name, f in fields.items():
        paths[name] = f"{base}_{name}.csv"
        write_field_csv(paths[name], f)
    if cfg.figures:
        for name in ("state", "control"):
            paths[name + "_fig"] = f"{base}_{name}.png"
            _field_figure(paths[name + "_fig"], r.mesh,
                          fields[name].flat(), f"{name}, level {level}")
        paths["active_fig"] = f"{base}_active.png"
        _field_figure(paths["active_fig"], r.mesh, r.y.flat(),
                      f"state and active nodes, level {level}",
                      active=r.active)
    return r, paths


def run_selftest(sigma_override=None, skip_lshape=False, log=print):
    """Quick property battery; returns the number of failures.

    `sigma_override` deliberately replaces the interior penalty in the
    coercivity check (a tiny value such as 0.01 must make it fail, which
    is itself exercised by the test suite)."""
    import numpy as np

    from .assembly import (assemble_mass, assemble_operator,
                           constant_coefficients)
    from .dg_space import DGFunction, l2_project
    from .galerkin import build_state_operators, ritz_project, solve_state
    from .mesh import lshape_domain, square_domain, triangulate_uniform
    from .metrics import energy_norm, error_l2
    from .pdas import check_kkt, ObstacleQP, pdas_solve
    from .problems import example_lshape, example_square, get_problem, \
        manufactured_derivatives_check

    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  ({detail})"
        log(line)
        failures += 0 if ok else 1

    # element mass block against the closed form
    mesh1 = triangulate_uniform(square_domain(), 0)
    M = assemble_mass(mesh1)
    blk = M.to_csr()[:3, :3].toarray() / mesh1.areas[0]
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    dev = np.abs(blk - ref).max()
    report("mass block closed form", dev < 1e-14, f"dev={dev:.1e}")

    # constant-state consistency of the full discrete operator
    coeffs = constant_coefficients(zeta=(1.0, 0.5), gamma=2.0)
    mesh = triangulate_uniform(square_domain(), 2)
    y = solve_state(mesh, coeffs, 6.0, 3.0, lambda p: 6.0 * np.ones(len(p)))
    dev = np.abs(y.coeffs - 3.0).max()
    report("constant-state consistency", dev < 1e-9, f"dev={dev:.1e}")

    # coercivity of the full operator in the energy norm
    sigma = 6.0 if sigma_override is None else sigma_override
    worst = np.inf
    for domain in (square_domain(), lshape_domain()):
        m = triangulate_uniform(domain, 2)
        A = assemble_operator(m, coeffs, sigma)
        rng = np.random.default_rng(11)
        for _ in range(20):
            v = DGFunction(m, rng.standard_normal((m.num_elements, 3)))
            quotient = float(v.flat() @ (A @ v.flat())) \
                / energy_norm(v, sigma) ** 2
            worst = min(worst, quotient)
    report("operator coercivity", worst > 0.01, f"min quotient={worst:.3f}")

    # Ritz projection commutes with the discrete operator on cubics
    spec = example_square()
    mesh = triangulate_uniform(spec.domain, 2)

    def w(p):
        return p[:, 0] ** 3 - 2.0 * p[:, 0] * p[:, 1] + p[:, 1] ** 2

    def w_grad(p):
        return np.column_stack([3.0 * p[:, 0] ** 2 - 2.0 * p[:, 1],
                                2.0 * p[:, 1] - 2.0 * p[:, 0]])

    def Lw(p):
        lap = 6.0 * p[:, 0] + 2.0
        return -lap + w_grad(p) @ spec.coeffs.zeta_const() + w(p)

    ops = build_state_operators(mesh, spec.coeffs, spec.sigma)
    rw = ritz_project(mesh, spec.coeffs, spec.sigma, w, w_grad, ops=ops)
    lhs = ops.M.solve(ops.A @ rw.flat() + ops.boundary_vector(w))
    rhs = l2_project(Lw, mesh).flat()
    resid = error_l2(DGFunction(mesh, lhs - rhs), None)
    report("projection identity", resid < 1e-9, f"residual={resid:.1e}")

    # exact-solution derivative audit
    try:
        rep = manufactured_derivatives_check(spec)
        report("derivative audit", True,
               "max " + max(rep, key=rep.get) + f"={max(rep.values()):.1e}")
    except ValueError as exc:
        report("derivative audit", False, str(exc))

    # PDAS on the square benchmark: KKT residuals and c-independence
    res2 = solve_level(spec, 2)
    from .assembly import assemble_Bh, assemble_rhs_qp
    from .dg_space import interpolate_nodal
    ops = build_state_operators(res2.mesh, spec.coeffs, spec.sigma)
    gvec = ops.boundary_vector(spec.g)
    qp = ObstacleQP(assemble_Bh(ops.M, ops.A, spec.beta),
                    assemble_rhs_qp(ops.M, ops.A, gvec, spec.y_d,
                                    spec.beta, res2.mesh),
                    interpolate_nodal(spec.psi, res2.mesh).flat(),
                    mass_diag=ops.M.diagonal())
    sol_a = pdas_solve(qp, c=1.0)
    sol_b = pdas_solve(qp, c=1e3)
    kkt = check_kkt(qp, sol_a)
    ok = kkt["ok"] and sol_a.converged and sol_b.converged \
        and (sol_a.active == sol_b.active).all()
    report("pdas kkt + c-independence", bool(ok),
           f"stationarity={kkt['stationarity']:.1e}")

    # singular-obstacle reference field on the L-shape
    if skip_lshape:
        log("SKIP  lshape battery (reference field unavailable)")
    else:
        try:
            ls = example_lshape("uniform", ref_level=4)
        except Exception as exc:
            log(f"SKIP  lshape battery (reference field unavailable: {exc})")
        else:
            bmask = ls.psi_s.mesh.boundary_vertex_mask()
            dev = np.abs(ls.psi_s.values[bmask] - 1.0).max()
            report("singular field boundary values", dev < 1e-10,
                   f"dev={dev:.1e}")
            r1 = solve_level(ls, 1)
            report("lshape level-1 solve", r1.converged,
                   f"iters={r1.iterations}")

    log(f"selftest: {failures} failure(s)")
    return failures


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dgoc",
        description="Convergence studies for obstacle-constrained optimal "
                    "control with a discontinuous Galerkin discretization.")
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--levels", help="level range A..B")
    parser.add_argument("--problem",
                        help="square | lshape-uniform | lshape-graded")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--single", type=int, metavar="LEVEL",
                        help="solve one level and export fields")
    parser.add_argument("--selftest", action="store_true",
                        help="run the property battery and exit")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")
    args = parser.parse_args(argv)

    threads = os.environ.get("DGOC_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    if args.selftest:
        return 1 if run_selftest() else 0

    try:
        cfg = load_config(args.config) if args.config else StudyConfig()
        if args.levels:
            cfg.levels = _parse_levels(args.levels)
        if args.problem:
            cfg.problem = args.problem
        if args.out:
            cfg.out_dir = args.out
        if args.single is not None:
            cfg.single_level = args.single
        if args.no_figures:
            cfg.figures = False
        if cfg.problem not in ("square", "lshape-uniform", "lshape-graded"):
            raise ConfigError(f"unknown problem {cfg.problem!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    try:
        if cfg.single_level:
            r, _ = run_single(cfg)
            return 0 if r.converged else 2
        report = run_convergence(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for line in open(report.txt_path):
        print(line.rstrip())
    return 0 if report.converged else 2


if __name__ == "__main__":
    sys.exit(main())
