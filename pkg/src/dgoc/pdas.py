"""Primal-dual active set method for the bound-constrained reduced problem.

After eliminating the control, the discrete problem is the quadratic
program

    min  1/2 y' B y - y' d     subject to  y <= psi  (componentwise),

with B = beta A' M^-1 A + M symmetric positive definite.  The method
iterates on the guess of the active (touching) index set: with

    A_k = { j : lambda_k[j] + c (y_k[j] - psi[j]) > 0 }

(ties inactive), the next iterate solves the equality-constrained system
y = psi on A_k, lambda = 0 off A_k, B y + lambda = d, and the loop stops
as soon as the active set repeats.  Hitting the iteration cap marks the
result as not converged instead of raising.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .dg_space import DGFunction
from .galerkin import sparse_lu

log = logging.getLogger(__name__)


@dataclass
class ObstacleQP:
    B: object                   # sparse SPD matrix
    ytilde: np.ndarray          # linear term d
    psi: np.ndarray             # upper bound
    mass_diag: np.ndarray = None


@dataclass
class PDASResult:
    y: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def default_penalty(qp):
    """Complementarity weight: 1e3 times the B-to-mass diagonal ratio."""
    bscale = float(np.mean(np.abs(qp.B.diagonal())))
    mscale = float(np.mean(qp.mass_diag)) if qp.mass_diag is not None else 1.0
    return 1e3 * bscale / mscale


def _solve_active(qp, active):
    """Equality-constrained solve for a fixed active set."""
    n = len(qp.ytilde)
    y = np.empty(n)
    lam = np.zeros(n)
    y[active] = qp.psi[active]
    inactive = ~active
    ni = int(inactive.sum())
    if ni:
        rhs = qp.ytilde[inactive]
        if active.any():
            rhs = rhs - qp.B[inactive][:, active] @ qp.psi[active]
        BII = qp.B[inactive][:, inactive]
        if ni <= 300:
            y[inactive] = np.linalg.solve(BII.toarray(), rhs)
        else:
            y[inactive] = sparse_lu(BII, spd=True).solve(rhs)
    if active.any():
        lam[active] = qp.ytilde[active] - (qp.B @ y)[active]
    return y, lam


def pdas_solve(qp, c=None, y0=None, lam0=None, max_iter=50):
    """Run the active-set iteration; see the module docstring.

    Defaults: y0 = min(psi, 0), lam0 = 0, c from default_penalty."""
    psi = np.asarray(qp.psi, dtype=float)
    n = len(psi)
    y = np.minimum(psi, 0.0) if y0 is None else np.asarray(y0, dtype=float).copy()
    lam = np.zeros(n) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    if c is None:
        c = default_penalty(qp)

    active = lam + c * (y - psi) > 0.0
    history = []
    converged = False
    iterations = 0
    for k in range(1, max_iter + 1):
        y, lam = _solve_active(qp, active)
        new_active = lam + c * (y - psi) > 0.0
        changed = int(np.count_nonzero(new_active ^ active))
        history.append({"iteration": k,
                        "active": int(new_active.sum()),
                        "changed": changed})
        log.info("pdas iter=%d active=%d changed=%d",
                 k, int(new_active.sum()), changed)
        iterations = k
        if changed == 0:
            converged = True
            active = new_active
            break
        active = new_active
    return PDASResult(y=y, lam=lam, active=active, iterations=iterations,
                      converged=converged, history=history)


def recover_control(y, A, M, gvec, mesh=None):
    """Back out the control from the state: u = M^-1 (A y + gvec)."""
    if isinstance(y, DGFunction):
        return DGFunction(y.mesh, M.solve(A @ y.flat() + gvec))
    u = M.solve(A @ np.asarray(y).ravel() + gvec)
    return DGFunction(mesh, u) if mesh is not None else u


def check_kkt(qp, result, n_directions=20, seed=7, tol=1e-8):
    """Verify the first-order conditions and spot-check the variational
    inequality (z - y)' (B y - d) >= 0 over random feasible z."""
    y, lam = result.y, result.lam
    resid = qp.B @ y + lam - qp.ytilde
    scale = max(1.0, float(np.abs(qp.ytilde).max()))
    rng = np.random.default_rng(seed)
    vi_values = []
    spread = 1.0 + float(np.sqrt(np.mean((qp.psi - y) ** 2)))
    grad = qp.B @ y - qp.ytilde
    for k in range(n_directions):
        if k % 2 == 0:
            z = qp.psi - np.abs(rng.standard_normal(len(y))) * spread
        else:
            z = np.minimum(y + rng.standard_normal(len(y)) * spread, qp.psi)
        vi_values.append(float(np.dot(z - y, grad)))
    report = {
        "stationarity": float(np.abs(resid).max()),
        "primal_violation": float(max(0.0, (y - qp.psi).max())),
        "dual_violation": float(max(0.0, -lam.min())),
        "complementarity": float(np.abs(lam * (qp.psi - y)).max()),
        "vi_min": float(min(vi_values)),
        "scale": scale,
    }
    report["ok"] = (report["stationarity"] <= tol * scale
                    and report["primal_violation"] <= tol * scale
                    and report["dual_violation"] <= tol * scale
                    and report["complementarity"] <= tol * scale
                    and report["vi_min"] >= -tol * scale)
    return report
