"""Error norms and convergence-order bookkeeping.

The broken energy norm follows the per-element form

    |||v|||^2 = sum_T [ ||grad v||_T^2
                + sum_{e in dT} (sigma/h_e) ||[v]||_e^2
                + sum_{e in dT} (h_e/sigma) ||{n.grad v}||_e^2 ],

so interior edges are counted once per neighbor (twice in total) and
boundary edges once.  When measuring errors against a smooth function the
exact part contributes no interior jumps; on boundary edges the jump is
the trace difference and the normal-derivative average uses the supplied
gradient.
"""

import numpy as np

from . import quadrature as quad
from .assembly import _edge_trace_values, _normal_grads


def error_l2(v, exact):
    """L2 distance between a DG function and a pointwise-evaluable one
    (pass exact=None for the plain L2 norm of v)."""
    diff = v.eval_volume(quad.TRI_D6_BARY)
    if exact is not None:
        pts = quad.physical_points(quad.TRI_D6_BARY, v.mesh.tri_coords)
        diff = diff - exact(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    val = np.einsum("q,tq,t->", quad.TRI_D6_W, diff * diff, v.mesh.areas)
    return float(np.sqrt(max(val, 0.0)))


def _edge_quantities(v, exact, exact_grad):
    """Jump and normal-derivative-average mismatch at edge quad points.

    Returns (jump_sq_int, avg_sq_int) per edge: integrals of [e]^2 and
    ({n.grad e})^2 over each edge."""
    mesh = v.mesh
    t, w = quad.EDGE_G5_T, quad.EDGE_G5_W
    Bp, Bm = _edge_trace_values(mesh, t)
    gp, gm = _normal_grads(mesh)
    flat = v.flat()
    cp = flat.reshape(-1, 3)[mesh.edge_plus]               # (E, 3)
    cm = flat.reshape(-1, 3)[np.maximum(mesh.edge_minus, 0)]
    tp = np.einsum("ei,eiq->eq", cp, Bp)
    tm = np.einsum("ei,eiq->eq", cm, Bm)
    ndp = np.einsum("ei,ei->e", cp, gp)
    ndm = np.einsum("ei,ei->e", cm, gm)
    interior = ~mesh.boundary

    jump = np.where(interior[:, None], tp - tm, tp)
    avg = np.where(interior[:, None],
                   0.5 * (ndp + ndm)[:, None] * np.ones_like(tp),
                   ndp[:, None] * np.ones_like(tp))
    if exact is not None:
        epts = quad.edge_points(t, mesh.points[mesh.edge_nodes])
        bb = mesh.boundary
        if bb.any():
            ev = exact(epts[bb].reshape(-1, 2)).reshape(bb.sum(), -1)
            jump[bb] -= ev
        ge = exact_grad(epts.reshape(-1, 2)).reshape(epts.shape)
        avg = avg - np.einsum("eqd,ed->eq", ge, mesh.edge_normal)
    h = mesh.edge_length
    jump_sq = np.einsum("q,eq->e", w, jump * jump) * h
    avg_sq = np.einsum("q,eq->e", w, avg * avg) * h
    return jump_sq, avg_sq


def error_energy(v, exact, exact_grad, sigma):
    """Broken energy norm of (v - exact); pass exact=None for |||v|||."""
    mesh = v.mesh
    pts = quad.physical_points(quad.TRI_D6_BARY, mesh.tri_coords)
    gv = v.gradients()[:, None, :]                          # (T, 1, 2)
    if exact_grad is not None:
        ge = exact_grad(pts.reshape(-1, 2)).reshape(pts.shape)
        diff = gv - ge
    else:
        diff = np.broadcast_to(gv, pts.shape)
    vol = np.einsum("q,tqd,tqd,t->", quad.TRI_D6_W, diff, diff, mesh.areas)

    jump_sq, avg_sq = _edge_quantities(v, exact, exact_grad)
    h = mesh.edge_length
    mult = np.where(mesh.boundary, 1.0, 2.0)
    edges = np.sum(mult * ((sigma / h) * jump_sq + (h / sigma) * avg_sq))
    return float(np.sqrt(max(vol + edges, 0.0)))


def energy_norm(v, sigma):
    """Broken energy norm of a DG function."""
    return error_energy(v, None, None, sigma)


_LINF_BARY = np.array([
    [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
    [0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5],
    [1 / 3, 1 / 3, 1 / 3],
])


def error_linf(v, exact):
    """Max nodal-type error, sampled at corners, edge midpoints and the
    centroid of every element."""
    pts = quad.physical_points(_LINF_BARY, v.mesh.tri_coords)
    ev = exact(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    vals = v.eval_volume(_LINF_BARY)
    return float(np.abs(vals - ev).max())


def norm_h(vec, M, A, beta):
    """Mesh-dependent solution norm sqrt(|v|^2 + beta |L_h v|^2).

    Computed as sqrt(v' M v + beta (Av)' M^-1 (Av)): the first term is
    the L2 norm and the second applies the discrete operator M^-1 A,
    which measures second-derivative-scale content of v.  Exposed as a
    diagnostic; convergence tables report ``error_energy`` instead."""
    vec = np.asarray(vec, dtype=float).ravel()
    av = A @ vec
    val = np.dot(vec, M.matvec(vec)) + beta * np.dot(av, M.solve(av))
    return float(np.sqrt(max(val, 0.0)))


def observed_orders(errors):
    """log2 ratios of consecutive errors; nan where not defined."""
    errors = np.asarray(errors, dtype=float)
    out = np.full(len(errors) - 1, np.nan)
    for i in range(1, len(errors)):
        if errors[i - 1] > 0 and errors[i] > 0:
            out[i - 1] = np.log2(errors[i - 1] / errors[i])
    return out
