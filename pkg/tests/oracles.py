"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written from scratch against the method
definitions: nodal bases come from per-element Vandermonde solves, triangle
quadrature from a Duffy-transformed tensor Gauss rule, and the quadratic
program solver from exhaustive enumeration of active sets.  None of the
package's assembly or quadrature helpers are reused.
"""

import itertools

import numpy as np


def duffy_rule(n=8):
    """Tensor Gauss rule mapped to the reference triangle {u+v<=1, u,v>=0}."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    u = U.ravel()
    v = (V * (1.0 - U)).ravel()
    wt = (WU * WV * (1.0 - U)).ravel()
    return np.column_stack([u, v]), wt


def gauss_edge(n=8):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def hat_coefficients(tri_pts):
    """Affine coefficients (a, bx, by) of the three nodal hats on a triangle."""
    V = np.column_stack([np.ones(3), tri_pts])
    return np.linalg.inv(V)          # column l = coefficients of hat l


def hat_eval(coeff, pts):
    """Evaluate all three hats at physical points, shape (N, 3)."""
    return np.column_stack([np.ones(len(pts)), pts]) @ coeff


def dense_assemble(mesh, zeta, gamma, sigma, g=None):
    """Dense SIP + advection-reaction matrices and the boundary-data vector.

    zeta and gamma are callables on (N, 2) point arrays; g is a callable
    (or None to skip the vector).  Returns (sip, ar, gvec).
    """
    n = 3 * len(mesh.triangles)
    sip = np.zeros((n, n))
    ar = np.zeros((n, n))
    gvec = np.zeros(n)
    ref_pts, ref_w = duffy_rule()
    et, ew = gauss_edge()

    coeffs = [hat_coefficients(mesh.points[tri]) for tri in mesh.triangles]

    # volume terms
    for t, tri in enumerate(mesh.triangles):
        pts_t = mesh.points[tri]
        phys = (pts_t[0]
                + np.outer(ref_pts[:, 0], pts_t[1] - pts_t[0])
                + np.outer(ref_pts[:, 1], pts_t[2] - pts_t[0]))
        jac = 2.0 * mesh.areas[t]
        vals = hat_eval(coeffs[t], phys)          # (Q, 3)
        grads = coeffs[t][1:, :]                  # (2, 3) constant
        zv = zeta(phys)                           # (Q, 2)
        gv = gamma(phys)                          # (Q,)
        for i in range(3):
            for j in range(3):
                sip[3 * t + i, 3 * t + j] += jac * np.sum(
                    ref_w * (grads[:, j] @ grads[:, i]))
                adv = (zv @ grads[:, j]) * vals[:, i]
                ar[3 * t + i, 3 * t + j] += jac * np.sum(
                    ref_w * (adv + gv * vals[:, j] * vals[:, i]))

    # edge terms
    for e in range(len(mesh.edge_nodes)):
        a, b = mesh.points[mesh.edge_nodes[e]]
        pts_e = a + np.outer(et, b - a)
        he = mesh.edge_length[e]
        nrm = mesh.edge_normal[e]
        tp = mesh.edge_plus[e]
        tm = mesh.edge_minus[e]
        interior = tm >= 0

        sides = [(tp, 1.0)] + ([(tm, -1.0)] if interior else [])
        navg = 1.0 / len(sides)
        zmid = zeta(0.5 * (a + b)[None, :])[0]
        inflow = float(zmid @ nrm) < 0.0
        use_ar = interior or inflow

        # jump/average of every local dof on this edge
        for ti, si in sides:            # test function side
            vi = hat_eval(coeffs[ti], pts_e)
            gi = coeffs[ti][1:, :]
            for tj, sj in sides:        # trial function side
                vj = hat_eval(coeffs[tj], pts_e)
                gj = coeffs[tj][1:, :]
                for i in range(3):
                    for j in range(3):
                        jump_i = si * vi[:, i]
                        jump_j = sj * vj[:, j]
                        avg_dn_i = navg * (nrm @ gi[:, i])
                        avg_dn_j = navg * (nrm @ gj[:, j])
                        val = he * np.sum(ew * (
                            -avg_dn_j * jump_i
                            - avg_dn_i * jump_j
                            + (sigma / he) * jump_j * jump_i))
                        sip[3 * ti + i, 3 * tj + j] += val
                        if use_ar:
                            za = zeta(pts_e) @ nrm
                            ar[3 * ti + i, 3 * tj + j] -= he * np.sum(
                                ew * za * jump_j * navg * vi[:, i])

        if g is not None and not interior:
            gvals = g(pts_e)
            vi = hat_eval(coeffs[tp], pts_e)
            gi = coeffs[tp][1:, :]
            za = zeta(pts_e) @ nrm
            for i in range(3):
                gvec[3 * tp + i] += he * np.sum(ew * gvals * (
                    (nrm @ gi[:, i]) - (sigma / he) * vi[:, i]))
                if inflow:
                    gvec[3 * tp + i] += he * np.sum(
                        ew * za * gvals * vi[:, i])

    return sip, ar, gvec


def two_triangle_mesh(skew=False):
    """Unit square split along the diagonal, optionally sheared."""
    from dgoc import Triangulation, square_domain

    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    if skew:
        pts = pts @ np.array([[1.0, 0.25], [-0.35, 1.2]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return Triangulation(pts, tris, square_domain(), level=0)


def enumerate_qp(B, d, psi, feas_tol=1e-11):
    """Solve min 1/2 y'By - d'y s.t. y <= psi by trying every active set.

    Returns (y, lam, active) of the best feasible stationary candidate."""
    B = np.asarray(B)
    n = len(d)
    best = None
    indices = np.arange(n)
    for bits in itertools.product((False, True), repeat=n):
        act = np.array(bits)
        ina = ~act
        y = np.empty(n)
        y[act] = psi[act]
        if ina.any():
            rhs = d[ina] - B[np.ix_(ina, act)] @ psi[act]
            y[ina] = np.linalg.solve(B[np.ix_(ina, ina)], rhs)
        lam = np.zeros(n)
        lam[act] = d[act] - (B @ y)[act]
        if (y - psi).max() > feas_tol or (act.any() and lam[act].min() < -feas_tol):
            continue
        obj = 0.5 * y @ (B @ y) - d @ y
        if best is None or obj < best[0]:
            best = (obj, y, lam, indices[act])
    assert best is not None, "no feasible stationary active set found"
    return best[1], best[2], best[3]


def random_spd_qp(n, rng, binding=True):
    """Random SPD quadratic program with an upper-bound constraint."""
    R = rng.standard_normal((n, n))
    B = R @ R.T + n * np.eye(n)
    d = rng.standard_normal(n) * n
    psi = rng.standard_normal(n)
    if binding:
        # pull the obstacle below the unconstrained solution somewhere
        yfree = np.linalg.solve(B, d)
        k = rng.integers(0, n, size=max(1, n // 3))
        psi[k] = yfree[k] - np.abs(rng.standard_normal(len(k)))
    return B, d, psi
