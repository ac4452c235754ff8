"""Operator assembly for the broken-linear interior penalty discretization.

Conventions.  The diffusion part is the symmetric interior penalty form

    a_sip(w, v) = sum_T (grad w, grad v)_T
                - sum_e ({n.grad w}, [v])_e - sum_e ({n.grad v}, [w])_e
                + sigma * sum_e (1/h_e) ([w], [v])_e,

with sums over all edges; jumps and averages on boundary edges degenerate
to the trace of the single neighbor.  The advection-reaction part is

    a_ar(w, v) = sum_T (zeta.grad w + gamma w, v)_T
               - sum_e (n.zeta [w], {v})_e,

summed over interior edges and inflow boundary edges (zeta.n < 0 at the
midpoint).  Dirichlet data g enters through a separate vector so that the
discrete state equation reads  A y = M u - gvec.

Matrices are scipy CSR with row = test function, column = trial function;
the mass matrix is kept in exact block-diagonal form since its blocks are
(area/12) * (1 + delta_ij) and invert in closed form.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import quadrature as quad
from .mesh import classify_boundary_edges


@dataclass
class Coefficients:
    """State-equation coefficients: velocity zeta, reaction gamma.

    zeta and gamma are callables on (N, 2) point arrays; gamma0 is a lower
    bound for gamma - div(zeta)/2 used to sanity-check semicoercivity.
    div_zeta may be omitted for divergence-free (e.g. constant) fields.
    """
    zeta: callable
    gamma: callable
    gamma0: float
    div_zeta: callable = None

    def zeta_const(self):
        """The velocity as a constant vector if it is one, else None."""
        probe = self.zeta(np.array([[0.1, 0.2], [-0.3, 0.7], [1.1, -0.4]]))
        if np.allclose(probe, probe[0]):
            return probe[0].copy()
        return None


def constant_coefficients(zeta=(1.0, 0.0), gamma=1.0):
    z = np.asarray(zeta, dtype=float)
    g = float(gamma)
    if g <= 0:
        raise ValueError("constant reaction coefficient must be positive")
    return Coefficients(
        zeta=lambda pts: np.broadcast_to(z, (len(pts), 2)).copy(),
        gamma=lambda pts: np.full(len(pts), g),
        gamma0=g,
        div_zeta=None,
    )


class BlockDiagonalMass:
    """Broken-space mass matrix stored as per-element 3x3 blocks."""

    _K = (np.ones((3, 3)) + np.eye(3)) / 12.0
    _KINV = 0.25 * np.array([[3.0, -1.0, -1.0],
                             [-1.0, 3.0, -1.0],
                             [-1.0, -1.0, 3.0]])

    def __init__(self, areas):
        self.areas = np.asarray(areas, dtype=float)
        self.n = 3 * len(self.areas)

    def matvec(self, x):
        xb = x.reshape(-1, 3)
        return (self.areas[:, None] * (xb @ self._K.T)).ravel()

    def solve(self, x):
        xb = x.reshape(-1, 3)
        return ((12.0 / self.areas)[:, None] * (xb @ self._KINV.T)).ravel()

    def diagonal(self):
        return np.repeat(self.areas / 6.0, 3)

    def _blocks_to_csr(self, blocks):
        T = len(self.areas)
        rows = (3 * np.arange(T)[:, None, None]
                + np.arange(3)[None, :, None] + np.zeros((1, 1, 3), dtype=int))
        cols = (3 * np.arange(T)[:, None, None]
                + np.zeros((1, 3, 1), dtype=int) + np.arange(3)[None, None, :])
        return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(self.n, self.n))

    def to_csr(self):
        return self._blocks_to_csr(self.areas[:, None, None] * self._K)

    def inv_csr(self):
        return self._blocks_to_csr((12.0 / self.areas)[:, None, None] * self._KINV)

    def norm(self, x):
        """Sqrt of x' M x."""
        return float(np.sqrt(max(np.dot(x, self.matvec(x)), 0.0)))


def assemble_mass(mesh):
    return BlockDiagonalMass(mesh.areas)


def _edge_trace_values(mesh, t):
    """Trace tables of the corner basis on edges at parameters t (Q,).

    Returns (B_plus, B_minus) of shape (E, 3, Q) in element-local index
    order; B_minus rows are valid only on interior edges."""
    E = len(mesh.edge_nodes)
    Q = len(t)
    lp = mesh.edge_loc_plus
    lm = np.maximum(mesh.edge_loc_minus, 0)
    idx = np.arange(E)
    Bp = np.zeros((E, 3, Q))
    Bp[idx, lp, :] = 1.0 - t
    Bp[idx, (lp + 1) % 3, :] = t
    Bm = np.zeros((E, 3, Q))
    Bm[idx, lm, :] = t
    Bm[idx, (lm + 1) % 3, :] = 1.0 - t
    return Bp, Bm


def _normal_grads(mesh):
    """n . grad of the three corner basis functions on each side, (E, 3)."""
    n = mesh.edge_normal
    gp = np.einsum("eid,ed->ei", mesh.grads[mesh.edge_plus], n)
    gm = np.einsum("eid,ed->ei", mesh.grads[np.maximum(mesh.edge_minus, 0)], n)
    return gp, gm


def _scatter(blocks, dofs):
    """COO triplets from per-edge/element blocks (N, k, k) and dof rows (N, k)."""
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    return rows, cols, blocks.ravel()


def assemble_sip(mesh, sigma):
    """Symmetric interior penalty diffusion matrix (CSR)."""
    if sigma <= 0:
        raise ValueError("penalty parameter must be positive")
    n = mesh.num_dofs
    # volume gradients
    vol = np.einsum("tid,tjd->tij", mesh.grads, mesh.grads) * mesh.areas[:, None, None]
    dofs_T = 3 * np.arange(mesh.num_elements, dtype=np.int64)[:, None] + np.arange(3)
    r1, c1, v1 = _scatter(vol, dofs_T)

    t, w = quad.EDGE_G3_T, quad.EDGE_G3_W
    Bp, Bm = _edge_trace_values(mesh, t)
    gp, gm = _normal_grads(mesh)
    h = mesh.edge_length
    interior = ~mesh.boundary

    parts = [(r1, c1, v1)]

    # interior edges: six local functions [plus 0..2, minus 0..2]
    if interior.any():
        ii = np.flatnonzero(interior)
        J = np.concatenate([Bp[ii], -Bm[ii]], axis=1)          # (E, 6, Q)
        G = 0.5 * np.concatenate([gp[ii], gm[ii]], axis=1)      # (E, 6)
        IJ = np.einsum("q,eaq->ea", w, J) * h[ii, None]
        JJ = np.einsum("q,eaq,ebq->eab", w, J, J) * h[ii, None, None]
        blk = (-np.einsum("eb,ea->eab", G, IJ)
               - np.einsum("ea,eb->eab", G, IJ)
               + (sigma / h[ii])[:, None, None] * JJ)
        p, m = mesh.edge_plus[ii], mesh.edge_minus[ii]
        dofs6 = np.concatenate([3 * p[:, None] + np.arange(3),
                                3 * m[:, None] + np.arange(3)], axis=1)
        parts.append(_scatter(blk, dofs6))

    # boundary edges: jump and average degenerate to the trace
    bb = np.flatnonzero(mesh.boundary)
    if len(bb):
        J = Bp[bb]
        G = gp[bb]
        IJ = np.einsum("q,eaq->ea", w, J) * h[bb, None]
        JJ = np.einsum("q,eaq,ebq->eab", w, J, J) * h[bb, None, None]
        blk = (-np.einsum("eb,ea->eab", G, IJ)
               - np.einsum("ea,eb->eab", G, IJ)
               + (sigma / h[bb])[:, None, None] * JJ)
        dofs3 = 3 * mesh.edge_plus[bb][:, None] + np.arange(3)
        parts.append(_scatter(blk, dofs3))

    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_ar(mesh, coeffs):
    """Advection-reaction matrix with upwind-style inflow coupling (CSR)."""
    n = mesh.num_dofs
    bary, w = quad.TRI_D4_BARY, quad.TRI_D4_W
    pts = quad.physical_points(bary, mesh.tri_coords)
    flat = pts.reshape(-1, 2)
    zq = coeffs.zeta(flat).reshape(pts.shape)              # (T, Q, 2)
    gq = coeffs.gamma(flat).reshape(pts.shape[:2])         # (T, Q)
    semic = gq.min() if coeffs.div_zeta is None else \
        (gq - 0.5 * coeffs.div_zeta(flat).reshape(gq.shape)).min()
    if semic <= 0:
        raise ValueError("gamma - div(zeta)/2 must stay positive")

    B = bary.T                                             # (3, Q) basis values
    adv = np.einsum("tqd,tjd->tqj", zq, mesh.grads)
    blk = (np.einsum("q,iq,tqj->tij", w, B, adv)
           + np.einsum("q,tq,iq,jq->tij", w, gq, B, B)) * mesh.areas[:, None, None]
    dofs_T = 3 * np.arange(mesh.num_elements, dtype=np.int64)[:, None] + np.arange(3)
    parts = [_scatter(blk, dofs_T)]

    t, wq = quad.EDGE_G3_T, quad.EDGE_G3_W
    Bp, Bm = _edge_trace_values(mesh, t)
    h = mesh.edge_length
    epts = quad.edge_points(t, mesh.points[mesh.edge_nodes])
    nz = np.einsum("eqd,ed->eq", coeffs.zeta(epts.reshape(-1, 2)).reshape(epts.shape),
                   mesh.edge_normal)

    interior = np.flatnonzero(~mesh.boundary)
    if len(interior):
        ii = interior
        J = np.concatenate([Bp[ii], -Bm[ii]], axis=1)
        A = 0.5 * np.concatenate([Bp[ii], Bm[ii]], axis=1)
        blk = -np.einsum("q,eq,ebq,eaq->eab", wq, nz[ii], J, A) * h[ii, None, None]
        p, m = mesh.edge_plus[ii], mesh.edge_minus[ii]
        dofs6 = np.concatenate([3 * p[:, None] + np.arange(3),
                                3 * m[:, None] + np.arange(3)], axis=1)
        parts.append(_scatter(blk, dofs6))

    inflow, _ = classify_boundary_edges(mesh, coeffs.zeta)
    if len(inflow):
        J = Bp[inflow]
        blk = -np.einsum("q,eq,ebq,eaq->eab", wq, nz[inflow], J, J) * h[inflow, None, None]
        dofs3 = 3 * mesh.edge_plus[inflow][:, None] + np.arange(3)
        parts.append(_scatter(blk, dofs3))

    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_operator(mesh, coeffs, sigma):
    """Full state operator A = SIP + advection-reaction."""
    return assemble_sip(mesh, sigma) + assemble_ar(mesh, coeffs)


def assemble_boundary_data(mesh, g, sigma, coeffs):
    """Dirichlet-data vector: (L_g w, v) = a(w, v) + gvec . v.

    Entries are sum over boundary edges of (g, n.grad v - sigma/h v) plus,
    on inflow edges, (n.zeta g, v).  g is a callable on points or a scalar.
    """
    n = mesh.num_dofs
    gvec = np.zeros(n)
    bb = np.flatnonzero(mesh.boundary)
    if len(bb) == 0:
        return gvec
    t, w = quad.EDGE_G3_T, quad.EDGE_G3_W
    Bp, _ = _edge_trace_values(mesh, t)
    gp, _ = _normal_grads(mesh)
    h = mesh.edge_length
    epts = quad.edge_points(t, mesh.points[mesh.edge_nodes[bb]])
    if callable(g):
        gq = g(epts.reshape(-1, 2)).reshape(epts.shape[:2])
    else:
        gq = np.full(epts.shape[:2], float(g))

    ig = np.einsum("q,eq->e", w, gq) * h[bb]                 # integral of g
    contrib = (gp[bb] * ig[:, None]
               - sigma * np.einsum("q,eq,eiq->ei", w, gq, Bp[bb]))
    dofs3 = 3 * mesh.edge_plus[bb][:, None] + np.arange(3)
    np.add.at(gvec, dofs3.ravel(), contrib.ravel())

    inflow, _ = classify_boundary_edges(mesh, coeffs.zeta)
    if len(inflow):
        einf = quad.edge_points(t, mesh.points[mesh.edge_nodes[inflow]])
        nz = np.einsum("eqd,ed->eq",
                       coeffs.zeta(einf.reshape(-1, 2)).reshape(einf.shape),
                       mesh.edge_normal[inflow])
        if callable(g):
            gq = g(einf.reshape(-1, 2)).reshape(einf.shape[:2])
        else:
            gq = np.full(einf.shape[:2], float(g))
        contrib = np.einsum("q,eq,eq,eiq->ei", w, nz, gq, Bp[inflow]) \
            * h[inflow, None]
        dofs3 = 3 * mesh.edge_plus[inflow][:, None] + np.arange(3)
        np.add.at(gvec, dofs3.ravel(), contrib.ravel())
    return gvec


def load_vector(mesh, f):
    """Vector of integrals of f against the corner basis (degree-6 rule)."""
    bary, w = quad.TRI_D6_BARY, quad.TRI_D6_W
    pts = quad.physical_points(bary, mesh.tri_coords)
    fvals = f(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    return (np.einsum("q,tq,qi->ti", w, fvals, bary)
            * mesh.areas[:, None]).ravel()


def apply_Lhg(y, A, M, gvec):
    """Discrete operator with boundary data folded in: M^-1 (A y + gvec)."""
    return M.solve(A @ y + gvec)


def assemble_Bh(M, A, beta):
    """Hessian of the reduced quadratic objective: beta A' M^-1 A + M."""
    Minv = M.inv_csr()
    B = beta * (A.T @ (Minv @ A)) + M.to_csr()
    return B.tocsr()


def assemble_rhs_qp(M, A, gvec, y_d, beta, mesh=None):
    """Linear term of the reduced objective: -beta A' M^-1 gvec + (y_d, phi).

    The desired state may be a flat coefficient array, a DG field, or a
    plain callable; callables are integrated with the degree-6 rule
    (pass the mesh), which keeps data with jumps off the nodal grid."""
    if isinstance(y_d, np.ndarray):
        data = M.matvec(y_d.ravel())
    elif hasattr(y_d, "flat"):
        data = M.matvec(y_d.flat())
    else:
        data = load_vector(mesh, y_d)
    return -beta * (A.T @ M.solve(gvec)) + data


def dump_matrix(A, path):
    """Write a sparse matrix as `row col value` text lines."""
    coo = A.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
