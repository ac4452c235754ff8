"""Broken piecewise-linear functions and transfer operators.

A DG function stores one coefficient per element-local vertex (three per
triangle), with the global unknown numbering 3*element + local_vertex.
The nodal basis on each triangle is the barycentric coordinate set, so
coefficients are point values at the element's corners.
"""

import numpy as np

from . import quadrature as quad


class DGFunction:
    """Element-wise linear function with coefficients of shape (T, 3)."""

    def __init__(self, mesh, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs.reshape(-1, 3)
        if coeffs.shape != (mesh.num_elements, 3):
            raise ValueError("coefficient array does not match the mesh")
        self.mesh = mesh
        self.coeffs = coeffs

    def flat(self):
        return self.coeffs.ravel()

    def copy(self):
        return DGFunction(self.mesh, self.coeffs.copy())

    def eval_volume(self, bary):
        """Values at quadrature points given in barycentric form (Q, 3).

        Returns (T, Q)."""
        return np.einsum("ti,qi->tq", self.coeffs, bary)

    def eval_at(self, elems, bary):
        """Values at points with known element and barycentric coordinates."""
        return np.einsum("ni,ni->n", self.coeffs[elems], bary)

    def gradients(self):
        """Per-element constant gradient, shape (T, 2)."""
        return np.einsum("ti,tid->td", self.coeffs, self.mesh.grads)

    def __add__(self, other):
        return DGFunction(self.mesh, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DGFunction(self.mesh, self.coeffs - other.coeffs)

    def __rmul__(self, a):
        return DGFunction(self.mesh, float(a) * self.coeffs)


class ConformingFunction:
    """Vertex-based continuous piecewise linear function."""

    def __init__(self, mesh, values, zero_trace=False):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_vertices,):
            raise ValueError("value array does not match the mesh vertices")
        self.mesh = mesh
        self.values = values
        self.zero_trace = zero_trace

    def to_dg(self):
        """Embed into the broken space (coefficients copied per element)."""
        return DGFunction(self.mesh, self.values[self.mesh.triangles])


def edge_dof_tables(mesh):
    """Global unknown indices of the trace-relevant corners of each edge.

    For every edge, the plus element contributes the corners sitting at the
    stored endpoints (n0, n1); same for the minus element on interior
    edges.  Cached on the mesh.
    """
    cached = getattr(mesh, "_edge_dof_tables", None)
    if cached is not None:
        return cached
    lp = mesh.edge_loc_plus
    lm = mesh.edge_loc_minus
    interior = ~mesh.boundary
    t = {
        "plus_at0": 3 * mesh.edge_plus + lp,
        "plus_at1": 3 * mesh.edge_plus + (lp + 1) % 3,
        "plus_opp": 3 * mesh.edge_plus + (lp + 2) % 3,
        # minus element traverses the edge the other way around
        "minus_at1": 3 * mesh.edge_minus + lm,
        "minus_at0": 3 * mesh.edge_minus + (lm + 1) % 3,
        "minus_opp": 3 * mesh.edge_minus + (lm + 2) % 3,
        "interior": interior,
    }
    mesh._edge_dof_tables = t
    return t


def jump_average(v, edges=None):
    """Jump and average of a DG function as linear functions on edges.

    Both are returned by their values at the stored edge endpoints,
    shape (E, 2).  On interior edges jump = v_plus - v_minus and
    average = (v_plus + v_minus) / 2 with respect to the fixed edge
    normal; on boundary edges both equal the trace of the single
    neighbor.
    """
    mesh = v.mesh
    t = edge_dof_tables(mesh)
    if edges is None:
        edges = np.arange(len(mesh.edge_nodes))
    flat = v.flat()
    p0 = flat[t["plus_at0"][edges]]
    p1 = flat[t["plus_at1"][edges]]
    interior = t["interior"][edges]
    m0 = np.where(interior, flat[np.where(interior, t["minus_at0"][edges], 0)], p0)
    m1 = np.where(interior, flat[np.where(interior, t["minus_at1"][edges], 0)], p1)
    jump = np.column_stack([p0 - m0, p1 - m1])
    avg = 0.5 * np.column_stack([p0 + m0, p1 + m1])
    jump[~interior] = np.column_stack([p0, p1])[~interior]
    avg[~interior] = np.column_stack([p0, p1])[~interior]
    return jump, avg


def interpolate_nodal(f, mesh):
    """Corner interpolant of a continuous function into the broken space."""
    vals = f(mesh.tri_coords.reshape(-1, 2))
    return DGFunction(mesh, vals.reshape(-1, 3))


_KINV = 0.25 * np.array([[3.0, -1.0, -1.0],
                         [-1.0, 3.0, -1.0],
                         [-1.0, -1.0, 3.0]])


def l2_project(f, mesh):
    """Element-wise L2 projection of a function onto broken linears.

    f maps an (N, 2) point array to N values; integrals use the degree-6
    triangle rule."""
    bary, w = quad.TRI_D6_BARY, quad.TRI_D6_W
    pts = quad.physical_points(bary, mesh.tri_coords)     # (T, Q, 2)
    fvals = f(pts.reshape(-1, 2)).reshape(pts.shape[:2])  # (T, Q)
    rhs = np.einsum("q,tq,qi->ti", w, fvals, bary) * mesh.areas[:, None]
    coeffs = (12.0 / mesh.areas)[:, None] * (rhs @ _KINV.T)
    return DGFunction(mesh, coeffs)


def connect(v):
    """Average element corner values at each vertex; zero on the boundary.

    Maps a DG function to a conforming one with zero trace (the averaging
    operator used to pull discrete states back into H^1_0)."""
    mesh = v.mesh
    sums = np.zeros(mesh.num_vertices)
    np.add.at(sums, mesh.triangles.ravel(), v.coeffs.ravel())
    counts = np.bincount(mesh.triangles.ravel(), minlength=mesh.num_vertices)
    vals = sums / np.maximum(counts, 1)
    vals[mesh.boundary_vertex_mask()] = 0.0
    return ConformingFunction(mesh, vals, zero_trace=True)


def write_field_csv(path, v):
    """Write a DG field as CSV with one row per element corner.

    Columns: element, local_vertex, x, y, value."""
    mesh = v.mesh
    T = mesh.num_elements
    elem = np.repeat(np.arange(T), 3)
    locv = np.tile(np.arange(3), T)
    xy = mesh.tri_coords.reshape(-1, 2)
    vals = v.flat()
    with open(path, "w") as fh:
        fh.write("element,local_vertex,x,y,value\n")
        for e, l, (x, y), val in zip(elem, locv, xy, vals):
            fh.write(f"{e},{l},{x:.17g},{y:.17g},{val:.17g}\n")
