"""Fixed quadrature rules on reference triangles and edges.

Triangle rules are stored in barycentric coordinates with weights that sum
to one, so an integral over a physical triangle T is

    int_T f dx  ~=  area(T) * sum_q w_q f(x_q),

and edge rules live on the unit parameter interval [0, 1] with the same
normalization (multiply by the edge length).
"""

import numpy as np

# Symmetric 6-point rule, exact for polynomials of degree 4.
_a1, _b1 = 0.816847572980459, 0.091576213509771
_a2, _b2 = 0.108103018168070, 0.445948490915965
TRI_D4_BARY = np.array([
    [_a1, _b1, _b1],
    [_b1, _a1, _b1],
    [_b1, _b1, _a1],
    [_a2, _b2, _b2],
    [_b2, _a2, _b2],
    [_b2, _b2, _a2],
])
TRI_D4_W = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3)

# Symmetric 12-point rule, exact for polynomials of degree 6.
_c1, _d1 = 0.873821971016996, 0.063089014491502
_c2, _d2 = 0.501426509658179, 0.249286745170910
_e1, _e2, _e3 = 0.636502499121399, 0.310352451033785, 0.053145049844816
TRI_D6_BARY = np.array([
    [_c1, _d1, _d1],
    [_d1, _c1, _d1],
    [_d1, _d1, _c1],
    [_c2, _d2, _d2],
    [_d2, _c2, _d2],
    [_d2, _d2, _c2],
    [_e1, _e2, _e3],
    [_e1, _e3, _e2],
    [_e2, _e1, _e3],
    [_e2, _e3, _e1],
    [_e3, _e1, _e2],
    [_e3, _e2, _e1],
])
TRI_D6_W = np.array([0.050844906370207] * 3
                    + [0.116786275726379] * 3
                    + [0.082851075618374] * 6)


def _gauss01(n):
    """Gauss-Legendre nodes/weights mapped from [-1, 1] to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# 3-point Gauss on [0, 1]: exact up to degree 5, enough for products of
# traces of linears with the linear edge parameterization.
EDGE_G3_T, EDGE_G3_W = _gauss01(3)

# 5-point rule used when measuring error norms on edges.
EDGE_G5_T, EDGE_G5_W = _gauss01(5)


def physical_points(bary, tri_coords):
    """Map barycentric rule points into each triangle of a batch.

    bary : (Q, 3) rule points, tri_coords : (T, 3, 2) vertex coordinates.
    Returns (T, Q, 2) physical coordinates.
    """
    return np.einsum("qi,tid->tqd", bary, tri_coords)


def edge_points(t, endpoints):
    """Map parameter values t in [0,1] onto each edge of a batch.

    t : (Q,), endpoints : (E, 2, 2) as [start, end] coordinate pairs.
    Returns (E, Q, 2).
    """
    start = endpoints[:, 0, :][:, None, :]
    end = endpoints[:, 1, :][:, None, :]
    return (1.0 - t)[None, :, None] * start + t[None, :, None] * end
