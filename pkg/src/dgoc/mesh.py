"""Triangulations of polygonal template domains.

Two domains are built in: the square (-4, 4)^2 and the L-shape
(-8, 8)^2 minus the closed quadrant [0, 8] x [-8, 0].  Level-0 meshes come
from fixed structured templates (4 x 4 cells on the square, 2 x 2 cells on
each of the three blocks of the L-shape, every cell split along the same
diagonal).  Level k is obtained by k uniform refinements, so the mesh size
halves and the element count quadruples per level; the structured
construction used here generates exactly the triangles that repeated red
refinement of the template would produce.

Graded meshes for reentrant corners are built by uniform refinement
followed by a radial remap of all points within a fixed radius R of the
corner c:

    p  ->  c + (p - c) * (|p - c| / R)^(1/mu - 1),

which compresses points toward the corner while keeping points on the two
boundary rays adjacent to the corner on the boundary.  The local mesh size
then scales like dist^(1-mu) * h, with aspect ratios inflated by at most a
factor 1/mu.

Edge orientation convention: every edge stores a fixed unit normal.  The
"plus" element is the one traversing the edge in its own counterclockwise
order, so the normal (the traversal direction rotated by -90 degrees)
points out of the plus element and into the minus element.  On boundary
edges the plus element is the unique neighbor and the normal is the
outward normal of the domain.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class _Template:
    """Structured level-0 layout: a grid of square cells, some active."""
    origin: np.ndarray          # lower-left corner of the cell grid
    cell: float                 # level-0 cell edge length
    shape: tuple                # number of level-0 cells in x and y
    active: np.ndarray          # (shape) bool, which cells belong to the domain


@dataclass
class PolygonalDomain:
    name: str
    vertices: np.ndarray        # corner coordinates, counterclockwise
    angles: np.ndarray          # interior angle at each corner
    template: _Template = field(repr=False, default=None)

    def reentrant_corners(self):
        """Indices of corners with interior angle exceeding pi."""
        return [i for i, a in enumerate(self.angles) if a > np.pi + 1e-12]


def square_domain():
    """The square (-4, 4)^2 with a 4 x 4 cell template."""
    verts = np.array([[-4.0, -4.0], [4.0, -4.0], [4.0, 4.0], [-4.0, 4.0]])
    angles = np.full(4, 0.5 * np.pi)
    tpl = _Template(origin=np.array([-4.0, -4.0]), cell=2.0, shape=(4, 4),
                    active=np.ones((4, 4), dtype=bool))
    return PolygonalDomain("square", verts, angles, tpl)


def lshape_domain():
    """(-8, 8)^2 minus [0, 8] x [-8, 0]; reentrant corner at the origin."""
    verts = np.array([[-8.0, -8.0], [0.0, -8.0], [0.0, 0.0],
                      [8.0, 0.0], [8.0, 8.0], [-8.0, 8.0]])
    angles = np.array([0.5, 0.5, 1.5, 0.5, 0.5, 0.5]) * np.pi
    active = np.ones((4, 4), dtype=bool)
    active[2:, :2] = False      # the removed quadrant x >= 0, y <= 0
    tpl = _Template(origin=np.array([-8.0, -8.0]), cell=4.0, shape=(4, 4),
                    active=active)
    return PolygonalDomain("lshape", verts, angles, tpl)


_DOMAINS = {"square": square_domain, "lshape": lshape_domain}


def get_domain(name):
    try:
        return _DOMAINS[name]()
    except KeyError:
        raise ValueError(f"unsupported domain shape {name!r}; "
                         f"available templates: {sorted(_DOMAINS)}") from None


@dataclass
class _Remap:
    corner: np.ndarray
    radius: float
    mu: float


class Triangulation:
    """Conforming triangle mesh with per-edge orientation data.

    Arrays of interest:

    points : (P, 2)            vertex coordinates
    triangles : (T, 3) int     vertex indices, counterclockwise
    areas, centroids, h_elem   per-element geometry
    grads : (T, 3, 2)          gradients of the three nodal hat functions
    edge_nodes : (E, 2) int    endpoints in plus-element traversal order
    edge_plus, edge_minus      adjacent elements (minus == -1 on boundary)
    edge_loc_plus/minus        local edge index within each element
    edge_normal : (E, 2)       fixed unit normal, outward from plus element
    edge_length : (E,)
    boundary : (E,) bool
    """

    def __init__(self, points, triangles, domain, level,
                 struct=None, remaps=()):
        self.points = np.asarray(points, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.domain = domain
        self.level = level
        self._struct = struct
        self.remaps = list(remaps)
        self._build_geometry()
        self._build_edges()
        self._vertex_adj = None

    # -- geometry ---------------------------------------------------------

    def _build_geometry(self):
        p = self.points[self.triangles]            # (T, 3, 2)
        self.tri_coords = p
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0):
            bad = int(np.count_nonzero(det <= 0))
            raise ValueError(f"{bad} triangles are degenerate or clockwise")
        self.areas = 0.5 * det
        self.centroids = p.mean(axis=1)
        # grad of hat function i: rotate the opposite edge by 90 degrees
        g = np.empty((len(det), 3, 2))
        for i in range(3):
            a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / det
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / det
        self.grads = g
        e0 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        e1 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        e2 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        self.h_elem = np.maximum(e0, np.maximum(e1, e2))
        self.h = float(self.h_elem.max())

    def _build_edges(self):
        tri = self.triangles
        T = len(tri)
        eu = tri[:, [0, 1, 2]].ravel()
        ev = tri[:, [1, 2, 0]].ravel()
        elem = np.repeat(np.arange(T, dtype=np.int64), 3)
        loc = np.tile(np.array([0, 1, 2], dtype=np.int64), T)

        lo = np.minimum(eu, ev)
        hi = np.maximum(eu, ev)
        code = lo * len(self.points) + hi
        order = np.argsort(code, kind="stable")
        code_s = code[order]
        new = np.empty(len(code_s), dtype=bool)
        new[0] = True
        new[1:] = code_s[1:] != code_s[:-1]
        first = np.flatnonzero(new)
        group_sizes = np.diff(np.append(first, len(code_s)))
        if group_sizes.max() > 2:
            raise ValueError("non-manifold edge encountered")
        E = len(first)
        row1 = order[first]
        has2 = group_sizes == 2
        row2 = np.full(E, -1, dtype=np.int64)
        row2[has2] = order[first[has2] + 1]

        fwd = eu < ev                         # traverses low -> high vertex
        plus_row = row1.copy()
        minus_row = np.full(E, -1, dtype=np.int64)
        swap = has2 & ~fwd[row1]
        plus_row[swap] = row2[swap]
        minus_row[has2] = np.where(swap[has2], row1[has2], row2[has2])
        if not np.all(fwd[plus_row[has2]]):
            raise ValueError("inconsistent element orientation across an edge")

        self.edge_nodes = np.column_stack([eu[plus_row], ev[plus_row]])
        self.edge_plus = elem[plus_row]
        self.edge_loc_plus = loc[plus_row]
        self.edge_minus = np.where(has2, elem[np.maximum(minus_row, 0)], -1)
        self.edge_loc_minus = np.where(has2, loc[np.maximum(minus_row, 0)], -1)
        self.boundary = ~has2

        d = self.points[self.edge_nodes[:, 1]] - self.points[self.edge_nodes[:, 0]]
        self.edge_length = np.linalg.norm(d, axis=1)
        self.edge_normal = np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_length[:, None]

    # -- convenience ------------------------------------------------------

    @property
    def num_elements(self):
        return len(self.triangles)

    @property
    def num_vertices(self):
        return len(self.points)

    @property
    def num_dofs(self):
        """Broken P1 space dimension: three values per triangle."""
        return 3 * len(self.triangles)

    def dof_points(self):
        """Coordinates of every element-local vertex site, shape (3T, 2)."""
        return self.tri_coords.reshape(-1, 2)

    def boundary_vertex_mask(self):
        mask = np.zeros(len(self.points), dtype=bool)
        mask[self.edge_nodes[self.boundary].ravel()] = True
        return mask

    def min_angle(self):
        p = self.tri_coords
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cu = np.linalg.norm(u, axis=1)
            cv = np.linalg.norm(v, axis=1)
            cosang = np.clip((u * v).sum(1) / (cu * cv), -1.0, 1.0)
            angles.append(np.arccos(cosang))
        return float(np.min(angles))

    def _vertex_adjacency(self):
        if self._vertex_adj is None:
            flat = self.triangles.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=len(self.points))
            ptr = np.concatenate([[0], np.cumsum(counts)])
            self._vertex_adj = (ptr, order // 3)
        return self._vertex_adj

    def elements_at_vertex(self, v):
        ptr, elems = self._vertex_adjacency()
        return np.unique(elems[ptr[v]:ptr[v + 1]])

    def barycentric(self, elems, pts):
        """Barycentric coordinates of pts (N, 2) w.r.t. elements elems (N,)."""
        v0 = self.tri_coords[elems, 0]
        g = self.grads[elems]                       # (N, 3, 2)
        lam = np.einsum("nid,nd->ni", g, pts - v0)
        lam[:, 0] += 1.0
        return lam

    def locate(self, pts, tol=1e-10):
        """Find the element containing each point of a structured mesh.

        Uses cell-index arithmetic on the structured layout (undoing the
        grading remap first), then verifies with barycentric coordinates
        and falls back to scanning nearby cells.  Raises if a point cannot
        be placed inside the domain.
        """
        if self._struct is None:
            raise ValueError("locate() requires a structured mesh")
        origin, spacing, elem_of_cell = self._struct
        ncx, ncy = elem_of_cell.shape
        pts = np.asarray(pts, dtype=float)
        q = pts.copy()
        for rm in self.remaps:
            d = q - rm.corner
            rho = np.linalg.norm(d, axis=1)
            inside = (rho > 0) & (rho < rm.radius)
            scale = np.ones_like(rho)
            scale[inside] = (rho[inside] / rm.radius) ** (rm.mu - 1.0)
            q = rm.corner + d * scale[:, None]

        rel = (q - origin) / spacing
        ci = np.clip(np.floor(rel[:, 0]).astype(np.int64), 0, ncx - 1)
        cj = np.clip(np.floor(rel[:, 1]).astype(np.int64), 0, ncy - 1)

        n = len(pts)
        found = np.zeros(n, dtype=bool)
        elems = np.zeros(n, dtype=np.int64)
        bary = np.zeros((n, 3))

        def attempt(idx, cand):
            ok_cand = cand >= 0
            idx = idx[ok_cand]
            cand = cand[ok_cand]
            if len(idx) == 0:
                return
            lam = self.barycentric(cand, pts[idx])
            ok = lam.min(axis=1) >= -tol
            idx, cand, lam = idx[ok], cand[ok], lam[ok]
            elems[idx] = cand
            bary[idx] = lam
            found[idx] = True

        # primary guess: the cell the unmapped point falls into
        frac = rel - np.floor(rel)
        half = (frac[:, 1] > frac[:, 0]).astype(np.int64)
        base = elem_of_cell[ci, cj]
        cand = np.where(base >= 0, base + half, -1)
        attempt(np.arange(n), cand)
        if found.all():
            return elems, bary

        # scan the surrounding cells for stragglers
        for radius in (1, 2):
            offsets = [(di, dj) for di in range(-radius, radius + 1)
                       for dj in range(-radius, radius + 1)
                       if max(abs(di), abs(dj)) == radius]
            for di, dj in offsets:
                for h in (0, 1):
                    idx = np.flatnonzero(~found)
                    if len(idx) == 0:
                        return elems, bary
                    ii = np.clip(ci[idx] + di, 0, ncx - 1)
                    jj = np.clip(cj[idx] + dj, 0, ncy - 1)
                    base = elem_of_cell[ii, jj]
                    cand = np.where(base >= 0, base + h, -1)
                    attempt(idx, cand)
            # both halves of the clipped primary cell as well
            idx = np.flatnonzero(~found)
            if len(idx) == 0:
                return elems, bary
            base = elem_of_cell[ci[idx], cj[idx]]
            cand = np.where(base >= 0, base + (1 - half[idx]), -1)
            attempt(idx, cand)
        if not found.all():
            missing = np.flatnonzero(~found)
            raise ValueError(f"{len(missing)} points lie outside the mesh, "
                             f"first offender {pts[missing[0]]}")
        return elems, bary

    def write_text(self, path, zeta=None):
        """Write the mesh as plain text.

        Layout: a `points N` section with rows `id x y`, a `triangles M`
        section with rows `id v0 v1 v2`, and a `boundary_edges K` section
        with rows `id v0 v1 tag` where the tag is `inflow`/`outflow` when a
        velocity field is supplied and `boundary` otherwise.
        """
        lines = ["# dgoc mesh text v1"]
        lines.append(f"points {len(self.points)}")
        for i, (x, y) in enumerate(self.points):
            lines.append(f"{i} {x:.17g} {y:.17g}")
        lines.append(f"triangles {len(self.triangles)}")
        for i, (a, b, c) in enumerate(self.triangles):
            lines.append(f"{i} {a} {b} {c}")
        bids = np.flatnonzero(self.boundary)
        if zeta is not None:
            inflow, _ = classify_boundary_edges(self, zeta)
            inflow = set(int(i) for i in inflow)
            tags = ["inflow" if int(e) in inflow else "outflow" for e in bids]
        else:
            tags = ["boundary"] * len(bids)
        lines.append(f"boundary_edges {len(bids)}")
        for e, tag in zip(bids, tags):
            a, b = self.edge_nodes[e]
            lines.append(f"{e} {a} {b} {tag}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _structured(domain, level):
    """Vertices/triangles of the template refined `level` times."""
    tpl = domain.template
    if tpl is None:
        raise ValueError(f"domain {domain.name!r} has no structured template")
    n = 2 ** level
    ncx, ncy = tpl.shape[0] * n, tpl.shape[1] * n
    spacing = tpl.cell / n
    active = np.repeat(np.repeat(tpl.active, n, axis=0), n, axis=1)

    # vertex lattice, keeping only corners of active cells
    used = np.zeros((ncx + 1, ncy + 1), dtype=bool)
    ai, aj = np.nonzero(active)
    for di in (0, 1):
        for dj in (0, 1):
            used[ai + di, aj + dj] = True
    vid = np.full((ncx + 1, ncy + 1), -1, dtype=np.int64)
    ui, uj = np.nonzero(used)
    vid[ui, uj] = np.arange(len(ui))
    points = tpl.origin + spacing * np.column_stack([ui, uj]).astype(float)

    a = vid[ai, aj]
    b = vid[ai + 1, aj]
    c = vid[ai + 1, aj + 1]
    d = vid[ai, aj + 1]
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    tris = np.empty((2 * len(ai), 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    elem_of_cell = np.full((ncx, ncy), -1, dtype=np.int64)
    elem_of_cell[ai, aj] = 2 * np.arange(len(ai))
    struct = (tpl.origin.copy(), spacing, elem_of_cell)
    return points, tris, struct


def triangulate_uniform(domain, level):
    """Uniformly refined template mesh; h halves with each level."""
    if level < 0:
        raise ValueError("refinement level must be nonnegative")
    points, tris, struct = _structured(domain, level)
    return Triangulation(points, tris, domain, level, struct=struct)


def _remap_radius(domain, corner_idx):
    c = domain.vertices[corner_idx]
    others = np.delete(domain.vertices, corner_idx, axis=0)
    return 0.5 * float(np.min(np.linalg.norm(others - c, axis=1)))


def triangulate_graded(domain, level, mu):
    """Uniform mesh with a radial grading remap toward reentrant corners.

    mu may be a scalar (applied at every reentrant corner) or a sequence
    aligned with domain.vertices.  Convex corners must keep mu = 1; at a
    reentrant corner with opening angle omega the grading must satisfy
    1/2 < mu < pi/omega.  With mu identically 1 the result coincides with
    the uniform mesh.
    """
    nv = len(domain.vertices)
    reentrant = set(domain.reentrant_corners())
    if np.isscalar(mu):
        mus = [float(mu) if i in reentrant else 1.0 for i in range(nv)]
    else:
        mus = [float(m) for m in mu]
        if len(mus) != nv:
            raise ValueError("per-corner mu must match the number of corners")
    remaps = []
    for i, m in enumerate(mus):
        omega = domain.angles[i]
        if i in reentrant:
            if m == 1.0:
                continue
            if not (0.5 < m < np.pi / omega):
                raise ValueError(
                    f"grading exponent {m} at corner {i} is outside "
                    f"(1/2, pi/omega) = (0.5, {np.pi / omega:.6f})")
            remaps.append(_Remap(domain.vertices[i].copy(),
                                 _remap_radius(domain, i), m))
        elif m != 1.0:
            raise ValueError(f"corner {i} is convex; grading requires mu = 1")

    points, tris, struct = _structured(domain, level)
    for rm in remaps:
        d = points - rm.corner
        rho = np.linalg.norm(d, axis=1)
        inside = (rho > 0) & (rho < rm.radius)
        scale = np.ones_like(rho)
        scale[inside] = (rho[inside] / rm.radius) ** (1.0 / rm.mu - 1.0)
        points = rm.corner + d * scale[:, None]
    return Triangulation(points, tris, domain, level,
                         struct=struct, remaps=remaps)


def classify_boundary_edges(mesh, zeta):
    """Split boundary edges by the sign of zeta . n at the edge midpoint.

    Strictly negative means inflow; ties count as outflow.  Returns
    (inflow_ids, outflow_ids) as arrays of edge indices.
    """
    bids = np.flatnonzero(mesh.boundary)
    mid = 0.5 * (mesh.points[mesh.edge_nodes[bids, 0]]
                 + mesh.points[mesh.edge_nodes[bids, 1]])
    z = zeta(mid) if callable(zeta) else np.broadcast_to(
        np.asarray(zeta, dtype=float), (len(bids), 2))
    sign = np.einsum("ed,ed->e", z, mesh.edge_normal[bids])
    return bids[sign < 0.0], bids[sign >= 0.0]


def star(mesh, elem):
    """Elements sharing at least one vertex with `elem` (excluding itself)."""
    out = np.concatenate([mesh.elements_at_vertex(v)
                          for v in mesh.triangles[elem]])
    out = np.unique(out)
    return out[out != elem]


def grading_profile(mesh):
    """Ratio Phi(T) * h / h_T for each element, where Phi multiplies
    dist(corner, centroid)^(1-mu) over all graded corners.  For meshes
    built with the radial remap this should stay inside fixed bounds
    across refinement levels."""
    phi = np.ones(mesh.num_elements)
    for rm in mesh.remaps:
        d = np.linalg.norm(mesh.centroids - rm.corner, axis=1)
        phi *= d ** (1.0 - rm.mu)
    return phi * mesh.h / mesh.h_elem
