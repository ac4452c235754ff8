"""Unconstrained discrete solves: state equation, projection, reference
field on graded meshes."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from dgoc import (constant_coefficients, interpolate_nodal, lshape_domain,
                  square_domain, triangulate_graded, triangulate_uniform)
from dgoc.assembly import assemble_Bh, assemble_mass
from dgoc.galerkin import (ReferenceField, build_state_operators,
                           compute_singular_obstacle, ritz_project,
                           solve_state, sparse_lu)
from dgoc.metrics import error_l2, error_energy, observed_orders

SIGMA = 6.0
COEFFS = constant_coefficients(zeta=(2.0, 1.0), gamma=1.0)


@pytest.mark.parametrize("domain", [square_domain(), lshape_domain()],
                         ids=["square", "lshape"])
def test_constant_state_is_exact(domain):
    coeffs = constant_coefficients(zeta=(1.0, 0.5), gamma=2.0)
    for level in (1, 2):
        mesh = triangulate_uniform(domain, level)
        y = solve_state(mesh, coeffs, SIGMA, 3.0, lambda p: np.full(len(p), 6.0))
        assert np.abs(y.flat() - 3.0).max() < 1e-10


def _smooth_pair():
    a = np.pi / 4.0

    def y(p):
        return np.sin(a * p[:, 0]) * np.sin(a * p[:, 1])

    def grad_y(p):
        sx, cx = np.sin(a * p[:, 0]), np.cos(a * p[:, 0])
        sy, cy = np.sin(a * p[:, 1]), np.cos(a * p[:, 1])
        return a * np.column_stack([cx * sy, sx * cy])

    def u(p):
        g = grad_y(p)
        return (2.0 * a ** 2 + 1.0) * y(p) + 2.0 * g[:, 0] + 1.0 * g[:, 1]

    return y, grad_y, u


def test_forward_convergence_orders():
    y, grad_y, u = _smooth_pair()
    errs_l2, errs_en = [], []
    for level in (1, 2, 3):
        mesh = triangulate_uniform(square_domain(), level)
        yh = solve_state(mesh, COEFFS, SIGMA, 0.0, u)
        errs_l2.append(error_l2(yh, y))
        errs_en.append(error_energy(yh, y, grad_y, SIGMA))
    ords_l2 = observed_orders(errs_l2)
    ords_en = observed_orders(errs_en)
    assert 1.6 < ords_l2[-1] < 2.4
    assert 0.7 < ords_en[-1] < 1.3


def test_ritz_projection_reproduces_linears():
    mesh = triangulate_uniform(square_domain(), 2)
    w = lambda p: 0.5 + 2.0 * p[:, 0] - 3.0 * p[:, 1]
    grad_w = lambda p: np.broadcast_to([2.0, -3.0], (len(p), 2)).copy()
    rw = ritz_project(mesh, COEFFS, SIGMA, w, grad_w)
    assert np.abs(rw.flat() - interpolate_nodal(w, mesh).flat()).max() < 1e-9


def test_ritz_projection_second_order():
    w = lambda p: np.cos(0.3 * p[:, 0]) * np.exp(0.1 * p[:, 1])
    grad_w = lambda p: np.column_stack([
        -0.3 * np.sin(0.3 * p[:, 0]) * np.exp(0.1 * p[:, 1]),
        0.1 * np.cos(0.3 * p[:, 0]) * np.exp(0.1 * p[:, 1])])
    errs = []
    for level in (1, 2, 3):
        mesh = triangulate_uniform(square_domain(), level)
        rw = ritz_project(mesh, COEFFS, SIGMA, w, grad_w)
        errs.append(error_l2(rw, w))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.0) and np.all(ratios < 5.0)


def test_state_solve_array_control_matches_callable():
    mesh = triangulate_uniform(square_domain(), 1)
    u = lambda p: 0.5 - p[:, 0] + 2.0 * p[:, 1]
    ya = solve_state(mesh, COEFFS, SIGMA, 1.0, u)
    yb = solve_state(mesh, COEFFS, SIGMA, 1.0,
                     interpolate_nodal(u, mesh).flat())
    assert np.abs(ya.flat() - yb.flat()).max() < 1e-10


def test_operator_reuse_is_deterministic():
    mesh = triangulate_uniform(square_domain(), 2)
    ops = build_state_operators(mesh, COEFFS, SIGMA)
    u = lambda p: np.sin(p[:, 0]) * p[:, 1]
    y1 = solve_state(mesh, COEFFS, SIGMA, 2.0, u, ops=ops)
    y2 = solve_state(mesh, COEFFS, SIGMA, 2.0, u, ops=ops)
    y3 = solve_state(mesh, COEFFS, SIGMA, 2.0, u)
    assert np.array_equal(y1.coeffs, y2.coeffs)
    assert np.abs(y1.flat() - y3.flat()).max() < 1e-12


def test_sparse_lu_matches_spsolve(rng):
    mesh = triangulate_uniform(square_domain(), 1)
    ops = build_state_operators(mesh, COEFFS, SIGMA)
    b = rng.standard_normal(mesh.num_dofs)
    x_lu = sparse_lu(ops.A).solve(b)
    x_ref = spla.spsolve(ops.A.tocsc(), b)
    assert np.abs(x_lu - x_ref).max() < 1e-10 * max(1.0, np.abs(x_ref).max())
    # symmetric-mode path on the reduced SPD matrix
    B = assemble_Bh(assemble_mass(mesh), ops.A, 1.0)
    y_lu = sparse_lu(B, spd=True).solve(b)
    y_ref = spla.spsolve(B.tocsc(), b)
    assert np.abs(y_lu - y_ref).max() < 1e-8 * max(1.0, np.abs(y_ref).max())


def test_reference_field_reproduces_linears(rng):
    mesh = triangulate_graded(lshape_domain(), 2, mu=0.6)
    f = lambda p: 1.0 - 0.5 * p[:, 0] + 0.25 * p[:, 1]
    field = ReferenceField(mesh, f(mesh.points))
    # probe points strictly inside random elements
    elems = rng.integers(0, mesh.num_elements, size=40)
    b = rng.dirichlet(np.ones(3) * 5.0, size=40)
    pts = np.einsum("nij,ni->nj", mesh.tri_coords[elems], b)
    assert np.abs(field.value(pts) - f(pts)).max() < 1e-12
    assert np.abs(field.grad(pts) - [-0.5, 0.25]).max() < 1e-12
    v, g = field.value_and_grad(pts)
    assert np.array_equal(v, field.value(pts))
    assert np.array_equal(g, field.grad(pts))


def test_singular_obstacle_reference_solve():
    field = compute_singular_obstacle(lshape_domain(), COEFFS, 4, mu=0.6)
    bmask = field.mesh.boundary_vertex_mask()
    # strong Dirichlet data: boundary vertices carry exactly one
    assert np.abs(field.values[bmask] - 1.0).max() == 0.0
    assert field.values.min() > 0.01
    assert field.values.max() <= 1.0 + 1e-12


def test_singular_obstacle_self_convergence():
    pts = np.array([[-1.0, 2.0], [1.5, 0.5], [-2.0, -2.0],
                    [0.25, 3.0], [-3.5, 1.0]])
    vals = [compute_singular_obstacle(lshape_domain(), COEFFS, lvl, 0.6).value(pts)
            for lvl in (3, 4, 5)]
    d34 = np.abs(vals[0] - vals[1]).max()
    d45 = np.abs(vals[1] - vals[2]).max()
    assert d45 < d34
    assert d45 < 1e-3
