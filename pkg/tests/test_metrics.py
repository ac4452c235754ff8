"""Error norms: closed forms, identities, and order bookkeeping."""

import numpy as np

from dgoc import (DGFunction, constant_coefficients, interpolate_nodal,
                  square_domain, triangulate_uniform)
from dgoc.assembly import assemble_Bh, assemble_mass, assemble_operator
from dgoc.metrics import (energy_norm, error_energy, error_l2, error_linf,
                          norm_h, observed_orders)

from oracles import two_triangle_mesh

SIGMA = 6.0


def test_l2_norm_closed_forms():
    mesh = two_triangle_mesh()
    # ||x||_L2(unit square)^2 = 1/3
    v = interpolate_nodal(lambda p: p[:, 0], mesh)
    assert abs(error_l2(v, None) - np.sqrt(1.0 / 3.0)) < 1e-14
    # distance between two linears is the norm of their difference
    w = interpolate_nodal(lambda p: 2.0 * p[:, 0], mesh)
    assert abs(error_l2(w, lambda p: p[:, 0]) - np.sqrt(1.0 / 3.0)) < 1e-14
    # quadrature degree is high enough for quartic integrands
    q = lambda p: p[:, 0] ** 2
    z = DGFunction(mesh, np.zeros((2, 3)))
    assert abs(error_l2(z, q) - np.sqrt(1.0 / 5.0)) < 1e-14


def test_energy_norm_closed_form_constant():
    # a nonzero constant has zero gradient and zero interior jumps; only
    # the boundary jump term sigma/h |c|^2 |e| survives
    mesh = two_triangle_mesh()
    c = 2.0
    v = DGFunction(mesh, np.full((2, 3), c))
    expect = np.sqrt(SIGMA * c * c * 4.0)     # four unit boundary edges
    assert abs(energy_norm(v, SIGMA) - expect) < 1e-12


def test_energy_error_of_exact_interpolant_scales_linearly():
    f = lambda p: np.sin(0.5 * p[:, 0]) * np.cos(0.4 * p[:, 1])
    gf = lambda p: np.column_stack([
        0.5 * np.cos(0.5 * p[:, 0]) * np.cos(0.4 * p[:, 1]),
        -0.4 * np.sin(0.5 * p[:, 0]) * np.sin(0.4 * p[:, 1])])
    errs = []
    for level in (1, 2, 3):
        mesh = triangulate_uniform(square_domain(), level)
        errs.append(error_energy(interpolate_nodal(f, mesh), f, gf, SIGMA))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 1.7) and np.all(ratios < 2.3)


def test_energy_error_zero_for_reproduced_linear():
    mesh = triangulate_uniform(square_domain(), 2)
    f = lambda p: 1.0 + 0.5 * p[:, 0] - 2.0 * p[:, 1]
    gf = lambda p: np.broadcast_to([0.5, -2.0], (len(p), 2)).copy()
    err = error_energy(interpolate_nodal(f, mesh), f, gf, SIGMA)
    assert err < 1e-12


def test_linf_samples_seven_points_per_element():
    mesh = two_triangle_mesh()
    # error against a quadratic is largest at an edge midpoint for the
    # zero function: max of x(1-x) type bump on the diagonal
    z = DGFunction(mesh, np.zeros((2, 3)))
    f = lambda p: p[:, 0] * (1.0 - p[:, 0])
    # midpoints of the mesh edges include (0.5, 0.5) and (0.5, 0) where
    # f = 1/4; centroids give f(1/3,..) = 2/9 < 1/4
    assert abs(error_linf(z, f) - 0.25) < 1e-14


def test_norm_h_matches_reduced_hessian_quadratic_form(rng):
    mesh = triangulate_uniform(square_domain(), 1)
    coeffs = constant_coefficients(zeta=(2.0, 1.0), gamma=1.0)
    M = assemble_mass(mesh)
    A = assemble_operator(mesh, coeffs, SIGMA)
    beta = 0.75
    B = assemble_Bh(M, A, beta)
    for _ in range(5):
        x = rng.standard_normal(mesh.num_dofs)
        assert abs(norm_h(x, M, A, beta) ** 2 - x @ (B @ x)) < 1e-9


def test_observed_orders_bookkeeping():
    errs = [1.0, 0.25, 0.0625]
    out = observed_orders(errs)
    assert np.allclose(out, [2.0, 2.0])
    out2 = observed_orders([1.0, 0.0, 0.5])
    assert np.isnan(out2[0]) and np.isnan(out2[1])
    assert len(observed_orders([3.0])) == 0
