"""Newton solvers for the curvature equations."""

import numpy as np
import pytest

from eqmin import bundles, germsolve, hypmesh
from eqmin.errors import InvalidParameterError
from conftest import make_section


def test_zero_data_gives_flat_solution(mesh_r3):
    data = germsolve.GermData3(mesh_r3)
    sol = germsolve.solve_gauss3(data, tol=1e-10)
    assert sol.converged
    assert np.max(np.abs(sol.u)) < 1e-10


def test_manufactured_constant_recovered(mesh_r3):
    u_star = 0.1
    t = germsolve.manufactured_forcing(mesh_r3, u_star)
    data = germsolve.GermData3(mesh_r3, t_field=t)
    sol = germsolve.solve_gauss3(data, tol=1e-12)
    assert sol.converged
    assert np.max(np.abs(sol.u - u_star)) < 1e-10
    assert len(sol.newton_trace) - 1 <= 12


def test_newton_residual_decreases(mesh_r3, basis_K2_r3):
    data = germsolve.GermData3(mesh_r3, q=basis_K2_r3[0])
    sol = germsolve.solve_gauss3(data, tol=1e-10)
    norms = [step[1] for step in sol.newton_trace]
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_solution_negative_where_data_vanishes(mesh_r3, basis_K2_r3):
    # adding second-fundamental-form data only shrinks the conformal factor
    data = germsolve.GermData3(mesh_r3, q=basis_K2_r3[0])
    sol = germsolve.solve_gauss3(data, tol=1e-10)
    assert np.max(sol.u) < 1e-8


def test_invalid_tolerance_rejected(mesh_r3):
    data = germsolve.GermData3(mesh_r3)
    with pytest.raises(InvalidParameterError):
        germsolve.solve_gauss3(data, tol=0.0)


def test_degree_window_enforced(mesh_r3):
    L = bundles.make_line_bundle(mesh_r3, 2)
    with pytest.raises(InvalidParameterError):
        germsolve.GermData4(mesh_r3, L, None, None)


def test_zero_sections_need_degree_zero(mesh_r3):
    L = bundles.make_line_bundle(mesh_r3, 1)
    data = germsolve.GermData4(mesh_r3, L, None, None)
    with pytest.raises(InvalidParameterError):
        germsolve.solve_gauss_ricci4(data)


def test_coupled_solver_zero_data(mesh_r3):
    L = bundles.make_line_bundle(mesh_r3, 0)
    data = germsolve.GermData4(mesh_r3, L, None, None)
    sol = germsolve.solve_gauss_ricci4(data, tol=1e-10)
    assert sol.converged
    assert np.max(np.abs(sol.u)) < 1e-10
    assert np.max(np.abs(sol.w)) < 1e-12


def test_coupled_solver_balances_ricci(mesh_r3, basis_K2_r3):
    # degree 0 with both sections: the log-scale w stays bounded and the
    # integral of e^{-2u} Q against the area element vanishes with rho0
    L = bundles.make_line_bundle(mesh_r3, 0)
    theta1 = make_section(mesh_r3, L, 2, 1, 0.3 * basis_K2_r3[0].values)
    theta2 = make_section(mesh_r3, L, 2, -1, 0.5 * basis_K2_r3[1].values)
    data = germsolve.GermData4(mesh_r3, L, theta1, theta2)
    sol = germsolve.solve_gauss_ricci4(data, tol=1e-10)
    assert sol.converged
    assert np.max(np.abs(sol.w)) < 3.0
    a = mesh_r3.vertex_areas
    Q = np.exp(-2.0 * sol.w) * data.t2 - np.exp(2.0 * sol.w) * data.t1
    kp_int = float(np.sum(a * np.exp(-2.0 * sol.u) * Q))
    assert abs(kp_int) < 1e-6


def test_polish_stays_close_and_reduces_collocation(mesh_r3, basis_K2_r3):
    data = germsolve.GermData3(mesh_r3, q=basis_K2_r3[0])
    sol = germsolve.solve_gauss3(data, tol=1e-11)
    germsolve.polish_solution(data, sol)
    assert sol.u_smooth is not None
    assert np.max(np.abs(sol.u_smooth - sol.u)) < 0.05
    C = mesh_r3.fd_laplacian_matrix(order=4, weighted=True)

    def colloc(u):
        r = C @ u - (-1.0 + np.exp(2.0 * u) + np.exp(-2.0 * u) * data.t)
        return float(np.sqrt(np.sum(mesh_r3.vertex_areas * r**2)))

    assert colloc(sol.u_smooth) < 0.5 * colloc(sol.u)
