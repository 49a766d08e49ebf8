"""Invariant reports: integrated identities, pointwise residuals,
superminimal classification."""

import math

import numpy as np
import pytest

from eqmin import bundles, germsolve, invariants
from eqmin.errors import StaleSolutionError
from conftest import make_section


@pytest.fixture(scope="module")
def rh3_report(mesh_r3, basis_K2_r3):
    data = germsolve.GermData3(mesh_r3, q=basis_K2_r3[0])
    sol = germsolve.solve_gauss3(data, tol=1e-11)
    return data, sol, invariants.compute_invariants(data, sol)


def test_refuses_unconverged_solution(mesh_r3):
    data = germsolve.GermData3(mesh_r3)
    bad = germsolve.GermSolution(u=np.zeros(mesh_r3.n_vertices), converged=False)
    with pytest.raises(StaleSolutionError):
        invariants.compute_invariants(data, bad)


def test_gauss_identity_at_solver_tolerance(rh3_report):
    _, _, rep = rh3_report
    assert rep.residuals["gauss_identity"] < 1e-9


def test_gauss_bonnet_integrated_exactly(rh3_report):
    _, _, rep = rh3_report
    assert rep.residuals["gauss_bonnet"] < 1e-10


def test_area_identity_integrated_exactly(rh3_report):
    _, _, rep = rh3_report
    assert rep.residuals["area_identity"] < 1e-9
    assert rep.area < 4.0 * math.pi


def test_report_serializes(rh3_report):
    _, _, rep = rh3_report
    d = rep.to_dict()
    for key in ("n", "genus", "area", "euler_integral", "residuals"):
        assert key in d


def test_geodesic_case_is_superminimal(mesh_r3):
    data = germsolve.GermData3(mesh_r3)
    sol = germsolve.solve_gauss3(data, tol=1e-11)
    rep = invariants.compute_invariants(data, sol)
    assert abs(rep.area - 4.0 * math.pi) < 1e-8
    assert invariants.superminimal_test(rep) == "SuperminimalPlus"


def test_hopf_differential_case_not_superminimal(rh3_report):
    _, _, rep = rh3_report
    assert invariants.superminimal_test(rep) == "NotSuperminimal"


def test_superminimal_branch_positive(mesh_r4, L1_r4, basis_K2Linv_r4):
    # a vanishing section forces kappa_perp = +-||II||^2; with theta1 = 0
    # the positive branch is selected and the Euler integral equals l
    theta2 = make_section(mesh_r4, L1_r4, 2, -1, 0.4 * basis_K2Linv_r4[0].values)
    data = germsolve.GermData4(mesh_r4, L1_r4, None, theta2)
    sol = germsolve.solve_gauss_ricci4(data, tol=1e-11)
    rep = invariants.compute_invariants(data, sol)
    assert invariants.superminimal_test(rep) == "SuperminimalPlus"
    assert abs(rep.euler_integral - 1.0) < 1e-8
    assert rep.residuals["chi_integral"] < 1e-8
    assert "supermin_identity" in rep.residuals


def test_superminimal_branch_negative(mesh_r4):
    # the mirror case: theta2 = 0 needs negative degree, and selects
    # kappa_perp = -||II||^2
    L = bundles.make_line_bundle(mesh_r4, -1)
    dbar1 = bundles.dbar_operator(mesh_r4, L, 2, 1)
    basis1 = bundles.holomorphic_basis(dbar1, expected_dim=2)
    theta1 = make_section(mesh_r4, L, 2, 1, 0.4 * basis1[0].values)
    data = germsolve.GermData4(mesh_r4, L, theta1, None)
    sol = germsolve.solve_gauss_ricci4(data, tol=1e-11)
    rep = invariants.compute_invariants(data, sol)
    assert invariants.superminimal_test(rep) == "SuperminimalMinus"
    assert abs(rep.euler_integral + 1.0) < 1e-8


def test_frame_equations_small_on_smooth_solution(rh3_report):
    data, sol, _ = rh3_report
    frame = invariants.frame_equation_residuals(data, sol)
    assert frame["gauss_frame"] < 0.2
    # holomorphic input: the codazzi line sits at stencil truncation level
    assert frame["codazzi_frame"] < 0.1
