"""Line bundles, dbar kernels, and the class-triviality oracle."""

import numpy as np
import pytest

from eqmin import bundles, germsolve, hypmesh
from eqmin.errors import IndeterminateKernelError, InvalidParameterError, ShapeError


def test_holonomy_degree_is_integer(mesh_r3):
    for l in (-2, -1, 1, 3):
        L = bundles.make_line_bundle(mesh_r3, l)
        assert abs(L.holonomy_degree() - l) < 1e-8


def test_curvature_integrates_to_degree(mesh_r3):
    L = bundles.make_line_bundle(mesh_r3, 2)
    total = float(np.sum(L.face_curvature))
    assert abs(total - 2.0 * np.pi * 2) < 1e-9


def test_constants_in_trivial_dbar_kernel(mesh_r3):
    dbar = bundles.dbar_operator(mesh_r3, None, 0, 0)
    r = dbar(np.ones(mesh_r3.n_vertices))
    assert np.max(np.abs(r)) < 1e-10


def test_dbar_requires_bundle_for_twist(mesh_r3):
    with pytest.raises(InvalidParameterError):
        bundles.dbar_operator(mesh_r3, None, 2, 1)


def test_quadratic_differentials_dimension(basis_K2_r3):
    assert len(basis_K2_r3) == 3
    assert basis_K2_r3.gap_ratio >= 10.0
    for sec in basis_K2_r3:
        assert sec.bundle_type == (2, 0)


def test_twisted_kernel_dimension(mesh_r3):
    L = bundles.make_line_bundle(mesh_r3, 1)
    dbar = bundles.dbar_operator(mesh_r3, L, 2, 1)
    basis = bundles.holomorphic_basis(dbar, expected_dim=4)
    assert len(basis) == 4
    assert basis.gap_ratio >= 10.0


def test_no_gap_reported_with_singular_values(mesh_r2):
    dbar = bundles.dbar_operator(mesh_r2, None, 2, 0)
    with pytest.raises(IndeterminateKernelError) as err:
        bundles.holomorphic_basis(dbar)
    assert err.value.singular_values is not None


def test_basis_residuals_small(mesh_r3, basis_K2_r3):
    dbar = bundles.dbar_operator(mesh_r3, None, 2, 0)
    for sec in basis_K2_r3:
        # truncation-level residual, not solver-level: the stencil is a
        # second-order fit
        assert dbar.residual_norm(sec.values) < 0.1


def test_section_save_load_roundtrip(tmp_path, mesh_r3, basis_K2_r3):
    path = tmp_path / "q.json"
    basis_K2_r3[0].save(str(path), mesh=mesh_r3)
    back = bundles.DiscreteSection.load(str(path), mesh=mesh_r3)
    assert back.bundle_type == (2, 0)
    assert np.allclose(back.values, basis_K2_r3[0].values)


def test_section_load_rejects_wrong_mesh(tmp_path, mesh_r2, mesh_r3, basis_K2_r3):
    path = tmp_path / "q.json"
    basis_K2_r3[0].save(str(path), mesh=mesh_r3)
    with pytest.raises(ShapeError):
        bundles.DiscreteSection.load(str(path), mesh=mesh_r2)


def test_coboundary_class_is_trivial(mesh_r3):
    rng = np.random.default_rng(7)
    psi = rng.standard_normal(mesh_r3.n_vertices) + 1j * rng.standard_normal(
        mesh_r3.n_vertices
    )
    dbar = bundles.dbar_operator(mesh_r3, None, -1, 0)
    beta = dbar(psi)
    u0 = np.zeros(mesh_r3.n_vertices)
    trivial, norm = bundles.class_is_trivial(mesh_r3, beta, u0, dbar, tol=1e-3)
    assert trivial
    assert norm < 1e-8


def test_holomorphic_class_is_nontrivial(mesh_r3, basis_K2_r3):
    q = basis_K2_r3[0]
    data = germsolve.GermData3(mesh_r3, q=q)
    sol = germsolve.solve_gauss3(data, tol=1e-10)
    from eqmin.higgs import build_from_germ

    asm = build_from_germ(data, sol)
    beta = asm.blocks[("W", "K")]
    dbar = bundles.dbar_operator(mesh_r3, None, -1, 0)
    trivial, norm = bundles.class_is_trivial(mesh_r3, beta, sol.u, dbar, tol=1e-3)
    assert not trivial
    assert norm > 1e-2
