"""Higgs-bundle assembly: structural identities and gauge actions."""

import numpy as np
import pytest

from eqmin import bundles, germsolve, higgs
from eqmin.errors import InvalidParameterError, StaleSolutionError
from conftest import make_section


@pytest.fixture(scope="module")
def rh3_assembly(mesh_r3, basis_K2_r3):
    data = germsolve.GermData3(mesh_r3, q=basis_K2_r3[0])
    sol = germsolve.solve_gauss3(data, tol=1e-10)
    return higgs.build_from_germ(data, sol)


@pytest.fixture(scope="module")
def rh4_assembly(mesh_r3, basis_K2_r3):
    L = bundles.make_line_bundle(mesh_r3, 0)
    theta1 = make_section(mesh_r3, L, 2, 1, 0.3 * basis_K2_r3[0].values)
    theta2 = make_section(mesh_r3, L, 2, -1, 0.5 * basis_K2_r3[1].values)
    data = germsolve.GermData4(mesh_r3, L, theta1, theta2)
    sol = germsolve.solve_gauss_ricci4(data, tol=1e-10)
    return higgs.build_from_germ(data, sol)


def test_refuses_unconverged(mesh_r3):
    data = germsolve.GermData3(mesh_r3)
    bad = germsolve.GermSolution(u=np.zeros(mesh_r3.n_vertices), converged=False)
    with pytest.raises(StaleSolutionError):
        higgs.build_from_germ(data, bad)


def test_phi_image_isotropic(rh3_assembly, rh4_assembly):
    assert rh3_assembly.phi_t_phi() == 0.0
    assert rh4_assembly.phi_t_phi() == 0.0


def test_structural_zero_blocks(rh4_assembly):
    assert ("Kinv", "K") not in rh4_assembly.blocks
    names = rh4_assembly.block_names
    idx = {nm: k for k, nm in enumerate(names)}
    for (r, c) in rh4_assembly.blocks:
        assert idx[r] < idx[c]


def test_pairing_duality_exact(rh4_assembly):
    b = rh4_assembly.blocks
    assert np.array_equal(b[("Kinv", "L")], -b[("Linv", "K")])
    assert np.array_equal(b[("Kinv", "Linv")], -b[("L", "K")])


def test_geodesic_assembly_splits(mesh_r3):
    data = germsolve.GermData3(mesh_r3)
    sol = germsolve.solve_gauss3(data, tol=1e-10)
    asm = higgs.build_from_germ(data, sol)
    assert asm.blocks == {}


def test_gauge_scale_halves_beta(rh4_assembly):
    out = higgs.gauge_scale(rh4_assembly, 2.0)
    for key, val in rh4_assembly.blocks.items():
        assert np.array_equal(out.blocks[key], val / 2.0)
    assert np.array_equal(out.phi, 2.0 * rh4_assembly.phi)


def test_gauge_scale_identity(rh3_assembly):
    out = higgs.gauge_scale(rh3_assembly, 1.0)
    for key, val in rh3_assembly.blocks.items():
        assert np.array_equal(out.blocks[key], val)


def test_gauge_roundtrip(rh4_assembly):
    back = higgs.gauge_scale(higgs.gauge_scale(rh4_assembly, 2.0), 0.5)
    for key, val in rh4_assembly.blocks.items():
        ref = np.max(np.abs(val))
        assert np.max(np.abs(back.blocks[key] - val)) <= 1e-12 * ref


def test_gauge_zero_rejected(rh3_assembly):
    with pytest.raises(InvalidParameterError):
        higgs.gauge_scale(rh3_assembly, 0.0)


def test_gauge_matrix_preserves_pairing(rh4_assembly):
    G = higgs.gauge_matrix(rh4_assembly, 2.0)
    Q = rh4_assembly.Q_V
    assert np.array_equal(G.T @ Q @ G, Q.astype(complex))


def test_lift_matrix_preserves_pairing(rh4_assembly):
    G = higgs.lift_matrix(rh4_assembly, 2.0)
    Q = rh4_assembly.Q_V
    assert np.array_equal(G.T @ Q @ G, Q.astype(complex))


def test_cx_lift_acts_on_beta(rh4_assembly):
    out = higgs.cx_lift(rh4_assembly, 2.0)
    beta1, beta2 = rh4_assembly.beta_blocks()
    n1, n2 = out.beta_blocks()
    assert np.array_equal(n1, 2.0 * beta1)
    assert np.array_equal(n2, beta2 / 2.0)
    assert np.array_equal(out.phi, rh4_assembly.phi)


def test_cx_lift_needs_rank_two_w(rh3_assembly):
    with pytest.raises(InvalidParameterError):
        higgs.cx_lift(rh3_assembly, 2.0)


def test_shear_gauge_shifts_by_coboundary(mesh_r3, rh3_assembly):
    rng = np.random.default_rng(3)
    psi = rng.standard_normal(mesh_r3.n_vertices) + 1j * rng.standard_normal(
        mesh_r3.n_vertices
    )
    out = higgs.shear_gauge(rh3_assembly, psi)
    d = bundles.dbar_operator(mesh_r3, None, -1, 0)
    expect = rh3_assembly.blocks[("W", "K")] + d(psi)
    assert np.allclose(out.blocks[("W", "K")], expect)
    assert np.array_equal(out.blocks[("Kinv", "W")], -out.blocks[("W", "K")])


def test_hodge_flag(mesh_r3, basis_K2_r3, rh4_assembly):
    assert not higgs.hodge_flag(rh4_assembly)
    L = bundles.make_line_bundle(mesh_r3, 0)
    theta2 = make_section(mesh_r3, L, 2, -1, 0.5 * basis_K2_r3[0].values)
    data = germsolve.GermData4(mesh_r3, L, None, theta2)
    sol = germsolve.solve_gauss_ricci4(data, tol=1e-10)
    asm = higgs.build_from_germ(data, sol)
    assert higgs.hodge_flag(asm)
    beta1, beta2 = asm.beta_blocks()
    assert beta1 is None
    assert beta2 is not None


def test_export_manifest(rh4_assembly):
    man = rh4_assembly.export_blocks()
    assert "L<-K" in man
    assert man["L<-K"]["bundle"] == (-1, 1)
    assert any(v["kind"] == "dbar" for v in man.values())


def test_constant_section_reads_at_faces(mesh_r3):
    vals = np.full(mesh_r3.n_vertices, 1.7 + 0.2j)
    face_vals = higgs.section_at_faces(mesh_r3, 0, 0, 0.0, vals)
    assert np.allclose(face_vals, 1.7 + 0.2j)
