"""Shared meshes and holomorphic bases (session scoped, they are the
expensive part of every test)."""

import numpy as np
import pytest

from eqmin import bundles, hypmesh


@pytest.fixture(scope="session")
def mesh_r2():
    return hypmesh.build_surface(2, 2)


@pytest.fixture(scope="session")
def mesh_r3():
    return hypmesh.build_surface(2, 3)


@pytest.fixture(scope="session")
def mesh_r4():
    return hypmesh.build_surface(2, 4)


@pytest.fixture(scope="session")
def basis_K2_r3(mesh_r3):
    dbar = bundles.dbar_operator(mesh_r3, None, 2, 0)
    return bundles.holomorphic_basis(dbar, expected_dim=3)


@pytest.fixture(scope="session")
def L1_r4(mesh_r4):
    return bundles.make_line_bundle(mesh_r4, 1)


@pytest.fixture(scope="session")
def basis_K2L_r4(mesh_r4, L1_r4):
    dbar = bundles.dbar_operator(mesh_r4, L1_r4, 2, 1)
    return bundles.holomorphic_basis(dbar, expected_dim=4)


@pytest.fixture(scope="session")
def basis_K2Linv_r4(mesh_r4, L1_r4):
    dbar = bundles.dbar_operator(mesh_r4, L1_r4, 2, -1)
    return bundles.holomorphic_basis(dbar, expected_dim=2)


def make_section(mesh, L, m, n, values):
    """DiscreteSection with its dbar residual attached."""
    dbar = bundles.dbar_operator(mesh, L, m, n)
    vals = np.asarray(values, dtype=complex)
    l = 0 if L is None else L.degree
    return bundles.DiscreteSection((m, n), vals, degree_l=l, dbar_residual=dbar(vals))
