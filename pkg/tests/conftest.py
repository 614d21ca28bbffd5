"""Shared coarse meshes and operator bundles (session-scoped, immutable)."""

import numpy as np
import pytest

from blochhom import meshing
from blochhom.bloch import MaterialFields, assemble, solve_bands

UNIT = MaterialFields(1.0, 1.0)


@pytest.fixture(scope="session")
def empty_mesh():
    return meshing.generate_mesh(meshing.empty_cell_spec(h_max=0.25, order=2))


@pytest.fixture(scope="session")
def kagome_mesh():
    return meshing.generate_mesh(meshing.kagome_spec(h_max=0.18, order=2))


@pytest.fixture(scope="session")
def pinned_mesh():
    return meshing.generate_mesh(meshing.pinned_square_spec(h_max=0.13, order=2))


@pytest.fixture(scope="session")
def empty_gamma(empty_mesh):
    ops = assemble(empty_mesh, UNIT, empty_mesh.lattice.kpoint([0.0, 0.0]))
    return ops, solve_bands(ops, 3)


@pytest.fixture(scope="session")
def kagome_gamma(kagome_mesh):
    ops = assemble(kagome_mesh, UNIT, kagome_mesh.lattice.kpoint([0.0, 0.0]))
    return ops, solve_bands(ops, 4)


@pytest.fixture(scope="session")
def kagome_interior(kagome_mesh):
    lat = kagome_mesh.lattice
    C = lat.kpoint_cartesian(np.array([np.pi / 3.0, np.pi / np.sqrt(3.0)]))
    M = lat.kpoint(0.4125 * np.asarray(C.components))
    ops = assemble(kagome_mesh, UNIT, M)
    return ops, solve_bands(ops, 3)
