import numpy as np
import pytest

from blochhom import cells as c
from blochhom import effective as e
from blochhom import meshing as m
from blochhom import reference as r
from blochhom import response as resp
from blochhom.bloch import MaterialFields, assemble, solve_bands

UNIT = MaterialFields(1.0, 1.0)


@pytest.fixture(scope="module")
def coarse_kagome():
    return m.generate_mesh(m.kagome_spec(h_max=0.22))


def test_tiling_welds_area_exactly(coarse_kagome):
    dom = r.build_tiling(coarse_kagome, 3)
    mats = r.assemble_tiled(dom, 1.0, 1.0, which=("M1",))
    assert abs(mats["M1"].sum() - 36 * coarse_kagome.solid_area) < 1e-8


def test_zero_source_zero_field(coarse_kagome):
    solver = r.ForcedReferenceSolver(coarse_kagome, UNIT, 3, omega2=3.0)
    u = solver.solve(np.zeros(solver.dom.n_global))
    assert np.abs(u).max() == 0.0


def test_gap_field_decays_toward_truncation(coarse_kagome):
    lam2 = solve_bands(assemble(coarse_kagome, UNIT,
                                coarse_kagome.lattice.kpoint([0, 0])), 2)[1].lam
    eps = 0.5
    src = resp.build_dipole_source(coarse_kagome, epsilon=eps)
    solver = r.ForcedReferenceSolver(coarse_kagome, UNIT, 10, omega2=lam2 + eps**2)
    dom = solver.dom
    u = solver.solve(src.phi_nodal[dom.base_of] * src.physical_envelope(dom.nodes))
    xi = np.abs(coarse_kagome.lattice.contravariant_x(dom.nodes))
    near_hull = (xi.max(axis=1) > 9.2)
    assert near_hull.sum() > 0
    assert np.abs(u[near_hull]).max() <= 1e-3 * np.abs(u).max()


def test_truncation_self_convergence(coarse_kagome):
    lam2 = solve_bands(assemble(coarse_kagome, UNIT,
                                coarse_kagome.lattice.kpoint([0, 0])), 2)[1].lam
    eps = 0.4
    src = resp.build_dipole_source(coarse_kagome, epsilon=eps)
    vals = {}
    for L in (5, 8):
        solver = r.ForcedReferenceSolver(coarse_kagome, UNIT, L, omega2=lam2 + eps**2)
        dom = solver.dom
        u = solver.solve(src.phi_nodal[dom.base_of] * src.physical_envelope(dom.nodes))
        ids = r.sample_line(dom, [0.0, 1.0], 0.5, band=0.1, span=3.0)
        order = np.lexsort(dom.nodes[ids].T)
        vals[L] = u[ids][order]
    n = min(len(vals[5]), len(vals[8]))
    drift = np.abs(vals[5][:n] - vals[8][:n]).max() / np.abs(vals[8][:n]).max()
    assert drift < 0.01


def test_sample_line_is_sorted_and_banded(coarse_kagome):
    dom = r.build_tiling(coarse_kagome, 3)
    ids = r.sample_line(dom, [0.0, 1.0], 1.5, band=0.08, span=4.0)
    pts = dom.nodes[ids]
    assert (np.abs(pts[:, 1] - 1.5) <= 0.08).all()
    assert (np.diff(pts[:, 0]) >= 0).all()
    assert (np.abs(pts[:, 0]) <= 4.0).all()


def test_outer_nodes_are_dirichlet(coarse_kagome):
    dom = r.build_tiling(coarse_kagome, 2)
    assert dom.outer_nodes.size > 0
    assert not np.intersect1d(dom.outer_nodes, dom.free).size
