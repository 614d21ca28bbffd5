import numpy as np
import pytest

from blochhom import cells as c
from blochhom import effective as e
from blochhom.errors import SolvabilityViolation


def test_homogeneous_cell_functions_vanish(empty_gamma):
    ops, pairs = empty_gamma
    ctx = c.cluster_context(ops, [pairs[0]])
    cs, T = e.expand_cluster(ctx, order=2)
    assert np.abs(cs.chi1).max() < 1e-10
    assert np.abs(cs.chi2).max() < 1e-10
    assert np.abs(cs.chi3).max() < 1e-10


def test_zero_rhs_gives_zero(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    g = ctx.solver().solve(np.zeros(ops.nfree, dtype=complex), member=0)
    assert np.abs(g).max() < 1e-12


def test_modal_forcing_violates_solvability(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    rhs = ops.Mrho @ pairs[1].vec
    with pytest.raises(SolvabilityViolation):
        ctx.solver().solve(rhs, member=0)


def test_projector_idempotence(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    th0 = e.compute_theta0(ctx)
    chi = c.solve_chi1(ctx, th0)[0, 0]
    shifted = chi + 0.37j * pairs[1].vec
    back = c.project_zero_mean(ctx, shifted)
    np.testing.assert_allclose(back, chi, atol=1e-10)


def test_cell_functions_zero_rho_mean(kagome_interior):
    ops, pairs = kagome_interior
    ctx = c.cluster_context(ops, [pairs[0]])
    cs, T = e.expand_cluster(ctx, order=2)
    for field in (cs.chi1[0, 0], cs.chi2[0, 1, 1], cs.chi3[0, 0, 1]):
        assert abs(ops.ip(field, pairs[0].vec, "Mrho")) < 1e-8 * (np.linalg.norm(field) + 1e-300)


def test_cluster_chi1_all_members(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[2], pairs[3]])  # nearly degenerate pair
    th0 = e.compute_theta0(ctx)
    chi = c.solve_chi1(ctx, th0)
    assert chi.shape[:2] == (2, 2)
    for q in range(2):
        for s in range(2):
            assert abs(ops.ip(chi[q, 0], pairs[2 + s].vec, "Mrho")) < 1e-8


def test_eta_linearity(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    rng = np.random.default_rng(0)
    f1 = rng.normal(size=ops.nfree) + 1j * rng.normal(size=ops.nfree)
    f2 = rng.normal(size=ops.nfree)
    e1, _ = c.solve_eta0(ctx, f1)
    e2, _ = c.solve_eta0(ctx, f2)
    e12, _ = c.solve_eta0(ctx, 2.0 * f1 + 3.0j * f2)
    np.testing.assert_allclose(2.0 * e1 + 3.0j * e2, e12, atol=1e-10 * np.abs(e12).max())


def test_modal_source_gives_zero_eta(kagome_gamma):
    # rho = 1, so f = phi_n is a pure rho-weighted modal forcing
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    eta, _ = c.solve_eta0(ctx, pairs[1].vec)
    assert np.abs(eta).max() < 1e-10


def test_gauge_covariance_chi1(kagome_interior):
    from blochhom.bloch import EigenPair
    ops, pairs = kagome_interior
    p = pairs[0]
    ctx = c.cluster_context(ops, [p])
    chi = c.solve_chi1(ctx, e.compute_theta0(ctx))
    rot = EigenPair(lam=p.lam, vec=p.vec * np.exp(0.9j), k=p.k, n=p.n, ops=ops)
    ctx2 = c.cluster_context(ops, [rot])
    chi2 = c.solve_chi1(ctx2, e.compute_theta0(ctx2))
    np.testing.assert_allclose(chi2, chi * np.exp(0.9j), atol=1e-12 * np.abs(chi).max())


def test_repeated_mode_uses_common_operator(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[2], pairs[3]], repeated=True)
    assert ctx.blocks() == [[0, 1]]
    assert ctx.block_lambda([0, 1]) == ctx.lambda0
    ctx2 = c.cluster_context(ops, [pairs[2], pairs[3]])
    assert len(ctx2.blocks()) == 2  # split pair solves per distinct eigenvalue


def test_cell_function_export_and_cache(tmp_path, kagome_interior):
    ops, pairs = kagome_interior
    ctx = c.cluster_context(ops, [pairs[0]])
    cs, T = e.expand_cluster(ctx, order=2)
    csv = c.export_cell_functions(ctx, cs)
    header = csv.splitlines()[0]
    assert "re_chi1_q1_1" in header and "im_chi2_q1_12" in header
    assert len(csv.splitlines()) == ops.mesh.n_nodes + 1

    cache = c.CellFunctionCache(tmp_path)
    assert cache.load(ctx) is None
    cache.store(ctx, cs)
    back = cache.load(ctx)
    np.testing.assert_array_equal(back.chi1, cs.chi1)
    np.testing.assert_array_equal(back.chi3, cs.chi3)


def test_tensor_json_export(kagome_interior):
    import json
    ops, pairs = kagome_interior
    ctx = c.cluster_context(ops, [pairs[0]])
    cs, T = e.expand_cluster(ctx, order=2)
    mats = e.build_matrices(T, np.array([1.0, 0.0]), eps=0.05)
    payload = json.loads(e.tensors_to_json(ctx, T, mats))
    assert payload["provenance"]["mesh_hash"]
    assert payload["theta0"]["im"][0][0][0] != 0.0
    assert payload["direction"]["diag_classes"]


def test_source_corrector_bundle(kagome_gamma):
    from blochhom import response as resp
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    th0 = e.compute_theta0(ctx)
    chi1 = c.solve_chi1(ctx, th0)
    phi = ops.lift(resp.build_dipole_source(ops.mesh, epsilon=0.25).phi_nodal)
    cs = c.solve_source_correctors(ctx, chi1, phi)
    assert cs.zeta0 is not None and cs.zeta1 is not None and cs.zeta2 is not None
    # zeta functions alias the unit-amplitude eta solves
    np.testing.assert_array_equal(cs.zeta0, cs.eta0[0])
