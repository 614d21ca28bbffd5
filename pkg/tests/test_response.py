import numpy as np
import pytest

from blochhom import cells as c
from blochhom import effective as e
from blochhom import response as resp
from blochhom.errors import GapViolation

from blochhom.bloch import solve_forced_cell


@pytest.fixture(scope="module")
def gap_setup(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    cs, T = e.expand_cluster(ctx, order=2)
    src = resp.build_dipole_source(ops.mesh, epsilon=0.25)
    f_red = ops.lift(src.phi_nodal)
    cs.eta0, cs.eta0_blocks = c.solve_eta0(ctx, f_red)
    cs.zeta0 = cs.eta0[0]
    return ops, ctx, cs, T, src


def test_gaussian_envelope_properties(kagome_mesh):
    src = resp.build_dipole_source(kagome_mesh, epsilon=0.25)
    F0 = src.F(np.zeros((1, 2)))[0]
    assert F0.imag == 0 and F0.real > 0
    # decay below 1e-6 of the peak for |khat| a >= 4, i.e. |koff| >= 4 eps / a
    koff = np.array([[4.0 * 0.25, 0.0]])
    assert abs(src.F(koff)[0]) <= 1e-6 * abs(F0)
    assert src.label == "dipole-M8"
    np.testing.assert_allclose(src.x0, -0.25 * (kagome_mesh.lattice.basis[0]
                                                + kagome_mesh.lattice.basis[1]))


def test_dipole_zero_mean_over_full_cell(kagome_mesh):
    # each sine term integrates to zero over the period
    lat = kagome_mesh.lattice
    phi = resp.dipole_factor(8, lat)
    n = 400
    xi = (np.arange(n) + 0.5) / n
    X1, X2 = np.meshgrid(xi, xi, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1) @ lat.basis
    mean = phi(pts).mean()
    assert abs(mean) < 1e-10


def test_zero_source_zero_field(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    zero = resp.SourceSpec(ks=src.ks, epsilon=src.epsilon, a=src.a, x0=src.x0,
                           phi_nodal=np.zeros_like(src.phi_nodal), area_C=src.area_C)
    gm = resp.GapModel(ctx, cs, T, zero, T.lambda0 + 0.0625, kgrid=8)
    pts = ops.mesh.nodes[:10]
    snap = gm.effective_field(pts, 2)
    assert np.abs(snap.values).max() == 0.0


def test_gap_violation_detected(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    with pytest.raises(GapViolation):
        resp.GapModel(ctx, cs, T, src, T.lambda0 - 0.3, kgrid=16)


def test_quadrature_refinement_stable(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    omega2 = T.lambda0 + 0.0625
    pts = ops.mesh.nodes[:25] + ops.mesh.lattice.basis[0]
    bids = np.arange(25)
    a = resp.GapModel(ctx, cs, T, src, omega2, kgrid=64).asymptotic_field(
        pts, bids, 2, zeta0=cs.zeta0)
    bb = resp.GapModel(ctx, cs, T, src, omega2, kgrid=128).asymptotic_field(
        pts, bids, 2, zeta0=cs.zeta0)
    drift = np.abs(a.values - bb.values).max() / np.abs(bb.values).max()
    assert drift < 1e-3


def test_translation_covariance(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    lat = ops.mesh.lattice
    omega2 = T.lambda0 + 0.0625
    shift = lat.basis[0] + lat.basis[1]
    shifted = resp.SourceSpec(ks=src.ks, epsilon=src.epsilon, a=src.a,
                              x0=src.x0 + shift, phi_nodal=src.phi_nodal,
                              area_C=src.area_C)
    gm0 = resp.GapModel(ctx, cs, T, src, omega2, kgrid=32)
    gm1 = resp.GapModel(ctx, cs, T, shifted, omega2, kgrid=32)
    pts = ops.mesh.nodes[:20]
    bids = np.arange(20)
    s0 = gm0.asymptotic_field(pts, bids, 2, zeta0=cs.zeta0)
    s1 = gm1.asymptotic_field(pts + shift, bids, 2, zeta0=cs.zeta0)
    np.testing.assert_allclose(s0.values, s1.values,
                               atol=1e-8 * np.abs(s0.values).max())


def test_mean_coefficient_orders_differ_by_term(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    gm = resp.GapModel(ctx, cs, T, src, T.lambda0 + 0.0625, kgrid=8)
    u0, u1, u2 = (gm.mean_coefficients(p) for p in (0, 1, 2))
    np.testing.assert_allclose(u1 - u0, gm.Fc * gm.lin_chi / gm.denom, rtol=1e-12)
    extra = u2 - u1
    u0k = -(gm.c_phi * gm.Fc) / gm.denom
    expect = -(gm.Fc * (gm.quad_chi2 + (gm.c_phi / gm.rho0) * gm.quad_W)
               + u0k * gm.quart_mu2) / gm.denom
    np.testing.assert_allclose(extra, expect, rtol=1e-12)


def test_effective_matches_direct_projection(gap_setup):
    # order-2 mean coefficient against the rho-projection of the direct solve,
    # at wavenumber offsets inside the expansion's validity range
    ops, ctx, cs, T, src = gap_setup
    lat = ops.mesh.lattice
    omega2 = T.lambda0 + 0.0625
    gm = resp.GapModel(ctx, cs, T, src, omega2, kgrid=8)
    phi = ctx.pairs[0].vec
    for kof in (np.array([0.08, 0.03]), np.array([0.2, -0.1])):
        k = lat.kpoint_cartesian(kof)
        Fk = complex(src.F_over_C(kof[None])[0]) * src.area_C
        f_red = Fk * ops.lift(src.phi_nodal)
        u = solve_forced_cell(ops, k, omega2, f_red)
        direct = ops.ip(u, phi, "Mrho") / ops.ip(phi, phi, "Mrho").real
        denom = T.rho0[0] * (omega2 - T.lambda0) - kof @ T.mu0[0, 0].real @ kof
        ik = 1j * kof
        u0 = -(gm.c_phi * Fk) / denom
        u1 = Fk * (ik @ gm.c_chi1) / denom
        u2 = -(Fk * (np.einsum("d,de,e", ik, gm.c_chi2, ik)
                     + (gm.c_phi / gm.rho0) * np.einsum("d,de,e", ik, gm.W, ik))
               + u0 * np.einsum("abcd,a,b,c,d", gm.mu2, kof, kof, kof, kof)) / denom
        model = u0 + u1 + u2
        assert abs(direct - model) / abs(direct) < 1e-2


def test_energy_budget(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    rows = resp.energy_check(ctx, cs, T, src, np.array([0.6, 0.8]), [0.05, 0.1, 0.2])
    res = np.array([[row["residuals"][p] for row in rows] for p in (0, 1, 2)])
    # residuals decay with eps and improve with order at the smallest offset
    assert (res[:, 0] < res[:, 2]).all()
    assert res[2, 0] < res[0, 0]
    # gap drive is purely reactive: the budget has no real (radiated) part
    assert abs(rows[0]["lhs"].real) < 1e-10 * abs(rows[0]["lhs"])


def test_energy_zero_source(gap_setup):
    ops, ctx, cs, T, src = gap_setup
    zero = resp.SourceSpec(ks=src.ks, epsilon=0.1, a=src.a, x0=src.x0,
                           phi_nodal=np.zeros_like(src.phi_nodal), area_C=src.area_C)
    csz = c.CellFunctionSet(chi1=cs.chi1, chi2=cs.chi2, chi3=cs.chi3)
    csz.eta0, csz.eta0_blocks = c.solve_eta0(ctx, ops.lift(zero.phi_nodal))
    csz.zeta0 = csz.eta0[0]
    rows = resp.energy_check(ctx, csz, T, zero, np.array([1.0, 0.0]), [0.1])
    assert abs(rows[0]["lhs"]) == 0.0
