import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blochhom import dirac
from blochhom.errors import InconsistentRank


def test_axisymmetric_cone_with_slope():
    th11 = 1j * np.array([1.0, 0.0])
    rep = dirac.classify_q2(th11, -th11, np.array([0.0, 1.0]) + 0j, 1.0, 1.0, 0.0)
    assert rep.kind == dirac.AXISYM_DIRAC
    assert rep.isocontour == "circular"
    assert rep.slope == pytest.approx(np.linalg.norm(th11) / 1.0)


def test_blunted_axisymmetric_gap():
    rep = dirac.classify_q2(np.zeros(2), np.zeros(2), np.array([1.0, 1j]), 1.0, 1.0, 0.7)
    assert rep.kind == dirac.BLUNTED
    assert rep.isocontour == "circular"
    assert rep.gap == pytest.approx(0.7)


def test_apex_inputs_exclude_axisymmetric_kinds():
    # real coupling at an apex: no axisymmetric cone nor axisymmetric blunting
    rep = dirac.classify_q2(np.zeros(2), np.zeros(2), np.array([1.0, 0.4]) + 0j,
                            1.0, 1.0, 0.5)
    assert rep.kind not in (dirac.AXISYM_DIRAC,)
    assert rep.isocontour != "circular"


def test_tilted_and_tilted_blunted():
    s = 1j * np.array([0.5, 0.0])
    rep = dirac.classify_q2(s, s, np.array([1.0, 1j]), 1.0, 1.0, 0.4)
    assert rep.kind == dirac.TILTED_BLUNTED
    rep = dirac.classify_q2(1j * np.array([1.0, 0]), 1j * np.array([0.5, 0]),
                            np.array([0.0, 0.8]) + 0j, 1.0, 1.0, 0.0)
    assert rep.kind == dirac.TILTED


def test_q3_zim_group_speed():
    rep = dirac.classify_q3(np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                            1.0, 1.0, 1.0, 0.0, omega_n1=1.5, ks_origin=True)
    assert rep.kind == dirac.ZIM
    assert rep.slope == pytest.approx(1.0)
    assert "0.333" in rep.notes


def test_q3_partial_rank_inconsistency():
    with pytest.raises(InconsistentRank):
        dirac.classify_q3(np.array([0.5, 0.0]), np.array([1.0, 0]), np.array([0, 1.0]),
                          1.0, 1.0, 1.0, gamma=0.8)


def test_q3_flat_triple():
    rep = dirac.classify_q3(np.zeros(2), np.zeros(2), np.zeros(2), 1, 1, 1, 0.0)
    assert rep.kind == dirac.NONCONICAL


def test_q3_gamma_pair_with_sheet():
    rep = dirac.classify_q3(np.zeros(2), np.array([1.0, 0.1]), np.array([-0.2, 0.9]),
                            1.0, 1.2, 0.8, gamma=0.5)
    assert rep.kind == dirac.BLUNTED
    assert "sheet" in rep.notes


def test_d3_invariance_direction():
    re, im = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    rep = dirac.classify_q2(np.zeros(3), np.zeros(3), re + 1j * im, 1.0, 1.0, 0.6, d=3)
    assert rep.kind == dirac.BLUNTED
    assert "0.0, 0.0, 1.0" in rep.notes  # Re x Im direction


def test_d3_hyper_cone():
    th11 = 1j * np.array([1.0, 0, 0])
    th12 = np.array([0, 1.0, 0]) + 1j * np.array([0, 0, 1.0])
    rep = dirac.classify_q2(th11, -th11, th12, 1.0, 1.0, 0.0, d=3)
    assert rep.kind == dirac.HYPER
    assert rep.slope == pytest.approx(1.0)


@given(st.floats(0.1, 10.0), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_scaling_invariance(cscale, seed):
    rng = np.random.default_rng(seed)
    th11 = 1j * rng.normal(size=2)
    th22 = 1j * rng.normal(size=2)
    th12 = rng.normal(size=2) + 1j * rng.normal(size=2)
    r1, r2 = rng.uniform(0.5, 2.0, 2)
    g = rng.normal()
    khat = np.array([0.6, 0.8])
    base = dirac.classify_q2(th11, th22, th12, r1, r2, g)
    scaled = dirac.classify_q2(cscale * th11, cscale * th22, cscale * th12,
                               cscale * r1, cscale * r2, g)
    assert base.kind == scaled.kind
    w1 = dirac.closed_form_q2(th11, th22, th12, r1, r2, g, khat, 0.03)
    w2 = dirac.closed_form_q2(cscale * th11, cscale * th22, cscale * th12,
                              cscale * r1, cscale * r2, g, khat, 0.03)
    np.testing.assert_allclose(w1, w2, atol=1e-12 * max(1.0, np.abs(w1).max()))


def test_classifier_matches_gep_leading_dispersion(kagome_mesh):
    # closed forms against the eigenvalue route on actual lattice couplings
    import blochhom.bloch as b
    import blochhom.cells as c
    import blochhom.effective as e

    lat = kagome_mesh.lattice
    C = lat.kpoint_cartesian(np.array([np.pi / 3, np.pi / np.sqrt(3)]))
    ops = b.assemble(kagome_mesh, b.MaterialFields(1.0, 1.0), C)
    pairs = b.solve_bands(ops, 2)
    ctx = c.cluster_context(ops, pairs[:2])
    th = e.compute_theta0(ctx)
    eps = 0.04
    gam = (ctx.lambdas[0] - ctx.lambdas[1]) / eps
    rng = np.random.default_rng(11)
    for _ in range(20):
        khat = rng.normal(size=2)
        khat /= np.linalg.norm(khat)
        cf = dirac.closed_form_q2(th[0, 0], th[1, 1], th[0, 1], *ctx.rho0, gam,
                                  khat, eps, lambda0=ctx.lambda0)
        T = np.zeros((2, 2, 2), complex)
        T[0, 0], T[1, 1], T[0, 1], T[1, 0] = th[0, 0], th[1, 1], th[0, 1], th[1, 0]
        gp = dirac.gep_omega2(T, ctx.rho0, gam, khat, eps, lambda0=ctx.lambda0)
        np.testing.assert_allclose(np.sort(cf), np.sort(gp), rtol=1e-10)
