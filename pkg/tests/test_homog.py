import numpy as np
import pytest

from blochhom import cells as c
from blochhom import effective as e
from blochhom import homog as h
from blochhom.errors import AmbiguousScaling, OnBranch, OrderUnavailable


def synthetic_tensors(Q=2, gamma=0.0, lambda0=2.0, eps=0.05, seed=0, trivial_A=False):
    rng = np.random.default_rng(seed)
    th = np.zeros((Q, Q, 2), dtype=complex)
    for p in range(Q):
        th[p, p] = 0.0 if trivial_A else 1j * rng.normal(size=2)
        for q in range(p + 1, Q):
            v = (0.0 if trivial_A else 1.0) * (rng.normal(size=2) + 1j * rng.normal(size=2))
            th[p, q], th[q, p] = v, -np.conj(v)
    mu = np.zeros((Q, Q, 2, 2), dtype=complex)
    for p in range(Q):
        for q in range(Q):
            s = rng.normal(size=(2, 2))
            mu[p, q] = 0.5 * (s + s.T)
    mu = 0.5 * (mu + np.conj(np.swapaxes(mu, 0, 1)))
    lambdas = lambda0 - eps * gamma * np.arange(Q)
    return e.EffectiveTensors(rho0=np.full(Q, 1.0), theta0=th, mu0=mu,
                              lambdas=lambdas, lambda0=lambda0)


def test_scaling_invariants():
    s = h.SpectralScaling(0.1, np.array([1.0, 0]), sigma_check=1, w2_check=0.3)
    assert s.omega2(2.0) == pytest.approx(2.03)
    with pytest.raises(ValueError):
        h.SpectralScaling(0.1, np.array([1.0, 0]), sigma_check=1, sigma_hat=1)
    with pytest.raises(ValueError):
        h.SpectralScaling(0.1, np.array([1.0, 0]))


def test_classify_simple_tracks(kagome_interior, kagome_gamma):
    ops, pairs = kagome_interior
    ctx = c.cluster_context(ops, [pairs[0]])
    _, T = e.expand_cluster(ctx, order=1)
    reg, sc = h.classify(T, np.array([1.0, 0.4]), eps=0.05)
    assert reg.variant == h.SIMPLE_THETA_NONZERO
    assert abs(sc.sigma_check) == 1

    opsA, pairsA = kagome_gamma
    ctxA = c.cluster_context(opsA, [pairsA[1]])
    _, TA = e.expand_cluster(ctxA, order=1)
    regA, scA = h.classify(TA, np.array([1.0, 0.4]), eps=0.05)
    assert regA.variant == h.SIMPLE_THETA_ZERO
    assert abs(scA.sigma_hat) == 1


def test_classify_with_source_scaling_bands():
    T = synthetic_tensors(Q=1)
    khat = np.array([1.0, 0.0])
    _, sc = h.classify(T, khat, eps=0.01, omega2=T.lambda0 + 0.01 * 0.5, source=True)
    assert sc.sigma_check == 1 and sc.w2_check == pytest.approx(0.5)
    _, sc = h.classify(T, khat, eps=0.01, omega2=T.lambda0 - 1e-4 * 0.3, source=True)
    assert sc.sigma_hat == -1
    edge = 0.01**1.5 * max(abs(T.lambda0), 1.0)
    with pytest.raises(AmbiguousScaling):
        h.classify(T, khat, eps=0.01, omega2=T.lambda0 + edge, source=True)


def test_classify_repeated_variants():
    Tfull = synthetic_tensors(Q=2, gamma=0.0, seed=1)
    reg, _ = h.classify(Tfull, np.array([1.0, 0.3]), eps=0.01)
    assert reg.variant in (h.REPEATED_FULL, h.REPEATED_PARTIAL)
    Ttriv = synthetic_tensors(Q=2, gamma=0.0, trivial_A=True)
    reg, sc = h.classify(Ttriv, np.array([1.0, 0.3]), eps=0.01)
    assert reg.variant == h.REPEATED_TRIVIAL
    assert abs(sc.sigma_hat) == 1
    Tclu = synthetic_tensors(Q=2, gamma=3.0, seed=2)
    reg, _ = h.classify(Tclu, np.array([1.0, 0.3]), eps=0.01)
    assert reg.variant in (h.CLUSTER_FULL, h.CLUSTER_PARTIAL)


def test_dispersion_at_zero_offset_returns_origin():
    T = synthetic_tensors(Q=2, gamma=0.0, seed=3)
    dm = h.DispersionModel(T, np.array([0.6, 0.8]), order=0)
    w2 = dm.omega2(1e-12)[0]
    np.testing.assert_allclose(w2, T.lambda0, atol=1e-9)


def test_order_unavailable_for_clusters():
    T = synthetic_tensors(Q=2)
    with pytest.raises(OrderUnavailable):
        h.DispersionModel(T, np.array([1.0, 0.0]), order=2)


def test_rotation_diagonalizes_and_preserves_rho_orthogonality(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[2], pairs[3]], repeated=True)
    cs, T = e.expand_cluster(ctx, order=1, check=False)
    khat = np.array([0.9, 0.1])
    tau, P, Pbar, N0 = h.rotate_basis(T, khat, eps=0.02)
    mats = e.build_matrices(T, khat, eps=0.02)
    Ar = P.conj().T @ mats.Agamma @ P
    off = Ar - np.diag(np.diag(Ar))
    assert np.abs(off).max() < 1e-10 * (np.abs(Ar).max() + 1e-300)
    ctx2, cs2 = h.rotate_cluster(ctx, cs, P)
    for i in range(2):
        for j in range(i):
            assert abs(ops.ip(ctx2.pairs[i].vec, ctx2.pairs[j].vec, "Mrho")) < 1e-8


def test_rotation_identity_when_already_diagonal():
    T = synthetic_tensors(Q=2, trivial_A=True, seed=4)
    T.theta0[0, 0] = 1j * np.array([1.0, 0.0])
    T.theta0[1, 1] = 1j * np.array([0.0, 1.0])
    tau, P, _, _ = h.rotate_basis(T, np.array([1.0, 0.0]), eps=0.01, use_gamma=False)
    # already diagonal: P is a permutation with unit-modulus entries
    mags = np.abs(P)
    assert np.allclose(np.sort(mags, axis=0)[-1], 1.0, atol=1e-10)
    assert np.allclose(np.sort(mags, axis=0)[:-1], 0.0, atol=1e-10)


def test_effective_solve_zero_source_is_zero():
    T = synthetic_tensors(Q=2, seed=5)
    khat = np.array([0.8, 0.6])
    reg, _ = h.classify(T, khat, eps=0.05)
    mats = e.build_matrices(T, khat, eps=0.05)
    proj = e.SourceProjections(f0=np.zeros(2, complex), f_chi1=np.zeros((2, 2), complex))
    sc = h.SpectralScaling(0.05, khat, sigma_check=1, w2_check=0.7)
    sol = h.effective_solve(reg, mats, proj, sc)
    assert np.abs(sol.u0).max() == 0 and np.abs(sol.u1).max() < 1e-14
    assert np.abs(sol.u2).max() < 1e-14


def test_first_order_truncation_consistency():
    T = synthetic_tensors(Q=2, seed=6)
    khat = np.array([1.0, 0.2])
    reg, _ = h.classify(T, khat, eps=1e-7)
    mats = e.build_matrices(T, khat, eps=1e-7)
    proj = e.SourceProjections(f0=np.array([1.0 + 0.3j, -0.2j]),
                               f_chi1=np.zeros((2, 2), complex))
    sc = h.SpectralScaling(1e-7, khat, sigma_check=1, w2_check=0.4)
    lead = h.effective_solve(reg, mats, proj, sc)
    op = h.first_order_operator(mats, sc)
    v = np.linalg.solve(op, proj.f0 + sc.eps * proj.f1(khat))
    np.testing.assert_allclose(v * sc.eps, lead.u1, rtol=1e-5)


def test_on_branch_detection():
    T = synthetic_tensors(Q=1, trivial_A=True, seed=7)
    khat = np.array([1.0, 0.0])
    mats = e.build_matrices(T, khat, eps=0.05)
    reg, _ = h.classify(T, khat, eps=0.05)
    proj = e.SourceProjections(f0=np.array([1.0 + 0j]), f_chi1=np.zeros((1, 2), complex))
    b_on = -mats.B0[0, 0].real / T.rho0[0]  # lands exactly on the approximated branch
    sc = h.SpectralScaling(0.05, khat, sigma_hat=int(np.sign(b_on)) or 1,
                           w2_hat=abs(b_on))
    with pytest.raises(OnBranch):
        h.effective_solve(reg, mats, proj, sc)


def test_cluster_degeneracy_limit_matches_repeated():
    base = synthetic_tensors(Q=2, gamma=0.0, seed=8)
    khat = np.array([0.7, 0.7])
    dm0 = h.DispersionModel(base, khat, order=0)
    tiny = synthetic_tensors(Q=2, gamma=1e-6, seed=8)
    reg, _ = h.classify(tiny, khat, eps=0.05)
    dm1 = h.DispersionModel(tiny, khat, order=0, regime=reg)
    w0, w1 = dm0.omega2(0.05)[0], dm1.omega2(0.05)[0]
    np.testing.assert_allclose(np.sort(w0), np.sort(w1), atol=2e-6)


def test_apex_quartic_model_is_even(kagome_gamma):
    ops, pairs = kagome_gamma
    ctx = c.cluster_context(ops, [pairs[1]])
    _, T = e.expand_cluster(ctx, order=2)
    khat = np.array([0.6, 0.8])
    dm_p = h.DispersionModel(T, khat, order=2)
    dm_m = h.DispersionModel(T, -khat, order=2)
    for eps in (0.02, 0.1):
        a, bb = dm_p.omega2(eps)[0, 0], dm_m.omega2(eps)[0, 0]
        assert abs(a - bb) <= 1e-12 * abs(a)


def test_group_velocity_consistency(kagome_interior):
    ops, pairs = kagome_interior
    ctx = c.cluster_context(ops, [pairs[0]])
    _, T = e.expand_cluster(ctx, order=1)
    khat = np.array([1.0, 0.0])
    dm = h.DispersionModel(T, khat, order=0)
    cg = dm.group_velocity(0.01)[0]
    # finite-difference the model frequency in cartesian k
    w = lambda kv: np.sqrt(h.DispersionModel(T, kv / np.linalg.norm(kv), order=0)
                           .omega2(np.linalg.norm(kv))[0, 0])
    hstep = 1e-6
    base = 0.01 * khat
    fd = [(w(base + hstep * np.eye(2)[i]) - w(base - hstep * np.eye(2)[i])) / (2 * hstep)
          for i in range(2)]
    np.testing.assert_allclose(cg, fd, rtol=1e-4, atol=1e-8)


def test_partial_rank_dispersion_matches_closed_forms():
    # three-branch crossing in the apex gauge: invariant sheet plus a cone pair
    from blochhom import dirac

    rng = np.random.default_rng(12)
    t13, t23 = rng.normal(size=2), rng.normal(size=2)
    th = np.zeros((3, 3, 2), dtype=complex)
    th[0, 2], th[2, 0] = t13, -t13
    th[1, 2], th[2, 1] = t23, -t23
    T = e.EffectiveTensors(rho0=np.ones(3), theta0=th,
                           mu0=np.zeros((3, 3, 2, 2), dtype=complex),
                           lambdas=np.full(3, 2.0), lambda0=2.0)
    khat = np.array([0.8, -0.6])
    reg, _ = h.classify(T, khat, eps=0.03)
    assert reg.variant == h.REPEATED_PARTIAL
    assert reg.N0 >= 1 and reg.Pbar is not None
    dm = h.DispersionModel(T, khat, order=0, regime=reg)
    w = np.sort(dm.omega2(0.03)[0])
    cf = dirac.closed_form_q3(np.zeros(2), t13, t23, 1.0, 1.0, 1.0, 0.0, khat, 0.03,
                              lambda0=2.0)
    np.testing.assert_allclose(w, np.sort(cf), atol=1e-12)
