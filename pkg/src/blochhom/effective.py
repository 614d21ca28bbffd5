"""Effective coefficients of the local dispersion expansion.

The coupling tensors are exactly the solvability data of the cell-problem
cascade: theta0 closes the O(1/eps) averaged statement, mu0 the O(1), theta1
the O(eps), mu2 the O(eps^2).  They are computed from the same reduced
matrices as the cell solves, so the structural claims (theta0_qq imaginary,
skew-Hermitian coupling, realness of mu0/mu2 and of i*theta1) and the
divergence-theorem cross-check expressions hold to solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import cells as cell_mod
from .cells import CellFunctionSet, ClusterContext
from .errors import CrossCheckFailure, ToleranceViolation

STRUCT_TOL = 1e-8
CROSS_TOL = 1e-6


def sym_tensor(t, axes=None):
    """Average a tensor over all permutations of the given (trailing) axes."""
    axes = axes if axes is not None else tuple(range(t.ndim))
    perms = list(permutations(axes))
    fixed = [a for a in range(t.ndim) if a not in axes]
    out = np.zeros_like(t)
    for p in perms:
        order = list(range(t.ndim))
        for src, dst in zip(axes, p):
            order[src] = dst
        out += np.transpose(t, order)
    return out / len(perms)


@dataclass
class EffectiveTensors:
    rho0: np.ndarray          # (Q,)
    theta0: np.ndarray        # (Q, Q, d)
    mu0: np.ndarray = None    # (Q, Q, d, d)
    theta1: np.ndarray = None  # (Q, Q, d, d, d)
    mu2: np.ndarray = None    # (d, d, d, d), isolated track only
    lambdas: np.ndarray = None
    lambda0: float = None

    @property
    def Q(self):
        return self.rho0.shape[0]

    def gammas(self, eps):
        return (self.lambda0 - self.lambdas) / eps


def _pairings(ctx):
    """Quadratic-form helpers shared by every tensor formula."""
    ops = ctx.ops
    D = ops.D_ops(ctx.ks)
    vol = ops.volume

    def dform(u, m, v):
        """(G (grad_ks u)_m, v) for reduced vectors."""
        return complex(np.vdot(v, D[m] @ u)) / vol

    def gmass(u, v):
        return complex(np.vdot(v, ops.Mg @ u)) / vol

    def rmass(u, v):
        return complex(np.vdot(v, ops.Mrho @ u)) / vol

    return dform, gmass, rmass


def compute_theta0(ctx: ClusterContext) -> np.ndarray:
    dform, _, _ = _pairings(ctx)
    Q = ctx.Q
    th = np.zeros((Q, Q, 2), dtype=complex)
    for p in range(Q):
        for q in range(Q):
            for m in range(2):
                th[p, q, m] = (dform(ctx.pairs[q].vec, m, ctx.pairs[p].vec)
                               - np.conj(dform(ctx.pairs[p].vec, m, ctx.pairs[q].vec)))
    return th


def compute_mu0(ctx: ClusterContext, chi1) -> np.ndarray:
    dform, gmass, _ = _pairings(ctx)
    Q = ctx.Q
    mu = np.zeros((Q, Q, 2, 2), dtype=complex)
    for p in range(Q):
        phi_p = ctx.pairs[p].vec
        for q in range(Q):
            phi_q = ctx.pairs[q].vec
            raw = np.zeros((2, 2), dtype=complex)
            for m in range(2):
                for n in range(2):
                    raw[m, n] = dform(chi1[q, n], m, phi_p)
                    if m == n:
                        raw[m, n] += gmass(phi_q, phi_p)
                    raw[m, n] -= np.conj(dform(phi_p, n, chi1[q, m]))
            mu[p, q] = sym_tensor(raw)
    return mu


def compute_theta1(ctx: ClusterContext, chi1, chi2) -> np.ndarray:
    dform, gmass, _ = _pairings(ctx)
    Q = ctx.Q
    th1 = np.zeros((Q, Q, 2, 2, 2), dtype=complex)
    for p in range(Q):
        phi_p = ctx.pairs[p].vec
        for q in range(Q):
            raw = np.zeros((2, 2, 2), dtype=complex)
            for m in range(2):
                for n in range(2):
                    for r in range(2):
                        raw[m, n, r] = dform(chi2[q, n, r], m, phi_p)
                        if m == n:
                            raw[m, n, r] += gmass(chi1[q, r], phi_p)
                        raw[m, n, r] -= np.conj(dform(phi_p, m, chi2[q, n, r]))
            th1[p, q] = sym_tensor(raw)
    return th1


def compute_mu2(ctx: ClusterContext, chi2, chi3) -> np.ndarray:
    dform, gmass, _ = _pairings(ctx)
    phi = ctx.pairs[0].vec
    raw = np.zeros((2, 2, 2, 2), dtype=complex)
    for m in range(2):
        for n in range(2):
            for p in range(2):
                for r in range(2):
                    raw[m, n, p, r] = dform(chi3[n, p, r], m, phi)
                    if m == n:
                        raw[m, n, p, r] += gmass(chi2[0, p, r], phi)
                    raw[m, n, p, r] -= np.conj(dform(phi, m, chi3[n, p, r]))
    return sym_tensor(raw)


def check_structure(tensors: EffectiveTensors, raise_on_fail=True):
    """Structural claims: diagonal theta0 imaginary, coupling skew-Hermitian,
    isolated-track mu0/mu2 real and theta1 imaginary.

    Denominators carry a problem-scale floor (from mu0, which never vanishes)
    so tensors that are identically zero do not trip their own relative check.
    """
    t = tensors
    base = np.abs(t.mu0).max() if t.mu0 is not None else 1.0
    failures = {}
    scale = max(np.abs(t.theta0).max(), base)
    failures["theta0_diag_imag"] = max(
        np.abs(t.theta0[q, q].real).max() for q in range(t.Q)) / scale
    skew = max(np.abs(t.theta0[p, q] + np.conj(t.theta0[q, p])).max()
               for p in range(t.Q) for q in range(t.Q))
    failures["theta0_skew_hermitian"] = skew / scale
    if t.Q == 1:
        if t.mu0 is not None:
            failures["mu0_real"] = np.abs(t.mu0.imag).max() / max(np.abs(t.mu0).max(), 1e-300)
        if t.theta1 is not None:
            failures["theta1_imag"] = np.abs(t.theta1.real).max() / max(np.abs(t.theta1).max(), base)
        if t.mu2 is not None:
            failures["mu2_real"] = np.abs(t.mu2.imag).max() / max(np.abs(t.mu2).max(), base)
    bad = {k: v for k, v in failures.items() if v > STRUCT_TOL}
    if bad and raise_on_fail:
        name, val = max(bad.items(), key=lambda kv: kv[1])
        raise ToleranceViolation(f"claim {name} violated at level {val:.2e}")
    return failures


def compute_tensors(ctx: ClusterContext, cell_set: CellFunctionSet,
                    check=True) -> EffectiveTensors:
    """Assemble all effective tensors available from the given cell functions."""
    th0 = compute_theta0(ctx)
    mu0 = compute_mu0(ctx, cell_set.chi1) if cell_set.chi1 is not None else None
    th1 = (compute_theta1(ctx, cell_set.chi1, cell_set.chi2)
           if cell_set.chi2 is not None else None)
    mu2 = (compute_mu2(ctx, cell_set.chi2, cell_set.chi3)
           if cell_set.chi3 is not None else None)
    tensors = EffectiveTensors(rho0=ctx.rho0, theta0=th0, mu0=mu0, theta1=th1,
                               mu2=mu2, lambdas=ctx.lambdas, lambda0=ctx.lambda0)
    if check:
        check_structure(tensors)
    return tensors


def expand_cluster(ctx: ClusterContext, order: int = 2, want_chi3=None,
                   check=True) -> tuple:
    """Run the corrector cascade to the requested order.

    Order 1 solves chi1 (-> mu0), order 2 adds chi2 (-> theta1) and, on the
    isolated track, chi3 (-> mu2).  Returns (CellFunctionSet, EffectiveTensors).
    """
    cs = CellFunctionSet()
    th0 = compute_theta0(ctx)
    mu0 = th1 = mu2 = None
    if order >= 1:
        cs.chi1 = cell_mod.solve_chi1(ctx, th0)
        mu0 = compute_mu0(ctx, cs.chi1)
    if order >= 2:
        cs.chi2 = cell_mod.solve_chi2(ctx, cs.chi1, th0, mu0)
        th1 = compute_theta1(ctx, cs.chi1, cs.chi2)
        if want_chi3 is None:
            want_chi3 = ctx.Q == 1
        if want_chi3:
            cs.chi3 = cell_mod.solve_chi3(ctx, cs.chi1, cs.chi2, th0, mu0, th1)
            mu2 = compute_mu2(ctx, cs.chi2, cs.chi3)
    tensors = EffectiveTensors(rho0=ctx.rho0, theta0=th0, mu0=mu0, theta1=th1,
                               mu2=mu2, lambdas=ctx.lambdas, lambda0=ctx.lambda0)
    if check:
        check_structure(tensors)
    return cs, tensors


# ---------------------------------------------------------------------------
# divergence-theorem cross-checks
# ---------------------------------------------------------------------------

def _k_form(ctx, u, v):
    """(G grad_ks u . conj(grad_ks v), 1) via the Bloch stiffness at ks."""
    K = ctx.ops.K_at(ctx.ks)
    return complex(np.vdot(v, K @ u)) / ctx.ops.volume


def mu0_alternative(ctx: ClusterContext, chi1) -> np.ndarray:
    """mu0 via the divergence theorem: manifestly real on the isolated track."""
    dform, gmass, rmass = _pairings(ctx)
    Q = ctx.Q
    out = np.zeros((Q, Q, 2, 2), dtype=complex)
    for p in range(Q):
        phi_p = ctx.pairs[p].vec
        for q in range(Q):
            phi_q = ctx.pairs[q].vec
            raw = np.zeros((2, 2), dtype=complex)
            for m in range(2):
                for n in range(2):
                    raw[m, n] = (ctx.lambda_of(q) * rmass(chi1[q, m], chi1[p, n])
                                 - _k_form(ctx, chi1[q, m], chi1[p, n]))
                    if m == n:
                        raw[m, n] += gmass(phi_q, phi_p)
            out[p, q] = sym_tensor(raw)
    return out


def theta1_alternative(ctx: ClusterContext, chi1, rho0, theta0) -> np.ndarray:
    """theta1 via the divergence theorem (isolated track): manifestly imaginary."""
    dform, gmass, rmass = _pairings(ctx)
    phi = ctx.pairs[0].vec
    raw = np.zeros((2, 2, 2), dtype=complex)
    W = np.zeros((2, 2), dtype=complex)
    for n in range(2):
        for r in range(2):
            W[n, r] = rmass(chi1[0, n], chi1[0, r])
    W = sym_tensor(W)
    for m in range(2):
        for n in range(2):
            for r in range(2):
                s = complex(np.vdot(chi1[0, m], ctx.ops.D_ops(ctx.ks)[n] @ chi1[0, r])) \
                    / ctx.ops.volume
                raw[m, n, r] = np.conj(s) - s
                if m == n:
                    t3 = gmass(chi1[0, r], phi)
                    raw[m, n, r] += t3 - np.conj(t3)
                raw[m, n, r] += theta0[0, 0, m] * W[n, r] / rho0[0]
    return sym_tensor(raw)[None, None]


def mu2_alternative(ctx: ClusterContext, chi1, chi2, mu0, rho0) -> np.ndarray:
    """mu2 via the divergence theorem (isolated track): manifestly real."""
    dform, gmass, rmass = _pairings(ctx)
    lam = ctx.lambda0
    W = np.zeros((2, 2), dtype=complex)
    for n in range(2):
        for r in range(2):
            W[n, r] = rmass(chi1[0, n], chi1[0, r])
    W = sym_tensor(W)
    raw = np.zeros((2, 2, 2, 2), dtype=complex)
    for m in range(2):
        for n in range(2):
            for p in range(2):
                for r in range(2):
                    raw[m, n, p, r] = (-lam * rmass(chi2[0, m, n], chi2[0, p, r])
                                       + _k_form(ctx, chi2[0, m, n], chi2[0, p, r]))
                    if m == n:
                        raw[m, n, p, r] -= gmass(chi1[0, p], chi1[0, r])
                    raw[m, n, p, r] += mu0[0, 0, m, n] * W[p, r] / rho0[0]
    return sym_tensor(raw)


def cross_check_tensors(ctx: ClusterContext, cell_set: CellFunctionSet,
                        tensors: EffectiveTensors, raise_on_fail=True) -> dict:
    """Compare primary tensor expressions against the divergence-theorem forms."""
    report = {}
    base = np.abs(tensors.mu0).max() if tensors.mu0 is not None else 1.0

    def gap(a, b):
        return float(np.abs(a - b).max() / max(np.abs(a).max(), base))

    if tensors.mu0 is not None:
        report["mu0"] = gap(tensors.mu0, mu0_alternative(ctx, cell_set.chi1))
    if ctx.Q == 1 and tensors.theta1 is not None:
        report["theta1"] = gap(tensors.theta1,
                               theta1_alternative(ctx, cell_set.chi1, tensors.rho0,
                                                  tensors.theta0))
    if ctx.Q == 1 and tensors.mu2 is not None:
        report["mu2"] = gap(tensors.mu2, mu2_alternative(
            ctx, cell_set.chi1, cell_set.chi2, tensors.mu0, tensors.rho0))
    if tensors.mu0 is not None:
        # B0 Hermiticity re-derivation: mu0_qp symmetric part conjugate-pairs
        herm = 0.0
        for p in range(ctx.Q):
            for q in range(ctx.Q):
                herm = max(herm, float(np.abs(tensors.mu0[p, q] - np.conj(tensors.mu0[q, p])).max()))
        report["B0_hermiticity"] = herm / (np.abs(tensors.mu0).max() + 1e-300)
    bad = {k: v for k, v in report.items() if v > CROSS_TOL}
    if bad and raise_on_fail:
        name, val = max(bad.items(), key=lambda kv: kv[1])
        raise CrossCheckFailure(f"{name} cross-check gap {val:.2e} exceeds {CROSS_TOL}")
    return report


# ---------------------------------------------------------------------------
# direction-resolved matrices and source projections
# ---------------------------------------------------------------------------

@dataclass
class EffectiveMatrices:
    khat: np.ndarray
    eps: float
    A0: np.ndarray           # (Q, Q)
    B0: np.ndarray
    A1: np.ndarray
    D: np.ndarray            # diagonal rho0
    Gamma: np.ndarray        # diagonal separations (zero for exact repeats)
    Agamma: np.ndarray
    Adot: np.ndarray         # O(1) part of the diagonal of A0
    Addot: np.ndarray        # (A0 - Adot) / eps
    diag_classes: tuple      # per-entry label in {'zero', 'eps', 'one'}


def contract(tensor, khat, power):
    """tensor : (i khat)^power over the trailing axes."""
    ik = 1j * np.asarray(khat, dtype=complex)
    out = np.asarray(tensor, dtype=complex)
    for _ in range(power):
        out = out @ ik
    return out


def build_matrices(tensors: EffectiveTensors, khat, eps, hermiticity_tol=1e-10) -> EffectiveMatrices:
    """Direction-resolved coefficient matrices with the scaling split of the
    diagonal of A0 into {0, O(eps), O(1)} classes."""
    khat = np.asarray(khat, dtype=float)
    if np.linalg.norm(khat) == 0:
        raise ValueError("direction khat must be nonzero")
    Q = tensors.Q
    A0 = contract(tensors.theta0, khat, 1)
    B0 = contract(tensors.mu0, khat, 2) if tensors.mu0 is not None else np.zeros((Q, Q), complex)
    A1 = (contract(tensors.theta1, khat, 3) if tensors.theta1 is not None
          else np.zeros((Q, Q), complex))
    D = np.diag(tensors.rho0)
    Gamma = np.diag(tensors.gammas(eps)) if tensors.lambdas is not None else np.zeros((Q, Q))
    Agamma = A0 + Gamma @ D

    # B0 inherits an O(separation) asymmetry when the cluster is not exactly
    # repeated; the Hermiticity gate widens accordingly
    spread = 0.0
    if tensors.lambdas is not None:
        spread = float(np.abs(tensors.lambdas - tensors.lambda0).max()
                       / max(abs(tensors.lambda0), 1.0))
    for name, M, tol in (("A0", A0, hermiticity_tol), ("Agamma", Agamma, hermiticity_tol),
                         ("B0", B0, hermiticity_tol + 10.0 * spread)):
        gapv = np.abs(M - M.conj().T).max()
        if gapv > tol * (np.abs(M).max() + 1e-300):
            raise ToleranceViolation(f"{name} not Hermitian at level {gapv:.2e}")

    scale = np.abs(A0).max() + 1e-300
    classes, Adot = [], np.zeros((Q, Q), dtype=complex)
    for q in range(Q):
        tau = A0[q, q]
        if abs(tau) <= 1e-8 * scale + 1e-12:
            classes.append("zero")
        elif abs(tau) <= eps * scale:
            classes.append("eps")
        else:
            classes.append("one")
            Adot[q, q] = tau
    Addot = (A0 - Adot) / eps
    return EffectiveMatrices(khat=khat, eps=eps, A0=A0, B0=B0, A1=A1, D=D,
                             Gamma=Gamma, Agamma=Agamma, Adot=Adot, Addot=Addot,
                             diag_classes=tuple(classes))


@dataclass
class SourceProjections:
    f0: np.ndarray          # (Q,) modal means <f>^{n_p}
    f_chi1: np.ndarray      # (Q, d) projections (f, chi1_p)
    f_chi2: np.ndarray = None   # (Q, d, d)
    eta_bracket: np.ndarray = None  # (d, d): second-order source tensor
    eta2_vec: np.ndarray = None     # (d,): linear-in-frequency source vector
    f_eta0: np.ndarray = None       # (Qbar,): (f, eta0_r) for the energy budget

    def f1(self, khat):
        """First-order source coefficients -(f, chi1_p) . (i khat)."""
        return -(self.f_chi1 @ (1j * np.asarray(khat, dtype=complex)))


def project_source(ctx: ClusterContext, cell_set: CellFunctionSet, f_reduced,
                   second_order=False) -> SourceProjections:
    """Modal and corrector projections of a source amplitude f in L2_p."""
    ops = ctx.ops
    Q = ctx.Q
    f0 = np.array([ops.ip(f_reduced, ctx.pairs[p].vec, "M1") for p in range(Q)])
    f_chi1 = np.zeros((Q, 2), dtype=complex)
    for p in range(Q):
        for m in range(2):
            f_chi1[p, m] = ops.ip(f_reduced, cell_set.chi1[p, m], "M1")
    proj = SourceProjections(f0=f0, f_chi1=f_chi1)
    if cell_set.chi2 is not None:
        f_chi2 = np.zeros((Q, 2, 2), dtype=complex)
        for p in range(Q):
            for m in range(2):
                for n in range(2):
                    f_chi2[p, m, n] = ops.ip(f_reduced, cell_set.chi2[p, m, n], "M1")
        proj.f_chi2 = f_chi2
    if cell_set.eta0 is not None:
        proj.f_eta0 = np.array([ops.ip(f_reduced, e, "M1") for e in cell_set.eta0])
    if second_order and ctx.Q == 1 and cell_set.eta1 is not None:
        proj.eta_bracket = eta_bracket_tensor(ctx, cell_set.eta0[0], cell_set.eta1)
        proj.eta2_vec = eta2_bracket_vector(ctx, cell_set.eta2)
    return proj


def eta_bracket_tensor(ctx: ClusterContext, eta0, eta1) -> np.ndarray:
    """<G {grad eta1 + eta0 I}> - (G {eta1 (x) conj grad phi}, 1), the
    quadratic-in-wavenumber source correction of the isolated track."""
    dform, gmass, _ = _pairings(ctx)
    phi = ctx.pairs[0].vec
    raw = np.zeros((2, 2), dtype=complex)
    for m in range(2):
        for n in range(2):
            raw[m, n] = dform(eta1[n], m, phi)
            if m == n:
                raw[m, n] += gmass(eta0, phi)
            raw[m, n] -= np.conj(dform(phi, n, eta1[m]))
    return sym_tensor(raw)


def eta2_bracket_vector(ctx: ClusterContext, eta2) -> np.ndarray:
    """<G grad eta2> - (G eta2, grad phi), the frequency-offset source vector."""
    dform, _, _ = _pairings(ctx)
    phi = ctx.pairs[0].vec
    out = np.zeros(2, dtype=complex)
    for m in range(2):
        out[m] = dform(eta2, m, phi) - np.conj(dform(phi, m, eta2))
    return out


# -- discrete cell-function identities ---------------------------------------

def identity_eta0_chi1(ctx: ClusterContext, cell_set: CellFunctionSet, f_reduced) -> dict:
    """(G eta0, grad phi_q) - <G grad eta0>^q  vs  (f, chi1_q), per member."""
    dform, _, _ = _pairings(ctx)
    ops = ctx.ops
    out = {}
    blocks = cell_set.eta0_blocks
    for r, block in enumerate(blocks):
        eta = cell_set.eta0[r]
        for q in block:
            phi = ctx.pairs[q].vec
            lhs = np.array([np.conj(dform(phi, m, eta)) - dform(eta, m, phi) for m in range(2)])
            rhs = np.array([ops.ip(f_reduced, cell_set.chi1[q, m], "M1") for m in range(2)])
            out[q] = (lhs, rhs)
    return out


def identity_eta2_chi1(ctx: ClusterContext, cell_set: CellFunctionSet) -> tuple:
    """(G eta2, grad phi) - <G grad eta2>  vs  (rho eta0, chi1)."""
    dform, _, rmass = _pairings(ctx)
    phi = ctx.pairs[0].vec
    eta2 = cell_set.eta2
    lhs = np.array([np.conj(dform(phi, m, eta2)) - dform(eta2, m, phi) for m in range(2)])
    rhs = np.array([rmass(cell_set.eta0[0], cell_set.chi1[0, m]) for m in range(2)])
    return lhs, rhs


def tensors_to_json(ctx: ClusterContext, tensors: EffectiveTensors,
                    matrices: EffectiveMatrices = None) -> str:
    """JSON export with provenance (mesh hash, gauge convention, tolerances)."""
    import json

    from .cells import mesh_hash

    def enc(arr):
        if arr is None:
            return None
        a = np.asarray(arr)
        return {"re": a.real.tolist(), "im": a.imag.tolist()}

    payload = {
        "provenance": {
            "mesh_hash": mesh_hash(ctx.ops.mesh),
            "ks_covariant": list(ctx.ks.components),
            "branches": [p.n for p in ctx.pairs],
            "gauge": "largest nodal value real positive",
            "structure_tol": STRUCT_TOL,
            "cross_check_tol": CROSS_TOL,
        },
        "lambda0": tensors.lambda0,
        "lambdas": tensors.lambdas.tolist() if tensors.lambdas is not None else None,
        "rho0": tensors.rho0.tolist(),
        "theta0": enc(tensors.theta0),
        "mu0": enc(tensors.mu0),
        "theta1": enc(tensors.theta1),
        "mu2": enc(tensors.mu2),
    }
    if matrices is not None:
        payload["direction"] = {
            "khat": matrices.khat.tolist(), "eps": matrices.eps,
            "A0": enc(matrices.A0), "B0": enc(matrices.B0), "A1": enc(matrices.A1),
            "Agamma": enc(matrices.Agamma), "diag_classes": list(matrices.diag_classes),
        }
    return json.dumps(payload, indent=1)


def identity_eta1_decomposition(ctx: ClusterContext, cell_set: CellFunctionSet,
                                f_reduced, tensors: EffectiveTensors) -> tuple:
    """The eta1 source bracket vs its chi-and-projection decomposition."""
    ops = ctx.ops
    _, _, rmass = _pairings(ctx)
    lhs = eta_bracket_tensor(ctx, cell_set.eta0[0], cell_set.eta1)
    f_mean = ops.ip(f_reduced, ctx.pairs[0].vec, "M1")
    W = np.zeros((2, 2), dtype=complex)
    for n in range(2):
        for r in range(2):
            W[n, r] = rmass(cell_set.chi1[0, n], cell_set.chi1[0, r])
    W = sym_tensor(W)
    f_chi2 = np.array([[ops.ip(f_reduced, cell_set.chi2[0, m, n], "M1") for n in range(2)]
                       for m in range(2)])
    re = np.array([rmass(cell_set.eta0[0], cell_set.chi1[0, m]) for m in range(2)])
    theta_term = np.zeros((2, 2), dtype=complex)
    for m in range(2):
        for n in range(2):
            theta_term[m, n] = tensors.theta0[0, 0, m] * re[n]
    rhs = f_chi2 + (f_mean / tensors.rho0[0]) * W + sym_tensor(theta_term) / tensors.rho0[0]
    return lhs, rhs
