"""Spectral-regime classification and synthesis of the effective models.

Given the effective tensors of a cluster at (ks, lambda_n0), this module
decides which expansion track applies in a perturbation direction khat:

* isolated eigenvalue with a significant first-order coupling (linear track),
* isolated eigenvalue with trivial coupling (quadratic track, apexes),
* repeated eigenvalue with full / near-trivial / partial rank coupling,
* cluster of nearby eigenvalues through the separation-penalized matrix.

It then produces local dispersion approximations (polynomial for the
isolated track, generalized eigenvalue problems otherwise) and the forced
effective solutions (u0, u1, u2) of the matching order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .effective import EffectiveMatrices, EffectiveTensors, SourceProjections, \
    build_matrices, contract
from .errors import AmbiguousScaling, DegenerateGEP, OnBranch, OrderUnavailable

RANK_TOL = 1e-8
COND_LIMIT = 1e10
CLUSTER_WIDTH = 5.0  # branches within eps * lambda0 * width join a cluster


@dataclass
class SpectralScaling:
    """Frequency-offset bookkeeping: omega^2 = lambda0 + eps*sc*wc2 + eps^2*sh*wh2."""

    eps: float
    khat: np.ndarray
    sigma_check: int = 0
    sigma_hat: int = 0
    w2_check: float = 0.0
    w2_hat: float = 0.0

    def __post_init__(self):
        if self.sigma_check * self.sigma_hat != 0 or abs(self.sigma_check + self.sigma_hat) != 1:
            raise ValueError("exactly one of sigma_check, sigma_hat must be +-1")

    def omega2(self, lambda0):
        return (lambda0 + self.eps * self.sigma_check * self.w2_check
                + self.eps**2 * self.sigma_hat * self.w2_hat)

    @property
    def a_check(self):
        """Signed linear offset sigma_check * w2_check."""
        return self.sigma_check * self.w2_check

    @property
    def b_hat(self):
        return self.sigma_hat * self.w2_hat


@dataclass
class Regime:
    variant: str
    Q: int
    N0: int
    N: int
    khat: np.ndarray
    eps: float
    taus: np.ndarray
    P: np.ndarray
    Pbar: np.ndarray = None
    is_cluster: bool = False


SIMPLE_THETA_NONZERO = "SimpleThetaNonzero"
SIMPLE_THETA_ZERO = "SimpleThetaZero"
REPEATED_FULL = "RepeatedFullRank"
REPEATED_TRIVIAL = "RepeatedNearTrivial"
REPEATED_PARTIAL = "RepeatedPartialRank"
CLUSTER_FULL = "ClusterFullRank"
CLUSTER_PARTIAL = "ClusterPartialRank"


def select_cluster(lambdas, n0, eps, width=CLUSTER_WIDTH):
    """Indices of branches within eps * width * lambda_n0 of branch n0."""
    lam0 = lambdas[n0]
    cut = eps * max(abs(lam0), 1.0) * width
    return [i for i, l in enumerate(lambdas) if abs(l - lam0) <= cut]


def _gep(A, D):
    try:
        tau, P = sla.eigh(A, D)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise DegenerateGEP(f"generalized eigenvalue problem failed: {err}") from err
    return tau, P


def rotate_basis(tensors: EffectiveTensors, khat, eps, use_gamma=None):
    """Diagonalize the leading coupling matrix in direction khat.

    Returns (taus, P, Pbar, N0) with P the D-orthonormal eigenvector matrix
    ordered by |tau| (null block first) and, when a null block exists, Pbar
    diagonalizing the quadratic block inside it.  Rotated-basis tensors follow
    by congruence; rotated eigenfunctions stay rho-orthogonal by construction.
    """
    mat = build_matrices(tensors, khat, eps)
    if use_gamma is None:
        use_gamma = np.abs(mat.Gamma).max() > 0
    A = mat.Agamma if use_gamma else mat.A0
    tau, P = _gep(A, mat.D)
    order = np.argsort(np.abs(tau), kind="stable")
    tau, P = tau[order], P[:, order]
    scale = np.abs(tau).max() + np.abs(mat.B0).max() + 1e-300
    N0 = int(np.sum(np.abs(tau) <= RANK_TOL * scale))
    Pbar = None
    if 0 < N0:
        B0r = P.conj().T @ mat.B0 @ P
        Dr = np.eye(tensors.Q)
        taub, Pb = _gep(B0r[:N0, :N0], Dr[:N0, :N0])
        Pbar = Pb
        full = np.eye(tensors.Q, dtype=complex)
        full[:N0, :N0] = Pb
        P = P @ full
    return tau, P, Pbar, N0


def rotate_tensors(tensors: EffectiveTensors, P) -> EffectiveTensors:
    """Congruence transform of every coupling tensor; rho0 becomes all-ones
    when P is D-orthonormal."""
    PH = P.conj().T

    def rot(t):
        if t is None:
            return None
        return np.einsum("pa,pq...,qb->ab...", P.conj(), t, P)

    rho0 = np.real(np.diag(PH @ np.diag(tensors.rho0) @ P)).copy()
    return EffectiveTensors(rho0=rho0, theta0=rot(tensors.theta0), mu0=rot(tensors.mu0),
                            theta1=rot(tensors.theta1), mu2=tensors.mu2,
                            lambdas=tensors.lambdas, lambda0=tensors.lambda0)


def rotate_cluster(ctx, cell_set, P):
    """Recombine eigenfunctions and cell functions (repeated-eigenvalue track)."""
    from .bloch import EigenPair
    from .cells import CellFunctionSet

    vecs = ctx.vecs @ P  # (nfree, Q)
    pairs = [EigenPair(lam=ctx.pairs[q].lam, vec=vecs[:, q], k=ctx.ks,
                       n=ctx.pairs[q].n, ops=ctx.ops) for q in range(ctx.Q)]
    new_ctx = ctx.with_pairs(pairs)
    cs = CellFunctionSet()
    if cell_set.chi1 is not None:
        cs.chi1 = np.einsum("qm...,qb->bm...", cell_set.chi1, P)
    if cell_set.chi2 is not None:
        cs.chi2 = np.einsum("q...,qb->b...", cell_set.chi2, P)
    cs.chi3 = cell_set.chi3
    cs.eta0, cs.eta0_blocks = cell_set.eta0, cell_set.eta0_blocks
    cs.eta1, cs.eta2 = cell_set.eta1, cell_set.eta2
    return new_ctx, cs


def classify(tensors: EffectiveTensors, khat, eps, omega2=None, source=False,
             hysteresis=2.0):
    """Decide the expansion track at (ks, lambda0) in direction khat.

    With a source and a driving frequency, the linear-vs-quadratic offset
    scaling follows the size of |omega^2 - lambda0| with a factor-`hysteresis`
    dead band around eps^(3/2); without a source the track follows the local
    rank structure.
    """
    khat = np.asarray(khat, dtype=float)
    mat = build_matrices(tensors, khat, eps)
    Q = tensors.Q
    lam_scale = max(abs(tensors.lambda0), 1.0)
    is_cluster = np.abs(np.diag(mat.Gamma)).max() * eps > RANK_TOL * lam_scale

    if Q == 1:
        coupled = abs(mat.A0[0, 0]) > RANK_TOL * (np.abs(tensors.theta0).max()
                                                  + np.abs(mat.B0).max() + 1e-300)
        variant = SIMPLE_THETA_NONZERO if coupled else SIMPLE_THETA_ZERO
        taus = np.array([mat.A0[0, 0].real / tensors.rho0[0]])
        regime = Regime(variant, 1, int(not coupled), int(not coupled), khat, eps,
                        taus, np.eye(1, dtype=complex), None, is_cluster)
    else:
        taus, P, Pbar, N0 = rotate_basis(tensors, khat, eps, use_gamma=is_cluster)
        # rank thresholds measured against the joint coupling scale so a
        # trivial leading matrix is not compared only against its own noise
        scale = np.abs(taus).max() + np.abs(mat.B0).max() + 1e-300
        N = max(int(np.sum(np.abs(taus) <= eps * scale)), N0)
        if is_cluster:
            variant = CLUSTER_FULL if N0 == 0 else CLUSTER_PARTIAL
        elif N0 == Q:
            variant = REPEATED_TRIVIAL
        elif N == 0:
            variant = REPEATED_FULL
        else:
            variant = REPEATED_PARTIAL
        regime = Regime(variant, Q, N0, N, khat, eps, taus, P, Pbar, is_cluster)

    if source and omega2 is not None:
        r = omega2 - tensors.lambda0
        edge = eps**1.5 * lam_scale
        if abs(r) <= 1e-14 * lam_scale:
            scaling = SpectralScaling(eps, khat, sigma_hat=1, w2_hat=0.0)
        elif abs(r) < edge / hysteresis:
            scaling = SpectralScaling(eps, khat, sigma_hat=int(np.sign(r)),
                                      w2_hat=abs(r) / eps**2)
        elif abs(r) > edge * hysteresis:
            scaling = SpectralScaling(eps, khat, sigma_check=int(np.sign(r)),
                                      w2_check=abs(r) / eps)
        else:
            raise AmbiguousScaling(
                f"|omega^2 - lambda0| = {abs(r):.3e} sits in the dead band around "
                f"eps^1.5 = {edge:.3e}")
    else:
        # free motion: a non-trivial field fixes the track by the rank structure
        check = variant in (SIMPLE_THETA_NONZERO, REPEATED_FULL, CLUSTER_FULL,
                            CLUSTER_PARTIAL, REPEATED_PARTIAL)
        scaling = SpectralScaling(eps, khat, sigma_check=int(check),
                                  sigma_hat=int(not check))
    return regime, scaling


# ---------------------------------------------------------------------------
# dispersion approximations
# ---------------------------------------------------------------------------

@dataclass
class DispersionModel:
    """Per-branch local approximation of omega^2(ks + eps*khat)."""

    tensors: EffectiveTensors
    khat: np.ndarray
    order: int
    regime: Regime = None

    def __post_init__(self):
        self.khat = np.asarray(self.khat, dtype=float)
        if self.order not in (0, 1, 2):
            raise OrderUnavailable(f"order {self.order} not in {{0, 1, 2}}")
        if self.tensors.Q > 1 and self.order > 1:
            raise OrderUnavailable("second-order correctors stop at the isolated track")
        if self.regime is None:
            self.regime, _ = classify(self.tensors, self.khat, eps=1e-2)

    # -- isolated track: real polynomial in eps --------------------------------

    def poly_coefficients(self):
        """Coefficients c[j] of omega^2 = lambda0 + sum_j c[j] eps^j (Q = 1)."""
        t = self.tensors
        if t.Q != 1:
            raise OrderUnavailable("polynomial form exists only for Q = 1")
        rho0 = t.rho0[0]
        kh = self.khat
        c1 = (-1j * contract(t.theta0[0, 0], kh, 0) @ kh).real / rho0
        c2 = np.einsum("mn,m,n", t.mu0[0, 0], kh, kh).real / rho0
        c3 = (1j * np.einsum("mnp,m,n,p", t.theta1[0, 0], kh, kh, kh)).real / rho0 \
            if t.theta1 is not None else 0.0
        c4 = -np.einsum("mnpr,m,n,p,r", t.mu2, kh, kh, kh, kh).real / rho0 \
            if t.mu2 is not None else 0.0
        if self.regime.variant == SIMPLE_THETA_NONZERO:
            coeffs = [c1, c2, c3][: self.order + 1]
        else:
            coeffs = [0.0, c2, c3, c4][: self.order + 2]
        return np.array(coeffs)

    def omega2(self, eps):
        """Branch frequencies-squared at offsets eps (scalar or array)."""
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        t = self.tensors
        if t.Q == 1:
            c = self.poly_coefficients()
            out = t.lambda0 + sum(c[j] * eps ** (j + 1) for j in range(len(c)))
            return out[:, None]
        out = np.zeros((eps.size, t.Q))
        for i, e in enumerate(eps):
            out[i] = self._cluster_omega2(e)
        return out

    def _cluster_omega2(self, eps):
        t = self.tensors
        reg = self.regime
        mat = build_matrices(t, self.khat, eps)
        if self.order == 1:
            # first order: one eps-scaled eigenvalue problem per offset
            A = _as_herm(eps * mat.Agamma + eps**2 * mat.B0)
            s, _ = _gep(A, mat.D)
            return np.sort(t.lambda0 - s)
        # the separation penalty scales as 1/eps, so the rotation and the
        # eigenvalues are recomputed at every offset
        taus, P, _, _ = rotate_basis(t, self.khat, eps, use_gamma=reg.is_cluster)
        if reg.variant in (REPEATED_FULL, CLUSTER_FULL):
            return np.sort(t.lambda0 - eps * taus)
        # sub-O(1) block runs quadratically (carrying its O(eps) residue),
        # the remaining branches linearly through the diagonal entries
        Br = P.conj().T @ mat.B0 @ P
        N = t.Q if reg.variant == REPEATED_TRIVIAL else max(reg.N, reg.N0)
        vals = []
        if N:
            block = _as_herm(Br[:N, :N] + np.diag(taus[:N]) / eps)
            vals += list(t.lambda0 - eps**2 * np.linalg.eigvalsh(block))
        vals += [t.lambda0 - eps * taus[q] for q in range(N, t.Q)]
        return np.sort(np.array(vals))

    def group_velocity(self, eps):
        """d omega / d k per branch at offset eps (cartesian vectors).

        Analytic on the isolated track; central differences through the
        eigenvalue route otherwise (adequate for reporting, branches kept in
        sorted order).
        """
        t = self.tensors
        if t.Q == 1:
            rho0 = t.rho0[0]
            w = np.sqrt(max(self.omega2(eps)[0, 0], 1e-300))
            if self.regime.variant == SIMPLE_THETA_NONZERO:
                dw2 = (-1j * t.theta0[0, 0]).real / rho0
            else:
                dw2 = 2.0 * (t.mu0[0, 0].real @ (eps * self.khat)) / rho0
            return (dw2 / (2.0 * w))[None, :]
        h = 1e-6 * max(eps, 1e-3)
        out = np.zeros((t.Q, 2))
        for mdir in range(2):
            kp = eps * self.khat + h * np.eye(2)[mdir]
            km = eps * self.khat - h * np.eye(2)[mdir]
            mp = DispersionModel(t, kp / np.linalg.norm(kp), self.order)
            mm = DispersionModel(t, km / np.linalg.norm(km), self.order)
            wp = np.sqrt(np.maximum(mp.omega2(np.linalg.norm(kp))[0], 1e-300))
            wm = np.sqrt(np.maximum(mm.omega2(np.linalg.norm(km))[0], 1e-300))
            out[:, mdir] = (wp - wm) / (2 * h)
        return out


def _as_herm(A):
    return 0.5 * (A + A.conj().T)


# ---------------------------------------------------------------------------
# forced effective solutions
# ---------------------------------------------------------------------------

@dataclass
class EffectiveSolution:
    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    scaling: SpectralScaling

    def mean(self):
        """Effective solution vector sum_m eps^(m-2) u_m."""
        e = self.scaling.eps
        return self.u0 / e**2 + self.u1 / e + self.u2


def _solve_reg(Aop, rhs):
    if Aop.ndim == 0 or Aop.size == 1:
        a = complex(np.atleast_2d(Aop)[0, 0])
        if abs(a) * COND_LIMIT < np.abs(rhs).max() * 1e-0 + 1e-300:
            raise OnBranch("effective operator is singular at this (khat, omega)")
        return np.atleast_1d(rhs / a)
    cond = np.linalg.cond(Aop)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise OnBranch(f"effective operator condition {cond:.2e} beyond limit")
    return np.linalg.solve(Aop, rhs)


def effective_solve(regime: Regime, mat: EffectiveMatrices, proj: SourceProjections,
                    scaling: SpectralScaling, mu2=None, eta_bracket=None,
                    eta2_vec=None, rho0=None) -> EffectiveSolution:
    """Leading-order solution and correctors for the classified track.

    All systems are solved in the rotated basis where the leading matrix is
    diagonal, then mapped back; u-vectors refer to the original eigenfunction
    basis.
    """
    Q = regime.Q
    P = regime.P
    PH = P.conj().T
    A = PH @ mat.Agamma @ P
    B = PH @ mat.B0 @ P
    A1 = PH @ mat.A1 @ P
    D = PH @ mat.D @ P
    f0 = PH @ proj.f0
    f1 = PH @ proj.f1(regime.khat)
    a, b = scaling.a_check, scaling.b_hat
    z = np.zeros(Q, dtype=complex)
    u0, u1, u2 = z.copy(), z.copy(), z.copy()

    if scaling.sigma_check != 0:
        # linear-offset track: u0 vanishes, u1 leads, u2 corrects
        op = A + a * D
        u1 = -_solve_reg(op, f0)
        u2 = -_solve_reg(op, f1 + B @ u1)
    else:
        # quadratic-offset track: the sub-O(1) block S carries u0, the O(1)
        # entries of the (diagonal) rotated leading matrix feed u1 directly
        if regime.variant in (SIMPLE_THETA_ZERO, REPEATED_TRIVIAL):
            S = list(range(Q))
        else:
            S = list(range(max(regime.N, regime.N0)))
        F = [q for q in range(Q) if q not in S]
        Sx = np.ix_(S, S)
        tau_diag = np.diag(np.diag(A))  # zero and O(eps) entries on S
        opS = B[Sx] + tau_diag[Sx] / scaling.eps + b * D[Sx]
        u0[S] = -_solve_reg(opS, f0[S])
        u1[S] = -_solve_reg(opS, f1[S] + (A1 @ u0)[S])
        for p in F:
            u1[p] = -(f0[p] + (B @ u0)[p]) / A[p, p]
        if Q == 1 and regime.variant == SIMPLE_THETA_ZERO:
            kh = regime.khat
            m2 = 0.0
            if eta_bracket is not None:
                m2 = np.einsum("mn,m,n", eta_bracket, 1j * kh, 1j * kh)
            quart = 0.0
            if mu2 is not None:
                quart = np.einsum("mnpr,m,n,p,r", mu2, kh, kh, kh, kh) * u0[0]
            u2 = np.atleast_1d(-_solve_reg(opS, np.atleast_1d(
                m2 + quart + (A1 @ u1)[0]))[0])

    return EffectiveSolution(u0=P @ u0, u1=P @ u1, u2=P @ u2, scaling=scaling)


def first_order_operator(mat: EffectiveMatrices, scaling: SpectralScaling):
    """Combined first-order effective operator -(B(eps khat) + Agamma(eps khat)
    + eps * a * D) and source f0 + eps f1 at the scaling's eps."""
    e = scaling.eps
    op = -(e**2 * mat.B0 + e * mat.Agamma + e * scaling.a_check * mat.D)
    return op
