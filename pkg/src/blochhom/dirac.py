"""Local dispersion-geometry taxonomy for two- and three-branch clusters.

Classification evaluates explicit predicates on the first-order coupling
vectors, the modal masses and the eigenvalue separation:

* horizontality of the middle plane (trace balance of the two diagonal
  couplings),
* positive-definiteness / isotropy of the off-diagonal coupling quadratic
  form,
* the tilt condition (equal, nonzero diagonal slope vectors).

Every reported kind is re-derivable from the stored predicate values, and
near-misses within a stated band are labeled with the nearest class plus
a deviation metric instead of falling back to the generic outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InconsistentRank

PRED_TOL = 1e-8
NEAR_MISS = 1e-3

DIRAC = "DiracCone"
AXISYM_DIRAC = "AxisymmetricDiracCone"
BLUNTED = "BluntedDirac"
TILTED = "TiltedDirac"
TILTED_BLUNTED = "TiltedBluntedDirac"
ZIM = "ZIMDiracLike"
HYPER = "HyperCone"
SHEET = "InvariantSheet"
NONCONICAL = "NonConical"


@dataclass
class ConeReport:
    kind: str
    exact: bool                  # predicates met at PRED_TOL (else near-miss)
    deviation: float             # max relative predicate violation
    middle_plane: dict           # slope vector and eps-offset of the plane
    isocontour: str              # 'circular' | 'elliptic' | 'degenerate'
    slope: float = None          # cone slope in omega^2 per |eps khat| (axisymmetric)
    gap: float = None            # apex gap in omega^2 units per eps (blunted)
    predicates: dict = field(default_factory=dict)
    notes: str = ""

    def as_dict(self):
        out = {k: v for k, v in self.__dict__.items()}
        out["middle_plane"] = {k: np.asarray(v).tolist() for k, v in self.middle_plane.items()}
        out["predicates"] = {k: float(v) for k, v in self.predicates.items()}
        return out


def _coupling_form(theta12):
    """Sym{theta (x) conj theta}: the real PSD quadratic form of the coupling."""
    th = np.asarray(theta12, dtype=complex)
    return np.real(np.outer(th, np.conj(th)))


def _isocontour_class(Qform, tol):
    w = np.linalg.eigvalsh(Qform)
    scale = abs(w).max() + 1e-300
    if w.min() < tol * scale:
        return "degenerate", 0.0
    aniso = (w.max() - w.min()) / scale
    return ("circular" if aniso <= NEAR_MISS else "elliptic"), aniso


def gep_omega2(thetas, rhos, gamma, khat, eps, lambda0=0.0):
    """Leading-order branch values from the coupling matrix eigenvalues.

    `thetas` is a (Q, Q, d) array with the skew-Hermitian structure
    theta[q, p] = -conj(theta[p, q]); gamma enters the last diagonal entry
    (Q = 2) or per the three-branch layout (Q = 3).
    """
    thetas = np.asarray(thetas, dtype=complex)
    Q = thetas.shape[0]
    ik = 1j * np.asarray(khat, dtype=float)
    A = np.einsum("pqd,d->pq", thetas, ik)
    D = np.diag(np.asarray(rhos, dtype=float))
    A = A + np.diag([0.0] * (Q - 1) + [gamma * rhos[-1]])
    tau = sla.eigh(A, D, eigvals_only=True)
    return lambda0 - eps * tau


def classify_q2(theta11, theta22, theta12, rho1, rho2, gamma, d=2,
                omega_n1=None, apex_gauge=None) -> ConeReport:
    """Taxonomy of a two-branch cluster from its coupling data.

    d = 3 inputs are accepted for the taxonomy only (no pipeline produces
    them); invariance directions of the anisotropic sheet are reported.
    """
    th11 = np.asarray(theta11, dtype=complex)
    th22 = np.asarray(theta22, dtype=complex)
    th12 = np.asarray(theta12, dtype=complex)
    scale = max(np.linalg.norm(th11), np.linalg.norm(th22), np.linalg.norm(th12), 1e-300)
    if d == 3:
        return _classify_q2_3d(th11, th22, th12, rho1, rho2, gamma, scale)

    s1 = np.real(-1j * th11) / rho1        # slope vectors of the diagonal entries
    s2 = np.real(-1j * th22) / rho2
    plane_slope = -0.5 * (s1 + s2)
    middle = {"slope": plane_slope, "offset_per_eps": -0.5 * gamma}

    horiz = np.linalg.norm(th11 / rho1 + th22 / rho2) / scale
    Q12 = _coupling_form(th12) / (rho1 * rho2)
    posdef_w = np.linalg.eigvalsh(Q12)
    posdef = posdef_w.min() / (abs(posdef_w).max() + 1e-300)
    tilt = np.linalg.norm(th11 / rho1 - th22 / rho2) / scale
    gamma_rel = abs(gamma) / (scale * max(np.linalg.norm(np.ones(2)), 1.0))

    preds = {"horizontality": horiz, "offdiag_posdef_ratio": posdef,
             "tilt_mismatch": tilt, "gamma_rel": gamma_rel,
             "diag_norm": np.linalg.norm(th11) / scale}

    if apex_gauge is None:
        apex_gauge = (np.abs(th12.imag).max() <= PRED_TOL * scale
                      and np.linalg.norm(th11) <= PRED_TOL * scale)

    def report(kind, exact, deviation, iso, slope=None, gap=None, notes=""):
        return ConeReport(kind=kind, exact=exact, deviation=float(deviation),
                          middle_plane=middle, isocontour=iso, slope=slope,
                          gap=gap, predicates=preds, notes=notes)

    gamma_zero = gamma_rel <= PRED_TOL
    horizontal = horiz <= NEAR_MISS
    exact_h = horiz <= PRED_TOL

    if gamma_zero and horizontal:
        # crossing branches: Dirac cones; circular when the combined form is
        # isotropic, which an apex gauge (real coupling) rules out
        Qtot = np.outer(s1, s1) + Q12
        iso, aniso = _isocontour_class(Qtot, PRED_TOL)
        if iso == "degenerate":
            if np.abs(Qtot).max() <= PRED_TOL * scale**2:
                return report(NONCONICAL, True, 0.0, "degenerate",
                              notes="all couplings vanish")
            return report(DIRAC, exact_h, max(horiz, 0.0), iso,
                          notes="rank-deficient coupling form")
        if aniso <= NEAR_MISS and not apex_gauge:
            slope = float(np.sqrt(np.linalg.eigvalsh(Qtot).mean()))
            return report(AXISYM_DIRAC, exact_h and aniso <= PRED_TOL,
                          max(horiz, aniso), "circular", slope=slope)
        return report(DIRAC, exact_h, horiz, iso)

    if not gamma_zero and horizontal and preds["diag_norm"] <= NEAR_MISS:
        # trivial diagonal slopes with a finite separation: blunted cones
        iso, aniso = _isocontour_class(Q12, PRED_TOL)
        if posdef <= PRED_TOL:
            return report(NONCONICAL, False, posdef, iso,
                          notes="coupling form not positive definite")
        gap = abs(gamma)
        if aniso <= NEAR_MISS and not apex_gauge:
            return report(BLUNTED, aniso <= PRED_TOL, aniso, "circular", gap=gap,
                          notes="axisymmetric blunted pair")
        return report(BLUNTED, True, aniso, iso, gap=gap)

    if not gamma_zero and tilt <= NEAR_MISS and preds["diag_norm"] > NEAR_MISS:
        # equal nonzero diagonal slopes: tilted-blunted pair
        if posdef <= PRED_TOL:
            return report(NONCONICAL, False, posdef, "degenerate",
                          notes="tilt condition met but coupling degenerate")
        iso, aniso = _isocontour_class(Q12, PRED_TOL)
        return report(TILTED_BLUNTED, tilt <= PRED_TOL, tilt, iso, gap=abs(gamma))

    if gamma_zero and not horizontal:
        diff = 0.5 * (s1 - s2)
        Qtot = np.outer(diff, diff) + Q12
        iso, aniso = _isocontour_class(Qtot, PRED_TOL)
        if iso == "degenerate":
            return report(NONCONICAL, False, 0.0, iso,
                          notes="tilted pair with degenerate section")
        return report(TILTED, True, aniso, iso)

    return report(NONCONICAL, True, 0.0, "degenerate",
                  notes="no conical structure at this separation/coupling")


def _classify_q2_3d(th11, th22, th12, rho1, rho2, gamma, scale):
    """Three-dimensional two-branch taxonomy (user-supplied coefficients only).

    With a finite separation and flat diagonal couplings the sheets are
    anisotropic and invariant along Re(theta12) x Im(theta12) (or across the
    planes normal to Re(theta12) when the parts are parallel); at zero
    separation, mutually orthogonal equal-norm coupling parts give a
    hyper-cone.
    """
    s1 = np.real(-1j * th11) / rho1
    s2 = np.real(-1j * th22) / rho2
    middle = {"slope": -0.5 * (s1 + s2), "offset_per_eps": -0.5 * gamma}
    re12, im12 = np.real(th12), np.imag(th12)
    cr = np.cross(re12, im12)
    preds = {"horizontality": np.linalg.norm(th11 / rho1 + th22 / rho2) / scale,
             "diag_norm": (np.linalg.norm(th11) + np.linalg.norm(th22)) / scale,
             "re_im_independence": np.linalg.norm(cr)
             / (np.linalg.norm(re12) * np.linalg.norm(im12) + 1e-300)}
    gamma_zero = abs(gamma) <= PRED_TOL * scale
    flat_diag = preds["diag_norm"] <= NEAR_MISS
    if not gamma_zero and flat_diag:
        if preds["re_im_independence"] > NEAR_MISS:
            inv_dir = cr / np.linalg.norm(cr)
            notes = "invariant along Re x Im of the coupling"
        else:
            nrm = re12 / (np.linalg.norm(re12) + 1e-300)
            inv_dir = nrm
            notes = "invariant across planes normal to Re of the coupling"
        return ConeReport(kind=BLUNTED, exact=True, deviation=preds["diag_norm"],
                          middle_plane=middle, isocontour="degenerate",
                          gap=abs(gamma), predicates=preds,
                          notes=notes + f"; direction {inv_dir.tolist()}")
    if gamma_zero and preds["horizontality"] <= NEAR_MISS:
        vs = [s1, re12 / np.sqrt(rho1 * rho2), im12 / np.sqrt(rho1 * rho2)]
        norms = [np.linalg.norm(v) for v in vs]
        ortho = max(abs(vs[i] @ vs[j]) for i in range(3) for j in range(i + 1, 3)) \
            / (max(norms) ** 2 + 1e-300)
        mismatch = (max(norms) - min(norms)) / (max(norms) + 1e-300)
        preds.update({"pair_orthogonality": ortho, "pair_norm_mismatch": mismatch})
        if max(ortho, mismatch) <= NEAR_MISS:
            return ConeReport(kind=HYPER, exact=max(ortho, mismatch) <= PRED_TOL,
                              deviation=float(max(ortho, mismatch)),
                              middle_plane=middle, isocontour="circular",
                              slope=float(norms[0]), predicates=preds)
        return ConeReport(kind=SHEET, exact=True, deviation=float(max(ortho, mismatch)),
                          middle_plane=middle, isocontour="elliptic", predicates=preds,
                          notes="anisotropic crossing sheets")
    return ConeReport(kind=NONCONICAL, exact=True, deviation=0.0, middle_plane=middle,
                      isocontour="degenerate", predicates=preds,
                      notes="no three-dimensional cone structure recognized")


def classify_q3(theta12, theta13, theta23, rho1, rho2, rho3, gamma,
                omega_n1=None, ks_origin=False) -> ConeReport:
    """Three-branch taxonomy in the apex gauge (real coupling vectors).

    gamma != 0 with partial rank in every direction forces theta12 = 0 and
    yields a horizontal invariant sheet plus a blunted cone pair; gamma = 0
    gives a crossing pair, recognized as zero-index-like at the zone origin
    when the scaled couplings are orthogonal with equal norms.
    """
    th12 = np.asarray(theta12, dtype=complex)
    th13 = np.asarray(theta13, dtype=complex)
    th23 = np.asarray(theta23, dtype=complex)
    scale = max(np.linalg.norm(th12), np.linalg.norm(th13), np.linalg.norm(th23), 1e-300)
    preds = {"theta12_rel": np.linalg.norm(th12) / scale,
             "gamma_rel": abs(gamma) / scale}

    if np.linalg.norm(th12) <= PRED_TOL * scale and np.linalg.norm(th13) <= PRED_TOL * scale \
            and np.linalg.norm(th23) <= PRED_TOL * scale:
        return ConeReport(kind=NONCONICAL, exact=True, deviation=0.0,
                          middle_plane={"slope": np.zeros(2), "offset_per_eps": -0.5 * gamma},
                          isocontour="degenerate", predicates=preds,
                          notes="flat triple")

    v13 = np.real(th13) / np.sqrt(rho1 * rho3)
    v23 = np.real(th23) / np.sqrt(rho2 * rho3)
    Qpair = np.outer(v13, v13) + np.outer(v23, v23)
    middle = {"slope": np.zeros(2), "offset_per_eps": -0.5 * gamma}

    if abs(gamma) > PRED_TOL * scale:
        if np.linalg.norm(th12) > NEAR_MISS * scale:
            raise InconsistentRank(
                "theta12 != 0 contradicts partial rank in all directions at gamma != 0")
        iso, aniso = _isocontour_class(Qpair, PRED_TOL)
        kind = BLUNTED if iso != "degenerate" else NONCONICAL
        return ConeReport(kind=kind, exact=np.linalg.norm(th12) <= PRED_TOL * scale,
                          deviation=float(np.linalg.norm(th12) / scale),
                          middle_plane=middle, isocontour=iso, gap=abs(gamma),
                          predicates=preds,
                          notes="horizontal invariant sheet plus blunted pair")

    # gamma = 0: crossing pair over the invariant sheet
    Qfull = (np.outer(np.real(th12), np.real(th12)) / (rho1 * rho2)
             + np.outer(v13, v13) + np.outer(v23, v23))
    iso, aniso = _isocontour_class(Qfull, PRED_TOL)
    ortho = abs(v13 @ v23) / (np.linalg.norm(v13) * np.linalg.norm(v23) + 1e-300)
    norm_mismatch = abs(np.linalg.norm(v13) - np.linalg.norm(v23)) / \
        max(np.linalg.norm(v13), np.linalg.norm(v23), 1e-300)
    preds.update({"pair_orthogonality": ortho, "pair_norm_mismatch": norm_mismatch})

    if np.linalg.norm(th12) <= PRED_TOL * scale and ortho <= NEAR_MISS \
            and norm_mismatch <= NEAR_MISS and ks_origin:
        slope = float(np.linalg.norm(np.real(th13)) / np.sqrt(rho1 * rho3))
        speed = slope / (2.0 * omega_n1) if omega_n1 else None
        return ConeReport(kind=ZIM, exact=max(ortho, norm_mismatch) <= PRED_TOL,
                          deviation=float(max(ortho, norm_mismatch)),
                          middle_plane=middle, isocontour="circular", slope=slope,
                          predicates=preds,
                          notes=f"group speed {speed}" if speed else "")
    kind = DIRAC if iso != "degenerate" else NONCONICAL
    return ConeReport(kind=kind, exact=True, deviation=float(aniso),
                      middle_plane=middle, isocontour=iso, predicates=preds,
                      notes="crossing pair over invariant sheet")


def closed_form_q2(theta11, theta22, theta12, rho1, rho2, gamma, khat, eps,
                   lambda0=0.0):
    """The two-branch dispersion pair in closed form (matches the coupling-
    matrix eigenvalue route to round-off; used as its cross-validation)."""
    ik = 1j * np.asarray(khat, dtype=float)
    a = complex(np.asarray(theta11) @ ik) / rho1
    cross = np.real(np.einsum("m,mn,n", np.asarray(khat, float),
                              _coupling_form(theta12), np.asarray(khat, float)))
    disc = np.sqrt((gamma - a + complex(np.asarray(theta22) @ ik) / rho2) ** 2
                   + 4.0 * cross / (rho1 * rho2))
    tr = gamma + a + complex(np.asarray(theta22) @ ik) / rho2
    w_plus = lambda0 - (eps / 2.0) * (tr + disc)
    w_minus = lambda0 - (eps / 2.0) * (tr - disc)
    return np.sort(np.real([w_plus, w_minus]))


def closed_form_q3(theta12, theta13, theta23, rho1, rho2, rho3, gamma, khat, eps,
                   lambda0=0.0):
    """Three-branch closed forms: invariant sheet plus the cone pair."""
    kh = np.asarray(khat, dtype=float)

    def q(th, ra, rb):
        return np.real(np.einsum("m,mn,n", kh, _coupling_form(th), kh)) / (ra * rb)

    if abs(gamma) > 0 and np.linalg.norm(theta12) == 0:
        disc = np.sqrt(gamma**2 + 4 * q(theta13, rho1, rho3) + 4 * q(theta23, rho2, rho3))
        pair = [lambda0 - (eps / 2) * (gamma + s * disc) for s in (+1, -1)]
        return np.sort(np.real([lambda0] + pair))
    root = np.sqrt(q(theta12, rho1, rho2) + q(theta13, rho1, rho3) + q(theta23, rho2, rho3))
    return np.sort(np.real([lambda0, lambda0 - eps * root, lambda0 + eps * root]))
