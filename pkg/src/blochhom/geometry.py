"""Bravais lattices, reciprocal bases, Brillouin zones and k-space paths.

Conventions
-----------
* Direct basis vectors ``e_j`` are the rows of ``Lattice.basis``; the
  reciprocal rows ``e^j`` satisfy ``e^j . e_i = 2 pi delta_ij``.
* Points in k-space are stored by their covariant components ``kappa_j``
  (``k = sum_j kappa_j e^j``); cartesian coordinates are derived.
* The first Brillouin zone is kept implicit through its half-space
  inequalities ``k . K <= |K|^2 / 2`` over the 3^d - 1 short reciprocal
  translations ``K``; only membership and volume are ever consumed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SingularBasis

_ORTHO_TOL = 1e-12


class Lattice:
    """A d-dimensional Bravais lattice with its reciprocal basis.

    Args:
        basis: (d, d) array whose rows are the direct basis vectors.
        label: optional human-readable name, kept through serialization.
    """

    def __init__(self, basis, label: str = ""):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise SingularBasis(f"basis must be square, got shape {basis.shape}")
        d = basis.shape[0]
        scale = np.abs(basis).max()
        det = np.linalg.det(basis)
        if abs(det) <= 1e-12 * scale**d:
            raise SingularBasis(f"basis determinant {det:.3e} below tolerance")
        self.basis = basis
        self.dimension = d
        self.label = label
        self.reciprocal = 2.0 * np.pi * np.linalg.inv(basis).T
        self.cell_volume = abs(det)
        self.bz_volume = (2.0 * np.pi) ** d / self.cell_volume
        # defining identity, guards inversion round-off on skewed bases
        gram = self.reciprocal @ basis.T
        if np.abs(gram - 2.0 * np.pi * np.eye(d)).max() > _ORTHO_TOL * 2.0 * np.pi:
            raise SingularBasis("reciprocal basis failed the 2*pi biorthogonality check")

    # -- coordinate transforms ----------------------------------------------

    def cartesian_k(self, components):
        """Cartesian coordinates of ``sum_j components_j e^j``."""
        return np.asarray(components, dtype=float) @ self.reciprocal

    def covariant_k(self, cartesian):
        """Covariant components of a cartesian wave vector."""
        return np.asarray(cartesian, dtype=float) @ self.basis.T / (2.0 * np.pi)

    def cartesian_x(self, contravariant):
        """Position ``sum_j xi^j e_j`` from contravariant coordinates."""
        return np.asarray(contravariant, dtype=float) @ self.basis

    def contravariant_x(self, cartesian):
        """Contravariant coordinates of a cartesian position."""
        return np.asarray(cartesian, dtype=float) @ self.reciprocal.T / (2.0 * np.pi)

    def kpoint(self, components) -> "KPoint":
        return KPoint(self, tuple(float(c) for c in np.atleast_1d(components)))

    def kpoint_cartesian(self, cartesian) -> "KPoint":
        return self.kpoint(self.covariant_k(cartesian))

    # -- Brillouin zone -----------------------------------------------------

    def short_reciprocal_vectors(self):
        """The 3^d - 1 translations ``sum n_j e^j`` with ``n_j in {-1,0,1}``."""
        vecs = []
        for n in itertools.product((-1, 0, 1), repeat=self.dimension):
            if any(n):
                vecs.append(np.array(n, dtype=float) @ self.reciprocal)
        return np.array(vecs)

    def in_bz(self, k: "KPoint", tol: float = 1e-10) -> bool:
        """Membership in the (closed) first Brillouin zone."""
        kc = k.cartesian if isinstance(k, KPoint) else np.asarray(k, float)
        for kap in self.short_reciprocal_vectors():
            if kc @ kap > 0.5 * kap @ kap + tol * kap @ kap:
                return False
        return True

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self.basis, other.basis)

    def __hash__(self):
        return hash(self.basis.tobytes())

    def __repr__(self):
        name = f" {self.label!r}" if self.label else ""
        return f"Lattice(d={self.dimension}{name})"

    # -- serialization --------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"lattice d {self.dimension}"]
        for row in self.basis:
            lines.append("e " + " ".join(repr(float(v)) for v in row))
        if self.label:
            lines.append(f"label {self.label}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "Lattice":
        rows, label, d = [], "", None
        for raw in text.splitlines():
            tok = raw.split()
            if not tok:
                continue
            if tok[0] == "lattice":
                d = int(tok[2])
            elif tok[0] == "e":
                rows.append([float(v) for v in tok[1:]])
            elif tok[0] == "label":
                label = " ".join(tok[1:])
        if d is None or len(rows) != d:
            raise ParseError("lattice block needs a 'lattice d <d>' header and d 'e' rows")
        return Lattice(np.array(rows), label=label)


@dataclass(frozen=True)
class KPoint:
    """Wave vector stored by covariant components w.r.t. the reciprocal basis."""

    lattice: Lattice
    components: tuple

    @property
    def cartesian(self):
        return self.lattice.cartesian_k(self.components)

    def shifted(self, delta_components) -> "KPoint":
        comp = np.asarray(self.components) + np.asarray(delta_components)
        return KPoint(self.lattice, tuple(float(c) for c in comp))

    def reduced(self) -> "KPoint":
        """Translate components into [-1/2, 1/2) by reciprocal-lattice vectors."""
        comp = np.asarray(self.components)
        return KPoint(self.lattice, tuple(float(c - np.floor(c + 0.5)) for c in comp))

    def __sub__(self, other: "KPoint"):
        return np.asarray(self.components) - np.asarray(other.components)


def build_lattice(basis, label: str = "") -> Lattice:
    """Construct a lattice, reciprocal basis and zone volumes from basis rows."""
    return Lattice(basis, label=label)


def kagome_lattice(a: float = 1.0) -> Lattice:
    """Trihexagonal-tiling lattice: e1 = a(i1 + sqrt3 i2), e2 = a(-i1 + sqrt3 i2)."""
    s3 = np.sqrt(3.0)
    return Lattice(np.array([[a, a * s3], [-a, a * s3]]), label="kagome")


def square_lattice(a: float = 1.0) -> Lattice:
    """Square lattice of pitch a."""
    return Lattice(np.array([[a, 0.0], [0.0, a]]), label="square")


# -- apex set ----------------------------------------------------------------

def apex_set(lattice: Lattice) -> list:
    """Wavenumbers ``(1/2) sum_j n_j e^j`` with ``n_j in {-1,0,1}``, deduplicated
    modulo reciprocal-lattice translations.

    Two half-integer combinations coincide modulo the reciprocal lattice iff
    their integer tuples agree componentwise mod 2, so the representatives are
    the 2^d points with components in {0, 1/2}.
    """
    pts = []
    for n in itertools.product((0, 1), repeat=lattice.dimension):
        pts.append(lattice.kpoint(tuple(0.5 * v for v in n)))
    return pts


def is_apex(k: KPoint, tol: float = 1e-9) -> bool:
    """True iff k is congruent to a half reciprocal-lattice vector.

    Equivalent to all doubled covariant components being integers.
    """
    comp = 2.0 * np.asarray(k.components)
    return bool(np.all(np.abs(comp - np.round(comp)) <= tol))


# -- paths -------------------------------------------------------------------

@dataclass
class KPath:
    """Piecewise-linear path through k-space, in covariant coordinates."""

    waypoints: list  # of KPoint
    samples_per_segment: int = 100
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("a path needs at least two waypoints")
        if self.samples_per_segment < 1:
            raise ValueError("samples_per_segment must be positive")


def sample_path(path: KPath) -> list:
    """Uniform samples along each segment (in covariant coordinates).

    Each segment contributes ``samples_per_segment`` new points plus the
    shared starting point, so a closed path of S segments yields
    ``S * samples_per_segment + 1`` points with identical first and last.
    """
    lattice = path.waypoints[0].lattice
    out = [path.waypoints[0]]
    for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
        ca, cb = np.asarray(a.components), np.asarray(b.components)
        for t in np.linspace(0.0, 1.0, path.samples_per_segment + 1)[1:]:
            comp = (1.0 - t) * ca + t * cb
            if t == 1.0:
                comp = cb  # endpoints exact, no round-off
            out.append(lattice.kpoint(comp))
    return out


def path_parameter(points: list) -> np.ndarray:
    """Cumulative cartesian arclength along a sampled path (for band plots)."""
    xs = np.array([p.cartesian for p in points])
    seg = np.linalg.norm(np.diff(xs, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def read_kpath_file(text: str, lattice: Lattice) -> list:
    """Covariant k-path file: one waypoint per line, components whitespace-split."""
    pts = []
    for raw in text.splitlines():
        line = raw.split("#")[0].strip()
        if not line:
            continue
        vals = [float(v) for v in line.split()]
        if len(vals) != lattice.dimension:
            raise ParseError(f"waypoint {line!r} has {len(vals)} components, expected {lattice.dimension}")
        pts.append(lattice.kpoint(vals))
    if not pts:
        raise ParseError("k-path file contains no waypoints")
    return pts
