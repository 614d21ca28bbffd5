"""Bloch-shifted operators on the constrained cell space, and band solves.

The periodic-amplitude formulation keeps degree-of-freedom identification
independent of the wavenumber: the stiffness is assembled once as

    K(k) = K0 + i (k - k0)_j (Ej^H - Ej) + |k - k0|^2 Mg

on the reduced space obtained by identifying periodic partner nodes and
eliminating Dirichlet nodes.  The identification carries a fixed phase
anchor k0: partner values differ by exp(i k0 . e_j).  With k0 = 0 this is
the plain periodic space.  Anchoring at a half reciprocal-lattice vector
("apex") makes every phase factor +-1, so all reduced matrices are real
there and the structural realness properties of eigenfunctions and
effective tensors at apexes hold to machine precision instead of to
discretization error.  A reduced vector u then represents the function
u(x) ~= utilde(x) exp(i k0 . x); the `lift`/`unlift` helpers convert nodal
data between the two gauges.
"""

from __future__ import annotations

from dataclasses import dataclass
from os import environ

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import ConvergenceFailure, EmptyFreeSpace, NearResonance
from .geometry import KPoint, is_apex

DENSE_LIMIT = 4000
DEGENERACY_RTOL = 1e-8


@dataclass
class MaterialFields:
    """Modulus and density over the cell: scalars, per-element arrays, or
    callables of cartesian (x, y)."""

    G: object = 1.0
    rho: object = 1.0


def worker_count():
    """Thread count for k-sweeps, from BLOCHHOM_WORKERS (default 1)."""
    return max(1, int(environ.get("BLOCHHOM_WORKERS", "1")))


class BlochOperators:
    """Reduced sesquilinear forms of one meshed cell at a fixed phase anchor."""

    def __init__(self, mesh, materials: MaterialFields, anchor: KPoint | None = None,
                 quad_degree=None):
        self.mesh = mesh
        self.materials = materials
        self.anchor = anchor if anchor is not None else mesh.lattice.kpoint([0.0, 0.0])
        self.volume = mesh.solid_area
        raw = fem.assemble_forms(mesh, materials.G, materials.rho, quad_degree=quad_degree)

        T, roots, phase = _constraints(mesh, self.anchor)
        if T.shape[1] == 0:
            raise EmptyFreeSpace("Dirichlet constraints eliminated every DOF")
        self.T = T
        self.root_nodes = roots
        self.phase_nodal = phase
        self.nfree = T.shape[1]

        TH = T.conj().T
        red = {name: (TH @ mat @ T).tocsr() for name, mat in raw.items()}
        self.M1 = red["M1"]
        self.Mrho = red["Mrho"]
        self.Mg = red["Mg"]
        self.K0 = red["K0"]
        self.E = [red["E1"], red["E2"]]
        self.is_real = not np.iscomplexobj(T)

    # -- gauges ----------------------------------------------------------------

    def lift(self, periodic_nodal):
        """Reduced coefficients of a periodic nodal field in the anchored gauge."""
        vals = np.asarray(periodic_nodal) * self.phase_nodal
        return vals[self.root_nodes]

    def unlift(self, reduced):
        """Full periodic-amplitude nodal values utilde of a reduced vector."""
        return (self.T @ reduced) * np.conj(self.phase_nodal)

    def expand(self, reduced):
        """Full anchored-gauge nodal values."""
        return self.T @ reduced

    # -- operators ---------------------------------------------------------------

    def dk(self, k: KPoint):
        return k.cartesian - self.anchor.cartesian

    def K_at(self, k: KPoint):
        """Hermitian Bloch stiffness at wavenumber k."""
        d = self.dk(k)
        K = self.K0.astype(complex, copy=True)
        for j in range(2):
            if d[j] != 0.0:
                K = K + 1j * d[j] * (self.E[j].conj().T - self.E[j])
        n2 = float(d @ d)
        if n2 != 0.0:
            K = K + n2 * self.Mg
        return K.tocsr()

    def D_ops(self, ks: KPoint):
        """Gradient-pairing matrices D_m = Em + i dk_m Mg at the expansion point:
        (G (grad + i ks) u, v) = v^H D u  in the anchored gauge."""
        d = self.dk(ks)
        return [(self.E[j] + 1j * d[j] * self.Mg).tocsr() if d[j] != 0.0 else self.E[j]
                for j in range(2)]

    # -- inner products (|Y|-normalized) ------------------------------------------

    def ip(self, u, v, weight="M1"):
        """(u, v) = |Y|^-1 int w u conj(v) with w in {1, rho, G}."""
        M = {"M1": self.M1, "Mrho": self.Mrho, "Mg": self.Mg}[weight]
        return complex(np.vdot(v, M @ u)) / self.volume

    def norm(self, u, weight="M1"):
        return float(np.sqrt(max(self.ip(u, u, weight).real, 0.0)))


def _constraints(mesh, anchor: KPoint):
    """Sparse map T from free DOFs to full nodes, with anchored phase factors."""
    n = mesh.n_nodes
    lattice = mesh.lattice
    kc = anchor.cartesian
    apex = is_apex(anchor)

    factors = []
    for j in range(lattice.dimension):
        ph = np.exp(1j * kc @ lattice.basis[j])
        if apex:  # exactly +-1: components of 2*anchor are integers
            ph = float(np.round(ph.real))
        factors.append(ph)

    dirichlet = set(int(i) for i in mesh.dirichlet_nodes)
    # close Dirichlet under the periodic identification
    changed = True
    while changed:
        changed = False
        for j, pairs in mesh.periodic_pairs.items():
            for a, b in pairs:
                if (a in dirichlet) != (b in dirichlet):
                    dirichlet.add(a)
                    dirichlet.add(b)
                    changed = True

    parent = {}
    for j, pairs in mesh.periodic_pairs.items():
        for a, b in pairs:  # value(b) = factors[j] * value(a)
            if a in dirichlet or b in dirichlet:
                continue
            if b not in parent:
                parent[b] = (a, factors[j])

    def resolve(node):
        ph = 1.0 + 0.0j if not apex else 1.0
        seen = set()
        while node in parent:
            if node in seen:
                raise EmptyFreeSpace("cyclic periodic identification")
            seen.add(node)
            node, f = parent[node][0], parent[node][1]
            ph = ph * f
        return node, ph

    roots, free_idx = [], {}
    for node in range(n):
        if node in dirichlet or node in parent:
            continue
        free_idx[node] = len(roots)
        roots.append(node)

    rows, cols, vals = [], [], []
    for node in range(n):
        if node in dirichlet:
            continue
        root, ph = resolve(node)
        rows.append(node)
        cols.append(free_idx[root])
        vals.append(ph)
    dtype = float if apex else complex
    T = sp.csr_matrix((np.array(vals, dtype=dtype), (rows, cols)), shape=(n, len(roots)))
    return T, np.array(roots, dtype=np.int64), np.exp(1j * mesh.nodes @ kc)


def assemble(mesh, materials: MaterialFields, k: KPoint, anchor="auto",
             quad_degree=None) -> BlochOperators:
    """Build Bloch operators; `anchor='auto'` anchors at k when k is an apex
    (real reduced matrices there) and at the zone origin otherwise."""
    if anchor == "auto":
        anchor = k if is_apex(k) else mesh.lattice.kpoint([0.0, 0.0])
    ops = BlochOperators(mesh, materials, anchor=anchor, quad_degree=quad_degree)
    ops.k = k
    return ops


@dataclass
class EigenPair:
    lam: float
    vec: np.ndarray  # reduced coefficients, L2-normalized, gauge-fixed
    k: KPoint
    n: int           # 1-based branch index
    ops: BlochOperators

    @property
    def rho0(self):
        return self.ops.ip(self.vec, self.vec, "Mrho").real

    def nodal(self):
        """Periodic amplitude at all mesh nodes."""
        return self.ops.unlift(self.vec)


def solve_bands(ops: BlochOperators, n_max: int, k: KPoint = None,
                dense_limit=DENSE_LIMIT, gauge=True) -> list:
    """Lowest n_max eigenpairs of K(k) u = lambda Mrho u.

    Pairs are rho-orthogonal (within degenerate blocks re-orthogonalized),
    L2-normalized, gauge-fixed so the largest-magnitude nodal value is real
    positive, and residual-checked.
    """
    k = k if k is not None else ops.k
    K = ops.K_at(k)
    M = ops.Mrho
    n_max = min(n_max, ops.nfree)
    if ops.nfree <= dense_limit:
        Kd = K.toarray()
        if ops.is_real and np.abs(Kd.imag).max() == 0.0:
            Kd = Kd.real
        lam, vecs = sla.eigh(Kd, M.toarray(), subset_by_index=[0, n_max - 1])
    else:
        scale = K.diagonal().real.sum() / max(M.diagonal().real.sum(), 1e-300)
        try:
            lam, vecs = spla.eigsh(K, k=n_max, M=M, sigma=-1e-6 * scale, which="LM")
        except spla.ArpackNoConvergence as err:
            raise ConvergenceFailure(
                f"eigsh converged {len(err.eigenvalues)}/{n_max} eigenvalues") from err
        idx = np.argsort(lam)
        lam, vecs = lam[idx], vecs[:, idx]
    vecs = vecs.astype(complex)

    scale = K.diagonal().real.max() / max(M.diagonal().real.min(), 1e-300)
    if lam.min() < -1e-8 * scale:
        raise ConvergenceFailure(f"negative eigenvalue {lam.min():.3e}")

    _orthonormalize_blocks(ops, lam, vecs)
    # operator-scale denominator: |K phi| itself vanishes on rigid modes
    op_scale = abs(K).max() + abs(lam).max() * abs(M).max()
    pairs = []
    for i in range(n_max):
        v = vecs[:, i]
        v = v / ops.norm(v)
        if gauge:
            v = _fix_gauge(ops, v, k)
        r = K @ v - lam[i] * (M @ v)
        if np.linalg.norm(r) > 1e-9 * op_scale * np.linalg.norm(v):
            raise ConvergenceFailure(
                f"branch {i + 1} residual {np.linalg.norm(r) / (op_scale * np.linalg.norm(v)):.2e}")
        pairs.append(EigenPair(lam=float(lam[i]), vec=v, k=k, n=i + 1, ops=ops))
    return pairs


def _orthonormalize_blocks(ops, lam, vecs):
    """Gram-Schmidt in the rho inner product inside (near-)degenerate blocks."""
    scale = abs(lam).max() + 1e-300
    i = 0
    while i < len(lam):
        j = i + 1
        while j < len(lam) and abs(lam[j] - lam[j - 1]) <= DEGENERACY_RTOL * scale:
            j += 1
        if j - i > 1:
            for a in range(i, j):
                for b in range(i, a):
                    vecs[:, a] -= ops.ip(vecs[:, a], vecs[:, b], "Mrho") * vecs[:, b] \
                        / ops.ip(vecs[:, b], vecs[:, b], "Mrho").real
                vecs[:, a] /= np.sqrt(ops.ip(vecs[:, a], vecs[:, a], "Mrho").real)
        i = j


def _fix_gauge(ops, v, k):
    nodal = ops.T @ v
    imax = int(np.argmax(np.abs(nodal)))
    ph = nodal[imax] / abs(nodal[imax])
    v = v * np.conj(ph)
    if ops.is_real and is_apex(k) and np.allclose(ops.dk(k), 0.0):
        resid = np.abs((ops.T @ v).imag).max() / (np.abs(ops.T @ v).max() + 1e-300)
        if resid > 1e-8:
            raise ConvergenceFailure(f"apex eigenvector not real after gauge ({resid:.2e})")
    return v


def band_sweep(mesh, materials, kpoints, n_max, workers=None, anchor=None):
    """Eigenvalues along a k-path: (len(kpoints), n_max) array.

    Independent k-points run on a thread pool (LAPACK releases the GIL);
    collection order is deterministic.
    """
    ops = BlochOperators(mesh, materials, anchor=anchor)
    workers = workers or worker_count()

    def one(k):
        return [p.lam for p in solve_bands(ops, n_max, k=k, gauge=False)]

    if workers == 1:
        rows = [one(k) for k in kpoints]
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, kpoints))
    return np.array(rows)


def solve_forced_cell(ops: BlochOperators, k: KPoint, omega2: float, f_reduced,
                      cond_limit=1e12):
    """Direct solve of the reduced Bloch problem (K(k) - w^2 Mrho) u = M1 f."""
    A = (ops.K_at(k) - omega2 * ops.Mrho).tocsc()
    rhs = ops.M1 @ f_reduced
    lu = spla.splu(A)
    u = lu.solve(rhs)
    amp = np.linalg.norm(u) * (abs(omega2) + 1.0)
    if amp > cond_limit * (np.linalg.norm(rhs) + 1e-300):
        raise NearResonance(f"amplification {amp:.2e} beyond conditioning threshold")
    return u
