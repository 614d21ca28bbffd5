"""Constrained unit-cell problems in the zero rho-mean space.

Every cell function g solves a singular system (K(ks) - lambda Mrho) g = b
subject to (rho g, phi_q) = 0 for all cluster eigenfunctions phi_q.  The
solves use a symmetric saddle-point augmentation with one Lagrange multiplier
per constraint: the multipliers pin the zero-mean representative, and any
multiplier of significant size flags a solvability violation of the
right-hand side (which the analytical construction of the effective tensors
rules out), so violations are asserted rather than silently projected away.

Right-hand sides are built from the same reduced matrices as the operators,
which is what makes the discrete cluster expansion reproduce the exact
perturbation series of the operator pencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bloch import DEGENERACY_RTOL, BlochOperators
from .errors import SingularSaddlePoint, SolvabilityViolation
from .geometry import KPoint

SOLVABILITY_RTOL = 1e-6
RHO_MEAN_TOL = 1e-8


@dataclass
class ClusterContext:
    """Expansion point: Q nearby eigenpairs at one wavenumber.

    `n0` indexes the member whose eigenvalue is the origin of the frequency
    expansion; `blocks` groups members with (numerically) equal eigenvalues,
    one constrained solve operator per distinct eigenvalue.  With
    `repeated=True` a nearly-degenerate set is treated as one exactly repeated
    eigenvalue at lambda_n0 (separations then belong in the penalty matrix of
    the cluster model, and the repeated-track structural identities hold to
    solver precision).
    """

    ops: BlochOperators
    pairs: list
    n0: int = 0
    repeated: bool = False
    _solver: object = field(default=None, repr=False)

    def __post_init__(self):
        for i, pi in enumerate(self.pairs):
            for jj in range(i):
                ortho = self.ops.ip(pi.vec, self.pairs[jj].vec, "Mrho")
                if abs(ortho) > RHO_MEAN_TOL:
                    raise ValueError(f"cluster members {jj}, {i} not rho-orthogonal: {abs(ortho):.2e}")

    @property
    def Q(self):
        return len(self.pairs)

    @property
    def ks(self) -> KPoint:
        return self.pairs[0].k

    @property
    def lambdas(self):
        return np.array([p.lam for p in self.pairs])

    @property
    def lambda0(self):
        return self.pairs[self.n0].lam

    @property
    def rho0(self):
        return np.array([p.rho0 for p in self.pairs])

    @property
    def vecs(self):
        return np.stack([p.vec for p in self.pairs], axis=1)  # (nfree, Q)

    def gammas(self, eps):
        """Eigenvalue separations gamma_q = (lambda_n0 - lambda_nq) / eps."""
        return (self.lambda0 - self.lambdas) / eps

    def blocks(self):
        """Indices grouped by distinct eigenvalue (relative gap tolerance)."""
        if self.repeated:
            return [list(range(self.Q))]
        lam = self.lambdas
        scale = np.abs(lam).max() + 1e-300
        order = np.argsort(lam)
        groups, cur = [], [int(order[0])]
        for a, bb in zip(order[:-1], order[1:]):
            if abs(lam[bb] - lam[a]) <= DEGENERACY_RTOL * scale:
                cur.append(int(bb))
            else:
                groups.append(cur)
                cur = [int(bb)]
        groups.append(cur)
        return groups

    def block_lambda(self, block):
        return self.lambda0 if self.repeated else self.lambdas[block[0]]

    def lambda_of(self, q):
        """Eigenvalue used in member q's cell problems."""
        return self.lambda0 if self.repeated else self.lambdas[q]

    def solver(self) -> "ConstrainedSolver":
        if self._solver is None:
            self._solver = ConstrainedSolver(self)
        return self._solver

    def with_pairs(self, new_pairs) -> "ClusterContext":
        return ClusterContext(self.ops, new_pairs, n0=self.n0, repeated=self.repeated)


def cluster_context(ops: BlochOperators, pairs: list, n0: int = 0,
                    repeated: bool = False) -> ClusterContext:
    return ClusterContext(ops, list(pairs), n0=n0, repeated=repeated)


class ConstrainedSolver:
    """Factorized saddle-point solvers, one per distinct cluster eigenvalue."""

    def __init__(self, ctx: ClusterContext):
        self.ctx = ctx
        ops = ctx.ops
        self.B = ops.Mrho @ ctx.vecs            # (nfree, Q) constraint columns
        self.Bnorm = np.linalg.norm(self.B, axis=0)
        self._lu = {}
        self._anorm = {}
        K = ops.K_at(ctx.ks)
        for block in ctx.blocks():
            lam = ctx.block_lambda(block)
            A = (K - lam * ops.Mrho).tocsr()
            Bs = sp.csr_matrix(self.B)
            aug = sp.bmat([[A, Bs], [Bs.conj().T, None]], format="csc")
            try:
                self._lu[tuple(block)] = spla.splu(aug)
            except RuntimeError as err:
                raise SingularSaddlePoint(f"factorization failed at lambda={lam}: {err}") from err
            self._anorm[tuple(block)] = abs(A).max()
        self._block_of = {}
        for block in ctx.blocks():
            for q in block:
                self._block_of[q] = tuple(block)

    def solve(self, rhs, member: int = None, block: tuple = None):
        """Solve the constrained cell problem for the eigenvalue of `member`
        (or an explicit block).  Raises SolvabilityViolation when a Lagrange
        multiplier is significant relative to the right-hand side."""
        if block is None:
            block = self._block_of[member if member is not None else self.ctx.n0]
        lu = self._lu[tuple(block)]
        Q = self.ctx.Q
        full = np.concatenate([rhs.astype(complex), np.zeros(Q, dtype=complex)])
        sol = lu.solve(full)
        g, mult = sol[:-Q], sol[-Q:]
        # absolute floor keeps analytically-zero right-hand sides from tripping
        scale = np.linalg.norm(rhs) + 1e-11 * self._anorm[tuple(block)]
        worst = np.abs(mult) * self.Bnorm / scale
        if worst.max() > SOLVABILITY_RTOL:
            q = int(np.argmax(worst))
            raise SolvabilityViolation(
                f"rhs not orthogonal to cluster member {q}: multiplier level {worst.max():.2e}")
        for q in range(Q):
            mean = self.ctx.ops.ip(g, self.ctx.pairs[q].vec, "Mrho")
            if abs(mean) > RHO_MEAN_TOL * (np.linalg.norm(g) + 1e-300):
                raise SolvabilityViolation(f"solution rho-mean against member {q}: {abs(mean):.2e}")
        return g


@dataclass
class CellFunctionSet:
    """Solved cell functions (reduced coefficient vectors).

    chi1[q][m], chi2[q][m][n] (symmetric in m, n), chi3[m][n][p] (fully
    symmetric, simple-eigenvalue track only), eta0[r] per distinct eigenvalue,
    eta1[m], eta2 for the source corrections, and the source-independent zeta
    factors when the source factorizes.
    """

    chi1: np.ndarray = None        # (Q, d, nfree)
    chi2: np.ndarray = None        # (Q, d, d, nfree)
    chi3: np.ndarray = None        # (d, d, d, nfree)
    eta0: np.ndarray = None        # (Qbar, nfree)
    eta0_blocks: list = None
    eta1: np.ndarray = None        # (d, nfree)
    eta2: np.ndarray = None        # (nfree,)
    zeta0: np.ndarray = None
    zeta1: np.ndarray = None
    zeta2: np.ndarray = None


# -- right-hand sides ---------------------------------------------------------

def project_zero_mean(ctx: ClusterContext, g):
    """The zero-rho-mean representative of g modulo the cluster eigenfunctions."""
    out = np.array(g, dtype=complex)
    for q in range(ctx.Q):
        phi = ctx.pairs[q].vec
        out -= (ctx.ops.ip(out, phi, "Mrho") / ctx.rho0[q]) * phi
    return out


def solve_chi1(ctx: ClusterContext, theta0) -> np.ndarray:
    """First corrector fields chi1_q (flux bc built into the weak form)."""
    ops = ctx.ops
    D = ops.D_ops(ctx.ks)
    rho0 = ctx.rho0
    solver = ctx.solver()
    out = np.zeros((ctx.Q, 2, ops.nfree), dtype=complex)
    for q in range(ctx.Q):
        phi_q = ctx.pairs[q].vec
        for m in range(2):
            rhs = -(D[m].conj().T @ phi_q) + D[m] @ phi_q
            for s in range(ctx.Q):
                rhs = rhs - (theta0[s, q, m] / rho0[s]) * (ops.Mrho @ ctx.pairs[s].vec)
            out[q, m] = solver.solve(rhs, member=q)
    return out


def solve_chi2(ctx: ClusterContext, chi1, theta0, mu0) -> np.ndarray:
    """Second corrector fields chi2_q, symmetric in their two tensor indices."""
    ops = ctx.ops
    D = ops.D_ops(ctx.ks)
    rho0 = ctx.rho0
    solver = ctx.solver()
    out = np.zeros((ctx.Q, 2, 2, ops.nfree), dtype=complex)
    for q in range(ctx.Q):
        phi_q = ctx.pairs[q].vec
        for m in range(2):
            for n in range(m, 2):
                rhs = -0.5 * (D[m].conj().T @ chi1[q, n] + D[n].conj().T @ chi1[q, m])
                rhs += 0.5 * (D[m] @ chi1[q, n] + D[n] @ chi1[q, m])
                if m == n:
                    rhs += ops.Mg @ phi_q
                for s in range(ctx.Q):
                    coup = 0.5 * (theta0[s, q, m] * chi1[s, n] + theta0[s, q, n] * chi1[s, m])
                    rhs -= (ops.Mrho @ coup) / rho0[s]
                    rhs -= (mu0[s, q, m, n] / rho0[s]) * (ops.Mrho @ ctx.pairs[s].vec)
                sol = solver.solve(rhs, member=q)
                out[q, m, n] = sol
                out[q, n, m] = sol
    return out


def _splittings3(idx):
    """The three (single, pair) assignments of an index triple."""
    m, n, p = idx
    return [(m, (n, p)), (n, (m, p)), (p, (m, n))]


def solve_chi3(ctx: ClusterContext, chi1, chi2, theta0, mu0, theta1) -> np.ndarray:
    """Third corrector field (isolated-eigenvalue track only)."""
    if ctx.Q != 1:
        raise ValueError("chi3 is defined only for the isolated-eigenvalue track")
    from itertools import permutations

    ops = ctx.ops
    D = ops.D_ops(ctx.ks)
    rho0 = ctx.rho0[0]
    phi = ctx.pairs[0].vec
    th0 = theta0[0, 0]
    solver = ctx.solver()
    out = np.zeros((2, 2, 2, ops.nfree), dtype=complex)
    third = 1.0 / 3.0
    for m in range(2):
        for n in range(m, 2):
            for p in range(n, 2):
                idx = (m, n, p)
                rhs = np.zeros(ops.nfree, dtype=complex)
                for a, bc in _splittings3(idx):
                    # flux {I (x) chi2}' and gradient {grad chi2} contributions
                    rhs -= third * (D[a].conj().T @ chi2[0][bc])
                    rhs += third * (D[a] @ chi2[0][bc])
                    # rho-weighted {theta0 (x) chi2}
                    rhs -= third * th0[a] * (ops.Mrho @ chi2[0][bc]) / rho0
                for ab, r in ((idx[:2], idx[2]), ((idx[0], idx[2]), idx[1]), (idx[1:], idx[0])):
                    # {I (x) chi1} and rho-weighted {mu0 (x) chi1}
                    if ab[0] == ab[1]:
                        rhs += third * (ops.Mg @ chi1[0, r])
                    rhs -= third * mu0[0, 0][ab] * (ops.Mrho @ chi1[0, r]) / rho0
                rhs -= (theta1[0, 0][idx] / rho0) * (ops.Mrho @ phi)
                sol = solver.solve(rhs, member=0)
                for perm in set(permutations(idx)):
                    out[perm] = sol
    return out


def solve_eta0(ctx: ClusterContext, f_reduced) -> tuple:
    """Source cell functions, one per distinct cluster eigenvalue.

    Returns (eta0 array (Qbar, nfree), blocks); eta0 vanishes when the
    source is a pure rho-weighted modal forcing.
    """
    ops = ctx.ops
    rhs = ops.M1 @ f_reduced
    for s in range(ctx.Q):
        phi_s = ctx.pairs[s].vec
        mean = ops.ip(f_reduced, phi_s, "M1")
        rhs = rhs - (mean / ctx.rho0[s]) * (ops.Mrho @ phi_s)
    solver = ctx.solver()
    blocks = ctx.blocks()
    out = np.zeros((len(blocks), ops.nfree), dtype=complex)
    for r, block in enumerate(blocks):
        out[r] = solver.solve(rhs, block=tuple(block))
    return out, blocks


def solve_eta1(ctx: ClusterContext, f_reduced, eta0, chi1) -> np.ndarray:
    """First source corrector (isolated-eigenvalue track)."""
    if ctx.Q != 1:
        raise ValueError("eta1 is defined only for the isolated-eigenvalue track")
    ops = ctx.ops
    D = ops.D_ops(ctx.ks)
    phi = ctx.pairs[0].vec
    rho0 = ctx.rho0[0]
    f_mean = ops.ip(f_reduced, phi, "M1")
    f_chi = np.array([ops.ip(f_reduced, chi1[0, m], "M1") for m in range(2)])
    solver = ctx.solver()
    out = np.zeros((2, ops.nfree), dtype=complex)
    for m in range(2):
        rhs = -(D[m].conj().T @ eta0) + D[m] @ eta0
        rhs += (f_chi[m] / rho0) * (ops.Mrho @ phi)
        rhs -= (f_mean / rho0) * (ops.Mrho @ chi1[0, m])
        out[m] = solver.solve(rhs, member=0)
    return out


def solve_eta2(ctx: ClusterContext, eta0) -> np.ndarray:
    """Second source corrector (isolated-eigenvalue track)."""
    if ctx.Q != 1:
        raise ValueError("eta2 is defined only for the isolated-eigenvalue track")
    rhs = ctx.ops.Mrho @ eta0
    return ctx.solver().solve(rhs, member=0)


def solve_source_correctors(ctx: ClusterContext, chi1, phi_factor_reduced,
                            cs: CellFunctionSet = None) -> CellFunctionSet:
    """All source cell functions for a factorized amplitude F(k) * phi(x).

    The zeta functions depend on phi only, so one solve serves every
    wavenumber; the eta aliases (valid at F = 1) are filled alongside.
    The first and second source correctors exist on the isolated track only.
    """
    cs = cs or CellFunctionSet(chi1=chi1)
    if cs.chi1 is None:
        cs.chi1 = chi1
    eta0, blocks = solve_eta0(ctx, phi_factor_reduced)
    cs.eta0, cs.eta0_blocks = eta0, blocks
    cs.zeta0 = eta0[0] if len(eta0) == 1 else eta0
    if ctx.Q == 1:
        cs.eta1 = solve_eta1(ctx, phi_factor_reduced, eta0[0], chi1)
        cs.zeta1 = cs.eta1
        cs.eta2 = solve_eta2(ctx, eta0[0])
        cs.zeta2 = cs.eta2
    return cs


# ---------------------------------------------------------------------------
# export and cache
# ---------------------------------------------------------------------------

def mesh_hash(mesh) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(mesh.nodes.tobytes())
    h.update(mesh.elements.tobytes())
    return h.hexdigest()[:16]


def export_cell_functions(ctx: ClusterContext, cs: CellFunctionSet) -> str:
    """Nodal CSV of the solved cell functions: one row per mesh node, real and
    imaginary parts per tensor component (periodic-amplitude gauge)."""
    ops = ctx.ops
    cols, names = [], []

    def add(tag, vec):
        nodal = ops.unlift(vec)
        names.extend([f"re_{tag}", f"im_{tag}"])
        cols.extend([nodal.real, nodal.imag])

    for q in range(ctx.Q):
        add(f"phi{q + 1}", ctx.pairs[q].vec)
    if cs.chi1 is not None:
        for q in range(ctx.Q):
            for mdir in range(2):
                add(f"chi1_q{q + 1}_{mdir + 1}", cs.chi1[q, mdir])
    if cs.chi2 is not None:
        for q in range(ctx.Q):
            for mdir in range(2):
                for n in range(mdir, 2):
                    add(f"chi2_q{q + 1}_{mdir + 1}{n + 1}", cs.chi2[q, mdir, n])
    if cs.chi3 is not None:
        for idx in ((0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)):
            add("chi3_" + "".join(str(i + 1) for i in idx), cs.chi3[idx])
    if cs.eta0 is not None:
        for rr in range(cs.eta0.shape[0]):
            add(f"eta0_{rr + 1}", cs.eta0[rr])
    lines = ["node,x,y," + ",".join(names)]
    mesh = ops.mesh
    for i in range(mesh.n_nodes):
        vals = ",".join(repr(float(c[i])) for c in cols)
        lines.append(f"{i},{float(mesh.nodes[i, 0])!r},{float(mesh.nodes[i, 1])!r},{vals}")
    return "\n".join(lines) + "\n"


class CellFunctionCache:
    """Binary cache of cell-function sets keyed by mesh, wavenumber, branches."""

    def __init__(self, directory):
        from pathlib import Path

        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, ctx: ClusterContext):
        comp = "_".join(f"{c:.12g}" for c in ctx.ks.components)
        branches = "-".join(str(p.n) for p in ctx.pairs)
        return self.dir / f"cells_{mesh_hash(ctx.ops.mesh)}_k{comp}_n{branches}.npz"

    def load(self, ctx: ClusterContext) -> CellFunctionSet | None:
        path = self._path(ctx)
        if not path.exists():
            return None
        data = np.load(path, allow_pickle=False)
        cs = CellFunctionSet()
        for name in ("chi1", "chi2", "chi3", "eta0", "eta1", "eta2",
                     "zeta0", "zeta1", "zeta2"):
            if name in data:
                setattr(cs, name, data[name])
        if "eta0_blocks" in data:
            cs.eta0_blocks = [list(b) for b in data["eta0_blocks"]]
        return cs

    def store(self, ctx: ClusterContext, cs: CellFunctionSet):
        payload = {}
        for name in ("chi1", "chi2", "chi3", "eta0", "eta1", "eta2",
                     "zeta0", "zeta1", "zeta2"):
            val = getattr(cs, name)
            if val is not None:
                payload[name] = np.asarray(val)
        if cs.eta0_blocks is not None:
            payload["eta0_blocks"] = np.asarray(cs.eta0_blocks, dtype=np.int64)
        np.savez_compressed(self._path(ctx), **payload)
        return self._path(ctx)
