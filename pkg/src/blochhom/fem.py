"""Lagrange triangle elements and assembly of the unit-cell bilinear forms.

Everything downstream (Bloch operators, cell problems, effective tensors,
discrete identities) is expressed through six raw matrices assembled here
with one shared quadrature rule, so the homogenization cascade reproduces
the perturbation series of the discrete operator pencil exactly:

    M1   = int  psi_b psi_a            K0  = int G grad(psi_b) . grad(psi_a)
    Mrho = int rho psi_b psi_a         Ej  = int G d_j(psi_b) psi_a
    Mg   = int G  psi_b psi_a

Rows are test functions, columns trial functions; integrals are raw (no
cell-measure normalization).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

# -- reference elements (barycentric l0 = 1-x-y, l1 = x, l2 = y) -------------

_NN = {1: 3, 2: 6, 3: 10}


def shape_values(order, pts):
    """Shape functions at reference points (n_pts, 2) -> (n_pts, nn)."""
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    if order == 1:
        return np.stack([l0, l1, l2], axis=1)
    if order == 2:
        return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                         4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=1)
    if order == 3:
        v = [0.5 * l * (3 * l - 1) * (3 * l - 2) for l in (l0, l1, l2)]
        e = [4.5 * l0 * l1 * (3 * l0 - 1), 4.5 * l0 * l1 * (3 * l1 - 1),
             4.5 * l1 * l2 * (3 * l1 - 1), 4.5 * l1 * l2 * (3 * l2 - 1),
             4.5 * l2 * l0 * (3 * l2 - 1), 4.5 * l2 * l0 * (3 * l0 - 1)]
        return np.stack(v + e + [27 * l0 * l1 * l2], axis=1)
    raise ValueError(f"unsupported order {order}")


def shape_gradients(order, pts):
    """Reference gradients -> (n_pts, nn, 2)."""
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    one, zero = np.ones_like(x), np.zeros_like(x)
    g0 = np.stack([-one, -one], axis=1)
    g1 = np.stack([one, zero], axis=1)
    g2 = np.stack([zero, one], axis=1)
    if order == 1:
        return np.stack([g0, g1, g2], axis=1)
    if order == 2:
        out = [(4 * l0 - 1)[:, None] * g0, (4 * l1 - 1)[:, None] * g1,
               (4 * l2 - 1)[:, None] * g2,
               4 * (l1[:, None] * g0 + l0[:, None] * g1),
               4 * (l2[:, None] * g1 + l1[:, None] * g2),
               4 * (l0[:, None] * g2 + l2[:, None] * g0)]
        return np.stack(out, axis=1)
    if order == 3:
        def dv(l, g):
            return (0.5 * (27 * l * l - 18 * l + 2))[:, None] * g

        def de(la, ga, lb, gb):
            # 4.5 * la*lb*(3*la - 1)
            return 4.5 * ((lb * (6 * la - 1))[:, None] * ga + (la * (3 * la - 1))[:, None] * gb)

        out = [dv(l0, g0), dv(l1, g1), dv(l2, g2),
               de(l0, g0, l1, g1), de(l1, g1, l0, g0),
               de(l1, g1, l2, g2), de(l2, g2, l1, g1),
               de(l2, g2, l0, g0), de(l0, g0, l2, g2),
               27 * ((l1 * l2)[:, None] * g0 + (l0 * l2)[:, None] * g1 + (l0 * l1)[:, None] * g2)]
        return np.stack(out, axis=1)
    raise ValueError(f"unsupported order {order}")


# -- Dunavant quadrature on the reference triangle ---------------------------

def _perm3(a, b=None):
    if b is None:
        b = a
    c = 1.0 - a - b
    return [(a, b), (b, c), (c, a)] if a != b else [(a, a), (1 - 2 * a, a), (a, 1 - 2 * a)]


def _perm6(a, b):
    c = 1.0 - a - b
    return [(a, b), (b, a), (b, c), (c, b), (c, a), (a, c)]


def quadrature(degree):
    """(points (n,2), weights (n,)) exact for polynomials of the given degree;
    weights sum to the reference area 1/2."""
    if degree <= 2:
        pts = _perm3(1.0 / 6.0)
        w = [1.0 / 3.0] * 3
    elif degree <= 4:
        pts = _perm3(0.445948490915965) + _perm3(0.091576213509771)
        w = [0.223381589678011] * 3 + [0.109951743655322] * 3
    elif degree <= 6:
        pts = (_perm3(0.063089014491502) + _perm3(0.249286745170910)
               + _perm6(0.310352451033785, 0.053145049844816))
        w = [0.050844906370207] * 3 + [0.116786275726379] * 3 + [0.082851075618374] * 6
    elif degree <= 8:
        pts = ([(1.0 / 3.0, 1.0 / 3.0)] + _perm3(0.459292588292723) + _perm3(0.170569307751760)
               + _perm3(0.050547228317031) + _perm6(0.263112829634638, 0.008394777409958))
        w = ([0.144315607677787] + [0.095091634413245] * 3 + [0.103217370534718] * 3
             + [0.032458497623198] * 3 + [0.027230314174435] * 6)
    else:
        raise ValueError("quadrature degree > 8 not provided")
    return np.array(pts), 0.5 * np.array(w)


def _coefficient_at(coef, centers, qx):
    """Evaluate a material coefficient at quadrature points (ne, nq)."""
    if np.isscalar(coef):
        return float(coef) * np.ones(qx.shape[:2])
    if callable(coef):
        vals = np.asarray(coef(qx[..., 0], qx[..., 1]), dtype=float)
        return np.broadcast_to(vals, qx.shape[:2])
    coef = np.asarray(coef, dtype=float)  # per-element values
    return np.broadcast_to(coef[:, None], qx.shape[:2])


def element_matrices(mesh, G, rho, quad_degree=None):
    """Per-element stacks (ne, nn, nn) of the six bilinear forms.

    Materials may be scalars, per-element arrays, or callables of (x, y).
    The quadrature rule defaults to degree 2*order (mass matrices exact),
    and the same rule backs every form.
    """
    order = mesh.order
    deg = quad_degree or 2 * order
    qp, qw = quadrature(deg)
    N = shape_values(order, qp)            # (nq, nn)
    dN = shape_gradients(order, qp)        # (nq, nn, 2)

    verts = mesh.nodes[mesh.elements[:, :3]]          # (ne, 3, 2)
    # rows of J are the edge vectors, so d(x)/d(xi) = J^T and grad_x = J^-1 grad_xi
    J = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=1)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJ = np.empty_like(J)
    invJ[:, 0, 0] = J[:, 1, 1]
    invJ[:, 0, 1] = -J[:, 0, 1]
    invJ[:, 1, 0] = -J[:, 1, 0]
    invJ[:, 1, 1] = J[:, 0, 0]
    invJ /= detJ[:, None, None]

    # physical gradients (ne, nq, nn, 2) and quadrature coordinates (ne, nq, 2)
    gphys = np.einsum("eds,qns->eqnd", invJ, dN)
    qx = np.einsum("qn,end->eqd", shape_values(1, qp), verts)
    wdet = qw[None, :] * detJ[:, None]     # (ne, nq)

    Gq = _coefficient_at(G, None, qx)
    Rq = _coefficient_at(rho, None, qx)
    if np.any(Gq <= 0) or np.any(Rq <= 0):
        raise ValueError("material coefficients must be strictly positive")

    NN_ = np.einsum("qa,qb->qab", N, N)
    return {
        "M1": np.einsum("eq,qab->eab", wdet, NN_),
        "Mrho": np.einsum("eq,qab->eab", wdet * Rq, NN_),
        "Mg": np.einsum("eq,qab->eab", wdet * Gq, NN_),
        "K0": np.einsum("eq,eqad,eqbd->eab", wdet * Gq, gphys, gphys),
        "E1": np.einsum("eq,qa,eqb->eab", wdet * Gq, N, gphys[..., 0]),
        "E2": np.einsum("eq,qa,eqb->eab", wdet * Gq, N, gphys[..., 1]),
    }


def scatter(loc, conn, n):
    """Assemble an element stack (ne, nn, nn) into an (n, n) CSR matrix."""
    nn = conn.shape[1]
    rows = np.repeat(conn, nn, axis=1).ravel()
    cols = np.tile(conn, (1, nn)).ravel()
    return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))


def assemble_forms(mesh, G, rho, quad_degree=None):
    """The six raw sparse matrices over the whole node set."""
    loc = element_matrices(mesh, G, rho, quad_degree=quad_degree)
    return {name: scatter(mat, mesh.elements, mesh.n_nodes) for name, mat in loc.items()}


def interpolate(mesh, fn):
    """Nodal interpolant of a callable fn(x, y) (vectorized)."""
    return np.asarray(fn(mesh.nodes[:, 0], mesh.nodes[:, 1]))
