"""Triangular meshes of the periodic unit cell with matched faces.

The meshed domain is the parallelogram cell spanned by the lattice basis
minus the exclusion ("void") shapes.  Opposite cell faces carry identical
1-D boundary discretizations: side-1 nodes are constructed as exact
translates of side-0 nodes by the corresponding basis vector, so periodic
degree-of-freedom identification downstream is a pure index map.

Exclusions may touch the cell boundary (the trihexagonal cell's voids do, by
necessity); the generator then verifies that the solid portions of opposite
faces are translates of each other, which is what periodicity actually
requires.

Triangulation is Delaunay over boundary + interior seed nodes, filtered by
triangle-centroid membership in the solid polygon, followed by strict
conformity validation (area match against the exact polygon area, boundary
edges on the polygon boundary, connectivity).  Validation failures trigger
a denser resampling before giving up.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import Delaunay, cKDTree
from shapely.geometry import Polygon

from .errors import (
    DisconnectedDomain,
    ExclusionOverlap,
    InvariantViolation,
    MeshError,
    ParseError,
    UnmatchedPeriodicFace,
)
from .geometry import Lattice, kagome_lattice, square_lattice

PERIODIC, NEUMANN, DIRICHLET = "periodic", "neumann", "dirichlet"


@dataclass
class Exclusion:
    """One void: polygon vertices (cartesian, CCW) and its boundary condition."""

    vertices: np.ndarray
    bc: str  # NEUMANN or DIRICHLET

    def polygon(self) -> Polygon:
        return Polygon(self.vertices)


@dataclass
class CellGeometrySpec:
    lattice: Lattice
    exclusions: list = field(default_factory=list)
    h_max: float = 0.1
    order: int = 2

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError("element order must be 1, 2 or 3")
        if self.h_max <= 0:
            raise ValueError("h_max must be positive")
        for ex in self.exclusions:
            if ex.bc not in (NEUMANN, DIRICHLET):
                raise ValueError(f"unknown boundary condition {ex.bc!r}")


@dataclass
class BoundaryEdge:
    nodes: tuple  # (v0, v1, interior nodes...) along the edge
    tag: str
    face: tuple | None = None  # (j, side) when tag == PERIODIC


class UnitCellMesh:
    """Conforming triangulation of the unit cell with tagged boundary.

    Attributes:
        nodes: (N, d) cartesian node coordinates (vertices first, then
            higher-order edge/interior nodes).
        elements: (E, nn) connectivity; the first three entries of each row
            are the corner vertices in positive orientation.
        boundary: list of BoundaryEdge covering the whole mesh boundary.
        periodic_pairs: {j: [(side0_node, side1_node), ...]} over all node
            kinds; side1 coordinates equal side0 + e_j.
        dirichlet_nodes: sorted array of constrained node ids.
    """

    def __init__(self, lattice, order, nodes, elements, boundary,
                 periodic_pairs, solid_area, exclusions=()):
        self.lattice = lattice
        self.order = order
        self.nodes = np.asarray(nodes, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        self.boundary = list(boundary)
        self.periodic_pairs = {j: list(p) for j, p in periodic_pairs.items()}
        self.solid_area = float(solid_area)
        self.exclusions = list(exclusions)
        self.porosity = 1.0 - self.solid_area / lattice.cell_volume
        dn = sorted({n for be in self.boundary if be.tag == DIRICHLET for n in be.nodes})
        self.dirichlet_nodes = np.array(dn, dtype=np.int64)
        self.h_max_actual = self._longest_edge()

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def _longest_edge(self):
        tri = self.elements[:, :3]
        p = self.nodes[tri]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.linalg.norm(e, axis=2).max())

    def element_areas(self):
        p = self.nodes[self.elements[:, :3]]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    # -- invariants ----------------------------------------------------------

    def validate(self):
        """Raise InvariantViolation / UnmatchedPeriodicFace on any breakage."""
        areas = self.element_areas()
        bad = np.nonzero(areas <= 0)[0]
        if bad.size:
            raise InvariantViolation(f"element {bad[0]} has non-positive area")
        tol = self.h_max_actual * 1e-8
        for j, pairs in self.periodic_pairs.items():
            ej = self.lattice.basis[j]
            for n0, n1 in pairs:
                if np.linalg.norm(self.nodes[n1] - self.nodes[n0] - ej) > tol:
                    raise UnmatchedPeriodicFace(
                        f"pair ({n0}, {n1}) offset differs from e_{j + 1}")
        tags = {}
        for be in self.boundary:
            for a, b in zip(be.nodes[:-1], be.nodes[1:]):
                key = frozenset((a, b))
                if key in tags and tags[key] != be.tag:
                    raise InvariantViolation(f"edge {tuple(key)} carries two tags")
                tags[key] = be.tag
        self._check_connected()
        self._check_boundary_cover()

    def _check_connected(self):
        parent = np.arange(self.n_nodes)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for el in self.elements:
            r = find(el[0])
            for n in el[1:]:
                parent[find(n)] = r
        used = np.unique(self.elements)
        roots = {find(i) for i in used}
        if len(roots) > 1:
            raise DisconnectedDomain(f"mesh splits into {len(roots)} components")

    def _check_boundary_cover(self):
        counts = {}
        for el in self.elements[:, :3]:
            for a, b in ((el[0], el[1]), (el[1], el[2]), (el[2], el[0])):
                counts[frozenset((int(a), int(b)))] = counts.get(frozenset((int(a), int(b))), 0) + 1
        boundary_edges = {k for k, c in counts.items() if c == 1}
        tagged = {frozenset((be.nodes[0], be.nodes[1])) for be in self.boundary}
        missing = boundary_edges - tagged
        if missing:
            raise InvariantViolation(f"untagged boundary edge {sorted(next(iter(missing)))}")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def generate_mesh(spec: CellGeometrySpec) -> UnitCellMesh:
    """Generate a conforming, periodically matched triangulation of the cell."""
    lattice = spec.lattice
    cell = Polygon([(0.0, 0.0), tuple(lattice.basis[0]),
                    tuple(lattice.basis[0] + lattice.basis[1]), tuple(lattice.basis[1])])
    scale = np.abs(lattice.basis).max()

    voids = []
    for ex in spec.exclusions:
        poly = ex.polygon()
        if not poly.is_valid or poly.area <= 0:
            raise ExclusionOverlap("exclusion polygon is degenerate or self-intersecting")
        if not poly.within(cell.buffer(scale * 1e-9)):
            raise ExclusionOverlap("exclusion extends outside the unit cell")
        voids.append(poly)
    for i in range(len(voids)):
        for k in range(i + 1, len(voids)):
            if voids[i].intersection(voids[k]).area > 0:
                raise ExclusionOverlap(f"exclusions {i} and {k} overlap")

    solid = cell
    for poly in voids:
        solid = solid.difference(poly)
    if solid.is_empty:
        raise MeshError("exclusions leave no solid domain")
    if solid.geom_type != "Polygon":
        raise DisconnectedDomain("solid region splits into multiple pieces")

    h = spec.h_max
    last_err = None
    for _ in range(3):
        try:
            mesh = _triangulate(lattice, solid, spec, h)
            mesh.validate()
            return mesh
        except (MeshError, UnmatchedPeriodicFace) as err:  # retry denser
            last_err = err
            h *= 0.7
    raise MeshError(f"mesh generation failed after refinement retries: {last_err}")


def _on_face(lattice, p, j, side, tol):
    """Is cartesian point p on the (j, side) cell face line?"""
    xi = lattice.contravariant_x(p)
    return abs(xi[j] - side) <= tol


def _ring_edges(solid):
    rings = [np.asarray(solid.exterior.coords)]
    rings += [np.asarray(r.coords) for r in solid.interiors]
    edges = []
    for ring in rings:
        for a, b in zip(ring[:-1], ring[1:]):
            if np.linalg.norm(b - a) > 0:
                edges.append((a, b))
    return edges


def _subdivide(a, b, target):
    """Points a..b inclusive at spacing <= target (endpoints exact)."""
    n = max(1, int(np.ceil(np.linalg.norm(b - a) / target - 1e-12)))
    ts = np.linspace(0.0, 1.0, n + 1)
    pts = np.outer(1 - ts, a) + np.outer(ts, b)
    pts[0], pts[-1] = a, b
    return pts


def _triangulate(lattice, solid, spec, h):
    scale = np.abs(lattice.basis).max()
    tol = scale * 1e-9
    d = lattice.dimension

    face_edges = {(j, m): [] for j in range(d) for m in (0, 1)}
    wall_edges = []
    for a, b in _ring_edges(solid):
        placed = False
        for j in range(d):
            for m in (0, 1):
                if _on_face(lattice, a, j, m, 1e-9) and _on_face(lattice, b, j, m, 1e-9):
                    face_edges[(j, m)].append((a, b))
                    placed = True
                    break
            if placed:
                break
        if not placed:
            wall_edges.append((a, b))

    # side-0 faces are discretized, side-1 faces mirrored by exact translation
    pts = []
    face_nodes0 = {j: [] for j in range(d)}
    for j in range(d):
        ej = lattice.basis[j]
        seg1 = [(a - ej, b - ej) for a, b in face_edges[(j, 1)]]
        if not _segments_match(face_edges[(j, 0)], seg1, tol):
            raise UnmatchedPeriodicFace(
                f"solid portions of opposite faces j={j + 1} are not translates")
        for a, b in face_edges[(j, 0)]:
            sub = _subdivide(a, b, h)
            face_nodes0[j].append(sub)
            pts.append(sub)
            pts.append(sub + ej)
    for a, b in wall_edges:
        pts.append(_subdivide(a, b, min(h, np.linalg.norm(b - a))))
    boundary_pts = _dedupe(np.vstack(pts) if pts else np.zeros((0, 2)), tol)

    interior = _hex_seeds(lattice, h)
    if interior.size:
        shrunk = solid.buffer(-0.42 * h)
        keep = shapely.contains_xy(shrunk, interior[:, 0], interior[:, 1])
        interior = interior[keep]
        if interior.size and boundary_pts.size:
            dist, _ = cKDTree(boundary_pts).query(interior)
            interior = interior[dist > 0.55 * h]

    nodes = np.vstack([boundary_pts, interior]) if interior.size else boundary_pts
    if nodes.shape[0] < 3:
        raise MeshError("too few nodes to triangulate")

    tri = Delaunay(nodes).simplices
    cent = nodes[tri].mean(axis=1)
    keep = shapely.contains_xy(solid, cent[:, 0], cent[:, 1])
    tri = tri[keep]
    p = nodes[tri]
    areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    tri = tri[np.abs(areas) > 1e-12 * scale**2]

    # conformity gate: covered area must equal the exact polygon area
    p = nodes[tri]
    areas = np.abs(0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                          - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])))
    if abs(areas.sum() - solid.area) > 1e-8 * solid.area:
        raise MeshError(
            f"triangulation area {areas.sum():.12g} != solid area {solid.area:.12g}")

    # orient positively, drop unused nodes
    p = nodes[tri]
    neg = (0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))) < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    used = np.unique(tri)
    remap = -np.ones(nodes.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    nodes, tri = nodes[used], remap[tri]

    boundary = _classify_boundary(lattice, nodes, tri, spec.exclusions, solid, scale)
    pairs = _match_periodic(lattice, nodes, boundary, tol_match=spec.h_max * 1e-8)
    mesh = UnitCellMesh(lattice, 1, nodes, tri, boundary, pairs,
                        solid_area=solid.area, exclusions=spec.exclusions)
    if spec.order > 1:
        mesh = elevate_order(mesh, spec.order)
    return mesh


def _segments_match(segs_a, segs_b, tol):
    if len(segs_a) != len(segs_b):
        return False
    rem = list(segs_b)
    for a0, a1 in segs_a:
        hit = None
        for i, (b0, b1) in enumerate(rem):
            if ((np.linalg.norm(a0 - b0) < tol and np.linalg.norm(a1 - b1) < tol)
                    or (np.linalg.norm(a0 - b1) < tol and np.linalg.norm(a1 - b0) < tol)):
                hit = i
                break
        if hit is None:
            return False
        rem.pop(hit)
    return True


def _dedupe(points, tol):
    if points.shape[0] == 0:
        return points
    tree = cKDTree(points)
    groups = tree.query_ball_point(points, tol)
    keep, seen = [], np.zeros(points.shape[0], dtype=bool)
    for i in range(points.shape[0]):
        if not seen[i]:
            keep.append(i)
            seen[list(groups[i])] = True
    return points[keep]


def _hex_seeds(lattice, h):
    corners = np.array([[0.0, 0.0], lattice.basis[0],
                        lattice.basis[0] + lattice.basis[1], lattice.basis[1]])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    xs = np.arange(lo[0], hi[0] + h, h)
    ys = np.arange(lo[1], hi[1] + h * np.sqrt(3) / 2, h * np.sqrt(3) / 2)
    pts = []
    for r, y in enumerate(ys):
        off = 0.5 * h if r % 2 else 0.0
        for x in xs:
            pts.append((x + off, y))
    return np.array(pts) if pts else np.zeros((0, 2))


def _classify_boundary(lattice, nodes, tri, exclusions, solid, scale):
    counts = {}
    for el in tri:
        for a, b in ((el[0], el[1]), (el[1], el[2]), (el[2], el[0])):
            counts[frozenset((int(a), int(b)))] = counts.get(frozenset((int(a), int(b))), 0) + 1
    boundary = []
    bnd = solid.boundary
    rings = [shapely.LineString(ex.vertices.tolist() + [ex.vertices[0].tolist()])
             for ex in exclusions]
    for key, c in counts.items():
        if c != 1:
            continue
        a, b = sorted(key)
        mid = 0.5 * (nodes[a] + nodes[b])
        if bnd.distance(shapely.Point(mid)) > 1e-7 * scale:
            raise MeshError(f"boundary edge ({a}, {b}) strays from the solid boundary")
        tag, face = None, None
        for j in range(lattice.dimension):
            for m in (0, 1):
                if (_on_face(lattice, nodes[a], j, m, 1e-8)
                        and _on_face(lattice, nodes[b], j, m, 1e-8)
                        and _on_face(lattice, mid, j, m, 1e-8)):
                    tag, face = PERIODIC, (j, m)
        if tag is None:
            if not exclusions:
                raise MeshError(f"edge ({a}, {b}) lies on no face and no exclusion")
            p = shapely.Point(mid)
            tag = exclusions[int(np.argmin([r.distance(p) for r in rings]))].bc
        boundary.append(BoundaryEdge(nodes=(a, b), tag=tag, face=face))
    return boundary


def _match_periodic(lattice, nodes, boundary, tol_match):
    pairs = {}
    for j in range(lattice.dimension):
        ej = lattice.basis[j]
        side0 = sorted({n for be in boundary if be.tag == PERIODIC and be.face == (j, 0)
                        for n in be.nodes})
        side1 = sorted({n for be in boundary if be.tag == PERIODIC and be.face == (j, 1)
                        for n in be.nodes})
        if len(side0) != len(side1):
            raise UnmatchedPeriodicFace(
                f"face j={j + 1}: {len(side0)} side-0 nodes vs {len(side1)} side-1")
        if not side0:
            pairs[j] = []
            continue
        tree = cKDTree(nodes[side1])
        dist, idx = tree.query(nodes[side0] + ej)
        if dist.max() > tol_match:
            worst = side0[int(np.argmax(dist))]
            raise UnmatchedPeriodicFace(f"side-0 node {worst} has no side-1 partner")
        if len(set(idx)) != len(side0):
            raise UnmatchedPeriodicFace(f"face j={j + 1}: periodic map is not a bijection")
        pairs[j] = [(side0[i], side1[idx[i]]) for i in range(len(side0))]
    return pairs


# ---------------------------------------------------------------------------
# higher-order elements
# ---------------------------------------------------------------------------

# P2: one mid-edge node; P3: two edge nodes (at 1/3 and 2/3) plus a centroid node
_EDGE_FRACTIONS = {2: (0.5,), 3: (1.0 / 3.0, 2.0 / 3.0)}


def elevate_order(mesh: UnitCellMesh, order: int) -> UnitCellMesh:
    """Add Lagrange edge (and P3 centroid) nodes to a straight-sided P1 mesh."""
    if order == 1:
        return mesh
    if mesh.order != 1:
        raise MeshError("elevate_order expects a P1 mesh")
    fracs = _EDGE_FRACTIONS[order]
    nodes = [mesh.nodes]
    nxt = mesh.n_nodes
    edge_ids = {}

    def edge_nodes(a, b):
        nonlocal nxt
        key = (min(a, b), max(a, b))
        if key not in edge_ids:
            pts = [(1 - t) * mesh.nodes[key[0]] + t * mesh.nodes[key[1]] for t in fracs]
            edge_ids[key] = list(range(nxt, nxt + len(pts)))
            nodes.append(np.array(pts))
            nxt += len(pts)
        ids = edge_ids[key]
        return ids if (a, b) == key else ids[::-1]

    elems = []
    for el in mesh.elements:
        v = [int(x) for x in el[:3]]
        row = list(v)
        for a, b in ((v[0], v[1]), (v[1], v[2]), (v[2], v[0])):
            row += edge_nodes(a, b)
        if order == 3:
            nodes.append(mesh.nodes[v].mean(axis=0, keepdims=True))
            row.append(nxt)
            nxt += 1
        elems.append(row)

    boundary = []
    for be in mesh.boundary:
        a, b = be.nodes[0], be.nodes[1]
        boundary.append(BoundaryEdge(nodes=(a, b, *edge_nodes(a, b)), tag=be.tag, face=be.face))

    all_nodes = np.vstack(nodes)
    pairs = dict(mesh.periodic_pairs)
    for j in range(mesh.lattice.dimension):
        ej = mesh.lattice.basis[j]
        new0 = sorted({n for be in boundary if be.tag == PERIODIC and be.face == (j, 0)
                       for n in be.nodes[2:]})
        new1 = sorted({n for be in boundary if be.tag == PERIODIC and be.face == (j, 1)
                       for n in be.nodes[2:]})
        if new0:
            tree = cKDTree(all_nodes[new1])
            dist, idx = tree.query(all_nodes[new0] + ej)
            if dist.max() > mesh.h_max_actual * 1e-8 or len(set(idx)) != len(new0):
                raise UnmatchedPeriodicFace(f"higher-order nodes unmatched on face j={j + 1}")
            pairs[j] = pairs[j] + [(new0[i], new1[idx[i]]) for i in range(len(new0))]

    return UnitCellMesh(mesh.lattice, order, all_nodes, np.array(elems), boundary,
                        pairs, solid_area=mesh.solid_area, exclusions=mesh.exclusions)


# ---------------------------------------------------------------------------
# built-in cell geometries
# ---------------------------------------------------------------------------

def pinned_square_spec(a: float = 1.0, diameter: float = 0.25, h_max: float = 0.08,
                       order: int = 2, bc: str = DIRICHLET, segments: int = 0) -> CellGeometrySpec:
    """Square cell with one centered circular exclusion (polygonal facets)."""
    lattice = square_lattice(a)
    r = 0.5 * diameter * a
    # facet count tracks h_max so the area defect shrinks as O(h_max^2)
    n = segments or max(12, int(np.ceil(2 * np.pi * r / (h_max * a))))
    th = 2 * np.pi * np.arange(n) / n
    center = 0.5 * (lattice.basis[0] + lattice.basis[1])
    verts = center + r * np.stack([np.cos(th), np.sin(th)], axis=1)
    return CellGeometrySpec(lattice, [Exclusion(verts, bc)], h_max=h_max * a, order=order)


def empty_cell_spec(lattice: Lattice = None, h_max: float = 0.15, order: int = 2) -> CellGeometrySpec:
    """Full cell with no exclusions (homogeneous medium)."""
    return CellGeometrySpec(lattice or square_lattice(1.0), [], h_max=h_max, order=order)


def _trimmed_hexagon(center, lattice, a, hinge):
    """Regular hexagon of circumradius a centered on a lattice point, with each
    corner cut back perpendicular to its radius so that two hexagons meeting at
    a shared corner leave a ligament of width `hinge` between them."""
    e1, e2 = lattice.basis[0], lattice.basis[1]
    verts = [0.5 * (e1 - e2), 0.5 * e1, 0.5 * e2, -0.5 * (e1 - e2), -0.5 * e1, -0.5 * e2]
    out = []
    n = len(verts)
    for i in range(n):
        v, vn, vp = verts[i], verts[(i + 1) % n], verts[(i - 1) % n]
        u_next = (vn - v) / np.linalg.norm(vn - v)
        u_prev = (vp - v) / np.linalg.norm(vp - v)
        out.append(center + v + hinge * u_prev)
        out.append(center + v + hinge * u_next)
    return np.array(out)


def kagome_spec(a: float = 1.0, hinge: float = 0.04, h_max: float = 0.1,
                order: int = 2) -> CellGeometrySpec:
    """Trihexagonal cell: equilateral solid triangles of side a joined by
    hinges of width `hinge * a`, i.e. hexagonal Neumann voids with trimmed
    corners at the four cell corners.

    The hexagon at each lattice point has circumradius a with vertices at the
    half basis vectors.  Trimming every corner at cartesian distance
    ``hinge * a`` along both adjacent edges leaves, between the two voids that
    meet at each triangle-contact point, a ligament whose minimum width equals
    ``hinge * a``.  The resulting porosity is 0.75 * (1 - hinge^2).
    """
    lattice = kagome_lattice(a)
    h = hinge * a
    e1, e2 = lattice.basis[0], lattice.basis[1]
    cell = Polygon([(0, 0), tuple(e1), tuple(e1 + e2), tuple(e2)])
    exclusions = []
    for center in (np.zeros(2), e1, e2, e1 + e2):
        hexagon = Polygon(_trimmed_hexagon(center, lattice, a, h))
        piece = hexagon.intersection(cell)
        if piece.is_empty or piece.area <= 0:
            continue
        if piece.geom_type != "Polygon":
            raise MeshError("kagome void clipped into multiple pieces")
        exclusions.append(Exclusion(np.asarray(piece.exterior.coords)[:-1], NEUMANN))
    return CellGeometrySpec(lattice, exclusions, h_max=h_max * a, order=order)


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

_TAG_CODE = {PERIODIC: "P", NEUMANN: "N", DIRICHLET: "D"}
_CODE_TAG = {v: k for k, v in _TAG_CODE.items()}


def export_mesh(mesh: UnitCellMesh) -> str:
    lines = ["blochhom-mesh 1", mesh.lattice.to_text().rstrip("\n"), f"order {mesh.order}",
             f"nodes {mesh.n_nodes}"]
    for i, (x, y) in enumerate(mesh.nodes):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append(f"elements {mesh.n_elements}")
    for i, el in enumerate(mesh.elements):
        lines.append(f"{i} " + " ".join(str(int(n)) for n in el))
    lines.append(f"boundary {len(mesh.boundary)}")
    for be in mesh.boundary:
        code = _TAG_CODE[be.tag]
        extra = f" {be.face[0]} {be.face[1]}" if be.tag == PERIODIC else ""
        lines.append(" ".join(str(int(n)) for n in be.nodes) + f" {code}{extra}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def import_mesh(text: str) -> UnitCellMesh:
    """Parse the text format, re-derive periodic pairs, validate all invariants.

    Elements with negative signed area are flipped with a warning; every other
    invariant violation raises with the offending entity id.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("blochhom-mesh"):
        raise ParseError("missing 'blochhom-mesh' header")
    i = 1
    lat_lines = []
    while i < len(lines) and not lines[i].startswith("order"):
        lat_lines.append(lines[i])
        i += 1
    lattice = Lattice.from_text("\n".join(lat_lines))
    try:
        order = int(lines[i].split()[1]); i += 1
        n_nodes = int(lines[i].split()[1]); i += 1
        nodes = np.zeros((n_nodes, 2))
        for _ in range(n_nodes):
            tok = lines[i].split(); i += 1
            nodes[int(tok[0])] = (float(tok[1]), float(tok[2]))
        n_el = int(lines[i].split()[1]); i += 1
        elements = []
        for _ in range(n_el):
            tok = lines[i].split(); i += 1
            elements.append([int(t) for t in tok[1:]])
        elements = np.array(elements, dtype=np.int64)
        n_b = int(lines[i].split()[1]); i += 1
        boundary = []
        for _ in range(n_b):
            tok = lines[i].split(); i += 1
            if tok[-3] == "P":
                tag, face = PERIODIC, (int(tok[-2]), int(tok[-1]))
                node_tok = tok[:-3]
            else:
                tag, face = _CODE_TAG[tok[-1]], None
                node_tok = tok[:-1]
            boundary.append(BoundaryEdge(nodes=tuple(int(t) for t in node_tok),
                                         tag=tag, face=face))
    except (IndexError, KeyError, ValueError) as err:
        raise ParseError(f"malformed mesh file near line {i}: {err}") from None

    p = nodes[elements[:, :3]]
    areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    neg = np.nonzero(areas < 0)[0]
    if neg.size:
        warnings.warn(f"flipped {neg.size} elements with reversed orientation")
        if order == 1:
            elements[neg] = elements[neg][:, [0, 2, 1]]
        elif order == 2:
            elements[neg] = elements[neg][:, [0, 2, 1, 5, 4, 3]]
        else:
            elements[neg] = elements[neg][:, [0, 2, 1, 8, 7, 6, 5, 4, 3, 9]]
    if np.any(areas == 0):
        raise InvariantViolation(f"element {int(np.nonzero(areas == 0)[0][0])} is degenerate")

    solid_area = float(np.abs(areas).sum())
    h_est = float(np.linalg.norm(p[:, 1] - p[:, 0], axis=1).max())
    pairs = _match_periodic(lattice, nodes, boundary, tol_match=h_est * 1e-8)
    mesh = UnitCellMesh(lattice, order, nodes, elements, boundary, pairs,
                        solid_area=solid_area)
    mesh.validate()
    return mesh
