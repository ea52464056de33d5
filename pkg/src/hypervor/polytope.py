"""Convex hyperbolic polyhedra as irredundant half-space intersections.

All combinatorics is done in a Beltrami-Klein chart, where hyperbolic
half-spaces are Euclidean half-spaces.  The chart is centred on a chosen
point (a Voronoi cell uses its own site) so that the region of interest
is well resolved.  The working ball is replaced by a circumscribed
80-facet polytope whose facets are tangent to the ball; faces lying in
one of those planes, or lying wholly outside H^3, are flagged artificial.

Face identity is the set of tight planes after snapping residuals at
``TAU_RANK``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.cluster.hierarchy import DisjointSet
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError, cKDTree

from .kernel import (
    ORIGIN,
    TAU_RANK,
    HalfSpace,
    HyperbolicError,
    LorentzIsometry,
    apply,
    centroid,
    dist,
    from_klein,
    pairwise_dist,
    to_klein,
)

TRUNCATION_FACETS = 80
# residuals in (TAU_RANK, AMBIGUITY_FACTOR * TAU_RANK] cannot be classified
AMBIGUITY_FACTOR = 10.0


class EmptyPolyhedronError(HyperbolicError):
    pass


class DegenerateInputError(HyperbolicError):
    """Rank or incidence decision too close to the snapping tolerance; perturb the input."""


@lru_cache(maxsize=1)
def truncation_normals() -> np.ndarray:
    """Unit normals of the 80 faces of a once-subdivided icosahedron."""
    phi = (1 + 5 ** 0.5) / 2
    verts = []
    for a, b in itertools.product((-1, 1), repeat=2):
        verts += [(0, a, b * phi), (a, b * phi, 0), (b * phi, 0, a)]
    V = np.array(verts, dtype=float)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    hull = ConvexHull(V)
    normals = []
    for tri in hull.simplices:
        a, b, c = V[tri]
        ab, bc, ca = [(x + y) / np.linalg.norm(x + y) for x, y in ((a, b), (b, c), (c, a))]
        for t in ((a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)):
            n = np.sum(t, axis=0)
            normals.append(n / np.linalg.norm(n))
    N = np.array(normals)
    assert len(N) == TRUNCATION_FACETS
    # deterministic order
    order = np.lexsort((N[:, 2], N[:, 1], N[:, 0]))
    return N[order]


def truncation_halfspaces(radius: float, center=ORIGIN) -> list[HalfSpace]:
    """Half-spaces of the 80-facet polytope circumscribing the ball B(center, radius)."""
    B = LorentzIsometry.translation_to(center)
    out = []
    for n in truncation_normals():
        u = np.concatenate([[np.sinh(radius)], np.cosh(radius) * n])
        out.append(HalfSpace(B.m @ u))
    return out


@dataclass(frozen=True, eq=False)
class Face:
    """One face of a polyhedron.

    ``active`` indexes the polyhedron's reduced half-space list,
    ``sources`` indexes the list it was built from (redundant members
    included), ``truncation`` the tight planes of the truncation polytope.
    """

    dim: int
    active: frozenset
    sources: frozenset
    truncation: frozenset
    vertex_ids: tuple
    klein: np.ndarray = field(repr=False)
    vertex_witnesses: np.ndarray = field(repr=False)
    is_artificial: bool = False

    @property
    def key(self) -> tuple:
        return (self.sources, self.truncation)


class ConvexPolyhedron:
    """Irredundant half-space intersection clipped to a truncation ball.

    Build through :func:`reduce_irredundant` and the other constructors.
    """

    def __init__(self, sources, kept, truncation_radius, truncation_center, chart_center,
                 faces, klein_vertices, dim):
        self.sources = tuple(sources)
        self.source_index = tuple(kept)
        self.halfspaces = tuple(self.sources[i] for i in kept)
        self.truncation_radius = float(truncation_radius)
        self.truncation_center = np.asarray(truncation_center, dtype=float)
        self.chart_center = np.asarray(chart_center, dtype=float)
        self.faces = list(faces)
        self.klein_vertices = klein_vertices
        self.dim = dim

    def __repr__(self):
        counts = [len(self.faces_of_dim(d)) for d in range(4)]
        return f"ConvexPolyhedron(dim={self.dim}, halfspaces={len(self.halfspaces)}, f-vector={counts})"

    def faces_of_dim(self, d: int, include_artificial: bool = True) -> list[Face]:
        return [f for f in self.faces if f.dim == d and (include_artificial or not f.is_artificial)]

    @property
    def facets(self) -> list[Face]:
        return self.faces_of_dim(self.dim - 1) if self.dim > 0 else []

    @property
    def is_compact(self) -> bool:
        """True when no face touches the truncation polytope."""
        return not any(f.truncation for f in self.faces)

    def genuine_facet(self, k: int) -> Face | None:
        """The facet carried by reduced half-space ``k``."""
        for f in self.faces:
            if f.dim == self.dim - 1 and not f.truncation and k in f.active:
                return f
        return None

    def contains(self, x, tol: float = 1e-9, truncate: bool = True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hs = list(self.halfspaces)
        if truncate:
            hs += truncation_halfspaces(self.truncation_radius, self.truncation_center)
        if not hs:
            return np.ones(len(x), dtype=bool)
        U = np.array([h.u for h in hs]) * np.array([-1.0, 1.0, 1.0, 1.0])
        return np.all(x @ U.T <= tol * np.maximum(1.0, x[:, :1]), axis=1)

    def vertices(self) -> np.ndarray:
        """Minkowski coordinates of the vertices that lie in H^3."""
        vs = [f.vertex_witnesses for f in self.faces_of_dim(0)]
        vs = [v for v in vs if len(v)]
        return np.vstack(vs) if vs else np.zeros((0, 4))

    def euler_characteristic(self) -> int:
        v, e, f = (len(self.faces_of_dim(d)) for d in range(3))
        return v - e + f

    def chart(self) -> LorentzIsometry:
        return LorentzIsometry.translation_to(self.chart_center)


def _affine_rank(P: np.ndarray, tol: float = TAU_RANK) -> int:
    if len(P) <= 1:
        return 0
    D = P[1:] - P[0]
    s = np.linalg.svd(D, compute_uv=False)
    if s[0] <= tol:
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


def _klein_planes(halfspaces, chart_inv: LorentzIsometry):
    """Klein-chart rows (a, b) with |a| = 1 meaning a . k <= b."""
    if not halfspaces:
        return np.zeros((0, 3)), np.zeros(0)
    U = np.array([h.u for h in halfspaces]) @ chart_inv.m.T
    a, b = U[:, 1:], U[:, 0]
    n = np.linalg.norm(a, axis=1)
    return a / n[:, None], b / n


def _interior_point(A, b):
    """Chebyshev centre of {A x <= b}; returns (x, radius) or None if infeasible."""
    m = len(A)
    c = np.zeros(4)
    c[3] = -1.0
    A_ub = np.hstack([A, np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * 3 + [(None, 1.0)], method="highs")
    if res.status != 0:
        return None
    return res.x[:3], res.x[3]


def _cluster(points: np.ndarray, tol: float, strict_mask: np.ndarray):
    """Merge points closer than tol; raise if a pair falls in the ambiguous band."""
    n = len(points)
    ds = DisjointSet(range(n))
    tree = cKDTree(points)
    for i, j in sorted(tree.query_pairs(AMBIGUITY_FACTOR * tol)):
        d = np.linalg.norm(points[i] - points[j])
        if d > tol and strict_mask[i] and strict_mask[j]:
            raise DegenerateInputError(
                f"two vertices {d:.3g} apart, inside the ambiguity band; perturb the input")
        ds.merge(i, j)
    groups = {}
    for i in range(n):
        groups.setdefault(ds[i], []).append(i)
    reps = sorted(groups.values(), key=lambda g: g[0])
    return np.array([points[g].mean(axis=0) for g in reps])


def _order_polygon(P: np.ndarray, normal: np.ndarray) -> np.ndarray:
    c = P.mean(axis=0)
    e1 = np.cross(normal, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 0.5:
        e1 = np.cross(normal, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    ang = np.arctan2((P - c) @ e2, (P - c) @ e1)
    return np.argsort(ang, kind="stable")


def _tight_matrix(A, b, V, strict_mask):
    R = V @ A.T - b  # (nv, m)
    absR = np.abs(R)
    band = (absR > TAU_RANK) & (absR <= AMBIGUITY_FACTOR * TAU_RANK)
    if np.any(band & strict_mask[:, None]):
        raise DegenerateInputError("incidence residual inside the ambiguity band; perturb the input")
    return absR <= TAU_RANK


def _vertex_enumeration_full(A, b, interior):
    try:
        hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), interior)
    except QhullError as exc:  # pragma: no cover - qhull failure is a degenerate input
        raise DegenerateInputError(f"qhull failed: {exc}") from exc
    P = hs.intersections
    return P[np.all(np.isfinite(P), axis=1)]


def _vertex_enumeration_brute(A, b):
    m = len(A)
    triples = np.array(list(itertools.combinations(range(m), 3)))
    M = A[triples]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-12
    sol = np.linalg.solve(M[ok], b[triples[ok]][..., None])[..., 0]
    feas = np.all(sol @ A.T <= b + TAU_RANK, axis=1)
    return sol[feas]


def _build(sources, radius, center, chart_center=None, interior=None) -> ConvexPolyhedron:
    sources = list(sources)
    center = np.asarray(center, dtype=float)
    chart_center = center if chart_center is None else np.asarray(chart_center, dtype=float)
    chart = LorentzIsometry.translation_to(chart_center)
    chart_inv = chart.inverse()
    trunc = truncation_halfspaces(radius, center)
    A_s, b_s = _klein_planes(sources, chart_inv)
    A_t, b_t = _klein_planes(trunc, chart_inv)
    A = np.vstack([A_s, A_t])
    b = np.concatenate([b_s, b_t])
    ns = len(sources)

    x0 = None
    if interior is not None:
        k = to_klein(apply(chart_inv, interior))
        if np.all(A @ k < b - 1e-9):
            x0 = k
    if x0 is None:
        got = _interior_point(A, b)
        if got is None or got[1] < -TAU_RANK:
            raise EmptyPolyhedronError("half-space intersection is empty within the truncation ball")
        x0, r = got
        full = r > 1e3 * TAU_RANK
    else:
        full = True

    if full:
        P = _vertex_enumeration_full(A, b, x0)
    else:
        P = _vertex_enumeration_brute(A, b)
        if len(P) == 0:
            raise EmptyPolyhedronError("half-space intersection is empty within the truncation ball")

    inside = np.sum(P * P, axis=1) < 1.0
    not_trunc = np.all(np.abs(P @ A_t.T - b_t) > AMBIGUITY_FACTOR * TAU_RANK, axis=1) if len(A_t) else inside
    V = _cluster(P, TAU_RANK, inside & not_trunc)
    inside = np.sum(V * V, axis=1) < 1.0
    strict = inside & (np.all(np.abs(V @ A_t.T - b_t) > AMBIGUITY_FACTOR * TAU_RANK, axis=1))
    T = _tight_matrix(A, b, V, strict)
    dim = _affine_rank(V)
    if full and dim < 3:
        raise DegenerateInputError("interior point found but vertex set is flat")

    if full:
        facet_sets, faces_v = _lattice_full(A, V, T)
    else:
        facet_sets, faces_v = _lattice_closure(V, T, dim)

    # irredundant user planes: first member of each facet group
    kept = []
    for group in facet_sets:
        users = [j for j in group if j < ns]
        if users:
            kept.append(users[0])
    if not full:
        # implicit equalities are kept as well
        all_v = np.all(T, axis=0)
        for j in np.nonzero(all_v[:ns])[0]:
            if j not in kept:
                kept.append(int(j))
    kept = sorted(set(kept))
    reduced = {j: k for k, j in enumerate(kept)}

    c_chart = apply(chart_inv, center)
    faces = []
    edge_witnesses = []
    for d, vids in sorted(faces_v, key=lambda dv: dv[0]):
        vids = tuple(sorted(vids))
        tight = np.all(T[list(vids)], axis=0) if vids else np.ones(A.shape[0], bool)
        tight_idx = np.nonzero(tight)[0]
        src = frozenset(int(j) for j in tight_idx if j < ns)
        tr = frozenset(int(j - ns) for j in tight_idx if j >= ns)
        act = frozenset(reduced[j] for j in src if j in reduced)
        K = V[list(vids)]
        ins = inside[list(vids)]
        if d == 0:
            wk = K[ins]
        elif d == 1 and len(vids) == 2:
            wk = _clip_segment(K[0], K[1], c_chart, radius)
            edge_witnesses.append((set(vids), wk))
        else:
            parts = [K[ins]] + [w for e, w in edge_witnesses if e <= set(vids)]
            wk = np.unique(np.vstack(parts), axis=0) if parts else np.zeros((0, 3))
            if len(wk) == 0 and len(K):
                wk = _hub_witnesses(K, c_chart, radius)
        w = apply(chart, from_klein(wk)) if len(wk) else np.zeros((0, 4))
        artificial = (bool(tr) or len(w) == 0) and d < dim
        faces.append(Face(d, act, src, tr, vids, K, w, artificial))
    faces.sort(key=lambda f: (f.dim, f.vertex_ids))
    return ConvexPolyhedron(sources, kept, radius, center, chart_center, faces, V, dim)


CLIP_EXTRA = (2.0, 8.0)


def _hub_witnesses(K, center, radius):
    """Witnesses for a face whose boundary lies outside the ball.

    The Klein centroid of its vertices, when inside the ball, is joined to
    each vertex and the spokes are clipped to the working radius.
    """
    hub = K.mean(axis=0)
    if hub @ hub >= 1 - 1e-12:
        return np.zeros((0, 3))
    out = [hub[None]]
    for k in K:
        w = _clip_segment(hub, k, center, radius)
        if len(w):
            out.append(w)
    return np.unique(np.vstack(out), axis=0)


def _clip_segment(a, b, center, radius):
    """Part of the Klein segment [a, b] inside a hyperbolic ball around ``center``.

    Tries balls of radius ``radius + extra`` for each extra in CLIP_EXTRA and
    returns the two clipped endpoints, or an empty array if the segment
    misses all of them.
    """
    d = b - a
    for extra in CLIP_EXTRA:
        C = np.cosh(radius + extra) ** 2
        alpha = -center[0] + a @ center[1:]
        beta = d @ center[1:]
        qa = -C * (d @ d) - beta ** 2
        qb = -2 * C * (a @ d) - 2 * alpha * beta
        qc = C * (1 - a @ a) - alpha ** 2
        disc = qb * qb - 4 * qa * qc
        if qa >= 0 or disc < 0:
            continue
        r = np.sqrt(disc)
        t0, t1 = sorted(((-qb + r) / (2 * qa), (-qb - r) / (2 * qa)))
        lo, hi = max(t0, 0.0), min(t1, 1.0)
        if lo < hi:
            return np.array([a + lo * d, a + hi * d])
    return np.zeros((0, 3))


def _lattice_full(A, V, T):
    """Vertices, edges, facets and the body of a full-dimensional polytope."""
    nv, m = T.shape
    groups = {}
    for j in range(m):
        vids = tuple(np.nonzero(T[:, j])[0])
        if len(vids) >= 3 and _affine_rank(V[list(vids)]) == 2:
            groups.setdefault(vids, []).append(j)
    facet_sets = [g for _, g in sorted(groups.items(), key=lambda kv: kv[1][0])]
    faces = [(0, (i,)) for i in range(nv)]
    edges = set()
    for vids, planes in groups.items():
        idx = np.array(vids)
        order = _order_polygon(V[idx], A[planes[0]])
        ring = idx[order]
        for a, c in zip(ring, np.roll(ring, -1)):
            edges.add((min(a, c), max(a, c)))
    faces += [(1, e) for e in sorted(edges)]
    faces += [(2, vids) for vids in sorted(groups)]
    faces.append((3, tuple(range(nv))))
    return facet_sets, faces


def _lattice_closure(V, T, dim):
    """Face lattice of a (possibly lower-dimensional) polytope by closing tight sets under intersection."""
    nv, m = T.shape
    full = frozenset(range(nv))
    found = {full}
    for j in range(m):
        Tj = frozenset(np.nonzero(T[:, j])[0])
        if not Tj or Tj == full:
            continue
        new = {f & Tj for f in found}
        found |= {f for f in new if f}
    faces = []
    facet_sets = []
    for f in sorted(found, key=lambda s: (len(s), sorted(s))):
        d = _affine_rank(V[sorted(f)])
        faces.append((d, tuple(sorted(f))))
        if d == dim - 1:
            planes = [j for j in range(m) if np.all(T[sorted(f), j]) and not np.all(T[:, j])]
            if planes:
                facet_sets.append(planes)
    facet_sets.sort(key=lambda g: g[0])
    return facet_sets, faces


def reduce_irredundant(halfspaces, truncation_radius: float, center=ORIGIN, *,
                       chart_center=None, interior=None) -> ConvexPolyhedron:
    """Intersect half-spaces within the truncation ball and drop the redundant ones.

    ``interior`` may give a point known to lie strictly inside, which
    skips the linear program for a Chebyshev centre.
    """
    if truncation_radius <= 0:
        raise ValueError("truncation radius must be positive")
    return _build(list(halfspaces), truncation_radius, center, chart_center, interior)


def face_lattice(p: ConvexPolyhedron) -> list[Face]:
    return list(p.faces)


def convex_hull_finite(points) -> ConvexPolyhedron:
    """Convex hull of finitely many points of H^3."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    c = centroid(P)
    radius = float(np.max(pairwise_dist(P, c[None]))) + 1.0
    chart = LorentzIsometry.translation_to(c)
    K = to_klein(apply(chart.inverse(), P))
    rank = _affine_rank(K)
    if rank == 3:
        hull = ConvexHull(K)
        eqs = np.unique(np.round(hull.equations, 12), axis=0)
        hs = [_klein_to_halfspace(e[:3], -e[3], chart) for e in eqs]
        return _build(hs, radius, c, interior=c if len(P) > 0 else None)
    # lower-dimensional hull: affine-hull equalities plus in-plane bounds
    hs = _lower_dim_hull_halfspaces(K, rank, chart)
    return _build(hs, radius, c)


def _klein_to_halfspace(a, b, chart: LorentzIsometry) -> HalfSpace:
    a = np.asarray(a, dtype=float)
    u = np.concatenate([[b], a])
    return HalfSpace(chart.m @ u)


def _lower_dim_hull_halfspaces(K, rank, chart):
    c = K.mean(axis=0)
    _, s, Vt = np.linalg.svd(K - c)
    basis, normals = Vt[:rank], Vt[rank:]
    hs = []
    for n in normals:
        off = float(n @ c)
        hs += [_klein_to_halfspace(n, off, chart), _klein_to_halfspace(-n, -off, chart)]
    if rank == 0:
        # pin the point with three coordinate slabs inside the normals' span
        return hs
    Q = (K - c) @ basis.T
    if rank == 1:
        lo, hi = Q[:, 0].min(), Q[:, 0].max()
        e = basis[0]
        hs += [_klein_to_halfspace(e, hi + e @ c, chart), _klein_to_halfspace(-e, -(lo + e @ c), chart)]
        return hs
    hull = ConvexHull(Q)
    for eq in hull.equations:
        n2, d2 = eq[:2], eq[2]
        n3 = n2 @ basis
        hs.append(_klein_to_halfspace(n3, -d2 + n3 @ c, chart))
    return hs


def _same_frame(p1: ConvexPolyhedron, p2: ConvexPolyhedron) -> bool:
    return (abs(p1.truncation_radius - p2.truncation_radius) < 1e-12
            and np.allclose(p1.truncation_center, p2.truncation_center))


def intersect(p1: ConvexPolyhedron, p2: ConvexPolyhedron) -> ConvexPolyhedron:
    """Intersection of two polyhedra sharing a truncation frame, re-reduced."""
    if not _same_frame(p1, p2):
        raise ValueError("polyhedra use different truncation balls")
    hs = list(p1.halfspaces) + list(p2.halfspaces)
    return _build(hs, p1.truncation_radius, p1.truncation_center, p1.chart_center)


def enclose_compact(points, margin: float) -> ConvexPolyhedron:
    """A compact polyhedron containing every point at depth >= margin.

    Built as the hull of a spherical point set around the centroid, refined
    until its facets are at distance >= r + margin from the centre while its
    vertices stay within r + 10 margin.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    P = np.atleast_2d(np.asarray(points, dtype=float))
    c = centroid(P)
    r = float(np.max(pairwise_dist(P, c[None])))
    inner, outer = np.tanh(r + margin), np.tanh(r + 10 * margin)
    chart = LorentzIsometry.translation_to(c)
    n = 32
    while True:
        dirs = _fibonacci_sphere(n)
        hull = ConvexHull(outer * dirs)
        if np.min(-hull.equations[:, 3]) >= inner or n > 1 << 17:
            break
        n *= 2
    eqs = np.unique(np.round(hull.equations, 13), axis=0)
    hs = [_klein_to_halfspace(e[:3], -e[3], chart) for e in eqs]
    return _build(hs, r + 20 * margin + 1.0, c, interior=c)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    rho = np.sqrt(1 - z * z)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])


def truncate_to_compact(f: ConvexPolyhedron, keep, margin: float = 0.25) -> ConvexPolyhedron:
    """Compact polyhedron inside ``f``, of the same dimension, containing ``keep``.

    Each proper face of the result lies in a proper face of ``f`` or misses ``keep``.
    """
    keep = np.atleast_2d(np.asarray(keep, dtype=float))
    if not np.all(f.contains(keep, tol=1e-9, truncate=False)):
        raise ValueError("keep points must lie inside the polyhedron")
    if f.is_compact:
        return f
    G = enclose_compact(keep, margin)
    hs = list(f.halfspaces) + list(G.halfspaces)
    return _build(hs, max(f.truncation_radius, G.truncation_radius + dist(G.truncation_center, f.truncation_center)),
                  f.truncation_center, f.chart_center)
