"""The graph dual to a dot system: net points joined across dotted 2-faces.

Each edge carries two oriented records.  Record ``2k`` starts at the cell
holding the dot, record ``2k + 1`` is its reverse, so reversal is ``id ^ 1``.
An oriented edge from vertex i with word g ends at the lift ``g p_j`` of its
terminal vertex; its reverse has word g^-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .kernel import HyperbolicError, LorentzIsometry, apply, dist, pairwise_dist
from .thick_net import (
    PROBE_SLACK,
    TAU_MARGIN,
    DotSystem,
    QuotientScene,
    _orbit_region_mask,
    edge_probes,
    shortone_values,
)
from .voronoi import VoronoiComplex, reduce_word, word_inverse, word_matrix

LIFT_TOL = 1e-8
SITE_MATCH_TOL = 1e-6


class ComplexInconsistencyError(HyperbolicError):
    pass


class ResolutionError(HyperbolicError):
    pass


class WeakSimplicityViolation(HyperbolicError):
    pass


@dataclass(frozen=True, eq=False)
class OrientedEdge:
    id: int
    init: int
    term: int
    cell: int | None = None       # orbit index of the cell at the initial vertex
    facet: int | None = None      # face index within that cell's polyhedron
    point: np.ndarray | None = None
    word: tuple = ()
    matrix: np.ndarray | None = None

    @property
    def edge(self) -> int:
        return self.id >> 1

    @property
    def reverse_id(self) -> int:
        return self.id ^ 1


@dataclass(eq=False)
class DualGraph:
    s: int
    oriented: list
    facet_adjacency: dict = field(default_factory=dict)  # vertex -> set of frozenset({facet, facet})
    lifts: dict = field(default_factory=dict)            # vertex -> basepoint

    @classmethod
    def from_edges(cls, s: int, edges, adjacency=None) -> "DualGraph":
        """A synthetic graph; edges are (init, term) pairs, optionally with facet ids."""
        oriented = []
        for k, e in enumerate(edges):
            a, b = e[0], e[1]
            fa, fb = (e[2], e[3]) if len(e) >= 4 else (None, None)
            oriented.append(OrientedEdge(2 * k, a, b, facet=fa))
            oriented.append(OrientedEdge(2 * k + 1, b, a, facet=fb))
        return cls(s, oriented, dict(adjacency or {}))

    @property
    def vertices(self) -> list:
        return list(range(self.s))

    @property
    def edge_count(self) -> int:
        return len(self.oriented) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(self.oriented[2 * k].init, self.oriented[2 * k].term) for k in range(self.edge_count)]

    def reverse(self, eta: int) -> int:
        return eta ^ 1

    def is_loop(self, k: int) -> bool:
        o = self.oriented[2 * k]
        return o.init == o.term

    def loops(self) -> list[int]:
        return [k for k in range(self.edge_count) if self.is_loop(k)]

    def out_edges(self, v: int) -> list[int]:
        return [o.id for o in self.oriented if o.init == v]


def facet_adjacency(poly) -> set:
    """Pairs of genuine facet indices sharing a genuine 1-face."""
    facets = {i: f for i, f in enumerate(poly.faces) if f.dim == 2 and not f.is_artificial}
    out = set()
    for e in poly.faces:
        if e.dim != 1 or e.is_artificial:
            continue
        ev = set(e.vertex_ids)
        holders = [i for i, f in facets.items() if ev <= set(f.vertex_ids)]
        for a in range(len(holders)):
            for b in range(a + 1, len(holders)):
                out.add(frozenset((holders[a], holders[b])))
    return out


def orbit_facet_adjacency(vc: VoronoiComplex) -> dict:
    """Facet pairs of each base cell meeting in a 1-face of the quotient.

    A trusted valence-3 1-face is seen by its three cells.  Carrying it to
    the base cell of each of them also records pairs whose shared 1-face
    lies outside that base cell's working ball.
    """
    sites = vc.sites
    gens = sites.generators
    S = sites.sites
    base = {k: vc.cells[sites.base_site(k)] for k in range(len(sites.basepoints))}
    out = {k: facet_adjacency(c.polyhedron) for k, c in base.items()}
    facing = {}
    for k, cell in base.items():
        ids, pts = [], []
        for i, f in enumerate(cell.polyhedron.faces):
            if f.dim == 2 and not f.is_artificial:
                others = cell.face_key(f) - {cell.site}
                if len(others) == 1:
                    ids.append(i)
                    pts.append(S[next(iter(others))])
        facing[k] = (np.array(ids, dtype=int), np.array(pts).reshape(-1, 4))
    for e in vc.one_faces:
        if e.artificial or not e.trusted or e.valence != 3:
            continue
        for x in e.key:
            o = sites.orbit[x]
            ids, pts = facing[o.base_index]
            if len(ids) == 0:
                continue
            back = word_matrix(o.word, gens).inverse() if gens else LorentzIsometry.identity()
            D = pairwise_dist(apply(back, S[sorted(e.key - {x})]), pts)
            j = np.argmin(D, axis=1)
            if np.any(D[[0, 1], j] > SITE_MATCH_TOL) or j[0] == j[1]:
                continue
            out[o.base_index].add(frozenset((int(ids[j[0]]), int(ids[j[1]]))))
    return out


def _face_index(cell, face) -> int:
    for i, f in enumerate(cell.polyhedron.faces):
        if f is face:
            return i
    raise ComplexInconsistencyError("face not found in its cell")


def _facet_toward_point(vc: VoronoiComplex, cell, target) -> tuple[int, int] | None:
    """(face index, neighbor orbit index) of the genuine facet of ``cell`` facing a site at ``target``."""
    S = vc.sites.sites
    for i, f in enumerate(cell.polyhedron.faces):
        if f.dim != 2 or f.is_artificial:
            continue
        others = cell.face_key(f) - {cell.site}
        if len(others) == 1:
            j = next(iter(others))
            if dist(S[j], target) <= SITE_MATCH_TOL:
                return i, j
    return None


def build_dual_graph(net, vc: VoronoiComplex, dots: DotSystem) -> DualGraph:
    """One vertex per net point and one edge per dot, with both orientations recorded."""
    sites = vc.sites
    gens = sites.generators
    s = len(sites.basepoints)
    base_cell = {k: vc.cells[sites.base_site(k)] for k in range(s)}
    oriented = []
    for k, dot in enumerate(dots.dots):
        a = sites.orbit[dot.cell]
        b = sites.orbit[dot.neighbor]
        i, j = a.base_index, b.base_index
        w = b.word
        g = word_matrix(w, gens) if gens else LorentzIsometry.identity()
        ginv = g.inverse()
        cell_i = base_cell[i]
        fid = _face_index(cell_i, dot.face)
        # partner facet: cell of p_j facing g^-1 p_i
        cell_j = base_cell[j]
        target = apply(ginv, sites.basepoints[i])
        hit = _facet_toward_point(vc, cell_j, target)
        if hit is None:
            raise ComplexInconsistencyError(
                f"dot {k}: the 2-face is not shared by two cells; raise the word-length cap")
        fj, _ = hit
        if i == j and fj == fid:
            raise ComplexInconsistencyError(f"dot {k}: a 2-face is identified with itself")
        oriented.append(OrientedEdge(2 * k, i, j, cell_i.site, fid, dot.point, w, g.m))
        winv = reduce_word(word_inverse(w))
        oriented.append(OrientedEdge(2 * k + 1, j, i, cell_j.site, fj, apply(ginv, dot.point), winv, ginv.m))
    adjacency = orbit_facet_adjacency(vc)
    return DualGraph(s, oriented, adjacency, {v: sites.basepoints[v] for v in range(s)})


def initially_adjacent(g: DualGraph, eta: int, eta2: int) -> bool:
    """Whether the initial 2-faces of two oriented edges meet in a 1-face."""
    a, b = g.oriented[eta], g.oriented[eta2]
    if a.init != b.init:
        raise ValueError("initial adjacency needs a common initial vertex")
    if a.facet is None or b.facet is None or a.facet == b.facet:
        return False
    return frozenset((a.facet, b.facet)) in g.facet_adjacency.get(a.init, set())


def terminally_adjacent(g: DualGraph, eta: int, eta2: int) -> bool:
    return initially_adjacent(g, eta ^ 1, eta2 ^ 1)


def _edge_matrix(o: OrientedEdge) -> np.ndarray:
    return np.eye(4) if o.matrix is None else o.matrix


def _find_oriented(g: DualGraph, init: int, target, vc: VoronoiComplex) -> int | None:
    """Oriented edge from ``init`` whose terminal lift sits at ``target``."""
    S = vc.sites
    for o in g.oriented:
        if o.init != init:
            continue
        lift = apply(LorentzIsometry(o.matrix, validate=False), S.basepoints[o.term]) if o.matrix is not None \
            else S.basepoints[o.term]
        if dist(lift, target) <= SITE_MATCH_TOL:
            return o.id
    return None


@dataclass(frozen=True)
class Reroute:
    eta0: int
    eta1: int
    one_face: tuple  # vertex ids of the chosen 1-face in the crossed cell


def _trusted_with_slack(vc: VoronoiComplex, x, site: int) -> bool:
    dc = dist(vc.center, x)
    if dc > vc.truncation_radius - PROBE_SLACK:
        return False
    return dc + dist(x, vc.sites.orbit[site].site) <= vc.complete_radius - PROBE_SLACK


def reroute_edge(g: DualGraph, vc: VoronoiComplex, dots: DotSystem, eta: int,
                 scene: QuotientScene | None = None) -> Reroute:
    """Replace an oriented edge by two edges turning around a thick 1-face of its 2-face.

    The first leaves the same vertex across a 2-face adjacent to the
    crossed one, the second arrives at the same terminal vertex, and the
    composed group words equal the original word.  When the crossed 2-face
    cannot be resolved in the initial cell, the reversed edge is rerouted
    in the terminal cell and the result reversed.
    """
    try:
        return _reroute_from(g, vc, dots, eta, scene)
    except ResolutionError as first:
        try:
            r = _reroute_from(g, vc, dots, eta ^ 1, scene)
        except ResolutionError:
            raise first from None
        return Reroute(r.eta1 ^ 1, r.eta0 ^ 1, r.one_face)


def _reroute_from(g: DualGraph, vc: VoronoiComplex, dots: DotSystem, eta: int,
                  scene: QuotientScene | None) -> Reroute:
    o = g.oriented[eta]
    cell = vc.cells[o.cell]
    poly = cell.polyhedron
    F = poly.faces[o.facet]
    fv = set(F.vertex_ids)
    S = vc.sites.sites
    eps = scene.epsilon if scene is not None else 0.0
    c = dots.region_center if dots.region_center is not None else vc.center
    W = dots.region_radius
    cands = []
    for lid, L in enumerate(poly.faces):
        if L.dim != 1 or L.is_artificial or not set(L.vertex_ids) <= fv:
            continue
        X = edge_probes(L)
        if len(X) == 0:
            continue
        near = _orbit_region_mask(X, c, W - PROBE_SLACK, scene) if scene is not None else \
            pairwise_dist(X, c[None])[:, 0] <= W - PROBE_SLACK
        keep = [x for x, ok in zip(X, near) if ok and _trusted_with_slack(vc, x, cell.site)]
        if not keep:
            continue
        so = shortone_values(np.array(keep), scene) if scene is not None else np.full(len(keep), np.inf)
        top = float(np.max(so))
        if top > eps + TAU_MARGIN + PROBE_SLACK:
            cands.append((-top, lid, L))
    if not cands:
        raise ResolutionError(f"no 1-face of the 2-face crossed by edge {eta} meets the thick part")
    across = _facet_toward_point(vc, cell, apply(LorentzIsometry(_edge_matrix(o), validate=False),
                                                 vc.sites.basepoints[o.term]))
    if across is None:
        raise ComplexInconsistencyError("crossed 2-face does not face the terminal lift")
    missing = None
    for _, lid, L in sorted(cands, key=lambda t: (t[0], t[1])):
        key = cell.face_key(L)
        if len(key) != 3:
            raise WeakSimplicityViolation(f"1-face with valence {len(key)} on the crossed 2-face")
        third = next(iter(key - {cell.site, across[1]}))
        eta0 = _find_oriented(g, o.init, S[third], vc)
        if eta0 is None:
            missing = missing or "the 2-face across the third cell carries no dot"
            continue
        d = LorentzIsometry(_edge_matrix(g.oriented[eta0]), validate=False)
        target = apply(d.inverse(), S[across[1]])
        eta1 = _find_oriented(g, g.oriented[eta0].term, target, vc)
        if eta1 is None:
            missing = "the 2-face between the third and terminal cells carries no dot"
            continue
        return Reroute(eta0, eta1, tuple(L.vertex_ids))
    raise ResolutionError(missing)


def check_reroute(g: DualGraph, eta: int, r: Reroute, tol: float = LIFT_TOL) -> list[str]:
    """Adjacency, endpoint and lift conditions of a reroute; returns violations."""
    out = []
    o, a, b = g.oriented[eta], g.oriented[r.eta0], g.oriented[r.eta1]
    if r.eta0 == eta or r.eta1 == eta:
        out.append("reroute reuses the original edge")
    if a.init != o.init or not initially_adjacent(g, eta, r.eta0):
        out.append("first edge is not initially adjacent")
    if b.term != o.term or not terminally_adjacent(g, eta, r.eta1):
        out.append("second edge is not terminally adjacent")
    if a.term != b.init:
        out.append("edges do not concatenate")
    if np.max(np.abs(_edge_matrix(a) @ _edge_matrix(b) - _edge_matrix(o))) > tol * max(1.0, np.abs(_edge_matrix(o)).max()):
        out.append("composed word differs from the original")
    return out


def edge_lengths(g: DualGraph, vc: VoronoiComplex | None = None, dots: DotSystem | None = None) -> list[float]:
    """Length of the broken geodesic site -> dot -> terminal lift for each edge."""
    out = []
    for k in range(g.edge_count):
        o = g.oriented[2 * k]
        p = g.lifts[o.init]
        q = apply(LorentzIsometry(_edge_matrix(o), validate=False), g.lifts[o.term])
        out.append(dist(p, o.point) + dist(q, o.point))
    return out


@dataclass(frozen=True)
class GraphStats:
    E: int
    L: int
    s: int
    betti: int
    components: int

    def as_tuple(self) -> tuple:
        return (self.E, self.L, self.s, self.betti, self.components)


def graph_stats(g) -> GraphStats:
    """Edge, loop and vertex counts, betti number and component count.

    Accepts a :class:`DualGraph` or a pair ``(s, edges)``.
    """
    s, edges = (g.s, g.edges()) if isinstance(g, DualGraph) else g
    ds = DisjointSet(range(s))
    for a, b in edges:
        ds.merge(a, b)
    comps = len(ds.subsets()) if s else 0
    E = len(edges)
    L = sum(1 for a, b in edges if a == b)
    return GraphStats(E, L, s, E - s + comps, comps)
