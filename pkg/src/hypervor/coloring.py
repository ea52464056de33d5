"""Facet four-colorings, coloring systems, color assignments and pruning.

An oriented edge is *distinguished* when its color equals the color
assigned to its initial vertex; an edge is *doubly distinguished* when both
of its orientations are.  Uniformly random assignments make each non-loop
edge doubly distinguished with probability 1/16, which the derandomized
search realizes deterministically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .dual_graph import (
    DualGraph,
    _edge_matrix,
    facet_adjacency,
    initially_adjacent,
    check_reroute,
    reroute_edge,
)
from .kernel import HyperbolicError

COLORS = (1, 2, 3, 4)
EXHAUSTIVE_LIMIT = 12


class ColoringError(HyperbolicError):
    pass


def facet_graph(poly) -> tuple[list[int], set]:
    """Genuine facets of a polyhedron (face indices) and their shared-edge adjacency."""
    facets = [i for i, f in enumerate(poly.faces) if f.dim == 2 and not f.is_artificial]
    return facets, facet_adjacency(poly)


def dsatur_color(nodes, edges, k: int = 4) -> dict:
    """Proper k-coloring by saturation-ordered backtracking; colors are 1..k."""
    nbrs = {v: set() for v in nodes}
    for e in edges:
        a, b = tuple(e)
        nbrs[a].add(b)
        nbrs[b].add(a)
    color: dict = {}

    def pick():
        best, key = None, None
        for v in nodes:
            if v in color:
                continue
            sat = len({color[u] for u in nbrs[v] if u in color})
            kv = (sat, len(nbrs[v]), -v)
            if key is None or kv > key:
                best, key = v, kv
        return best

    def solve() -> bool:
        v = pick()
        if v is None:
            return True
        used = {color[u] for u in nbrs[v] if u in color}
        for c in range(1, k + 1):
            if c not in used:
                color[v] = c
                if solve():
                    return True
                del color[v]
        return False

    if not solve():
        raise ColoringError("no proper coloring found; the facet graph is not planar")
    return color


def four_color_cell(poly, extra_pairs=()) -> dict:
    """Face index -> color for the genuine facets, adjacent facets differing.

    ``extra_pairs`` adds adjacencies known from elsewhere, such as 1-faces
    cut away by the truncation but seen from a neighbouring cell.
    """
    facets, adj = facet_graph(poly)
    return dsatur_color(facets, adj | set(extra_pairs))


@dataclass
class ColoringSystem:
    colors: list                                 # color of each oriented edge
    kappa: dict = field(default_factory=dict)    # cell -> {face index: color}

    def __getitem__(self, eta: int) -> int:
        return self.colors[eta]


def build_coloring_system(vc, g: DualGraph) -> ColoringSystem:
    """Color every base cell and read off the color of each oriented edge."""
    kappa = {}
    for o in g.oriented:
        if o.cell not in kappa:
            kappa[o.cell] = four_color_cell(vc.cells[o.cell].polyhedron, g.facet_adjacency.get(o.init, ()))
    colors = [kappa[o.cell][o.facet] for o in g.oriented]
    cs = ColoringSystem(colors, kappa)
    bad = coloring_violations(g, cs)
    if bad:
        raise ColoringError(f"initially adjacent edges share a color: {bad[:3]}")
    return cs


def coloring_violations(g: DualGraph, cs: ColoringSystem) -> list[tuple[int, int]]:
    """Pairs of initially adjacent oriented edges with equal colors."""
    out = []
    by_init: dict = {}
    for o in g.oriented:
        by_init.setdefault(o.init, []).append(o.id)
    for ids in by_init.values():
        for a, b in itertools.combinations(ids, 2):
            if initially_adjacent(g, a, b) and cs.colors[a] == cs.colors[b]:
                out.append((a, b))
    return out


def doubly_distinguished(g: DualGraph, cs: ColoringSystem, assignment) -> set[int]:
    """Edges both of whose orientations carry their initial vertex's color; loops included."""
    out = set()
    for k in range(g.edge_count):
        a, b = g.oriented[2 * k], g.oriented[2 * k + 1]
        if cs.colors[a.id] == assignment[a.init] and cs.colors[b.id] == assignment[b.init]:
            out.add(k)
    return out


def _nonloop_table(g: DualGraph, cs: ColoringSystem) -> np.ndarray:
    """Rows (u, v, color wanted at u, color wanted at v) for non-loop edges."""
    rows = []
    for k in range(g.edge_count):
        a, b = g.oriented[2 * k], g.oriented[2 * k + 1]
        if a.init != a.term:
            rows.append((a.init, b.init, cs.colors[a.id], cs.colors[b.id]))
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def dd_counts_all(g: DualGraph, cs: ColoringSystem, chunk: int = 1 << 18) -> np.ndarray:
    """Doubly distinguished non-loop edge count for every assignment, in base-4 order."""
    s = g.s
    if s > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive search over 4^{s} assignments is too large; use derandomized mode")
    T = _nonloop_table(g, cs)
    total = 4 ** s
    out = np.zeros(total, dtype=np.int32)
    powers = 4 ** np.arange(s - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (idx[:, None] // powers) % 4 + 1  # vertex 0 is the most significant digit
        cnt = np.zeros(len(idx), dtype=np.int32)
        for u, v, cu, cv in T:
            cnt += (digits[:, u] == cu) & (digits[:, v] == cv)
        out[start:start + len(idx)] = cnt
    return out


def _derandomized(g: DualGraph, cs: ColoringSystem) -> tuple:
    T = _nonloop_table(g, cs)
    fixed: dict = {}
    for v in range(g.s):
        best, best_val = None, -1
        for c in COLORS:
            trial = dict(fixed)
            trial[v] = c
            # 16 * expected count with unfixed endpoints uniform
            val = 0
            for u, w, cu, cw in T:
                f = 1
                for x, cx in ((u, cu), (w, cw)):
                    f *= (4 * (trial[x] == cx)) if x in trial else 1
                val += f
            if val > best_val:
                best, best_val = c, val
        fixed[v] = best
    return tuple(fixed[v] for v in range(g.s))


def find_color_assignment(g: DualGraph, cs: ColoringSystem, mode: str = "derandomized") -> tuple[tuple, int]:
    """An assignment with at least #E0/16 doubly distinguished non-loop edges, and that count."""
    if mode == "exhaustive":
        counts = dd_counts_all(g, cs)
        i = int(np.argmax(counts))
        a = tuple(int(d) + 1 for d in np.base_repr(i, 4).zfill(g.s)) if g.s else ()
        return a, int(counts[i])
    if mode != "derandomized":
        raise ValueError(f"unknown mode {mode!r}")
    a = _derandomized(g, cs)
    count = sum(1 for k in doubly_distinguished(g, cs, a) if not g.is_loop(k))
    return a, count


@dataclass
class PrunedGraphs:
    s: int
    ndd_edges: list
    dagger_edges: list
    loop_counts: list     # non-dd loops per vertex, an upper bound for the rank of X_v
    dagger_connected: bool

    def ndd_graph(self, g: DualGraph) -> tuple[int, list]:
        return self.s, [g.edges()[k] for k in self.ndd_edges]

    def dagger_graph(self, g: DualGraph) -> tuple[int, list]:
        return self.s, [g.edges()[k] for k in self.dagger_edges]


def build_pruned_graphs(g: DualGraph, dd_edges) -> PrunedGraphs:
    dd = set(dd_edges)
    ndd = [k for k in range(g.edge_count) if k not in dd]
    dagger = [k for k in ndd if not g.is_loop(k)]
    loops = [0] * g.s
    for k in ndd:
        if g.is_loop(k):
            loops[g.oriented[2 * k].init] += 1
    ds = DisjointSet(range(g.s))
    for k in dagger:
        o = g.oriented[2 * k]
        ds.merge(o.init, o.term)
    connected = g.s == 0 or len(ds.subsets()) == 1
    return PrunedGraphs(g.s, ndd, dagger, loops, connected)


@dataclass
class EdgePath:
    edges: list
    lift_start: np.ndarray = None
    lift_end: np.ndarray = None

    def matrix(self, g: DualGraph) -> np.ndarray:
        m = np.eye(4)
        for eta in self.edges:
            m = m @ _edge_matrix(g.oriented[eta])
        return m

    def is_well_formed(self, g: DualGraph) -> bool:
        return all(g.oriented[a].term == g.oriented[b].init for a, b in zip(self.edges, self.edges[1:]))


def reroute_to_ndd(g: DualGraph, vc, dots, dd_edges, path: EdgePath, cs: ColoringSystem | None = None,
                   assignment=None, scene=None) -> EdgePath:
    """Replace every doubly distinguished traversal by its two-edge reroute."""
    dd = set(dd_edges)
    out = []
    for eta in path.edges:
        if (eta >> 1) not in dd:
            out.append(eta)
            continue
        r = reroute_edge(g, vc, dots, eta, scene)
        problems = check_reroute(g, eta, r)
        if problems:
            raise ColoringError(f"reroute of {eta} failed: {problems}")
        for new in (r.eta0, r.eta1):
            if (new >> 1) in dd:
                raise ColoringError(f"reroute of {eta} uses doubly distinguished edge {new >> 1}")
        out += [r.eta0, r.eta1]
    res = EdgePath(out, path.lift_start, path.lift_end)
    if not np.allclose(res.matrix(g), path.matrix(g), atol=1e-8, rtol=1e-8):
        raise ColoringError("rerouted path changes the lift endpoint")
    return res
