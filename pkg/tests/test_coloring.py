import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_sites
from hypervor.coloring import (
    ColoringError,
    ColoringSystem,
    EdgePath,
    build_coloring_system,
    build_pruned_graphs,
    coloring_violations,
    dd_counts_all,
    doubly_distinguished,
    dsatur_color,
    facet_graph,
    find_color_assignment,
    four_color_cell,
    reroute_to_ndd,
)
from hypervor.dual_graph import DualGraph, graph_stats, initially_adjacent
from hypervor.kernel import HalfSpace
from hypervor.polytope import reduce_irredundant
from hypervor.voronoi import build_complex, enumerate_orbit


def plane(normal, offset):
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    return HalfSpace(np.concatenate([[np.sinh(offset)], np.cosh(offset) * n]))


def geometric_adjacency(poly):
    """Facet pairs whose planes both vanish on some genuine 1-face."""
    facets = [i for i, f in enumerate(poly.faces) if f.dim == 2 and not f.is_artificial]
    pairs = set()
    for e in poly.faces_of_dim(1, include_artificial=False):
        W = e.vertex_witnesses
        on = []
        for i in facets:
            (k,) = poly.faces[i].sources
            v = poly.sources[k].value(W)
            if np.all(np.abs(v) <= 1e-8 * np.maximum(1.0, W[:, 0])):
                on.append(i)
        pairs |= {frozenset(p) for p in itertools.combinations(on, 2)}
    return pairs


def assert_proper(poly, colors):
    for a, b in geometric_adjacency(poly):
        assert colors[a] != colors[b]
    assert set(colors.values()) <= {1, 2, 3, 4}


def test_tetrahedral_cell_needs_four_colors():
    tet = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    poly = reduce_irredundant([plane(v, 0.3) for v in tet], 4.0)
    colors = four_color_cell(poly)
    assert len(colors) == 4 and len(set(colors.values())) == 4
    assert_proper(poly, colors)


def test_cube_cell_coloring_is_proper():
    poly = reduce_irredundant([plane(s * e, 0.4) for e in np.eye(3) for s in (1, -1)], 3.0)
    colors = four_color_cell(poly)
    assert len(colors) == 6
    assert_proper(poly, colors)


@pytest.mark.parametrize("seed", range(5))
def test_random_voronoi_cells_are_properly_colored(seed):
    vc = build_complex(enumerate_orbit([], random_sites(seed, 12, 1.2), 1), truncation_radius=2.5)
    for cell in vc.cells.values():
        facets, adj = facet_graph(cell.polyhedron)
        assert len(facets) <= 40
        assert adj == geometric_adjacency(cell.polyhedron)
        assert_proper(cell.polyhedron, four_color_cell(cell.polyhedron))


def test_nonplanar_graph_is_rejected():
    k5 = [frozenset(p) for p in itertools.combinations(range(5), 2)]
    with pytest.raises(ColoringError):
        dsatur_color(list(range(5)), k5)


def test_pipeline_coloring_system(trivial_run, cyclic_run):
    for res in (trivial_run, cyclic_run):
        g, cs = res.graph, res.coloring
        assert coloring_violations(g, cs) == []
        for o in g.oriented:
            assert cs[o.id] == cs.kappa[o.cell][o.facet]
        # every initially adjacent pair, checked directly
        for a, b in itertools.permutations(range(len(g.oriented)), 2):
            if g.oriented[a].init == g.oriented[b].init and initially_adjacent(g, a, b):
                assert cs[a] != cs[b]


def test_two_site_coloring_system():
    from test_dual_graph import two_site_graph

    g, vc, _ = two_site_graph()
    cs = build_coloring_system(vc, g)
    assert len(cs.colors) == 2
    assert all(c in (1, 2, 3, 4) for c in cs.colors)


def test_single_edge_assignment():
    g = DualGraph.from_edges(2, [(0, 1)])
    cs = ColoringSystem([3, 1])
    counts = dd_counts_all(g, cs)
    # exactly 4^(s-2) = 1 assignment distinguishes the edge from both sides
    assert int(np.sum(counts)) == 1
    a, n = find_color_assignment(g, cs, "exhaustive")
    assert a == (3, 1) and n == 1
    assert find_color_assignment(g, cs)[1] == 1


def test_exhaustive_beats_derandomized_on_a_random_graph(rng):
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4), (2, 5)]
    g = DualGraph.from_edges(6, edges)
    cs = ColoringSystem(list(rng.integers(1, 5, size=18)))
    _, best = find_color_assignment(g, cs, "exhaustive")
    _, greedy = find_color_assignment(g, cs, "derandomized")
    assert best >= greedy >= 1


def test_exhaustive_size_limit():
    g = DualGraph.from_edges(13, [(i, i + 1) for i in range(12)])
    with pytest.raises(ValueError):
        find_color_assignment(g, ColoringSystem([1] * 24), "exhaustive")
    with pytest.raises(ValueError):
        find_color_assignment(g, ColoringSystem([1] * 24), "random")


def test_doubly_distinguished_examples():
    g = DualGraph.from_edges(2, [(0, 1), (0, 0), (1, 1)])
    cs = ColoringSystem([1, 2, 3, 3, 2, 2])
    assert doubly_distinguished(g, cs, (4, 3)) == set()
    assert doubly_distinguished(g, cs, (1, 2)) == {0, 2}
    assert doubly_distinguished(g, cs, (3, 4)) == {1}          # loops count too
    assert doubly_distinguished(g, cs, (3, 2)) == {1, 2}


def test_pruned_graph_examples():
    g = DualGraph.from_edges(3, [(0, 1), (1, 2), (2, 2), (0, 2)])
    p = build_pruned_graphs(g, set())
    assert p.ndd_edges == [0, 1, 2, 3] and p.dagger_edges == [0, 1, 3]
    assert p.loop_counts == [0, 0, 1] and p.dagger_connected
    p = build_pruned_graphs(g, {0, 1, 3})
    assert p.dagger_edges == [] and not p.dagger_connected
    assert graph_stats(p.dagger_graph(g)).components == 3
    p = build_pruned_graphs(g, {1, 2})
    assert len(p.dagger_edges) == 4 - 1 - 1
    assert p.loop_counts == [0, 0, 0]


def test_reroute_to_ndd(cyclic_run):
    res = cyclic_run
    g = res.graph
    qs = res.scene.quotient_scene()
    k = next(k for k in range(g.edge_count) if not g.is_loop(k))
    other = [eta for eta in range(2 * g.edge_count) if eta >> 1 != k and g.oriented[eta].init == g.oriented[2 * k].term]
    path = EdgePath([2 * k, other[0]])
    assert reroute_to_ndd(g, res.complex, res.dots, set(), path, scene=qs).edges == path.edges
    out = reroute_to_ndd(g, res.complex, res.dots, {k}, path, scene=qs)
    assert len(out.edges) == 3 and out.edges[-1] == other[0]
    assert out.is_well_formed(g)
    assert all(eta >> 1 != k for eta in out.edges)
    assert np.max(np.abs(out.matrix(g) - path.matrix(g))) < 1e-8


@st.composite
def colored_graphs(draw, max_s=6):
    s = draw(st.integers(2, max_s))
    pairs = list(itertools.combinations(range(s), 2))
    edges = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=8))
    loops = draw(st.lists(st.integers(0, s - 1), max_size=2))
    edges = [tuple(e) for e in edges] + [(v, v) for v in loops]
    colors = draw(st.lists(st.integers(1, 4), min_size=2 * len(edges), max_size=2 * len(edges)))
    return DualGraph.from_edges(s, edges), ColoringSystem(colors)


@settings(max_examples=60, deadline=None)
@given(colored_graphs())
def test_averaging_identity_and_sixteenth_guarantee(gc):
    g, cs = gc
    E0 = g.edge_count - len(g.loops())
    counts = dd_counts_all(g, cs)
    assert int(counts.sum()) == 4 ** (g.s - 2) * E0
    assert 16 * int(counts.max()) >= E0
    a, n = find_color_assignment(g, cs)
    assert 16 * n >= E0
    # two independent passes over the edges agree with the library
    dd = {k for k in range(g.edge_count)
          if cs[2 * k] == a[g.oriented[2 * k].init] and cs[2 * k + 1] == a[g.oriented[2 * k + 1].init]}
    assert doubly_distinguished(g, cs, a) == dd
    assert n == sum(1 for k in dd if not g.is_loop(k))
