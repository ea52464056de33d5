"""End-to-end run: net, complex, dots, dual graph, coloring, pruning, bounds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bounds import GraphBoundInputs, betti_bound, rank_bound_graph
from .coloring import (
    build_coloring_system,
    build_pruned_graphs,
    coloring_violations,
    doubly_distinguished,
    find_color_assignment,
)
from .dual_graph import (
    DualGraph,
    OrientedEdge,
    check_reroute,
    build_dual_graph,
    edge_lengths,
    graph_stats,
    reroute_edge,
)
from .kernel import HyperbolicError, centroid, dist
from .polytope import DegenerateInputError
from .scene import SCHEMA, SceneFile, resolve_seed
from .thick_net import (
    ThickNet,
    build_dot_system,
    build_maximal_net,
    good_set_check,
    verify_net,
)
from .voronoi import (
    DEFAULT_PERTURBATION,
    MAX_RETRIES,
    build_complex,
    enumerate_orbit,
    is_weakly_simple,
    perturb_sites,
)

AUGMENT_LIMIT = 8


class StageFailure(HyperbolicError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


@dataclass(eq=False)
class PipelineResult:
    scene: SceneFile
    seed: int
    net: ThickNet
    complex: object
    dots: object
    graph: DualGraph
    coloring: object
    assignment: tuple
    dd_edges: set
    pruned: object
    lengths: list
    attempts: int
    augmentations: int
    report: dict = field(default_factory=dict)

    @property
    def violations(self) -> list:
        return self.report.get("violations", [])


def _retry_complex(points, qs, scene: SceneFile, seed: int, check_net: bool, max_retries: int):
    """Perturb until the complex is built and the good-set conditions hold."""
    sites0 = enumerate_orbit(qs.generators, points, qs.word_length_cap)
    seeds = np.random.SeedSequence(seed).spawn(max_retries)
    last = "no attempt made"
    for attempt in range(max_retries + 1):
        if attempt == 0:
            sites = sites0
        else:
            s = int(seeds[attempt - 1].generate_state(1)[0])
            sites = perturb_sites(sites0, DEFAULT_PERTURBATION / 2 ** (attempt - 1), s)
        net = ThickNet(sites.basepoints, qs.epsilon)
        if check_net:
            bad = verify_net(net, qs)
            if bad:
                last = bad[0]
                continue
        try:
            vc = build_complex(sites, scene.truncation_radius, qs.epsilon)
            ok, rep = good_set_check(net, vc, qs, seed=seed)
        except DegenerateInputError as exc:
            last = str(exc)
            continue
        if ok:
            return sites, vc, attempt
        last = f"{len(rep.violators)} valence violations, {len(rep.thick_failures)} thick-part failures"
    raise StageFailure("good_set", f"retries exhausted ({last})")


def run_pipeline(scene: SceneFile, seed: int | None = None, max_retries: int = MAX_RETRIES,
                 augment_limit: int = AUGMENT_LIMIT) -> PipelineResult:
    """Run every stage; deterministic for a fixed scene and seed."""
    seed = resolve_seed(seed, scene)
    qs = scene.quotient_scene()
    qs.seed = seed
    eps = qs.epsilon
    is_net = scene.mode == "net"
    if is_net:
        W = float(scene.truncation_radius) if scene.truncation_radius != "auto" else eps
        try:
            points = build_maximal_net(qs, region_radius=W).net_points
        except HyperbolicError as exc:
            raise StageFailure("net", str(exc)) from None
        center = centroid(qs.basepoints)
    else:
        W = np.inf
        points = qs.basepoints
        center = centroid(points)

    augmentations = 0
    while True:
        sites, vc, attempts = _retry_complex(points, qs, scene, seed, is_net, max_retries)
        net = ThickNet(sites.basepoints, eps, [], center, W)
        try:
            dots = build_dot_system(net, vc, qs, seed=seed)
        except HyperbolicError as exc:
            raise StageFailure("dots", str(exc)) from None
        if not is_net:
            break
        # a thick dot at distance >= eps from every orbit point means the net was not maximal
        far = [d for d in dots.dots if dist(d.point, vc.sites.sites[d.cell]) >= eps]
        if not far or augmentations >= augment_limit:
            break
        points = np.vstack([sites.basepoints, far[0].point[None]])
        augmentations += 1

    try:
        graph = build_dual_graph(net, vc, dots)
        cs = build_coloring_system(vc, graph)
    except HyperbolicError as exc:
        raise StageFailure("graph", str(exc)) from None
    assignment, dd_count = find_color_assignment(graph, cs, "derandomized")
    dd = doubly_distinguished(graph, cs, assignment)
    pruned = build_pruned_graphs(graph, dd)
    lengths = edge_lengths(graph, vc, dots)
    result = PipelineResult(scene, seed, net, vc, dots, graph, cs, assignment, dd, pruned,
                            lengths, attempts, augmentations)
    result.report = _report(result, qs, dd_count)
    return result


def _reroute_summary(res: PipelineResult, qs) -> dict:
    checked, failures = 0, []
    for k in sorted(res.dd_edges):
        if res.graph.is_loop(k):
            continue
        for eta in (2 * k, 2 * k + 1):
            checked += 1
            try:
                r = reroute_edge(res.graph, res.complex, res.dots, eta, qs)
            except HyperbolicError as exc:
                failures.append(f"edge {eta}: {exc}")
                continue
            probs = check_reroute(res.graph, eta, r)
            probs += [f"uses doubly distinguished edge {x >> 1}" for x in (r.eta0, r.eta1) if (x >> 1) in res.dd_edges]
            failures += [f"edge {eta}: {p}" for p in probs]
    return {"checked": checked, "failures": failures}


def _report(res: PipelineResult, qs, dd_count: int) -> dict:
    g = res.graph
    eps = qs.epsilon
    stats = graph_stats(g)
    ndd = graph_stats(res.pruned.ndd_graph(g))
    dag = graph_stats(res.pruned.dagger_graph(g))
    ws, wrep = is_weakly_simple(res.complex)
    E0 = stats.E - stats.L
    gb = GraphBoundInputs(stats.E, stats.L, stats.s, tuple(res.pruned.loop_counts))
    bb = betti_bound(gb)
    violations = []
    if not ws:
        violations.append("complex is not weakly simple")
    if not wrep.consistent:
        violations.append("complex fails a structural face check")
    if coloring_violations(g, res.coloring):
        violations.append("coloring system has equal colors on initially adjacent edges")
    if 16 * dd_count < E0:
        violations.append("assignment misses the 1/16 guarantee")
    if not res.pruned.dagger_connected:
        violations.append("pruned graph without loops is disconnected")
    if bb >= 0 and dag.betti > bb:
        violations.append("betti number of the pruned graph exceeds its bound")
    max_len = max(res.lengths) if res.lengths else 0.0
    if res.scene.mode == "net":
        violations += [f"net: {v}" for v in verify_net(res.net, qs)]
        if max_len >= 2 * eps:
            violations.append("an edge of the dual graph is not shorter than 2 eps")
    reroutes = _reroute_summary(res, qs)
    violations += [f"reroute: {f}" for f in reroutes["failures"]]
    return {
        "schema": SCHEMA,
        "seed": res.seed,
        "mode": res.scene.mode,
        "epsilon": eps,
        "attempts": res.attempts,
        "augmentations": res.augmentations,
        "net": {"size": len(res.net), "points": np.round(res.net.net_points, 12).tolist()},
        "complex": {
            "cells": len(res.complex.cells),
            "one_faces_checked": wrep.checked,
            "weakly_simple": ws,
            "truncation_radius": res.complex.truncation_radius,
        },
        "dots": len(res.dots),
        "graph": stats.__dict__,
        "graph_ndd": ndd.__dict__,
        "graph_dagger": dag.__dict__,
        "coloring": {"edge_colors": list(res.coloring.colors)},
        "assignment": {"colors": list(res.assignment), "dd_nonloop": dd_count, "E0": E0,
                       "dd_edges": sorted(res.dd_edges)},
        "bounds": {
            "betti_bound": str(bb),
            "betti_dagger": dag.betti,
            "betti_ok": bool(bb < 0 or dag.betti <= bb),
            "rank_bound_graph": str(rank_bound_graph(gb)),
            "loop_ranks": list(res.pruned.loop_counts),
        },
        "lengths": {"max": max_len, "two_eps": 2 * eps, "values": [round(x, 12) for x in res.lengths]},
        "reroutes": reroutes,
        "violations": violations,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


def graph_to_json(g: DualGraph, dd_edges=(), lengths=None, colors=None) -> dict:
    dd = set(dd_edges)
    edges = []
    for k in range(g.edge_count):
        a, b = g.oriented[2 * k], g.oriented[2 * k + 1]
        e = {"id": k, "init": a.init, "term": a.term, "loop": a.init == a.term, "dd": k in dd,
             "word": list(a.word), "facets": [a.facet, b.facet]}
        if lengths is not None:
            e["length"] = lengths[k]
        if colors is not None:
            e["colors"] = [colors[2 * k], colors[2 * k + 1]]
        if a.matrix is not None:
            e["matrix"] = np.asarray(a.matrix).ravel().tolist()
        edges.append(e)
    adjacency = {str(v): sorted(sorted(p) for p in pairs) for v, pairs in sorted(g.facet_adjacency.items())}
    return {"schema": SCHEMA, "vertices": list(range(g.s)), "edges": edges, "facet_adjacency": adjacency}


def parse_graph(data) -> DualGraph:
    """Inverse of :func:`graph_to_json` (geometry other than words and matrices is dropped)."""
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("schema") != SCHEMA:
        raise ValueError(f"expected schema {SCHEMA!r}")
    oriented = []
    for k, e in enumerate(data["edges"]):
        if e["id"] != k:
            raise ValueError("edge ids must be consecutive")
        m = np.array(e["matrix"], float).reshape(4, 4) if "matrix" in e else None
        minv = None
        if m is not None:
            J = np.diag([-1.0, 1, 1, 1])
            minv = J @ m.T @ J
        fa, fb = e.get("facets", [None, None])
        w = tuple(e.get("word", ()))
        oriented.append(OrientedEdge(2 * k, e["init"], e["term"], facet=fa, word=w, matrix=m))
        oriented.append(OrientedEdge(2 * k + 1, e["term"], e["init"], facet=fb,
                                     word=tuple(-a for a in reversed(w)), matrix=minv))
    adj = {int(v): {frozenset(p) for p in pairs} for v, pairs in data.get("facet_adjacency", {}).items()}
    return DualGraph(len(data["vertices"]), oriented, adj)


def graph_to_dot(g: DualGraph, dd_edges=(), lengths=None) -> str:
    dd = set(dd_edges)
    lines = ["digraph dual {"]
    for v in range(g.s):
        lines.append(f'  v{v} [label="{v}"];')
    for k in range(g.edge_count):
        a = g.oriented[2 * k]
        attrs = [f'loop="{str(a.init == a.term).lower()}"', f'dd="{str(k in dd).lower()}"']
        if lengths is not None:
            attrs.append(f'length="{lengths[k]:.12g}"')
        lines.append(f"  v{a.init} -> v{a.term} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
