"""Command-line workbench: ``hypervor <group> <command> ...``.

Exit codes: 0 success, 1 a property-violation report was produced,
2 input error, 3 IO error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import bounds as bd
from .coloring import build_coloring_system, find_color_assignment
from .polytope import DegenerateInputError
from .pipeline import (
    StageFailure,
    graph_to_dot,
    graph_to_json,
    report_json,
    run_pipeline,
)
from .scene import SCHEMA, SceneError, SceneFile, emit_scene, parse_scene, resolve_seed
from .thick_net import DEFAULT_B_HALF_EPSILON, build_maximal_net
from .voronoi import (
    ScanTooLargeError,
    build_complex,
    degeneracy_scan,
    enumerate_orbit,
    is_weakly_simple,
    make_weakly_simple,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class InputError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _check_b(b, allow_override: bool) -> Fraction:
    b = bd.exact(b)
    if b == bd.exact(DEFAULT_B_HALF_EPSILON):
        return b
    if not allow_override:
        raise InputError(f"b_half_epsilon = {b} differs from the default 0.93; pass --allow-b-override")
    lo, hi = bd.b_interval()
    if not bd.b_in_interval(b):
        raise InputError(f"b_half_epsilon = {float(b)} lies outside the accepted interval ({lo}, {hi}]")
    return b


def _load(args) -> SceneFile:
    scene = parse_scene(args.scene)
    _check_b(scene.b_half_epsilon, getattr(args, "allow_b_override", False))
    return scene


def _sites_for(scene: SceneFile, seed: int):
    qs = scene.quotient_scene()
    qs.seed = seed
    if scene.mode == "net":
        W = float(scene.truncation_radius) if scene.truncation_radius != "auto" else qs.epsilon
        points = build_maximal_net(qs, region_radius=W).net_points
    else:
        points = qs.basepoints
    return qs, enumerate_orbit(qs.generators, points, qs.word_length_cap)


def _complex_summary(vc) -> dict:
    cells = []
    for k, cell in enumerate(vc.base_cells()):
        poly = cell.polyhedron
        fvec = [len(poly.faces_of_dim(d, include_artificial=True)) for d in range(poly.dim + 1)]
        cells.append({
            "basepoint": k,
            "site": cell.site,
            "f_vector": fvec,
            "genuine_facets": len(cell.genuine_facets()),
            "compact": bool(poly.is_compact),
            "neighbors": [{"base": vc.sites.orbit[n].base_index, "word": list(vc.sites.orbit[n].word)}
                          for n in sorted(cell.neighbors)],
        })
    return {"schema": SCHEMA, "sites": len(vc.sites.sites), "truncation_radius": vc.truncation_radius,
            "cells": cells}


# ---- command handlers ----

def cmd_scene_validate(args) -> int:
    scene = parse_scene(args.scene)
    if args.emit:
        _emit(emit_scene(scene), args.out)
    else:
        gens = scene.isometries()
        _emit(_dump({"valid": True, "generators": len(gens), "trivial_group": not gens,
                     "basepoints": len(scene.basepoints), "mode": scene.mode}), args.out)
    return EXIT_OK


def cmd_voronoi_build(args) -> int:
    scene = _load(args)
    seed = resolve_seed(args.seed, scene)
    qs, sites = _sites_for(scene, seed)
    vc = build_complex(sites, scene.truncation_radius, qs.epsilon)
    _emit(_dump(_complex_summary(vc)), args.out)
    return EXIT_OK


def cmd_voronoi_check(args) -> int:
    scene = _load(args)
    seed = resolve_seed(args.seed, scene)
    qs, sites = _sites_for(scene, seed)
    if args.perturb:
        try:
            sites, vc, attempts = make_weakly_simple(sites, seed, scene.truncation_radius, qs.epsilon)
        except DegenerateInputError as exc:
            _emit(_dump({"schema": SCHEMA, "weakly_simple": False, "failed": True, "message": str(exc)}), args.out)
            return EXIT_VIOLATION
    else:
        vc, attempts = build_complex(sites, scene.truncation_radius, qs.epsilon), 0
    ok, rep = is_weakly_simple(vc)
    try:
        scan = [list(q) for q in degeneracy_scan(vc.sites)]
    except ScanTooLargeError:
        scan = None
    out = {
        "schema": SCHEMA,
        "weakly_simple": ok,
        "attempts": attempts,
        "one_faces_checked": rep.checked,
        "violators": [{"sites": sorted(f.key), "valence": f.valence} for f in rep.violators],
        "low_valence": len(rep.low_valence),
        "consistent": rep.consistent,
        "degenerate_quadruples": scan,
    }
    _emit(_dump(out), args.out)
    return EXIT_OK if ok and rep.consistent else EXIT_VIOLATION


def _run(args, scene):
    seed = resolve_seed(args.seed, scene)
    return run_pipeline(scene, seed=seed)


def cmd_graph_build(args) -> int:
    scene = _load(args)
    res = _run(args, scene)
    g = res.graph
    if args.format == "dot":
        _emit(graph_to_dot(g, (), res.lengths), args.out)
    else:
        _emit(_dump(graph_to_json(g, (), res.lengths)), args.out)
    return EXIT_OK


def cmd_graph_color(args) -> int:
    scene = _load(args)
    res = _run(args, scene)
    g = res.graph
    cs = build_coloring_system(res.complex, g)
    assignment, count = find_color_assignment(g, cs, args.mode)
    E0 = sum(1 for k in range(g.edge_count) if not g.is_loop(k))
    out = {
        "schema": SCHEMA,
        "kappa": {str(c): {str(f): col for f, col in sorted(m.items())} for c, m in sorted(cs.kappa.items())},
        "edge_colors": list(cs.colors),
        "assignment": list(assignment),
        "mode": args.mode,
        "dd_nonloop": count,
        "E0": E0,
        "meets_one_sixteenth": 16 * count >= E0,
    }
    _emit(_dump(out), args.out)
    return EXIT_OK if out["meets_one_sixteenth"] else EXIT_VIOLATION


def cmd_graph_prune(args) -> int:
    scene = _load(args)
    res = _run(args, scene)
    g, pr = res.graph, res.pruned
    if args.format == "dot":
        _emit(graph_to_dot(g, res.dd_edges, res.lengths), args.out)
        return EXIT_OK
    rep = res.report
    out = {
        "schema": SCHEMA,
        "dd_edges": sorted(res.dd_edges),
        "ndd_edges": list(pr.ndd_edges),
        "dagger_edges": list(pr.dagger_edges),
        "loop_counts": list(pr.loop_counts),
        "dagger_connected": pr.dagger_connected,
        "graph_ndd": rep["graph_ndd"],
        "graph_dagger": rep["graph_dagger"],
        "bounds": rep["bounds"],
    }
    _emit(_dump(out), args.out)
    return EXIT_OK if pr.dagger_connected and rep["bounds"]["betti_ok"] else EXIT_VIOLATION


def cmd_bounds_rank(args) -> int:
    out: dict = {"schema": SCHEMA}
    if args.graph is not None:
        E, L, s = args.graph
        ranks = tuple(args.loop_ranks) if args.loop_ranks else ()
        gi = bd.GraphBoundInputs(E, L, s, ranks)
        out["betti_bound"] = bd.betti_bound(gi)
        if ranks:
            out["rank_bound_graph"] = bd.rank_bound_graph(gi)
    if args.volume is not None:
        b = _check_b(args.b, args.allow_b_override)
        R = args.radius if args.radius is not None else bd.R_COROLLARY
        inp = bd.BoundInputs(args.volume, args.epsilon, R, args.c, args.rho, b)
        rep = bd.rank_volume_report(inp)
        out["volume_bound"] = {
            "bound": rep.bound,
            "volume_floor": rep.volume_floor,
            "inner_argument": rep.inner_argument,
            "inner_floor": rep.inner_floor,
            "inner_term": rep.inner_term,
            "corollary_bound": bd.corollary_bound(args.volume, args.rho, b),
        }
    if len(out) == 1:
        raise InputError("give --graph E L s and/or --volume V")
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_bounds_headline(args) -> int:
    b = _check_b(args.b, args.allow_b_override)
    cases = [args.case] if args.case != "all" else ["five_free", "nine_semifree", "closed_homology",
                                                    "cusped_homology"]
    reports = [bd.headline_bounds(args.volume, c, b) for c in cases]
    out = {"schema": SCHEMA, "b": b, "interval": list(bd.b_interval()),
           "cases": [{"case": r.case, "volume": r.V, "bound": r.bound, "checks": r.checks, "passed": r.passed}
                     for r in reports]}
    _emit(_dump(out), args.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def cmd_log2k1_check(args) -> int:
    rep = bd.log2k1_check(args.displacements)
    out = {"schema": SCHEMA, "sum": rep.total, "verdict": rep.verdict, "k": rep.k,
           "log_2k_minus_1": rep.threshold, "max_displacement": rep.max_displacement}
    if args.mode:
        r = bd.rho_from_mode(args.mode, args.k, args.displacements)
        out["rho"] = {"rho": r.rho, "mode": r.mode, "k": r.k, "independent_needed": r.independent_needed,
                      "supports_rank_bound": r.supports_rank_bound}
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_pipeline_run(args) -> int:
    scene = _load(args)
    try:
        res = _run(args, scene)
    except StageFailure as exc:
        _emit(_dump({"schema": SCHEMA, "failed": True, "stage": exc.stage, "message": exc.message}), args.out)
        return EXIT_VIOLATION
    _emit(report_json(res.report), args.out)
    if args.graph_out:
        text = graph_to_dot(res.graph, res.dd_edges, res.lengths) if args.graph_out.endswith(".dot") else \
            _dump(graph_to_json(res.graph, res.dd_edges, res.lengths, res.coloring.colors))
        _emit(text, args.graph_out)
    return EXIT_VIOLATION if res.violations else EXIT_OK


# ---- parser ----

def _add_scene(p, b_flag: bool = True):
    p.add_argument("scene", help="scene JSON file")
    p.add_argument("--seed", type=int, default=None, help="overrides the scene seed and HYPERVOR_SEED")
    if b_flag:
        p.add_argument("--allow-b-override", action="store_true",
                       help="accept a non-default b_half_epsilon inside the admissible interval")


def _add_out(p):
    p.add_argument("--out", default=None, help="write to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypervor", description="Voronoi complexes, dual graphs and rank bounds "
                                                              "for discrete groups of hyperbolic isometries.")
    groups = ap.add_subparsers(dest="group", required=True)

    sc = groups.add_parser("scene").add_subparsers(dest="command", required=True)
    p = sc.add_parser("validate", help="parse and validate a scene file")
    p.add_argument("scene")
    p.add_argument("--emit", action="store_true", help="print the normalized scene")
    _add_out(p)
    p.set_defaults(func=cmd_scene_validate)

    vo = groups.add_parser("voronoi").add_subparsers(dest="command", required=True)
    p = vo.add_parser("build", help="build the truncated Voronoi complex and summarize its base cells")
    _add_scene(p)
    _add_out(p)
    p.set_defaults(func=cmd_voronoi_build)
    p = vo.add_parser("check", help="weak simplicity and degeneracy report")
    _add_scene(p)
    p.add_argument("--perturb", action="store_true", help="perturb sites until weakly simple")
    _add_out(p)
    p.set_defaults(func=cmd_voronoi_check)

    gr = groups.add_parser("graph").add_subparsers(dest="command", required=True)
    p = gr.add_parser("build", help="dual graph export")
    _add_scene(p)
    p.add_argument("--format", choices=("json", "dot"), default="json")
    _add_out(p)
    p.set_defaults(func=cmd_graph_build)
    p = gr.add_parser("color", help="coloring system and color assignment")
    _add_scene(p)
    p.add_argument("--mode", choices=("derandomized", "exhaustive"), default="derandomized")
    _add_out(p)
    p.set_defaults(func=cmd_graph_color)
    p = gr.add_parser("prune", help="doubly distinguished edges and pruned graphs")
    _add_scene(p)
    p.add_argument("--format", choices=("json", "dot"), default="json")
    _add_out(p)
    p.set_defaults(func=cmd_graph_prune)

    bo = groups.add_parser("bounds").add_subparsers(dest="command", required=True)
    p = bo.add_parser("rank", help="graph and volume rank bounds")
    p.add_argument("--graph", type=int, nargs=3, metavar=("E", "L", "S"))
    p.add_argument("--loop-ranks", type=int, nargs="*")
    p.add_argument("--volume", type=float)
    p.add_argument("--rho", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=bd.EPS_LOG3)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--c", type=str, default=str(bd.C_COROLLARY))
    p.add_argument("--b", type=str, default=str(DEFAULT_B_HALF_EPSILON))
    p.add_argument("--allow-b-override", action="store_true")
    _add_out(p)
    p.set_defaults(func=cmd_bounds_rank)
    p = bo.add_parser("headline", help="headline bounds with their supporting inequalities")
    p.add_argument("--case", choices=("five_free", "nine_semifree", "closed_homology", "cusped_homology", "all"),
                   default="all")
    p.add_argument("--volume", type=str, default="1")
    p.add_argument("--b", type=str, default=str(DEFAULT_B_HALF_EPSILON))
    p.add_argument("--allow-b-override", action="store_true")
    _add_out(p)
    p.set_defaults(func=cmd_bounds_headline)

    lg = groups.add_parser("log2k1").add_subparsers(dest="command", required=True)
    p = lg.add_parser("check", help="sum of 1/(1+exp d) against 1/2")
    p.add_argument("displacements", type=float, nargs="+")
    p.add_argument("--mode", choices=("k_free", "semifree"), default=None)
    p.add_argument("--k", type=int, default=None)
    _add_out(p)
    p.set_defaults(func=cmd_log2k1_check)

    pi = groups.add_parser("pipeline").add_subparsers(dest="command", required=True)
    p = pi.add_parser("run", help="run every stage and write the report")
    _add_scene(p)
    p.add_argument("--graph-out", default=None, help="also write the graph (.dot for DOT, else JSON)")
    _add_out(p)
    p.set_defaults(func=cmd_pipeline_run)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if getattr(args, "mode", None) and getattr(args, "func", None) is cmd_log2k1_check and args.k is None:
        print("error: --mode needs --k", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"failed at stage {exc.stage}: {exc.message}", file=sys.stderr)
        return EXIT_VIOLATION
    except (SceneError, InputError, bd.DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
