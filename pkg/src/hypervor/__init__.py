"""Hyperbolic Voronoi complexes for discrete groups, their dual graphs,
four-coloring based pruning and the resulting rank and volume bounds."""

from .kernel import (
    ORIGIN,
    HalfSpace,
    HyperbolicError,
    InvariantViolation,
    LorentzIsometry,
    bisector_halfspace,
    dist,
    point,
)
from .polytope import ConvexPolyhedron, Face, reduce_irredundant
from .voronoi import VoronoiComplex, build_complex, degeneracy_scan, enumerate_orbit, is_weakly_simple
from .thick_net import QuotientScene, build_dot_system, build_maximal_net, shortone
from .dual_graph import DualGraph, build_dual_graph, graph_stats, reroute_edge
from .coloring import build_coloring_system, doubly_distinguished, find_color_assignment
from .scene import SceneFile, make_scene, parse_scene
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "ORIGIN",
    "ConvexPolyhedron",
    "DualGraph",
    "Face",
    "HalfSpace",
    "HyperbolicError",
    "InvariantViolation",
    "LorentzIsometry",
    "QuotientScene",
    "SceneFile",
    "VoronoiComplex",
    "bisector_halfspace",
    "build_coloring_system",
    "build_complex",
    "build_dot_system",
    "build_dual_graph",
    "build_maximal_net",
    "degeneracy_scan",
    "dist",
    "doubly_distinguished",
    "enumerate_orbit",
    "find_color_assignment",
    "graph_stats",
    "is_weakly_simple",
    "make_scene",
    "parse_scene",
    "point",
    "reduce_irredundant",
    "reroute_edge",
    "run_pipeline",
    "shortone",
]
