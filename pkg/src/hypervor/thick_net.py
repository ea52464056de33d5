"""Thick part, maximal thick nets, good-set checks and dot systems.

Displacements are taken over the group elements of word length up to the
scene's cap, so ``shortone`` is an upper bound on the true value; it is
flagged as certified when every element at the cap displaces the point
by more than twice the reported value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .kernel import (
    TAU_GEOM,
    geodesic_point,
    TAU_NORM,
    HyperbolicError,
    LorentzIsometry,
    centroid,
    dist,
    exp_map,
    midpoint,
    normalize,
    pairwise_dist,
)
from .voronoi import (
    Cell,
    VoronoiComplex,
    enumerate_group,
    is_weakly_simple,
    reduce_word,
    word_inverse,
    word_matrix,
)

TAU_MARGIN = 1e-6
DEFAULT_B_HALF_EPSILON = 0.93
DEFAULT_DOT_SAMPLES = 48
# 1-face probes are pushed this far into each adjacent 2-face
PUSH = 1e-4
PROBE_SLACK = 1e-3


class EmptyNetError(HyperbolicError):
    pass


class SamplingResolutionError(HyperbolicError):
    pass


@dataclass(eq=False)
class QuotientScene:
    generators: list
    epsilon: float
    basepoints: np.ndarray = None
    word_length_cap: int = 3
    sample_budget: int = 200
    b_half_epsilon: float = DEFAULT_B_HALF_EPSILON
    relators: list = field(default_factory=list)
    truncation_radius: object = "auto"
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.b_half_epsilon > 0:
            raise ValueError("b_half_epsilon must be positive")
        self.generators = [g if isinstance(g, LorentzIsometry) else LorentzIsometry(np.asarray(g, float))
                           for g in self.generators]
        if self.basepoints is not None:
            self.basepoints = np.atleast_2d(np.asarray(self.basepoints, dtype=float))

    @cached_property
    def elements(self) -> list:
        """(word, isometry) pairs of the enumerated group ball, identity first."""
        if not self.generators:
            return [((), LorentzIsometry.identity())]
        return enumerate_group(self.generators, self.word_length_cap)

    @cached_property
    def _stack(self):
        nontrivial = self.elements[1:]
        M = np.array([g.m for _, g in nontrivial]).reshape(-1, 4, 4)
        lengths = np.array([len(w) for w, _ in nontrivial], dtype=int)
        return M, lengths

    @property
    def is_trivial(self) -> bool:
        return len(self.elements) == 1


@dataclass(frozen=True)
class Shortone:
    value: float
    certified: bool
    word: tuple = ()


def displacements(P, scene: QuotientScene) -> np.ndarray:
    """d(p, g p) for each row p and each nontrivial enumerated g; shape (n, k)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    M, _ = scene._stack
    if len(M) == 0:
        return np.zeros((len(P), 0))
    img = np.einsum("kij,nj->nki", M, P)
    ip = -img[..., 0] * P[:, None, 0] + np.einsum("nki,ni->nk", img[..., 1:], P[:, 1:])
    return np.arccosh(np.maximum(-ip, 1.0))


def shortone_values(P, scene: QuotientScene) -> np.ndarray:
    D = displacements(P, scene)
    if D.shape[1] == 0:
        return np.full(D.shape[0], np.inf)
    return D.min(axis=1)


def shortone(p, scene: QuotientScene) -> Shortone:
    """Minimal displacement of ``p`` over the enumerated nontrivial elements."""
    D = displacements(p, scene)[0]
    if len(D) == 0:
        return Shortone(np.inf, True)
    M, lengths = scene._stack
    k = int(np.argmin(D))
    value = float(D[k])
    at_cap = D[lengths == scene.word_length_cap]
    certified = bool(len(at_cap) and at_cap.min() > 2 * value)
    return Shortone(value, certified, scene.elements[k + 1][0])


@dataclass
class MargulisWitness:
    point: np.ndarray
    words: tuple
    displacements: tuple


def margulis_check(scene: QuotientScene, samples) -> tuple[bool, MargulisWitness | None]:
    """Look for two non-commuting elements both moving a sample less than epsilon."""
    P = np.atleast_2d(np.asarray(samples, dtype=float))
    D = displacements(P, scene)
    elems = scene.elements[1:]
    for n, p in enumerate(P):
        short = np.nonzero(D[n] < scene.epsilon)[0]
        for a_i, a in enumerate(short):
            for b in short[a_i + 1:]:
                ga, gb = elems[a][1], elems[b][1]
                if ga.commutator_norm(gb) > TAU_NORM:
                    w = MargulisWitness(p, (elems[a][0], elems[b][0]), (float(D[n, a]), float(D[n, b])))
                    return False, w
    return True, None


@dataclass(eq=False)
class ThickNet:
    net_points: np.ndarray
    epsilon: float
    maximality_certificate: list = field(default_factory=list)  # (point, reason)
    region_center: np.ndarray = None
    region_radius: float = 0.0

    def __len__(self):
        return len(self.net_points)


def orbit_distances(x, net_points, scene: QuotientScene) -> np.ndarray:
    """min over enumerated g of d(x, g q) for each net point q."""
    if len(net_points) == 0:
        return np.zeros(0)
    imgs = np.einsum("kij,nj->kni", np.array([g.m for _, g in scene.elements]), np.atleast_2d(net_points))
    D = pairwise_dist(np.atleast_2d(x), normalize(imgs.reshape(-1, 4)))[0]
    return D.reshape(len(scene.elements), -1).min(axis=0)


def region_samples(center, radius: float, n: int, seed: int) -> np.ndarray:
    """Scrambled Halton points spread over the ball B(center, radius)."""
    if n <= 0:
        return np.zeros((0, 4))
    u = qmc.Halton(d=3, scramble=True, seed=seed).random(n)
    r = radius * np.cbrt(u[:, 0])
    z = 2 * u[:, 1] - 1
    th = 2 * np.pi * u[:, 2]
    s = np.sqrt(1 - z * z)
    dirs = np.column_stack([s * np.cos(th), s * np.sin(th), z])
    return np.array([exp_map(center, ri * d) for ri, d in zip(r, dirs)])


def build_maximal_net(scene: QuotientScene, region_radius: float | None = None, candidates=None,
                      region_center=None, max_candidates: int | None = None) -> ThickNet:
    """Greedy epsilon-thick epsilon-net over the working region.

    Candidates are the basepoints followed by a quasi-random sequence; the
    run stops after ``sample_budget`` consecutive rejections.
    """
    eps = scene.epsilon
    base = scene.basepoints if scene.basepoints is not None else np.zeros((0, 4))
    c = centroid(base) if region_center is None and len(base) else region_center
    if c is None:
        c = np.array([1.0, 0.0, 0.0, 0.0])
    W = float(region_radius if region_radius is not None else
              (scene.truncation_radius if scene.truncation_radius != "auto" else 2 * eps))
    if candidates is None:
        limit = max_candidates or 50 * scene.sample_budget
        seq = region_samples(c, W, limit, scene.seed)
        candidates = np.vstack([base, seq]) if len(base) else seq
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    so = shortone_values(candidates, scene)
    net: list = []
    cert: list = []
    rejected_run = 0
    for x, s in zip(candidates, so):
        if s < eps - TAU_GEOM:
            cert.append((x, f"thin:{s:.6g}"))
            rejected_run += 1
        else:
            d = orbit_distances(x, np.array(net), scene) if net else np.zeros(0)
            if len(d) and d.min() < eps:
                cert.append((x, f"near:{int(np.argmin(d))}:{d.min():.6g}"))
                rejected_run += 1
            else:
                net.append(x)
                rejected_run = 0
        if rejected_run >= scene.sample_budget:
            break
    if not net:
        raise EmptyNetError("no epsilon-thick candidate found; the region is entirely thin")
    return ThickNet(np.array(net), eps, cert, c, W)


def verify_net(net: ThickNet, scene: QuotientScene, tol: float = TAU_GEOM) -> list[str]:
    """Violations of separation and thickness under the enumerated group."""
    out = []
    P = net.net_points
    so = shortone_values(P, scene)
    for i in np.nonzero(so < net.epsilon - tol)[0]:
        out.append(f"net point {i} is thin (shortone {so[i]:.6g})")
    for i in range(len(P)):
        d = orbit_distances(P[i], P[i + 1:], scene)
        for j in np.nonzero(d < net.epsilon - tol)[0]:
            out.append(f"net points {i} and {i + 1 + j} are {d[j]:.6g} apart in the quotient")
    return out


def face_samples(face, n: int, rng: np.random.Generator) -> np.ndarray:
    """Witness points of a face plus random positive combinations of them."""
    W = face.vertex_witnesses
    if len(W) == 0:
        return np.zeros((0, 4))
    pts = [W, centroid(W)[None]]
    if len(W) > 1 and n > 0:
        lam = rng.dirichlet(np.ones(len(W)), size=n)
        pts.append(normalize(lam @ W))
    return np.vstack(pts)


def edge_probes(face, n: int = 15) -> np.ndarray:
    """Deterministic interior points of a 1-face."""
    W = face.vertex_witnesses
    if len(W) != 2:
        return np.zeros((0, 4))
    t = np.arange(1, n + 1) / (n + 1)
    return geodesic_point(W[0], W[1], t)


def _push_toward(X, target, delta: float) -> np.ndarray:
    """Move each row of X a distance ``delta`` toward ``target``."""
    X = np.atleast_2d(X)
    d = pairwise_dist(X, target[None])[:, 0]
    t = np.minimum(1.0, delta / np.maximum(d, 1e-300))
    return geodesic_point(X, target[None], t)


def _strictly_inside_face(cell: Cell, face, X, margin: float = 1e-9) -> np.ndarray:
    """Points of X lying in the relative interior of ``face`` of ``cell``."""
    X = np.atleast_2d(X)
    U = np.array([h.u for h in cell.polyhedron.sources]).reshape(-1, 4)
    V = -np.outer(X[:, 0], U[:, 0]) + X[:, 1:] @ U[:, 1:].T
    on = np.zeros(len(U), dtype=bool)
    on[list(face.sources)] = True
    ok = np.all(np.abs(V[:, on]) <= 1e-8 * np.maximum(1.0, X[:, :1]), axis=1)
    return ok & np.all(V[:, ~on] < -margin, axis=1)


@dataclass
class GoodSetReport:
    weakly_simple: bool
    violators: list = field(default_factory=list)
    thick_failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.weakly_simple and not self.thick_failures


def good_set_check(net: ThickNet, vc: VoronoiComplex, scene: QuotientScene,
                   samples_per_face: int = 16, seed: int = 0) -> tuple[bool, GoodSetReport]:
    ws, wrep = is_weakly_simple(vc)
    rep = GoodSetReport(ws, list(wrep.violators))
    if scene.is_trivial:
        return rep.ok, rep
    rng = np.random.default_rng(seed)
    eps = scene.epsilon
    for cell in vc.base_cells():
        for f in cell.polyhedron.faces:
            if f.is_artificial:
                continue
            X = face_samples(f, samples_per_face, rng)
            if len(X) == 0:
                continue
            so = shortone_values(X, scene)
            if np.any(so >= eps) and not np.any(so > eps + TAU_MARGIN):
                rep.thick_failures.append((cell.site, f.dim, f.vertex_ids))
    return rep.ok, rep


@dataclass(frozen=True, eq=False)
class Dot:
    cell: int           # orbit index of the base cell holding the representative
    neighbor: int       # orbit index of the site across the 2-face
    face: object
    point: np.ndarray
    shortone: float

    @property
    def two_cell_id(self) -> tuple:
        return (self.cell, self.neighbor)


@dataclass(eq=False)
class DotSystem:
    dots: list
    region_center: np.ndarray = None
    region_radius: float = np.inf

    def __len__(self):
        return len(self.dots)


def facet_orbit_key(vc: VoronoiComplex, cell: int, neighbor: int) -> tuple:
    """Canonical label of the orbit of the 2-face between ``cell`` and ``neighbor``."""
    sites = vc.sites
    a, b = sites.orbit[cell], sites.orbit[neighbor]
    # base cell a (identity word) faces g * p_j; its partner is cell j facing g^-1 * p_i
    w = b.word
    fwd = (a.base_index, b.base_index, w)
    back = (b.base_index, a.base_index, reduce_word(word_inverse(w)))
    return min(fwd, back, key=lambda t: (t[0], t[1], len(t[2]), t[2]))


def _orbit_region_mask(X, c, W: float, scene: QuotientScene) -> np.ndarray:
    """Points within W of some enumerated translate of the region center."""
    if not np.isfinite(W):
        return np.ones(len(X), dtype=bool)
    M = np.array([g.m for _, g in scene.elements])
    C = normalize(np.einsum("kij,j->ki", M, c))
    return pairwise_dist(X, C).min(axis=1) <= W


def build_dot_system(net: ThickNet, vc: VoronoiComplex, scene: QuotientScene,
                     samples_per_face: int = DEFAULT_DOT_SAMPLES, seed: int = 0,
                     region_radius: float | None = None) -> DotSystem:
    """One dot per 2-face orbit meeting the thick part of the working region.

    Both base-cell copies of a 2-face are sampled; points from the second
    copy are carried into the frame of the canonical one.
    """
    rng = np.random.default_rng(seed)
    eps = scene.epsilon
    W = net.region_radius if region_radius is None else region_radius
    c = net.region_center if net.region_center is not None else vc.center
    S = vc.sites.sites
    gens = vc.sites.generators
    reps: dict = {}
    for cell in vc.base_cells():
        for f in cell.genuine_facets():
            nbr = cell.neighbor_of_facet(f)
            key = facet_orbit_key(vc, cell.site, nbr)
            a, b = vc.sites.orbit[cell.site], vc.sites.orbit[nbr]
            canonical = key == (a.base_index, b.base_index, b.word)
            to_canon = None if canonical else (word_matrix(key[2], gens) if gens else LorentzIsometry.identity())
            reps.setdefault(key, []).append((cell, f, nbr, to_canon))
    chosen: dict = {}
    for key in sorted(reps, key=lambda t: (t[0], t[1], len(t[2]), t[2])):
        group = sorted(reps[key], key=lambda r: r[3] is not None)
        home_cell, home_face, home_nbr, home_map = group[0]
        m = midpoint(S[home_cell.site], S[home_nbr])
        pts = []
        for cell, f, nbr, to_canon in group:
            X = _facet_candidates(cell, f, nbr, S, samples_per_face, rng)
            X = X[_strictly_inside_face(cell, f, X)]
            if len(X) == 0:
                continue
            keep = _orbit_region_mask(X, c, W, scene)
            keep &= vc.trusted_mask(X, cell.site)
            X = X[keep]
            if len(X) and to_canon is not None and home_map is None:
                X = to_canon.apply(X)
            pts.append(X)
        X = np.vstack(pts) if pts else np.zeros((0, 4))
        if len(X) == 0:
            continue
        so = shortone_values(X, scene)
        if not np.any(so >= eps):
            continue
        good = so > eps + TAU_MARGIN
        if not np.any(good):
            raise SamplingResolutionError(
                f"2-face {key} meets the thick part but no sample clears epsilon; raise the sample count")
        X, so = X[good], so[good]
        dm = pairwise_dist(X, m[None])[:, 0]
        order = np.lexsort((dm, -np.minimum(so, 1e300)))
        k = int(order[0])
        chosen[key] = Dot(home_cell.site, home_nbr, home_face, X[k], float(so[k]))
    order = sorted(chosen, key=lambda t: (t[0], t[1], len(t[2]), t[2]))
    return DotSystem([chosen[k] for k in order], c, W)


def _facet_candidates(cell: Cell, f, nbr: int, S, n: int, rng) -> np.ndarray:
    m = midpoint(S[cell.site], S[nbr])
    parts = [m[None], face_samples(f, n, rng)]
    hub = centroid(f.vertex_witnesses) if len(f.vertex_witnesses) else m
    fv = set(f.vertex_ids)
    for L in cell.polyhedron.faces_of_dim(1, include_artificial=False):
        if set(L.vertex_ids) <= fv:
            P = edge_probes(L)
            if len(P):
                parts.append(_push_toward(P, hub, PUSH))
    return np.vstack(parts)
