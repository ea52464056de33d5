"""Voronoi complexes of truncated group orbits.

Sites are the images of a few basepoints under all reduced group words up
to a length cap.  Cells are built for the sites inside a working ball;
each cell is reduced against every site that could possibly contribute a
bisector inside that ball, so cells are exact within it.  Combinatorial
face identity across cells uses the set of sites a face is equidistant
from.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    TAU_GEOM,
    HalfSpace,
    HyperbolicError,
    LorentzIsometry,
    _degenerate_batch,
    apply,
    bisector_halfspace,
    centroid,
    dist,
    exp_map,
    geodesic_point,
    pairwise_dist,
    random_unit_vectors,
)
from .polytope import ConvexPolyhedron, DegenerateInputError, Face, reduce_irredundant

Word = tuple  # letters: k+1 for generator k, -(k+1) for its inverse

DEFAULT_PERTURBATION = 1e-4
MAX_RETRIES = 16
SCAN_LIMIT = 64
AUTO_RADIUS_MIN = 1.0
AUTO_RADIUS_MAX = 5.0


class NonFreeActionWarning(UserWarning):
    pass


class ScanTooLargeError(HyperbolicError):
    pass


class ArtificialFaceError(HyperbolicError):
    pass


def word_inverse(w: Word) -> Word:
    return tuple(-a for a in reversed(w))


def word_matrix(w: Word, generators) -> LorentzIsometry:
    g = LorentzIsometry.identity()
    for a in w:
        h = generators[abs(a) - 1]
        g = g @ (h if a > 0 else h.inverse())
    return g


def reduce_word(w: Word) -> Word:
    out: list = []
    for a in w:
        if out and out[-1] == -a:
            out.pop()
        else:
            out.append(a)
    return tuple(out)


@dataclass(frozen=True)
class OrbitPoint:
    site: np.ndarray
    word: Word
    base_index: int


@dataclass(eq=False)
class SiteSystem:
    generators: list
    basepoints: np.ndarray
    word_length_cap: int
    elements: list = field(default_factory=list)  # (word, LorentzIsometry) deduplicated
    orbit: list = field(default_factory=list)

    @property
    def sites(self) -> np.ndarray:
        return np.array([o.site for o in self.orbit])

    def index_of(self, word: Word, base_index: int) -> int | None:
        for i, o in enumerate(self.orbit):
            if o.word == word and o.base_index == base_index:
                return i
        return None

    def base_site(self, k: int) -> int:
        return self.index_of((), k)


def enumerate_group(generators, cap: int):
    """Breadth-first reduced words up to ``cap``, deduplicated by matrix."""
    ident = LorentzIsometry.identity()
    elements = [((), ident)]
    seen = {_matrix_key(ident.m): 0}
    frontier = [((), ident)]
    letters = [k + 1 for k in range(len(generators))] + [-(k + 1) for k in range(len(generators))]
    mats = {a: (generators[a - 1] if a > 0 else generators[-a - 1].inverse()) for a in letters}
    for length in range(1, cap + 1):
        nxt = []
        for w, g in frontier:
            for a in letters:
                if w and w[-1] == -a:
                    continue
                h = g @ mats[a]
                key = _matrix_key(h.m)
                if key in seen:
                    if length <= 2 and elements[seen[key]][0] != w + (a,):
                        warnings.warn(
                            f"words {elements[seen[key]][0]} and {w + (a,)} give the same element;"
                            " torsion or a non-discrete group is suspected", NonFreeActionWarning)
                    continue
                seen[key] = len(elements)
                elements.append((w + (a,), h))
                nxt.append((w + (a,), h))
        frontier = nxt
    return elements


def _matrix_key(m: np.ndarray):
    return tuple(np.round(m, 6).ravel() + 0.0)


def enumerate_orbit(gens, basepoints, cap: int) -> SiteSystem:
    """All images of the basepoints under reduced words of length <= cap."""
    gens = [g if isinstance(g, LorentzIsometry) else LorentzIsometry(np.asarray(g, float)) for g in gens]
    base = np.atleast_2d(np.asarray(basepoints, dtype=float))
    elements = enumerate_group(gens, cap) if gens else [((), LorentzIsometry.identity())]
    orbit: list[OrbitPoint] = []
    pts = np.zeros((0, 4))
    for w, g in elements:
        imgs = apply(g, base)
        for k, x in enumerate(imgs):
            if len(pts):
                d = pairwise_dist(x[None], pts)[0]
                j = int(np.argmin(d))
                if d[j] <= TAU_GEOM:
                    if len(w) <= 2 and len(orbit[j].word) <= 2 and (orbit[j].word, orbit[j].base_index) != (w, k):
                        warnings.warn(f"orbit collision between {orbit[j].word} and {w};"
                                      " the action may not be free", NonFreeActionWarning)
                    continue
            orbit.append(OrbitPoint(x, w, k))
            pts = np.vstack([pts, x])
    return SiteSystem(gens, base, cap, elements, orbit)


@dataclass(eq=False)
class Cell:
    site: int
    polyhedron: ConvexPolyhedron
    neighbors: tuple  # source half-space index -> orbit index

    def face_key(self, face: Face) -> frozenset:
        return frozenset({self.site} | {self.neighbors[j] for j in face.sources})

    def facet_toward(self, other: int) -> Face | None:
        for f in self.polyhedron.faces_of_dim(2):
            if not f.truncation and self.face_key(f) == frozenset({self.site, other}):
                return f
        return None

    def genuine_facets(self) -> list[Face]:
        return [f for f in self.polyhedron.faces_of_dim(2) if not f.is_artificial]

    def neighbor_of_facet(self, face: Face) -> int:
        others = self.face_key(face) - {self.site}
        if len(others) != 1:
            raise DegenerateInputError(f"facet of cell {self.site} is equidistant from sites {sorted(others)}")
        return next(iter(others))


@dataclass(eq=False)
class OneFace:
    key: frozenset
    cells: tuple
    endpoints: np.ndarray
    artificial: bool
    trusted: bool

    @property
    def valence(self) -> int:
        return len(self.key)

    def midpoint(self) -> np.ndarray:
        if len(self.endpoints) == 2:
            return geodesic_point(self.endpoints[0], self.endpoints[1], 0.5)
        return self.endpoints[0]


@dataclass(eq=False)
class VoronoiComplex:
    sites: SiteSystem
    center: np.ndarray
    truncation_radius: float
    complete_radius: float
    cells: dict
    one_faces: list
    shared_faces: dict  # face key -> list of (orbit index, Face)

    def cell(self, i: int) -> Cell:
        return self.cells[i]

    def nearest_site(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.argmin(pairwise_dist(x, self.sites.sites), axis=1)

    def is_trusted(self, x, site: int) -> bool:
        """Whether the complex is exact near ``x`` for a point of the cell of ``site``."""
        dc = dist(self.center, x)
        if dc > self.truncation_radius + 1e-9:
            return False
        return dc + dist(x, self.sites.orbit[site].site) <= self.complete_radius

    def trusted_mask(self, X, site: int) -> np.ndarray:
        """Vectorized :meth:`is_trusted` over the rows of X."""
        X = np.atleast_2d(X)
        dc = pairwise_dist(X, self.center[None])[:, 0]
        dp = pairwise_dist(X, self.sites.orbit[site].site[None])[:, 0]
        return (dc <= self.truncation_radius + 1e-9) & (dc + dp <= self.complete_radius)

    def base_cells(self) -> list[Cell]:
        return [self.cells[self.sites.base_site(k)] for k in range(len(self.sites.basepoints))]


def auto_truncation_radius(sites: SiteSystem, epsilon: float = 0.0) -> float:
    """2 diam + 4 eps plus the largest nearest-site gap of a basepoint, clipped."""
    base = sites.basepoints
    diam = float(np.max(pairwise_dist(base))) if len(base) > 1 else 0.0
    gap = 0.0
    if len(sites.sites) > 1:
        D = pairwise_dist(base, sites.sites)
        D[D <= TAU_GEOM] = np.inf
        gap = float(np.max(np.min(D, axis=1)))
    return float(np.clip(2 * diam + 4 * epsilon + gap, AUTO_RADIUS_MIN, AUTO_RADIUS_MAX))


def _complete_radius(sites: SiteSystem, center) -> float:
    if not sites.generators:
        return np.inf
    far = [o.site for o in sites.orbit if len(o.word) == sites.word_length_cap]
    if not far:
        return np.inf
    return float(np.min(pairwise_dist(np.array(far), center[None])))


def build_complex(sites: SiteSystem, truncation_radius="auto", epsilon: float = 0.0,
                  center=None) -> VoronoiComplex:
    """Cells for every orbit site inside the working ball, with shared-face bookkeeping."""
    if len(sites.orbit) < 2:
        raise HyperbolicError("a Voronoi complex needs at least two sites")
    R = auto_truncation_radius(sites, epsilon) if truncation_radius == "auto" else float(truncation_radius)
    c = centroid(sites.basepoints) if center is None else np.asarray(center, dtype=float)
    S = sites.sites
    dc = pairwise_dist(S, c[None])[:, 0]
    D = pairwise_dist(S)
    base_ids = {sites.base_site(k) for k in range(len(sites.basepoints))}
    cells = {}
    for i in range(len(S)):
        if dc[i] >= R and i not in base_ids:
            continue
        # any site q bounding the cell inside B(c, R) has d(p, q) <= 2 (R + d(c, p))
        reach = 2 * (R + dc[i])
        nbrs = [j for j in np.argsort(D[i], kind="stable") if j != i and D[i, j] <= reach]
        hs = [bisector_halfspace(S[i], S[j]) for j in nbrs]
        poly = reduce_irredundant(hs, max(R, dc[i] + 0.5), c, chart_center=S[i], interior=S[i])
        cells[i] = Cell(int(i), poly, tuple(int(j) for j in nbrs))
    complex_ = VoronoiComplex(sites, c, R, _complete_radius(sites, c), cells, [], {})
    _index_faces(complex_)
    return complex_


def _index_faces(vc: VoronoiComplex) -> None:
    shared: dict = {}
    for i, cell in sorted(vc.cells.items()):
        for f in cell.polyhedron.faces:
            if f.dim >= 3 or f.is_artificial:
                continue
            shared.setdefault(cell.face_key(f), []).append((i, f))
    vc.shared_faces = shared
    ones = []
    for key, entries in sorted(shared.items(), key=lambda kv: sorted(kv[0])):
        dims = {f.dim for _, f in entries}
        if dims != {1}:
            continue
        i, f = entries[0]
        ends = f.vertex_witnesses
        trusted = any(vc.is_trusted(x, i) for x in _probe_points(ends))
        ones.append(OneFace(key, tuple(j for j, _ in entries), ends, False, trusted))
    vc.one_faces = ones


def _probe_points(ends):
    if len(ends) == 2:
        return [ends[0], geodesic_point(ends[0], ends[1], 0.5), ends[1]]
    return list(ends)


def valence(vc: VoronoiComplex, one_face: OneFace) -> int:
    """Number of 3-cells having the 1-face as a face."""
    if one_face.artificial:
        raise ArtificialFaceError("valence is undefined on artificial faces")
    return one_face.valence


@dataclass
class WeakSimplicityReport:
    checked: int = 0
    violators: list = field(default_factory=list)
    low_valence: list = field(default_factory=list)
    intersection_failures: list = field(default_factory=list)
    common_face_failures: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return not (self.low_valence or self.intersection_failures or self.common_face_failures)


def is_weakly_simple(vc: VoronoiComplex) -> tuple[bool, WeakSimplicityReport]:
    """Every trusted, non-artificial 1-face has valence exactly 3.

    The report also records structural checks: valence >= 3, the incident
    cells meeting exactly in the 1-face, and pairs of incident cells of a
    valence-3 edge sharing a 2-face.
    """
    rep = WeakSimplicityReport()
    for e in vc.one_faces:
        if e.artificial or not e.trusted:
            continue
        rep.checked += 1
        v = e.valence
        if v != 3:
            rep.violators.append(e)
        if v < 3:
            rep.low_valence.append(e)
        if not _incident_intersection_ok(vc, e):
            rep.intersection_failures.append(e)
        if v == 3 and not _pairwise_common_faces(vc, e):
            rep.common_face_failures.append(e)
    return not rep.violators, rep


def _incident_intersection_ok(vc: VoronoiComplex, e: OneFace) -> bool:
    S = vc.sites.sites
    key = sorted(e.key)
    m = e.midpoint()
    d = pairwise_dist(m[None], S[key])[0]
    if np.ptp(d) > 1e-7 * max(1.0, d.max()):
        return False
    if len(e.endpoints) != 2:
        return True
    # just past each endpoint some incident site must stop being nearest
    for a, b in ((0, 1), (1, 0)):
        p, q = e.endpoints[a], e.endpoints[b]
        L = dist(p, q)
        beyond = geodesic_point(q, p, 1 + min(1e-3, 0.1) / max(L, 1e-12))
        dk = pairwise_dist(beyond[None], S[key])[0]
        dall = pairwise_dist(beyond[None], S)[0]
        if np.ptp(dk) <= 1e-9 and dall.min() >= dk.min() - 1e-12:
            # still equidistant and nearest: endpoint only legitimate on the truncation boundary
            if dist(vc.center, p) < vc.truncation_radius - 1e-6:
                return False
    return True


def _pairwise_common_faces(vc: VoronoiComplex, e: OneFace) -> bool:
    for a, b in itertools.combinations(sorted(e.key), 2):
        if a not in vc.cells:
            continue
        f = vc.cells[a].facet_toward(b)
        if f is None:
            return False
        cell = vc.cells[a]
        edge = [g for g in cell.polyhedron.faces_of_dim(1) if cell.face_key(g) == e.key]
        if edge and not set(edge[0].vertex_ids) <= set(f.vertex_ids):
            return False
    return True


def perturb_sites(sites: SiteSystem, magnitude: float, seed: int) -> SiteSystem:
    """Move each basepoint by at most ``magnitude`` and re-enumerate the orbit."""
    if magnitude <= 0:
        raise ValueError("magnitude must be positive")
    rng = np.random.default_rng(seed)
    n = len(sites.basepoints)
    dirs = random_unit_vectors(rng, n)
    radii = magnitude * rng.random(n)
    moved = np.array([exp_map(p, r * d) for p, r, d in zip(sites.basepoints, radii, dirs)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonFreeActionWarning)
        return enumerate_orbit(sites.generators, moved, sites.word_length_cap)


def make_weakly_simple(sites: SiteSystem, seed: int, truncation_radius="auto", epsilon: float = 0.0,
                       magnitude: float = DEFAULT_PERTURBATION, retries: int = MAX_RETRIES):
    """Perturb until the complex is weakly simple.

    Returns (sites, complex, attempts); attempt 0 is the unperturbed input.
    """
    seeds = np.random.SeedSequence(seed).spawn(retries)
    current = sites
    for attempt in range(retries + 1):
        try:
            vc = build_complex(current, truncation_radius, epsilon)
            ok, _ = is_weakly_simple(vc)
            if ok:
                return current, vc, attempt
        except DegenerateInputError:
            pass
        if attempt == retries:
            break
        s = int(seeds[attempt].generate_state(1)[0])
        current = perturb_sites(sites, magnitude / 2 ** attempt, s)
    raise DegenerateInputError(f"no weakly simple perturbation found in {retries} retries")


def degeneracy_scan(sites: SiteSystem, truncation_radius: float | None = None) -> list[tuple]:
    """Orbit quadruples lying on a common circle, horocycle or geodesic."""
    S = sites.sites
    n = len(S)
    if n > SCAN_LIMIT:
        raise ScanTooLargeError(f"{n} orbit points exceeds the scan limit of {SCAN_LIMIT}")
    if n < 4:
        return []
    R = auto_truncation_radius(sites) if truncation_radius in (None, "auto") else float(truncation_radius)
    D = pairwise_dist(S)
    close = D <= 2 * R
    quads = np.array([q for q in itertools.combinations(range(n), 4)
                      if all(close[a, b] for a, b in itertools.combinations(q, 2))], dtype=int)
    if len(quads) == 0:
        return []
    out = []
    for chunk in np.array_split(quads, max(1, len(quads) // 50000)):
        flags = _degenerate_batch(S[chunk])
        out += [tuple(int(i) for i in q) for q in chunk[flags]]
    return out
