"""Hyperboloid-model numerics for H^3.

Points are float arrays of shape (4,) on the upper sheet of
<x, x> = -1 in Minkowski space R^{1,3} (signature -+++).  Isometries are
4x4 matrices in SO+(1,3).  A half-space is stored by a unit spacelike
normal ``u`` and is the set {x : <x, u> <= 0}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU_NORM = 1e-10
TAU_GEOM = 1e-8
TAU_RANK = 1e-7

J = np.diag([-1.0, 1.0, 1.0, 1.0])
ORIGIN = np.array([1.0, 0.0, 0.0, 0.0])

# A point of H^3 is a plain ndarray; the alias documents intent.
MinkowskiPoint = np.ndarray


class HyperbolicError(ValueError):
    """Base class for geometric input errors."""


class InvariantViolation(HyperbolicError):
    pass


class DegenerateSitesError(HyperbolicError):
    pass


class CoincidentPointsError(HyperbolicError):
    pass


def mdot(x, y):
    """Minkowski bilinear form, broadcasting over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def _norm_defect(x):
    # relative so that far points (large x0) are not rejected for rounding
    return np.abs(mdot(x, x) + 1.0) / np.maximum(1.0, x[..., 0] ** 2)


def point(coords) -> MinkowskiPoint:
    """Validate and return a point of the upper sheet."""
    x = np.array(coords, dtype=float).reshape(4)
    if not np.all(np.isfinite(x)):
        raise InvariantViolation(f"non-finite coordinates {x}")
    if x[0] <= 0:
        raise InvariantViolation(f"point {x} is not on the upper sheet")
    if _norm_defect(x) > TAU_NORM:
        raise InvariantViolation(f"<x,x> = {mdot(x, x)!r}, expected -1")
    return x


def normalize(x):
    """Rescale (a batch of) timelike vectors onto the upper sheet."""
    x = np.asarray(x, dtype=float)
    q = -mdot(x, x)
    if np.any(q <= 0):
        raise InvariantViolation("cannot normalize a non-timelike vector")
    y = x / np.sqrt(q)[..., None]
    return y * np.sign(y[..., :1])


def from_spatial(v) -> MinkowskiPoint:
    """Lift spatial coordinates (x1, x2, x3) to the hyperboloid."""
    v = np.asarray(v, dtype=float)
    x0 = np.sqrt(1.0 + np.sum(v * v, axis=-1))
    return np.concatenate([x0[..., None], v], axis=-1)


def dist(p, q) -> float:
    """Hyperbolic distance, arccosh(-<p,q>), evaluated stably for small d."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = -mdot(p, q)
    scale = np.maximum(1.0, np.abs(p[..., 0] * q[..., 0]))
    if np.any(c < 1.0 - TAU_NORM * scale):
        raise InvariantViolation(f"-<p,q> = {c} < 1; points off the hyperboloid")
    d = p - q
    s = np.maximum(mdot(d, d), 0.0)
    out = 2.0 * np.arcsinh(np.sqrt(s) / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def pairwise_dist(P, Q=None):
    """Distance matrix between the rows of P and Q."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = P if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    G = -(P @ J @ Q.T)
    # 2 sinh^2(d/2) = cosh d - 1
    return 2.0 * np.arcsinh(np.sqrt(np.maximum(G - 1.0, 0.0) / 2.0))


def _check_lorentz(m: np.ndarray, tol: float = TAU_NORM) -> None:
    if m.shape != (4, 4) or not np.all(np.isfinite(m)):
        raise InvariantViolation("isometry must be a finite 4x4 matrix")
    scale = max(1.0, float(np.max(np.abs(m))) ** 2)
    if np.max(np.abs(m.T @ J @ m - J)) > tol * scale:
        raise InvariantViolation("matrix does not preserve the Minkowski form")
    if m[0, 0] <= 0:
        raise InvariantViolation("matrix swaps the sheets of the hyperboloid")
    if np.linalg.det(m) <= 0:
        raise InvariantViolation("matrix is orientation-reversing")


@dataclass(frozen=True, eq=False)
class LorentzIsometry:
    """Orientation-preserving isometry of H^3 as a matrix in SO+(1,3)."""

    m: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if self.validate:
            _check_lorentz(m)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "LorentzIsometry":
        return cls(np.eye(4))

    @classmethod
    def boost(cls, length: float, axis: int = 1) -> "LorentzIsometry":
        """Translation by ``length`` along the geodesic through the origin in direction x_axis."""
        m = np.eye(4)
        c, s = np.cosh(length), np.sinh(length)
        m[0, 0] = m[axis, axis] = c
        m[0, axis] = m[axis, 0] = s
        return cls(m)

    @classmethod
    def rotation(cls, angle: float, axis: int = 1) -> "LorentzIsometry":
        """Rotation by ``angle`` about the geodesic through the origin in direction x_axis."""
        i, j = [k for k in (1, 2, 3) if k != axis]
        m = np.eye(4)
        c, s = np.cos(angle), np.sin(angle)
        m[i, i] = m[j, j] = c
        m[i, j], m[j, i] = -s, s
        return cls(m)

    @classmethod
    def loxodromic(cls, length: float, twist: float = 0.0, axis: int = 1) -> "LorentzIsometry":
        return cls(cls.boost(length, axis).m @ cls.rotation(twist, axis).m)

    @classmethod
    def translation_to(cls, p) -> "LorentzIsometry":
        """The pure boost taking the origin to ``p``."""
        p = np.asarray(p, dtype=float)
        v = p[1:]
        m = np.empty((4, 4))
        m[0, 0] = p[0]
        m[0, 1:] = v
        m[1:, 0] = v
        m[1:, 1:] = np.eye(3) + np.outer(v, v) / (1.0 + p[0])
        return cls(m, validate=False)

    def __matmul__(self, other: "LorentzIsometry") -> "LorentzIsometry":
        return LorentzIsometry(self.m @ other.m, validate=False)

    def inverse(self) -> "LorentzIsometry":
        return LorentzIsometry(J @ self.m.T @ J, validate=False)

    def apply(self, p):
        return apply(self, p)

    def commutator_norm(self, other: "LorentzIsometry") -> float:
        a, b = self.m, other.m
        return float(np.max(np.abs(a @ b - b @ a)) / max(1.0, np.max(np.abs(a)) * np.max(np.abs(b))))


def apply(g: LorentzIsometry, p):
    """Apply ``g`` to a point (or rows of points) and renormalize."""
    p = np.asarray(p, dtype=float)
    y = p @ g.m.T
    defect = _norm_defect(y)
    if np.any(defect > 100 * TAU_NORM):
        raise InvariantViolation("isometry output drifted off the hyperboloid")
    return normalize(y)


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Closed half-space {x : <x, u> <= 0} with <u, u> = 1."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float).reshape(4)
        n = mdot(u, u)
        if n <= 0:
            raise InvariantViolation("half-space normal must be spacelike")
        if abs(n - 1.0) > TAU_NORM:
            u = u / np.sqrt(n)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def value(self, x):
        return mdot(x, self.u)

    def contains(self, x, tol: float = TAU_GEOM):
        x = np.asarray(x, dtype=float)
        return self.value(x) <= tol * np.maximum(1.0, x[..., 0])

    def transformed(self, g: LorentzIsometry) -> "HalfSpace":
        return HalfSpace(g.m @ self.u)

    def flipped(self) -> "HalfSpace":
        return HalfSpace(-self.u)

    def distance(self, x):
        """Signed hyperbolic distance from x to the bounding plane (negative inside)."""
        return np.arcsinh(self.value(x))


def bisector_halfspace(p, q) -> HalfSpace:
    """The half-space of points at least as close to ``p`` as to ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if dist(p, q) <= TAU_GEOM:
        raise DegenerateSitesError("bisector of coincident sites")
    # dist(x,p) <= dist(x,q)  <=>  -<x,p> <= -<x,q>  <=>  <x, q - p> <= 0
    return HalfSpace(q - p)


def is_degenerate_quadruple(p1, p2, p3, p4, tol: float = TAU_RANK) -> bool:
    """Whether four points lie on a common circle, horocycle or geodesic.

    The differences p_i - p_1 spanning at most a 2-plane puts the points on
    a plane section of the hyperboloid.  Sections whose direction plane is
    timelike and misses the origin are hypercycles; those are not
    degenerate for Voronoi purposes and are rejected.
    """
    pts = np.array([p1, p2, p3, p4], dtype=float)
    D = pairwise_dist(pts)
    iu = np.triu_indices(4, 1)
    if np.any(D[iu] <= TAU_GEOM):
        raise CoincidentPointsError("coincident points in quadruple; perturb first")
    return bool(_degenerate_batch(pts[None], tol)[0])


def _degenerate_batch(quads: np.ndarray, tol: float = TAU_RANK) -> np.ndarray:
    """Vectorized rank test over an array of shape (k, 4, 4)."""
    diffs = quads[:, 1:, :] - quads[:, :1, :]
    U, s, Vt = np.linalg.svd(diffs)
    low_rank = s[:, 2] <= tol * s[:, 0]
    out = np.zeros(len(quads), dtype=bool)
    if not np.any(low_rank):
        return out
    idx = np.nonzero(low_rank)[0]
    basis = Vt[idx, :2, :]  # rows span the difference plane
    G = basis @ J @ np.transpose(basis, (0, 2, 1))
    det = np.linalg.det(G)
    not_timelike = det >= -tol
    ps = np.linalg.svd(quads[idx], compute_uv=False)
    through_origin = ps[:, 2] <= tol * ps[:, 0]
    out[idx] = not_timelike | through_origin
    return out


def geodesic_point(p, q, t):
    """Point at fraction t of the way from p to q along the geodesic.

    Broadcasts over rows of ``p``/``q`` and over an array of fractions.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = np.asarray(dist(p, q), dtype=float)
    t = np.asarray(t, dtype=float)
    tiny = d < 1e-14
    ds = np.where(tiny, 1.0, d)
    a = np.where(tiny, 1 - t, np.sinh((1 - t) * ds) / np.sinh(ds))
    b = np.where(tiny, t, np.sinh(t * ds) / np.sinh(ds))
    return normalize(a[..., None] * p + b[..., None] * q)


def midpoint(p, q):
    return normalize(np.asarray(p, dtype=float) + np.asarray(q, dtype=float))


def centroid(points):
    """Normalized Minkowski barycenter of a set of points."""
    return normalize(np.sum(np.atleast_2d(points), axis=0))


def exp_map(p, v):
    """Point at distance |v| from p in the direction v, v given in the origin's tangent frame."""
    v = np.asarray(v, dtype=float)
    r = float(np.linalg.norm(v))
    if r == 0.0:
        return np.asarray(p, dtype=float).copy()
    q = np.concatenate([[np.cosh(r)], np.sinh(r) * v / r])
    return apply(LorentzIsometry.translation_to(p), q)


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_points(rng: np.random.Generator, n: int, radius: float, center=ORIGIN) -> np.ndarray:
    """n points at distance uniform in [0, radius] from ``center`` in random directions."""
    dirs = random_unit_vectors(rng, n)
    r = radius * rng.random(n)
    q = np.column_stack([np.cosh(r), np.sinh(r)[:, None] * dirs])
    return apply(LorentzIsometry.translation_to(center), q)


def to_klein(x):
    x = np.asarray(x, dtype=float)
    return x[..., 1:] / x[..., :1]


def from_klein(k):
    k = np.asarray(k, dtype=float)
    r2 = np.sum(k * k, axis=-1)
    if np.any(r2 >= 1.0):
        raise InvariantViolation("Klein coordinates outside the unit ball")
    x0 = 1.0 / np.sqrt(1.0 - r2)
    return np.concatenate([x0[..., None], k * x0[..., None]], axis=-1)
