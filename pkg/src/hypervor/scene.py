"""Scene files: strict JSON parsing, validation and emission."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernel import TAU_NORM, HyperbolicError, LorentzIsometry, _check_lorentz, _norm_defect
from .thick_net import DEFAULT_B_HALF_EPSILON, QuotientScene
from .voronoi import word_matrix

SCHEMA = "hypervor/1"
MODES = ("sites", "net")
REQUIRED = ("generators", "basepoints", "epsilon", "word_length_cap", "truncation_radius", "mode")
OPTIONAL = ("seed", "b_half_epsilon", "relators", "sample_budget")
SEED_ENV = "HYPERVOR_SEED"


class SceneError(ValueError):
    """Invalid scene; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class SceneFile:
    generators: list
    basepoints: list
    epsilon: float
    word_length_cap: int
    truncation_radius: object
    seed: int | None
    mode: str
    b_half_epsilon: float = DEFAULT_B_HALF_EPSILON
    relators: list = field(default_factory=list)
    sample_budget: int = 200

    def isometries(self) -> list[LorentzIsometry]:
        """Generators as isometries; identity generators are dropped (trivial factors)."""
        out = []
        for rows in self.generators:
            m = np.array(rows, dtype=float).reshape(4, 4)
            if np.allclose(m, np.eye(4), atol=TAU_NORM):
                continue
            out.append(LorentzIsometry(m))
        return out

    def points(self) -> np.ndarray:
        return np.array(self.basepoints, dtype=float).reshape(-1, 4)

    def quotient_scene(self) -> QuotientScene:
        return QuotientScene(self.isometries(), self.epsilon, self.points(), self.word_length_cap,
                             self.sample_budget, self.b_half_epsilon, self.relators,
                             self.truncation_radius, self.seed or 0)

    def to_dict(self) -> dict:
        return asdict(self)


def _number(path, v, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneError(path, "expected a number")
    if integer and not isinstance(v, int):
        raise SceneError(path, "expected an integer")
    if not np.isfinite(v):
        raise SceneError(path, "must be finite")
    if positive and not v > 0:
        raise SceneError(path, "must be positive")
    return v


def validate_scene(data) -> SceneFile:
    if not isinstance(data, dict):
        raise SceneError("$", "scene must be a JSON object")
    unknown = sorted(set(data) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise SceneError(f"$.{unknown[0]}", "unknown field")
    for k in REQUIRED:
        if k not in data:
            raise SceneError(f"$.{k}", "missing field")
    gens = data["generators"]
    if not isinstance(gens, list):
        raise SceneError("$.generators", "expected a list")
    for i, g in enumerate(gens):
        if not isinstance(g, list) or len(g) != 16:
            raise SceneError(f"$.generators[{i}]", "expected 16 numbers (row-major 4x4)")
        for j, x in enumerate(g):
            _number(f"$.generators[{i}][{j}]", x)
        try:
            _check_lorentz(np.array(g, dtype=float).reshape(4, 4))
        except HyperbolicError as exc:
            raise SceneError(f"$.generators[{i}]", str(exc)) from None
    pts = data["basepoints"]
    if not isinstance(pts, list) or not pts:
        raise SceneError("$.basepoints", "expected a nonempty list")
    for i, p in enumerate(pts):
        if not isinstance(p, list) or len(p) != 4:
            raise SceneError(f"$.basepoints[{i}]", "expected 4 numbers")
        for j, x in enumerate(p):
            _number(f"$.basepoints[{i}][{j}]", x)
        a = np.array(p, dtype=float)
        if a[0] <= 0 or _norm_defect(a) > 1e-8:
            raise SceneError(f"$.basepoints[{i}]", "not on the upper hyperboloid sheet")
    eps = _number("$.epsilon", data["epsilon"], positive=True)
    cap = _number("$.word_length_cap", data["word_length_cap"], integer=True)
    if cap < 0:
        raise SceneError("$.word_length_cap", "must be nonnegative")
    tr = data["truncation_radius"]
    if tr != "auto":
        _number("$.truncation_radius", tr, positive=True)
    seed = data.get("seed")
    if seed is not None:
        _number("$.seed", seed, integer=True)
        if not 0 <= seed < 2 ** 64:
            raise SceneError("$.seed", "must be an unsigned 64-bit integer")
    mode = data["mode"]
    if mode not in MODES:
        raise SceneError("$.mode", f"expected one of {list(MODES)}")
    b = _number("$.b_half_epsilon", data.get("b_half_epsilon", DEFAULT_B_HALF_EPSILON), positive=True)
    budget = _number("$.sample_budget", data.get("sample_budget", 200), positive=True, integer=True)
    relators = data.get("relators", [])
    if not isinstance(relators, list):
        raise SceneError("$.relators", "expected a list of words")
    for i, w in enumerate(relators):
        if not isinstance(w, list) or not all(isinstance(a, int) and not isinstance(a, bool) and a != 0
                                              and abs(a) <= len(gens) for a in w):
            raise SceneError(f"$.relators[{i}]", "expected a word of nonzero generator indices")
    scene = SceneFile(gens, pts, eps, cap, tr, seed, mode, b, relators, budget)
    if relators:
        isos = [LorentzIsometry(np.array(g, float).reshape(4, 4)) for g in gens]
        for i, w in enumerate(relators):
            if not np.allclose(word_matrix(tuple(w), isos).m, np.eye(4), atol=1e-8):
                raise SceneError(f"$.relators[{i}]", "word does not evaluate to the identity")
    return scene


def parse_scene(path) -> SceneFile:
    """Read and validate a scene file; IO errors propagate as OSError."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return validate_scene(data)


def emit_scene(scene: SceneFile) -> str:
    d = {k: v for k, v in scene.to_dict().items() if v is not None}
    return json.dumps(d, sort_keys=True, indent=2)


def resolve_seed(cli_seed: int | None, scene: SceneFile | None) -> int:
    """Explicit flag first, then the scene, then the environment, then 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if scene is not None and scene.seed is not None:
        return int(scene.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SceneError(SEED_ENV, "must be an integer") from None
    return 0


def make_scene(generators=(), basepoints=(), epsilon=float(np.log(3)), word_length_cap=2,
               truncation_radius="auto", seed=None, mode="sites", **extra) -> SceneFile:
    """Build a validated scene from matrices and points."""
    data = {
        "generators": [np.asarray(g.m if isinstance(g, LorentzIsometry) else g, float).ravel().tolist()
                       for g in generators],
        "basepoints": [np.asarray(p, float).tolist() for p in basepoints],
        "epsilon": float(epsilon),
        "word_length_cap": int(word_length_cap),
        "truncation_radius": truncation_radius,
        "mode": mode,
    }
    if seed is not None:
        data["seed"] = int(seed)
    data.update(extra)
    return validate_scene(data)
