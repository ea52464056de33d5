import warnings

import numpy as np
import pytest

from hypervor.kernel import ORIGIN, LorentzIsometry, random_points
from hypervor.voronoi import NonFreeActionWarning


ACCEPTANCE: list = []   # (number, verdict, detail) recorded by the acceptance suite


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, verdict, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{verdict} criterion {n}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_nonfree():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonFreeActionWarning)
        yield


def random_sites(seed: int, n: int, radius: float = 1.0):
    return random_points(np.random.default_rng(seed), n, radius, ORIGIN)


def schottky_pair(length: float = 1.6):
    return [LorentzIsometry.boost(length, 1), LorentzIsometry.boost(length, 2)]


def simplex_like_sites(seed: int = 0, radius: float = 0.4):
    """Four generic sites close to a regular tetrahedron about the origin."""
    from hypervor.kernel import exp_map

    tet = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
    jitter = np.random.default_rng(seed).normal(scale=0.05, size=(4, 3))
    return np.array([exp_map(ORIGIN, radius * v + j) for v, j in zip(tet, jitter)])


@pytest.fixture(scope="session")
def trivial_run():
    from hypervor.pipeline import run_pipeline
    from hypervor.scene import make_scene

    return run_pipeline(make_scene([], simplex_like_sites(), seed=1))


@pytest.fixture(scope="session")
def cyclic_run():
    from hypervor.pipeline import run_pipeline
    from hypervor.scene import make_scene

    from hypervor.kernel import exp_map

    g = LorentzIsometry.loxodromic(1.2, 0.5)
    base = [LorentzIsometry.boost(0.4, 2).apply(ORIGIN), exp_map(ORIGIN, [0.5, -0.3, 0.35])]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonFreeActionWarning)
        return run_pipeline(make_scene([g], base, word_length_cap=3, seed=1))
