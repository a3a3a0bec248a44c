"""Shared fixtures: fans, decompositions and a moment engine."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from exp_moments import MomentEngine  # noqa: E402
from futaki_invariant import Decomposition  # noqa: E402
from polytope_geometry import Polytope, canonical_polytope  # noqa: E402

CP1_FAN = [[1.0], [-1.0]]
CP2_FAN = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]
BL1_FAN = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [1.0, 1.0]]
BL3_FAN = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0]]


def interval(lo: float, hi: float) -> Polytope:
    return Polytope.from_vertices([[lo], [hi]])


@pytest.fixture
def engine():
    eng = MomentEngine({})
    yield eng
    eng.close()


@pytest.fixture
def cp1_decomposition():
    return Decomposition(canonical_polytope(CP1_FAN), [interval(-1.0, 1.0)])


@pytest.fixture
def cp1_split_decomposition():
    return Decomposition(canonical_polytope(CP1_FAN), [interval(-0.5, 0.5), interval(-0.5, 0.5)])


@pytest.fixture
def cp2_decomposition():
    third = Polytope.from_vertices(np.array([[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]]) / 3.0)
    return Decomposition(canonical_polytope(CP2_FAN), [third, third, third])


@pytest.fixture
def bl1_decomposition():
    target = canonical_polytope(BL1_FAN)
    return Decomposition(target, [target])


@pytest.fixture
def hexagon_decomposition():
    """Bl3 CP^2 hexagon as T + (-T), a non-homothetic split with vanishing obstruction."""
    triangle = Polytope.from_vertices([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    opposite = Polytope.from_vertices([[0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]])
    return Decomposition(canonical_polytope(BL3_FAN), [triangle, opposite])


def bl1_soliton_constant() -> float:
    """Root c of int_{-1}^{1} s (s + 2) e^{c s} ds = 0 (soliton field (c, c) of Bl1 CP^2)."""
    from scipy.integrate import quad
    from scipy.optimize import brentq

    def moment(c):
        return quad(lambda s: s * (s + 2.0) * np.exp(c * s), -1.0, 1.0, epsabs=1e-15, epsrel=1e-14)[0]

    return brentq(moment, -5.0, 0.0, xtol=1e-15, rtol=1e-15)
