#!/usr/bin/env python3
"""
Exponential Moments Module
Closed-form integrals of p-monomials times exp(<w, p>) over polytopes.

Features:
- Divided differences of exp, stable for coalescing nodes
- Simplex moments (i0, i1, i2) via node insertion
- Polytope moments by summation over a fan triangulation
- Optional thread-pool evaluation with ordered reduction
- Independent adaptive simplex quadrature for verification
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, List, Dict, Any, Sequence, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.special import factorial

from errors import ToleranceNotReached, DimensionMismatch
from polytope_geometry import Polytope, Simplex, triangulate

logger = logging.getLogger(__name__)

DEFAULT_TAYLOR_THRESHOLD = 1e-4
TAYLOR_TERMS = 12


@dataclass
class MomentResult:
    """Zeroth, first and second exponential moments over a body."""

    i0: float
    i1: np.ndarray
    i2: np.ndarray

    def __add__(self, other: 'MomentResult') -> 'MomentResult':
        return MomentResult(self.i0 + other.i0, self.i1 + other.i1, self.i2 + other.i2)

    @property
    def mean(self) -> np.ndarray:
        return self.i1 / self.i0

    @property
    def covariance(self) -> np.ndarray:
        mean = self.mean
        cov = self.i2 / self.i0 - np.outer(mean, mean)
        return 0.5 * (cov + cov.T)

    def to_dict(self) -> dict:
        return {'i0': float(self.i0), 'i1': self.i1.tolist(), 'i2': self.i2.tolist()}


def _weight(w, dim: int) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != dim:
        raise DimensionMismatch(f"Weight of length {w.shape[0]} for dimension {dim}")
    if not np.all(np.isfinite(w)):
        raise ValueError("Weight vector has non-finite entries")
    return w


def divided_diff_exp(nodes: Sequence[float], taylor_threshold: float = DEFAULT_TAYLOR_THRESHOLD) -> float:
    """
    Divided difference exp[a_0, ..., a_n].

    Clustered nodes use the series e^c * sum_k h_k(a - c) / (n + k)! around the
    node mean (h_k complete homogeneous symmetric polynomials). Otherwise the
    value is the corner entry of expm of the bidiagonal node matrix, shifted by
    the largest node.
    """
    a = np.asarray(nodes, dtype=float).reshape(-1)
    n = a.size - 1
    if n == 0:
        return float(np.exp(a[0]))

    spread = float(a.max() - a.min())
    if spread < taylor_threshold:
        center = float(a.mean())
        d = a - center
        h = np.zeros(TAYLOR_TERMS + 1)
        h[0] = 1.0
        for x in d:
            for k in range(1, TAYLOR_TERMS + 1):
                h[k] += x * h[k - 1]
        denominators = factorial(np.arange(n, n + TAYLOR_TERMS + 1))
        return float(np.exp(center) * np.sum(h / denominators))

    top = float(a.max())
    matrix = np.diag(a - top) + np.diag(np.ones(n), 1)
    return float(np.exp(top) * expm(matrix)[0, n])


def simplex_exp_moments(simplex: Simplex, w, taylor_threshold: float = DEFAULT_TAYLOR_THRESHOLD) -> MomentResult:
    """
    Moments of exp(<w, p>) over one simplex.

    With a_i = <w, v_i> and scale = m! vol(S):
        i0 = scale * exp[a]
        i1 = scale * sum_i v_i exp[a, a_i]
        i2 = scale * sum_{i,k} (1 + delta_ik) v_i v_k^T exp[a, a_i, a_k]
    """
    vertices = simplex.vertices
    w = _weight(w, simplex.dim)
    a = vertices @ w
    scale = abs(float(np.linalg.det(vertices[1:] - vertices[0])))
    count = len(a)

    i0 = scale * divided_diff_exp(a, taylor_threshold)

    once = np.array([divided_diff_exp(np.append(a, a[i]), taylor_threshold) for i in range(count)])
    i1 = scale * (once @ vertices)

    twice = np.zeros((count, count))
    for i in range(count):
        for k in range(i, count):
            value = divided_diff_exp(np.append(a, [a[i], a[k]]), taylor_threshold)
            if i == k:
                value *= 2.0
            twice[i, k] = twice[k, i] = value
    i2 = scale * (vertices.T @ twice @ vertices)

    return MomentResult(float(i0), i1, 0.5 * (i2 + i2.T))


def polytope_exp_moments(polytope: Polytope, w, taylor_threshold: float = DEFAULT_TAYLOR_THRESHOLD,
                         simplices: Optional[List[Simplex]] = None,
                         executor: Optional[ThreadPoolExecutor] = None) -> MomentResult:
    """
    Sum of simplex moments over a triangulation of the polytope.

    Args:
        polytope: Full-dimensional polytope
        w: Weight vector
        taylor_threshold: Node spread below which the series is used
        simplices: Precomputed triangulation (default: fan triangulation)
        executor: Optional pool; terms are reduced in triangulation order

    Returns:
        MomentResult
    """
    w = _weight(w, polytope.dim)
    simplices = triangulate(polytope) if simplices is None else simplices

    if executor is not None and len(simplices) > 1:
        terms = list(executor.map(lambda s: simplex_exp_moments(s, w, taylor_threshold), simplices))
    else:
        terms = [simplex_exp_moments(s, w, taylor_threshold) for s in simplices]

    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def weighted_barycenter(polytope: Polytope, w, taylor_threshold: float = DEFAULT_TAYLOR_THRESHOLD) -> np.ndarray:
    """Tilted barycenter i1 / i0."""
    return polytope_exp_moments(polytope, w, taylor_threshold).mean


class MomentEngine:
    """Moment evaluator with triangulation cache and optional thread pool."""

    def __init__(self, config: dict):
        """
        Initialize Moment Engine.

        Args:
            config: Configuration dictionary with 'moments' and 'system' sections
        """
        self.config = config.get('moments', {})
        self.taylor_threshold = self.config.get('taylor_threshold', DEFAULT_TAYLOR_THRESHOLD)
        self.quadrature_order = self.config.get('quadrature_order', 5)
        self.quadrature_tolerance = self.config.get('quadrature_tolerance', 1e-12)
        self.max_workers = max(1, int(config.get('system', {}).get('thread_pool_size', 1)))

        self._executor: Optional[ThreadPoolExecutor] = None
        self._triangulations: Dict[Polytope, List[Simplex]] = {}

        # Statistics
        self.evaluations = 0
        self.simplex_terms = 0
        self.oracle_evaluations = 0

        logger.info(f"Moment Engine initialized: taylor_threshold={self.taylor_threshold}, "
                    f"workers={self.max_workers}")

    def _simplices(self, polytope: Polytope) -> List[Simplex]:
        if polytope not in self._triangulations:
            self._triangulations[polytope] = triangulate(polytope)
        return self._triangulations[polytope]

    def moments(self, polytope: Polytope, w) -> MomentResult:
        simplices = self._simplices(polytope)
        if self.max_workers > 1 and self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.max_workers)
        self.evaluations += 1
        self.simplex_terms += len(simplices)
        return polytope_exp_moments(polytope, w, self.taylor_threshold,
                                    simplices=simplices, executor=self._executor)

    def barycenter(self, polytope: Polytope, w) -> np.ndarray:
        return self.moments(polytope, w).mean

    def oracle(self, polytope: Polytope, w, integrand_selector: str = 'all') -> MomentResult:
        """Subdivision-quadrature reference for the same moments."""
        self.oracle_evaluations += 1
        return quadrature_oracle(polytope, w, integrand_selector,
                                 tol=self.quadrature_tolerance, order=self.quadrature_order)

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def get_stats(self) -> dict:
        return {
            'evaluations': self.evaluations,
            'simplex_terms': self.simplex_terms,
            'oracle_evaluations': self.oracle_evaluations,
            'cached_triangulations': len(self._triangulations),
            'workers': self.max_workers,
        }


# Quadrature oracle

def grundmann_moeller_rule(dim: int, s: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Grundmann-Moeller rule of degree 2s+1 on the unit simplex.

    Returns barycentric points (Q, dim+1) and weights (Q,) for the simplex of
    volume 1/dim!.
    """
    degree = 2 * s + 1
    points: List[np.ndarray] = []
    weights: List[float] = []
    for i in range(s + 1):
        denom = degree + dim - 2 * i
        weight = ((-1) ** i) * 2.0 ** (-2 * s) * float(denom) ** degree \
            / (factorial(i, exact=True) * factorial(degree + dim - i, exact=True))
        total = s - i
        # compositions of `total` into dim+1 nonnegative parts
        for bars in itertools.combinations(range(total + dim), dim):
            parts = []
            previous = -1
            for b in bars:
                parts.append(b - previous - 1)
                previous = b
            parts.append(total + dim - previous - 1)
            beta = np.array(parts, dtype=float)
            points.append((2.0 * beta + 1.0) / denom)
            weights.append(weight)
    return np.array(points), np.array(weights)


def _moment_integrand(points: np.ndarray, w: np.ndarray) -> np.ndarray:
    """exp(<w, p>) * [1, p, vec(p p^T)] per point."""
    weight = np.exp(points @ w)
    outer = np.einsum('qi,qj->qij', points, points).reshape(points.shape[0], -1)
    return weight[:, None] * np.hstack([np.ones((points.shape[0], 1)), points, outer])


SELECTORS = ('all', 'i0', 'i1', 'i2')


def quadrature_oracle(polytope: Polytope, w, integrand_selector: str = 'all',
                      tol: float = 1e-12, order: int = 5, max_simplices: int = 200000) -> MomentResult:
    """
    Adaptive simplex quadrature of the exponential moments.

    Each simplex is compared against its two longest-edge children; a piece is
    accepted when the selected components agree within its volume share of the
    tolerance. Errors are measured relative to i0 * R^degree with R the largest
    vertex norm.

    Raises:
        ToleranceNotReached: subdivision budget exhausted
    """
    if integrand_selector not in SELECTORS:
        raise ValueError(f"Unknown integrand selector: {integrand_selector}")
    w = _weight(w, polytope.dim)
    m = polytope.dim
    bary, weights = grundmann_moeller_rule(m, order)

    def rule(vertices: np.ndarray) -> np.ndarray:
        # |det| = m! vol(S) maps the unit simplex onto S
        scale = abs(np.linalg.det(vertices[1:] - vertices[0]))
        values = _moment_integrand(bary @ vertices, w)
        return scale * (weights @ values)

    def split(vertices: np.ndarray) -> List[np.ndarray]:
        best, pair = -1.0, (0, 1)
        for i, j in itertools.combinations(range(len(vertices)), 2):
            length = np.linalg.norm(vertices[i] - vertices[j])
            if length > best:
                best, pair = length, (i, j)
        mid = 0.5 * (vertices[pair[0]] + vertices[pair[1]])
        first, second = vertices.copy(), vertices.copy()
        first[pair[0]] = mid
        second[pair[1]] = mid
        return [first, second]

    radius = max(1.0, float(np.max(np.linalg.norm(polytope.vertices, axis=1))))
    degrees = np.concatenate([[0.0], np.ones(m), 2.0 * np.ones(m * m)])
    selected = np.zeros(degrees.size, dtype=bool)
    if integrand_selector in ('all', 'i0'):
        selected[0] = True
    if integrand_selector in ('all', 'i1'):
        selected[1:1 + m] = True
    if integrand_selector in ('all', 'i2'):
        selected[1 + m:] = True

    pieces = [s.vertices.copy() for s in triangulate(polytope)]
    total_volume = sum(abs(np.linalg.det(p[1:] - p[0])) for p in pieces)
    estimates = [rule(p) for p in pieces]
    rough_i0 = abs(sum(e[0] for e in estimates))
    scales = rough_i0 * radius ** degrees

    accepted = np.zeros(degrees.size)
    stack = list(zip(pieces, estimates))
    evaluated = len(pieces)
    while stack:
        vertices, coarse = stack.pop()
        children = split(vertices)
        fine_parts = [rule(c) for c in children]
        evaluated += 2
        fine = fine_parts[0] + fine_parts[1]
        share = abs(np.linalg.det(vertices[1:] - vertices[0])) / total_volume
        error = np.abs(fine - coarse) / scales
        if np.all(error[selected] <= tol * share):
            accepted += fine
            continue
        if evaluated > max_simplices:
            raise ToleranceNotReached(
                f"Quadrature did not reach tol={tol} within {max_simplices} simplex evaluations"
            )
        stack.extend(zip(children, fine_parts))

    i2 = accepted[1 + m:].reshape(m, m)
    logger.debug(f"Quadrature oracle: {evaluated} simplex evaluations, selector={integrand_selector}")
    return MomentResult(float(accepted[0]), accepted[1:1 + m], 0.5 * (i2 + i2.T))
