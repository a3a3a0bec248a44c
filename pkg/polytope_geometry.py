#!/usr/bin/env python3
"""
Polytope Geometry Module
Convex-geometry kernel for moment polytopes and moment cones.

Features:
- Dual halfspace/vertex representations with consistency cleanup
- Canonical polytopes of fans and Reeb slices of moment cones
- Support functions, Minkowski sums and decomposition checks
- Deterministic fan triangulation, volume, translation, containment
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, List, Dict, Any, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull
from scipy.special import factorial

from errors import (
    DegenerateInput,
    UnboundedPolytope,
    UnboundedSlice,
    DimensionMismatch,
    SchemaError,
)

logger = logging.getLogger(__name__)

DEFAULT_RELATIVE_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _affine_rank(points: np.ndarray, tol: float) -> int:
    if len(points) <= 1:
        return 0
    diffs = points[1:] - points[0]
    if not np.any(diffs):
        return 0
    singular = np.linalg.svd(diffs, compute_uv=False)
    return int(np.sum(singular > tol))


@dataclass(frozen=True)
class SliceChart:
    """Affine chart of a Reeb slice: the coordinate `axis` is eliminated via <p, xi> = 1."""

    xi: np.ndarray
    axis: int

    def lift(self, points) -> np.ndarray:
        """Chart coordinates -> points on the hyperplane <p, xi> = 1."""
        q = np.atleast_2d(np.asarray(points, dtype=float))
        rest = np.delete(self.xi, self.axis)
        dropped = (1.0 - q @ rest) / self.xi[self.axis]
        return np.insert(q, self.axis, dropped, axis=1)

    def project(self, points) -> np.ndarray:
        """Points of the hyperplane -> chart coordinates."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.delete(p, self.axis, axis=1)

    def to_dict(self) -> dict:
        return {'xi': [float(v) for v in self.xi], 'axis': int(self.axis)}


@dataclass(frozen=True, eq=False)
class Simplex:
    """m+1 affinely independent points in R^m."""

    vertices: np.ndarray

    def __post_init__(self):
        vertices = _frozen(self.vertices)
        object.__setattr__(self, 'vertices', vertices)
        if vertices.ndim != 2 or vertices.shape[0] != vertices.shape[1] + 1:
            raise DegenerateInput(f"Simplex needs m+1 points in R^m, got shape {vertices.shape}")
        if self.signed_volume == 0.0:
            raise DegenerateInput("Simplex has zero volume")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def signed_volume(self) -> float:
        edges = self.vertices[1:] - self.vertices[0]
        return float(np.linalg.det(edges) / factorial(self.dim, exact=True))

    @property
    def volume(self) -> float:
        return abs(self.signed_volume)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


@dataclass(frozen=True, eq=False)
class Polytope:
    """
    Full-dimensional convex polytope {p : <normal_i, p> + offset_i >= 0}.

    Both representations are stored. Halfspaces are irredundant and
    vertices are deduplicated and sorted lexicographically. Use the
    constructors `from_halfspaces` / `from_vertices` rather than the
    raw initializer.
    """

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    rel_tol: float = DEFAULT_RELATIVE_TOLERANCE
    chart: Optional[SliceChart] = None

    def __post_init__(self):
        object.__setattr__(self, 'normals', _frozen(self.normals))
        object.__setattr__(self, 'offsets', _frozen(self.offsets))
        object.__setattr__(self, 'vertices', _frozen(self.vertices))

    # Constructors

    @classmethod
    def from_halfspaces(cls, normals, offsets, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE,
                        chart: Optional[SliceChart] = None) -> 'Polytope':
        """
        Build a polytope from halfspaces <normal, p> + offset >= 0.

        Raises:
            UnboundedPolytope: body is unbounded (including fewer than m+1 halfspaces)
            DegenerateInput: body is empty or lower-dimensional
        """
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.asarray(offsets, dtype=float).reshape(-1)
        if normals.shape[0] != offsets.shape[0]:
            raise DimensionMismatch(
                f"{normals.shape[0]} normals but {offsets.shape[0]} offsets"
            )
        m = normals.shape[1]
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateInput("Halfspace with zero normal")
        if normals.shape[0] < m + 1:
            raise UnboundedPolytope(
                f"{normals.shape[0]} halfspaces cannot bound a body in dimension {m}"
            )

        radius = _bounding_radius(normals, offsets)
        tol = rel_tol * max(1.0, radius)

        candidates: List[np.ndarray] = []
        for subset in itertools.combinations(range(normals.shape[0]), m):
            idx = list(subset)
            system = normals[idx]
            if np.linalg.matrix_rank(system / norms[idx, None]) < m:
                continue
            point = np.linalg.solve(system, -offsets[idx])
            slack = (normals @ point + offsets) / norms
            if np.all(slack >= -tol):
                candidates.append(point)

        vertices = _dedup_points(candidates, tol)
        return _finalize(normals, offsets, vertices, rel_tol, chart)

    @classmethod
    def from_vertices(cls, points, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE) -> 'Polytope':
        """
        Build a polytope as the convex hull of points.

        Raises:
            DegenerateInput: hull is lower-dimensional
        """
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.shape[0] == 0:
            raise DegenerateInput("No points given")
        m = points.shape[1]
        center = points.mean(axis=0)
        radius = float(np.max(np.linalg.norm(points - center, axis=1)))
        tol = rel_tol * max(1.0, radius)

        if _affine_rank(points, tol) < m:
            raise DegenerateInput(f"Points do not span R^{m}")

        if m == 1:
            lo, hi = float(points.min()), float(points.max())
            normals = np.array([[1.0], [-1.0]])
            offsets = np.array([-lo, hi])
            return _finalize(normals, offsets, [np.array([lo]), np.array([hi])], rel_tol, None)

        hull = ConvexHull(points)
        # Qhull: <n, x> + d <= 0 inside, with outward unit n
        normals = -hull.equations[:, :-1]
        offsets = -hull.equations[:, -1]
        vertices = _dedup_points(list(points[hull.vertices]), tol)
        return _finalize(normals, offsets, vertices, rel_tol, None)

    # Basic properties

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def n_facets(self) -> int:
        return self.normals.shape[0]

    @property
    def halfspaces(self) -> List[tuple]:
        return [(n.copy(), float(c)) for n, c in zip(self.normals, self.offsets)]

    @property
    def circumradius(self) -> float:
        center = self.vertices.mean(axis=0)
        return float(np.max(np.linalg.norm(self.vertices - center, axis=1)))

    @property
    def tolerance(self) -> float:
        """Absolute geometric tolerance."""
        return self.rel_tol * max(1.0, self.circumradius)

    def facet_slacks(self, points) -> np.ndarray:
        """Euclidean facet slacks (<n, p> + c) / |n|, shape (points, facets)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        norms = np.linalg.norm(self.normals, axis=1)
        return (p @ self.normals.T + self.offsets) / norms

    def support(self, direction) -> float:
        return support(self, direction)

    def contains(self, point, tol: Optional[float] = None) -> bool:
        return contains(self, point, tol)

    def to_dict(self) -> dict:
        """JSON form: halfspaces are primary, vertices listed as derived data."""
        data: Dict[str, Any] = {
            'schema': 'v1',
            'dim': self.dim,
            'halfspaces': {
                'normals': self.normals.tolist(),
                'offsets': self.offsets.tolist(),
            },
            'derived': {'vertices': self.vertices.tolist()},
        }
        if self.chart is not None:
            data['chart'] = self.chart.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE,
                  location: str = '$') -> 'Polytope':
        """Parse the polytope JSON schema (exactly one of halfspaces / vertices)."""
        if not isinstance(data, dict):
            raise SchemaError("Polytope must be a JSON object", location)
        has_h = 'halfspaces' in data
        has_v = 'vertices' in data
        if has_h == has_v:
            raise SchemaError("Polytope needs exactly one of 'halfspaces' or 'vertices'", location)
        dim = data.get('dim')
        if dim is not None and (not isinstance(dim, int) or dim < 1):
            raise SchemaError("'dim' must be a positive integer", f"{location}.dim")

        if has_h:
            hs = data['halfspaces']
            if not isinstance(hs, dict) or 'normals' not in hs or 'offsets' not in hs:
                raise SchemaError("'halfspaces' needs 'normals' and 'offsets'", f"{location}.halfspaces")
            normals = _matrix(hs['normals'], f"{location}.halfspaces.normals")
            offsets = _vector(hs['offsets'], f"{location}.halfspaces.offsets")
            _check_dim(normals, dim, f"{location}.halfspaces.normals")
            chart = None
            if 'chart' in data:
                chart_data = data['chart']
                try:
                    chart = SliceChart(np.asarray(chart_data['xi'], dtype=float), int(chart_data['axis']))
                except (KeyError, TypeError, ValueError) as e:
                    raise SchemaError(f"Bad chart: {e}", f"{location}.chart")
            return cls.from_halfspaces(normals, offsets, rel_tol=rel_tol, chart=chart)

        points = _matrix(data['vertices'], f"{location}.vertices")
        _check_dim(points, dim, f"{location}.vertices")
        return cls.from_vertices(points, rel_tol=rel_tol)

    def same_body(self, other: 'Polytope', tol: Optional[float] = None) -> bool:
        """True if both polytopes have the same facets and vertices within tolerance."""
        if self.dim != other.dim or self.n_facets != other.n_facets:
            return False
        if self.vertices.shape != other.vertices.shape:
            return False
        tol = self.tolerance if tol is None else tol
        return bool(np.allclose(self.vertices, other.vertices, atol=tol, rtol=0.0))


@dataclass(frozen=True, eq=False)
class MomentCone:
    """Polyhedral cone {p in R^(m+1) : <normal_i, p> >= 0} with apex at the origin."""

    normals: np.ndarray
    rel_tol: float = DEFAULT_RELATIVE_TOLERANCE

    def __post_init__(self):
        normals = _frozen(np.atleast_2d(self.normals))
        object.__setattr__(self, 'normals', normals)
        n = normals.shape[1]
        if n < 2:
            raise DegenerateInput("Moment cone needs ambient dimension >= 2")
        if np.linalg.matrix_rank(normals) < n:
            raise DegenerateInput("Cone is not pointed (contains a line)")

        # Interior: max s with <n_i, p> >= s |n_i|, |p|_inf <= 1
        norms = np.linalg.norm(normals, axis=1)
        cost = np.zeros(n + 1)
        cost[-1] = -1.0
        a_ub = np.hstack([-normals, norms[:, None]])
        b_ub = np.zeros(normals.shape[0])
        bounds = [(-1.0, 1.0)] * n + [(None, 1.0)]
        result = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method='highs')
        if result.status != 0 or -result.fun <= self.rel_tol:
            raise DegenerateInput("Cone has empty interior")

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def dual_contains(self, xi) -> bool:
        """True if xi lies in the interior of the dual cone."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim,):
            raise DimensionMismatch(f"Reeb vector of length {xi.size} for cone of dimension {self.dim}")
        # Sum of normals lies in the interior of the dual cone and gives a compact section
        eta = self.normals.sum(axis=0)
        result = linprog(
            xi,
            A_ub=-self.normals,
            b_ub=np.zeros(self.normals.shape[0]),
            A_eq=eta[None, :],
            b_eq=[1.0],
            bounds=[(None, None)] * self.dim,
            method='highs',
        )
        if result.status != 0:
            return False
        return bool(result.fun > self.rel_tol * max(1.0, float(np.linalg.norm(xi))))

    @classmethod
    def from_dict(cls, data: dict, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE,
                  location: str = '$') -> 'MomentCone':
        if not isinstance(data, dict) or 'normals' not in data:
            raise SchemaError("Cone must be an object with 'normals'", location)
        normals = _matrix(data['normals'], f"{location}.normals")
        _check_dim(normals, data.get('dim'), f"{location}.normals")
        return cls(normals, rel_tol=rel_tol)

    def to_dict(self) -> dict:
        return {'schema': 'v1', 'dim': self.dim, 'normals': self.normals.tolist()}


@dataclass
class DecompositionCheck:
    """Outcome of comparing a Minkowski sum of summands with a target."""

    max_deviation: float
    worst_direction: List[float]
    parallel: bool
    non_parallel: List[Dict[str, int]] = field(default_factory=list)
    tolerance: float = 0.0
    directions_tested: int = 0

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tolerance

    def to_dict(self) -> dict:
        return {
            'passed': self.passed,
            'max_deviation': self.max_deviation,
            'worst_direction': self.worst_direction,
            'parallel': self.parallel,
            'non_parallel': self.non_parallel,
            'tolerance': self.tolerance,
            'directions_tested': self.directions_tested,
        }


# Internal helpers

def _matrix(value, location: str) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("Expected a list of numeric rows", location)
    if array.ndim != 2 or array.shape[0] == 0:
        raise SchemaError("Expected a non-empty list of equal-length numeric rows", location)
    if not np.all(np.isfinite(array)):
        raise SchemaError("Non-finite entry", location)
    return array


def _vector(value, location: str) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("Expected a list of numbers", location)
    if array.ndim != 1:
        raise SchemaError("Expected a flat list of numbers", location)
    if not np.all(np.isfinite(array)):
        raise SchemaError("Non-finite entry", location)
    return array


def _check_dim(array: np.ndarray, dim: Optional[int], location: str):
    if dim is not None and array.shape[1] != dim:
        raise SchemaError(f"Rows have length {array.shape[1]}, 'dim' says {dim}", location)


def _bounding_radius(normals: np.ndarray, offsets: np.ndarray) -> float:
    """Bounding-box radius of the body; raises if empty or unbounded."""
    m = normals.shape[1]
    extent = 0.0
    for j in range(m):
        for sign in (1.0, -1.0):
            cost = np.zeros(m)
            cost[j] = -sign
            result = linprog(cost, A_ub=-normals, b_ub=offsets,
                             bounds=[(None, None)] * m, method='highs')
            if result.status == 2:
                raise DegenerateInput("Halfspaces have empty intersection")
            if result.status == 3:
                raise UnboundedPolytope(f"Body is unbounded along axis {j}")
            if result.status != 0:
                raise DegenerateInput(f"Boundedness LP failed: {result.message}")
            extent = max(extent, abs(result.fun))
    return float(np.sqrt(m) * extent)


def _dedup_points(points: Sequence[np.ndarray], tol: float) -> List[np.ndarray]:
    unique: List[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol for q in unique):
            unique.append(np.asarray(p, dtype=float))
    return unique


def _finalize(normals: np.ndarray, offsets: np.ndarray, vertices: List[np.ndarray],
              rel_tol: float, chart: Optional[SliceChart]) -> Polytope:
    """Drop redundant or duplicate halfspaces and non-extreme points, sort vertices."""
    m = normals.shape[1]
    if len(vertices) < m + 1:
        raise DegenerateInput(f"Body has {len(vertices)} vertices, needs at least {m + 1}")
    verts = np.array(vertices)
    center = verts.mean(axis=0)
    radius = float(np.max(np.linalg.norm(verts - center, axis=1)))
    tol = rel_tol * max(1.0, radius)
    if _affine_rank(verts, tol) < m:
        raise DegenerateInput("Body is not full-dimensional")

    norms = np.linalg.norm(normals, axis=1)
    units = normals / norms[:, None]
    scaled_offsets = offsets / norms
    slack = (verts @ normals.T + offsets) / norms
    tight = np.abs(slack) <= tol

    keep: List[int] = []
    for i in range(normals.shape[0]):
        if tight[:, i].sum() < m:
            continue
        if _affine_rank(verts[tight[:, i]], tol) != m - 1:
            continue
        duplicate = any(
            np.linalg.norm(units[i] - units[j]) <= tol and abs(scaled_offsets[i] - scaled_offsets[j]) <= tol
            for j in keep
        )
        if not duplicate:
            keep.append(i)

    kept_tight = tight[:, keep]
    extreme = [
        v for v in range(len(verts))
        if np.linalg.matrix_rank(units[keep][kept_tight[v]]) == m
    ]
    verts = verts[extreme]
    order = np.lexsort(verts.T[::-1])
    verts = verts[order]

    logger.debug(f"Polytope finalized: dim={m}, facets={len(keep)}, vertices={len(verts)}")
    return Polytope(normals[keep], offsets[keep], verts, rel_tol=rel_tol, chart=chart)


# Operations

def canonical_polytope(normals, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE) -> Polytope:
    """
    Canonical polytope {p : <lambda_i, p> >= -1} of a fan.

    Args:
        normals: Primitive fan ray generators lambda_i

    Returns:
        Polytope containing the origin in its interior

    Raises:
        UnboundedPolytope: normals do not positively span (or are fewer than m+1)
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    polytope = Polytope.from_halfspaces(normals, np.ones(normals.shape[0]), rel_tol=rel_tol)
    logger.info(f"Canonical polytope: dim={polytope.dim}, "
                f"facets={polytope.n_facets}, vertices={len(polytope.vertices)}")
    return polytope


def reeb_slice(cone: MomentCone, xi, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE) -> Polytope:
    """
    Slice {p in C : <p, xi> = 1} of a moment cone in the chart that drops
    the coordinate of largest |xi| component.

    Raises:
        UnboundedSlice: xi is not in the interior of the dual cone
    """
    xi = np.asarray(xi, dtype=float)
    if not cone.dual_contains(xi):
        raise UnboundedSlice(f"Reeb vector {xi.tolist()} is not in the interior of the dual cone")

    axis = int(np.argmax(np.abs(xi)))
    xi_rest = np.delete(xi, axis)
    normals = []
    offsets = []
    for lam in cone.normals:
        lam_axis = lam[axis]
        projected = np.delete(lam, axis) - lam_axis * xi_rest / xi[axis]
        offset = lam_axis / xi[axis]
        if np.linalg.norm(projected) <= rel_tol * max(1.0, abs(offset)):
            # facet normal parallel to xi: constraint holds on the whole hyperplane
            continue
        normals.append(projected)
        offsets.append(offset)

    chart = SliceChart(_frozen(xi), axis)
    polytope = Polytope.from_halfspaces(np.array(normals), np.array(offsets),
                                        rel_tol=rel_tol, chart=chart)
    logger.info(f"Reeb slice: xi={xi.tolist()}, dropped axis={axis}, facets={polytope.n_facets}")
    return polytope


def vertices_from_halfspaces(normals, offsets, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE) -> np.ndarray:
    return Polytope.from_halfspaces(normals, offsets, rel_tol=rel_tol).vertices.copy()


def halfspaces_from_vertices(vertices, rel_tol: float = DEFAULT_RELATIVE_TOLERANCE) -> tuple:
    polytope = Polytope.from_vertices(vertices, rel_tol=rel_tol)
    return polytope.normals.copy(), polytope.offsets.copy()


def support(polytope: Polytope, direction) -> float:
    """Support function max_{p in P} <p, u>."""
    u = np.asarray(direction, dtype=float).reshape(-1)
    if u.shape[0] != polytope.dim:
        raise DimensionMismatch(f"Direction of length {u.shape[0]} for polytope of dimension {polytope.dim}")
    return float(np.max(polytope.vertices @ u))


def minkowski_sum(first: Polytope, second: Polytope) -> Polytope:
    """Minkowski sum as the hull of pairwise vertex sums."""
    if first.dim != second.dim:
        raise DimensionMismatch(f"Cannot add polytopes of dimension {first.dim} and {second.dim}")
    sums = (first.vertices[:, None, :] + second.vertices[None, :, :]).reshape(-1, first.dim)
    return Polytope.from_vertices(sums, rel_tol=min(first.rel_tol, second.rel_tol))


def sample_directions(dim: int, count: int, seed: int) -> np.ndarray:
    """Fixed-seed unit directions."""
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(count, dim))
    return directions / np.linalg.norm(directions, axis=1)[:, None]


def check_decomposition(summands: List[Polytope], target: Polytope, tol: Optional[float] = None,
                        n_directions: int = 200, seed: int = 0) -> DecompositionCheck:
    """
    Compare sum of summand support functions with the target support function.

    Directions are a fixed-seed random sample plus all facet normals involved.
    """
    for s in summands:
        if s.dim != target.dim:
            raise DimensionMismatch(f"Summand of dimension {s.dim} for target of dimension {target.dim}")
    tol = target.tolerance if tol is None else tol

    blocks = [sample_directions(target.dim, n_directions, seed), target.normals]
    blocks.extend(s.normals for s in summands)
    directions = np.vstack(blocks)
    directions = directions / np.linalg.norm(directions, axis=1)[:, None]

    target_support = np.max(target.vertices @ directions.T, axis=0)
    summed = np.zeros(directions.shape[0])
    for s in summands:
        summed += np.max(s.vertices @ directions.T, axis=0)
    deviation = np.abs(target_support - summed)
    worst = int(np.argmax(deviation))

    target_units = target.normals / np.linalg.norm(target.normals, axis=1)[:, None]
    non_parallel = []
    for a, s in enumerate(summands):
        units = s.normals / np.linalg.norm(s.normals, axis=1)[:, None]
        for i, u in enumerate(units):
            if np.min(np.linalg.norm(target_units - u, axis=1)) > tol:
                non_parallel.append({'summand': a, 'facet': i})

    report = DecompositionCheck(
        max_deviation=float(deviation[worst]),
        worst_direction=directions[worst].tolist(),
        parallel=not non_parallel,
        non_parallel=non_parallel,
        tolerance=float(tol),
        directions_tested=int(directions.shape[0]),
    )
    logger.debug(f"Decomposition check: deviation={report.max_deviation:.3e}, parallel={report.parallel}")
    return report


def _face_simplices(polytope: Polytope, face: frozenset, face_dim: int,
                    tight: np.ndarray, apex: int, tol: float) -> List[List[int]]:
    """Fan-triangulate a face (vertex index set) from apex; returns index lists."""
    if face_dim == 1:
        return [sorted(face)]
    facets = []
    seen = set()
    for j in range(tight.shape[1]):
        sub = frozenset(v for v in face if tight[v, j])
        if apex in sub or sub in seen or len(sub) < face_dim:
            continue
        if _affine_rank(polytope.vertices[sorted(sub)], tol) == face_dim - 1:
            seen.add(sub)
            facets.append(sub)
    simplices = []
    for sub in sorted(facets, key=sorted):
        for piece in _face_simplices(polytope, sub, face_dim - 1, tight, min(sub), tol):
            simplices.append([apex] + piece)
    return simplices


def triangulate(polytope: Polytope, apex: Optional[int] = None) -> List[Simplex]:
    """
    Fan triangulation from a vertex (default: the lexicographically smallest).

    Every face not containing the apex is fanned recursively from its own
    smallest vertex.
    """
    apex = 0 if apex is None else int(apex)
    if not 0 <= apex < len(polytope.vertices):
        raise DegenerateInput(f"Apex index {apex} out of range")
    tol = polytope.tolerance
    tight = np.abs(polytope.facet_slacks(polytope.vertices)) <= tol
    all_vertices = frozenset(range(len(polytope.vertices)))
    if polytope.dim == 1:
        index_sets = [[0, len(polytope.vertices) - 1]]
    else:
        index_sets = _face_simplices(polytope, all_vertices, polytope.dim, tight, apex, tol)
    return [Simplex(polytope.vertices[idx]) for idx in index_sets]


def volume(polytope: Polytope) -> float:
    return float(sum(s.volume for s in triangulate(polytope)))


def translate(polytope: Polytope, shift) -> Polytope:
    """P + v: offsets become c - <lambda, v>."""
    v = np.asarray(shift, dtype=float).reshape(-1)
    if v.shape[0] != polytope.dim:
        raise DimensionMismatch(f"Shift of length {v.shape[0]} for polytope of dimension {polytope.dim}")
    return Polytope(
        polytope.normals,
        polytope.offsets - polytope.normals @ v,
        polytope.vertices + v,
        rel_tol=polytope.rel_tol,
        chart=polytope.chart,
    )


def contains(polytope: Polytope, point, tol: Optional[float] = None) -> bool:
    """All Euclidean facet slacks >= -tol."""
    tol = polytope.tolerance if tol is None else tol
    p = np.asarray(point, dtype=float).reshape(-1)
    if p.shape[0] != polytope.dim:
        raise DimensionMismatch(f"Point of length {p.shape[0]} for polytope of dimension {polytope.dim}")
    return bool(np.all(polytope.facet_slacks(p) >= -tol))


def linear_image(polytope: Polytope, matrix) -> Polytope:
    """Image L(P) for an invertible linear map L."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (polytope.dim, polytope.dim):
        raise DimensionMismatch(f"Map of shape {matrix.shape} for polytope of dimension {polytope.dim}")
    if abs(np.linalg.det(matrix)) == 0.0:
        raise DegenerateInput("Linear map is singular")
    return Polytope.from_vertices(polytope.vertices @ matrix.T, rel_tol=polytope.rel_tol)
