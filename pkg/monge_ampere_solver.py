#!/usr/bin/env python3
"""
Monge-Ampere Solver Module
Continuity-path solver for the coupled real Monge-Ampere system in log coordinates.

For each summand alpha the potential f_alpha = h_alpha + phi_alpha on
[-R, R]^m solves, at interior nodes,

    exp(<W_alpha, grad f_alpha>) det D^2 f_alpha / Vol_W(P_alpha)
        = c_alpha * exp(sign * t * sum_beta f_beta - (1 - t) * sum_beta h_beta)

with sign = -1 (sign = +1 reproduces the printed form for comparison).
On the box rim the gradient is pinned to the polytope: the component of
grad f_alpha along the normal of the facet that grad h_alpha approaches
equals that of grad h_alpha, so grad f_alpha maps the box onto (almost all
of) P_alpha. The mass factors c_alpha absorb the compatibility of each
truncated problem and tend to 1 as the box grows. The additive constants
are fixed by the mass identity

    int e^{-sum h} (e^{t Phi} - 1) / t dx = 0,   Phi = sign * sum f + sum h,

which reads int RHS dx = int e^{-sum h} dx for t > 0 and stays regular at
t = 0, and for k > 1 by equal e^{-sum h}-weighted means of the phi_alpha.

Features:
- Second-order central differences, 9-point mixed stencil in 2-D
- Facet-normal gradient condition on the rim, one mass factor per summand
- Cofactor linearization, bordered sparse Jacobian, spsolve
- Newton damping that keeps every iterate discretely convex
- Adaptive t-schedule with confinement, C0 and mass-escape acceptance
- Mass, truncation and pushforward diagnostics, JSON grid dumps
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, List, Dict, Any, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.special import exprel

from errors import (
    NonConvexIterate,
    SingularLinearization,
    ConvexityLost,
    PathStuck,
    BoxTooSmall,
    GridTooCoarse,
    DimensionMismatch,
    ArityMismatch,
    SchemaError,
)
from exp_moments import MomentEngine
from futaki_invariant import Decomposition, futaki_twisted
from guillemin_reference import guillemin_reference, grid_axis, grid_points, DEFAULT_SYMPLECTIC_SCALE
from polytope_geometry import Polytope
from status_logger import PathMonitor

logger = logging.getLogger(__name__)


@dataclass
class PotentialGrid:
    """Sampled potentials f_alpha = h_alpha + phi_alpha on a box grid."""

    polytopes: List[Polytope]
    weights: np.ndarray
    volumes: np.ndarray
    box: float
    n: int
    references: np.ndarray
    reference_gradients: np.ndarray
    phi: np.ndarray
    mass_factors: Optional[np.ndarray] = None
    t: float = 0.0
    sign: int = -1
    reference_tail: float = 0.0
    target: Optional[Polytope] = None

    def __post_init__(self):
        if self.mass_factors is None:
            self.mass_factors = np.ones(len(self.polytopes))
        else:
            self.mass_factors = np.asarray(self.mass_factors, dtype=float)

    @property
    def k(self) -> int:
        return len(self.polytopes)

    @property
    def dim(self) -> int:
        return self.polytopes[0].dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def axis(self) -> np.ndarray:
        return grid_axis(self.box, self.n)

    @property
    def spacing(self) -> float:
        return 2.0 * self.box / (self.n - 1)

    @property
    def potentials(self) -> np.ndarray:
        return self.references + self.phi

    def with_values(self, phi: Optional[np.ndarray] = None, mass_factors: Optional[np.ndarray] = None,
                    t: Optional[float] = None) -> 'PotentialGrid':
        return replace(
            self,
            phi=self.phi if phi is None else phi,
            mass_factors=self.mass_factors if mass_factors is None else np.asarray(mass_factors, dtype=float),
            t=self.t if t is None else float(t),
        )

    def to_dict(self) -> dict:
        return {
            'schema': 'v2',
            'dim': self.dim,
            'box': self.box,
            'n': self.n,
            't': self.t,
            'sign': self.sign,
            'reference_tail': self.reference_tail,
            'target': None if self.target is None else self.target.to_dict(),
            'polytopes': [p.to_dict() for p in self.polytopes],
            'weights': self.weights.tolist(),
            'volumes': self.volumes.tolist(),
            'mass_factors': self.mass_factors.tolist(),
            'references': [r.tolist() for r in self.references],
            'reference_gradients': [g.tolist() for g in self.reference_gradients],
            'phi': [p.tolist() for p in self.phi],
        }


def potential_grid_from_dict(data: dict, location: str = '$') -> PotentialGrid:
    """Rebuild a PotentialGrid from its JSON dump."""
    required = ('box', 'n', 't', 'target', 'polytopes', 'weights', 'volumes', 'mass_factors',
                'references', 'reference_gradients', 'phi')
    if not isinstance(data, dict):
        raise SchemaError("Solution dump must be a JSON object", location)
    for key in required:
        if key not in data:
            raise SchemaError(f"Solution dump lacks '{key}'", f"{location}.{key}")
    polytopes = [Polytope.from_dict(p, location=f"{location}.polytopes[{i}]")
                 for i, p in enumerate(data['polytopes'])]
    target = None
    if data['target'] is not None:
        target = Polytope.from_dict(data['target'], location=f"{location}.target")
    try:
        grid = PotentialGrid(
            polytopes=polytopes,
            weights=np.asarray(data['weights'], dtype=float),
            volumes=np.asarray(data['volumes'], dtype=float),
            box=float(data['box']),
            n=int(data['n']),
            references=np.asarray(data['references'], dtype=float),
            reference_gradients=np.asarray(data['reference_gradients'], dtype=float),
            phi=np.asarray(data['phi'], dtype=float),
            mass_factors=np.asarray(data['mass_factors'], dtype=float),
            t=float(data['t']),
            sign=int(data.get('sign', -1)),
            reference_tail=float(data.get('reference_tail', 0.0)),
            target=target,
        )
    except (TypeError, ValueError) as e:
        raise SchemaError(f"Malformed solution dump: {e}", location)
    expected = (grid.k,) + grid.shape
    if grid.phi.shape != expected or grid.references.shape != expected:
        raise SchemaError(f"Grid arrays do not have shape {expected}", location)
    if grid.reference_gradients.shape != expected + (grid.dim,):
        raise SchemaError(f"Reference gradients do not have shape {expected + (grid.dim,)}",
                          f"{location}.reference_gradients")
    if grid.mass_factors.shape != (grid.k,):
        raise SchemaError(f"Expected {grid.k} mass factors", f"{location}.mass_factors")
    return grid


@dataclass
class ResidualReport:
    fields: List[np.ndarray]
    gauges: List[float]
    per_alpha: List[float]
    norm: float

    def to_dict(self) -> dict:
        return {'norm': self.norm, 'per_alpha': self.per_alpha, 'gauges': self.gauges}


@dataclass
class PathState:
    """Converged grid at the last accepted t with the step history."""

    t: float
    state: PotentialGrid
    residual: float
    history: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            't': self.t,
            'residual': self.residual,
            'accepted_steps': sum(1 for h in self.history if h['accepted']),
            'rejected_steps': sum(1 for h in self.history if not h['accepted']),
            'history': self.history,
        }


# Discretization

def _interior(dim: int) -> Tuple[slice, ...]:
    return (slice(1, -1),) * dim


def _rim(shape: Tuple[int, ...]) -> np.ndarray:
    """Boolean mask of the box boundary nodes."""
    mask = np.ones(shape, dtype=bool)
    mask[_interior(len(shape))] = False
    return mask


def quadrature_weights(box: float, n: int, dim: int) -> np.ndarray:
    """Tensor trapezoid weights on the full grid."""
    h = 2.0 * box / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    if dim == 1:
        return w
    return np.multiply.outer(w, w)


def _derivatives(f: np.ndarray, h: float) -> Dict[str, np.ndarray]:
    """Central differences at interior nodes."""
    if f.ndim == 1:
        fx = (f[2:] - f[:-2]) / (2.0 * h)
        fxx = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h ** 2
        return {'grad': [fx], 'fxx': fxx, 'det': fxx, 'trace': fxx}
    fx = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2.0 * h)
    fy = (f[1:-1, 2:] - f[1:-1, :-2]) / (2.0 * h)
    fxx = (f[2:, 1:-1] - 2.0 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / h ** 2
    fyy = (f[1:-1, 2:] - 2.0 * f[1:-1, 1:-1] + f[1:-1, :-2]) / h ** 2
    fxy = (f[2:, 2:] - f[2:, :-2] - f[:-2, 2:] + f[:-2, :-2]) / (4.0 * h ** 2)
    return {'grad': [fx, fy], 'fxx': fxx, 'fyy': fyy, 'fxy': fxy,
            'det': fxx * fyy - fxy ** 2, 'trace': fxx + fyy}


def _is_convex(parts: Dict[str, np.ndarray]) -> bool:
    return bool(np.all(parts['trace'] > 0.0) and np.all(parts['det'] > 0.0))


def _tilt(parts: Dict[str, np.ndarray], w: np.ndarray) -> np.ndarray:
    return sum(wj * gj for wj, gj in zip(w, parts['grad']))


def _lhs(state: PotentialGrid, alpha: int, f_alpha: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Dict]:
    """(LHS, exp-tilt factor E, difference parts) at interior nodes."""
    parts = _derivatives(f_alpha, state.spacing)
    factor = np.exp(_tilt(parts, state.weights[alpha])) / state.volumes[alpha]
    return factor * parts['det'], factor, parts


def _log_rhs(state: PotentialGrid, potentials: np.ndarray) -> np.ndarray:
    return state.sign * state.t * potentials.sum(axis=0) - (1.0 - state.t) * state.references.sum(axis=0)


def _rhs(state: PotentialGrid, potentials: np.ndarray) -> np.ndarray:
    """exp(sign * t * sum f - (1 - t) * sum h) on the full grid."""
    return np.exp(_log_rhs(state, potentials))


def _rim_normals(state: PotentialGrid, alpha: int, rim: np.ndarray) -> np.ndarray:
    """Unit inward normal of the facet closest to grad h_alpha, per rim node."""
    polytope = state.polytopes[alpha]
    slacks = polytope.facet_slacks(state.reference_gradients[alpha][rim])
    normals = polytope.normals[np.argmin(slacks, axis=1)]
    return normals / np.linalg.norm(normals, axis=1)[:, None]


def _gradient_fields(f: np.ndarray, h: float) -> List[np.ndarray]:
    """np.gradient with second-order one-sided differences at the ends."""
    grads = np.gradient(f, h, edge_order=2)
    return [grads] if f.ndim == 1 else list(grads)


def _rim_residual(state: PotentialGrid, alpha: int, f_alpha: np.ndarray,
                  normals: np.ndarray, rim: np.ndarray) -> np.ndarray:
    sampled = np.stack([g[rim] for g in _gradient_fields(f_alpha, state.spacing)], axis=1)
    return np.sum(normals * (sampled - state.reference_gradients[alpha][rim]), axis=1)


def _gauges(state: PotentialGrid, potentials: np.ndarray, weights: np.ndarray) -> List[float]:
    """Mass identity, then equal weighted means of phi_alpha - phi_0 for alpha > 0."""
    href = state.references.sum(axis=0)
    density = weights * np.exp(-href)
    big_phi = state.sign * potentials.sum(axis=0) + href
    gauges = [float(np.sum(density * big_phi * exprel(state.t * big_phi)))]
    for alpha in range(1, state.k):
        gauges.append(float(np.sum(density * (state.phi[alpha] - state.phi[0]))))
    return gauges


def _evaluate(state: PotentialGrid):
    """
    Residual fields on the full grid (Monge-Ampere inside, gradient condition
    on the rim), gauges, and the pieces the linearization reuses.

    Raises:
        NonConvexIterate: some f_alpha is not discretely convex
    """
    inner = _interior(state.dim)
    rim = _rim(state.shape)
    potentials = state.potentials
    rhs = _rhs(state, potentials)
    fields, pieces = [], []
    for alpha in range(state.k):
        lhs, factor, parts = _lhs(state, alpha, potentials[alpha])
        if not _is_convex(parts):
            raise NonConvexIterate(f"Potential {alpha} is not discretely convex")
        normals = _rim_normals(state, alpha, rim)
        fld = np.empty(state.shape)
        fld[inner] = lhs - state.mass_factors[alpha] * rhs[inner]
        fld[rim] = _rim_residual(state, alpha, potentials[alpha], normals, rim)
        fields.append(fld)
        pieces.append((factor, parts, normals))
    weights = quadrature_weights(state.box, state.n, state.dim)
    return fields, _gauges(state, potentials, weights), rhs, pieces, weights


def residual(state: PotentialGrid) -> ResidualReport:
    """
    Per-summand residual fields plus the gauge equations.

    Raises:
        NonConvexIterate: some f_alpha is not discretely convex
    """
    fields, gauges, _, _, _ = _evaluate(state)
    per_alpha = [float(np.max(np.abs(fld))) for fld in fields]
    norm = max(max(per_alpha), max(abs(g) for g in gauges))
    return ResidualReport(fields, gauges, per_alpha, norm)


def _stencil_matrix(state: PotentialGrid, factor: np.ndarray, parts: Dict, w: np.ndarray) -> sparse.csr_matrix:
    """Linearization of exp(<w, grad f>) det D^2 f / V; rows at interior nodes, columns on the full grid."""
    h = state.spacing
    n = state.n
    dim = state.dim
    det = parts['det']
    entries: List[Tuple[Tuple[int, ...], np.ndarray]] = []
    if dim == 1:
        entries.append(((0,), factor * (-2.0 / h ** 2)))
        for sign in (1, -1):
            entries.append(((sign,), factor * (1.0 / h ** 2 + det * w[0] * sign / (2.0 * h))))
    else:
        fxx, fyy, fxy = parts['fxx'], parts['fyy'], parts['fxy']
        entries.append(((0, 0), factor * (-2.0 * (fxx + fyy) / h ** 2)))
        for sign in (1, -1):
            entries.append(((sign, 0), factor * (fyy / h ** 2 + det * w[0] * sign / (2.0 * h))))
            entries.append(((0, sign), factor * (fxx / h ** 2 + det * w[1] * sign / (2.0 * h))))
        # cofactor of the mixed derivative: d det / d fxy = -2 fxy
        entries.append(((1, 1), factor * (-fxy / (2.0 * h ** 2))))
        entries.append(((-1, -1), factor * (-fxy / (2.0 * h ** 2))))
        entries.append(((1, -1), factor * (fxy / (2.0 * h ** 2))))
        entries.append(((-1, 1), factor * (fxy / (2.0 * h ** 2))))

    index = np.arange(n ** dim).reshape(state.shape)
    centers = index[_interior(dim)].ravel()
    rows, cols, vals = [], [], []
    for offset, coeff in entries:
        neighbours = tuple(slice(1 + o, n - 1 + o) for o in offset)
        rows.append(centers)
        cols.append(index[neighbours].ravel())
        vals.append(coeff.ravel())
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n ** dim, n ** dim),
    )


def _rim_matrix(state: PotentialGrid, normals: np.ndarray, rim: np.ndarray) -> sparse.csr_matrix:
    """Linearization of the rim gradient condition; the stencils are those of np.gradient(edge_order=2)."""
    n, h = state.n, state.spacing
    nodes = np.argwhere(rim)
    centers = np.ravel_multi_index(nodes.T, state.shape)
    low, high = nodes == 0, nodes == n - 1
    offsets = np.stack([
        np.where(low | high, 0, -1),
        np.where(low, 1, np.where(high, -1, 1)),
        np.where(low, 2, np.where(high, -2, 0)),
    ])
    coeffs = np.stack([
        np.where(low, -3.0, np.where(high, 3.0, -1.0)),
        np.where(low, 4.0, np.where(high, -4.0, 1.0)),
        np.where(low, -1.0, np.where(high, 1.0, 0.0)),
    ]) / (2.0 * h)
    rows, cols, vals = [], [], []
    for axis_index in range(state.dim):
        for term in range(3):
            shifted = nodes.copy()
            shifted[:, axis_index] += offsets[term, :, axis_index]
            rows.append(centers)
            cols.append(np.ravel_multi_index(shifted.T, state.shape))
            vals.append(normals[:, axis_index] * coeffs[term, :, axis_index])
    size = n ** state.dim
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )


def jacobian(state: PotentialGrid) -> Tuple[sparse.csc_matrix, np.ndarray]:
    """
    Bordered Jacobian and stacked residual [F_1, ..., F_k, gauges] in the
    unknowns [phi_1, ..., phi_k, c_1, ..., c_k].
    """
    fields, gauges, rhs, pieces, weights = _evaluate(state)
    rim = _rim(state.shape)
    k, size = state.k, rhs.size
    rhs_inside = np.where(rim, 0.0, rhs).ravel()
    sigma_t = state.sign * state.t

    upper = []
    for alpha, (factor, parts, normals) in enumerate(pieces):
        coupling = sparse.diags(-state.mass_factors[alpha] * sigma_t * rhs_inside)
        row = [coupling] * k
        row[alpha] = (_stencil_matrix(state, factor, parts, state.weights[alpha])
                      + _rim_matrix(state, normals, rim) + coupling)
        row.append(sparse.csr_matrix((-rhs_inside, (np.arange(size), np.full(size, alpha))), shape=(size, k)))
        upper.append(row)

    density = (weights * np.exp(-state.references.sum(axis=0))).ravel()
    lower = np.zeros((k, k * size + k))
    lower[0, :k * size] = np.tile(state.sign * (weights * rhs).ravel(), k)
    for alpha in range(1, k):
        lower[alpha, alpha * size:(alpha + 1) * size] = density
        lower[alpha, :size] = -density
    matrix = sparse.vstack([sparse.bmat(upper), sparse.csr_matrix(lower)], format='csc')
    stacked = np.concatenate([fld.ravel() for fld in fields] + [np.asarray(gauges)])
    return matrix, stacked


@dataclass
class NewtonInfo:
    residual_before: float
    residual_after: float
    damping: float
    halvings: int
    decreased: bool


def _damped_update(state: PotentialGrid, current: float, delta_phi: np.ndarray, delta_c: np.ndarray,
                   max_halvings: int) -> Tuple[PotentialGrid, NewtonInfo]:
    damping = 1.0
    seen_convex = False
    for halvings in range(max_halvings + 1):
        candidate = state.with_values(phi=state.phi + damping * delta_phi,
                                      mass_factors=state.mass_factors + damping * delta_c)
        try:
            report = residual(candidate)
        except NonConvexIterate:
            damping *= 0.5
            continue
        seen_convex = True
        if report.norm < current:
            return candidate, NewtonInfo(current, report.norm, damping, halvings, True)
        damping *= 0.5
    if not seen_convex:
        raise ConvexityLost(f"No convex iterate after {max_halvings} step halvings")
    return state, NewtonInfo(current, current, damping, max_halvings, False)


def newton_step_with_info(state: PotentialGrid, max_halvings: int = 30) -> Tuple[PotentialGrid, NewtonInfo]:
    """One damped Newton step on the coupled system."""
    matrix, stacked = jacobian(state)
    current = float(np.max(np.abs(stacked)))
    delta = spsolve(matrix, -stacked)
    if not np.all(np.isfinite(delta)):
        raise SingularLinearization(f"Linearized system is singular at t={state.t}")
    split = state.k * state.n ** state.dim
    delta_phi = delta[:split].reshape(state.phi.shape)
    return _damped_update(state, current, delta_phi, delta[split:], max_halvings)


def newton_step(state: PotentialGrid, max_halvings: int = 30) -> PotentialGrid:
    """
    Damped Newton update preserving discrete convexity.

    Raises:
        NonConvexIterate: input iterate is not convex
        SingularLinearization: linear solve failed
        ConvexityLost: no convex iterate within max_halvings
    """
    updated, _ = newton_step_with_info(state, max_halvings)
    return updated


# Diagnostics

def boundary_tail(log_density: np.ndarray, box: float) -> float:
    """
    Mass of exp(log_density) outside the box, estimated from exponential decay
    across each boundary face (density / outward decay rate).
    """
    n = log_density.shape[0]
    h = 2.0 * box / (n - 1)
    density = np.exp(log_density)
    grads = _gradient_fields(log_density, h)
    tail = 0.0
    edge_weights = quadrature_weights(box, n, 1)
    for axis_index in range(log_density.ndim):
        for end, outward in ((0, -1.0), (-1, 1.0)):
            rho = np.take(density, end, axis=axis_index)
            rate = -outward * np.take(grads[axis_index], end, axis=axis_index)
            if np.any(rate <= 0.0):
                raise BoxTooSmall("Density does not decay across the box boundary; enlarge the box")
            if log_density.ndim == 1:
                tail += float(rho / rate)
            else:
                tail += float(np.sum(edge_weights * rho / rate))
    return tail


def mass_report(state: PotentialGrid) -> Dict[str, Any]:
    """Box masses of both sides per summand, gauge error and truncation estimate."""
    inner = _interior(state.dim)
    potentials = state.potentials
    weights = quadrature_weights(state.box, state.n, state.dim)
    rhs_full = _rhs(state, potentials)
    rhs_mass = float(np.sum(weights[inner] * rhs_full[inner]))
    try:
        truncation = boundary_tail(_log_rhs(state, potentials), state.box)
    except BoxTooSmall:
        truncation = float('inf')
    reference_mass = float(np.sum(weights * np.exp(-state.references.sum(axis=0))))
    per_alpha = []
    for alpha in range(state.k):
        lhs, _, _ = _lhs(state, alpha, potentials[alpha])
        lhs_mass = float(np.sum(weights[inner] * lhs))
        factor = float(state.mass_factors[alpha])
        per_alpha.append({
            'lhs_mass': lhs_mass,
            'rhs_mass': rhs_mass,
            'mass_factor': factor,
            'difference': lhs_mass - factor * rhs_mass,
            'identity_error': lhs_mass - 1.0,
        })
    return {
        'per_alpha': per_alpha,
        'normalization_error': float(np.sum(weights * rhs_full)) - reference_mass,
        'truncation_estimate': truncation,
        'reference_tail': state.reference_tail,
    }


def mass_identity_holds(report: Dict[str, Any], allowance: float = 0.0) -> bool:
    """Every |identity_error| within the truncation estimate (plus an allowance)."""
    bound = report['truncation_estimate'] + allowance
    return all(abs(entry['identity_error']) <= bound for entry in report['per_alpha'])


def gradient_samples(state: PotentialGrid, alpha: int) -> np.ndarray:
    """grad f_alpha on the full grid (second-order one-sided at the edges), shape (N, m)."""
    grads = _gradient_fields(state.potentials[alpha], state.spacing)
    return np.stack([g.reshape(-1) for g in grads], axis=1)


def confinement_slack(state: PotentialGrid) -> List[float]:
    """Minimum facet slack of grad f_alpha over the grid, per summand."""
    return [float(np.min(p.facet_slacks(gradient_samples(state, a))))
            for a, p in enumerate(state.polytopes)]


def oscillation(state: PotentialGrid) -> List[float]:
    """max - min of phi_alpha = f_alpha - h_alpha, per summand."""
    return [float(np.ptp(state.phi[a])) for a in range(state.k)]


def oscillation_budget(state: PotentialGrid, fraction: float) -> List[float]:
    """fraction * R * diam(P_alpha): phi_alpha moving by that much means mass is leaving the box."""
    budgets = []
    for polytope in state.polytopes:
        v = polytope.vertices
        diameter = float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))
        budgets.append(fraction * state.box * diameter)
    return budgets


def verify_pushforward(state: PotentialGrid, engine: Optional[MomentEngine] = None,
                       tolerance: float = 1e-4, confinement_tolerance: float = 1e-8) -> Dict[str, Any]:
    """
    Compare moments of the pushforward of exp(<W, grad f>) det D^2 f dx under
    grad f with the polytope moments, per summand.
    """
    engine = engine if engine is not None else MomentEngine({})
    inner = _interior(state.dim)
    weights = quadrature_weights(state.box, state.n, state.dim)[inner]
    potentials = state.potentials
    slacks = confinement_slack(state)
    summands = []
    for alpha, polytope in enumerate(state.polytopes):
        lhs, _, parts = _lhs(state, alpha, potentials[alpha])
        mass = (weights * lhs).ravel() * state.volumes[alpha]
        points = np.stack([g.ravel() for g in parts['grad']], axis=1)
        i0 = float(mass.sum())
        i1 = mass @ points
        i2 = points.T @ (mass[:, None] * points)
        exact = engine.moments(polytope, state.weights[alpha])
        radius = max(1.0, float(np.max(np.linalg.norm(polytope.vertices, axis=1))))
        deviations = {
            'i0': abs(i0 - exact.i0) / exact.i0,
            'i1': float(np.linalg.norm(i1 - exact.i1)) / (exact.i0 * radius),
            'i2': float(np.linalg.norm(i2 - exact.i2)) / (exact.i0 * radius ** 2),
            'barycenter': float(np.linalg.norm(i1 / i0 - exact.mean)),
        }
        summands.append({
            'deviations': deviations,
            'pushforward_barycenter': (i1 / i0).tolist(),
            'polytope_barycenter': exact.mean.tolist(),
            'min_gradient_slack': slacks[alpha],
            'passed': bool(max(deviations.values()) < tolerance and slacks[alpha] >= -confinement_tolerance),
        })
    return {
        'summands': summands,
        'tolerance': tolerance,
        'passed': all(s['passed'] for s in summands),
    }


# Path solver

class ContinuationSolver:
    """Continuity path t: 0 -> 1 with adaptive steps."""

    def __init__(self, config: dict, engine: Optional[MomentEngine] = None,
                 monitor: Optional[PathMonitor] = None):
        """
        Initialize Continuation Solver.

        Args:
            config: Configuration dictionary with 'ma_solver' section
            engine: Shared moment engine
            monitor: Path progress monitor
        """
        self.config = config.get('ma_solver', {})
        self.dim = self.config.get('dim', 1)
        self.grid = self.config.get('grid', 513)
        self.box = self.config.get('box', 12.0)
        self.t_step = self.config.get('t_step', 0.1)
        self.min_t_step = self.config.get('min_t_step', 1e-4)
        self.tolerance = self.config.get('tolerance', 1e-9)
        self.max_newton = self.config.get('max_newton_iterations', 30)
        self.max_halvings = self.config.get('max_step_halvings', 30)
        self.confinement_tolerance = self.config.get('confinement_tolerance', 1e-8)
        self.oscillation_fraction = self.config.get('oscillation_fraction', 0.25)
        self.symplectic_scale = self.config.get('symplectic_scale', DEFAULT_SYMPLECTIC_SCALE)
        self.box_tolerance = self.config.get('box_tolerance', 1e-2)
        self.sign = 1 if self.config.get('positive_exponent', False) else -1
        self.engine = engine if engine is not None else MomentEngine(config)
        self.monitor = monitor if monitor is not None else PathMonitor(config)

        # Statistics
        self.newton_iterations = 0
        self.accepted_steps = 0
        self.rejected_steps = 0
        self.history: List[Dict[str, Any]] = []

        logger.info(f"Continuation Solver initialized: dim={self.dim}, grid={self.grid}, box={self.box}, "
                    f"t_step={self.t_step}, tol={self.tolerance}, sign={self.sign:+d}")

    def initial_state(self, decomp: Decomposition, weights) -> PotentialGrid:
        """References, volumes and a convex t = 0 starting iterate."""
        decomp.validate()
        if decomp.dim != self.dim:
            raise DimensionMismatch(f"Decomposition has dimension {decomp.dim}, solver runs dim={self.dim}")
        weights = np.zeros((decomp.k, decomp.dim)) if weights is None else np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != decomp.k:
            raise ArityMismatch(f"{weights.shape[0] if weights.ndim else 0} weights for {decomp.k} summands")
        if weights.shape[1] != decomp.dim:
            raise DimensionMismatch(f"Weights of length {weights.shape[1]} for dimension {decomp.dim}")

        report = futaki_twisted(decomp, list(weights), engine=self.engine)
        if not report.vanishes:
            logger.warning(f"Weighted Futaki vector {report.vector.tolist()} does not vanish; "
                           f"the path is expected to get stuck before t=1")

        refs = [guillemin_reference(p, self.box, self.grid, scale=self.symplectic_scale,
                                    box_tolerance=self.box_tolerance)
                for p in decomp.summands]
        references = np.array([r.values for r in refs])
        gradients = np.array([r.gradient for r in refs])
        volumes = np.array([self.engine.moments(p, w).i0 for p, w in zip(decomp.summands, weights)])

        # normalize int_{R^m} e^{-sum h} = 1 (box quadrature plus boundary tail)
        quad = quadrature_weights(self.box, self.grid, self.dim)
        log_density = -references.sum(axis=0)
        tail = boundary_tail(log_density, self.box)
        total = float(np.sum(quad * np.exp(log_density))) + tail
        references = references + np.log(total) / decomp.k
        reference_tail = tail / total

        state = PotentialGrid(
            polytopes=list(decomp.summands),
            weights=weights,
            volumes=volumes,
            box=float(self.box),
            n=int(self.grid),
            references=references,
            reference_gradients=gradients,
            phi=np.zeros_like(references),
            t=0.0,
            sign=self.sign,
            reference_tail=reference_tail,
            target=decomp.target,
        )
        logger.info(f"Initial state: k={state.k}, volumes={volumes.tolist()}, reference tail={reference_tail:.3e}")
        state = _convex_start(state)
        return state.with_values(phi=state.phi + _t0_shift(state))

    def converge(self, state: PotentialGrid) -> Tuple[Optional[PotentialGrid], int, float]:
        """Newton iterations at fixed t; returns (state or None on failure, iterations, residual)."""
        try:
            current = residual(state).norm
        except NonConvexIterate:
            return None, 0, float('inf')
        for iteration in range(1, self.max_newton + 1):
            if current < self.tolerance:
                return state, iteration - 1, current
            try:
                state, info = newton_step_with_info(state, self.max_halvings)
            except (SingularLinearization, ConvexityLost, NonConvexIterate) as e:
                logger.debug(f"Newton failure at t={state.t:.6f}: {e}")
                return None, iteration, current
            self.newton_iterations += 1
            logger.debug(f"t={state.t:.6f} Newton {iteration}: residual {info.residual_after:.3e} "
                         f"(damping {info.damping})")
            if not info.decreased:
                return None, iteration, current
            current = info.residual_after
        if current < self.tolerance:
            return state, self.max_newton, current
        return None, self.max_newton, current

    def rejection(self, state: PotentialGrid) -> Optional[str]:
        """Why a converged state cannot be accepted on the path, or None."""
        slack = min(confinement_slack(state))
        if slack < -self.confinement_tolerance:
            return f'confinement ({slack:.3e})'
        budgets = oscillation_budget(state, self.oscillation_fraction)
        for alpha, (spread, budget) in enumerate(zip(oscillation(state), budgets)):
            if spread > budget:
                return f'oscillation (summand {alpha}: {spread:.3f} > {budget:.3f})'
        try:
            boundary_tail(_log_rhs(state, state.potentials), state.box)
        except BoxTooSmall:
            return 'mass escapes the box'
        return None

    def _attempt(self, state: PotentialGrid) -> Tuple[Optional[PotentialGrid], int, float, Optional[str]]:
        candidate, iterations, res = self.converge(state)
        if candidate is None:
            return None, iterations, res, 'newton'
        reason = self.rejection(candidate)
        return (candidate if reason is None else None), iterations, res, reason

    def solve(self, decomp: Decomposition, weights=None) -> PathState:
        """
        Follow the continuity path from t = 0 to t = 1.

        Raises:
            PathStuck: t = 0 failed or the step size fell below the minimum
                (carries the last accepted t and the last rejection reason)
        """
        state = self.initial_state(decomp, weights)
        history: List[Dict[str, Any]] = []
        self.history = history

        converged, iterations, res, reason = self._attempt(state)
        history.append({'t': 0.0, 'dt': 0.0, 'newton_iterations': iterations,
                        'residual': res, 'accepted': converged is not None, 'reason': reason,
                        'oscillation': _spread(converged)})
        self.monitor.update(0.0, 0.0, res, iterations, converged is not None)
        if converged is None:
            raise PathStuck(f"t=0 state rejected: {reason} (residual {res:.3e})", reached_t=0.0, reason=reason)
        state = converged

        t, dt = 0.0, self.t_step
        while t < 1.0:
            t_next = min(1.0, t + dt)
            candidate, iterations, res, reason = self._attempt(state.with_values(t=t_next))
            accepted = candidate is not None
            history.append({'t': t_next, 'dt': t_next - t, 'newton_iterations': iterations,
                            'residual': res, 'accepted': accepted, 'reason': reason,
                            'oscillation': _spread(candidate)})
            self.monitor.update(t_next, t_next - t, res, iterations, accepted)

            if accepted:
                self.accepted_steps += 1
                state, t = candidate, t_next
                dt = min(2.0 * dt, self.t_step)
                logger.info(f"Path step accepted: t={t:.6f}, residual={res:.3e}")
                continue

            self.rejected_steps += 1
            dt *= 0.5
            logger.debug(f"Path step rejected at t={t_next:.6f} ({reason}); dt -> {dt:.3e}")
            if dt < self.min_t_step:
                logger.warning(f"Continuity path stuck at t={t:.6f}")
                raise PathStuck(f"Continuity path stuck at t={t:.6f} (last failure: {reason})",
                                reached_t=t, reason=reason)

        final = residual(state).norm
        logger.info(f"Continuity path reached t=1: residual={final:.3e}, "
                    f"accepted={self.accepted_steps}, rejected={self.rejected_steps}")
        return PathState(t=1.0, state=state, residual=final, history=history)

    def get_stats(self) -> dict:
        return {
            'newton_iterations': self.newton_iterations,
            'accepted_steps': self.accepted_steps,
            'rejected_steps': self.rejected_steps,
            'monitor': self.monitor.get_stats(),
        }


def _spread(state: Optional[PotentialGrid]) -> Optional[float]:
    return None if state is None else max(oscillation(state))


def _all_convex(state: PotentialGrid) -> bool:
    potentials = state.potentials
    return all(_is_convex(_derivatives(potentials[a], state.spacing)) for a in range(state.k))


def _convex_start(state: PotentialGrid) -> PotentialGrid:
    """
    Add the smallest multiple of |x|^2 / 2 that makes every 9-point determinant
    positive. Sampled references can fail this where they are nearly affine
    along a direction off the grid axes.

    Raises:
        GridTooCoarse: no multiple up to 1e4 h^2 works
    """
    if _all_convex(state):
        return state
    bowl = 0.5 * np.sum(grid_points(state.axis, state.dim) ** 2, axis=1).reshape(state.shape)
    for exponent in range(-4, 5):
        eps = state.spacing ** 2 * 10.0 ** exponent
        candidate = state.with_values(phi=state.phi + eps * bowl)
        if _all_convex(candidate):
            logger.info(f"Starting iterate convexified with {eps:.3e} |x|^2 / 2")
            return candidate
    raise GridTooCoarse("Reference potentials are not discretely convex on this grid; refine the grid")


def _t0_shift(state: PotentialGrid) -> float:
    """Common constant added to every phi_alpha that solves the t = 0 mass identity."""
    weights = quadrature_weights(state.box, state.n, state.dim)
    href = state.references.sum(axis=0)
    density = weights * np.exp(-href)
    big_phi = state.sign * state.potentials.sum(axis=0) + href
    return float(-np.sum(density * big_phi) / (state.sign * state.k * np.sum(density)))


def solve_t0_decoupled(state: PotentialGrid, tolerance: float = 1e-12, max_iter: int = 50,
                       max_halvings: int = 30) -> PotentialGrid:
    """
    Solve the t = 0 system summand by summand (each block only sees its own
    phi, its mass factor and the fixed right side exp(-sum h)), then fix the
    common constant in closed form.
    """
    state = state.with_values(t=0.0)
    inner = _interior(state.dim)
    rim = _rim(state.shape)
    rhs = np.exp(-state.references.sum(axis=0))
    rhs_inside = np.where(rim, 0.0, rhs).ravel()
    density = (quadrature_weights(state.box, state.n, state.dim) * rhs).ravel()
    phi = state.phi.copy()
    factors = state.mass_factors.copy()
    for alpha in range(state.k):
        f_base = state.references[alpha]
        normals = _rim_normals(state, alpha, rim)

        def block(values, c):
            lhs, factor, parts = _lhs(state, alpha, f_base + values)
            fld = np.empty(state.shape)
            fld[inner] = lhs - c * rhs[inner]
            fld[rim] = _rim_residual(state, alpha, f_base + values, normals, rim)
            return np.append(fld.ravel(), density @ values.ravel()), factor, parts

        values = phi[alpha] - float(density @ phi[alpha].ravel()) / float(density.sum())
        c = float(factors[alpha])
        stacked, factor, parts = block(values, c)
        if not _is_convex(parts):
            raise NonConvexIterate(f"Potential {alpha} is not discretely convex")
        current = float(np.max(np.abs(stacked)))
        for _ in range(max_iter):
            if current < tolerance:
                break
            matrix = sparse.bmat([
                [_stencil_matrix(state, factor, parts, state.weights[alpha]) + _rim_matrix(state, normals, rim),
                 sparse.csr_matrix(-rhs_inside[:, None])],
                [sparse.csr_matrix(density[None, :]), None],
            ], format='csc')
            delta = spsolve(matrix, -stacked)
            if not np.all(np.isfinite(delta)):
                raise SingularLinearization(f"Block {alpha} linearization is singular")
            damping = 1.0
            for _ in range(max_halvings + 1):
                trial = values + damping * delta[:-1].reshape(state.shape)
                trial_c = c + damping * float(delta[-1])
                t_stacked, t_factor, t_parts = block(trial, trial_c)
                if _is_convex(t_parts) and np.max(np.abs(t_stacked)) < current:
                    break
                damping *= 0.5
            else:
                raise ConvexityLost(f"Block {alpha}: no convex decreasing step")
            values, c, stacked, factor, parts = trial, trial_c, t_stacked, t_factor, t_parts
            current = float(np.max(np.abs(stacked)))
        phi[alpha] = values
        factors[alpha] = c
        logger.debug(f"Decoupled t=0 block {alpha}: residual {current:.3e}, mass factor {c:.12f}")
    decoupled = state.with_values(phi=phi, mass_factors=factors)
    return decoupled.with_values(phi=phi + _t0_shift(decoupled))


def continuity_solve(decomp: Decomposition, weights=None, config: Optional[dict] = None) -> PathState:
    """Convenience wrapper around ContinuationSolver."""
    return ContinuationSolver(config or {}).solve(decomp, weights)
