#!/usr/bin/env python3
"""
Spectral Check Module
Twisted-Laplacian checks on solved one-dimensional potentials.

Features:
- Residual of the identity Delta_{alpha, f_alpha} u_alpha = -sum_beta u_beta
  for the translation Hamiltonians u_alpha = f_alpha' - c_alpha
- Weighted Sturm-Liouville problem -(rho u')' = lambda rho m u with Neumann ends
- Symmetric tridiagonal eigen-solve after diagonal similarity scaling
- Richardson extrapolation in the grid spacing
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, List, Dict, Any, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal, LinAlgError

from errors import NotConverged, EigenSolveFailure, DimensionMismatch, NonConvexIterate
from monge_ampere_solver import PotentialGrid, residual

logger = logging.getLogger(__name__)

# absolute bisection tolerance; the relative criterion of the eigen-solver governs above it
BISECTION_TOLERANCE = 4.0 * np.finfo(float).tiny


@dataclass
class SturmLiouvilleProblem:
    """Nodal twisting weight rho and metric density m on a uniform grid."""

    x: np.ndarray
    rho: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        if not (self.x.shape == self.rho.shape == self.m.shape) or self.x.ndim != 1 or self.x.size < 3:
            raise EigenSolveFailure("x, rho and m must be 1-D arrays of equal length >= 3")
        if not (np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.m))):
            raise EigenSolveFailure("Densities must be finite")
        if np.any(self.rho <= 0.0) or np.any(self.m <= 0.0):
            raise EigenSolveFailure("Densities must be positive")

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    @classmethod
    def from_state(cls, state: PotentialGrid, alpha: int = 0) -> 'SturmLiouvilleProblem':
        """rho = exp(W_alpha f_alpha'), m = f_alpha'' at interior nodes."""
        if state.dim != 1:
            raise DimensionMismatch(f"Spectral checks need m = 1, got {state.dim}")
        if not 0 <= alpha < state.k:
            raise DimensionMismatch(f"Summand index {alpha} out of range for k={state.k}")
        f = state.potentials[alpha]
        h = state.spacing
        fx = (f[2:] - f[:-2]) / (2.0 * h)
        fxx = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h ** 2
        return cls(state.axis[1:-1], np.exp(state.weights[alpha][0] * fx), fxx)

    @classmethod
    def from_potential(cls, x, f) -> 'SturmLiouvilleProblem':
        """
        Problem for an arbitrary convex potential, twisted by its Ricci
        potential F = -log f'' - f, so that rho = exp(-f) / f''.
        """
        x = np.asarray(x, dtype=float)
        f = np.asarray(f, dtype=float)
        h = float(x[1] - x[0])
        fxx = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h ** 2
        if np.any(fxx <= 0.0):
            raise NonConvexIterate("Potential is not discretely convex")
        rho = np.exp(-f[1:-1]) / fxx
        return cls(x[1:-1], rho, fxx)

    def assemble(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """
        Stiffness matrix (symmetric tridiagonal, Neumann ends) and lumped
        mass diagonal rho * m * trapezoid weight.
        """
        h = self.spacing
        half = 0.5 * (self.rho[1:] + self.rho[:-1])
        diag = np.zeros_like(self.rho)
        diag[:-1] += half / h
        diag[1:] += half / h
        stiffness = sparse.diags([-half / h, diag, -half / h], [-1, 0, 1], format='csr')
        weights = np.full(self.x.size, h)
        weights[0] = weights[-1] = 0.5 * h
        return stiffness, self.rho * self.m * weights


@dataclass
class EigenResult:
    eigenvalue: float
    eigenvector: np.ndarray
    constant_mode: float
    n: int

    def to_dict(self) -> dict:
        return {
            'eigenvalue': self.eigenvalue,
            'constant_mode': self.constant_mode,
            'n': self.n,
            'at_least_one': bool(self.eigenvalue >= 1.0 - 1e-3),
        }


def first_eigenvalue(problem: SturmLiouvilleProblem) -> EigenResult:
    """
    Smallest nonzero eigenvalue of -(rho u')' = lambda rho m u.

    The constant mode (eigenvalue 0) is split off; the returned eigenvector is
    orthogonal to constants in the rho m inner product and normalized in it.

    Raises:
        EigenSolveFailure: eigen-solve failed or no gap above the constant mode
    """
    stiffness, mass = problem.assemble()
    scale = 1.0 / np.sqrt(mass)
    diagonal = stiffness.diagonal() * scale ** 2
    off = stiffness.diagonal(1) * scale[:-1] * scale[1:]
    try:
        values, vectors = eigh_tridiagonal(diagonal, off, select='i', select_range=(0, 1),
                                         tol=BISECTION_TOLERANCE)
    except (LinAlgError, ValueError) as e:
        raise EigenSolveFailure(f"Tridiagonal eigen-solve failed: {e}")

    constant_mode, eigenvalue = float(values[0]), float(values[1])
    if not np.isfinite(eigenvalue) or eigenvalue <= max(1e-8, 1e3 * abs(constant_mode)):
        raise EigenSolveFailure(f"No spectral gap above the constant mode (lambda_1={eigenvalue:.3e})")

    u = vectors[:, 1] * scale
    u /= np.sqrt(np.sum(mass * u ** 2))
    # fix sign: increasing at the right end
    if u[-1] < u[0]:
        u = -u
    logger.info(f"First eigenvalue: {eigenvalue:.10f} (constant mode {constant_mode:.2e}, n={problem.x.size})")
    return EigenResult(eigenvalue, u, constant_mode, problem.x.size)


def weighted_correlation(problem: SturmLiouvilleProblem, u: np.ndarray, g: np.ndarray) -> float:
    """|<u, g>| / (|u| |g|) in the rho m inner product, after removing means."""
    _, mass = problem.assemble()
    u = u - np.sum(mass * u) / mass.sum()
    g = g - np.sum(mass * g) / mass.sum()
    return float(abs(np.sum(mass * u * g)) / np.sqrt(np.sum(mass * u ** 2) * np.sum(mass * g ** 2)))


def richardson(values: Sequence[float], spacings: Sequence[float], order: int = 2) -> float:
    """Extrapolate the last two values of a sequence with error C h^order."""
    if len(values) < 2 or len(values) != len(spacings):
        raise ValueError("Need at least two values with matching spacings")
    v1, v2 = float(values[-2]), float(values[-1])
    h1, h2 = float(spacings[-2]) ** order, float(spacings[-1]) ** order
    return (v2 * h1 - v1 * h2) / (h1 - h2)


def verify_holomorphic_identity(state: PotentialGrid, shifts: Optional[Sequence[float]] = None,
                                tol: float = 1e-8) -> Dict[str, Any]:
    """
    Residual of Delta_{alpha,f_alpha} u_alpha + sum_beta u_beta with
    u_alpha = f_alpha' - c_alpha, where Delta_{alpha,f} u = (rho u')' / (rho m),
    rho = exp(W_alpha f_alpha'), m = f_alpha''. Each c_alpha is the mean of
    f_alpha' in the volume rho m dx (plus an optional shift).

    Raises:
        NotConverged: state is not a converged t = 1 solution
    """
    if state.dim != 1:
        raise DimensionMismatch(f"Spectral checks need m = 1, got {state.dim}")
    if abs(state.t - 1.0) > 0.0:
        raise NotConverged(f"State is at t={state.t}, not t=1")
    report = residual(state)
    if report.norm > tol:
        raise NotConverged(f"State residual {report.norm:.3e} exceeds {tol:.1e}")
    shifts = np.zeros(state.k) if shifts is None else np.asarray(shifts, dtype=float)
    if shifts.shape != (state.k,):
        raise DimensionMismatch(f"{shifts.size} shifts for {state.k} summands")

    h = state.spacing
    problems = [SturmLiouvilleProblem.from_state(state, a) for a in range(state.k)]
    hamiltonians = []
    constants = []
    volumes = []
    for alpha, problem in enumerate(problems):
        f = state.potentials[alpha]
        fx = (f[2:] - f[:-2]) / (2.0 * h)
        _, mass = problem.assemble()
        constant = float(np.sum(mass * fx) / mass.sum()) + shifts[alpha]
        constants.append(constant)
        volumes.append(mass)
        hamiltonians.append(fx - constant)
    total = np.sum(hamiltonians, axis=0)

    summands: List[Dict[str, Any]] = []
    sup = 0.0
    weighted_sup = 0.0
    for alpha, problem in enumerate(problems):
        u = hamiltonians[alpha]
        rho, m = problem.rho, problem.m
        half = 0.5 * (rho[1:] + rho[:-1])
        flux = half * np.diff(u) / h
        laplacian = np.diff(flux) / h / (rho[1:-1] * m[1:-1])
        pointwise = laplacian + total[1:-1]
        density = (volumes[alpha] / volumes[alpha].sum())[1:-1] / h
        alpha_sup = float(np.max(np.abs(pointwise)))
        alpha_weighted = float(np.max(np.abs(pointwise) * density))
        sup = max(sup, alpha_sup)
        weighted_sup = max(weighted_sup, alpha_weighted)
        summands.append({'constant': constants[alpha], 'sup_residual': alpha_sup,
                         'weighted_sup_residual': alpha_weighted})

    logger.info(f"Holomorphic identity: sup residual {sup:.3e}, weighted {weighted_sup:.3e}")
    return {
        'summands': summands,
        'sup_residual': sup,
        'weighted_sup_residual': weighted_sup,
        'constants_sum': float(np.sum(constants)),
        'spacing': h,
    }
