#!/usr/bin/env python3
"""
Soliton Solver Module
Newton solver for the soliton vector field of a toric decomposition.

Features:
- Convex functional G(W) = sum_alpha log Vol_W(P_alpha) with exact gradient/Hessian
- Damped Newton with Armijo backtracking and Cholesky steps
- A-priori properness check (origin interior to the target)
- Optional iteration trace and solver statistics
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, List, Dict, Any, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from errors import OriginNotInterior, MaxIterationsExceeded, LineSearchStall, DimensionMismatch
from exp_moments import MomentEngine
from futaki_invariant import Decomposition

logger = logging.getLogger(__name__)


@dataclass
class SolitonSolution:
    """Converged soliton vector field."""

    W: np.ndarray
    residual: float
    iterations: int
    g_value: float
    hessian: np.ndarray
    trace: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self, include_trace: bool = False) -> dict:
        data = {
            'W': self.W.tolist(),
            'residual': self.residual,
            'iterations': self.iterations,
            'g_value': self.g_value,
            'hessian_min_eigenvalue': float(np.linalg.eigvalsh(self.hessian).min()),
        }
        if include_trace:
            data['trace'] = self.trace
        return data


def g_eval(decomp: Decomposition, W, engine: Optional[MomentEngine] = None) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Value, gradient and Hessian of G(W) = sum_alpha log i0(P_alpha, W).

    The gradient is the sum of tilted barycenters, the Hessian the sum of
    tilted covariances.
    """
    decomp.validate()
    engine = engine if engine is not None else MomentEngine({})
    W = np.asarray(W, dtype=float).reshape(-1)
    if W.shape[0] != decomp.dim:
        raise DimensionMismatch(f"Weight of length {W.shape[0]} for dimension {decomp.dim}")

    value = 0.0
    gradient = np.zeros(decomp.dim)
    hessian = np.zeros((decomp.dim, decomp.dim))
    for polytope in decomp.summands:
        moments = engine.moments(polytope, W)
        value += float(np.log(moments.i0))
        gradient += moments.mean
        hessian += moments.covariance
    return value, gradient, hessian


class SolitonSolver:
    """Damped Newton iteration for sum_alpha A_{P_alpha}(W) = 0."""

    def __init__(self, config: dict, engine: Optional[MomentEngine] = None):
        """
        Initialize Soliton Solver.

        Args:
            config: Configuration dictionary with 'soliton' section
            engine: Shared moment engine (created from config if omitted)
        """
        self.config = config.get('soliton', {})
        self.tolerance = self.config.get('tolerance', 1e-10)
        self.max_iterations = self.config.get('max_iterations', 50)
        self.armijo_c1 = self.config.get('armijo_c1', 1e-4)
        self.max_halvings = self.config.get('max_halvings', 40)
        self.fallback_factor = self.config.get('fallback_factor', 10.0)
        self.engine = engine if engine is not None else MomentEngine(config)

        # Statistics
        self.solves = 0
        self.total_iterations = 0
        self.total_halvings = 0
        self.fallback_steps = 0

        logger.info(f"Soliton Solver initialized: tol={self.tolerance}, max_iter={self.max_iterations}")

    def _check_properness(self, decomp: Decomposition):
        target = decomp.target
        slack = target.facet_slacks(np.zeros(decomp.dim))
        if np.min(slack) <= target.tolerance:
            raise OriginNotInterior(
                f"Origin is not interior to the target polytope (min facet slack {np.min(slack):.3e})"
            )

    def solve(self, decomp: Decomposition, w0=None, trace: bool = False,
              tol: Optional[float] = None, max_iter: Optional[int] = None) -> SolitonSolution:
        """
        Find the soliton vector field W.

        Args:
            decomp: Valid decomposition
            w0: Start point (default: origin)
            trace: Record per-iteration data
            tol: Gradient-norm tolerance (default from config)
            max_iter: Iteration cap (default from config)

        Returns:
            SolitonSolution

        Raises:
            LineSearchStall: no Armijo step away from the tolerance (a NotConverged)
        """
        tol = self.tolerance if tol is None else tol
        max_iter = self.max_iterations if max_iter is None else max_iter
        decomp.validate()
        self._check_properness(decomp)
        self.solves += 1

        W = np.zeros(decomp.dim) if w0 is None else np.asarray(w0, dtype=float).reshape(-1).copy()
        records: List[Dict[str, Any]] = []
        value, gradient, hessian = g_eval(decomp, W, self.engine)
        iterations = 0

        while True:
            iterations += 1
            residual = float(np.linalg.norm(gradient))
            if trace:
                records.append({'iteration': iterations, 'W': W.tolist(),
                                'g_value': value, 'residual': residual})
            logger.debug(f"Newton iteration {iterations}: |grad|={residual:.3e}, G={value:.12g}")

            if residual < tol:
                break
            if iterations >= max_iter:
                raise MaxIterationsExceeded(
                    f"No convergence after {max_iter} iterations (|grad|={residual:.3e})"
                )

            try:
                step = -cho_solve(cho_factor(hessian), gradient)
            except LinAlgError:
                raise LineSearchStall("Hessian of G is not positive definite")

            slope = float(gradient @ step)
            scale = 1.0
            for _ in range(self.max_halvings):
                candidate = W + scale * step
                c_value, c_gradient, c_hessian = g_eval(decomp, candidate, self.engine)
                if c_value <= value + self.armijo_c1 * scale * slope:
                    break
                # near the tolerance G is below floating resolution: accept any step that reduces |grad|
                if residual <= self.fallback_factor * tol and np.linalg.norm(c_gradient) < residual:
                    self.fallback_steps += 1
                    break
                scale *= 0.5
                self.total_halvings += 1
            else:
                raise LineSearchStall(f"Line search stalled at iteration {iterations} "
                                      f"(|grad|={residual:.3e}, tolerance {tol:.1e})")

            W, value, gradient, hessian = candidate, c_value, c_gradient, c_hessian

        self.total_iterations += iterations
        logger.info(f"Soliton field found: W={W.tolist()}, iterations={iterations}, residual={residual:.3e}")
        return SolitonSolution(W=W, residual=residual, iterations=iterations,
                               g_value=value, hessian=hessian, trace=records)

    def get_stats(self) -> dict:
        return {
            'solves': self.solves,
            'total_iterations': self.total_iterations,
            'total_halvings': self.total_halvings,
            'fallback_steps': self.fallback_steps,
            'engine': self.engine.get_stats(),
        }


def soliton_field(decomp: Decomposition, tol: float = 1e-10, max_iter: int = 50,
                  w0=None, trace: bool = False, engine: Optional[MomentEngine] = None) -> SolitonSolution:
    """Solve for W with sum_alpha A_{P_alpha}(W) = 0 (tied weights)."""
    solver = SolitonSolver({'soliton': {'tolerance': tol, 'max_iterations': max_iter}}, engine=engine)
    return solver.solve(decomp, w0=w0, trace=trace)
