#!/usr/bin/env python3
"""
Futaki Invariant Module
Coupled Futaki obstruction for toric decompositions of the canonical polytope.

Features:
- Decomposition data model with cached Minkowski-sum validation
- Fut(V) and the weighted obstruction Fut_{W_1..W_k}
- Normalization checks (support sum, first moments, Minkowski barycenter)
- Coupled Kaehler-Einstein existence decision
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, List, Sequence

import numpy as np

from errors import InvalidDecomposition, ArityMismatch, DimensionMismatch, SchemaError
from exp_moments import MomentEngine, polytope_exp_moments
from polytope_geometry import (
    Polytope,
    DecompositionCheck,
    canonical_polytope,
    check_decomposition,
)

logger = logging.getLogger(__name__)

DEFAULT_VANISHING_TOLERANCE = 1e-9


@dataclass(eq=False)
class Decomposition:
    """Target canonical polytope and its ordered Minkowski summands."""

    target: Polytope
    summands: List[Polytope]
    n_directions: int = 200
    direction_seed: int = 0
    _check: Optional[DecompositionCheck] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.summands:
            raise InvalidDecomposition("Decomposition needs at least one summand")
        for index, summand in enumerate(self.summands):
            if summand.dim != self.target.dim:
                raise DimensionMismatch(
                    f"Summand {index} has dimension {summand.dim}, target has {self.target.dim}"
                )

    @property
    def k(self) -> int:
        return len(self.summands)

    @property
    def dim(self) -> int:
        return self.target.dim

    def check(self) -> DecompositionCheck:
        if self._check is None:
            self._check = check_decomposition(self.summands, self.target,
                                              n_directions=self.n_directions,
                                              seed=self.direction_seed)
        return self._check

    def validate(self):
        """Raise InvalidDecomposition unless the summands add up to the target."""
        report = self.check()
        if not report.passed:
            raise InvalidDecomposition(
                f"Summands do not add up to the target: deviation {report.max_deviation:.3e} "
                f"in direction {report.worst_direction}"
            )

    @classmethod
    def from_fan(cls, normals, summands: List[Polytope], rel_tol: float = 1e-9) -> 'Decomposition':
        return cls(canonical_polytope(normals, rel_tol=rel_tol), summands)

    @classmethod
    def from_dict(cls, data: dict, rel_tol: float = 1e-9, location: str = '$',
                  n_directions: int = 200, direction_seed: int = 0) -> 'Decomposition':
        """
        Parse {"target": <polytope>, "summands": [<polytope>, ...]}.

        A "fan": [[..], ..] entry may replace "target"; the target is then the
        canonical polytope of the fan.
        """
        if not isinstance(data, dict):
            raise SchemaError("Decomposition must be a JSON object", location)
        if 'summands' not in data or not isinstance(data['summands'], list) or not data['summands']:
            raise SchemaError("'summands' must be a non-empty list", f"{location}.summands")
        if ('target' in data) == ('fan' in data):
            raise SchemaError("Give exactly one of 'target' or 'fan'", location)

        if 'target' in data:
            target = Polytope.from_dict(data['target'], rel_tol=rel_tol, location=f"{location}.target")
        else:
            fan = data['fan']
            if not isinstance(fan, list) or not fan:
                raise SchemaError("'fan' must be a non-empty list of normals", f"{location}.fan")
            target = canonical_polytope(fan, rel_tol=rel_tol)
        summands = [
            Polytope.from_dict(item, rel_tol=rel_tol, location=f"{location}.summands[{i}]")
            for i, item in enumerate(data['summands'])
        ]
        return cls(target, summands, n_directions=n_directions, direction_seed=direction_seed)

    def to_dict(self) -> dict:
        return {
            'schema': 'v1',
            'target': self.target.to_dict(),
            'summands': [s.to_dict() for s in self.summands],
        }


@dataclass
class FutakiReport:
    """Fut_{W_1..W_k} = sum of tilted summand barycenters."""

    vector: np.ndarray
    per_summand: List[np.ndarray]
    vanishes: bool
    tolerance: float
    weights: List[np.ndarray]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def to_dict(self) -> dict:
        return {
            'vector': self.vector.tolist(),
            'norm': self.norm,
            'per_summand': [p.tolist() for p in self.per_summand],
            'vanishes': self.vanishes,
            'tolerance': self.tolerance,
            'weights': [w.tolist() for w in self.weights],
        }


def vanishing_tolerance(decomp: Decomposition, tol: Optional[float] = None,
                        relative: float = DEFAULT_VANISHING_TOLERANCE) -> float:
    """Absolute tolerance: explicit value, else relative * max(1, target circumradius)."""
    if tol is not None:
        return float(tol)
    return relative * max(1.0, decomp.target.circumradius)


def _barycenter(polytope: Polytope, w, engine: Optional[MomentEngine]) -> np.ndarray:
    if engine is not None:
        return engine.barycenter(polytope, w)
    return polytope_exp_moments(polytope, w).mean


def futaki_twisted(decomp: Decomposition, weights: Sequence, tol: Optional[float] = None,
                   engine: Optional[MomentEngine] = None) -> FutakiReport:
    """
    Weighted obstruction vector sum_alpha A_{P_alpha}(W_alpha).

    Raises:
        InvalidDecomposition: summands do not add up to the target
        ArityMismatch: number of weights differs from number of summands
    """
    decomp.validate()
    if len(weights) != decomp.k:
        raise ArityMismatch(f"{len(weights)} weights for {decomp.k} summands")
    weight_vectors = []
    for index, w in enumerate(weights):
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != decomp.dim:
            raise DimensionMismatch(f"Weight {index} has length {w.shape[0]}, expected {decomp.dim}")
        weight_vectors.append(w)

    per_summand = [_barycenter(p, w, engine) for p, w in zip(decomp.summands, weight_vectors)]
    vector = np.sum(per_summand, axis=0)
    tol = vanishing_tolerance(decomp, tol)
    report = FutakiReport(
        vector=vector,
        per_summand=per_summand,
        vanishes=bool(np.linalg.norm(vector) < tol),
        tolerance=tol,
        weights=weight_vectors,
    )
    logger.debug(f"Futaki vector {vector.tolist()} (vanishes={report.vanishes})")
    return report


def futaki(decomp: Decomposition, V, engine: Optional[MomentEngine] = None) -> float:
    """Fut(V) = <sum_alpha barycenter(P_alpha), V>."""
    V = np.asarray(V, dtype=float).reshape(-1)
    if V.shape[0] != decomp.dim:
        raise DimensionMismatch(f"Vector of length {V.shape[0]} for dimension {decomp.dim}")
    zeros = [np.zeros(decomp.dim)] * decomp.k
    report = futaki_twisted(decomp, zeros, engine=engine)
    return float(report.vector @ V)


@dataclass
class NormalizationReport:
    support_deviation: float
    support_passed: bool
    parallel: bool
    first_moment_sum: np.ndarray
    first_moment_passed: bool
    minkowski_barycenter: np.ndarray
    minkowski_barycenter_passed: bool
    translation_ambiguity: int
    tolerance: float

    def to_dict(self) -> dict:
        return {
            'support': {
                'deviation': self.support_deviation,
                'passed': self.support_passed,
                'parallel': self.parallel,
            },
            'first_moments': {
                'sum': self.first_moment_sum.tolist(),
                'passed': self.first_moment_passed,
            },
            'minkowski_barycenter': {
                'value': self.minkowski_barycenter.tolist(),
                'passed': self.minkowski_barycenter_passed,
            },
            'translation_ambiguity': self.translation_ambiguity,
            'tolerance': self.tolerance,
        }


def check_normalizations(decomp: Decomposition, tol: Optional[float] = None,
                         engine: Optional[MomentEngine] = None) -> NormalizationReport:
    """
    Report the support-sum condition, sum_alpha int_{P_alpha} p dp and the
    barycenter of the target separately. Never raises on a bad sum.

    The remaining freedom (translations t_alpha with sum t_alpha = 0) has
    dimension (k - 1) * m and is reported, not resolved.
    """
    tol = vanishing_tolerance(decomp, tol)
    check = decomp.check()

    zero = np.zeros(decomp.dim)
    moments = [engine.moments(p, zero) if engine else polytope_exp_moments(p, zero)
               for p in decomp.summands]
    first_sum = np.sum([mo.i1 for mo in moments], axis=0)
    mass = max(1.0, sum(mo.i0 for mo in moments))
    target_barycenter = (engine.moments(decomp.target, zero) if engine
                         else polytope_exp_moments(decomp.target, zero)).mean

    report = NormalizationReport(
        support_deviation=check.max_deviation,
        support_passed=check.passed,
        parallel=check.parallel,
        first_moment_sum=first_sum,
        first_moment_passed=bool(np.linalg.norm(first_sum) < tol * mass),
        minkowski_barycenter=target_barycenter,
        minkowski_barycenter_passed=bool(np.linalg.norm(target_barycenter) < tol),
        translation_ambiguity=(decomp.k - 1) * decomp.dim,
        tolerance=tol,
    )
    logger.info(f"Normalizations: support={report.support_passed}, "
                f"first moments={report.first_moment_passed}, "
                f"Minkowski barycenter={report.minkowski_barycenter_passed}")
    return report


def coupled_ke_exists(decomp: Decomposition, tol: Optional[float] = None,
                      engine: Optional[MomentEngine] = None) -> tuple:
    """
    Toric existence criterion for coupled Kaehler-Einstein metrics.

    Returns:
        (exists, FutakiReport) with exists iff the untwisted vector vanishes
    """
    zeros = [np.zeros(decomp.dim)] * decomp.k
    report = futaki_twisted(decomp, zeros, tol=tol, engine=engine)
    logger.info(f"Coupled KE existence: {report.vanishes} (|Fut|={report.norm:.3e})")
    return report.vanishes, report
