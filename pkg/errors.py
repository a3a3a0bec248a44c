#!/usr/bin/env python3
"""
Error Types
Exception hierarchy shared by all toolkit modules.

Features:
- One base class with machine-readable code and process exit code
- Input errors (exit 1) separated from mathematical outcomes (exit 2)
- Optional location hint for malformed JSON inputs
"""

from typing import Optional


class CoupledSolitonError(Exception):
    """Base class for all toolkit errors."""

    code = "error"
    exit_code = 2

    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.location = location

    def to_dict(self) -> dict:
        """Machine-readable error object."""
        return {
            'code': self.code,
            'message': self.message,
            'location': self.location,
        }


class InputError(CoupledSolitonError):
    """Caller supplied data the toolkit cannot work with."""

    code = "input_error"
    exit_code = 1


class SchemaError(InputError):
    code = "schema_error"


class NotConverged(CoupledSolitonError):
    """An iteration stopped short of its tolerance."""

    code = "not_converged"


# Geometry

class DegenerateInput(InputError):
    code = "degenerate_input"


class UnboundedPolytope(DegenerateInput):
    code = "unbounded_polytope"


class UnboundedSlice(InputError):
    code = "unbounded_slice"


class DimensionMismatch(InputError):
    code = "dimension_mismatch"


# Moments

class ToleranceNotReached(CoupledSolitonError):
    code = "tolerance_not_reached"


# Invariant

class InvalidDecomposition(InputError):
    code = "invalid_decomposition"


class ArityMismatch(InputError):
    code = "arity_mismatch"


# Soliton

class OriginNotInterior(CoupledSolitonError):
    code = "origin_not_interior"


class MaxIterationsExceeded(CoupledSolitonError):
    code = "max_iterations_exceeded"


class LineSearchStall(NotConverged):
    code = "line_search_stall"


# Monge-Ampere

class MongeAmpereError(CoupledSolitonError):
    code = "monge_ampere_error"


class GridTooCoarse(MongeAmpereError):
    code = "grid_too_coarse"


class BoxTooSmall(MongeAmpereError):
    code = "box_too_small"


class NonConvexIterate(MongeAmpereError):
    code = "non_convex_iterate"


class SingularLinearization(MongeAmpereError):
    code = "singular_linearization"


class ConvexityLost(MongeAmpereError):
    code = "convexity_lost"


class PathStuck(MongeAmpereError):
    """Continuity path could not be continued; carries the last accepted t and why the next step failed."""

    code = "path_stuck"

    def __init__(self, message: str, reached_t: float, reason: Optional[str] = None,
                 location: Optional[str] = None):
        super().__init__(message, location)
        self.reached_t = reached_t
        self.reason = reason

    def to_dict(self) -> dict:
        data = super().to_dict()
        data['reached_t'] = self.reached_t
        data['reason'] = self.reason
        return data


# Spectral


class EigenSolveFailure(CoupledSolitonError):
    code = "eigen_solve_failure"
