#!/usr/bin/env python3
"""
Report I/O Module
JSON input loading and run report serialization for the command line.

Features:
- Input loaders for polytopes, cones, fans, decompositions, weights and grid dumps
- SchemaError with file/line locations for malformed input
- SHA-256 digest over the bytes of every input file, in argument order
- Deterministic report rendering (sorted keys, shortest round-trip floats)
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, List, Dict, Any

import numpy as np

from errors import SchemaError, DimensionMismatch, ArityMismatch
from futaki_invariant import Decomposition
from monge_ampere_solver import PotentialGrid, potential_grid_from_dict
from polytope_geometry import Polytope, MomentCone

logger = logging.getLogger(__name__)

TOOL_VERSION = '1.0.0'
SCHEMA_VERSION = 'v1'


class InputReader:
    """Reads JSON input files and keeps the digest of everything read."""

    def __init__(self, rel_tol: float = 1e-9, n_directions: int = 200, direction_seed: int = 0):
        self.rel_tol = rel_tol
        self.n_directions = n_directions
        self.direction_seed = direction_seed
        self._hash = hashlib.sha256()
        self.files: List[str] = []

    def load_json(self, path: str) -> Any:
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise SchemaError(f"Cannot read input file: {e.strerror}", path)
        self._hash.update(raw)
        self.files.append(str(path))
        try:
            data = json.loads(raw.decode('utf-8'))
        except UnicodeDecodeError as e:
            raise SchemaError(f"Input is not UTF-8: {e}", path)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Invalid JSON: {e.msg}", f"{path}:{e.lineno}:{e.colno}")
        if isinstance(data, dict) and 'schema' in data and data['schema'] != SCHEMA_VERSION:
            raise SchemaError(f"Unsupported schema '{data['schema']}'", f"{path}:$.schema")
        logger.debug(f"Loaded input {path} ({len(raw)} bytes)")
        return data

    @property
    def digest(self) -> str:
        return self._hash.hexdigest()

    def polytope(self, path: str) -> Polytope:
        return Polytope.from_dict(self.load_json(path), rel_tol=self.rel_tol, location=f"{path}:$")

    def cone(self, path: str) -> MomentCone:
        return MomentCone.from_dict(self.load_json(path), rel_tol=self.rel_tol, location=f"{path}:$")

    def fan(self, path: str) -> np.ndarray:
        """Fan normals: a bare list of normals or {"dim": m, "normals": [...]}."""
        data = self.load_json(path)
        normals = data.get('normals') if isinstance(data, dict) else data
        location = f"{path}:$.normals" if isinstance(data, dict) else f"{path}:$"
        try:
            array = np.asarray(normals, dtype=float)
        except (TypeError, ValueError):
            raise SchemaError("Fan normals must be a list of numeric vectors", location)
        if array.ndim != 2 or array.shape[0] == 0:
            raise SchemaError("Fan normals must be a non-empty list of vectors", location)
        if isinstance(data, dict) and data.get('dim') is not None and data['dim'] != array.shape[1]:
            raise SchemaError(f"Normals have length {array.shape[1]}, 'dim' says {data['dim']}", location)
        return array

    def decomposition(self, path: str) -> Decomposition:
        return Decomposition.from_dict(self.load_json(path), rel_tol=self.rel_tol, location=f"{path}:$",
                                       n_directions=self.n_directions, direction_seed=self.direction_seed)

    def weights(self, path: str, k: int, dim: int) -> np.ndarray:
        """Weight vectors W_1..W_k: a bare (k, m) list or {"weights": [...]}."""
        data = self.load_json(path)
        values = data.get('weights') if isinstance(data, dict) else data
        try:
            array = np.asarray(values, dtype=float)
        except (TypeError, ValueError):
            raise SchemaError("Weights must be a list of numeric vectors", f"{path}:$")
        if array.ndim != 2:
            raise SchemaError("Weights must be a list of vectors", f"{path}:$")
        if array.shape[1] != dim:
            raise DimensionMismatch(f"Weights of length {array.shape[1]} for dimension {dim}", f"{path}:$")
        if array.shape[0] != k:
            raise ArityMismatch(f"{array.shape[0]} weights for {k} summands", f"{path}:$")
        return array

    def solution(self, path: str) -> PotentialGrid:
        return potential_grid_from_dict(self.load_json(path), location=f"{path}:$")


def parse_vector(text: str, name: str) -> np.ndarray:
    """Comma-separated floats from a flag value."""
    try:
        values = [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise SchemaError(f"'{text}' is not a comma-separated list of numbers", name)
    if not values:
        raise SchemaError("Empty vector", name)
    return np.asarray(values)


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays to Python types; non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def render(data: Any, pretty: bool = False) -> str:
    if pretty:
        return json.dumps(to_jsonable(data), sort_keys=True, indent=2) + '\n'
    return json.dumps(to_jsonable(data), sort_keys=True, separators=(',', ':')) + '\n'


@dataclass
class RunReport:
    """Result of one command-line run."""

    subcommand: str
    input_digest: str
    results: Dict[str, Any]
    tolerances: Dict[str, Any]
    passed: bool = True
    stats: Dict[str, Any] = field(default_factory=dict)
    wall_clock: Optional[float] = None
    version: str = TOOL_VERSION

    def to_dict(self) -> dict:
        data = {
            'schema': SCHEMA_VERSION,
            'version': self.version,
            'subcommand': self.subcommand,
            'input_digest': self.input_digest,
            'passed': self.passed,
            'results': self.results,
            'tolerances': self.tolerances,
            'stats': self.stats,
        }
        if self.wall_clock is not None:
            data['wall_clock'] = self.wall_clock
        return data

    def render(self, pretty: bool = False) -> str:
        return render(self.to_dict(), pretty)


def error_report(error_object: dict, subcommand: Optional[str], input_digest: Optional[str]) -> dict:
    return {
        'schema': SCHEMA_VERSION,
        'version': TOOL_VERSION,
        'subcommand': subcommand,
        'input_digest': input_digest,
        'error': error_object,
    }


def write_output(text: str, out: Optional[str] = None):
    """Report to the --out file if given, else stdout."""
    if out:
        Path(out).write_text(text)
        logger.info(f"Report written to {out}")
    else:
        print(text, end='')
