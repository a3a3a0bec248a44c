#!/usr/bin/env python3
"""
Coupled Soliton Toolkit Main Orchestrator
JSON-in/JSON-out command line for toric coupled Kaehler-Einstein metrics and solitons.

Subcommands:
- canonical:    canonical polytope of a fan
- slice:        Reeb slice of a moment cone
- check-decomp: Minkowski decomposition and normalization checks
- futaki:       coupled Futaki obstruction (optionally weighted / paired with a vector)
- soliton:      soliton vector field of a decomposition
- solve:        continuity-path Monge-Ampere solve on a box grid
- spectrum:     first eigenvalue of the twisted Laplacian of a saved solution
- verify:       full invariant + pushforward + spectral battery on a saved solution

Exit codes: 0 pass, 2 mathematical failure (obstruction, stuck path, ...),
1 input error. Reports go to stdout (or --out), logs to stderr.
"""

import argparse
import json
import logging
import os
import sys
import time
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, List

import numpy as np

from errors import CoupledSolitonError, SchemaError
from exp_moments import MomentEngine
from futaki_invariant import Decomposition, futaki, futaki_twisted, check_normalizations, vanishing_tolerance
from monge_ampere_solver import (
    ContinuationSolver,
    residual,
    mass_report,
    mass_identity_holds,
    verify_pushforward,
    confinement_slack,
)
from polytope_geometry import canonical_polytope, reeb_slice
from report_io import InputReader, RunReport, parse_vector, render, error_report, write_output
from soliton_solver import SolitonSolver
from spectral_check import SturmLiouvilleProblem, first_eigenvalue, verify_holomorphic_identity
from status_logger import PathMonitor

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'
THREADS_ENV = 'COUPLED_SOLITON_THREADS'

# Configure logging (stderr; stdout carries the report)
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, datefmt=LOG_DATEFMT)
logger = logging.getLogger(__name__)


class CoupledSolitonToolkit:
    """Main orchestrator: configuration, logging, workers and subcommand dispatch."""

    def __init__(self, args: argparse.Namespace):
        """
        Initialize the toolkit for one run.

        Args:
            args: Parsed command-line arguments
        """
        self.args = args
        self.config: dict = {}
        self.log_handler: Optional[logging.Handler] = None

        self.engine: Optional[MomentEngine] = None
        self.soliton_solver: Optional[SolitonSolver] = None
        self.continuation: Optional[ContinuationSolver] = None
        self.monitor: Optional[PathMonitor] = None
        self.reader: Optional[InputReader] = None

        self.load_config()
        self.setup_logging()
        self.apply_overrides()

    def load_config(self):
        """Load configuration from JSON file (missing default file means built-in defaults)."""
        config_file = Path(self.args.config)
        if not config_file.exists():
            if self.args.config_explicit:
                raise SchemaError(f"Configuration file not found: {self.args.config}", self.args.config)
            logger.debug(f"No configuration file at {self.args.config}; using defaults")
            return
        try:
            with open(config_file, 'r') as f:
                self.config = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Invalid JSON in configuration file: {e.msg}",
                              f"{self.args.config}:{e.lineno}:{e.colno}")
        if not isinstance(self.config, dict):
            raise SchemaError("Configuration must be a JSON object", self.args.config)
        logger.info(f"Configuration loaded from {self.args.config}")

    def setup_logging(self):
        """Setup logging from configuration."""
        log_config = self.config.get('logging', {})
        log_level = 'DEBUG' if self.args.verbose else log_config.get('level', 'INFO')
        numeric_level = getattr(logging, str(log_level).upper(), logging.INFO)
        logging.getLogger().setLevel(numeric_level)

        log_file = log_config.get('file')
        if log_file:
            self.log_handler = RotatingFileHandler(
                log_file,
                maxBytes=log_config.get('max_bytes', 10485760),
                backupCount=log_config.get('backup_count', 5)
            )
            self.log_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
            logging.getLogger().addHandler(self.log_handler)
            logger.info(f"Logging to file: {log_file}")

    def apply_overrides(self):
        """Flags override config values; the thread environment variable caps the pool."""
        system = self.config.setdefault('system', {})
        threads = int(system.get('thread_pool_size', 1))
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = min(threads, max(1, int(env)))
            except ValueError:
                logger.warning(f"Ignoring non-integer {THREADS_ENV}={env!r}")
        system['thread_pool_size'] = max(1, threads)

        ma = self.config.setdefault('ma_solver', {})
        for flag, key in (('dim', 'dim'), ('grid', 'grid'), ('box', 'box'),
                          ('t_step', 't_step'), ('tol', 'tolerance')):
            value = getattr(self.args, flag, None)
            if value is not None:
                ma[key] = value
        if getattr(self.args, 'positive_exponent', False):
            ma['positive_exponent'] = True

    def initialize_modules(self):
        """Initialize the shared workers."""
        logger.info("Initializing modules...")
        geometry = self.config.get('geometry', {})
        self.reader = InputReader(
            rel_tol=geometry.get('relative_tolerance', 1e-9),
            n_directions=geometry.get('support_directions', 200),
            direction_seed=geometry.get('direction_seed', 0),
        )
        self.engine = MomentEngine(self.config)
        self.soliton_solver = SolitonSolver(self.config, self.engine)
        self.monitor = PathMonitor(self.config)
        logger.info("All modules initialized")

    # Subcommands

    def _vanishing_tol(self, decomp: Decomposition) -> float:
        return vanishing_tolerance(decomp, self.config.get('invariant', {}).get('vanishing_tolerance'))

    def cmd_canonical(self) -> RunReport:
        normals = self.reader.fan(self.args.fan)
        polytope = canonical_polytope(normals, rel_tol=self.reader.rel_tol)
        results = {'polytope': polytope.to_dict(), 'vertex_count': len(polytope.vertices)}
        return self._report(results, {'relative': self.reader.rel_tol, 'absolute': polytope.tolerance})

    def cmd_slice(self) -> RunReport:
        cone = self.reader.cone(self.args.cone)
        xi = parse_vector(self.args.xi, '--xi')
        polytope = reeb_slice(cone, xi, rel_tol=self.reader.rel_tol)
        results = {'polytope': polytope.to_dict(), 'vertex_count': len(polytope.vertices)}
        return self._report(results, {'relative': self.reader.rel_tol, 'absolute': polytope.tolerance})

    def cmd_check_decomp(self) -> RunReport:
        decomp = self.reader.decomposition(self.args.decomp)
        tol = self._vanishing_tol(decomp)
        check = decomp.check()
        normalizations = check_normalizations(decomp, tol, self.engine)
        results = {'decomposition': check.to_dict(), 'normalizations': normalizations.to_dict()}
        return self._report(results, {'support': check.tolerance, 'moments': tol}, passed=check.passed)

    def cmd_futaki(self) -> RunReport:
        decomp = self.reader.decomposition(self.args.decomp)
        tol = self._vanishing_tol(decomp)
        if self.args.weights:
            weights = list(self.reader.weights(self.args.weights, decomp.k, decomp.dim))
        else:
            weights = [np.zeros(decomp.dim)] * decomp.k
        report = futaki_twisted(decomp, weights, tol=tol, engine=self.engine)
        results = {'futaki': report.to_dict()}
        if self.args.vector:
            V = parse_vector(self.args.vector, '--vector')
            results['pairing'] = {'vector': V.tolist(), 'value': futaki(decomp, V, self.engine)}
        return self._report(results, {'vanishing': tol}, passed=report.vanishes)

    def cmd_soliton(self) -> RunReport:
        decomp = self.reader.decomposition(self.args.decomp)
        solution = self.soliton_solver.solve(decomp, trace=self.args.trace)
        results = {'soliton': solution.to_dict(include_trace=self.args.trace)}
        return self._report(results, {'gradient': self.soliton_solver.tolerance})

    def cmd_solve(self) -> RunReport:
        decomp = self.reader.decomposition(self.args.decomp)
        ma = self.config['ma_solver']
        if 'dim' not in ma:
            ma['dim'] = decomp.dim
        if self.args.weights:
            weights = self.reader.weights(self.args.weights, decomp.k, decomp.dim)
        elif self.args.tied_soliton:
            solution = self.soliton_solver.solve(decomp)
            weights = np.tile(solution.W, (decomp.k, 1))
        else:
            weights = np.zeros((decomp.k, decomp.dim))

        self.continuation = ContinuationSolver(self.config, self.engine, self.monitor)
        if self.config.get('logging', {}).get('status_line', False):
            self.monitor.start()
        try:
            path = self.continuation.solve(decomp, weights)
        finally:
            self.monitor.stop()

        state = path.state
        pushforward = verify_pushforward(
            state, self.engine,
            tolerance=ma.get('pushforward_tolerance', 1e-4),
            confinement_tolerance=self.continuation.confinement_tolerance,
        )
        mass = mass_report(state)
        mass_allowance = ma.get('mass_tolerance', 1e-6)
        mass_ok = mass_identity_holds(mass, mass_allowance)
        results = {
            'path': path.to_dict(),
            'state': {'t': state.t, 'mass_factors': state.mass_factors.tolist(),
                      'weights': state.weights.tolist(), 'volumes': state.volumes.tolist(),
                      'box': state.box, 'n': state.n, 'sign': state.sign},
            'residual': residual(state).to_dict(),
            'mass': mass,
            'mass_identity_holds': mass_ok,
            'pushforward': pushforward,
            'confinement_slack': confinement_slack(state),
        }
        if self.args.save:
            Path(self.args.save).write_text(render(state.to_dict()))
            logger.info(f"Solution grid saved to {self.args.save}")
            results['saved'] = self.args.save
        tolerances = {'newton': self.continuation.tolerance,
                      'confinement': self.continuation.confinement_tolerance,
                      'pushforward': pushforward['tolerance'],
                      'mass': mass_allowance}
        return self._report(results, tolerances, passed=bool(pushforward['passed'] and mass_ok))

    def _spectral_results(self, state, alphas: List[int]) -> dict:
        spectral = self.config.get('spectral', {})
        eigen_tol = spectral.get('eigen_tolerance', 1e-3)
        eigen = []
        for alpha in alphas:
            result = first_eigenvalue(SturmLiouvilleProblem.from_state(state, alpha))
            entry = result.to_dict()
            entry['alpha'] = alpha
            entry['passed'] = bool(result.eigenvalue >= 1.0 - eigen_tol)
            eigen.append(entry)
        identity = verify_holomorphic_identity(state, tol=spectral.get('state_tolerance', 1e-8))
        return {'eigenvalues': eigen, 'identity': identity}

    def cmd_spectrum(self) -> RunReport:
        state = self.reader.solution(self.args.solution)
        results = self._spectral_results(state, [self.args.alpha])
        eigen_tol = self.config.get('spectral', {}).get('eigen_tolerance', 1e-3)
        passed = all(e['passed'] for e in results['eigenvalues'])
        return self._report(results, {'eigenvalue': eigen_tol}, passed=passed)

    def cmd_verify(self) -> RunReport:
        state = self.reader.solution(self.args.solution)
        if state.target is None:
            raise SchemaError("Solution dump carries no target polytope", f"{self.args.solution}:$.target")
        decomp = Decomposition(state.target, list(state.polytopes))
        check = decomp.check()
        tol = self._vanishing_tol(decomp)
        ma = self.config.get('ma_solver', {})
        state_tol = self.config.get('spectral', {}).get('state_tolerance', 1e-8)

        obstruction = futaki_twisted(decomp, list(state.weights), tol=tol, engine=self.engine)
        res = residual(state)
        pushforward = verify_pushforward(
            state, self.engine,
            tolerance=ma.get('pushforward_tolerance', 1e-4),
            confinement_tolerance=ma.get('confinement_tolerance', 1e-8),
        )
        mass = mass_report(state)
        mass_ok = mass_identity_holds(mass, ma.get('mass_tolerance', 1e-6))
        results = {
            'decomposition': check.to_dict(),
            'futaki': obstruction.to_dict(),
            'residual': res.to_dict(),
            'mass': mass,
            'mass_identity_holds': mass_ok,
            'pushforward': pushforward,
        }
        passed = (check.passed and obstruction.vanishes and res.norm <= state_tol
                  and pushforward['passed'] and mass_ok)
        if state.dim == 1 and state.t == 1.0:
            results['spectral'] = self._spectral_results(state, list(range(state.k)))
            passed = passed and all(e['passed'] for e in results['spectral']['eigenvalues'])
        else:
            results['spectral'] = None
            logger.info("Spectral checks skipped (need a 1-D solution at t=1)")
        tolerances = {'vanishing': tol, 'state': state_tol,
                      'pushforward': pushforward['tolerance'],
                      'eigenvalue': self.config.get('spectral', {}).get('eigen_tolerance', 1e-3)}
        return self._report(results, tolerances, passed=bool(passed))

    def _report(self, results: dict, tolerances: dict, passed: bool = True) -> RunReport:
        return RunReport(
            subcommand=self.args.command,
            input_digest=self.reader.digest,
            results=results,
            tolerances=tolerances,
            passed=passed,
            stats=self.get_stats(),
        )

    def run(self) -> RunReport:
        """Run the selected subcommand."""
        self.initialize_modules()
        handler = getattr(self, 'cmd_' + self.args.command.replace('-', '_'))
        start = time.monotonic()
        try:
            report = handler()
        finally:
            elapsed = time.monotonic() - start
            logger.info(f"{self.args.command} finished in {elapsed:.3f}s")
        if self.args.timing:
            report.wall_clock = elapsed
        return report

    def get_stats(self) -> dict:
        """Get statistics from all modules."""
        stats = {}
        if self.engine:
            stats['moment_engine'] = self.engine.get_stats()
        if self.soliton_solver and self.soliton_solver.solves:
            stats['soliton_solver'] = {k: v for k, v in self.soliton_solver.get_stats().items() if k != 'engine'}
        if self.continuation:
            stats['continuation'] = self.continuation.get_stats()
        return stats

    def close(self):
        if self.engine:
            self.engine.close()
        if self.log_handler:
            logging.getLogger().removeHandler(self.log_handler)
            self.log_handler.close()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', default=None, help='Configuration file path (default: config.json)')
    common.add_argument('-v', '--verbose', action='store_true', help='Enable verbose logging')
    common.add_argument('--pretty', action='store_true', help='Indent the JSON report')
    common.add_argument('--out', default=None, help='Write the report to FILE instead of stdout')
    common.add_argument('--timing', action='store_true', help='Include wall-clock time in the report')

    parser = argparse.ArgumentParser(
        description='Coupled Soliton Toolkit - toric coupled Kaehler-Einstein metrics and solitons')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('canonical', parents=[common], help='Canonical polytope of a fan')
    p.add_argument('--fan', required=True, help='Fan normals JSON')

    p = sub.add_parser('slice', parents=[common], help='Reeb slice of a moment cone')
    p.add_argument('--cone', required=True, help='Moment cone JSON')
    p.add_argument('--xi', required=True, help='Reeb vector, comma separated')

    p = sub.add_parser('check-decomp', parents=[common], help='Check a Minkowski decomposition')
    p.add_argument('--decomp', required=True, help='Decomposition JSON')

    p = sub.add_parser('futaki', parents=[common], help='Coupled Futaki obstruction')
    p.add_argument('--decomp', required=True, help='Decomposition JSON')
    p.add_argument('--weights', default=None, help='Weights JSON (k vectors)')
    p.add_argument('--vector', default=None, help='Pair the obstruction with V, comma separated')

    p = sub.add_parser('soliton', parents=[common], help='Soliton vector field')
    p.add_argument('--decomp', required=True, help='Decomposition JSON')
    p.add_argument('--trace', action='store_true', help='Include the Newton iteration trace')

    p = sub.add_parser('solve', parents=[common], help='Continuity-path Monge-Ampere solve')
    p.add_argument('--decomp', required=True, help='Decomposition JSON')
    p.add_argument('--dim', type=int, choices=[1, 2], default=None, help='Dimension m')
    p.add_argument('--grid', type=int, default=None, help='Grid nodes per axis')
    p.add_argument('--box', type=float, default=None, help='Box half-width R')
    p.add_argument('--t-step', dest='t_step', type=float, default=None, help='Initial path step')
    p.add_argument('--tol', type=float, default=None, help='Newton residual tolerance')
    weights = p.add_mutually_exclusive_group()
    weights.add_argument('--weights', default=None, help='Weights JSON (k vectors)')
    weights.add_argument('--tied-soliton', dest='tied_soliton', action='store_true',
                         help='Use the soliton field W for every summand')
    p.add_argument('--positive-exponent', dest='positive_exponent', action='store_true',
                   help='Use the exponent sign +1 (comparison runs)')
    p.add_argument('--save', default=None, help='Save the solution grid JSON to FILE')

    p = sub.add_parser('spectrum', parents=[common], help='Twisted-Laplacian first eigenvalue')
    p.add_argument('--solution', required=True, help='Saved solution grid JSON')
    p.add_argument('--alpha', type=int, default=0, help='Summand index')

    p = sub.add_parser('verify', parents=[common], help='Full verification battery on a saved solution')
    p.add_argument('--solution', required=True, help='Saved solution grid JSON')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config_explicit = args.config is not None
    if args.config is None:
        args.config = 'config.json'

    toolkit: Optional[CoupledSolitonToolkit] = None
    try:
        toolkit = CoupledSolitonToolkit(args)
        report = toolkit.run()
        write_output(report.render(args.pretty), args.out)
        if not report.passed:
            logger.warning(f"{args.command}: check did not pass")
            return 2
        return 0
    except CoupledSolitonError as e:
        logger.error(f"{args.command} failed: [{e.code}] {e.message}"
                     + (f" at {e.location}" if e.location else ""))
        digest = toolkit.reader.digest if toolkit and toolkit.reader else None
        write_output(render(error_report(e.to_dict(), args.command, digest), args.pretty), args.out)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        raise
    finally:
        if toolkit:
            toolkit.close()


if __name__ == '__main__':
    sys.exit(main())
