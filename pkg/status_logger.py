#!/usr/bin/env python3
"""
Status Logger Module
Progress monitor for continuity-path solves.

Features:
- Current t, step size, Newton residual and iteration counts
- Accepted/rejected step bookkeeping
- Optional periodic status line on stderr (stdout stays reserved for reports)
- Thread-safe updates
"""

import logging
import sys
import threading
import time
from typing import Optional

logger = logging.getLogger(__name__)


class PathMonitor:
    """Central status monitor for the continuity path."""

    def __init__(self, config: dict, update_interval: Optional[float] = None):
        """
        Initialize Path Monitor.

        Args:
            config: Configuration dictionary with 'logging' section
            update_interval: Status line interval in seconds (default from config)
        """
        self.config = config.get('logging', {})
        self.update_interval = update_interval if update_interval is not None \
            else self.config.get('status_interval', 1.0)
        self.running = False
        self.thread: Optional[threading.Thread] = None

        # Status tracking
        self.t = 0.0
        self.dt = 0.0
        self.residual = float('nan')
        self.last_newton_iterations = 0

        # Statistics
        self.updates = 0
        self.accepted = 0
        self.rejected = 0
        self.newton_iterations = 0
        self.max_t = 0.0

        # Lock for thread-safe access
        self.lock = threading.Lock()

        logger.info(f"Path Monitor initialized: update_interval={self.update_interval}s")

    def update(self, t: float, dt: float, residual: float, newton_iterations: int, accepted: bool):
        """Record one attempted path step."""
        with self.lock:
            self.updates += 1
            self.dt = dt
            self.residual = residual
            self.last_newton_iterations = newton_iterations
            self.newton_iterations += newton_iterations
            if accepted:
                self.accepted += 1
                self.t = t
                self.max_t = max(self.max_t, t)
            else:
                self.rejected += 1

    def _format_progress(self, t: float) -> str:
        bars = int(min(1.0, max(0.0, t)) * 20)
        return f"[{'=' * bars}{' ' * (20 - bars)}] {100.0 * t:5.1f}%"

    def format_status_line(self) -> str:
        """One-line status summary."""
        with self.lock:
            return (
                f"t {self._format_progress(self.t)} | "
                f"dt: {self.dt:.2e} | "
                f"residual: {self.residual:.2e} | "
                f"newton: {self.last_newton_iterations:3d} | "
                f"steps: {self.accepted}/{self.accepted + self.rejected}"
            )

    def _status_loop(self):
        logger.debug("Path Monitor status loop started")
        while self.running:
            try:
                time.sleep(self.update_interval)
                if not self.running:
                    break
                print(f"\r{self.format_status_line()}", end='', file=sys.stderr, flush=True)
            except Exception as e:
                logger.error(f"Error in status loop: {e}", exc_info=True)
                break
        print("\r" + " " * 100 + "\r", end='', file=sys.stderr, flush=True)

    def start(self):
        """Start the periodic status line."""
        if self.running:
            logger.warning("Path Monitor already running")
            return
        self.running = True
        self.thread = threading.Thread(target=self._status_loop, daemon=True)
        self.thread.start()

    def stop(self):
        """Stop the periodic status line."""
        if not self.running:
            return
        self.running = False
        if self.thread and self.thread.is_alive():
            self.thread.join(timeout=2.0 + self.update_interval)

    def get_stats(self) -> dict:
        """Get path monitor statistics."""
        with self.lock:
            return {
                't': self.t,
                'max_t': self.max_t,
                'updates': self.updates,
                'accepted': self.accepted,
                'rejected': self.rejected,
                'newton_iterations': self.newton_iterations,
            }
