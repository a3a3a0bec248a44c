#!/usr/bin/env python3
"""
Guillemin Reference Module
Reference Kaehler potentials in log coordinates from polytope data.

Features:
- Symplectic potential u = scale * sum_i l_i log l_i of a polytope
- Vectorized Newton Legendre transform on a box grid, dual points clamped inside P
- Exact gradient and Hessian samples (Hessian = inverse of Hess u)
- Convexity and gradient-image checks
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from errors import GridTooCoarse, BoxTooSmall, DimensionMismatch, NotConverged
from polytope_geometry import Polytope

logger = logging.getLogger(__name__)

DEFAULT_SYMPLECTIC_SCALE = 0.5

# minimum facet slack of dual points, relative to the largest offset
SLACK_FLOOR = 64.0 * np.finfo(float).eps


@dataclass
class GuilleminReference:
    """Sampled reference potential h of one polytope on a box grid."""

    polytope: Polytope
    axis: np.ndarray
    values: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    scale: float
    constant: float = 0.0

    @property
    def dim(self) -> int:
        return self.polytope.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def shifted(self, constant: float) -> 'GuilleminReference':
        """Same reference with `constant` added to the potential."""
        return GuilleminReference(self.polytope, self.axis, self.values + constant,
                                  self.gradient, self.hessian, self.scale, self.constant + constant)


def grid_axis(box: float, n: int) -> np.ndarray:
    return np.linspace(-box, box, n)


def grid_points(axis: np.ndarray, dim: int) -> np.ndarray:
    """Grid nodes as (n**dim, dim), C order (first coordinate slowest)."""
    if dim == 1:
        return axis[:, None]
    mesh = np.meshgrid(*([axis] * dim), indexing='ij')
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def symplectic_potential(polytope: Polytope, points: np.ndarray, scale: float = DEFAULT_SYMPLECTIC_SCALE) -> np.ndarray:
    """u(p) = scale * sum_i l_i(p) log l_i(p) for interior points."""
    ell = np.atleast_2d(points) @ polytope.normals.T + polytope.offsets
    return scale * np.sum(ell * np.log(ell), axis=1)


def legendre_points(polytope: Polytope, x: np.ndarray, scale: float = DEFAULT_SYMPLECTIC_SCALE,
                    max_iter: int = 200, tol: float = 1e-11) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve grad u(p) = x for every row of x by Newton with a fraction-to-boundary rule.

    Dual points are kept at least SLACK_FLOOR (relative) inside every facet.
    Far out in the box the exact point is closer to a facet than doubles can
    resolve; there the Newton step is restricted to the clamped facet.

    Returns:
        (p, H) with p the dual points and H = Hess u(p)

    Raises:
        NotConverged: some points did not converge within max_iter
    """
    normals, offsets = polytope.normals, polytope.offsets
    dim = polytope.dim
    n_points = x.shape[0]
    floor = SLACK_FLOOR * max(1.0, float(np.max(np.abs(offsets))))
    p = np.tile(polytope.vertices.mean(axis=0), (n_points, 1))
    pending = np.ones(n_points, dtype=bool)
    rows = np.arange(n_points)

    for iteration in range(max_iter):
        idx = rows[pending]
        if idx.size == 0:
            break
        q, xq = p[idx], x[idx]
        ell = q @ normals.T + offsets
        grad = scale * (np.log(ell) + 1.0) @ normals - xq
        hess = scale * np.einsum('nf,fi,fj->nij', 1.0 / ell, normals, normals)
        step = -np.linalg.solve(hess, grad[..., None])[..., 0]
        measure = np.max(np.abs(grad), axis=1)

        blocked = (ell <= 2.0 * floor) & (step @ normals.T < 0.0)
        n_blocked = blocked.sum(axis=1)
        if dim == 1:
            stopped = n_blocked > 0
        else:
            stopped = n_blocked > 1
            single = n_blocked == 1
            if np.any(single):
                lam = normals[np.argmax(blocked, axis=1)]
                z = np.stack([-lam[:, 1], lam[:, 0]], axis=1)
                z /= np.linalg.norm(z, axis=1)[:, None]
                zg = np.sum(z * grad, axis=1)
                zhz = np.einsum('ni,nij,nj->n', z, hess, z)
                step = np.where(single[:, None], -(zg / zhz)[:, None] * z, step)
                measure = np.where(single, np.abs(zg), measure)
        step[stopped] = 0.0
        measure[stopped] = 0.0

        resolution = 4.0 * np.finfo(float).eps * np.maximum(1.0, np.max(np.abs(q), axis=1))
        done = (measure <= tol * (1.0 + np.max(np.abs(xq), axis=1))) | (np.max(np.abs(step), axis=1) <= resolution)
        pending[idx[done]] = False

        move = ~done
        d_ell = step[move] @ normals.T
        with np.errstate(divide='ignore', invalid='ignore'):
            ratios = np.where(d_ell < 0.0, (ell[move] - floor) / -d_ell, np.inf)
        alpha = np.minimum(1.0, 0.99 * ratios.min(axis=1))
        p[idx[move]] = q[move] + alpha[:, None] * step[move]

    if np.any(pending):
        raise NotConverged(f"Legendre transform: {int(pending.sum())} of {n_points} points "
                           f"not converged after {max_iter} iterations")

    ell = p @ normals.T + offsets
    hess = scale * np.einsum('nf,fi,fj->nij', 1.0 / ell, normals, normals)
    return p, hess


def guillemin_reference(polytope: Polytope, box: float, n: int,
                        scale: float = DEFAULT_SYMPLECTIC_SCALE,
                        box_tolerance: float = 1e-2) -> GuilleminReference:
    """
    Legendre dual h(x) = sup_p (<x, p> - u(p)) of the symplectic potential on [-box, box]^m.

    Args:
        polytope: Polytope with the origin of moment space inside
        box: Half-width R of the box
        n: Grid nodes per axis
        scale: Factor in front of sum l log l
        box_tolerance: Allowed distance (relative to circumradius) of the
            gradient image to each facet

    Raises:
        GridTooCoarse: grid too small or discrete convexity fails
        BoxTooSmall: gradient image stays away from a facet
    """
    dim = polytope.dim
    if dim not in (1, 2):
        raise DimensionMismatch(f"Reference potentials are supported for m = 1, 2, got {dim}")
    if n < 5:
        raise GridTooCoarse(f"Grid with {n} nodes per axis is too coarse")

    axis = grid_axis(box, n)
    x = grid_points(axis, dim)
    p, hess_u = legendre_points(polytope, x, scale)
    values = np.sum(x * p, axis=1) - symplectic_potential(polytope, p, scale)
    hessian = np.linalg.inv(hess_u)

    shape = (n,) * dim
    values = values.reshape(shape)
    gradient = p.reshape(shape + (dim,))
    hessian = hessian.reshape(shape + (dim, dim))

    _check_convexity(values, axis[1] - axis[0])

    slack = polytope.facet_slacks(p)
    reach = slack.min(axis=0)
    limit = box_tolerance * max(1.0, polytope.circumradius)
    if np.any(reach > limit):
        worst = int(np.argmax(reach))
        raise BoxTooSmall(
            f"Gradient image misses facet {worst} by {reach[worst]:.3e} (limit {limit:.3e}); enlarge the box"
        )

    logger.info(f"Guillemin reference: dim={dim}, box={box}, n={n}, max facet gap={reach.max():.3e}")
    return GuilleminReference(polytope, axis, values, gradient, hessian, scale)


def _check_convexity(values: np.ndarray, spacing: float):
    """
    Second differences along the axes (and, in 2-D, the diagonals) must be
    nonnegative up to roundoff. These hold for every convex function; the
    9-point determinant does not, since it may dip below zero where the
    potential is nearly affine in one direction.
    """
    allowance = 64.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(values)))) / spacing ** 2
    if values.ndim == 1:
        second = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / spacing ** 2
        if np.min(second) < -allowance:
            raise GridTooCoarse(f"Reference not discretely convex (min second difference {np.min(second):.3e})")
        return

    center = values[1:-1, 1:-1]
    seconds = {
        'x': values[2:, 1:-1] + values[:-2, 1:-1] - 2.0 * center,
        'y': values[1:-1, 2:] + values[1:-1, :-2] - 2.0 * center,
        'diagonal': values[2:, 2:] + values[:-2, :-2] - 2.0 * center,
        'antidiagonal': values[2:, :-2] + values[:-2, 2:] - 2.0 * center,
    }
    for direction, second in seconds.items():
        worst = float(np.min(second)) / spacing ** 2
        if worst < -allowance:
            raise GridTooCoarse(f"Reference not discretely convex along {direction} ({worst:.3e}); refine the grid")
