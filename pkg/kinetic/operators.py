"""Split operators of the kinetic step.

Every update is written in factor form ``p * (1 - outgoing) + incoming`` with
non-negative factors under its CFL condition, so a step never produces a
negative cell. CFL breaches raise :class:`CflViolation` instead of clipping.
"""
from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np

from diagnostics.reduce import pairwise_sum
from kinetic.density import DensityField
from model.grid import PhaseGrid
from model.spec import ModelSpec, eval_F, turning_rates
from utils.errors import CflViolation, SpecViolation

__all__ = [
    "turning_increment",
    "turning_update",
    "turning_apply",
    "transport_apply",
    "adaptation_speeds",
    "adaptation_substeps",
    "adaptation_apply",
]

log = logging.getLogger(__name__)

# round-off slack on the CFL numbers
CFL_SLACK = 1e-12


def _gain_loss(values: np.ndarray, rates: np.ndarray, weights: np.ndarray):
    # values (..., K) and rates (..., K, K) with rates[..., v, v'] the jump rate v' -> v
    gain = np.einsum("...ij,...j->...i", rates, values * weights)
    loss_rate = np.einsum("...ij,i->...j", rates, weights)
    return gain, loss_rate


def turning_increment(values: np.ndarray, rates: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Q[p](v) = sum_v' w_v' (T(v,v') p(v') - T(v',v) p(v)) on the last axis."""
    gain, loss_rate = _gain_loss(values, rates, weights)
    return gain - loss_rate * values


def turning_update(values: np.ndarray, rates: np.ndarray, weights: np.ndarray, dt: float, bound: float) -> np.ndarray:
    """Explicit Euler turning step on the last axis, p (1 - dt r) + dt gain.

    ``bound`` is a certificate for the loss rate r(v) = sum_v' w_v' T(v',v);
    dt * bound must not exceed one.
    """
    if dt * bound > 1.0 + CFL_SLACK:
        raise CflViolation(f"turning step dt={dt:.6g} exceeds 1/(V_d C_T)={1.0 / bound:.6g}")
    gain, loss_rate = _gain_loss(values, rates, weights)
    return values * (1.0 - dt * loss_rate) + dt * gain


def turning_apply(p: DensityField, spec: ModelSpec, grid: PhaseGrid, dt: float) -> DensityField:
    rates = turning_rates(spec, grid.m_centers)
    # (..., K, Nm) -> (..., Nm, K) so the velocity sums run over the last axis
    values = np.moveaxis(p.values, -2, -1)
    new = turning_update(values, rates, grid.weights, dt, grid.V_d * spec.C_T)
    return p.with_values(np.ascontiguousarray(np.moveaxis(new, -1, -2)))


def _shift(values: np.ndarray, axis: int, step: int, periodic: bool) -> np.ndarray:
    """values[j - step] along ``axis``, zero inflow outside a free-space grid."""
    if periodic:
        return np.roll(values, step, axis=axis)
    out = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if step > 0:
        src[axis], dst[axis] = slice(None, -step), slice(step, None)
    else:
        src[axis], dst[axis] = slice(-step, None), slice(None, step)
    out[tuple(dst)] = values[tuple(src)]
    return out


def transport_apply(p, grid: PhaseGrid, dt: float) -> Tuple[DensityField, float]:
    """Unsplit donor-cell step of v . grad_x p.

    Works on kinetic fields ``x_shape + (K, Nm)`` and on bar fields
    ``x_shape + (K,)``. Returns the new field and the mass that left a
    free-space grid through its boundary (0 on periodic grids).
    """
    courant = dt * grid.speed_bound / grid.dx
    if courant > 1.0 + CFL_SLACK:
        raise CflViolation(f"transport Courant number {courant:.6g} > 1 (dt={dt:.6g}, dx={grid.dx:.6g})")

    values = p.values
    trailing = values.ndim - grid.dim - 1
    periodic = grid.x_topology == "periodic"
    lam = dt / grid.dx
    velocities = grid.velocities.reshape((grid.v_count, grid.dim) + (1,) * trailing)
    weights = grid.weights.reshape((grid.v_count,) + (1,) * trailing)
    if trailing:
        measure = grid.cell_measure
    else:
        measure = grid.x_cell * weights

    speed = np.sum(np.abs(velocities), axis=1)
    new = values * (1.0 - lam * speed)
    outflow = 0.0
    for axis in range(grid.dim):
        c = velocities[:, axis]
        right, left = np.maximum(c, 0.0), np.maximum(-c, 0.0)
        new = new + lam * (right * _shift(values, axis, 1, periodic) + left * _shift(values, axis, -1, periodic))
        if not periodic:
            last = np.take(values, [-1], axis=axis)
            first = np.take(values, [0], axis=axis)
            outflow += pairwise_sum(lam * (right * last + left * first) * measure)
    return p.with_values(new), outflow


def adaptation_speeds(spec: ModelSpec, grid: PhaseGrid, S) -> np.ndarray:
    """F(m, S(x)) / eps on the m faces, shaped ``x_shape + (1, Nm + 1)``."""
    S = np.asarray(getattr(S, "values", S), dtype=float)
    a = eval_F(spec, grid.m_faces, S[..., None]) / spec.eps
    if np.any(a[..., -1] >= 0):
        worst = float(np.max(a[..., -1])) * spec.eps
        raise SpecViolation(
            f"F(m_max, S) < 0 violated: F={worst:.6g} at m_max={grid.m_max}; raise m_max above m_plus"
        )
    return a[..., None, :]


def _outgoing(a: np.ndarray, dm: float) -> np.ndarray:
    # per-cell outgoing speed a+_{j+1/2} + a-_{j-1/2}, over dm
    return (np.maximum(a[..., 1:], 0.0) + np.maximum(-a[..., :-1], 0.0)) / dm


def adaptation_substeps(spec: ModelSpec, grid: PhaseGrid, S, dt: float) -> int:
    """Smallest substep count with dt_sub * max outgoing speed <= dm."""
    out = float(np.max(_outgoing(adaptation_speeds(spec, grid, S), grid.dm)))
    n_sub = max(1, math.ceil(dt * out))
    if (dt / n_sub) * out > 1.0:
        n_sub += 1
    return n_sub


def adaptation_apply(
    p: DensityField,
    S,
    spec: ModelSpec,
    grid: PhaseGrid,
    dt: float,
    substeps: int = None,
) -> DensityField:
    """Conservative upwind step of d_m [F(m, S) p / eps] with zero ghosts at m = 0 and m_max.

    S is frozen over ``dt``. The step is cut into ``substeps`` equal pieces
    (default :func:`adaptation_substeps`), each within the stiff CFL.
    """
    a = adaptation_speeds(spec, grid, S)
    n_sub = adaptation_substeps(spec, grid, S, dt) if substeps is None else int(substeps)
    tau = dt / n_sub
    lam = tau / grid.dm
    out = lam * (np.maximum(a[..., 1:], 0.0) + np.maximum(-a[..., :-1], 0.0))
    if np.max(out) > 1.0 + CFL_SLACK:
        raise CflViolation(f"adaptation substep {tau:.6g} exceeds the stiff CFL ({n_sub} substeps)")
    # upwind inflow from the left face (a > 0) and from the right face (a < 0)
    from_left = lam * np.maximum(a[..., :-1], 0.0)
    from_right = lam * np.maximum(-a[..., 1:], 0.0)
    keep = 1.0 - out

    values = p.values
    pad = [(0, 0)] * (values.ndim - 1)
    for _ in range(n_sub):
        ghost = np.pad(values, pad + [(1, 1)])
        values = values * keep + from_left * ghost[..., :-2] + from_right * ghost[..., 2:]
    log.debug(f"adaptation over dt={dt:.6g} in {n_sub} substeps")
    return p.with_values(values)
