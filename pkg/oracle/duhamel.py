"""Duhamel representation of the frozen-signal problem as a discrete fixed point.

Integrating the kinetic equation along backward characteristics gives

    p(x, v, m, t) = p0(X(0), v, M(0))
                    + int_0^t [ -d_mF/eps p + Q[p] ](X(s), v, M(s), s) ds

with Q the turning operator. On J equispaced time levels the integral is
a trapezoid sum and p off the grid is linearly interpolated in (x, m) with
zero ghosts beyond the m range, so the fixed point is u = b + A u with a
sparse A. Picard iteration contracts when t (Pi_cap / eps + 2 V_d C_T) < 1.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from diagnostics.reduce import pairwise_sum
from kinetic.density import DensityField
from kinetic.stepper import StepperState, run
from model.grid import PhaseGrid
from model.spec import ModelSpec, eval_dF_dm, turning_rates
from oracle.characteristics import SignalHistory, trace_family
from utils.errors import BadConfig, NoContraction

__all__ = [
    "TOL_PICARD",
    "contraction_ratio",
    "DuhamelOperator",
    "duhamel_solve",
    "frozen_signal_gap",
    "restrict",
    "OracleConvergence",
    "oracle_convergence",
]

log = logging.getLogger(__name__)

TOL_PICARD = 1e-10


def contraction_ratio(spec: ModelSpec, t: float) -> float:
    return t * (spec.Pi_cap / spec.eps + 2.0 * spec.V_d * spec.C_T)


def _linear_stencil(pos: np.ndarray, n: int, periodic: bool):
    """Indices and weights of linear interpolation at fractional node positions.

    Nodes outside 0..n-1 are zero ghosts (weight dropped) unless periodic.
    """
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    idx = np.stack((lo, lo + 1), axis=-1)
    w = np.stack((1.0 - frac, frac), axis=-1)
    if periodic:
        return idx % n, w
    valid = (idx >= 0) & (idx < n)
    return np.clip(idx, 0, n - 1), np.where(valid, w, 0.0)


class DuhamelOperator:
    """u = b + A u over the unknowns u(x_i, v_k, m_l, s_j), j = 1..J.

    ``b`` collects the pulled-back initial data and every term that touches
    the known level s_0 = 0.
    """

    def __init__(
        self,
        p0: DensityField,
        history: SignalHistory,
        spec: ModelSpec,
        grid: PhaseGrid,
        t: float,
        time_levels: int = 8,
    ):
        if grid.dim != 1:
            raise BadConfig("the Duhamel oracle supports d = 1 only")
        ratio = contraction_ratio(spec, t)
        if ratio >= 1.0:
            raise NoContraction(
                f"t (Pi_cap/eps + 2 V_d C_T) = {ratio:.6g} >= 1; shorten t={t:.6g} below "
                f"{t / ratio:.6g}"
            )
        self.spec, self.grid, self.history = spec, grid, history
        self.t = t
        self.J = int(time_levels)
        self.ratio = ratio
        self.times = np.linspace(0.0, t, self.J + 1)
        self.p0 = p0.values
        self.level_size = int(np.prod(grid.shape))
        self.A, self.b = self._assemble()

    def _index(self, j, i, k, l):
        g = self.grid
        return (j - 1) * self.level_size + (i * g.v_count + k) * g.m_nodes + l

    def _paths(self, k: int, targets: np.ndarray):
        """M and entry times of the backward paths from every (x_i, m_l) at each target level."""
        g = self.grid
        v = float(g.velocities[k, 0])
        xi, ml = np.meshgrid(g.x_centers, g.m_centers, indexing="ij")
        x, m = xi.ravel(), ml.ravel()
        if self.history.is_stationary:
            # autonomous flow: the path from level j is the path from level J shifted by t_J - t_j
            M, entry = trace_family(self.spec, g, self.history, v, x, m, self.t, self.times)
            for j in targets:
                lag = self.times[self.J] - self.times[j]
                yield j, x, M[:, self.J - j:], entry - lag
        else:
            for j in targets:
                samples = self.times[: j + 1]
                M, entry = trace_family(self.spec, g, self.history, v, x, m, self.times[j], samples)
                yield j, x, M, entry

    def _assemble(self):
        g, spec = self.grid, self.spec
        K, Nm = g.v_count, g.m_nodes
        h = self.t / self.J
        periodic = g.x_topology == "periodic"
        w_v = g.weights
        rows, cols, vals = [], [], []
        b = np.zeros(self.J * self.level_size)

        for k in range(K):
            v = float(g.velocities[k, 0])
            for j, x, M, entry in self._paths(k, range(1, self.J + 1)):
                s = self.times[: j + 1]
                n_paths = x.size
                target = self._index(j, np.repeat(np.arange(g.x_nodes), Nm), k, np.tile(np.arange(Nm), g.x_nodes))

                # foot of the path: pulled-back initial data
                stays = np.isnan(entry) | (entry < 0)
                X0 = x - v * s[-1]
                xi_idx, xi_w = _linear_stencil((X0 - g.x_centers[0]) / g.dx, g.x_nodes, periodic)
                ml_idx, ml_w = _linear_stencil((M[:, 0] - g.m_centers[0]) / g.dm, Nm, False)
                foot = np.zeros(n_paths)
                for a in range(2):
                    for c in range(2):
                        foot += xi_w[:, a] * ml_w[:, c] * self.p0[xi_idx[:, a], k, ml_idx[:, c]]
                b[target] += np.where(stays, foot, 0.0)

                # trapezoid weights, zero before the path entered the domain
                omega = np.full(j + 1, h)
                omega[0] = omega[-1] = 0.5 * h
                omega = np.where(s[None, :] > np.nan_to_num(entry, nan=-np.inf)[:, None], omega[None, :], 0.0)

                Xs = x[:, None] - v * (s[-1] - s[None, :])
                Mc = np.clip(M, 0.0, g.m_max)
                S = np.stack([self.history(Xs[:, q], s[q]) for q in range(j + 1)], axis=1)
                damping = eval_dF_dm(spec, Mc, S) / spec.eps
                rates = turning_rates(spec, Mc)  # (n_paths, j+1, K, K)
                loss = np.einsum("...ij,i->...j", rates, w_v)[..., k]
                gain = rates[..., k, :] * w_v  # coefficient of u(., k', .)

                xi_idx, xi_w = _linear_stencil((Xs - g.x_centers[0]) / g.dx, g.x_nodes, periodic)
                ml_idx, ml_w = _linear_stencil((M - g.m_centers[0]) / g.dm, Nm, False)
                for kp in range(K):
                    coef = omega * (gain[..., kp] - (kp == k) * (damping + loss))
                    for a in range(2):
                        for c in range(2):
                            weight = coef * xi_w[..., a] * ml_w[..., c]
                            xi_n, ml_n = xi_idx[..., a], ml_idx[..., c]
                            # level 0 is known data
                            b[target] += np.sum(weight[:, :1] * self.p0[xi_n[:, :1], kp, ml_n[:, :1]], axis=1)
                            w_rest = weight[:, 1:]
                            keep = w_rest != 0
                            lev = np.broadcast_to(np.arange(1, j + 1), w_rest.shape)
                            rows.append(np.broadcast_to(target[:, None], w_rest.shape)[keep])
                            cols.append(self._index(lev, xi_n[:, 1:], kp, ml_n[:, 1:])[keep])
                            vals.append(w_rest[keep])

        n = self.J * self.level_size
        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        log.info(f"assembled Duhamel operator: {n} unknowns, {A.nnz} entries, ratio {self.ratio:.3g}")
        return A, b

    def final_level(self, u: np.ndarray) -> np.ndarray:
        return u[-self.level_size:].reshape(self.grid.shape)

    def picard(self, max_iters: int = 200, tol: float = TOL_PICARD) -> Tuple[np.ndarray, List[float]]:
        """Iterate u <- b + A u from u = b; returns u and the sup-norm increments."""
        u = self.b.copy()
        increments = []
        for _ in range(max_iters):
            new = self.b + self.A @ u
            step = float(np.max(np.abs(new - u)))
            increments.append(step)
            u = new
            if step <= tol * max(1.0, float(np.max(np.abs(u)))):
                break
        else:
            if max_iters:
                log.warning(f"Picard stopped after {max_iters} iterations, last increment {increments[-1]:.3g}")
        return u, increments

    def direct_solve(self) -> np.ndarray:
        """(I - A) u = b by a sparse direct solve."""
        n = self.A.shape[0]
        return spsolve((sparse.identity(n, format="csc") - self.A).tocsc(), self.b)


def duhamel_solve(
    p0: DensityField,
    S_history: SignalHistory,
    spec: ModelSpec,
    grid: PhaseGrid,
    t: float,
    picard_iters: int = 200,
    time_levels: int = 8,
) -> DensityField:
    """Fixed point of the Duhamel representation at time t on the grid cells."""
    op = DuhamelOperator(p0, S_history, spec, grid, t, time_levels)
    u, increments = op.picard(picard_iters)
    if increments:
        log.info(f"Picard: {len(increments)} iterations, last increment {increments[-1]:.3g}")
    return DensityField(op.final_level(u), t=p0.t + t)


def _relative_l1(a: np.ndarray, b: np.ndarray, grid: PhaseGrid) -> float:
    ref = pairwise_sum(np.abs(b) * grid.cell_measure)
    return pairwise_sum(np.abs(a - b) * grid.cell_measure) / ref


def frozen_signal_gap(
    state: StepperState, t: float, min_steps: int = 1, time_levels: int = None, cfl: float = 0.9
) -> float:
    """Relative L1 gap between the kinetic solver and the Duhamel oracle at time t.

    Both hold the signal of ``state`` fixed. The kinetic run takes at least
    ``min_steps`` steps; ``time_levels`` defaults to twice its step count.
    """
    frozen = replace(state, frozen_signal=True)
    _, final = run(frozen, state.t + t, output_every=t / min_steps, cfl=cfl)
    levels = time_levels or 2 * final.steps
    history = SignalHistory.frozen(state.signal, state.grid)
    oracle = duhamel_solve(state.density, history, state.spec, state.grid, t, time_levels=levels)
    gap = _relative_l1(final.density.values, oracle.values, state.grid)
    log.info(f"frozen-signal gap at t={t:.4g}: {gap:.4g} ({final.steps} kinetic steps, {levels} levels)")
    return gap


@dataclass
class OracleConvergence:
    dx: List[float]
    gaps: List[float]

    @property
    def orders(self) -> List[float]:
        return [
            math.log(self.gaps[i] / self.gaps[i + 1]) / math.log(self.dx[i] / self.dx[i + 1])
            for i in range(len(self.gaps) - 1)
        ]

    @property
    def min_order(self) -> float:
        return min(self.orders) if len(self.gaps) > 1 else math.nan


def _midpoints(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    """Four-point interpolation to the midpoints of cell pairs (0, 1), (2, 3), ... along ``axis``."""
    values = np.moveaxis(values, axis, 0)
    if periodic:
        ext = np.concatenate((values[-1:], values, values[:1]))
    else:
        ghost = np.zeros_like(values[:1])
        ext = np.concatenate((ghost, values, ghost))
    a, b, c, d = ext[0:-3:2], ext[1:-2:2], ext[2:-1:2], ext[3::2]
    return np.moveaxis((9.0 * (b + c) - (a + d)) / 16.0, 0, axis)


def restrict(values: np.ndarray, fine: PhaseGrid, coarse: PhaseGrid) -> np.ndarray:
    """Cell values on ``fine`` carried to the cells of ``coarse``.

    Both grids span the same box with node counts differing by powers of two,
    so every coarse centre is the midpoint of two finer ones. x wraps when
    periodic; m has zero ghosts.
    """
    if fine.dim != 1 or coarse.dim != 1:
        raise BadConfig("restriction supports d = 1 only")
    if fine.x_extent != coarse.x_extent or fine.m_max != coarse.m_max or fine.v_count != coarse.v_count:
        raise BadConfig("restriction needs grids over the same box and velocities")
    out = values
    for axis, n_fine, n_coarse, periodic in (
        (0, fine.x_nodes, coarse.x_nodes, fine.x_topology == "periodic"),
        (-1, fine.m_nodes, coarse.m_nodes, False),
    ):
        factor, rest = divmod(n_fine, n_coarse)
        if rest or factor & (factor - 1):
            raise BadConfig(f"{n_fine} nodes do not nest over {n_coarse} by a power of two")
        while factor > 1:
            out = _midpoints(out, axis, periodic)
            factor //= 2
    return out


def oracle_convergence(
    build: Callable[[int], StepperState],
    levels: Sequence[int],
    t: float,
    time_levels: int = 4,
    cfl: float = 0.9,
) -> OracleConvergence:
    """Frozen-signal kinetic solutions under joint refinement of (dx, dm, dt).

    ``build(level)`` returns the state at that level, levels ascending. The
    oracle is solved once on the finest level and restricted to every coarser
    grid; the i-th level runs at least 2^(i+1) kinetic steps.
    """
    states = [build(level) for level in levels]
    finest = states[-1]
    history = SignalHistory.frozen(finest.signal, finest.grid)
    reference = duhamel_solve(finest.density, history, finest.spec, finest.grid, t, time_levels=time_levels)

    dx, gaps = [], []
    for i, state in enumerate(states):
        target = restrict(reference.values, finest.grid, state.grid)
        frozen = replace(state, frozen_signal=True)
        _, final = run(frozen, state.t + t, output_every=t / 2 ** (i + 1), cfl=cfl)
        dx.append(state.grid.dx)
        gaps.append(_relative_l1(final.density.values, target, state.grid))
        log.info(f"level {levels[i]}: dx={dx[-1]:.4g}, {final.steps} steps, gap {gaps[-1]:.4g}")
    return OracleConvergence(dx=dx, gaps=gaps)
