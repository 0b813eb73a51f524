"""Backward characteristics of the frozen-signal kinetic equation (d = 1).

Along dX/ds = v, dM/ds = F(M, S(X, s)) / eps the density obeys an ODE in s.
X is affine; M is integrated with scipy's RK45 at tight tolerances, and the
maximal step is halved until M at the foot of the path stops moving.

m = 0 and m = m_max carry zero inflow data: a backward path that leaves
[0, m_max] is cut at the time it entered the domain.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from model.grid import PhaseGrid
from model.spec import ModelSpec, eval_F
from utils.errors import BadConfig, LeftDomain

__all__ = ["SignalHistory", "CharacteristicPath", "backtrace", "trace_family", "TOL_FOOT"]

log = logging.getLogger(__name__)

# halving the maximal step may move M at the foot of the path by at most this much
TOL_FOOT = 1e-10
MAX_REFINEMENTS = 12


class SignalHistory:
    """S(x, s) from samples on the x grid at increasing times.

    Linear in s between samples (constant outside the sampled range) and
    linear in x between cell centers, periodic or clamped at the ends.
    """

    def __init__(self, times, values, grid: PhaseGrid):
        if grid.dim != 1:
            raise BadConfig("signal histories are supported for d = 1 only")
        self.times = np.atleast_1d(np.asarray(times, dtype=float))
        self.values = np.asarray(values, dtype=float).reshape(len(self.times), grid.x_nodes)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("signal history times must increase")
        self.grid = grid

    @classmethod
    def frozen(cls, signal, grid: PhaseGrid) -> "SignalHistory":
        return cls([0.0], np.asarray(getattr(signal, "values", signal))[None, :], grid)

    @property
    def is_stationary(self) -> bool:
        return len(self.times) == 1 or bool(np.all(self.values == self.values[0]))

    def _in_x(self, row: np.ndarray, x: np.ndarray) -> np.ndarray:
        g = self.grid
        if g.x_topology == "periodic":
            return np.interp(x, g.x_centers, row, period=g.x_extent)
        return np.interp(x, g.x_centers, row)

    def __call__(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if len(self.times) == 1:
            return self._in_x(self.values[0], x)
        s = float(np.clip(s, self.times[0], self.times[-1]))
        j = min(int(np.searchsorted(self.times, s, side="right")) - 1, len(self.times) - 2)
        theta = (s - self.times[j]) / (self.times[j + 1] - self.times[j])
        return (1 - theta) * self._in_x(self.values[j], x) + theta * self._in_x(self.values[j + 1], x)


@dataclass(frozen=True)
class CharacteristicPath:
    """Samples of one backward characteristic ending at (x, v, m, t).

    ``s`` increases; entries before ``entry_time`` lie outside the domain.
    """

    s: np.ndarray
    X: np.ndarray
    M: np.ndarray
    v: float
    t: float
    entry_time: Optional[float] = None

    @property
    def inside(self) -> np.ndarray:
        if self.entry_time is None:
            return np.ones_like(self.s, dtype=bool)
        return self.s > self.entry_time

    @property
    def foot(self) -> Tuple[float, float]:
        """(X(0), M(0)); only meaningful when the path never left the domain."""
        return float(self.X[0]), float(self.M[0])


def _integrate(spec, grid, history, v, x, m, t, samples, max_step):
    x = np.asarray(x, dtype=float)

    def rhs(s, M):
        # F at the clipped state keeps the field smooth once a path has left
        S = history(x - v * (t - s), s)
        return eval_F(spec, np.clip(M, 0.0, grid.m_max), S) / spec.eps

    if t == 0:
        return np.repeat(np.asarray(m, dtype=float)[:, None], len(samples), axis=1), None
    sol = solve_ivp(
        rhs,
        (t, 0.0),
        np.asarray(m, dtype=float),
        method="RK45",
        rtol=1e-12,
        atol=1e-13,
        max_step=max_step,
        dense_output=True,
    )
    if not sol.success:
        raise RuntimeError(f"characteristic integration failed: {sol.message}")
    return np.atleast_2d(sol.sol(samples)), sol


def _entry_times(spec, grid, history, v, x, M, samples, sol, t):
    """Time each path entered [0, m_max], or nan if it never left."""
    outside = (M < 0.0) | (M > grid.m_max)
    entry = np.full(M.shape[0], np.nan)
    for c in np.flatnonzero(outside.any(axis=1)):
        # samples increase in s; the last outside sample brackets the entry
        k = int(np.flatnonzero(outside[c])[-1])
        bound = 0.0 if M[c, k] < 0 else grid.m_max
        S = float(history(x[c] - v * (t - samples[k]), samples[k]))
        F = float(eval_F(spec, bound, S))
        if (bound == 0.0 and F <= 0) or (bound == grid.m_max and F >= 0):
            raise LeftDomain(
                f"backward characteristic from x={x[c]:.6g}, v={v:.6g} crosses m={bound:.6g} "
                f"where the forward flow points outward (F={F:.6g})"
            )
        if k + 1 >= len(samples) or sol is None:
            entry[c] = samples[k]
            continue
        entry[c] = brentq(lambda s: sol.sol(s)[c] - bound, samples[k], samples[k + 1], xtol=1e-14)
    return entry


def trace_family(
    spec: ModelSpec,
    grid: PhaseGrid,
    history: SignalHistory,
    v: float,
    x,
    m,
    t: float,
    samples,
) -> Tuple[np.ndarray, np.ndarray]:
    """Backward paths from (x_c, v, m_c, t) for many starting points at once.

    Returns M at ``samples`` (shape (n_paths, n_samples)) and the entry time
    of each path (nan when the path stays inside). The maximal step is halved
    until M at the earliest sample moves by at most :data:`TOL_FOOT`.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if np.any((m < 0) | (m > grid.m_max)):
        raise LeftDomain(f"characteristic starts outside [0, {grid.m_max}]")
    samples = np.asarray(samples, dtype=float)

    max_step = max(t, 1e-300) / 4.0
    M, sol = _integrate(spec, grid, history, v, x, m, t, samples, max_step)
    for _ in range(MAX_REFINEMENTS):
        if sol is None:
            break
        max_step *= 0.5
        finer, finer_sol = _integrate(spec, grid, history, v, x, m, t, samples, max_step)
        change = float(np.max(np.abs(finer[:, 0] - M[:, 0])))
        M, sol = finer, finer_sol
        if change <= TOL_FOOT:
            break
    else:
        log.warning(f"characteristic foot still moves by {change:.3g} after {MAX_REFINEMENTS} refinements")
    return M, _entry_times(spec, grid, history, v, x, M, samples, sol, t)


def backtrace(
    x: float,
    v: float,
    m: float,
    t: float,
    S_history: SignalHistory,
    spec: ModelSpec,
    grid: PhaseGrid,
    samples=None,
) -> CharacteristicPath:
    """The backward characteristic through (x, v, m) at time t.

    X(s) = x - v (t - s) exactly; M(s) solves dM/ds = F(M, S(X(s), s)) / eps
    backwards from M(t) = m. ``samples`` defaults to 65 equispaced times on [0, t].
    """
    if grid.dim != 1:
        raise BadConfig("characteristics are supported for d = 1 only")
    v = float(np.ravel(v)[0])
    samples = np.linspace(0.0, t, 65) if samples is None else np.asarray(samples, dtype=float)
    M, entry = trace_family(spec, grid, S_history, v, [x], [m], t, samples)
    X = x - v * (t - samples)
    return CharacteristicPath(
        s=samples,
        X=X,
        M=M[0],
        v=v,
        t=t,
        entry_time=None if np.isnan(entry[0]) else float(entry[0]),
    )
