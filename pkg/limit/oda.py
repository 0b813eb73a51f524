from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np
from scipy.optimize import bisect

from diagnostics.reduce import pairwise_sum
from elliptic.signal import SignalField, solve_signal
from kinetic.density import DensityField
from kinetic.operators import transport_apply, turning_update
from kinetic.stepper import step_plan
from model.grid import PhaseGrid
from model.spec import ModelSpec, eval_F, turning_rates
from utils.errors import NoSignChange, PositivityViolation

__all__ = [
    "TOL_ROOT",
    "m_zero",
    "m_zero_field",
    "BarDensityField",
    "BarState",
    "bar_initial_state",
    "oda_step",
    "run_oda",
]

log = logging.getLogger(__name__)

TOL_ROOT = 1e-12


def m_zero(spec: ModelSpec, S: float) -> float:
    """Root of F(., S) on [m_minus, m_plus] by bisection."""
    f = lambda m: float(eval_F(spec, m, S))
    lo, hi = f(spec.m_minus), f(spec.m_plus)
    if not (lo > 0 > hi):
        raise NoSignChange(
            f"F(., S={S:.6g}) has no sign change on [{spec.m_minus}, {spec.m_plus}]: "
            f"F(m_-)={lo:.6g}, F(m_+)={hi:.6g}"
        )
    return bisect(f, spec.m_minus, spec.m_plus, xtol=TOL_ROOT, rtol=4 * np.finfo(float).eps)


def m_zero_field(spec: ModelSpec, S) -> np.ndarray:
    """m_zero at every cell of a signal array (or SignalField)."""
    S = np.asarray(getattr(S, "values", S), dtype=float)
    return np.vectorize(lambda s: m_zero(spec, s), otypes=[float])(S)


@dataclass(frozen=True)
class BarDensityField:
    """pbar over (x, v) at time ``t``, shaped ``x_shape + (v_count,)``."""

    values: np.ndarray
    t: float = 0.0

    @classmethod
    def from_kinetic(cls, p: DensityField, grid: PhaseGrid) -> "BarDensityField":
        return cls(p.pbar(grid), t=p.t)

    def with_values(self, values: np.ndarray, t: float = None) -> "BarDensityField":
        return replace(self, values=values, t=self.t if t is None else t)

    def density(self, grid: PhaseGrid) -> np.ndarray:
        return np.sum(self.values * grid.weights, axis=-1)

    def mass(self, grid: PhaseGrid) -> float:
        return pairwise_sum(self.values * grid.weights) * grid.x_cell


@dataclass(frozen=True)
class BarState:
    pbar: BarDensityField
    signal: SignalField
    spec: ModelSpec
    grid: PhaseGrid
    dt: float = 0.0
    steps: int = 0
    t0: float = 0.0
    outflow: float = 0.0

    @property
    def t(self) -> float:
        return self.t0 + self.steps * self.dt


def bar_initial_state(p0: DensityField, spec: ModelSpec, grid: PhaseGrid) -> BarState:
    """Limit-model state with pbar0 = int p0 dm."""
    pbar = BarDensityField.from_kinetic(p0, grid)
    return BarState(pbar=pbar, signal=solve_signal(pbar.density(grid), grid), spec=spec, grid=grid, t0=p0.t)


def _turning(pbar: BarDensityField, S: SignalField, spec: ModelSpec, grid: PhaseGrid, dt: float) -> BarDensityField:
    rates = turning_rates(spec, m_zero_field(spec, S))
    new = turning_update(pbar.values, rates, grid.weights, dt, grid.V_d * spec.C_T)
    return pbar.with_values(new)


def oda_step(state: BarState, dt: float = None) -> BarState:
    """Strang step T(dt/2) X(dt) T(dt/2) with T at m_zero(S(x)), then S from the new n."""
    dt = state.dt if dt is None else dt
    if state.steps and dt != state.dt:
        state = replace(state, t0=state.t, steps=0)
    grid, spec = state.grid, state.spec
    p = _turning(state.pbar, state.signal, spec, grid, 0.5 * dt)
    p, outflow = transport_apply(p, grid, dt)
    p = _turning(p, state.signal, spec, grid, 0.5 * dt)

    new = replace(state, dt=dt, steps=state.steps + 1, outflow=state.outflow + outflow)
    if np.any(p.values < 0):
        raise PositivityViolation(f"pbar >= 0 violated at t={new.t:.6g}")
    p = p.with_values(p.values, t=new.t)
    return replace(new, pbar=p, signal=solve_signal(p.density(grid), grid))


def run_oda(state: BarState, t_end: float, dt: float, sample_every: int = 0) -> Tuple[BarState, Dict[int, BarDensityField]]:
    """Advance to ``t_end`` with the fixed ``dt``, shortening the last step as the kinetic run does.

    Returns the final state and pbar keyed by step count at step 0, every
    ``sample_every`` steps and the last step.
    """
    full, last = step_plan(state.t, t_end, dt)
    steps = full + (last > 0)
    state = replace(state, dt=dt, t0=state.t, steps=0)
    samples = {0: state.pbar}
    for k in range(1, steps + 1):
        state = oda_step(state) if k <= full else oda_step(state, last)
        if (sample_every and k % sample_every == 0) or k == steps:
            samples[k] = state.pbar
    log.info(f"limit model advanced to t={state.t:.6g} in {steps} steps")
    return state, samples
