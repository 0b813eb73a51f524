from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np
from tqdm import tqdm

from diagnostics.reduce import reduce_norms
from diagnostics.report import DiagnosticsReport
from elliptic.signal import SignalField, solve_signal
from kinetic.density import DensityField
from kinetic.operators import adaptation_apply, transport_apply, turning_apply
from model.grid import PhaseGrid
from model.initial import InitialData
from model.spec import ModelSpec
from utils.errors import BadConfig, PositivityViolation

__all__ = ["StepperState", "stable_dt", "step_size", "step_plan", "initial_state", "macro_step", "run"]

log = logging.getLogger(__name__)

Observer = Callable[["StepperState", dict], None]

# a last step shorter than this fraction of dt is round-off and is dropped
SHORT_STEP_TOL = 1e-9


@dataclass(frozen=True)
class StepperState:
    """Everything a macro step reads and writes.

    Time is ``t0 + steps * dt`` with a fixed ``dt``, so restarting from a dump
    reproduces the step times of a straight-through run bit for bit. A step
    with another dt first moves ``t0`` to the current time.
    ``outflow`` accumulates the mass that left a free-space grid.
    """

    density: DensityField
    signal: SignalField
    spec: ModelSpec
    grid: PhaseGrid
    initial: InitialData
    dt: float = 0.0
    steps: int = 0
    t0: float = 0.0
    outflow: float = 0.0
    frozen_signal: bool = False
    scenario_hash: str = ""

    @property
    def t(self) -> float:
        return self.t0 + self.steps * self.dt

    @property
    def mass(self) -> float:
        return self.density.mass(self.grid)


def stable_dt(grid: PhaseGrid, spec: ModelSpec, cfl: float = 0.9) -> float:
    """Largest dt meeting the transport and half-step turning CFLs, times ``cfl``."""
    transport = grid.dx / grid.speed_bound
    turning = 2.0 / (grid.V_d * spec.C_T)
    return cfl * min(transport, turning)


def step_size(grid: PhaseGrid, spec: ModelSpec, output_every: float, cfl: float = 0.9) -> Tuple[float, int]:
    """Fixed dt dividing ``output_every`` evenly, and the steps per output."""
    per_output = max(1, math.ceil(output_every / stable_dt(grid, spec, cfl)))
    return output_every / per_output, per_output


def step_plan(t: float, t_end: float, dt: float) -> Tuple[int, float]:
    """Full steps of ``dt`` from ``t`` toward ``t_end``, and the shortened last step landing on ``t_end`` (0 if none)."""
    full = max(0, math.floor((t_end - t) / dt + SHORT_STEP_TOL))
    last = t_end - (t + full * dt)
    return full, (last if last > SHORT_STEP_TOL * dt else 0.0)


def initial_state(
    grid: PhaseGrid,
    spec: ModelSpec,
    initial: InitialData,
    frozen_signal: bool = False,
    scenario_hash: str = "",
    signal: SignalField = None,
) -> StepperState:
    density = initial.p0
    if signal is None:
        signal = solve_signal(density.density(grid), grid)
    return StepperState(
        density=density,
        signal=signal,
        spec=spec,
        grid=grid,
        initial=initial,
        t0=density.t,
        frozen_signal=frozen_signal,
        scenario_hash=scenario_hash,
    )


def _check_positive(values: np.ndarray, t: float):
    if np.any(values < 0):
        idx = tuple(int(i) for i in np.argwhere(values < 0)[0])
        raise PositivityViolation(f"p >= 0 violated at cell {idx}, t={t:.6g}: p={values[idx]:.6g}")


def macro_step(state: StepperState, dt: float = None) -> StepperState:
    """One Strang step A(dt/2) T(dt/2) X(dt) T(dt/2) A(dt/2), then S from the new n."""
    dt = state.dt if dt is None else dt
    if state.steps and dt != state.dt:
        state = replace(state, t0=state.t, steps=0)
    grid, spec, S = state.grid, state.spec, state.signal

    p = adaptation_apply(state.density, S, spec, grid, 0.5 * dt)
    p = turning_apply(p, spec, grid, 0.5 * dt)
    p, outflow = transport_apply(p, grid, dt)
    p = turning_apply(p, spec, grid, 0.5 * dt)
    p = adaptation_apply(p, S, spec, grid, 0.5 * dt)

    new = replace(state, dt=dt, steps=state.steps + 1, outflow=state.outflow + outflow)
    p = p.with_values(p.values, t=new.t)
    _check_positive(p.values, new.t)
    if not state.frozen_signal:
        S = solve_signal(p.density(grid), grid)
    return replace(new, density=p, signal=S)


def _record(report: DiagnosticsReport, state: StepperState) -> dict:
    row = reduce_norms(state.density, state.signal, state.grid, state.spec.m_plus)
    return report.add(row, outflow=state.outflow)


def run(
    state: StepperState,
    t_end: float,
    output_every: float = None,
    cfl: float = 0.9,
    observer: Optional[Observer] = None,
    progress: bool = False,
) -> Tuple[DiagnosticsReport, StepperState]:
    """Advance ``state`` to ``t_end`` with the fixed dt of :func:`step_size`.

    Diagnostics rows are recorded at the start and after every
    ``output_every`` of simulated time; ``observer(state, row)`` is called on
    each. When ``t_end - t`` is not a whole number of steps the last step is
    shortened, so the run always ends at ``t_end``.
    """
    report = DiagnosticsReport(state.initial, state.spec)
    if t_end < state.t:
        raise BadConfig(f"t_end={t_end} precedes the current time {state.t}")
    if t_end == state.t:
        return report, state

    output_every = t_end - state.t if output_every is None else output_every
    dt, per_output = step_size(state.grid, state.spec, output_every, cfl)
    if state.steps and state.dt != dt:
        log.info(f"rebasing time at t={state.t:.6g}: dt {state.dt:.6g} -> {dt:.6g}")
        state = replace(state, t0=state.t, steps=0)
    state = replace(state, dt=dt)
    full, last = step_plan(state.t, t_end, dt)
    total = full + (last > 0)
    log.info(f"advancing t={state.t:.6g} -> {t_end:.6g} in {total} steps of dt={dt:.6g}")
    if last > 0:
        log.info(f"last step shortened to {last:.6g}")

    entry = _record(report, state)
    if observer is not None:
        observer(state, entry)
    for k in tqdm(range(1, total + 1), disable=not progress, desc="macro steps"):
        state = macro_step(state) if k <= full else macro_step(state, last)
        if k % per_output == 0 or k == total:
            entry = _record(report, state)
            if observer is not None:
                observer(state, entry)
    return report, state
