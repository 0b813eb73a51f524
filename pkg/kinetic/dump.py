"""CHKIN1 field dumps.

A dump is a text header, one ``key value...`` pair per line and closed by
``end``, followed by the density as little-endian float64 in row-major order
(x outermost, m innermost). Floats in the header are written with ``repr`` so
they read back bit for bit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List

import numpy as np

from elliptic.signal import solve_signal
from kinetic.density import DensityField
from kinetic.stepper import StepperState
from model.grid import PhaseGrid
from utils.errors import DumpError

__all__ = ["MAGIC", "DumpHeader", "write_dump", "read_dump", "restore_state"]

log = logging.getLogger(__name__)

MAGIC = "CHKIN1"
DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class DumpHeader:
    dim: int
    x_nodes: int
    v_count: int
    m_nodes: int
    dx: float
    velocities: np.ndarray
    weights: np.ndarray
    dm: float
    t: float
    t0: float
    steps: int
    dt: float
    eps: float
    outflow: float
    scenario_hash: str

    @property
    def shape(self):
        return (self.x_nodes,) * self.dim + (self.v_count, self.m_nodes)

    def lines(self) -> List[str]:
        out = [
            MAGIC,
            f"dims {self.dim} {self.x_nodes} {self.v_count} {self.m_nodes}",
            f"dx {self.dx!r}",
        ]
        for v, w in zip(self.velocities, self.weights):
            out.append("v " + " ".join(repr(float(c)) for c in v) + f" {float(w)!r}")
        out += [
            f"dm {self.dm!r}",
            f"t {self.t!r}",
            f"t0 {self.t0!r}",
            f"steps {self.steps}",
            f"dt {self.dt!r}",
            f"eps {self.eps!r}",
            f"outflow {self.outflow!r}",
            f"scenario {self.scenario_hash or '-'}",
            "end",
        ]
        return out


def write_dump(path: str | Path, state: StepperState):
    grid = state.grid
    header = DumpHeader(
        dim=grid.dim,
        x_nodes=grid.x_nodes,
        v_count=grid.v_count,
        m_nodes=grid.m_nodes,
        dx=grid.dx,
        velocities=grid.velocities,
        weights=grid.weights,
        dm=grid.dm,
        t=state.t,
        t0=state.t0,
        steps=state.steps,
        dt=state.dt,
        eps=state.spec.eps,
        outflow=state.outflow,
        scenario_hash=state.scenario_hash,
    )
    try:
        with open(path, "wb") as f:
            f.write(("\n".join(header.lines()) + "\n").encode("ascii"))
            f.write(np.ascontiguousarray(state.density.values, dtype=DTYPE).tobytes())
    except OSError as e:
        raise DumpError(f"cannot write dump {path}: {e}") from e
    log.debug(f"wrote dump {path} at t={state.t:.6g}")


def _parse_header(lines: List[str], path) -> DumpHeader:
    if not lines or lines[0] != MAGIC:
        raise DumpError(f"{path} is not a {MAGIC} dump")
    fields = {}
    vel = []
    for line in lines[1:]:
        key, *vals = line.split()
        if key == "v":
            vel.append([float(x) for x in vals])
        else:
            fields[key] = vals
    try:
        dim, x_nodes, v_count, m_nodes = (int(x) for x in fields["dims"])
        vel = np.array(vel, dtype=float)
        scenario = fields["scenario"][0]
        return DumpHeader(
            dim=dim,
            x_nodes=x_nodes,
            v_count=v_count,
            m_nodes=m_nodes,
            dx=float(fields["dx"][0]),
            velocities=vel[:, :dim],
            weights=vel[:, dim],
            dm=float(fields["dm"][0]),
            t=float(fields["t"][0]),
            t0=float(fields["t0"][0]),
            steps=int(fields["steps"][0]),
            dt=float(fields["dt"][0]),
            eps=float(fields["eps"][0]),
            outflow=float(fields["outflow"][0]),
            scenario_hash="" if scenario == "-" else scenario,
        )
    except (KeyError, IndexError, ValueError) as e:
        raise DumpError(f"malformed {MAGIC} header in {path}: {e}") from e


def read_dump(path: str | Path):
    """Returns (DumpHeader, DensityField)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DumpError(f"cannot read dump {path}: {e}") from e
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise DumpError(f"{path} has no header terminator")
    try:
        lines = raw[:cut].decode("ascii").split("\n")
    except UnicodeDecodeError as e:
        raise DumpError(f"{path} has a non-text header") from e
    header = _parse_header(lines, path)

    payload = raw[cut + len(marker):]
    expected = int(np.prod(header.shape)) * DTYPE.itemsize
    if len(payload) != expected:
        raise DumpError(f"{path} holds {len(payload)} data bytes, expected {expected} for shape {header.shape}")
    values = np.frombuffer(payload, dtype=DTYPE).reshape(header.shape).astype(float)
    return header, DensityField(values, t=header.t)


def _check_compatible(header: DumpHeader, state: StepperState, path):
    grid: PhaseGrid = state.grid
    problems = []
    if header.shape != grid.shape:
        problems.append(f"shape {header.shape} != {grid.shape}")
    if header.dx != grid.dx or header.dm != grid.dm:
        problems.append("cell widths differ")
    if header.eps != state.spec.eps:
        problems.append(f"eps {header.eps} != {state.spec.eps}")
    if header.scenario_hash and state.scenario_hash and header.scenario_hash != state.scenario_hash:
        problems.append("scenario hash differs")
    if problems:
        raise DumpError(f"dump {path} does not match the scenario: " + "; ".join(problems))


def restore_state(path: str | Path, state: StepperState) -> StepperState:
    """Continue ``state`` (built from the same scenario) from the dump at ``path``.

    The signal is re-solved from the dumped density, or kept from ``state``
    when the signal is frozen.
    """
    header, density = read_dump(path)
    _check_compatible(header, state, path)
    signal = state.signal if state.frozen_signal else solve_signal(density.density(state.grid), state.grid)
    log.info(f"restarting from {path} at t={header.t:.6g} (step {header.steps})")
    return replace(
        state,
        density=density,
        signal=signal,
        dt=header.dt,
        steps=header.steps,
        t0=header.t0,
        outflow=header.outflow,
    )
