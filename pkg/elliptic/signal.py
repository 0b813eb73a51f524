from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft, signal

from elliptic.kernel import GreenKernel, green_kernel
from model.grid import PhaseGrid
from utils.errors import NonFiniteInput

__all__ = ["SignalField", "solve_signal", "helmholtz_residual", "TOL_POS"]

log = logging.getLogger(__name__)

# lower bound on S for n >= 0, per solver
TOL_POS = {"convolution": 1e-12, "spectral": 1e-8}


@dataclass(frozen=True)
class SignalField:
    """S over the x grid with the md5 of the density it was solved from."""

    values: np.ndarray
    source_hash: str
    solver: str

    @property
    def tol_pos(self) -> float:
        return TOL_POS[self.solver]


def _helmholtz_symbol(grid: PhaseGrid) -> np.ndarray:
    # eigenvalues of -Delta_h + 1 for the 3-point (5-point in 2-d) stencil on the rfft grid
    n = grid.x_nodes
    axes = [np.fft.fftfreq(n) * n] * (grid.dim - 1) + [np.fft.rfftfreq(n) * n]
    modes = np.meshgrid(*axes, indexing="ij")
    symbol = np.ones(modes[0].shape)
    for k in modes:
        symbol += (4.0 / grid.dx**2) * np.sin(np.pi * k / n) ** 2
    return symbol


def solve_signal(n, grid: PhaseGrid, kernel: GreenKernel = None) -> SignalField:
    """Solve -Delta S + S = n on the x grid.

    Periodic grids invert the discrete Helmholtz symbol with real FFTs; free
    space convolves n with the cell-averaged Bessel kernel, so S is a
    positive-weight quadrature of G * n.

    Parameters
    ----------
    n : array
        Cell density over ``grid.x_shape``.
    grid : PhaseGrid
    kernel : GreenKernel, optional
        Precomputed free-space kernel; defaults to :func:`green_kernel` of ``grid``.
    """
    n = np.asarray(n, dtype=float)
    if n.shape != grid.x_shape:
        raise ValueError(f"density shape {n.shape} does not match the x grid {grid.x_shape}")
    if not np.all(np.isfinite(n)):
        raise NonFiniteInput(f"solve_signal received {np.count_nonzero(~np.isfinite(n))} non-finite cells")
    source = hashlib.md5(np.ascontiguousarray(n).tobytes()).hexdigest()

    if grid.x_topology == "periodic":
        axes = tuple(range(grid.dim))
        S = fft.irfftn(fft.rfftn(n, axes=axes) / _helmholtz_symbol(grid), s=n.shape, axes=axes)
        return SignalField(values=S, source_hash=source, solver="spectral")

    kernel = green_kernel(grid) if kernel is None else kernel
    method = "direct" if grid.dim == 1 else "fft"
    S = signal.convolve(n, kernel.values, mode="same", method=method) * grid.x_cell
    return SignalField(values=S, source_hash=source, solver="convolution")


def helmholtz_residual(S, n, grid: PhaseGrid) -> np.ndarray:
    """-Delta_h S + S - n with the periodic 3-point (5-point) stencil."""
    S = np.asarray(getattr(S, "values", S), dtype=float)
    lap = np.zeros_like(S)
    for axis in range(grid.dim):
        lap += (np.roll(S, 1, axis=axis) - 2.0 * S + np.roll(S, -1, axis=axis)) / grid.dx**2
    return -lap + S - np.asarray(n, dtype=float)
