from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from diagnostics.reduce import pairwise_sum
from model.grid import PhaseGrid

__all__ = ["DensityField"]


@dataclass(frozen=True)
class DensityField:
    """p over (x, v, m) at time ``t``, shaped ``grid.shape``."""

    values: np.ndarray
    t: float = 0.0

    def with_values(self, values: np.ndarray, t: float = None) -> "DensityField":
        return replace(self, values=values, t=self.t if t is None else t)

    def pbar(self, grid: PhaseGrid) -> np.ndarray:
        """Integral over m, shaped x_shape + (v_count,)."""
        return np.sum(self.values, axis=-1) * grid.dm

    def density(self, grid: PhaseGrid) -> np.ndarray:
        """n(x) = sum_v w_v pbar(x, v)."""
        return np.sum(self.pbar(grid) * grid.weights, axis=-1)

    def m_marginal(self, grid: PhaseGrid) -> np.ndarray:
        """sum_v w_v p(x, v, m), shaped x_shape + (m_nodes,)."""
        return np.sum(self.values * grid.weights[:, None], axis=-2)

    def mass(self, grid: PhaseGrid) -> float:
        return pairwise_sum(self.values * grid.cell_measure)
