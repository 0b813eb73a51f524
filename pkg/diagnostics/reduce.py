"""Norms and moments of a kinetic state.

All L1-type quantities go through :func:`pairwise_sum`, whose summation tree
depends only on the array size, so repeated calls on the same field are
bitwise identical.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["pairwise_sum", "NormRow", "reduce_norms"]


def pairwise_sum(a) -> float:
    # numpy reduces a contiguous 1-d array with blocked pairwise summation
    return float(np.add.reduce(np.ascontiguousarray(a, dtype=float).ravel()))


@dataclass(frozen=True)
class NormRow:
    t: float
    mass: float
    p_inf: float
    pbar_inf: float
    n_inf: float
    S_l1: float
    S_inf: float
    x_moment: float
    m_moment: float
    tail_moment: float

    def as_dict(self) -> dict:
        return asdict(self)


def reduce_norms(p, S, grid, m_plus: float) -> NormRow:
    """One diagnostics row for the density ``p`` and signal ``S``.

    ``p`` is a DensityField, ``S`` a SignalField or an array over the x grid.
    L1 sums use the cell measure dx^d w_v dm, sup norms the max over cells.
    """
    values = p.values
    S = np.asarray(getattr(S, "values", S))
    weighted = values * grid.cell_measure
    pbar = p.pbar(grid)
    n = p.density(grid)

    japanese = grid.japanese_x.reshape(grid.x_shape + (1, 1))
    m = grid.m_centers
    tail = np.where(m > 2 * m_plus, m, 0.0)
    return NormRow(
        t=float(p.t),
        mass=pairwise_sum(weighted),
        p_inf=float(np.max(values)) if values.size else 0.0,
        pbar_inf=float(np.max(pbar)),
        n_inf=float(np.max(n)),
        S_l1=pairwise_sum(np.abs(S)) * grid.x_cell,
        S_inf=float(np.max(np.abs(S))),
        x_moment=pairwise_sum(weighted * japanese),
        m_moment=pairwise_sum(weighted * m),
        tail_moment=pairwise_sum(weighted * tail),
    )
