from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import wasserstein_distance

from diagnostics.reduce import pairwise_sum
from kinetic.density import DensityField
from limit.oda import m_zero_field
from model.grid import PhaseGrid
from model.spec import ModelSpec
from utils.errors import EmptyField

__all__ = ["MASS_FLOOR", "ConcentrationMetrics", "wasserstein_to_dirac", "concentration_metrics"]

log = logging.getLogger(__name__)

# cells with n(x) below MASS_FLOOR * mass / (number of x cells) are skipped
MASS_FLOOR = 1e-12


def wasserstein_to_dirac(m_nodes: np.ndarray, weights: np.ndarray, m0: float) -> float:
    """W1 between the atoms ``weights`` at ``m_nodes`` (normalized) and a Dirac at m0."""
    return float(wasserstein_distance(m_nodes, [m0], u_weights=weights))


@dataclass(frozen=True)
class ConcentrationMetrics:
    """Distance of the m-marginal at each x from the Dirac at m_zero(S(x)).

    Per-x arrays hold nan where n(x) fell below the mass floor; aggregates
    are n-weighted averages over the remaining cells.
    """

    m0: np.ndarray
    mean_deviation: np.ndarray
    std: np.ndarray
    w1: np.ndarray
    included: np.ndarray
    w1_aggregate: float
    mean_deviation_aggregate: float
    std_aggregate: float

    @property
    def excluded(self) -> int:
        return int(np.count_nonzero(~self.included))


def concentration_metrics(p: DensityField, S, spec: ModelSpec, grid: PhaseGrid) -> ConcentrationMetrics:
    marginal = p.m_marginal(grid)
    n = np.sum(marginal, axis=-1) * grid.dm
    mass = pairwise_sum(n) * grid.x_cell
    if not mass > 0:
        raise EmptyField("concentration metrics need a field with positive mass")
    floor = MASS_FLOOR * mass / n.size
    included = n > floor
    if not np.any(included):
        raise EmptyField(f"every x cell is below the mass floor {floor:.3g}")

    m0 = m_zero_field(spec, S)
    m = grid.m_centers
    mean_dev = np.full(grid.x_shape, np.nan)
    std = np.full(grid.x_shape, np.nan)
    w1 = np.full(grid.x_shape, np.nan)
    for idx in zip(*np.nonzero(included)):
        mu = marginal[idx]
        mu = mu / np.sum(mu)
        mean = float(np.sum(mu * m))
        mean_dev[idx] = abs(mean - m0[idx])
        std[idx] = float(np.sqrt(np.sum(mu * (m - mean) ** 2)))
        w1[idx] = wasserstein_to_dirac(m, mu, m0[idx])

    weight = np.where(included, n, 0.0)
    total = pairwise_sum(weight)

    def aggregate(a):
        return pairwise_sum(np.where(included, a, 0.0) * weight) / total

    if np.any(~included):
        log.debug(f"{np.count_nonzero(~included)} x cells below the mass floor")
    return ConcentrationMetrics(
        m0=m0,
        mean_deviation=mean_dev,
        std=std,
        w1=w1,
        included=included,
        w1_aggregate=aggregate(w1),
        mean_deviation_aggregate=aggregate(mean_dev),
        std_aggregate=aggregate(std),
    )
