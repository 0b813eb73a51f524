from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from diagnostics.reduce import pairwise_sum
from kinetic.density import DensityField
from model.grid import PhaseGrid
from model.spec import ModelSpec
from utils.errors import AssumptionViolation, BadConfig

__all__ = ["InitialData", "make_initial_data", "x_profile", "m_profile"]

log = logging.getLogger(__name__)

# fraction of the mass allowed in the last m cell before the data counts as
# concentrating at the truncation
M_EDGE_FRACTION = 1e-8


@dataclass(frozen=True)
class InitialData:
    """p0 and the scalar metadata the bound monitors are anchored on."""

    p0: DensityField
    mass: float
    x_moment: float
    m_moment: float
    p_sup: float
    pbar_sup: float

    @classmethod
    def from_density(cls, p0: DensityField, grid: PhaseGrid) -> "InitialData":
        values = p0.values
        if not np.all(np.isfinite(values)):
            raise AssumptionViolation("initial data must be finite")
        if np.any(values < 0):
            idx = tuple(int(i) for i in np.argwhere(values < 0)[0])
            raise AssumptionViolation(f"initial data p0 >= 0 violated at cell {idx}")

        weighted = values * grid.cell_measure
        mass = pairwise_sum(weighted)
        edge = pairwise_sum(weighted[..., -1])
        if mass > 0 and edge > M_EDGE_FRACTION * mass:
            raise AssumptionViolation(
                f"initial data concentrates at the m truncation: {edge / mass:.3g} of the mass "
                f"sits in the last m cell (m_max={grid.m_max})"
            )
        japanese = grid.japanese_x.reshape(grid.x_shape + (1, 1))
        return cls(
            p0=p0,
            mass=mass,
            x_moment=pairwise_sum(weighted * japanese),
            m_moment=pairwise_sum(weighted * grid.m_centers),
            p_sup=float(np.max(values)),
            pbar_sup=float(np.max(p0.pbar(grid))),
        )

    def metadata(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "p0"}


def _as_center(center, dim: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.size == 1:
        c = np.repeat(c, dim)
    if c.size != dim:
        raise BadConfig(f"initial.center must have {dim} components, got {c.size}")
    return c


def x_profile(
    grid: PhaseGrid,
    profile: str,
    center: float | Sequence[float] = 0.0,
    width: float = 1.0,
    seed: int = None,
) -> np.ndarray:
    """Unnormalized non-negative spatial profile over the x grid."""
    c = _as_center(center, grid.dim)
    if profile == "uniform":
        return np.ones(grid.x_shape)
    if profile == "gaussian":
        r2 = sum((x - ci) ** 2 for x, ci in zip(grid.x_mesh, c))
        return np.exp(-r2 / (2 * width**2))
    if profile == "two_bumps":
        r2a = sum((x - ci) ** 2 for x, ci in zip(grid.x_mesh, c))
        r2b = sum((x + ci) ** 2 for x, ci in zip(grid.x_mesh, c))
        return np.exp(-r2a / (2 * width**2)) + np.exp(-r2b / (2 * width**2))
    if profile == "random":
        rng = np.random.default_rng(seed)
        rho = np.ones(grid.x_shape)
        for x in grid.x_mesh:
            amplitudes = rng.uniform(0.0, 0.2, size=4)
            phases = rng.uniform(0.0, 2 * np.pi, size=4)
            modes = np.arange(1, 5)
            wave = np.cos(2 * np.pi * modes * x[..., None] / grid.x_extent + phases)
            rho = rho * (1.0 + np.sum(amplitudes * wave, axis=-1))
        return rho
    raise BadConfig(f"unknown initial profile '{profile}'")


def m_profile(
    grid: PhaseGrid,
    spec: ModelSpec,
    profile: str = "slab",
    center: float = None,
    width: float = None,
) -> np.ndarray:
    """Unnormalized internal-state profile over the m grid."""
    m = grid.m_centers
    if profile == "slab":
        if center is None:
            lo, hi = spec.m_minus, spec.m_plus
        else:
            half = 0.5 * (spec.m_plus - spec.m_minus if width is None else width)
            lo, hi = center - half, center + half
        return ((m >= lo) & (m <= hi)).astype(float)
    if profile == "gaussian":
        center = 0.5 * (spec.m_minus + spec.m_plus) if center is None else center
        width = 0.125 * (spec.m_plus - spec.m_minus) if width is None else width
        return np.exp(-((m - center) ** 2) / (2 * width**2))
    raise BadConfig(f"unknown m profile '{profile}'")


def make_initial_data(
    grid: PhaseGrid,
    spec: ModelSpec,
    profile: str = "gaussian",
    center: float | Sequence[float] = 0.0,
    width: float = 1.0,
    mass: float = 1.0,
    m_profile_name: str = "slab",
    m_center: float = None,
    m_width: float = None,
    seed: int = None,
) -> InitialData:
    """p0(x, v, m) = rho(x) mu(m), uniform in v, scaled to the requested discrete mass."""
    rho = x_profile(grid, profile, center, width, seed)
    mu = m_profile(grid, spec, m_profile_name, m_center, m_width)
    values = rho[..., None, None] * mu * np.ones((grid.v_count, 1))
    raw = pairwise_sum(values * grid.cell_measure)
    if not raw > 0:
        raise AssumptionViolation("initial profile has no mass on the grid")
    values = values * (mass / raw)
    log.info(f"initial data: {profile} in x, {m_profile_name} in m, mass {mass}")
    return InitialData.from_density(DensityField(values), grid)
