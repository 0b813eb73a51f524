from __future__ import annotations

from functools import cached_property
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

__all__ = ["PhaseGrid", "symmetric_velocities", "circle_velocities"]


def symmetric_velocities(v_count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoint nodes on [-1, 1], symmetric about 0, each with weight 2 / v_count."""
    h = 2.0 / v_count
    nodes = -1.0 + h * (np.arange(v_count) + 0.5)
    # force exact antisymmetry of the node set
    nodes = 0.5 * (nodes - nodes[::-1])
    return nodes[:, None], np.full(v_count, h)


def circle_velocities(v_count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Equispaced unit directions on the circle, each with weight 2 pi / v_count."""
    theta = 2.0 * np.pi * np.arange(v_count) / v_count
    nodes = np.stack((np.cos(theta), np.sin(theta)), axis=-1)
    return nodes, np.full(v_count, 2.0 * np.pi / v_count)


class PhaseGrid(BaseModel):
    """Discretization of (x, v, m).

    x is a uniform grid of ``x_nodes`` cells per axis on [-L/2, L/2]^d, v is a
    discrete velocity set with positive quadrature weights and m is a uniform
    grid of ``m_nodes`` cells on [0, m_max]. Fields over the grid are stored
    with shape ``x_shape + (v_count, m_nodes)``, x outermost and m innermost.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: Literal[1, 2] = 1
    x_nodes: int = Field(..., gt=0)
    x_extent: float = Field(..., gt=0)
    x_topology: Literal["periodic", "free"] = "periodic"
    velocities: np.ndarray
    weights: np.ndarray
    m_nodes: int = Field(..., gt=0)
    m_max: float = Field(..., gt=0)

    @field_validator("velocities", mode="before")
    def as_velocity_array(cls, v):
        v = np.array(v, dtype=float)
        return v[:, None] if v.ndim == 1 else v

    @field_validator("weights", mode="before")
    def as_weight_array(cls, v):
        return np.array(v, dtype=float)

    @model_validator(mode="after")
    def check_velocity_set(self):
        assert self.velocities.shape[1] == self.dim, "velocity vectors must have length dim"
        assert self.weights.shape == (self.velocities.shape[0],), "one weight per velocity"
        assert np.all(self.weights > 0), "quadrature weights must be positive"
        return self

    @classmethod
    def build(
        cls,
        dim: int,
        x_nodes: int,
        x_extent: float,
        x_topology: str,
        v_count: int,
        m_nodes: int,
        m_max: float,
    ) -> "PhaseGrid":
        nodes, weights = symmetric_velocities(v_count) if dim == 1 else circle_velocities(v_count)
        return cls(
            dim=dim,
            x_nodes=x_nodes,
            x_extent=x_extent,
            x_topology=x_topology,
            velocities=nodes,
            weights=weights,
            m_nodes=m_nodes,
            m_max=m_max,
        )

    @property
    def dx(self) -> float:
        return self.x_extent / self.x_nodes

    @property
    def dm(self) -> float:
        return self.m_max / self.m_nodes

    @property
    def v_count(self) -> int:
        return self.velocities.shape[0]

    @property
    def V_d(self) -> float:
        return float(np.sum(self.weights))

    @property
    def x_shape(self) -> Tuple[int, ...]:
        return (self.x_nodes,) * self.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.x_shape + (self.v_count, self.m_nodes)

    @property
    def x_cell(self) -> float:
        """Measure of one x cell, dx^d."""
        return self.dx**self.dim

    @cached_property
    def x_centers(self) -> np.ndarray:
        return -0.5 * self.x_extent + self.dx * (np.arange(self.x_nodes) + 0.5)

    @cached_property
    def x_mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x_centers] * self.dim), indexing="ij"))

    @cached_property
    def x_radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.x_mesh))

    @cached_property
    def japanese_x(self) -> np.ndarray:
        """<x> = sqrt(1 + |x|^2) over the x grid."""
        return np.sqrt(1.0 + self.x_radius**2)

    @cached_property
    def m_centers(self) -> np.ndarray:
        return self.dm * (np.arange(self.m_nodes) + 0.5)

    @cached_property
    def m_faces(self) -> np.ndarray:
        return self.dm * np.arange(self.m_nodes + 1)

    @cached_property
    def cell_measure(self) -> np.ndarray:
        """dx^d * w_v * dm, shaped (v_count, 1) to broadcast against fields."""
        return (self.x_cell * self.dm) * self.weights[:, None]

    @property
    def speed_bound(self) -> float:
        """max_k sum_i |v_k,i|, the speed entering the donor-cell CFL."""
        return float(np.max(np.sum(np.abs(self.velocities), axis=1)))

    def describe(self) -> dict:
        return dict(
            dim=self.dim,
            x_nodes=self.x_nodes,
            x_extent=self.x_extent,
            x_topology=self.x_topology,
            v_count=self.v_count,
            V_d=self.V_d,
            m_nodes=self.m_nodes,
            m_max=self.m_max,
        )
