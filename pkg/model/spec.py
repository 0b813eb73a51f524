from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from model.grid import PhaseGrid
from utils.errors import AssumptionViolation

__all__ = [
    "ModelSpec",
    "adapted_state",
    "eval_F",
    "eval_dF_dm",
    "eval_T",
    "turning_frequency",
    "turning_rates",
    "velocity_kernel",
    "check_assumptions",
    "signal_samples",
]

log = logging.getLogger(__name__)

# relative gap keeping f(S) strictly inside (m_minus, m_plus)
F_CLIP = 1e-9


def velocity_kernel(grid: PhaseGrid, T_kernel: str = "uniform", bias: float = 0.0) -> np.ndarray:
    """K(v, v') on the discrete velocity set, normalized so sum_v w_v K(v, v') = 1.

    The angular kernel is (1 + bias cos(theta_vv')) before normalization.
    """
    K = np.ones((grid.v_count, grid.v_count))
    if T_kernel == "angular":
        speed = np.linalg.norm(grid.velocities, axis=1)
        speed = np.where(speed > 0, speed, 1.0)
        unit = grid.velocities / speed[:, None]
        K = 1.0 + bias * (unit @ unit.T)
    return K / (grid.weights @ K)[None, :]


class ModelSpec(BaseModel):
    """Parametric adaptation rate F(m, S), turning kernel T(v, v', m) and eps.

    Bound certificates ``C_T`` and ``Pi_cap`` are derived from the parameters
    and the grid by :meth:`from_parameters` and re-verified by
    :func:`check_assumptions`.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    F_family: Literal["linear", "cubic"] = "linear"
    kappa: float = Field(1.0, gt=0)
    S_ref: float = Field(1.0, gt=0)
    m_minus: float = Field(1.0, gt=0)
    m_plus: float = Field(2.0, gt=0)

    T_family: Literal["constant", "separable"] = "constant"
    lambda0: float = Field(1.0, gt=0)
    beta: float = 0.0
    m_c: float = 1.5
    delta: float = Field(0.25, gt=0)
    T_kernel: Literal["uniform", "angular"] = "uniform"
    kernel_bias: float = Field(0.0, gt=-1.0, lt=1.0)

    eps: float = Field(1.0, gt=0)

    # derived from the grid
    V_d: float = Field(..., gt=0)
    m_max: float = Field(..., gt=0)
    kernel: np.ndarray
    C_T: float = Field(..., gt=0)
    Pi_cap: float = Field(..., ge=0)

    @model_validator(mode="after")
    def check_adaptation_interval(self):
        assert self.m_minus < self.m_plus, "m_minus must be smaller than m_plus"
        return self

    @classmethod
    def from_parameters(cls, grid: PhaseGrid, **params) -> "ModelSpec":
        T_family = params.get("T_family", "constant")
        T_kernel = params.get("T_kernel", "uniform") if T_family == "separable" else "uniform"
        params["T_kernel"] = T_kernel
        kernel = velocity_kernel(grid, T_kernel, params.get("kernel_bias", 0.0))
        lambda0 = params.get("lambda0", 1.0)
        beta = params.get("beta", 0.0) if T_family == "separable" else 0.0
        C_T = lambda0 * (1.0 + abs(beta)) * float(kernel.max())

        kappa = params.get("kappa", 1.0)
        if params.get("F_family", "linear") == "linear":
            Pi_cap = kappa
        else:
            reach = max(params.get("m_plus", 2.0), grid.m_max - params.get("m_minus", 1.0))
            Pi_cap = 3.0 * kappa * reach**2

        return cls(
            **params,
            V_d=grid.V_d,
            m_max=grid.m_max,
            kernel=kernel,
            C_T=C_T,
            Pi_cap=Pi_cap,
        )

    def with_eps(self, eps: float) -> "ModelSpec":
        return self.model_copy(update=dict(eps=float(eps)))

    def parameters(self) -> dict:
        """The user-facing parameters (no derived fields)."""
        return self.model_dump(exclude={"V_d", "m_max", "kernel", "C_T", "Pi_cap"})


def adapted_state(spec: ModelSpec, S):
    """f(S) = m_- + (m_+ - m_-) S / (S_ref + S), kept strictly inside (m_-, m_+)."""
    S = np.asarray(S, dtype=float)
    span = spec.m_plus - spec.m_minus
    f = spec.m_minus + span * S / (spec.S_ref + S)
    return np.clip(f, spec.m_minus + F_CLIP * span, spec.m_plus - F_CLIP * span)


def eval_F(spec: ModelSpec, m, S):
    gap = adapted_state(spec, S) - np.asarray(m, dtype=float)
    if spec.F_family == "linear":
        return spec.kappa * gap
    return spec.kappa * gap**3


def eval_dF_dm(spec: ModelSpec, m, S):
    gap = adapted_state(spec, S) - np.asarray(m, dtype=float)
    if spec.F_family == "linear":
        return np.full_like(gap, -spec.kappa)
    return -3.0 * spec.kappa * gap**2


def turning_frequency(spec: ModelSpec, m):
    m = np.asarray(m, dtype=float)
    if spec.T_family == "constant":
        return np.full_like(m, spec.lambda0)
    return spec.lambda0 * (1.0 + spec.beta * np.tanh((spec.m_c - m) / spec.delta))


def eval_T(spec: ModelSpec, v_idx, vp_idx, m):
    """Rate density of jumps from velocity vp_idx to v_idx at internal state m."""
    return turning_frequency(spec, m) * spec.kernel[v_idx, vp_idx]


def turning_rates(spec: ModelSpec, m) -> np.ndarray:
    """T(v, v', m) for every pair, shaped m.shape + (v_count, v_count)."""
    lam = turning_frequency(spec, m)
    return lam[..., None, None] * spec.kernel


def signal_samples(spec: ModelSpec) -> np.ndarray:
    """S values at which the sign structure of F is swept."""
    return np.concatenate(([0.0], spec.S_ref * np.logspace(-4, 4, 33)))


def check_assumptions(spec: ModelSpec, grid: PhaseGrid):
    """Exhaustive sweeps of the turning-kernel bounds, the F sign structure and the monotone root m0(S).

    Raises :class:`AssumptionViolation` naming the inequality and the grid point.
    """
    if grid.m_max <= spec.m_plus:
        raise AssumptionViolation(
            f"m_max > m_plus violated: m_max={grid.m_max} <= m_plus={spec.m_plus}"
        )

    rates = turning_rates(spec, grid.m_centers)
    bad = np.argwhere(rates <= 0)
    if len(bad):
        l, v, vp = bad[0]
        raise AssumptionViolation(
            f"turning kernel positivity 0 < T(v,v',m) violated: T={rates[l, v, vp]:.6g} "
            f"at m={grid.m_centers[l]:.6g}, v={grid.velocities[v]}, v'={grid.velocities[vp]}"
        )
    bad = np.argwhere(rates > spec.C_T * (1 + 1e-12))
    if len(bad):
        l, v, vp = bad[0]
        raise AssumptionViolation(
            f"turning kernel bound T <= C_T violated: T={rates[l, v, vp]:.6g} > C_T={spec.C_T:.6g} "
            f"at m={grid.m_centers[l]:.6g}"
        )

    m = np.linspace(0.0, grid.m_max, 4 * grid.m_nodes + 1)
    samples = signal_samples(spec)
    roots = []
    for S in samples:
        F = eval_F(spec, m, S)
        if not eval_F(spec, spec.m_minus, S) > 0 or not eval_F(spec, spec.m_plus, S) < 0:
            raise AssumptionViolation(
                f"sign structure F(m_-,S) > 0 > F(m_+,S) violated at S={S:.6g}"
            )
        first_nonpositive = int(np.argmax(F <= 0))
        if first_nonpositive == 0 or np.any(F[first_nonpositive + 1:] >= 0):
            raise AssumptionViolation(
                f"sign structure of F (single sign change from + to -) violated at S={S:.6g}, "
                f"m={m[first_nonpositive]:.6g}"
            )
        i = first_nonpositive
        roots.append(m[i - 1] + F[i - 1] / (F[i - 1] - F[i]) * (m[i] - m[i - 1]))
        slope = np.abs(np.diff(F) / np.diff(m))
        if np.any(slope > spec.Pi_cap * (1 + 1e-9)):
            i = int(np.argmax(slope))
            raise AssumptionViolation(
                f"|dF/dm| <= Pi_cap violated: {slope[i]:.6g} > {spec.Pi_cap:.6g} at S={S:.6g}, m={m[i]:.6g}"
            )

    # root of F(., S) swept over S in [0, S_cap]
    drops = np.flatnonzero(np.diff(roots) < -1e-12 * spec.m_plus)
    if len(drops):
        i = int(drops[0])
        raise AssumptionViolation(
            f"m0(S) non-decreasing violated: m0={roots[i + 1]:.6g} at S={samples[i + 1]:.6g} "
            f"< m0={roots[i]:.6g} at S={samples[i]:.6g}"
        )
    log.debug("assumption sweeps passed")
