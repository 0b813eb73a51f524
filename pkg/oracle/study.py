"""Refinement study of the kinetic solver against the Duhamel oracle on a scenario's model."""
from __future__ import annotations

import logging
from typing import Sequence

from kinetic.stepper import StepperState, initial_state
from model.builder import ScenarioConfig, build_scenario
from model.spec import ModelSpec
from oracle.duhamel import OracleConvergence, contraction_ratio, oracle_convergence

__all__ = ["ORACLE_LEVELS", "ORACLE_HORIZON", "oracle_config", "oracle_horizon", "oracle_study"]

log = logging.getLogger(__name__)

ORACLE_LEVELS = (0, 1, 2)
# oracle time as a fraction of the adaptation time eps / Pi_cap
ORACLE_HORIZON = 0.05
# cells per level 0 in x and m
X_NODES = 16
M_NODES = 128


def oracle_config(config: ScenarioConfig, level: int) -> ScenarioConfig:
    """A d = 1 periodic problem at refinement ``level`` carrying the model of ``config``.

    The density is a gaussian in x and in m, centred in the m range with 7
    widths of margin, so it is resolved from level 0 on.
    """
    m_max = config.m_max
    raw = config.model_dump()
    raw["grid"].update(
        dim=1,
        x_nodes=X_NODES * 2**level,
        x_extent=8.0,
        x_topology="periodic",
        v_count=2,
        m_nodes=M_NODES * 2**level,
        m_max_auto=False,
        m_max=m_max,
    )
    raw["initial"].update(
        profile="gaussian", center=0.0, width=1.0, mass=1.0, m_profile="gaussian", m_center=0.5 * m_max, m_width=m_max / 14
    )
    return ScenarioConfig(**raw)


def oracle_horizon(spec: ModelSpec) -> float:
    return min(ORACLE_HORIZON * spec.eps / spec.Pi_cap, 0.5 / contraction_ratio(spec, 1.0))


def oracle_study(config: ScenarioConfig, levels: Sequence[int] = ORACLE_LEVELS) -> OracleConvergence:
    """Gaps of the kinetic solver to one fine oracle solution under joint refinement."""

    def build(level: int) -> StepperState:
        scenario = build_scenario(oracle_config(config, level))
        return initial_state(scenario.grid, scenario.spec, scenario.initial)

    spec = build_scenario(oracle_config(config, levels[0])).spec
    t = oracle_horizon(spec)
    log.info(f"oracle study to t={t:.4g} on levels {list(levels)}")
    conv = oracle_convergence(build, levels, t)
    log.info(f"oracle gaps {[f'{g:.3g}' for g in conv.gaps]}, orders {[f'{o:.3g}' for o in conv.orders]}")
    return conv
