#!/usr/bin/env python

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from model.grid import PhaseGrid
from model.initial import InitialData, make_initial_data
from model.spec import ModelSpec, check_assumptions
from utils.errors import BadConfig, DumpError
from utils.output import print_table

__all__ = [
    "GridSection",
    "ModelSection",
    "InitialSection",
    "RunSection",
    "ScenarioConfig",
    "Scenario",
    "load_config_from_yaml",
    "load_config_from_ini",
    "load_config",
    "config_from_dict",
    "scenario_hash",
    "build_scenario",
    "build_scenario_from_yaml",
]

log = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "config"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    dim: Literal[1, 2] = 1
    x_nodes: int = Field(128, gt=1)
    x_extent: float = Field(10.0, gt=0)
    x_topology: Literal["periodic", "free"] = "periodic"
    v_count: int = Field(4, gt=0)
    m_nodes: int = Field(64, gt=1)
    m_max_auto: bool = True
    m_max: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def check_m_max(self):
        assert self.m_max_auto or self.m_max is not None, "m_max is required when m_max_auto is false"
        return self


class ModelSection(_Section):
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
    eps: float = Field(0.1, gt=0)
    T_kernel: Literal["uniform", "angular"] = "uniform"
    kernel_bias: float = Field(0.0, gt=-1.0, lt=1.0)

    @model_validator(mode="after")
    def check_interval(self):
        assert self.m_minus < self.m_plus, "m_minus must be smaller than m_plus"
        return self


class InitialSection(_Section):
    profile: Literal["gaussian", "two_bumps", "uniform", "random"] = "gaussian"
    center: Union[float, List[float]] = 0.0
    width: float = Field(1.0, gt=0)
    mass: float = Field(1.0, gt=0)
    m_profile: Literal["slab", "gaussian"] = "slab"
    m_center: Optional[float] = None
    m_width: Optional[float] = Field(None, gt=0)


class RunSection(_Section):
    t_end: float = Field(1.0, ge=0)
    output_every: float = Field(0.1, gt=0)
    threads: int = Field(1, gt=0)
    out_dir: str = "out"
    seed: int = 0
    cfl: float = Field(0.9, gt=0, le=1)
    dump_every: int = Field(1, gt=0)


class ScenarioConfig(_Section):
    grid: GridSection = GridSection()
    model: ModelSection = ModelSection()
    initial: InitialSection = InitialSection()
    run: RunSection = RunSection()

    @property
    def m_max(self) -> float:
        if self.grid.m_max_auto:
            return self.model.m_plus + 0.5 * (self.model.m_plus - self.model.m_minus)
        return self.grid.m_max


@dataclass(frozen=True)
class Scenario:
    grid: PhaseGrid
    spec: ModelSpec
    initial: InitialData
    config: ScenarioConfig
    hash: str


def _format_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        key = ".".join(str(x) for x in err["loc"])
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key '{key}'")
        else:
            parts.append(f"{key}: {err['msg']}")
    return "; ".join(parts)


def config_from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise BadConfig("a scenario must be a mapping with grid/model/initial/run sections")
    try:
        return ScenarioConfig(**raw)
    except ValidationError as e:
        raise BadConfig(_format_error(e)) from None
    except TypeError as e:
        raise BadConfig(str(e)) from None


def load_config_from_yaml(config_path: str | Path) -> ScenarioConfig:
    """Loads a scenario from a yaml file with the sections

        ```yaml
        grid: {dim, x_nodes, x_extent, x_topology, v_count, m_nodes, m_max_auto, m_max}
        model: {F_family, kappa, S_ref, m_minus, m_plus, T_family, lambda0, beta, m_c, delta, eps}
        initial: {profile, center, width, mass}
        run: {t_end, output_every, threads, out_dir}
        ```

    Unknown keys raise :class:`BadConfig` naming the key.
    """
    try:
        with open(config_path) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise DumpError(f"cannot read scenario {config_path}: {e}") from e
    except yaml.YAMLError as e:
        raise BadConfig(f"{config_path} is not valid yaml: {e}") from e
    return config_from_dict(raw or {})


def load_config_from_ini(config_path: str | Path) -> ScenarioConfig:
    """Loads a scenario from sectioned key = value text, e.g.

        ```ini
        [grid]
        x_nodes = 128
        [model]
        eps = 0.05
        ```

    Each value is read as a yaml scalar, so numbers, booleans and lists keep
    their types; keys are case sensitive.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(config_path) as f:
            parser.read_file(f)
    except OSError as e:
        raise DumpError(f"cannot read scenario {config_path}: {e}") from e
    except configparser.Error as e:
        raise BadConfig(f"{config_path} is not a valid sectioned config: {e}") from e
    try:
        raw = {name: {k: yaml.safe_load(v) for k, v in parser[name].items()} for name in parser.sections()}
    except yaml.YAMLError as e:
        raise BadConfig(f"{config_path} has a malformed value: {e}") from e
    return config_from_dict(raw)


def _is_sectioned(config_path: str | Path) -> bool:
    if Path(config_path).suffix.lower() in (".ini", ".cfg"):
        return True
    try:
        with open(config_path) as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith(("#", ";")):
                    return line.startswith("[")
    except OSError as e:
        raise DumpError(f"cannot read scenario {config_path}: {e}") from e
    return False


def load_config(config_path: str | Path) -> ScenarioConfig:
    """Sectioned key = value text for .ini and .cfg files or files opening with a
    ``[section]`` line, yaml otherwise."""
    if _is_sectioned(config_path):
        return load_config_from_ini(config_path)
    return load_config_from_yaml(config_path)


def scenario_hash(config: ScenarioConfig) -> str:
    """md5 of the canonical yaml of everything that shapes the initial state."""
    payload = config.model_dump(include={"grid", "model", "initial"})
    payload["seed"] = config.run.seed
    return hashlib.md5(yaml.safe_dump(payload, sort_keys=True).encode()).hexdigest()


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Grid, ModelSpec and InitialData of a scenario, with every assumption swept."""
    g, mdl, ini = config.grid, config.model, config.initial
    grid = PhaseGrid.build(
        dim=g.dim,
        x_nodes=g.x_nodes,
        x_extent=g.x_extent,
        x_topology=g.x_topology,
        v_count=g.v_count,
        m_nodes=g.m_nodes,
        m_max=config.m_max,
    )
    spec = ModelSpec.from_parameters(grid, **mdl.model_dump())
    check_assumptions(spec, grid)
    initial = make_initial_data(
        grid,
        spec,
        profile=ini.profile,
        center=ini.center,
        width=ini.width,
        mass=ini.mass,
        m_profile_name=ini.m_profile,
        m_center=ini.m_center,
        m_width=ini.m_width,
        seed=config.run.seed,
    )
    digest = scenario_hash(config)
    log.info(f"built scenario {digest[:8]}: {grid.shape} cells, C_T={spec.C_T:.4g}, Pi_cap={spec.Pi_cap:.4g}")
    return Scenario(grid=grid, spec=spec, initial=initial, config=config, hash=digest)


def build_scenario_from_yaml(config_path: str | Path) -> Scenario:
    return build_scenario(load_config(config_path))


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Validate a scenario and print its bound certificates.")
    parser.add_argument("config", type=str, nargs="?", default=str(CONFIG_DIR / "default.yaml"))
    args = parser.parse_args()

    scenario = build_scenario_from_yaml(args.config)
    print_table(
        title="scenario",
        hash=scenario.hash,
        cells=str(scenario.grid.shape),
        C_T=scenario.spec.C_T,
        Pi_cap=scenario.spec.Pi_cap,
        mass=scenario.initial.mass,
        m_moment=scenario.initial.m_moment,
    )
