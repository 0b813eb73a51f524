from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict

from model.builder import ScenarioConfig, config_from_dict, load_config

__all__ = ["OUT_ENV", "RunConfig"]

log = logging.getLogger(__name__)

# environment variable overriding run.out_dir
OUT_ENV = "CHEMOKIN_OUT"


class RunConfig(BaseModel):
    """A parsed scenario plus where it came from and where its artifacts go."""

    model_config = ConfigDict(frozen=True)

    scenario: ScenarioConfig
    source: Optional[str] = None

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls(scenario=load_config(path), source=str(path))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return cls(scenario=config_from_dict(raw))

    @property
    def out_dir(self) -> Path:
        override = os.environ.get(OUT_ENV)
        if override:
            log.debug(f"{OUT_ENV} overrides out_dir={self.scenario.run.out_dir}")
            return Path(override)
        return Path(self.scenario.run.out_dir)

    @property
    def threads(self) -> int:
        return self.scenario.run.threads

    @property
    def seed(self) -> int:
        return self.scenario.run.seed
