from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import List

from diagnostics.envelope import Margins, envelope_check
from diagnostics.reduce import NormRow

__all__ = ["COLUMNS", "TOL_MOMENT", "DiagnosticsReport"]

log = logging.getLogger(__name__)

COLUMNS = [
    "t",
    "mass",
    "outflow",
    "p_inf",
    "pbar_inf",
    "n_inf",
    "S_l1",
    "S_inf",
    "x_moment",
    "m_moment",
    "tail_moment",
    "xmoment_rate",
    "env_pbar_margin",
    "env_n_margin",
    "env_S_l1_margin",
    "env_S_inf_margin",
    "env_p_margin",
    "tail_margin",
    "chain_margin",
    "xmoment_margin",
    "failed",
]

# slack on the <x>-moment growth rate, relative to the initial mass
TOL_MOMENT = 1e-8


class DiagnosticsReport:
    """Time-stamped diagnostics rows with their envelope margins.

    Rows must arrive with strictly increasing t. The <x>-moment rate is the
    finite difference between consecutive rows.
    """

    def __init__(self, initial, spec):
        self.initial = initial
        self.spec = spec
        self.rows: List[dict] = []

    def __len__(self):
        return len(self.rows)

    def add(self, row: NormRow, outflow: float = 0.0) -> dict:
        if self.rows and not row.t > self.rows[-1]["t"]:
            raise ValueError(f"diagnostics rows must increase in t: {row.t} after {self.rows[-1]['t']}")

        margins: Margins = envelope_check(row, self.initial, self.spec)
        rate = math.nan
        xmargin = math.nan
        if self.rows:
            prev = self.rows[-1]
            rate = (row.x_moment - prev["x_moment"]) / (row.t - prev["t"])
            xmargin = self.initial.mass * (1.0 + TOL_MOMENT) - rate

        entry = row.as_dict()
        entry.update(
            outflow=outflow,
            xmoment_rate=rate,
            env_pbar_margin=margins.pbar,
            env_n_margin=margins.n,
            env_S_l1_margin=margins.S_l1,
            env_S_inf_margin=margins.S_inf,
            env_p_margin=margins.p,
            tail_margin=margins.tail,
            chain_margin=margins.chain,
            xmoment_margin=xmargin,
            failed=bool(margins.failed or xmargin < 0),
        )
        if entry["failed"]:
            log.warning(f"diagnostics row at t={row.t:.6g} breaches an envelope: {margins}")
        self.rows.append(entry)
        return entry

    @property
    def failed(self) -> bool:
        return any(r["failed"] for r in self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def max_mass_drift(self) -> float:
        """max_t |mass(t) + outflow(t) - mass(0)| / mass(0) over the rows."""
        if not self.rows:
            return 0.0
        m0 = self.initial.mass
        return max(abs(r["mass"] + r["outflow"] - m0) / m0 for r in self.rows)

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(COLUMNS)
            for r in self.rows:
                writer.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in COLUMNS])
        log.info(f"wrote {len(self.rows)} diagnostics rows to {path}")
