"""Gronwall-type envelopes for the monitored norms.

Every envelope is evaluated from the initial metadata, the bound certificates
of the ModelSpec and the time only. A margin is ``envelope - observed``; a
margin below ``-TOL_ENV * envelope`` marks the row as failed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from diagnostics.reduce import NormRow

__all__ = [
    "TOL_ENV",
    "growth_factor",
    "pbar_envelope",
    "n_envelope",
    "S_inf_envelope",
    "p_envelope",
    "Margins",
    "envelope_check",
]

TOL_ENV = 1e-8


def growth_factor(V_d: float, C_T: float, t: float) -> float:
    """1 + 2 V_d C_T t exp(2 V_d C_T t)."""
    a = 2.0 * V_d * C_T * t
    with np.errstate(over="ignore"):
        return float(1.0 + a * np.exp(a))


def pbar_envelope(initial, spec, t: float) -> float:
    return initial.pbar_sup * growth_factor(spec.V_d, spec.C_T, t)


def n_envelope(initial, spec, t: float) -> float:
    return spec.V_d * pbar_envelope(initial, spec, t)


def S_inf_envelope(initial, spec, t: float) -> float:
    return spec.V_d * pbar_envelope(initial, spec, t)


def p_envelope(initial, spec, t: float) -> float:
    # the sup-norm constant is not explicit; Pi_cap + 2 V_d C_T is the Gronwall
    # coefficient of the representation along characteristics, scaled by 1/eps
    rate = (spec.Pi_cap + 2.0 * spec.V_d * spec.C_T) * t / spec.eps
    with np.errstate(over="ignore"):
        return float(initial.mass + initial.p_sup * (1.0 + rate * np.exp(rate)))


@dataclass(frozen=True)
class Margins:
    pbar: float
    n: float
    S_l1: float
    S_inf: float
    p: float
    tail: float
    chain: float
    failed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _breached(margin: float, envelope: float) -> bool:
    return margin < -TOL_ENV * max(abs(envelope), np.finfo(float).tiny)


def envelope_check(row: NormRow, initial, spec, t: float = None) -> Margins:
    """Margins of ``row`` against every envelope at time ``t`` (default row.t)."""
    t = row.t if t is None else t
    envelopes = dict(
        pbar=(pbar_envelope(initial, spec, t), row.pbar_inf),
        n=(n_envelope(initial, spec, t), row.n_inf),
        S_l1=(initial.mass, row.S_l1),
        S_inf=(S_inf_envelope(initial, spec, t), row.S_inf),
        p=(p_envelope(initial, spec, t), row.p_inf),
        tail=(initial.m_moment, row.tail_moment),
        chain=(spec.V_d * row.pbar_inf, row.n_inf),
    )
    margins = {k: env - obs for k, (env, obs) in envelopes.items()}
    failed = any(_breached(margins[k], env) for k, (env, _) in envelopes.items())
    return Margins(**margins, failed=failed)
