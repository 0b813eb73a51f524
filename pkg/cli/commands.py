from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Sequence

import numpy as np

from cli.config import RunConfig
from diagnostics.reduce import pairwise_sum
from elliptic.kernel import kernel_check
from elliptic.signal import helmholtz_residual, solve_signal
from kinetic.dump import read_dump, restore_state, write_dump
from kinetic.stepper import StepperState, initial_state, run
from limit.study import eps_study
from model.builder import build_scenario
from oracle.study import ORACLE_LEVELS, oracle_study
from utils.errors import DumpError, VerificationFailed
from utils.output import H5Logger, print_table

__all__ = ["EXIT_OK", "EXIT_FLAGGED", "cmd_run", "cmd_study_eps", "cmd_verify", "cmd_compare"]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGGED = 4

# verify thresholds
ORACLE_ORDER = 0.9
ORACLE_FINEST_GAP = 5e-3
MASS_DRIFT_PER_TIME = 1e-12
RESIDUAL = 1e-10


def _out_dir(config: RunConfig) -> Path:
    out = config.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DumpError(f"cannot create output directory {out}: {e}") from e
    return out


def _m_mean(state: StepperState) -> np.ndarray:
    marginal = state.density.m_marginal(state.grid)
    total = np.sum(marginal, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, np.sum(marginal * state.grid.m_centers, axis=-1) / total, np.nan)


def cmd_run(config: RunConfig, restart: str | Path = None, progress: bool = True) -> int:
    """Run a scenario; writes dumps, diagnostics.csv and profiles.h5 under the out dir."""
    scenario = build_scenario(config.scenario)
    run_cfg = config.scenario.run
    out = _out_dir(config)

    state = initial_state(scenario.grid, scenario.spec, scenario.initial, scenario_hash=scenario.hash)
    if restart is not None:
        state = restore_state(restart, state)

    shape = scenario.grid.x_shape
    writer = H5Logger(
        str(out / "profiles.h5"),
        {"t": (), "n": shape, "S": shape, "m_mean": shape},
        attrs=dict(scenario=scenario.hash, dx=scenario.grid.dx),
    )
    outputs = []

    def observe(st: StepperState, entry: dict):
        writer.write(t=st.t, n=st.density.density(st.grid), S=st.signal.values, m_mean=_m_mean(st))
        if len(outputs) % run_cfg.dump_every == 0:
            write_dump(out / f"dump_{len(outputs):08d}.chk", st)
        outputs.append(st.t)

    with writer:
        report, state = run(
            state, run_cfg.t_end, output_every=run_cfg.output_every, cfl=run_cfg.cfl, observer=observe, progress=progress
        )
    write_dump(out / "final.chk", state)
    report.to_csv(out / "diagnostics.csv")

    print_table(
        title="chemokin run",
        scenario=scenario.hash[:8],
        t=state.t,
        steps=state.steps,
        dt=state.dt,
        outputs=len(report),
        mass=state.mass,
        outflow=state.outflow,
        mass_drift=report.max_mass_drift(),
        failed=report.failed,
        out_dir=str(out),
    )
    return EXIT_FLAGGED if report.failed else EXIT_OK


def cmd_study_eps(config: RunConfig, eps_list: Sequence[float], t_end: float = None, progress: bool = True) -> int:
    """Fast-adaptation study; writes study.csv under the out dir."""
    scenario = build_scenario(config.scenario)
    run_cfg = config.scenario.run
    out = _out_dir(config)

    report = eps_study(
        scenario,
        eps_list,
        t_end if t_end is not None else run_cfg.t_end,
        output_every=run_cfg.output_every,
        threads=config.threads,
        cfl=run_cfg.cfl,
        progress=progress,
    )
    report.to_csv(out / "study.csv")
    final = report.final_rows()
    print_table(
        title="chemokin eps study",
        eps=" ".join(f"{e:.4g}" for e in report.eps_list),
        w1=" ".join(f"{r['w1']:.4g}" for r in final),
        l1_gap=" ".join(f"{r['l1_gap']:.4g}" for r in final),
        **report.flags(),
    )
    return EXIT_FLAGGED if any(report.failed_envelopes.values()) else EXIT_OK


class _Checks:
    def __init__(self):
        self.rows: List[dict] = []

    def add(self, name: str, value: float, threshold: float, passed: bool):
        self.rows.append(dict(check=name, value=value, threshold=threshold, passed=bool(passed)))
        (log.info if passed else log.error)(f"verify {name}: {value:.6g} (threshold {threshold:.6g})")

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows)

    def to_csv(self, path: Path):
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["check", "value", "threshold", "passed"])
            writer.writeheader()
            writer.writerows(self.rows)


def cmd_verify(config: RunConfig, oracle_levels: Sequence[int] = ORACLE_LEVELS, progress: bool = False) -> int:
    """Kernel, elliptic, oracle, conservation, envelope and determinism checks.

    Writes kernel_check.csv and verify.csv; raises VerificationFailed when a
    check fails.
    """
    scenario = build_scenario(config.scenario)
    grid = scenario.grid
    out = _out_dir(config)
    checks = _Checks()

    kernel = kernel_check(grid)
    kernel.to_csv(out / "kernel_check.csv")
    checks.add("kernel", float(sum(not r["passed"] for r in kernel.rows)), 0.0, kernel.passed)

    periodic = grid.model_copy(update=dict(x_topology="periodic"))
    rng = np.random.default_rng(config.seed)
    n = 1.0 + 0.5 * np.cos(2 * np.pi * periodic.x_mesh[0] / periodic.x_extent + rng.uniform(0, 2 * np.pi))
    residual = np.max(np.abs(helmholtz_residual(solve_signal(n, periodic), n, periodic))) / np.max(n)
    checks.add("spectral_residual", residual, RESIDUAL, residual <= RESIDUAL)

    if grid.dim == 1:
        free = grid.model_copy(update=dict(x_topology="free"))
        delta = np.zeros(free.x_shape)
        delta[free.x_nodes // 2] = 1.0 / free.dx
        peak = float(solve_signal(delta, free).values[free.x_nodes // 2])
        checks.add("delta_peak", abs(peak - 0.5), free.dx, abs(peak - 0.5) <= free.dx)

    conv = oracle_study(config.scenario, oracle_levels)
    checks.add("oracle_order", conv.min_order, ORACLE_ORDER, conv.min_order >= ORACLE_ORDER)
    checks.add("oracle_finest_gap", conv.gaps[-1], ORACLE_FINEST_GAP, conv.gaps[-1] <= ORACLE_FINEST_GAP)

    run_cfg = config.scenario.run
    state = initial_state(grid, scenario.spec, scenario.initial, scenario_hash=scenario.hash)
    report, final = run(state, run_cfg.t_end, output_every=run_cfg.output_every, cfl=run_cfg.cfl, progress=progress)
    report.to_csv(out / "verify_diagnostics.csv")
    drift = report.max_mass_drift()
    allowed = MASS_DRIFT_PER_TIME * max(1.0, final.t)
    checks.add("mass_drift", drift, allowed, drift <= allowed)
    checks.add("positivity", float(np.min(final.density.values)), 0.0, np.min(final.density.values) >= 0)
    checks.add("envelopes", float(report.failed), 0.0, not report.failed)

    _, again = run(state, run_cfg.t_end, output_every=run_cfg.output_every, cfl=run_cfg.cfl)
    write_dump(out / "verify_a.chk", final)
    write_dump(out / "verify_b.chk", again)
    same = (out / "verify_a.chk").read_bytes() == (out / "verify_b.chk").read_bytes()
    checks.add("determinism", 0.0 if same else 1.0, 0.0, same)

    checks.to_csv(out / "verify.csv")
    print_table(title="chemokin verify", **{r["check"]: "ok" if r["passed"] else "FAILED" for r in checks.rows})
    if not checks.passed:
        failed = [r["check"] for r in checks.rows if not r["passed"]]
        raise VerificationFailed(f"checks failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_compare(dump_a: str | Path, dump_b: str | Path) -> int:
    """L1 and sup distance between two dumps of the same shape."""
    head_a, p_a = read_dump(dump_a)
    head_b, p_b = read_dump(dump_b)
    if head_a.shape != head_b.shape or head_a.dx != head_b.dx or head_a.dm != head_b.dm:
        raise DumpError(f"dumps {dump_a} and {dump_b} live on different grids")
    measure = head_a.dx**head_a.dim * head_a.dm * head_a.weights[:, None]
    diff = np.abs(p_a.values - p_b.values)
    print_table(
        title="chemokin compare",
        t_a=head_a.t,
        t_b=head_b.t,
        l1=pairwise_sum(diff * measure),
        linf=float(np.max(diff)) if diff.size else 0.0,
        mass_a=pairwise_sum(p_a.values * measure),
        mass_b=pairwise_sum(p_b.values * measure),
    )
    return EXIT_OK
