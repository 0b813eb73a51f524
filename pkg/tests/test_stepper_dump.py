from dataclasses import replace

import numpy as np
import pytest

from diagnostics.reduce import pairwise_sum
from kinetic.density import DensityField
from kinetic.dump import MAGIC, read_dump, restore_state, write_dump
from kinetic.stepper import initial_state, macro_step, run, stable_dt, step_plan, step_size
from model.builder import build_scenario, config_from_dict
from model.initial import make_initial_data
from model.spec import ModelSpec
from oracle.duhamel import restrict
from utils.errors import BadConfig, DumpError, PositivityViolation

from helpers import tiny_config


def test_step_size_divides_output_interval(grid, spec):
    dt, per_output = step_size(grid, spec, 0.25)
    assert dt <= stable_dt(grid, spec)
    assert dt * per_output == pytest.approx(0.25, rel=1e-15)
    assert stable_dt(grid, spec, cfl=1.0) == pytest.approx(min(grid.dx / grid.speed_bound, 2.0 / (grid.V_d * spec.C_T)))


def test_macro_step_keeps_uniform_data_uniform(grid, spec):
    initial = make_initial_data(grid, spec, profile="uniform")
    state = initial_state(grid, spec, initial)
    dt, _ = step_size(grid, spec, 0.1)
    for _ in range(5):
        state = macro_step(state, dt)
    values = state.density.values
    np.testing.assert_allclose(values, np.broadcast_to(values[:1], values.shape), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(state.signal.values, state.signal.values[0], rtol=1e-12)


def test_mass_is_conserved_over_many_steps(state):
    dt, _ = step_size(state.grid, state.spec, 0.05)
    m0 = state.mass
    for _ in range(1000):
        state = macro_step(state, dt)
    assert abs(state.mass - m0) <= 1e-12 * m0
    assert np.min(state.density.values) >= 0.0
    assert state.steps == 1000
    assert state.t == pytest.approx(1000 * dt, rel=1e-14)


def test_signal_follows_density(state):
    dt, _ = step_size(state.grid, state.spec, 0.1)
    new = macro_step(state, dt)
    assert new.signal.source_hash != state.signal.source_hash
    frozen = macro_step(replace(state, frozen_signal=True), dt)
    assert frozen.signal is state.signal


def test_run_records_rows_at_output_times(state):
    seen = []
    report, final = run(state, 0.5, output_every=0.25, observer=lambda st, row: seen.append(row["t"]))
    assert len(report) == 3
    np.testing.assert_allclose(seen, [0.0, 0.25, 0.5], atol=1e-12)
    assert report.column("t") == seen
    assert final.t >= 0.5 - 1e-12
    assert final.t < 0.5 + final.dt
    assert not report.failed
    assert report.max_mass_drift() <= 1e-12


def test_run_to_current_time_is_empty(state):
    report, same = run(state, state.t)
    assert len(report) == 0
    assert same is state


def test_run_backwards_is_rejected(state):
    with pytest.raises(BadConfig):
        run(state, -1.0)


def test_run_rebases_time_when_dt_changes(state):
    _, mid = run(state, 0.25, output_every=0.25)
    _, end = run(mid, 0.5, output_every=0.05)
    assert end.t0 == mid.t
    assert end.t == pytest.approx(0.5, abs=end.dt)


def test_changing_dt_keeps_earlier_step_times(state):
    for _ in range(10):
        state = macro_step(state, 0.1)
    assert state.t == pytest.approx(1.0, abs=1e-14)
    state = macro_step(state, 0.2)
    assert state.t == pytest.approx(1.2, abs=1e-14)
    assert state.density.t == state.t
    assert (state.t0, state.steps, state.dt) == (pytest.approx(1.0, abs=1e-14), 1, 0.2)


def test_step_plan():
    assert step_plan(0.0, 1.0, 0.1) == (10, 0.0)
    full, last = step_plan(0.0, 0.3, 0.25)
    assert full == 1
    assert last == pytest.approx(0.05, abs=1e-15)
    assert step_plan(0.5, 0.5, 0.1) == (0, 0.0)


def test_run_ends_exactly_at_t_end(state):
    seen = []
    report, final = run(state, 0.3, output_every=0.25, observer=lambda st, row: seen.append(row["t"]))
    assert seen == pytest.approx([0.0, 0.25, 0.3], abs=1e-14)
    assert len(report) == 3
    assert final.t == pytest.approx(0.3, abs=1e-14)
    assert final.dt == pytest.approx(0.05, abs=1e-14)


def refined_state(level):
    raw = tiny_config(
        grid=dict(x_nodes=32 * 2**level, m_nodes=128 * 2**level),
        initial=dict(m_profile="gaussian", m_center=1.25, m_width=2.5 / 14),
    )
    scenario = build_scenario(config_from_dict(raw))
    return initial_state(scenario.grid, scenario.spec, scenario.initial)


@pytest.mark.slow
def test_refinement_halves_the_self_difference():
    t = 0.125
    finals = [run(refined_state(level), t, output_every=t / 2 ** (level + 1))[1] for level in range(3)]
    diffs = []
    for coarse, fine in zip(finals, finals[1:]):
        restricted = restrict(fine.density.values, fine.grid, coarse.grid)
        diffs.append(pairwise_sum(np.abs(coarse.density.values - restricted) * coarse.grid.cell_measure))
    assert diffs[0] / diffs[1] >= 1.8, diffs


def test_runs_are_deterministic(scenario):
    def go():
        state = initial_state(scenario.grid, scenario.spec, scenario.initial)
        return run(state, 0.5, output_every=0.25)[1]

    a, b = go(), go()
    np.testing.assert_array_equal(a.density.values, b.density.values)
    np.testing.assert_array_equal(a.signal.values, b.signal.values)


def test_restart_matches_straight_run(scenario, tmp_path):
    start = initial_state(scenario.grid, scenario.spec, scenario.initial, scenario_hash=scenario.hash)
    _, straight = run(start, 1.0, output_every=0.25)

    _, half = run(start, 0.5, output_every=0.25)
    write_dump(tmp_path / "half.chk", half)
    resumed = restore_state(tmp_path / "half.chk", start)
    assert resumed.t == half.t
    _, finished = run(resumed, 1.0, output_every=0.25)

    assert finished.steps == straight.steps
    assert finished.t == straight.t
    np.testing.assert_array_equal(finished.density.values, straight.density.values)


def test_dump_round_trip(state, tmp_path):
    dt, _ = step_size(state.grid, state.spec, 0.1)
    state = replace(macro_step(macro_step(state, dt), dt), scenario_hash="abc123")
    path = tmp_path / "state.chk"
    write_dump(path, state)
    assert path.read_bytes().startswith(MAGIC.encode() + b"\n")

    header, density = read_dump(path)
    assert header.shape == state.grid.shape
    assert header.steps == 2
    assert header.dt == dt
    assert header.t == state.t
    assert header.eps == state.spec.eps
    assert header.scenario_hash == "abc123"
    np.testing.assert_array_equal(header.velocities, state.grid.velocities)
    np.testing.assert_array_equal(header.weights, state.grid.weights)
    np.testing.assert_array_equal(density.values, state.density.values)
    assert density.t == state.t


def test_dump_without_scenario_hash(state, tmp_path):
    write_dump(tmp_path / "a.chk", state)
    assert b"\nscenario -\n" in (tmp_path / "a.chk").read_bytes()
    header, _ = read_dump(tmp_path / "a.chk")
    assert header.scenario_hash == ""


def test_corrupt_dumps_are_rejected(state, tmp_path):
    path = tmp_path / "good.chk"
    write_dump(path, state)
    raw = path.read_bytes()

    (tmp_path / "magic.chk").write_bytes(b"NOTADUMP" + raw[len(MAGIC):])
    (tmp_path / "short.chk").write_bytes(raw[:-8])
    (tmp_path / "noend.chk").write_bytes(raw.replace(b"\nend\n", b"\nfin\n"))
    for name in ("magic.chk", "short.chk", "noend.chk", "missing.chk"):
        with pytest.raises(DumpError):
            read_dump(tmp_path / name)


def test_restore_rejects_other_eps(state, tmp_path):
    write_dump(tmp_path / "a.chk", state)
    other = replace(state, spec=state.spec.with_eps(state.spec.eps / 2))
    with pytest.raises(DumpError, match="eps"):
        restore_state(tmp_path / "a.chk", other)


def test_restore_rejects_other_scenario(state, tmp_path):
    write_dump(tmp_path / "a.chk", replace(state, scenario_hash="one"))
    with pytest.raises(DumpError, match="hash"):
        restore_state(tmp_path / "a.chk", replace(state, scenario_hash="two"))


def test_free_space_run_accounts_for_outflow():
    scenario = build_scenario(
        config_from_dict(tiny_config(grid=dict(x_topology="free", x_extent=4.0), initial=dict(width=0.8)))
    )
    state = initial_state(scenario.grid, scenario.spec, scenario.initial)
    report, final = run(state, 1.0, output_every=0.5)
    assert final.outflow > 0.0
    assert final.mass < state.mass
    assert report.max_mass_drift() <= 1e-12


def test_negative_cells_raise(state):
    dt, _ = step_size(state.grid, state.spec, 0.1)
    negative = replace(state, density=DensityField(-state.density.values))
    with pytest.raises(PositivityViolation, match="p >= 0"):
        macro_step(negative, dt)


def test_two_dimensional_step_conserves_mass():
    raw = tiny_config(grid=dict(dim=2, x_nodes=12, x_extent=6.0, v_count=6, m_nodes=12))
    scenario = build_scenario(config_from_dict(raw))
    state = initial_state(scenario.grid, scenario.spec, scenario.initial)
    dt, _ = step_size(scenario.grid, scenario.spec, 0.1)
    new = macro_step(macro_step(state, dt), dt)
    assert new.mass == pytest.approx(state.mass, rel=1e-12)
    assert np.min(new.density.values) >= 0.0


def test_spec_with_larger_turning_rate_shrinks_dt(grid):
    slow = ModelSpec.from_parameters(grid, lambda0=1.0)
    fast = ModelSpec.from_parameters(grid, lambda0=50.0)
    assert stable_dt(grid, fast) < stable_dt(grid, slow)
