import math

import numpy as np
import pytest

from diagnostics.envelope import TOL_ENV, envelope_check, growth_factor, p_envelope, pbar_envelope
from diagnostics.reduce import NormRow, pairwise_sum, reduce_norms
from diagnostics.report import COLUMNS, DiagnosticsReport


def test_pairwise_sum_is_repeatable(rng):
    a = rng.uniform(size=(17, 3, 29))
    assert pairwise_sum(a) == pairwise_sum(a.copy())
    assert pairwise_sum(a) == pytest.approx(float(np.sum(a)), rel=1e-14)
    assert pairwise_sum([]) == 0.0


def test_norms_of_the_initial_state(state, initial):
    row = reduce_norms(state.density, state.signal, state.grid, state.spec.m_plus)
    assert row.t == 0.0
    assert row.mass == pytest.approx(initial.mass, rel=1e-14)
    assert row.x_moment == pytest.approx(initial.x_moment, rel=1e-14)
    assert row.m_moment == pytest.approx(initial.m_moment, rel=1e-14)
    assert row.p_inf == initial.p_sup
    assert row.pbar_inf == initial.pbar_sup
    # periodic Helmholtz preserves the integral of n
    assert row.S_l1 == pytest.approx(row.mass, rel=1e-12)
    assert row.n_inf <= state.grid.V_d * row.pbar_inf * (1 + 1e-14)
    # no cells beyond 2 m_plus on this grid
    assert row.tail_moment == 0.0


def test_growth_factor():
    assert growth_factor(2.0, 0.5, 0.0) == 1.0
    a = 2.0 * 2.0 * 0.5 * 0.3
    assert growth_factor(2.0, 0.5, 0.3) == pytest.approx(1.0 + a * math.exp(a))
    assert growth_factor(2.0, 1.0, 1.0) == pytest.approx(1.0 + 4.0 * math.exp(4.0), rel=1e-15)


def test_envelopes_start_at_the_initial_data(initial, spec):
    assert pbar_envelope(initial, spec, 0.0) == pytest.approx(initial.pbar_sup)
    assert p_envelope(initial, spec, 0.0) == pytest.approx(initial.mass + initial.p_sup)


def make_row(state, **changes):
    row = reduce_norms(state.density, state.signal, state.grid, state.spec.m_plus).as_dict()
    row.update(changes)
    return NormRow(**row)


def test_envelope_margins(state):
    margins = envelope_check(make_row(state), state.initial, state.spec)
    assert not margins.failed
    assert margins.pbar == pytest.approx(0.0, abs=1e-14)
    assert margins.tail > 0.0

    inflated = make_row(state, pbar_inf=state.initial.pbar_sup * (1 + 10 * TOL_ENV))
    assert envelope_check(inflated, state.initial, state.spec).failed


def test_report_rows_and_csv(state, tmp_path):
    report = DiagnosticsReport(state.initial, state.spec)
    first = report.add(make_row(state))
    assert math.isnan(first["xmoment_rate"])
    second = report.add(make_row(state, t=0.5, x_moment=state.initial.x_moment + 0.1), outflow=0.0)
    assert second["xmoment_rate"] == pytest.approx(0.2)
    assert not report.failed
    assert report.column("t") == [0.0, 0.5]
    assert report.max_mass_drift() <= 1e-14

    report.to_csv(tmp_path / "diagnostics.csv")
    lines = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert lines[0].split(",") == COLUMNS
    assert len(lines) == 3


def test_report_flags_fast_moment_growth(state):
    report = DiagnosticsReport(state.initial, state.spec)
    report.add(make_row(state))
    entry = report.add(make_row(state, t=0.1, x_moment=state.initial.x_moment + 0.5 * state.initial.mass))
    assert entry["xmoment_margin"] < 0
    assert entry["failed"]
    assert report.failed


def test_report_rows_must_advance(state):
    report = DiagnosticsReport(state.initial, state.spec)
    report.add(make_row(state, t=0.2))
    with pytest.raises(ValueError):
        report.add(make_row(state, t=0.2))


def test_mass_drift_counts_outflow(state):
    report = DiagnosticsReport(state.initial, state.spec)
    m0 = state.initial.mass
    report.add(make_row(state, mass=0.75 * m0), outflow=0.25 * m0)
    assert report.max_mass_drift() == pytest.approx(0.0, abs=1e-15)
