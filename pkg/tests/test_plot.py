from kinetic.stepper import run
from limit.study import eps_study
from macros.plot_study import plot_diagnostics, plot_study, read_csv


def test_plot_study(scenario, tmp_path):
    eps_study(scenario, [0.5, 0.25], t_end=0.25, output_every=0.25).to_csv(tmp_path / "study.csv")
    data = read_csv(tmp_path / "study.csv")
    assert data["eps"] == [0.5, 0.5, 0.25, 0.25]
    output = plot_study(tmp_path / "study.csv", tmp_path / "study.png")
    assert output.exists()
    assert output.stat().st_size > 0


def test_plot_diagnostics(state, tmp_path):
    report, _ = run(state, 0.5, output_every=0.25)
    report.to_csv(tmp_path / "diagnostics.csv")
    data = read_csv(tmp_path / "diagnostics.csv")
    assert data["failed"] == [0.0, 0.0, 0.0]
    output = plot_diagnostics(tmp_path / "diagnostics.csv", tmp_path / "diagnostics.png")
    assert output.exists()
