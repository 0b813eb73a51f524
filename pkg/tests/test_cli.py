import json

import h5py
import pytest
import yaml

from cli.commands import cmd_compare, cmd_run
from cli.config import OUT_ENV, RunConfig
from cli.main import exit_code, main
from model.builder import CONFIG_DIR
from oracle.duhamel import OracleConvergence
from utils.errors import (
    AssumptionViolation,
    BadConfig,
    CflViolation,
    DumpError,
    PositivityViolation,
    VerificationFailed,
)
from utils.output import H5Logger

from helpers import tiny_config


@pytest.fixture(autouse=True)
def no_out_override(monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)


def write_config(path, out_dir, **overrides):
    raw = tiny_config(**overrides)
    raw["run"]["out_dir"] = str(out_dir)
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def test_exit_codes():
    assert exit_code(BadConfig("x")) == 2
    assert exit_code(AssumptionViolation("x")) == 2
    assert exit_code(DumpError("x")) == 3
    assert exit_code(VerificationFailed("x")) == 4
    assert exit_code(CflViolation("x")) == 1
    assert exit_code(PositivityViolation("x")) == 1
    assert str(BadConfig("oops")) == "[bad-config] oops"


def test_unknown_key_is_a_bad_config(tmp_path):
    raw = tiny_config(model=dict(foo=1.0))
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert main(["run", str(path), "--no-progress"]) == 2
    with pytest.raises(BadConfig, match="unknown key 'model.foo'"):
        RunConfig.from_file(path)


def test_invalid_yaml_and_missing_file(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("grid: [unclosed\n")
    assert main(["run", str(path)]) == 2
    assert main(["run", str(tmp_path / "missing.yaml")]) == 3


def test_violated_assumption_exits_with_two(tmp_path):
    path = write_config(tmp_path / "c.yaml", tmp_path / "out", grid=dict(m_max_auto=False, m_max=1.9))
    assert main(["run", path, "--no-progress"]) == 2


def test_out_dir_override(tmp_path, monkeypatch):
    config = RunConfig.from_file(write_config(tmp_path / "c.yaml", tmp_path / "configured"))
    assert config.out_dir == tmp_path / "configured"
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "override"))
    assert config.out_dir == tmp_path / "override"


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path / "c.yaml", out, run=dict(dump_every=2))
    assert main(["run", path, "--no-progress"]) == 0

    assert (out / "final.chk").exists()
    assert (out / "dump_00000000.chk").exists()
    assert len(list(out.glob("dump_*.chk"))) == 2
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert len(lines) == 4
    with h5py.File(out / "profiles.h5", "r") as f:
        assert f["t"].shape == (3,)
        assert f["n"].shape == (3, 32)
        assert f["S"].shape == (3, 32)
        assert f.attrs["scenario"]


def test_runs_are_bitwise_reproducible(tmp_path):
    for name in ("a", "b"):
        config = RunConfig.from_file(write_config(tmp_path / f"{name}.yaml", tmp_path / name))
        assert cmd_run(config, progress=False) == 0
    assert (tmp_path / "a" / "final.chk").read_bytes() == (tmp_path / "b" / "final.chk").read_bytes()


def test_restart_reproduces_a_straight_run(tmp_path):
    straight = write_config(tmp_path / "s.yaml", tmp_path / "straight", run=dict(t_end=1.0))
    first = write_config(tmp_path / "h.yaml", tmp_path / "half", run=dict(t_end=0.5))
    second = write_config(tmp_path / "r.yaml", tmp_path / "resumed", run=dict(t_end=1.0))
    assert main(["run", straight, "--no-progress"]) == 0
    assert main(["run", first, "--no-progress"]) == 0
    assert main(["run", second, "--no-progress", "--restart", str(tmp_path / "half" / "final.chk")]) == 0
    assert (tmp_path / "resumed" / "final.chk").read_bytes() == (tmp_path / "straight" / "final.chk").read_bytes()


def test_restart_from_another_scenario_fails(tmp_path):
    first = write_config(tmp_path / "a.yaml", tmp_path / "a")
    other = write_config(tmp_path / "b.yaml", tmp_path / "b", model=dict(kappa=2.0))
    assert main(["run", first, "--no-progress"]) == 0
    assert main(["run", other, "--no-progress", "--restart", str(tmp_path / "a" / "final.chk")]) == 3


def test_compare(tmp_path):
    path = write_config(tmp_path / "c.yaml", tmp_path / "out")
    assert main(["run", path, "--no-progress"]) == 0
    final = str(tmp_path / "out" / "final.chk")
    assert cmd_compare(final, final) == 0
    assert main(["compare", final, str(tmp_path / "out" / "dump_00000000.chk")]) == 0
    assert main(["compare", final, str(tmp_path / "nothing.chk")]) == 3


def test_compare_rejects_different_grids(tmp_path):
    a = write_config(tmp_path / "a.yaml", tmp_path / "a")
    b = write_config(tmp_path / "b.yaml", tmp_path / "b", grid=dict(x_nodes=16))
    assert main(["run", a, "--no-progress"]) == 0
    assert main(["run", b, "--no-progress"]) == 0
    with pytest.raises(DumpError, match="different grids"):
        cmd_compare(tmp_path / "a" / "final.chk", tmp_path / "b" / "final.chk")


def test_study_eps_command(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path / "c.yaml", out)
    assert main(["study-eps", path, "--eps", "0.5", "0.25", "--t-end", "0.25", "--no-progress"]) == 0
    lines = (out / "study.csv").read_text().splitlines()
    assert lines[0].startswith("eps,t,w1,l1_gap")
    assert len(lines) == 1 + 2 * 2


def write_sectioned(path, out_dir, **overrides):
    raw = tiny_config(**overrides)
    raw["run"]["out_dir"] = str(out_dir)
    lines = []
    for section, values in raw.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {json.dumps(value)}" for key, value in values.items())
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_sectioned_config_matches_yaml(tmp_path):
    sectioned = RunConfig.from_file(write_sectioned(tmp_path / "c.ini", tmp_path / "out", model=dict(F_family="cubic")))
    plain = RunConfig.from_file(write_config(tmp_path / "c.yaml", tmp_path / "out", model=dict(F_family="cubic")))
    assert sectioned.scenario == plain.scenario

    no_suffix = tmp_path / "scenario.txt"
    no_suffix.write_text("# tiny\n" + (tmp_path / "c.ini").read_text())
    assert RunConfig.from_file(no_suffix).scenario == plain.scenario


def test_sectioned_unknown_key_is_a_bad_config(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nfoo=1\n")
    assert main(["run", str(path), "--no-progress"]) == 2
    with pytest.raises(BadConfig, match="unknown key 'model.foo'"):
        RunConfig.from_file(path)

    path.write_text("eps = 0.1\n")
    assert main(["run", str(path), "--no-progress"]) == 2


def test_sectioned_config_runs(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write_sectioned(tmp_path / "c.cfg", out), "--no-progress"]) == 0
    assert (out / "final.chk").exists()


def test_unwritable_out_dir_is_an_io_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    path = write_config(tmp_path / "c.yaml", blocker / "out")
    assert main(["run", path, "--no-progress"]) == 3
    assert main(["verify", path]) == 3


def test_h5_logger_open_failure(tmp_path):
    with pytest.raises(DumpError, match="cannot open"):
        H5Logger(str(tmp_path / "missing" / "profiles.h5"), {"t": ()})


def test_run_after_a_shortened_step_names_dumps_by_output(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path / "c.yaml", out, run=dict(t_end=0.6, output_every=0.25))
    assert main(["run", path, "--no-progress"]) == 0
    assert sorted(p.name for p in out.glob("dump_*.chk")) == [f"dump_{k:08d}.chk" for k in range(4)]


VERIFY_CHECKS = [
    "kernel",
    "spectral_residual",
    "delta_peak",
    "oracle_order",
    "oracle_finest_gap",
    "mass_drift",
    "positivity",
    "envelopes",
    "determinism",
]


@pytest.mark.slow
def test_verify_passes_on_the_default_scenario(tmp_path, monkeypatch):
    out = tmp_path / "out"
    monkeypatch.setenv(OUT_ENV, str(out))
    assert main(["verify", str(CONFIG_DIR / "default.yaml")]) == 0
    assert (out / "kernel_check.csv").exists()
    rows = (out / "verify.csv").read_text().splitlines()
    assert rows[0] == "check,value,threshold,passed"
    assert [r.split(",")[0] for r in rows[1:]] == VERIFY_CHECKS
    assert all(r.endswith("True") for r in rows[1:])
    assert (out / "verify_a.chk").read_bytes() == (out / "verify_b.chk").read_bytes()


def test_verify_reports_a_failed_oracle(tmp_path, monkeypatch):
    monkeypatch.setattr(
        "cli.commands.oracle_study",
        lambda config, levels: OracleConvergence(dx=[0.5, 0.25, 0.125], gaps=[4e-2, 3e-2, 2.5e-2]),
    )
    path = write_config(tmp_path / "c.yaml", tmp_path / "out")
    assert main(["verify", path]) == 4
    rows = (tmp_path / "out" / "verify.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == VERIFY_CHECKS
    assert any(r.startswith("oracle_order") and r.endswith("False") for r in rows)
    assert any(r.startswith("determinism") and r.endswith("True") for r in rows)
