import logging

import numpy as np
import pandas as pd
import pytest

from common_utils.errors import ConfigError, FlowAbort
from common_utils.utils import CONFIGS_DIR
from geometry.collar import ell0
from geometry.moebius import CutoffPair
from runner.config_manager import ConfigManager, to_ini
from runner.flow_error_handler import FlowErrorHandler
from runner.logger_manager import LoggerManager, resolve_level
from runner.output_manager import CSV_HEADER, OutputManager
from runner.run_flow import EXIT_USAGE, cmd_verify, main
from runner.verification import run_suites
from schemas.flow import RECORD_COLUMNS, FlowConfig
from solver.flow_engine import run
from surface.curves import load_curve_preset


def test_unknown_key_reports_key_and_line(write_ini):
    path = write_ini("[grid]\nn_x = 16\nbogus = 1\n")
    with pytest.raises(ConfigError) as info:
        ConfigManager(config_path=path)
    assert info.value.key == "grid.bogus"
    assert info.value.line == 3


def test_invalid_value_reports_key_and_line(write_ini):
    path = write_ini("[grid]\nn_x = 16\nn_theta = 13\n\n[curves]\ncurve_preset = circles\n")
    with pytest.raises(ConfigError) as info:
        ConfigManager(config_path=path)
    assert info.value.key == "grid.n_theta"
    assert info.value.line == 3


def test_unknown_section_and_missing_header(write_ini):
    with pytest.raises(ConfigError) as info:
        ConfigManager(config_path=write_ini("[solver]\nh = 1\n"))
    assert info.value.key == "solver"
    with pytest.raises(ConfigError) as info:
        ConfigManager(config_path=write_ini("n_x = 16\n"))
    assert info.value.line == 1


def test_config_manager_needs_one_source(write_ini):
    with pytest.raises(ConfigError):
        ConfigManager()
    with pytest.raises(ConfigError):
        ConfigManager(config_path=write_ini(), preset="catenoid-0.8")
    with pytest.raises(ConfigError):
        ConfigManager(preset="no-such-experiment")


def test_relative_curve_files_resolve_against_the_config(write_ini, tmp_path):
    path = write_ini(curves="curve_plus = top.txt\ncurve_minus = bottom.txt")
    config = ConfigManager(config_path=path).config
    assert config.curve_plus == str(tmp_path / "top.txt")
    assert config.curve_minus == str(tmp_path / "bottom.txt")


def test_effective_config_round_trips(tmp_path):
    config = ConfigManager(preset="catenoid-0.8").config.model_copy(update={"ell_init": 0.75, "clamp": True})
    path = tmp_path / "effective.ini"
    path.write_text(to_ini(config))
    assert ConfigManager(config_path=path).config == config


def test_shipped_example_config_loads():
    config = ConfigManager(config_path=CONFIGS_DIR / "catenoid.ini").config
    assert config.curve_preset == "circles"
    assert (config.n_x, config.n_theta, config.h) == (64, 48, 0.01)


def test_main_maps_config_errors_to_usage_exit(write_ini, capsys):
    path = write_ini("[grid]\nn_x = 16\nbogus = 1\n")
    assert main(["run", str(path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "grid.bogus" in err and "line=3" in err


def test_main_reports_missing_curve_file(write_ini):
    path = write_ini(curves="curve_plus = top.txt\ncurve_minus = bottom.txt")
    assert main(["run", str(path)]) == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [[], ["run"], ["run", "a.ini", "--preset", "catenoid-0.8"], ["run", "--preset", "nope"], ["curves", "show"], ["explode"]],
)
def test_main_rejects_bad_usage(argv, in_tmp):
    assert main(argv) == EXIT_USAGE


def test_curves_list_describes_presets(capsys):
    assert main(["curves", "list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "circles: circles r=1 sep=0.8" in lines


def test_curves_show_samples_both_curves(capsys):
    assert main(["curves", "show", "circles"]) == 0
    lines = capsys.readouterr().out.splitlines()
    headers = [i for i, line in enumerate(lines) if line.startswith("#")]
    assert headers == [0, 257]
    plus = np.array([[float(v) for v in line.split()] for line in lines[1:257]])
    assert plus.shape == (256, 3)
    np.testing.assert_allclose(plus[-1], plus[0], atol=1e-12)
    np.testing.assert_allclose(plus[:, 2], 0.4, atol=1e-12)


def test_curves_show_unknown_preset():
    assert main(["curves", "show", "trefoil"]) == EXIT_USAGE


def test_run_writes_all_artefacts(write_ini, tmp_path, capsys):
    path = write_ini()
    assert main(["run", str(path)]) == 0
    out_dir = tmp_path / "out"
    assert capsys.readouterr().out.strip().startswith("classification: ")
    for name in ("trajectory.csv", "final_state.txt", "effective_config.ini"):
        assert (out_dir / name).is_file()
    assert [p.name for p in (out_dir / "meshes").iterdir()] == ["step_000002.obj"]
    lines = (out_dir / "trajectory.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[-1].startswith("# classification: ")
    frame = pd.read_csv(out_dir / "trajectory.csv", comment="#")
    assert tuple(frame.columns) == RECORD_COLUMNS
    assert frame["step"].tolist() == [0, 1, 2]
    state = (out_dir / "final_state.txt").read_text()
    assert "status = finished" in state
    assert "[values]" in state


def test_output_dir_override(write_ini, tmp_path):
    path = write_ini(t_max=0.0)
    assert main(["run", str(path), "--output-dir", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "trajectory.csv").is_file()


def test_state_dump_is_written_by_the_output_manager(tmp_path):
    config = FlowConfig(n_x=8, n_theta=12, t_max=0.0, curve_preset="circles")
    trajectory = run(config, load_curve_preset("circles"))
    output = OutputManager(tmp_path / "dumps")
    path = output.dump_state(7, trajectory.final_map, trajectory.final_state)
    text = path.read_text()
    assert path.name == "state_dump_step_000007.txt"
    assert "status = aborted" in text
    assert "step = 7" in text
    radius = next(line for line in text.splitlines() if line.startswith("core_injectivity_radius"))
    assert float(radius.split("=")[1]) == pytest.approx(0.5 * ell0(1.0), rel=1e-12)


def test_error_handler_passes_results_and_survives_broken_dumps():
    handler = FlowErrorHandler(dump_state=lambda *args: 1 / 0)
    assert handler.wrap_step(1, lambda u, state: (u, state), "u", "g") == ("u", "g")

    def failing(u, state):
        raise RuntimeError("boom")

    with pytest.raises(FlowAbort) as info:
        handler.wrap_step(3, failing, None, None)
    assert info.value.step_index == 3
    assert info.value.dump_path is None


def test_verify_flags_a_corrupted_cutoff(in_tmp, capsys):
    assert cmd_verify("quick", cutoffs=CutoffPair(lambda1_start=0.7)) == 1
    report = capsys.readouterr().out
    moebius = next(line for line in report.splitlines() if line.startswith("moebius"))
    assert "FAIL" in moebius


def test_quick_suites_all_pass(in_tmp, capsys):
    results = {r.name: r for r in run_suites("quick")}
    assert list(results) == ["norms", "geometry", "moebius", "minimizer", "projection"]
    for result in results.values():
        assert result.passed, f"{result.name}: {result.detail}"
    assert cmd_verify("quick") == 0
    assert "FAIL" not in capsys.readouterr().out


def test_trajectory_is_reproduced_bitwise(write_ini, tmp_path):
    path = write_ini()
    assert main(["run", str(path), "--output-dir", str(tmp_path / "first")]) == 0
    assert main(["run", str(path), "--output-dir", str(tmp_path / "second")]) == 0
    effective = tmp_path / "first" / "effective_config.ini"
    assert main(["run", str(effective), "--output-dir", str(tmp_path / "rerun")]) == 0
    reference = (tmp_path / "first" / "trajectory.csv").read_bytes()
    assert (tmp_path / "second" / "trajectory.csv").read_bytes() == reference
    assert (tmp_path / "rerun" / "trajectory.csv").read_bytes() == reference


def test_logger_manager_places_the_run_log_in_the_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PLATEAU_FLOW_LOG_LEVEL", "debug")
    logs = LoggerManager(tmp_path / "run")
    assert logs.log_path == tmp_path / "run" / "plateau_flow.log"
    assert (tmp_path / "run").is_dir()
    assert logs.level == logging.DEBUG
    assert LoggerManager(level="nonsense").log_path is None
    assert resolve_level("warning") == logging.WARNING
