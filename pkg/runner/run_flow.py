"""
Plateau flow main execution script.

Batch entry point of the package: runs the flow from an INI config or an
experiment preset, runs the built-in verification suites, and lists or
samples the built-in boundary curves.

    plateau-flow run <config.ini> | run --preset NAME
    plateau-flow verify [--level quick|full]
    plateau-flow curves list | curves show NAME
"""

import os
import sys

from dotenv import load_dotenv

load_dotenv()
THREADS_ENV = os.getenv("PLATEAU_FLOW_THREADS", "")
if THREADS_ENV:
    for _name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ[_name] = THREADS_ENV

import argparse
import logging

from common_utils.errors import (
    ConfigError,
    CurvesNotDisjointError,
    FlowAbort,
    NumericalFailure,
    ParameterError,
    UsageError,
)
from common_utils.utils import get_curve_presets
from runner.config_manager import ConfigManager, to_ini
from runner.flow_error_handler import FlowErrorHandler
from runner.logger_manager import LoggerManager
from runner.output_manager import OutputManager
from runner.verification import render_report, run_suites
from schemas.flow import FlowConfig
from solver.diagnostics import extract_discs
from solver.flow_engine import run as run_flow
from surface.curves import curves_from_preset, load_curve_preset, read_curve_file

EXIT_OK = 0
EXIT_FAILURE = 2
EXIT_USAGE = 64
EXIT_VERIFY_FAILED = 1
SHOW_SAMPLES = 256


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plateau-flow", description="Coupled map and metric flow for the Plateau problem on a cylinder.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = commands.add_parser("run", help="run the flow from a config file or an experiment preset")
    run.add_argument("config", nargs="?", help="INI run configuration")
    run.add_argument("--preset", help="name of a built-in experiment preset")
    run.add_argument("--output-dir", help="override [output] output_dir")

    verify = commands.add_parser("verify", help="run the built-in invariant suites")
    verify.add_argument("--level", choices=("quick", "full"), default="quick")

    curves = commands.add_parser("curves", help="list or sample the built-in curve presets")
    curves.add_argument("action", choices=("list", "show"))
    curves.add_argument("name", nargs="?")
    return parser


def load_curves(config: FlowConfig):
    if config.curve_preset is not None:
        return load_curve_preset(config.curve_preset)
    return read_curve_file(config.curve_plus), read_curve_file(config.curve_minus)


def cmd_run(config_path=None, preset=None, output_dir=None) -> int:
    if (config_path is None) == (preset is None):
        raise UsageError("run needs exactly one of a config file or --preset")
    manager = ConfigManager(config_path=config_path, preset=preset)
    config = manager.config
    if output_dir is not None:
        config = config.model_copy(update={"output_dir": output_dir})

    output = OutputManager(config.output_dir)
    output.prepare()
    logs = LoggerManager(output.output_dir, manager.log_level)
    logs.log_run_header(config_path or f"preset {preset}", manager.threads)
    output.write_effective_config(to_ini(config))

    curves = load_curves(config)
    handler = FlowErrorHandler(dump_state=output.dump_state)
    trajectory = run_flow(config, curves, error_handler=handler, observer=output.export_mesh)

    discs = None
    if trajectory.classification == "DegenerateTwoDiscs":
        discs = list(extract_discs(trajectory.final_map, trajectory.final_state, curves, trajectory.classification))
        for disc in discs:
            logging.info(
                f"Disc {disc.side}: area={disc.area:.10f}, conformality={disc.conformality_relative:.3e}, "
                f"boundary span={disc.boundary_span:.6f}"
            )
    output.write_trajectory(trajectory)
    output.write_final_state(trajectory, discs)
    print(f"classification: {trajectory.classification}")
    return EXIT_OK


def cmd_verify(level: str = "quick", cutoffs=None) -> int:
    LoggerManager()
    results = run_suites(level, cutoffs=cutoffs)
    print(render_report(results, level), end="")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY_FAILED


def cmd_curves(action: str, name: str | None = None) -> int:
    presets = get_curve_presets()
    if action == "list":
        for preset_name, preset in presets.items():
            print(f"{preset_name}: {preset.get('description', preset.get('kind'))}")
        return EXIT_OK
    if name is None:
        raise UsageError("curves show needs a preset name")
    if name not in presets:
        raise ConfigError(f"unknown curve preset '{name}'", key="preset")
    plus, minus = curves_from_preset(presets[name])
    for label, curve in (("plus", plus), ("minus", minus)):
        print(f"# {name} {label} n={curve.dim} samples={SHOW_SAMPLES}")
        for point in curve.sample(SHOW_SAMPLES):
            print(" ".join(f"{v:.17g}" for v in point))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            return cmd_run(args.config, args.preset, args.output_dir)
        if args.command == "verify":
            return cmd_verify(args.level)
        return cmd_curves(args.action, args.name)
    except (ConfigError, UsageError, ParameterError, CurvesNotDisjointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FlowAbort as e:
        print(f"flow aborted at step {e.step_index}: {e} (state dump: {e.dump_path})", file=sys.stderr)
        return EXIT_FAILURE
    except NumericalFailure as e:
        logging.exception(f"Numerical failure: {e}")
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
