"""Command-line interface for the experiment harness.

Subcommands mirror the pipeline stages: ``simulate`` writes trajectory
and density CSVs, ``average`` rebuilds densities from a cached
trajectory file, ``learn`` fits mechanisms from cached density CSVs,
``report`` runs the full cached pipeline and renders figures, ``sweep``
runs a one-at-a-time sensitivity study, and ``dump-preset`` prints a
preset's resolved parameters.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as _io
from .density import ensemble_average, trajectory_to_grid
from .harness import (
    ExperimentConfig,
    StageError,
    dump_preset,
    load_config,
    resolve_preset,
    run_experiment,
    run_sweep,
    simulate_stage,
    _learn,
)
from .presets import UnknownPresetError, preset_names

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellpde",
        description="Simulate cell chains and learn continuum PDE mechanisms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run the discrete model and write trajectory/density CSVs"),
        ("average", "rebuild density CSVs from a cached trajectory CSV"),
        ("learn", "fit mechanisms from cached density CSVs"),
        ("report", "full pipeline with caching; writes CSVs and SVG figures"),
        ("sweep", "one-at-a-time parameter sensitivity sweep"),
        ("dump-preset", "print a preset's resolved parameters"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--preset", help="named experiment preset")
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="base RNG seed override")
        p.add_argument("--threads", type=int,
                       help="worker count (default: CELLPDE_THREADS or 1)")
        p.add_argument("--out", help="output directory")
    return parser


def _experiment_config(args) -> ExperimentConfig:
    config = ExperimentConfig(preset="")
    sweep = None
    if args.config:
        config, sweep = load_config(args.config)
    if args.preset:
        config = ExperimentConfig(
            preset=args.preset, seed=config.seed, out=config.out,
            threads=config.threads, overrides=config.overrides,
        )
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.out is not None:
        updates["out"] = Path(args.out)
    if updates:
        from dataclasses import replace
        config = replace(config, **updates)
    return config


def _out_dir(config: ExperimentConfig, preset_name: str) -> Path:
    return Path(config.out) if config.out else Path("runs") / preset_name


def _cmd_simulate(config: ExperimentConfig) -> int:
    preset = resolve_preset(config)
    out = _out_dir(config, preset.name)
    for k, stage in enumerate(preset.stages):
        sample, grid = simulate_stage(preset, stage,
                                      threads=config.resolved_threads())
        _io.write_density_grid(out / f"density_{k}.csv", grid)
        if k == 0:
            _io.write_trajectories(out / "trajectories.csv", sample)
    print(f"wrote {len(preset.stages)} density CSV(s) under {out}")
    return 0


def _cmd_average(config: ExperimentConfig) -> int:
    preset = resolve_preset(config)
    out = _out_dir(config, preset.name)
    trajectories = _io.read_trajectories(out / "trajectories.csv")
    stage = preset.stages[0]
    if len(trajectories) == 1:
        grid = trajectory_to_grid(trajectories[0])
    else:
        grid = ensemble_average(trajectories, stage.n_k)
    _io.write_density_grid(out / "density_0.csv", grid)
    print(f"averaged {len(trajectories)} trajectories -> {out / 'density_0.csv'}")
    return 0


def _cmd_learn(config: ExperimentConfig) -> int:
    preset = resolve_preset(config)
    out = _out_dir(config, preset.name)
    grids = [
        _io.read_density_grid(out / f"density_{k}.csv",
                              kind="raw" if s.n_s is None else "averaged")
        for k, s in enumerate(preset.stages)
    ]
    result, setup, q_range = _learn(preset, grids)
    widths = {m: len(lib) for m, lib in preset.libraries.items()}
    _io.write_fit_table(out / "fit.csv", result, widths)
    _io.write_mechanism_curves(out / "curves.csv",
                               setup.mechanisms(result.theta), q_range)
    print("active:", {m: [i + 1 for i in v]
                      for m, v in result.active.items() if v})
    for m, vec in result.theta.items():
        if vec.size and np.any(vec != 0):
            print(f"theta_{m} = {np.round(vec, 5).tolist()}")
    print(f"terminal loss: {result.terminal_loss:.4f}")
    return 0


def _cmd_report(config: ExperimentConfig) -> int:
    manifest = run_experiment(config)
    print("active:", {m: [i + 1 for i in v]
                      for m, v in manifest["active"].items() if v})
    for m, vec in manifest["theta"].items():
        if vec and any(v != 0 for v in vec):
            print(f"theta_{m} = {[round(v, 5) for v in vec]}")
    print(f"terminal loss: {manifest['terminal_loss']:.4f}")
    for fig in manifest.get("figures", []):
        print("figure:", fig)
    return 0


def _cmd_sweep(args, config: ExperimentConfig) -> int:
    if not args.config:
        print("sweep requires --config with a [sweep] section",
              file=sys.stderr)
        return 2
    base, sweep = load_config(args.config)
    if sweep is None:
        print("config has no [sweep] section", file=sys.stderr)
        return 2
    from dataclasses import replace
    updates = {}
    if args.preset:
        updates["preset"] = args.preset
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.out is not None:
        updates["out"] = Path(args.out)
    if updates:
        sweep = replace(sweep, base=replace(sweep.base, **updates))
    outcome = run_sweep(sweep)
    print("sweep csv:", outcome["csv"])
    print("sweep svg:", outcome["svg"])
    return 0


def _cmd_dump_preset(config: ExperimentConfig) -> int:
    sys.stdout.write(dump_preset(config.preset))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    config = _experiment_config(args)
    if args.command != "sweep" and not config.preset:
        print("a preset is required (--preset or [experiment] preset)",
              file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            return _cmd_simulate(config)
        if args.command == "average":
            return _cmd_average(config)
        if args.command == "learn":
            return _cmd_learn(config)
        if args.command == "report":
            return _cmd_report(config)
        if args.command == "sweep":
            return _cmd_sweep(args, config)
        if args.command == "dump-preset":
            return _cmd_dump_preset(config)
    except UnknownPresetError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
