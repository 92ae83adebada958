"""Config-driven orchestration: simulate, average, learn, report, sweep.

An experiment is a preset plus overrides, resolved into per-stage
datasets, a learned mechanism set, and a bundle of CSV/SVG artifacts in
the output directory.  Stages are cached by content hash of their
upstream CSVs, so re-running a later stage from cached files reproduces
the end-to-end result.
"""

from __future__ import annotations

import configparser
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as _io
from .density import DensityGrid, confidence_band, ensemble_average_stream, \
    trajectory_to_grid
from .discrete import Fixed, Free, Hookean, InverseHookean, Logistic, \
    Piecewise, realization_seed, simulate
from .eql import LearnSetup, StageSpec, assemble_system, prune, \
    sequential_learn, stepwise_select
from .fvm import MechanismSet, PdeProblem, solve
from .presets import Preset, StageParams, get_preset
from .svg import Figure

__all__ = [
    "ExperimentConfig",
    "SweepConfig",
    "load_config",
    "resolve_preset",
    "simulate_stage",
    "run_experiment",
    "run_sweep",
    "dump_preset",
    "default_threads",
    "THREADS_ENV_VAR",
]

THREADS_ENV_VAR = "CELLPDE_THREADS"

# Override keys applied to every stage of the preset.
_STAGE_KEYS = ("n_s", "n_k", "t_M", "M", "tau_q", "tau_v", "tau_t", "h")
_SAMPLE_TRAJECTORIES = 5


def default_threads() -> int:
    """Thread count from the environment, defaulting to 1."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExperimentConfig:
    """A preset name plus overrides and output plumbing."""

    preset: str
    seed: int | None = None
    out: Path | None = None
    threads: int | None = None
    overrides: dict = field(default_factory=dict)

    def resolved_threads(self) -> int:
        return self.threads if self.threads else default_threads()


@dataclass(frozen=True)
class SweepConfig:
    """One-at-a-time parameter sweep around a base experiment."""

    base: ExperimentConfig
    parameter: str
    values: tuple
    replicates: int = 1

    def __post_init__(self):
        if self.parameter not in ("h", "n_s", "t_M", "n_k", "tau_q"):
            raise ValueError(f"unsupported sweep parameter {self.parameter!r}")


def load_config(path) -> tuple[ExperimentConfig, SweepConfig | None]:
    """Parse a flat INI config into experiment and optional sweep."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # stage keys are case-sensitive (M vs m)
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    overrides = {}
    if parser.has_section("overrides"):
        for key, raw in parser.items("overrides"):
            overrides[key] = _parse_scalar(raw)
    config = ExperimentConfig(
        preset=exp.get("preset", ""),
        seed=int(exp["seed"]) if "seed" in exp else None,
        out=Path(exp["out"]) if "out" in exp else None,
        threads=int(exp["threads"]) if "threads" in exp else None,
        overrides=overrides,
    )
    sweep = None
    if parser.has_section("sweep"):
        sw = parser["sweep"]
        values = tuple(
            _parse_scalar(v.strip()) for v in sw["values"].split(",") if v.strip()
        )
        sweep = SweepConfig(
            base=config,
            parameter=sw["parameter"].strip(),
            values=values,
            replicates=int(sw.get("replicates", "1")),
        )
    return config, sweep


def _parse_scalar(raw: str):
    try:
        return int(raw)
    except ValueError:
        try:
            return float(raw)
        except ValueError:
            return raw


def _apply_stage_overrides(stage: StageParams, overrides: dict) -> StageParams:
    kw = {}
    for key in _STAGE_KEYS:
        if key not in overrides:
            continue
        value = overrides[key]
        if key == "h":
            # save spacing; reshapes M with the window endpoints fixed
            kw["M"] = int(round((stage.t_M - stage.t1) / float(value))) + 1
        elif key in ("n_s", "n_k", "M"):
            kw[key] = int(value)
        else:
            kw[key] = float(value)
    return replace(stage, **kw) if kw else stage


def resolve_preset(config: ExperimentConfig) -> Preset:
    """Preset with the config's seed and stage overrides applied."""
    preset = get_preset(config.preset)
    stages = tuple(
        _apply_stage_overrides(s, config.overrides) for s in preset.stages
    )
    out = preset.with_overrides(stages=stages)
    if config.seed is not None:
        out = out.with_overrides(base_seed=config.seed)
    if preset.sequential_prune is not None and (
        "tau_q" in config.overrides or "tau_v" in config.overrides
    ):
        out = out.with_overrides(sequential_prune=replace(
            preset.sequential_prune,
            **{k: float(config.overrides[k]) for k in ("tau_q", "tau_v")
               if k in config.overrides},
        ))
    return out


def _simulate_one(args):
    config, initial, seed_pair = args
    return simulate(config, initial, _seed=realization_seed(*seed_pair))


def simulate_stage(preset: Preset, stage: StageParams, threads: int = 1):
    """Trajectories and the density grid for one stage.

    Returns ``(sample_trajectories, grid)``; the sample holds at most a
    handful of realizations for artifact output, while the grid averages
    the full ensemble.
    """
    config = preset.sim_config(stage)
    initial = preset.initial()
    if stage.n_s is None:
        traj = simulate(config, initial)
        return [traj], trajectory_to_grid(traj)
    if stage.n_s == 1 and preset.proliferation is not None:
        warnings.warn(
            "a single stochastic realization cannot identify the average "
            "dynamics; increase n_s for a usable fit",
            stacklevel=2,
        )
    mean_edge = (
        np.full(stage.M, float(preset.boundary.L))
        if isinstance(preset.boundary, Fixed) else None
    )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(
                _simulate_one,
                [(config, initial, (preset.base_seed, i))
                 for i in range(stage.n_s)],
                chunksize=8,
            ))
        grid = ensemble_average_stream(
            lambda i: trajectories[i], stage.n_s, stage.n_k,
            mean_edge=mean_edge, times=stage.save_times(),
        )
        return trajectories[:_SAMPLE_TRAJECTORIES], grid
    sample = [
        simulate(config, initial, _seed=realization_seed(preset.base_seed, i))
        for i in range(min(_SAMPLE_TRAJECTORIES, stage.n_s))
    ]

    def factory(i):
        if i < len(sample):
            return sample[i]
        return simulate(config, initial,
                        _seed=realization_seed(preset.base_seed, i))

    grid = ensemble_average_stream(
        factory, stage.n_s, stage.n_k,
        mean_edge=mean_edge, times=stage.save_times(),
    )
    return sample, grid


def _learn(preset: Preset, grids: list):
    """Run the preset's stepwise or sequential search on its grids."""
    if len(preset.stages) == 1:
        stage = preset.stages[0]
        grid = grids[0]
        system = prune(assemble_system(grid, preset.libraries),
                       stage.prune_config())
        setup = LearnSetup(
            libraries=preset.libraries,
            geometry=preset.geometry(grid.leading_edge[0]),
            loss_mode=preset.loss_mode,
            mass_constraint=preset.mass_constraint,
            frozen=dict(preset.frozen),
            pde_n=preset.pde_n,
            edge_velocity=stage.edge_velocity,
        )
        result = stepwise_select(system, grid, setup,
                                 initial_active=preset.initial_active)
        return result, setup, system.q_range
    specs = []
    q_lo, q_hi = np.inf, -np.inf
    for stage, grid in zip(preset.stages, grids):
        setup = LearnSetup(
            libraries=preset.libraries,
            geometry=preset.geometry(grid.leading_edge[0]),
            loss_mode=preset.loss_mode,
            frozen=dict(preset.frozen),
            pde_n=preset.pde_n,
            edge_velocity=stage.edge_velocity,
        )
        pc = preset.sequential_prune or stage.prune_config()
        specs.append(StageSpec(stage.mech, grid, pc, setup,
                               initial_active=stage.initial_active))
        lo, hi = grid.density_range()
        q_lo, q_hi = min(q_lo, lo), max(q_hi, hi)
    result = sequential_learn(specs)
    return result, specs[-1].setup, (q_lo, q_hi)


def continuum_reference(preset: Preset) -> MechanismSet | None:
    """Coarse-grained mechanism forms implied by the preset's laws."""
    force = preset.force
    if isinstance(force, Hookean):
        k, s = force.k, force.s

        def D(q):
            return k / preset.eta / np.asarray(q, float) ** 2

        def H(q):
            q = np.asarray(q, float)
            return 2.0 * q ** 2 * (1.0 - s * q)
    elif isinstance(force, InverseHookean):
        def D(q):
            return np.full_like(np.asarray(q, float),
                                force.k / preset.eta)

        def H(q):
            return np.zeros_like(np.asarray(q, float))
    else:  # pragma: no cover - no other laws registered
        return None
    prol = preset.proliferation
    if isinstance(prol, Logistic):
        def R(q):
            q = np.asarray(q, float)
            return prol.beta * q * (1.0 - q / prol.K)
    else:
        def R(q):
            return np.zeros_like(np.asarray(q, float))
    return MechanismSet(D=D, R=R, H=H, E=D)


def _solve_learned(preset: Preset, setup, theta: dict, grid: DensityGrid,
                   t_end: float | None = None):
    """PDE solve with the learned mechanisms on the final stage window."""
    mech = setup.mechanisms(theta)
    times = np.asarray(grid.times, float)
    if t_end is not None and t_end > times[-1]:
        extra = np.linspace(times[-1], t_end,
                            max(2, int(round(t_end - times[-1]))) + 1)[1:]
        times = np.concatenate([times, extra])
    x0 = grid.positions[0]
    q0 = grid.densities[0]
    problem = PdeProblem(
        mechanisms=mech,
        geometry=preset.geometry(grid.leading_edge[0]),
        initial=lambda x: np.interp(x, x0, q0),
        save_times=times,
        n=preset.pde_n,
        edge_velocity=(setup.edge_velocity
                       if setup.edge_velocity != "data" else "analytic"),
    )
    return solve(problem)


def _theta_json(result) -> dict:
    return {m: [float(v) for v in vec] for m, vec in result.theta.items()}


class StageError(RuntimeError):
    """Pipeline failure wrapped with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_experiment(config: ExperimentConfig) -> dict:
    """Full pipeline; returns a manifest of artifacts and results."""
    preset = resolve_preset(config)
    out = Path(config.out) if config.out else Path("runs") / preset.name
    out.mkdir(parents=True, exist_ok=True)
    threads = config.resolved_threads()
    cache = _load_cache(out)
    manifest: dict = {"preset": preset.name, "out": str(out)}

    sim_key = _sim_cache_key(preset)
    density_paths = [out / f"density_{k}.csv" for k in range(len(preset.stages))]
    trajectory_path = out / "trajectories.csv"
    grids: list = []
    reuse = (
        cache.get("simulate", {}).get("key") == sim_key
        and all(p.exists() for p in density_paths)
        and trajectory_path.exists()
    )
    if reuse:
        grids = [_io.read_density_grid(p) for p in density_paths]
    else:
        try:
            for k, stage in enumerate(preset.stages):
                sample, grid = simulate_stage(preset, stage, threads=threads)
                grids.append(grid)
                band = None
                if stage.n_s is not None and len(sample) >= 2:
                    band = confidence_band(sample, stage.n_k, 0.95)
                _io.write_density_grid(density_paths[k], grid, band=band)
                if k == 0:
                    _io.write_trajectories(trajectory_path, sample)
        except Exception as exc:
            raise StageError("simulate", exc) from exc
        cache["simulate"] = {"key": sim_key}
        _store_cache(out, cache)
    manifest["density_csvs"] = [str(p) for p in density_paths]
    manifest["trajectory_csv"] = str(trajectory_path)

    fit_path = out / "fit.csv"
    curves_path = out / "curves.csv"
    learn_key = _io.content_hash(*density_paths) + ":" + sim_key
    cached_fit = cache.get("learn", {})
    if cached_fit.get("key") == learn_key and fit_path.exists():
        theta = {m: np.asarray(v, float)
                 for m, v in cached_fit["theta"].items()}
        active = cached_fit["active"]
        terminal_loss = cached_fit["terminal_loss"]
        result = None
        q_range = tuple(cached_fit["q_range"])
        setup = _setup_for_report(preset, grids)
    else:
        try:
            result, setup, q_range = _learn(preset, grids)
        except Exception as exc:
            raise StageError("learn", exc) from exc
        theta = result.theta
        active = result.active
        terminal_loss = result.terminal_loss
        widths = {m: len(lib) for m, lib in preset.libraries.items()}
        _io.write_fit_table(fit_path, result, widths)
        cache["learn"] = {
            "key": learn_key,
            "theta": _theta_json(result),
            "active": active,
            "terminal_loss": terminal_loss,
            "q_range": list(q_range),
        }
        _store_cache(out, cache)
    mech = setup.mechanisms(theta if result is None else result.theta)
    _io.write_mechanism_curves(curves_path, mech, q_range)
    manifest.update(
        fit_csv=str(fit_path),
        curves_csv=str(curves_path),
        theta={m: list(map(float, v)) for m, v in theta.items()},
        active=active,
        terminal_loss=float(terminal_loss),
    )

    try:
        manifest["figures"] = _report(preset, setup, theta, grids, q_range, out)
    except Exception as exc:
        raise StageError("report", exc) from exc
    return manifest


def _setup_for_report(preset: Preset, grids: list) -> LearnSetup:
    stage = preset.stages[-1]
    return LearnSetup(
        libraries=preset.libraries,
        geometry=preset.geometry(grids[-1].leading_edge[0]),
        loss_mode=preset.loss_mode,
        mass_constraint=preset.mass_constraint,
        frozen=dict(preset.frozen),
        pde_n=preset.pde_n,
        edge_velocity=stage.edge_velocity,
    )


def _report(preset, setup, theta, grids, q_range, out: Path) -> list:
    """Density, leading-edge, and mechanism overlays as SVG files."""
    grid = grids[-1]
    sol = _solve_learned(preset, setup, theta, grid)
    figures = []

    fig = Figure(title=f"{preset.name}: density",
                 xlabel="x", ylabel="q")
    shown = np.unique(np.linspace(0, grid.M - 1, 5).astype(int))
    for k, j in enumerate(shown):
        fig.line(grid.positions[j], grid.densities[j],
                 label=f"data t={grid.times[j]:g}")
        xs = sol.positions(j)
        fig.line(xs, sol.q[j], dashed=True)
    figures.append(str(fig.save(out / "density.svg")))

    fig = Figure(title=f"{preset.name}: leading edge",
                 xlabel="t", ylabel="L")
    fig.line(grid.times, grid.leading_edge, label="data")
    fig.line(sol.times, sol.leading_edge, dashed=True, label="learned PDE")
    figures.append(str(fig.save(out / "leading_edge.svg")))

    mech = setup.mechanisms(theta)
    ref = continuum_reference(preset)
    q = np.linspace(q_range[0], q_range[1], 200)
    for name in ("D", "R", "H", "E"):
        fig = Figure(title=f"{preset.name}: {name}(q)", xlabel="q",
                     ylabel=name)
        fig.line(q, getattr(mech, name)(q), label="learned")
        if ref is not None:
            fig.line(q, getattr(ref, name)(q), dashed=True,
                     label="continuum limit")
        figures.append(str(fig.save(out / f"mechanism_{name}.svg")))
    return figures


def run_sweep(sweep: SweepConfig) -> dict:
    """One-at-a-time sensitivity sweep; CSV plus loss-vs-value SVG."""
    base = sweep.base
    out = Path(base.out) if base.out else Path("runs") / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    points = []
    for value in sweep.values:
        for rep in range(sweep.replicates):
            overrides = dict(base.overrides)
            overrides[sweep.parameter] = value
            seed = (base.seed if base.seed is not None else 1234) + rep
            cfg = ExperimentConfig(
                preset=base.preset, seed=seed,
                out=out / f"{sweep.parameter}_{value}_r{rep}",
                threads=base.threads, overrides=overrides,
            )
            try:
                preset = resolve_preset(cfg)
                grids = [simulate_stage(preset, s,
                                        threads=cfg.resolved_threads())[1]
                         for s in preset.stages]
                result, _, _ = _learn(preset, grids)
                d_active = bool(np.any(result.theta.get("d",
                                                        np.zeros(1)) != 0))
                loss = float(result.terminal_loss)
                rows.append([_fmt_cell(value), rep, repr(loss),
                             str(d_active).lower()])
                points.append((float(value), loss, d_active))
            except Exception as exc:  # record and continue
                rows.append([_fmt_cell(value), rep, "nan",
                             f"error: {exc}"])
    csv_path = _io.write_rows(
        out / "sweep.csv",
        ["parameter_value", "replicate", "terminal_loss", "d_active"],
        rows,
    )
    fig = Figure(title=f"sweep {sweep.parameter}", xlabel=sweep.parameter,
                 ylabel="terminal loss")
    on = [(v, l) for v, l, a in points if a]
    off = [(v, l) for v, l, a in points if not a]
    if on:
        fig.points(*zip(*on), color="#1f77b4", label="D active")
    if off:
        fig.points(*zip(*off), color="#d62728", label="D = 0")
    svg_path = fig.save(out / "sweep.svg")
    return {"csv": str(csv_path), "svg": str(svg_path), "points": points}


def _fmt_cell(v):
    return repr(float(v)) if isinstance(v, float) else v


def dump_preset(name: str) -> str:
    """Resolved preset parameters as flat INI text.

    Per-stage values appear as comma-joined quadruples, matching the
    published parameter-table layout.
    """
    preset = get_preset(name)
    force = preset.force
    lines = [f"[{preset.name}]"]
    lines += [f"k = {force.k:g}", f"s = {force.s:g}",
              f"eta = {preset.eta:g}"]
    prol = preset.proliferation
    if isinstance(prol, Logistic):
        lines += [f"dt_prolif = {preset.dt:g}", f"beta = {prol.beta:g}",
                  f"K = {prol.K:g}"]
    elif isinstance(prol, Piecewise):
        lines += [f"dt_prolif = {preset.dt:g}", f"beta = {prol.beta:g}",
                  f"l_p = {prol.l_p:g}"]

    def quad(getter, fmt="{:g}"):
        vals = [getter(s) for s in preset.stages]
        txt = [fmt.format(v) if v is not None else "-" for v in vals]
        return txt[0] if len(txt) == 1 else ", ".join(txt)

    lines += [
        f"M = {quad(lambda s: s.M)}",
        f"t1 = {quad(lambda s: s.t1)}",
        f"tM = {quad(lambda s: s.t_M)}",
        f"n_s = {quad(lambda s: s.n_s)}",
        f"n_k = {quad(lambda s: s.n_k)}",
        f"tau_q = {quad(lambda s: s.tau_q)}",
        f"tau_v = {quad(lambda s: s.tau_v)}",
        f"tau_t = {quad(lambda s: s.tau_t)}",
    ]
    return "\n".join(lines) + "\n"


def _load_cache(out: Path) -> dict:
    path = out / "cache.json"
    if path.exists():
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return {}
    return {}


def _store_cache(out: Path, cache: dict) -> None:
    (out / "cache.json").write_text(
        json.dumps(cache, indent=1, sort_keys=True), encoding="utf-8"
    )


def _sim_cache_key(preset: Preset) -> str:
    parts = [preset.name, str(preset.base_seed), str(preset.dt),
             str(preset.eta)]
    for s in preset.stages:
        parts.append(
            f"{s.mech}:{s.t1}:{s.t_M}:{s.M}:{s.n_s}:{s.n_k}"
        )
    return "|".join(parts)
