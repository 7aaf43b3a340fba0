"""Command-line front end: simulate, map, test, grid, report.

Configuration comes from a flat dotted-key text file plus overriding
flags; every command is deterministic given identical inputs and seed.
Exit codes: 0 success, 2 config error, 3 MAP stage, 4 region stage,
5 set stage, 6 engine stage.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io as bio
from .credible_region import compute_epsilon_bound
from .engine import BuqoError, run_buqo
from .map_solver import MapProblem, solve_map
from .operators import db8_analysis, masked_dft
from .sim import (
    ExperimentSpec,
    add_noise,
    cartesian_pattern,
    gaussian_random_pattern,
    make_phantom,
    run_grid,
)

STAGE_EXIT_CODES = {"map": 3, "region": 4, "set": 5, "engine": 6}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Typed view of the flat config file plus command-line overrides."""

    command: str = ""
    out: str = "."
    seed: int = 0
    alpha: float = 0.01
    eta: float = 0.03
    mode: str = "pocs"
    rows: int = 64
    cols: int = 64
    phantom: str = "compact"
    pattern_kind: str = "gaussian"
    ratio: float = 1.0
    sigma2: float = 0.01
    levels: int = 3
    grid_ratios: tuple = (0.5, 0.75, 1.0)
    grid_variances: tuple = (0.01, 0.02, 0.03)
    structures: tuple = ()
    measurements: str = ""
    pattern_file: str = ""
    structure_file: str = ""
    outcome_file: str = ""
    epsilon: float = 0.0
    map_tol: float = 1e-6
    map_max_iters: int = 20000
    outer_tol: float = 1e-5
    outer_max_iters: int = 2000
    inner_tol: float = 1e-8
    inner_max_iters: int = 5000


_INT_KEYS = {"seed", "rows", "cols", "levels", "map_max_iters",
             "outer_max_iters", "inner_max_iters"}
_FLOAT_KEYS = {"alpha", "eta", "ratio", "sigma2", "epsilon", "map_tol",
               "outer_tol", "inner_tol"}
_TUPLE_FLOAT_KEYS = {"grid_ratios", "grid_variances"}
_TUPLE_STR_KEYS = {"structures"}


def _coerce(key: str, raw):
    if isinstance(raw, str):
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _TUPLE_FLOAT_KEYS:
            return tuple(float(v) for v in raw.split(",") if v)
        if key in _TUPLE_STR_KEYS:
            return tuple(v.strip() for v in raw.split(",") if v.strip())
    return raw


def config_from_dict(values: dict) -> RunConfig:
    """Build a RunConfig from flat dotted keys (dots map to underscores)."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for key, raw in values.items():
        name = key.replace(".", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(cfg, name, _coerce(name, raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    return cfg


def config_to_dict(cfg: RunConfig, volatile: bool = True) -> dict:
    """Flat dotted-key dict that round-trips through the config file.

    With ``volatile`` False, fields naming run locations (output directory,
    input paths) are dropped, leaving only the experiment parameters; this
    keeps emitted metadata byte-identical across reruns in different
    directories.
    """
    skip = {"command"}
    if not volatile:
        skip |= {"out", "measurements", "pattern_file", "structure_file",
                 "outcome_file"}
    out = {}
    for f in fields(RunConfig):
        if f.name in skip:
            continue
        out[f.name.replace("_", ".")] = getattr(cfg, f.name)
    return out


def load_config(args) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            values = bio.read_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        values = {k.replace(".", "_"): v for k, v in values.items()}
    cfg = config_from_dict(values)
    for flag in ("seed", "alpha", "eta", "mode", "out"):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, flag, value)
    cfg.command = args.command
    if not (0.0 < cfg.alpha < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {cfg.alpha}")
    if cfg.mode not in ("pocs", "fb"):
        raise ConfigError(f"mode must be 'pocs' or 'fb', got {cfg.mode!r}")
    return cfg


class _AtomicWriter:
    """Stage files under temporary names; commit renames them all at once."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.staged: list[tuple[Path, Path]] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        final = self.out_dir / name
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(final.name + ".tmp")
        self.staged.append((tmp, final))
        return tmp

    def commit(self) -> list[Path]:
        for tmp, final in self.staged:
            tmp.replace(final)
        return [final for _, final in self.staged]

    def abort(self) -> None:
        for tmp, _ in self.staged:
            tmp.unlink(missing_ok=True)


def _make_pattern(cfg: RunConfig, seed: int):
    if cfg.pattern_kind == "gaussian":
        return gaussian_random_pattern(cfg.rows, cfg.cols, cfg.ratio, seed)
    if cfg.pattern_kind == "cartesian":
        return cartesian_pattern(cfg.rows, cfg.cols, phase_factor=1.0 / cfg.ratio)
    raise ConfigError(f"unsupported pattern kind {cfg.pattern_kind!r}")


def cmd_simulate(cfg: RunConfig) -> int:
    """Emit phantom, sampling pattern, noisy measurements and a manifest."""
    writer = _AtomicWriter(Path(cfg.out))
    try:
        seeds = np.random.SeedSequence([cfg.seed]).generate_state(2)
        truth = make_phantom(cfg.phantom, cfg.rows, cfg.cols, cfg.seed)
        pattern = _make_pattern(cfg, int(seeds[0]))
        phi = masked_dft(pattern)
        y = add_noise(phi.forward(truth), cfg.sigma2, int(seeds[1]))
        epsilon = compute_epsilon_bound(float(np.sqrt(cfg.sigma2)), phi.out_dim)

        bio.write_image(writer.path("phantom.img"), truth, cfg.rows, cfg.cols)
        bio.write_pattern(writer.path("pattern.freq"), pattern)
        bio.write_measurements(writer.path("measurements.meas"), y)
        meta = config_to_dict(cfg, volatile=False)
        meta["epsilon"] = epsilon
        meta["n.measurements"] = phi.out_dim
        bio.write_config(writer.path("metadata.txt"), meta)
        emitted = writer.commit()
    except Exception:
        writer.abort()
        raise
    bio.write_manifest(Path(cfg.out) / "manifest.txt", emitted, cfg.seed)
    print(f"simulate: wrote {len(emitted) + 1} files to {cfg.out}")
    return 0


def _load_problem(cfg: RunConfig) -> tuple[MapProblem, int, int]:
    if not cfg.measurements or not cfg.pattern_file:
        raise ConfigError("map/test need 'measurements' and 'pattern.file' paths")
    y = bio.read_measurements(cfg.measurements)
    pattern = bio.read_pattern(cfg.pattern_file)
    phi = masked_dft(pattern)
    epsilon = cfg.epsilon
    if epsilon <= 0.0:
        epsilon = compute_epsilon_bound(float(np.sqrt(cfg.sigma2)), phi.out_dim)
    psi = db8_analysis(pattern.rows, pattern.cols, cfg.levels)
    return MapProblem(phi, psi, y, epsilon), pattern.rows, pattern.cols


def cmd_map(cfg: RunConfig) -> int:
    """Compute and write the MAP estimate for stored measurements."""
    problem, rows, cols = _load_problem(cfg)
    x_map, diag = solve_map(problem, tol=cfg.map_tol,
                            max_iters=cfg.map_max_iters)
    if not diag.converged:
        raise BuqoError("map", f"no convergence in {diag.iterations} iterations")
    writer = _AtomicWriter(Path(cfg.out))
    try:
        bio.write_image(writer.path("x_map.img"), x_map, rows, cols)
        bio.write_config(writer.path("map_diagnostics.txt"), {
            "iterations": diag.iterations,
            "feasibility.gap": diag.feasibility_gap,
            "objective": float(diag.objective_series[-1]),
        })
        emitted = writer.commit()
    except Exception:
        writer.abort()
        raise
    print(f"map: converged in {diag.iterations} iterations; "
          f"wrote {len(emitted)} files to {cfg.out}")
    return 0


def cmd_test(cfg: RunConfig) -> int:
    """Run the four-stage hypothesis test and write the outcome files."""
    if not cfg.structure_file:
        raise ConfigError("test needs a 'structure.file' path")
    problem, rows, cols = _load_problem(cfg)
    structure = bio.read_structure_spec(cfg.structure_file)
    outcome = run_buqo(
        problem, structure, alpha=cfg.alpha, mode=cfg.mode, eta=cfg.eta,
        rows=rows, cols=cols, map_tol=cfg.map_tol,
        map_max_iters=cfg.map_max_iters, outer_tol=cfg.outer_tol,
        outer_max_iters=cfg.outer_max_iters, inner_tol=cfg.inner_tol,
        inner_max_iters=cfg.inner_max_iters,
    )
    writer = _AtomicWriter(Path(cfg.out))
    try:
        bio.write_image(writer.path("x_region.img"), outcome.x_region, rows, cols)
        bio.write_image(writer.path("x_set.img"), outcome.x_set, rows, cols)
        bio.write_outcome(writer.path("outcome.txt"), outcome)
        writer.commit()
    except Exception:
        writer.abort()
        raise
    print(outcome.narrative)
    return 0


def cmd_grid(cfg: RunConfig) -> int:
    """Run the sampling-ratio x noise-variance grid and write the table."""
    if not cfg.structures:
        raise ConfigError("grid needs a 'structures' list of spec files")
    structures = [bio.read_structure_spec(p) for p in cfg.structures]
    spec = ExperimentSpec(
        rows=cfg.rows, cols=cfg.cols, phantom=cfg.phantom,
        pattern_kind=cfg.pattern_kind, sampling_ratios=cfg.grid_ratios,
        noise_variances=cfg.grid_variances, structures=structures,
        alpha=cfg.alpha, eta=cfg.eta, mode=cfg.mode, seed=cfg.seed,
        wavelet_levels=cfg.levels, map_tol=cfg.map_tol,
        map_max_iters=cfg.map_max_iters, outer_tol=cfg.outer_tol,
        outer_max_iters=cfg.outer_max_iters, inner_tol=cfg.inner_tol,
        inner_max_iters=cfg.inner_max_iters,
    )
    report = run_grid(spec)
    writer = _AtomicWriter(Path(cfg.out))
    try:
        with open(writer.path("grid_table.tsv"), "w", encoding="ascii") as fh:
            fh.write(report.table())
        for cell in report.cells:
            if cell.outcome is None:
                continue
            tag = f"{cell.ratio:g}_{cell.sigma2:g}_{cell.structure}"
            bio.write_image(writer.path(f"cells/{tag}_region.img"),
                            cell.outcome.x_region, cfg.rows, cfg.cols)
            bio.write_image(writer.path(f"cells/{tag}_set.img"),
                            cell.outcome.x_set, cfg.rows, cfg.cols)
        emitted = writer.commit()
    except Exception:
        writer.abort()
        raise
    # wall-clock log kept outside the deterministic byte-identity contract
    with open(Path(cfg.out) / "grid_timing.log", "w", encoding="ascii") as fh:
        fh.write(report.timing())
    bio.write_manifest(Path(cfg.out) / "manifest.txt", emitted, cfg.seed)
    failures = [c for c in report.cells if c.error is not None]
    print(report.table(), end="")
    print(f"grid: {len(report.cells) - len(failures)} cells ok, "
          f"{len(failures)} failed; outputs in {cfg.out}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    """Render a stored outcome file and re-emit its normalized form."""
    if not cfg.outcome_file:
        raise ConfigError("report needs an 'outcome.file' path")
    values = bio.read_outcome(cfg.outcome_file)
    rho = values["rho_alpha"]
    print(f"decision: {values['decision']}")
    print(f"rho_alpha = {100.0 * rho:.2f}% (eta = {100.0 * values['eta']:.2f}%)")
    print(f"distance = {values['distance']:.6e} after {values['iterations']} "
          f"iterations ({values['stop_reason']})")
    out = Path(cfg.out) / "report_outcome.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="ascii") as fh:
        for key in ("rho_alpha", "distance"):
            fh.write(f"{key} = {values[key]!r}\n")
        fh.write(f"decision = {values['decision']}\n")
        fh.write(f"alpha = {values['alpha']!r}\n")
        fh.write(f"eta = {values['eta']!r}\n")
        fh.write(f"iterations = {values['iterations']}\n")
        fh.write(f"stop_reason = {values['stop_reason']}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buqo",
        description="Bayesian uncertainty quantification for image structures",
    )
    parser.add_argument("command",
                        choices=["simulate", "map", "test", "grid", "report"])
    parser.add_argument("--config", type=str, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--mode", choices=["pocs", "fb"], default=None)
    parser.add_argument("--out", type=str, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handlers = {
        "simulate": cmd_simulate,
        "map": cmd_map,
        "test": cmd_test,
        "grid": cmd_grid,
        "report": cmd_report,
    }
    try:
        return handlers[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BuqoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STAGE_EXIT_CODES.get(exc.stage, 6)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
