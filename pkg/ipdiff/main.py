"""
Command line entry point - configuration, subcommands and output files only.
"""

import argparse
import json
import logging
import os
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from .bessel_side import beta_from_bessel, crosscheck_constructions, dump_excursions_ndjson, sample_bessel_path
from .config import DEFAULT_ALPHA
from .execution_engine import replicate_streams, run_replicates
from .laws import law_registry
from .models import ConfigError, HorizonExhausted, ParameterDomainError, RunConfig
from .report_manager import ReportManager
from .rng import RngStream
from .scaffolding import default_y_calib, dump_scaffolding_ndjson, type0_scaffolding, type1_scaffolding
from .skewer import IntervalPartition, level_header, level_rows, skewer_levels, write_level_csv
from .suite_manager import SuiteContext, suite_manager
from .utils import format_levels, log_detail, log_section, provenance, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

# Environment overrides sit between the built-in defaults and the config file
ENV_KEYS = {"IPDIFF_OUT": ("out", str), "IPDIFF_THREADS": ("threads", int), "IPDIFF_SEED": ("master_seed", int)}

# argparse destination -> RunConfig field
FLAG_KEYS = {
    "alpha": "alpha", "d": "d", "eps": "eps", "dt": "dt", "levels": "levels", "replicates": "replicates",
    "seed": "master_seed", "horizon": "horizon", "out": "out", "threads": "threads", "suite": "suite",
    "scale": "scale", "mode": "mode", "initial_blocks": "initial_blocks", "u": "u", "y_calib": "y_calib",
    "drop_constant": "drop_constant", "dump_paths": "dump_paths",
}

CROSSCHECK_STREAM = 1  # stream index of the crosscheck command; replicates of simulate use 0..n-1


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipdiff", description="Interval-partition diffusion lab")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file; flags override it")
    common.add_argument("--alpha", type=float, help="stable index of the scaffolding is 1 + alpha")
    common.add_argument("--d", type=float, help="Bessel dimension, alpha = 1 - d")
    common.add_argument("--eps", type=float, help="small-jump truncation")
    common.add_argument("--dt", type=float, help="spindle grid step")
    common.add_argument("--levels", type=_float_list, help="comma separated levels, e.g. 0.25,0.5,1")
    common.add_argument("--replicates", type=int)
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--horizon", type=float, help="initial simulation horizon")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker processes")

    sim = sub.add_parser("simulate", parents=[common], help="simulate skewer processes and dump per-level CSV")
    sim.add_argument("--mode", choices=["type1", "type0", "bessel"])
    sim.add_argument("--initial-blocks", dest="initial_blocks", type=_float_list,
                     help="initial partition of a type-1 run, e.g. 1.0,0.5")
    sim.add_argument("--u", type=float, help="type-0 start level, or (R, H) local time in bessel mode")
    sim.add_argument("--y-calib", dest="y_calib", type=float)
    sim.add_argument("--dump-paths", dest="dump_paths", action="store_const", const=True,
                     help="write every scaffolding or (R, H) path as NDJSON")

    ver = sub.add_parser("verify", parents=[common], help="run an acceptance suite")
    ver.add_argument("--suite", help="trivial, full, negative-controls or a single criterion")
    ver.add_argument("--scale", type=float, help="multiplier on every replicate count")

    cc = sub.add_parser("crosscheck", parents=[common], help="compare the scaffolding and Bessel constructions")
    cc.add_argument("--u", type=float, help="(R, H) local time at (0, 0)")
    cc.add_argument("--y-calib", dest="y_calib", type=float)
    cc.add_argument("--drop-constant", dest="drop_constant", action="store_const", const=True,
                    help="stop both sides at the same local time (expected to fail)")

    sub.add_parser("laws", parents=[common], help="write the closed-form law registry")
    return parser


def load_config(args: argparse.Namespace, environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """Defaults, then environment, then the JSON config file, then flags."""
    environ = os.environ if environ is None else environ
    merged: Dict[str, Any] = {}
    for var, (key, cast) in ENV_KEYS.items():
        if environ.get(var):
            try:
                merged[key] = cast(environ[var])
            except ValueError as e:
                raise ConfigError(f"{var}={environ[var]!r} is not a valid {cast.__name__}") from e

    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        loaded.pop("config_hash", None)
        merged.update(loaded)

    flags = {field: getattr(args, dest) for dest, field in FLAG_KEYS.items() if getattr(args, dest, None) is not None}
    # a flag for one parametrization replaces the other from the file
    if "alpha" in flags and "d" not in flags:
        merged.pop("d", None)
    if "d" in flags and "alpha" not in flags:
        merged.pop("alpha", None)
    merged.update(flags)
    merged["command"] = args.command
    if merged.get("alpha") is None and merged.get("d") is None:
        merged["alpha"] = DEFAULT_ALPHA
    return RunConfig(**merged)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg: RunConfig) -> Dict[str, Any]:
    return provenance(cfg.config_hash(), cfg.master_seed)


def write_config(cfg: RunConfig, out: Path) -> Path:
    return write_json(out / "config.json", {**cfg.model_dump(mode="json"), "config_hash": cfg.config_hash()})


def _simulate_replicate(stream: RngStream, horizon: float, mode: str, alpha: float, eps: float,
                        dt: Optional[float], levels: Sequence[float], initial_blocks: Sequence[float], u: float,
                        y_calib: float, keep_path: bool):
    if mode == "bessel":
        path = sample_bessel_path(stream, alpha, eps, u, y_calib=y_calib, horizon=horizon)
        return [beta_from_bessel(path, float(y)) for y in levels], (path if keep_path else None)
    spindles = "grid" if keep_path else "levels"
    if mode == "type0":
        X = type0_scaffolding(stream, u, levels, alpha, eps, dt=dt, horizon=horizon, spindles=spindles)
    else:
        X = type1_scaffolding(stream, IntervalPartition.from_blocks(initial_blocks), levels, alpha, eps, dt=dt,
                              horizon=horizon, spindles=spindles)
    if X is None:
        return [IntervalPartition.empty() for _ in levels], None
    return skewer_levels(X, levels), (X if keep_path else None)


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    meta = _meta(cfg)
    alpha = cfg.params.alpha
    if cfg.mode == "type0" and cfg.levels[-1] > cfg.u:
        raise ParameterDomainError(f"type-0 levels must lie in [0, u={cfg.u}]")
    log_section(f"🌀 SIMULATE {cfg.mode}: alpha={alpha:g}, eps={cfg.eps:g}, levels {format_levels(cfg.levels)}")
    fn = partial(_simulate_replicate, mode=cfg.mode, alpha=alpha, eps=cfg.eps, dt=cfg.dt, levels=cfg.levels,
                 initial_blocks=cfg.initial_blocks, u=cfg.u,
                 y_calib=cfg.y_calib or default_y_calib(cfg.levels), keep_path=cfg.dump_paths)
    results = run_replicates(fn, replicate_streams(cfg.master_seed, cfg.replicates), cfg.threads, cfg.horizon,
                             label="simulate")
    write_config(cfg, out)
    rows = []
    for r, (parts, path) in enumerate(results):
        rows.extend(level_rows(cfg.levels, parts, replicate=r))
        write_level_csv(out / f"levels_r{r:05d}.csv", cfg.levels, parts, meta=meta)
        if path is None:
            continue
        dump_file = out / f"paths_r{r:05d}.ndjson"
        if cfg.mode == "bessel":
            dump_excursions_ndjson(path, dump_file, params=meta)
        else:
            dump_scaffolding_ndjson(path, dump_file, params=meta)
    write_csv(out / "levels.csv", level_header(with_replicate=True), rows, meta=meta)
    for j, y in enumerate(cfg.levels):
        masses = [parts[j].total_mass for parts, _ in results]
        log_detail("📏", f"level {y:g}", f"mean total mass {sum(masses) / len(masses):.6g}")
    log_detail("💾", "Wrote", str(out / "levels.csv"))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    try:
        suite = suite_manager.resolve(cfg.suite)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = _out_dir(cfg)
    ctx = SuiteContext(alpha=cfg.params.alpha, eps=cfg.eps, levels=list(cfg.levels), master_seed=cfg.master_seed,
                       threads=cfg.threads, horizon=cfg.horizon, scale=cfg.scale, u=cfg.u)
    reports = ReportManager()
    reports.add_reports(suite_manager.run(suite, ctx))
    write_config(cfg, out)
    reports.write_json(out / "report.json", _meta(cfg))
    reports.write_summary_csv(out / "summary.csv", _meta(cfg))
    reports.write_timings_csv(out / "timings.csv")
    log_section(f"📋 {len(reports.get_all_reports()) - reports.count_failed()} passed, "
                f"{reports.count_failed()} failed")
    return reports.exit_code()


def cmd_crosscheck(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    report = crosscheck_constructions(RngStream(cfg.master_seed, CROSSCHECK_STREAM), cfg.params.alpha, cfg.u,
                                      cfg.levels, cfg.eps, cfg.replicates, threads=cfg.threads,
                                      horizon=cfg.horizon, drop_constant=cfg.drop_constant, y_calib=cfg.y_calib)
    reports = ReportManager()
    reports.add_report(report)
    write_config(cfg, out)
    reports.write_json(out / "crosscheck.json", _meta(cfg))
    reports.write_timings_csv(out / "timings.csv")
    return reports.exit_code()


def cmd_laws(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    write_config(cfg, out)
    write_json(out / "laws.json", {"laws": json.loads(law_registry.to_json()), **_meta(cfg)})
    log_detail("📚", f"{len(law_registry.names())} laws", ", ".join(law_registry.names()))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "crosscheck": cmd_crosscheck, "laws": cmd_laws}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("IPDIFF_LOG_LEVEL", "INFO").upper(),
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    )
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK

    try:
        cfg = load_config(args)
    except (ValidationError, ConfigError) as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_CONFIG

    try:
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, ParameterDomainError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except HorizonExhausted as e:
        logger.error(f"❌ Simulation did not finish: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
