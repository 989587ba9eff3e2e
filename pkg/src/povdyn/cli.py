"""Command-line pipeline: ingest, calibrate, replay, classify, export.

Subcommands: calibrate, simulate, metrics, pipeline, interpolate. A flat
``key = value`` config file mirrors PipelineConfig (see README for the key
list); ``--seed/--n-agents/--mu/--sigma/--out/--threads`` override it.
Exit codes: 0 ok, 2 config, 3 data, 4 calibration divergence (strict
mode), 5 output I/O.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (CalibrationConfig, CalibrationResult, fit_series,
                        replay)
from .dataio import (RunManifest, read_hcr_file, read_panel, read_series,
                     write_json, write_manifest, write_panel, write_paths_csv,
                     write_pooled_csv, write_report_csv, write_series)
from .errors import (CalibrationDivergenceError, ConfigError, DataError,
                     OutputError, PovdynError)
from .poverty import (IncomePanel, bpl_gini_series, classify,
                      persistence_report, pooled_metrics, sample_paths,
                      transition_report)
from .rgbm import ModelParams, init_lognormal
from .series import AnnualSeries, interpolate_missing, missing_year_blocks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5

_DEFAULT_PERIODS = ((1962, 1971), (1972, 1981), (1982, 1991),
                    (1992, 2001), (2002, 2006))


@dataclass
class PipelineConfig:
    """Everything one run needs, resolvable from file + CLI overrides."""

    seed: int = 0
    model: ModelParams = field(default_factory=ModelParams)
    calib: CalibrationConfig = field(default_factory=CalibrationConfig)
    inequality_csv: Path | None = None
    rates_csv: Path | None = None
    panel_dir: Path | None = None
    hcr_files: dict[str, Path] = field(default_factory=dict)
    pool_periods: tuple[tuple[int, int], ...] = _DEFAULT_PERIODS
    pooled_method: str = "counts"
    tp_max: int = 10
    paths_below: int = 20
    paths_above: int = 20
    panel_format: str = "npy"
    out_dir: Path = Path("out")
    threads: int = 1
    strict: bool = False
    init_s50: float | None = None
    start_year: int | None = None

    def flat(self) -> dict:
        """Flat, JSON-safe view for the run manifest."""
        return {
            "seed": self.seed,
            "n_agents": self.model.n_agents, "mu": self.model.mu,
            "sigma": self.model.sigma, "dt": self.model.dt,
            "tau_min": self.calib.tau_min, "tau_max": self.calib.tau_max,
            "tolerance": self.calib.tolerance,
            "max_iterations": self.calib.max_iterations,
            "smoothing_window": self.calib.smoothing_window,
            "forward_rate": self.calib.forward_rate,
            "inequality_csv": _opt_str(self.inequality_csv),
            "rates_csv": _opt_str(self.rates_csv),
            "panel_dir": _opt_str(self.panel_dir),
            "hcr_files": {k: str(v) for k, v in sorted(self.hcr_files.items())},
            "pool_periods": [f"{a}-{b}" for a, b in self.pool_periods],
            "pooled_method": self.pooled_method,
            "tp_max": self.tp_max,
            "paths_below": self.paths_below, "paths_above": self.paths_above,
            "panel_format": self.panel_format,
            "init_s50": self.init_s50, "start_year": self.start_year,
        }


def _opt_str(p) -> str | None:
    return None if p is None else str(p)


def _parse_kv_file(path: Path) -> dict[str, str]:
    kv: dict[str, str] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    return kv


def _parse_periods(text: str) -> tuple[tuple[int, int], ...]:
    periods = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = part.split("-")
            periods.append((int(a), int(b)))
        except ValueError:
            raise ConfigError(
                f"bad period {part!r}; expected e.g. 1962-1971") from None
    if not periods:
        raise ConfigError("pool_periods is empty")
    return tuple(periods)


def _typed(kv: dict[str, str], key: str, cast, default):
    if key not in kv:
        return default
    try:
        return cast(kv[key])
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse "
                          f"{kv[key]!r}") from None


def build_config(args: argparse.Namespace) -> PipelineConfig:
    kv = _parse_kv_file(Path(args.config)) if args.config else {}
    known = {
        "seed", "n_agents", "mu", "sigma", "dt", "tau_min", "tau_max",
        "tolerance", "max_iterations", "smoothing_window", "forward_rate",
        "inequality_csv", "rates_csv", "panel_dir", "pool_periods",
        "pooled_method", "tp_max", "paths_below", "paths_above",
        "panel_format", "out_dir", "threads", "init_s50", "start_year",
    }
    for key in kv:
        if key not in known and not key.startswith("hcr_"):
            raise ConfigError(f"unknown config key {key!r}")

    try:
        model = ModelParams(
            mu=_typed(kv, "mu", float, ModelParams.mu),
            sigma=_typed(kv, "sigma", float, ModelParams.sigma),
            dt=_typed(kv, "dt", float, ModelParams.dt),
            n_agents=_typed(kv, "n_agents", int, ModelParams.n_agents),
        )
        calib = CalibrationConfig(
            tau_min=_typed(kv, "tau_min", float, CalibrationConfig.tau_min),
            tau_max=_typed(kv, "tau_max", float, CalibrationConfig.tau_max),
            tolerance=_typed(kv, "tolerance", float,
                             CalibrationConfig.tolerance),
            max_iterations=_typed(kv, "max_iterations", int,
                                  CalibrationConfig.max_iterations),
            smoothing_window=_typed(kv, "smoothing_window", int,
                                    CalibrationConfig.smoothing_window),
            forward_rate=kv.get("forward_rate",
                                CalibrationConfig.forward_rate),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    hcr_files = {key[len("hcr_"):]: Path(val) for key, val in kv.items()
                 if key.startswith("hcr_")}

    cfg = PipelineConfig(
        seed=_typed(kv, "seed", int, 0),
        model=model,
        calib=calib,
        inequality_csv=_optional_path(kv.get("inequality_csv")),
        rates_csv=_optional_path(kv.get("rates_csv")),
        panel_dir=_optional_path(kv.get("panel_dir")),
        hcr_files=hcr_files,
        pool_periods=(_parse_periods(kv["pool_periods"])
                      if "pool_periods" in kv else _DEFAULT_PERIODS),
        pooled_method=kv.get("pooled_method", "counts"),
        tp_max=_typed(kv, "tp_max", int, 10),
        paths_below=_typed(kv, "paths_below", int, 20),
        paths_above=_typed(kv, "paths_above", int, 20),
        panel_format=kv.get("panel_format", "npy"),
        out_dir=Path(kv.get("out_dir", "out")),
        threads=_typed(kv, "threads", int,
                       int(os.environ.get("POVDYN_THREADS", "1"))),
        init_s50=_typed(kv, "init_s50", float, None),
        start_year=_typed(kv, "start_year", int, None),
    )

    # command-line overrides
    if args.seed is not None:
        cfg.seed = args.seed
    if args.n_agents is not None:
        cfg.model = ModelParams(mu=cfg.model.mu, sigma=cfg.model.sigma,
                                dt=cfg.model.dt, n_agents=args.n_agents)
    if args.mu is not None:
        cfg.model = ModelParams(mu=args.mu, sigma=cfg.model.sigma,
                                dt=cfg.model.dt, n_agents=cfg.model.n_agents)
    if args.sigma is not None:
        try:
            cfg.model = ModelParams(mu=cfg.model.mu, sigma=args.sigma,
                                    dt=cfg.model.dt,
                                    n_agents=cfg.model.n_agents)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.strict = bool(getattr(args, "strict", False))

    if cfg.pooled_method not in ("counts", "mean"):
        raise ConfigError("pooled_method must be 'counts' or 'mean'")
    if cfg.panel_format not in ("npy", "csv"):
        raise ConfigError("panel_format must be 'npy' or 'csv'")
    if cfg.tp_max < 1:
        raise ConfigError("tp_max must be >= 1")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def _optional_path(value: str | None) -> Path | None:
    return Path(value) if value else None


# ---------------------------------------------------------------------------
# shared stages

def _initial_population(cfg: PipelineConfig):
    """Initial population plus the fit targets.

    The first inequality row seeds the lognormal start (one year before
    the first target); the remaining rows are the fit targets.
    """
    if cfg.inequality_csv is not None:
        series = read_series(cfg.inequality_csv, value_col="s50")
        if len(series) < 2:
            raise DataError(
                f"{cfg.inequality_csv}: need at least two rows "
                "(initialization year plus one target year)"
            )
        start_year = series.first_year
        init_s50 = float(series.values[0])
        targets = AnnualSeries(series.years[1:], series.values[1:])
    elif cfg.init_s50 is not None and cfg.start_year is not None:
        init_s50, start_year, targets = cfg.init_s50, cfg.start_year, None
    else:
        raise ConfigError(
            "need inequality_csv, or init_s50 together with start_year")
    pop = init_lognormal(cfg.model, init_s50, cfg.seed, year=start_year)
    return pop, targets


def _make_manifest(cfg: PipelineConfig, inputs) -> RunManifest:
    existing = [p for p in inputs if p is not None]
    return RunManifest.create(cfg.seed, cfg.flat(), existing, __version__)


def _zero_crossings(series: AnnualSeries) -> list[int]:
    sign = np.sign(series.values)
    flips = np.flatnonzero(np.diff(np.where(sign == 0, 1, sign)) != 0)
    return [int(series.years[i + 1]) for i in flips]


def _flag_share_range(name: str, series: AnnualSeries) -> None:
    # bottom shares can leave [0, 1] when incomes go negative
    odd = [int(y) for y, v in series if not 0.0 <= v <= 1.0]
    if odd:
        print(f"  note: {name} outside [0, 1] in years {odd} "
              "(negative incomes present)")


def _run_calibration(cfg: PipelineConfig, manifest: RunManifest
                     ) -> CalibrationResult:
    pop, targets = _initial_population(cfg)
    if targets is None:
        raise ConfigError("calibration needs inequality_csv")
    result = fit_series(pop, targets, cfg.model, cfg.calib, cfg.seed)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_series(result.tau, out / "tau.csv", manifest_digest=manifest.digest)
    write_series(result.tau_effective, out / "tau_effective.csv",
                 manifest_digest=manifest.digest)
    write_series(result.residuals, out / "residuals.csv",
                 manifest_digest=manifest.digest)
    write_series(result.replay_shares, out / "replay_shares.csv",
                 manifest_digest=manifest.digest)
    write_series(result.fitted_shares, out / "fitted_shares.csv",
                 manifest_digest=manifest.digest)

    print(f"calibrated {len(result.tau)} years "
          f"({result.tau.first_year}-{result.tau.last_year})")
    print(f"  max residual: {float(result.residuals.values.max()):.3g}")
    _flag_share_range("replay shares", result.replay_shares)
    crossings = _zero_crossings(result.tau_effective)
    if crossings:
        print("  effective rate changes sign in: "
              + ", ".join(map(str, crossings)))
    if result.divergent_years:
        print(f"  divergence warnings (residual > "
              f"{cfg.calib.divergence_threshold:g}): "
              + ", ".join(map(str, result.divergent_years)))
        if cfg.strict:
            raise CalibrationDivergenceError(
                f"targets unreachable in years {result.divergent_years}")
    return result


def _run_simulation(cfg: PipelineConfig, manifest: RunManifest,
                    rates: AnnualSeries) -> IncomePanel:
    pop, _ = _initial_population(cfg)
    shares, panel = replay(pop, rates, cfg.model, cfg.seed,
                           threads=cfg.threads, collect_panel=True)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_series(shares, out / "shares.csv", manifest_digest=manifest.digest)
    write_panel(panel, out, fmt=cfg.panel_format)
    print(f"simulated panel: {panel.n_agents} agents, "
          f"{panel.first_year}-{panel.last_year}")
    _flag_share_range("shares", shares)
    return panel


def _metric_rows(line, trans, persist, bpl):
    rows = []
    for year, z in zip(map(int, line.years), line.z):
        rows.append((year, "poverty_line", None, float(z)))
    for i, year in enumerate(map(int, trans.years)):
        rows.append((year, "p_in", None, float(trans.p_in[i])))
        rows.append((year, "p_out", None, float(trans.p_out[i])))
        rows.append((year, "p_tx", None, float(trans.p_tx[i])))
        rows.append((year, "p_in_at_risk", None,
                     float(trans.p_in_at_risk[i])))
    for t_p in sorted(persist.by_tp):
        stic, esc = persist.by_tp[t_p]
        for i, year in enumerate(map(int, persist.years)):
            rows.append((year, "p_stic", t_p, float(stic[i])))
            rows.append((year, "p_esc", t_p, float(esc[i])))
    for i, year in enumerate(map(int, bpl.years)):
        rows.append((year, "bpl_gini", None, float(bpl.gini[i])))
        rows.append((year, "bpl_negatives_floored", None,
                     float(bpl.negatives_floored[i])))
    return rows


def _run_metrics(cfg: PipelineConfig, manifest: RunManifest,
                 panel: IncomePanel) -> dict:
    if not cfg.hcr_files:
        raise ConfigError("no poverty-line definitions (hcr_<name> keys)")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"manifest_digest": manifest.digest,
                     "panel_fingerprint": panel.fingerprint,
                     "definitions": {}, "failed": {}}
    for name in sorted(cfg.hcr_files):
        try:
            hcr, file_name = read_hcr_file(cfg.hcr_files[name])
            line, pp = classify(panel, hcr, name=file_name or name)
            trans = transition_report(pp)
            persist = persistence_report(pp, range(1, cfg.tp_max + 1))
            bpl = bpl_gini_series(panel, pp)
            # cap path requests at the population size (tiny smoke runs)
            k_below = min(cfg.paths_below, panel.n_agents // 2)
            k_above = min(cfg.paths_above, panel.n_agents - k_below)
            bundle = sample_paths(panel, line, k_above, k_below, cfg.seed)

            write_report_csv(_metric_rows(line, trans, persist, bpl),
                             out / f"metrics_{name}.csv",
                             manifest_digest=manifest.digest)
            pooled_rows = []
            pooled_json = {}
            for first, last in cfg.pool_periods:
                key = f"{first}-{last}"
                pooled_json[key] = {}
                for t_p in range(1, cfg.tp_max + 1):
                    pm = pooled_metrics(pp, (first, last), t_p,
                                        method=cfg.pooled_method)
                    if t_p == 1:
                        for stat in ("p_in", "p_out", "p_tx"):
                            val = getattr(pm, stat)
                            pooled_rows.append((first, last, stat, None, val))
                            pooled_json[key][stat] = _json_safe(val)
                    pooled_rows.append((first, last, "p_stic", t_p, pm.p_stic))
                    pooled_rows.append((first, last, "p_esc", t_p, pm.p_esc))
                    pooled_json[key][f"p_stic_{t_p}"] = _json_safe(pm.p_stic)
                    pooled_json[key][f"p_esc_{t_p}"] = _json_safe(pm.p_esc)
            write_pooled_csv(pooled_rows, out / f"pooled_{name}.csv",
                             manifest_digest=manifest.digest)
            write_paths_csv(bundle, out / f"paths_{name}.csv",
                            manifest_digest=manifest.digest)
            summary["definitions"][name] = {
                "years": f"{int(pp.years[0])}-{int(pp.years[-1])}",
                "pooled": pooled_json,
                "negatives_floored_years": [
                    int(y) for y, f in zip(bpl.years, bpl.negatives_floored)
                    if f],
                "paths_truncated": bundle.truncated,
            }
            print(f"metrics[{name}]: years {int(pp.years[0])}-"
                  f"{int(pp.years[-1])}, {cfg.tp_max} spell thresholds, "
                  f"{len(cfg.pool_periods)} pooled periods")
        except (DataError, PovdynError) as exc:
            summary["failed"][name] = str(exc)
            print(f"metrics[{name}] failed: {exc}", file=sys.stderr)
    write_json(summary, out / "summary.json")
    if cfg.hcr_files and not summary["definitions"]:
        raise DataError("all poverty-line definitions failed")
    return summary


def _json_safe(x: float):
    import math
    return None if (isinstance(x, float) and not math.isfinite(x)) else x


# ---------------------------------------------------------------------------
# subcommands

def cmd_interpolate(args) -> int:
    series = read_series(args.input, year_col=args.year_col,
                         value_col=args.value_col)
    blocks = missing_year_blocks(series)
    filled = interpolate_missing(series)
    n_filled = len(filled) - len(series)
    write_series(filled, args.output, value_col=args.value_col)
    print(f"filled {n_filled} years in {len(blocks)} gaps -> {args.output}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = build_config(args)
    manifest = _make_manifest(cfg, [cfg.inequality_csv])
    _run_calibration(cfg, manifest)
    write_manifest(manifest, cfg.out_dir / "manifest.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    if cfg.rates_csv is None:
        raise ConfigError("simulate needs rates_csv")
    rates = read_series(cfg.rates_csv)
    manifest = _make_manifest(cfg, [cfg.rates_csv, cfg.inequality_csv])
    _run_simulation(cfg, manifest, rates)
    write_manifest(manifest, cfg.out_dir / "manifest.json")
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg = build_config(args)
    panel_dir = cfg.panel_dir or cfg.out_dir
    panel = read_panel(panel_dir)
    manifest = _make_manifest(cfg, cfg.hcr_files.values())
    _run_metrics(cfg, manifest, panel)
    write_manifest(manifest, cfg.out_dir / "manifest.json")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = build_config(args)
    inputs = [cfg.inequality_csv, *cfg.hcr_files.values()]
    manifest = _make_manifest(cfg, inputs)
    stage = "calibrate"
    try:
        result = _run_calibration(cfg, manifest)
        stage = "simulate"
        pop, _ = _initial_population(cfg)
        _, panel = replay(pop, result.tau_effective, cfg.model, cfg.seed,
                          threads=cfg.threads, collect_panel=True)
        write_panel(panel, cfg.out_dir, fmt=cfg.panel_format)
        stage = "metrics"
        _run_metrics(cfg, manifest, panel)
    except PovdynError:
        print(f"pipeline aborted in stage '{stage}'", file=sys.stderr)
        raise
    write_manifest(manifest, cfg.out_dir / "manifest.json")
    print(f"pipeline complete -> {cfg.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--n-agents", type=int, default=None)
    parser.add_argument("--mu", type=float, default=None)
    parser.add_argument("--sigma", type=float, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (never changes results); "
                             "default from POVDYN_THREADS")
    parser.add_argument("--strict", action="store_true",
                        help="treat calibration divergence as fatal")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="povdyn",
        description="Income-distribution simulation and poverty dynamics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit reallocation rates to an "
                                         "inequality series")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="propagate a panel under a given "
                                        "rate series")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="poverty metrics from a stored panel")
    _add_common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("pipeline", help="calibrate, simulate, and compute "
                                        "metrics in one run")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("interpolate", help="fill interior gaps in a "
                                           "year-indexed CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--year-col", default="year")
    p.add_argument("--value-col", default="value")
    p.set_defaults(func=cmd_interpolate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationDivergenceError as exc:
        print(f"calibration divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PovdynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
