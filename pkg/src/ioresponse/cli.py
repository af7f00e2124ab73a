"""Command-line pipelines over canonical input-output data.

Subcommands: ``ingest`` (validate + normalize), ``susceptibility`` (matrices,
sector scores, panel ranking), ``response`` (shock curves and recovery
times), ``forecast`` (implied shocks and two-year predictions),
``benchmark`` (forecast comparison against a baseline plus the fluctuation
regression), ``scenario`` (demand-shock impact reports), and ``backbone``
(disparity-filtered network export).

Configuration precedence is flags > environment (``IORESPONSE_<KEY>``) >
config file (flat ``key = value`` lines) > defaults.  Every run writes a
``manifest.txt`` with the fully resolved configuration; pointing ``--config``
at a manifest reproduces the run.  All numeric output is a pure function of
(input data, resolved configuration, seed); worker counts only distribute
work and never change output bytes.

Exit codes: 0 success, 2 usage/configuration error, 3 data error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from . import baselines, backbone, iodata, response, scenario, susceptibility
from .errors import ConfigError, DataError, NumericalError

ENV_PREFIX = "IORESPONSE_"

# key -> (parser, default); flags mirror these one-to-one.
_SCHEMA: dict[str, tuple[Callable[[str], object], object]] = {
    "data": (str, ""),
    "country": (str, "all"),
    "year": (str, "all"),
    "horizon": (str, "inf"),
    "eta": (float, 0.01),
    "noise": (str, "output_proportional"),
    "dt": (float, 0.01),
    "seed": (int, 0),
    "workers": (int, 1),
    "out": (str, "out"),
    "method": (str, "analytic"),
    "mc_length": (float, 400.0),
    "mc_replicas": (int, 8),
    "burn_in": (float, 50.0),
    "shock_kind": (str, "impulse"),
    "shock_sector": (str, "all"),
    "shock_size": (float, 1.0),
    "grid_dt": (float, 0.01),
    "recovery_eps": (float, 0.05),
    "baseline": (str, "arima"),
    "arima_order": (str, "1,1,1"),
    "calibration": (str, "expanding"),
    "target": (str, "changes"),
    "var_samples": (int, 10_000),
    "var_year": (str, "first"),
    "scenario_spec": (str, ""),
    "significance": (float, 0.05),
    "graph_format": (str, "edgelist"),
    "node_time": (str, ""),
    "curves": (str, ""),
    "convention": (str, "response"),
    "clip_negative_flows": (str, "off"),
    "lrt_oracle": (str, "off"),
}

_SUBCOMMANDS = (
    "ingest",
    "susceptibility",
    "response",
    "forecast",
    "benchmark",
    "scenario",
    "backbone",
)


def _parse_bool(value: str) -> bool:
    return str(value).strip().lower() in ("on", "true", "yes", "1")


def _parse_horizon(value: str) -> float:
    value = str(value).strip().lower()
    if value in ("inf", "infinite"):
        return math.inf
    return float(value)


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if key in ("timestamp", "subcommand"):
            continue  # manifests carry these; they are informational
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


class RunConfig(dict):
    """Resolved configuration; plain mapping key -> typed value."""

    @property
    def horizon_years(self) -> float:
        return _parse_horizon(self["horizon"])

    def noise_spec(self) -> iodata.NoiseSpec:
        if self["noise"] == "isotropic":
            return iodata.NoiseSpec.isotropic(self["eta"])
        if self["noise"] == "output_proportional":
            return iodata.NoiseSpec.output_proportional(self["eta"])
        raise ConfigError(f"unknown noise kind {self['noise']!r}")

    def arima_orders(self) -> tuple[int, int, int]:
        parts = str(self["arima_order"]).split(",")
        if len(parts) != 3:
            raise ConfigError("arima_order must be p,d,q")
        try:
            p, d, q = (int(v) for v in parts)
        except ValueError:
            raise ConfigError("arima_order must be integers p,d,q") from None
        return p, d, q

    def budget(self) -> susceptibility.SimulationBudget:
        return susceptibility.SimulationBudget(
            dt=self["dt"],
            length=self["mc_length"],
            replicas=self["mc_replicas"],
            burn_in=self["burn_in"],
            seed=self["seed"],
        )


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict[str, str] = {}
    if args.config:
        file_values = _read_config_file(args.config)
    resolved = RunConfig()
    for key, (parse, default) in _SCHEMA.items():
        raw = getattr(args, key, None)
        if raw is None:
            raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            resolved[key] = default
            continue
        try:
            resolved[key] = parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return resolved


# ---------------------------------------------------------------------------
# output tracking
# ---------------------------------------------------------------------------

class OutputDir:
    """Tracks written files so a failed run leaves no partial outputs."""

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def open(self, name: str) -> TextIO:
        target = self.path / name
        self.written.append(target)
        return open(target, "w", encoding="utf-8", newline="")

    def discard(self) -> None:
        for target in self.written:
            try:
                target.unlink()
            except OSError:
                pass


def _write_manifest(out: OutputDir, subcommand: str, cfg: RunConfig) -> None:
    with out.open("manifest.txt") as fh:
        fh.write("# run manifest; pass to --config to reproduce\n")
        fh.write(f"timestamp = {time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())}\n")
        fh.write(f"subcommand = {subcommand}\n")
        for key in sorted(_SCHEMA):
            fh.write(f"{key} = {cfg[key]}\n")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _load_panel(cfg: RunConfig) -> iodata.Panel:
    if not cfg["data"]:
        raise ConfigError("no input data file (--data)")
    countries = None if cfg["country"] == "all" else [cfg["country"]]
    years = None if cfg["year"] == "all" else [int(cfg["year"])]
    return iodata.load_panel(
        cfg["data"],
        countries=countries,
        years=years,
        clip_negative_flows=_parse_bool(cfg["clip_negative_flows"]),
    )


def _require_cell(cfg: RunConfig) -> tuple[str, int]:
    if cfg["country"] == "all" or cfg["year"] == "all":
        raise ConfigError("this subcommand needs a specific --country and --year")
    return cfg["country"], int(cfg["year"])


def _shock_vector(cfg: RunConfig, table: iodata.IOTable) -> np.ndarray:
    if cfg["shock_sector"] == "all":
        return cfg["shock_size"] * np.ones(table.n_sectors)
    x = np.zeros(table.n_sectors)
    x[table.sector_index(cfg["shock_sector"])] = cfg["shock_size"]
    return x


def _map_cells(fn, keys, workers: int):
    """Apply fn over cell keys, optionally threaded; results in input order."""
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, keys))
    return [fn(k) for k in keys]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_ingest(cfg: RunConfig, out: OutputDir) -> None:
    panel = _load_panel(cfg)
    with out.open("report.csv") as fh:
        fh.write("country,year,n_sectors,spectral_radius,identity_residual,negative_demand\n")
        for table in panel:
            radius = iodata.spectral_radius(table.coefficients)
            residual = float(
                np.max(np.abs(table.output - (table.coefficients @ table.output + table.demand)))
            )
            scale = max(float(np.max(np.abs(table.output))), np.finfo(float).tiny)
            fh.write(
                f"{table.country},{table.year},{table.n_sectors},"
                f"{radius!r},{residual / scale!r},{int((table.demand < 0).sum())}\n"
            )
    with out.open("normalized.csv") as fh:
        iodata.write_panel(panel, fh)


def _cmd_susceptibility(cfg: RunConfig, out: OutputDir) -> None:
    panel = _load_panel(cfg)
    horizon = cfg.horizon_years
    convention = cfg["convention"]

    if cfg["country"] != "all" and cfg["year"] != "all":
        table = panel.get(cfg["country"], int(cfg["year"]))
        if cfg["method"] == "monte_carlo":
            if not math.isfinite(horizon):
                raise ConfigError("monte_carlo needs a finite --horizon")
            nu = iodata.noise_covariance(cfg.noise_spec(), table)
            rho = susceptibility.susceptibility_monte_carlo(
                table, nu, horizon, cfg.budget()
            )
        else:
            rho = susceptibility.susceptibility_analytic(table, horizon)
        with out.open(f"matrix_{table.country}_{table.year}.csv") as fh:
            susceptibility.write_matrix(rho, fh)
        scores = susceptibility.sector_susceptibility(rho, convention=convention)
        with out.open(f"sector_{table.country}_{table.year}.csv") as fh:
            fh.write("sector,value\n")
            for code, v in zip(rho.sectors, scores):
                fh.write(f"{code},{float(v)!r}\n")
        return

    if cfg["method"] == "monte_carlo":
        raise ConfigError(
            "monte_carlo needs a specific --country and --year; "
            "panel aggregation runs on the analytic path"
        )
    codes = panel.codes()
    keys = [(t.country, t.year) for t in panel]

    def cell(key):
        table = panel.get(*key)
        rho = susceptibility.susceptibility_analytic(table, horizon)
        return (
            key,
            susceptibility.sector_susceptibility(rho, convention=convention),
            table.output,
        )

    results = _map_cells(cell, keys, cfg["workers"])
    sector_values = {key: v for key, v, _ in results}
    outputs = {key: y for key, _, y in results}
    agg = susceptibility.aggregate_susceptibilities(sector_values, outputs, codes)
    with out.open("sector_scores.csv") as fh:
        susceptibility.write_aggregates(agg, fh)
    with out.open("sector_ranking.csv") as fh:
        fh.write("rank,sector,rho,ci_low,ci_high\n")
        order = sorted(
            range(len(codes)),
            key=lambda i: (-(agg.weighted_sector[i]), codes[i]),
        )
        for rank, i in enumerate(order, start=1):
            fh.write(
                f"{rank},{codes[i]},{float(agg.weighted_sector[i])!r},"
                f"{float(agg.ci_low[i])!r},{float(agg.ci_high[i])!r}\n"
            )
    with out.open("country_susceptibility.csv") as fh:
        fh.write("country,rho\n")
        for c in agg.countries:
            fh.write(f"{c},{agg.country_average[c]!r}\n")


def _cmd_response(cfg: RunConfig, out: OutputDir) -> None:
    country, year = _require_cell(cfg)
    panel = _load_panel(cfg)
    table = panel.get(country, year)
    horizon = cfg.horizon_years
    if not math.isfinite(horizon):
        horizon = 10.0
    grid = response.response_grid(horizon, cfg["grid_dt"])
    x = _shock_vector(cfg, table)
    if cfg["shock_kind"] == "impulse":
        curve = response.impulse_response(table, x, grid)
    elif cfg["shock_kind"] == "step":
        curve = response.step_response(table, x, grid)
    else:
        raise ConfigError(f"unknown shock kind {cfg['shock_kind']!r}")
    with out.open(f"curve_{country}_{year}.csv") as fh:
        response.write_curve(curve, table.codes, fh)
    if cfg["shock_kind"] == "impulse":
        times = response.recovery_time(curve, eps=cfg["recovery_eps"])
        with out.open(f"recovery_{country}_{year}.csv") as fh:
            fh.write("sector,recovery_years\n")
            for code, t in zip(table.codes, times):
                fh.write(f"{code},{float(t)!r}\n")


def _cmd_forecast(cfg: RunConfig, out: OutputDir) -> None:
    panel = _load_panel(cfg)
    shock_rows = []
    forecast_rows = []
    for country in panel.countries():
        years = panel.years(country)
        for t in years:
            if t + 1 not in years:
                continue
            table = panel.get(country, t)
            y_t = table.output
            y_t1 = panel.get(country, t + 1).output
            shock = response.implied_shock(table, y_t, y_t1)
            for code, v in zip(table.codes, shock.values):
                shock_rows.append((country, t, code, v))
            predicted = response.lrt_forecast(table, y_t, y_t1)
            observed = (
                panel.get(country, t + 2).output if t + 2 in years else None
            )
            for k, code in enumerate(table.codes):
                obs = "" if observed is None else repr(float(observed[k]))
                forecast_rows.append((country, t + 2, code, obs, repr(float(predicted[k]))))
    with out.open("implied_shocks.csv") as fh:
        fh.write("country,year,sector,implied_shock\n")
        for c, t, code, v in shock_rows:
            fh.write(f"{c},{t},{code},{float(v)!r}\n")
    with out.open("forecast.csv") as fh:
        fh.write("country,year,sector,observed,predicted\n")
        for c, t, code, obs, pred in forecast_rows:
            fh.write(f"{c},{t},{code},{obs},{pred}\n")


def _cmd_benchmark(cfg: RunConfig, out: OutputDir) -> None:
    panel = _load_panel(cfg)
    var_year = None if cfg["var_year"] == "first" else int(cfg["var_year"])
    result = baselines.benchmark_lrt_vs_baseline(
        panel,
        baseline=cfg["baseline"],
        orders=cfg.arima_orders(),
        calibration=cfg["calibration"],
        target=cfg["target"],
        var_samples=cfg["var_samples"],
        var_calibration_year=var_year,
        nu_builder=lambda table: iodata.noise_covariance(cfg.noise_spec(), table),
        seed=cfg["seed"],
        workers=cfg["workers"],
        lrt_oracle=_parse_bool(cfg["lrt_oracle"]),
    )
    with out.open("evaluation.csv") as fh:
        baselines.write_evaluation(result.evaluation, fh)
    with out.open("evaluation.json") as fh:
        payload = {
            "target": result.evaluation.target,
            "baseline": result.baseline,
            "cells": [
                {
                    "country": c.country,
                    "year": c.year,
                    "r_lrt": c.r_lrt,
                    "r_baseline": c.r_baseline,
                    "pg": c.pg,
                }
                for c in result.evaluation.cells
            ],
            "by_year": {
                str(y): {
                    "n": s.n,
                    "mean_pg": s.mean,
                    "ci_low": s.ci_low,
                    "ci_high": s.ci_high,
                    "p_value": s.p_value,
                    "status": s.status,
                }
                for y, s in sorted(result.evaluation.by_year.items())
            },
            "pooled": {
                "n": result.evaluation.pooled.n,
                "mean_pg": result.evaluation.pooled.mean,
                "ci_low": result.evaluation.pooled.ci_low,
                "ci_high": result.evaluation.pooled.ci_high,
                "p_value": result.evaluation.pooled.p_value,
                "status": result.evaluation.pooled.status,
            },
        }
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    years = panel.years()
    if len(years) >= 3:
        reg = response.fluctuation_panel_regression(panel)
        codes = panel.codes()
        with out.open("fluctuation_regression.csv") as fh:
            fh.write("country,sector,predictor,observed,output_size\n")
            i = 0
            for c in reg.countries:
                for code in codes:
                    fh.write(
                        f"{c},{code},{float(reg.predictor[i])!r},{float(reg.observed[i])!r},"
                        f"{float(reg.output_size[i])!r}\n"
                    )
                    i += 1
        with out.open("fluctuation_summary.csv") as fh:
            fh.write("statistic,value\n")
            fh.write(f"eta,{reg.eta!r}\n")
            fh.write(f"r,{reg.r!r}\n")
            fh.write(f"r_size_only,{reg.r_size_only!r}\n")
            fh.write(f"r_with_size_control,{reg.r_with_size_control!r}\n")
            fh.write(f"size_control_coefficient,{reg.size_control_coefficient!r}\n")


def _cmd_scenario(cfg: RunConfig, out: OutputDir) -> None:
    if not cfg["scenario_spec"]:
        raise ConfigError("scenario needs --scenario-spec FILE")
    try:
        text = Path(cfg["scenario_spec"]).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read scenario spec: {exc}") from None
    spec = scenario.parse_scenario_spec(text)
    panel = _load_panel(cfg)
    curve_countries = [c for c in cfg["curves"].split(",") if c]
    horizon = cfg.horizon_years
    result = scenario.run_scenario(
        spec,
        panel,
        curve_countries=curve_countries,
        curve_horizon=horizon if math.isfinite(horizon) else 10.0,
        curve_dt=cfg["grid_dt"],
    )
    with out.open("scenario_impacts.csv") as fh:
        scenario.write_impacts(result, fh)
    with out.open("scenario_aggregates.csv") as fh:
        scenario.write_aggregates(result, fh)
    for c in curve_countries:
        table = panel.get(c, spec.evaluation_year)
        with out.open(f"scenario_curve_{c}.csv") as fh:
            response.write_curve(result.curves[c], table.codes, fh)


def _cmd_backbone(cfg: RunConfig, out: OutputDir) -> None:
    country, year = _require_cell(cfg)
    panel = _load_panel(cfg)
    table = panel.get(country, year)
    rho = susceptibility.susceptibility_analytic(table, cfg.horizon_years)
    node_values = None
    if cfg["node_time"]:
        # annotate nodes with the unit-impulse response at the chosen time
        t_prime = float(cfg["node_time"])
        grid = np.array([0.0]) if t_prime == 0.0 else np.array([0.0, t_prime])
        curve = response.impulse_response(table, np.ones(table.n_sectors), grid)
        node_values = dict(zip(table.codes, (float(v) for v in curve.values[-1])))
    graph = backbone.disparity_filter(
        rho, cfg["significance"], node_values=node_values
    )
    fmt = cfg["graph_format"]
    ext = "graphml" if fmt == "graphml" else "csv"
    with out.open(f"backbone_{country}_{year}.{ext}") as fh:
        fh.write(backbone.export_graph(graph, fmt))


_HANDLERS = {
    "ingest": _cmd_ingest,
    "susceptibility": _cmd_susceptibility,
    "response": _cmd_response,
    "forecast": _cmd_forecast,
    "benchmark": _cmd_benchmark,
    "scenario": _cmd_scenario,
    "backbone": _cmd_backbone,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ioresponse",
        description="Susceptibility analysis and forecasting for input-output economies.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", help="flat key = value config file (or a manifest)")
        for key in _SCHEMA:
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, help=argparse.SUPPRESS if key == "lrt_oracle" else None)
    return parser


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = None
    try:
        cfg = resolve_config(args)
        out = OutputDir(cfg["out"])
        try:
            _HANDLERS[args.subcommand](cfg, out)
            _write_manifest(out, args.subcommand, cfg)
        except BaseException:
            out.discard()
            raise
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"OSError: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
