"""Command-line front end.

Subcommands: ``solve`` (one replica problem), ``sweep`` (theory over a
grid), ``simulate`` (theory + Monte Carlo over a grid), ``reproduce``
(named figure experiments -> CSV + SVG), ``selftest`` (oracle suite).

Settings come from an INI config file (one section per command plus
[common]) with command-line flags taking precedence.  Exit codes:
0 success, 1 config error, 2 solver non-convergence, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (FIGURES, figure_config, parse_grid, run_config,
                          write_csv)
from .priors import PriorSpec
from .replica import (ReplicaProblem, SolverOptions, prediction_report,
                      solve_replica, solve_replica_continuous)
from .spectra import SpectrumSpec
from .vamp import VampConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2
EXIT_SIMULATION = 3

OUTPUT_DIR_ENV = "STOCHREG_OUTPUT_DIR"


class ConfigError(Exception):
    pass


_KNOWN_KEYS = {
    "common": {"output_dir", "jobs", "seed"},
    "solve": {"spectrum", "prior", "c", "sigma2", "k_bins", "damping", "tol",
              "max_iter", "quad_nodes", "channel_nodes", "extra_starts", "out"},
    "sweep": {"spectrum", "prior", "c", "sigma2", "c_grid", "inv_sigma2_grid",
              "damping", "tol", "max_iter", "quad_nodes", "channel_nodes",
              "extra_starts", "out"},
    "simulate": {"spectrum", "prior", "c", "sigma2", "c_grid",
                 "inv_sigma2_grid", "p", "trials", "rotate", "vamp_damping",
                 "vamp_max_iter", "vamp_stop_tol", "damping", "tol",
                 "max_iter", "quad_nodes", "channel_nodes", "extra_starts",
                 "out"},
    "reproduce": {"figure", "p", "trials", "paper_scale", "grid", "out_dir"},
}


def _load_config(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    out = {}
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            out[f"{section}.{key}"] = value
    return out


def _setting(args, file_cfg, section, key, default=None, cast=str):
    """Flag > config-file key > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    raw = file_cfg.get(f"{section}.{key}", file_cfg.get(f"common.{key}"))
    if raw is None:
        return default
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {exc}") from None


def _output_dir(args, file_cfg):
    out = (getattr(args, "out_dir", None)
           or file_cfg.get("common.output_dir")
           or os.environ.get(OUTPUT_DIR_ENV)
           or ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _solver_options(args, file_cfg, section):
    return SolverOptions(
        damping=_setting(args, file_cfg, section, "damping", 0.5, float),
        tol=_setting(args, file_cfg, section, "tol", 1e-10, float),
        max_iter=int(_setting(args, file_cfg, section, "max_iter", 10_000, float)),
        quad_nodes=int(_setting(args, file_cfg, section, "quad_nodes", 2048, float)),
        channel_nodes=int(_setting(args, file_cfg, section, "channel_nodes", 201, float)),
        extra_starts=int(_setting(args, file_cfg, section, "extra_starts", 0, float)),
    )


def _parse_problem(args, file_cfg, section):
    spectrum_text = _setting(args, file_cfg, section, "spectrum")
    prior_text = _setting(args, file_cfg, section, "prior", "rademacher")
    if spectrum_text is None:
        raise ConfigError(f"{section}: missing required key 'spectrum'")
    try:
        spectrum = SpectrumSpec.parse(spectrum_text)
        prior = PriorSpec.parse(prior_text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spectrum, prior


def _print_solution(sol, problem, report, all_points):
    lines = {
        "spectrum": problem.spectrum.id_string(),
        "prior": problem.prior.id_string(),
        "c": float(problem.c),
        "sigma2": float(problem.sigma2),
        "branch": sol.converged_from,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual": float(sol.residual),
        "i_rs": float(sol.i_rs),
        "mmse_total": float(report.mmse_total),
        "ymmse": float(report.ymmse),
    }
    for i, (r1v, r2v) in enumerate(zip(sol.r1, sol.r2), start=1):
        lines[f"r1_{i}"] = float(r1v)
        lines[f"r2_{i}"] = float(r2v)
    for key, value in lines.items():
        print(f"{key} = {value!r}" if isinstance(value, float)
              else f"{key} = {value}")
    print(f"critical_points = {len(all_points)}")
    for j, pt in enumerate(all_points):
        print(f"  point[{j}] from={pt.converged_from} i_rs={pt.i_rs!r} "
              f"r2={np.array2string(pt.r2, precision=10)}")


def cmd_solve(args, file_cfg):
    spectrum, prior = _parse_problem(args, file_cfg, "solve")
    c = _setting(args, file_cfg, "solve", "c", cast=float)
    sigma2 = _setting(args, file_cfg, "solve", "sigma2", cast=float)
    if c is None or sigma2 is None:
        raise ConfigError("solve: keys 'c' and 'sigma2' are required")
    opts = _solver_options(args, file_cfg, "solve")
    try:
        problem = ReplicaProblem(spectrum=spectrum, prior=prior, c=c,
                                 sigma2=sigma2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    k_bins = _setting(args, file_cfg, "solve", "k_bins", cast=int)
    if spectrum.kind == "continuous":
        if k_bins is None:
            raise ConfigError("solve: continuous spectrum needs --k-bins")
        result, problem = solve_replica_continuous(problem, k_bins, opts)
    else:
        result = solve_replica(problem, opts)
    sol = result.global_solution
    report = prediction_report(sol, problem)
    _print_solution(sol, problem, report, result.critical_points)
    if result.transition_candidate:
        print("warning: multiple branches coexist (first-order transition candidate)")
    if result.degenerate:
        print("warning: degenerate critical points with equal potential")
    out = _setting(args, file_cfg, "solve", "out")
    if out:
        header = ["c", "sigma2", "spectrum_id", "prior_id", "i_rs",
                  "mmse_total", "ymmse", "branch", "converged", "iterations"]
        row = [problem.c, problem.sigma2, problem.spectrum.id_string(),
               prior.id_string(), sol.i_rs, report.mmse_total, report.ymmse,
               sol.converged_from, sol.converged, sol.iterations]
        write_csv(out, header, [row],
                  {"command": "solve", "c": problem.c, "sigma2": problem.sigma2,
                   "spectrum": problem.spectrum.id_string(),
                   "prior": prior.id_string()})
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def _grid_from(args, file_cfg, section):
    c_grid = _setting(args, file_cfg, section, "c_grid")
    snr_grid = _setting(args, file_cfg, section, "inv_sigma2_grid")
    if (c_grid is None) == (snr_grid is None):
        raise ConfigError(f"{section}: give exactly one of c_grid / "
                          "inv_sigma2_grid")
    try:
        if c_grid is not None:
            return "c", parse_grid(c_grid)
        return "inv_sigma2", parse_grid(snr_grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_sweep(args, file_cfg):
    spectrum, prior = _parse_problem(args, file_cfg, "sweep")
    vary, grid = _grid_from(args, file_cfg, "sweep")
    c = _setting(args, file_cfg, "sweep", "c", cast=float)
    sigma2 = _setting(args, file_cfg, "sweep", "sigma2", cast=float)
    if vary == "c" and sigma2 is None:
        raise ConfigError("sweep: c-grid sweeps need 'sigma2'")
    if vary == "inv_sigma2" and c is None:
        raise ConfigError("sweep: 1/sigma2-grid sweeps need 'c'")
    config = {"command": "sweep", "spectrum": spectrum.id_string(),
              "prior": prior.id_string(), "vary": vary,
              "grid": [float(v) for v in grid]}
    if c is not None:
        config["c"] = c
    if sigma2 is not None:
        config["sigma2"] = sigma2
    header, rows, trailing = run_config(config)
    out = _setting(args, file_cfg, "sweep", "out")
    if out is None:
        out = str(_output_dir(args, file_cfg) / "sweep.csv")
    write_csv(out, header, rows, config, trailing)
    print(f"wrote {out} ({len(rows)} rows)")
    for line in trailing:
        print(line)
    all_converged = all(row[header.index("converged")] for row in rows)
    return EXIT_OK if all_converged else EXIT_NONCONVERGED


def cmd_simulate(args, file_cfg):
    spectrum, prior = _parse_problem(args, file_cfg, "simulate")
    vary, grid = _grid_from(args, file_cfg, "simulate")
    c = _setting(args, file_cfg, "simulate", "c", cast=float)
    sigma2 = _setting(args, file_cfg, "simulate", "sigma2", cast=float)
    if vary == "c" and sigma2 is None:
        raise ConfigError("simulate: c-grid sweeps need 'sigma2'")
    if vary == "inv_sigma2" and c is None:
        raise ConfigError("simulate: 1/sigma2-grid sweeps need 'c'")
    config = {
        "command": "simulate",
        "spectra": [spectrum.id_string()],
        "prior": prior.id_string(),
        "vary": vary,
        "grid": [float(v) for v in grid],
        "p": _setting(args, file_cfg, "simulate", "p", 512, int),
        "trials": _setting(args, file_cfg, "simulate", "trials", 20, int),
        "seed": _setting(args, file_cfg, "common", "seed", 0, int),
        "rotate": _setting(args, file_cfg, "simulate", "rotate", "auto"),
        "jobs": _setting(args, file_cfg, "common", "jobs", 1, int),
        "vamp": {
            "damping": _setting(args, file_cfg, "simulate", "vamp_damping",
                                0.85, float),
            "max_iter": _setting(args, file_cfg, "simulate", "vamp_max_iter",
                                 200, int),
            "stop_tol": _setting(args, file_cfg, "simulate", "vamp_stop_tol",
                                 1e-8, float),
        },
    }
    if c is not None:
        config["c"] = c
    if sigma2 is not None:
        config["sigma2"] = sigma2
    if config["rotate"] not in ("auto", True, False):
        config["rotate"] = {"on": True, "off": False,
                            "auto": "auto"}.get(str(config["rotate"]).lower())
        if config["rotate"] is None:
            raise ConfigError("simulate: rotate must be auto/on/off")
    header, rows, trailing = run_config(config)
    out = _setting(args, file_cfg, "simulate", "out")
    if out is None:
        out = str(_output_dir(args, file_cfg) / "simulate.csv")
    write_csv(out, header, rows, config, trailing)
    print(f"wrote {out} ({len(rows)} rows)")
    failed = sum(row[header.index("failed_trials")] for row in rows)
    if failed:
        print(f"warning: {int(failed)} failed trials (flagged per-row)")
        return EXIT_SIMULATION
    all_converged = all(row[header.index("converged")] for row in rows)
    return EXIT_OK if all_converged else EXIT_NONCONVERGED


def cmd_reproduce(args, file_cfg):
    from .figures import render_figure

    figure_id = args.figure or file_cfg.get("reproduce.figure")
    if figure_id is None:
        raise ConfigError("reproduce: missing figure id")
    try:
        config = figure_config(
            figure_id,
            p=_setting(args, file_cfg, "reproduce", "p", cast=int),
            trials=_setting(args, file_cfg, "reproduce", "trials", cast=int),
            seed=_setting(args, file_cfg, "common", "seed", 0, int),
            paper_scale=bool(_setting(args, file_cfg, "reproduce",
                                      "paper_scale", False, bool)),
            grid=_setting(args, file_cfg, "reproduce", "grid"),
            jobs=_setting(args, file_cfg, "common", "jobs", 1, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out_dir = _output_dir(args, file_cfg)
    header, rows, trailing = run_config(config)
    csv_path = out_dir / f"fig_{figure_id}.csv"
    svg_path = out_dir / f"fig_{figure_id}.svg"
    write_csv(csv_path, header, rows, config, trailing)
    render_figure(csv_path, svg_path)
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")
    failed = sum(row[header.index("failed_trials")] for row in rows)
    return EXIT_SIMULATION if failed else EXIT_OK


def cmd_selftest(args, file_cfg):
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_SIMULATION


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochreg",
        description="Replica predictions and Monte Carlo validation for "
                    "high-dimensional AR(1) stochastic regression.")
    parser.add_argument("--config", help="INI config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one replica problem")
    solve.add_argument("--spectrum")
    solve.add_argument("--prior")
    solve.add_argument("--c", type=float)
    solve.add_argument("--sigma2", type=float)
    solve.add_argument("--k-bins", dest="k_bins", type=int)
    solve.add_argument("--out")

    sweep = sub.add_parser("sweep", help="theory predictions over a grid")
    sweep.add_argument("--spectrum")
    sweep.add_argument("--prior")
    sweep.add_argument("--c", type=float)
    sweep.add_argument("--sigma2", type=float)
    sweep.add_argument("--c-grid", dest="c_grid")
    sweep.add_argument("--inv-sigma2-grid", dest="inv_sigma2_grid")
    sweep.add_argument("--out")

    sim = sub.add_parser("simulate", help="theory + Monte Carlo over a grid")
    for flag in ("--spectrum", "--prior"):
        sim.add_argument(flag)
    sim.add_argument("--c", type=float)
    sim.add_argument("--sigma2", type=float)
    sim.add_argument("--c-grid", dest="c_grid")
    sim.add_argument("--inv-sigma2-grid", dest="inv_sigma2_grid")
    sim.add_argument("--p", type=int)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--jobs", type=int)
    sim.add_argument("--rotate", choices=["auto", "on", "off"])
    sim.add_argument("--vamp-damping", dest="vamp_damping", type=float)
    sim.add_argument("--vamp-max-iter", dest="vamp_max_iter", type=int)
    sim.add_argument("--out")

    rep = sub.add_parser("reproduce", help="run a named figure experiment")
    rep.add_argument("figure", nargs="?",
                     help="figure id: " + ", ".join(sorted(FIGURES)))
    rep.add_argument("--p", type=int)
    rep.add_argument("--trials", type=int)
    rep.add_argument("--seed", type=int)
    rep.add_argument("--jobs", type=int)
    rep.add_argument("--grid")
    rep.add_argument("--paper-scale", dest="paper_scale", action="store_const",
                     const=True, default=None)
    rep.add_argument("--out-dir", dest="out_dir")

    sub.add_parser("selftest", help="run the built-in oracle suite")

    for sp in (solve, sweep, sim):
        sp.add_argument("--out-dir", dest="out_dir")
    return parser


_COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
    "selftest": cmd_selftest,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = _load_config(args.config) if args.config else {}
        return _COMMANDS[args.command](args, file_cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
