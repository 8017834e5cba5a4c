"""Sweep and Monte Carlo harness shared by the CLI and the figure pipeline.

Every run is described by a flat JSON-able config dict; the emitted CSV
embeds that config (plus its SHA-256) as comment lines, so a stored CSV can
be regenerated byte-for-byte from its own header.  Rows are ordered by grid
index, never by completion time.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .priors import PriorSpec
from .replica import (ReplicaProblem, SolverOptions, prediction_report,
                      solve_replica)
from .spectra import SpectrumSpec
from .synth import (InstanceSpec, empirical_block_mmse, empirical_ymmse,
                    exact_gaussian_posterior, sample_instance)
from .vamp import VampConfig, rotate_gaussian_instance, vamp_run

__all__ = [
    "sweep_rows",
    "simulate_rows",
    "write_csv",
    "read_csv",
    "run_config",
    "regenerate",
    "FIGURES",
    "figure_config",
]

CSV_VERSION = "stochreg-csv v1"


# ---------------------------------------------------------------------------
# Grid helpers


def parse_grid(text):
    """``lo:hi:n`` (inclusive linspace) or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} must be lo:hi:n or a comma list")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("grid needs at least one point")
        return np.linspace(lo, hi, n)
    values = np.array([float(v) for v in text.split(",") if v.strip()])
    if values.size == 0:
        raise ValueError("empty grid")
    return values


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty grid")
    if grid.size > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise ValueError("grid must be strictly monotone")
    if not np.all(np.isfinite(grid)):
        raise ValueError("grid values must be finite")
    return grid


def _problem_at(spectrum, prior, vary, value, c, sigma2):
    if vary == "c":
        if sigma2 is None:
            raise ValueError("sweeps over c need a fixed sigma2")
        return ReplicaProblem(spectrum=spectrum, prior=prior, c=float(value),
                              sigma2=float(sigma2))
    if vary == "inv_sigma2":
        if c is None:
            raise ValueError("sweeps over 1/sigma2 need a fixed c")
        if value <= 0:
            raise ValueError("1/sigma2 grid values must be > 0")
        return ReplicaProblem(spectrum=spectrum, prior=prior, c=float(c),
                              sigma2=1.0 / float(value))
    raise ValueError(f"unknown sweep parameter {vary!r}")


# ---------------------------------------------------------------------------
# Theory sweep


def _pad(values, k, k_pad):
    return list(values) + [float("nan")] * (k_pad - k)


def sweep_rows(spectrum, prior, vary, grid, c=None, sigma2=None,
               opts=SolverOptions(), locate=True, pad_k=None):
    """One theory row per grid point, plus refined transition locations.

    Returns (header, rows, transitions).  A solver failure at a grid point
    is recorded in-row (converged=False) and the sweep continues.  pad_k
    widens the per-block columns with NaNs so that spectra with different
    atom counts can share one table.
    """
    grid = _check_grid(grid)
    k = spectrum.n_atoms
    k_pad = pad_k or k
    if k_pad < k:
        raise ValueError("pad_k smaller than the spectrum atom count")
    header = (["param", "c", "sigma2", "spectrum_id", "prior_id"]
              + [f"r2_{i+1}" for i in range(k_pad)]
              + [f"r1_{i+1}" for i in range(k_pad)]
              + ["i_rs", "mmse_total", "ymmse", "branch", "converged",
                 "iterations"])
    rows = []
    totals = []
    for value in grid:
        problem = _problem_at(spectrum, prior, vary, value, c, sigma2)
        base = [float(value), problem.c, problem.sigma2,
                spectrum.id_string(), prior.id_string()]
        try:
            result = solve_replica(problem, opts)
            sol = result.global_solution
            report = prediction_report(sol, problem)
            rows.append(base + _pad(sol.r2, k, k_pad) + _pad(sol.r1, k, k_pad)
                        + [sol.i_rs, report.mmse_total, report.ymmse,
                           sol.converged_from, True, sol.iterations])
            totals.append(report.mmse_total)
        except Exception as exc:  # noqa: BLE001 - recorded in-row by contract
            rows.append(base + [float("nan")] * (2 * k_pad)
                        + [float("nan")] * 3 + [f"error:{exc}", False, 0])
            totals.append(float("nan"))
    transitions = []
    if locate and len(grid) > 1:
        totals = np.asarray(totals)
        rho = prior.rho
        jumps = [i for i in range(len(grid) - 1)
                 if (np.isfinite(totals[i]) and np.isfinite(totals[i + 1])
                     and abs(totals[i + 1] - totals[i]) > 0.1 * rho)]
        if jumps:
            from .replica import locate_transition

            def family(x):
                return _problem_at(spectrum, prior, vary, x, c, sigma2)

            for i in jumps:
                lo, hi = sorted((grid[i], grid[i + 1]))
                try:
                    transitions.append(locate_transition(family, lo, hi, opts))
                except ValueError:
                    pass  # steep but continuous; no branch crossing
    return header, rows, transitions


# ---------------------------------------------------------------------------
# Monte Carlo simulation


def _trial_seeds(master_seed, n):
    state = np.random.SeedSequence(int(master_seed)).generate_state(2 * n, dtype="uint64")
    return [(int(state[2 * i] >> 1), int(state[2 * i + 1] >> 1)) for i in range(n)]


def _run_trial(task):
    """One seeded trial; top-level so process pools can pickle it."""
    spectrum = task["spectrum"]
    prior = task["prior"]
    spec = InstanceSpec(N=task["N"], p=task["p"], spectrum=spectrum,
                        prior=prior, sigma2=task["sigma2"],
                        seed=task["inst_seed"])
    instance = sample_instance(spec)
    out = {"failed": False}
    vamp_cfg = VampConfig(**task["vamp"])
    run_on = instance
    if task["rotate"] and prior.kind == "gaussian":
        run_on = rotate_gaussian_instance(instance, seed=task["rot_seed"])
    trace = vamp_run(run_on, prior, vamp_cfg)
    tail = trace.mse[-20:]
    out["vamp_mse"] = trace.final_mse
    out["vamp_ymmse"] = empirical_ymmse(trace.estimate, run_on)
    out["vamp_iters"] = trace.iterations
    out["vamp_osc"] = bool(len(tail) > 2 and np.any(np.diff(tail) > 0)
                           and np.any(np.diff(tail) < 0))
    out["vamp_blocks"] = empirical_block_mmse(trace.estimate, run_on).tolist()
    if prior.kind == "gaussian":
        mean, cov = exact_gaussian_posterior(instance)
        out["exact_mse"] = float(np.mean((instance.beta0 - mean) ** 2))
        out["exact_ymmse"] = empirical_ymmse(mean, instance)
        out["exact_blocks"] = empirical_block_mmse(mean, instance).tolist()
    return out


def simulate_rows(spectrum, prior, vary, grid, p, trials, seed, c=None,
                  sigma2=None, opts=SolverOptions(), vamp_cfg=VampConfig(),
                  rotate="auto", jobs=1, pad_k=None):
    """Theory plus empirical VAMP / exact-posterior statistics per grid point.

    Deterministic given the master seed.  Failed trials are flagged per-row
    and do not abort the run.
    """
    grid = _check_grid(grid)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    do_rotate = (prior.kind == "gaussian") if rotate == "auto" else bool(rotate)
    k = spectrum.n_atoms
    k_pad = pad_k or k
    theory_header, theory_rows, transitions = sweep_rows(
        spectrum, prior, vary, grid, c=c, sigma2=sigma2, opts=opts, pad_k=k_pad)

    header = theory_header + [
        "p", "N", "trials", "failed_trials",
        "vamp_mse_mean", "vamp_mse_min", "vamp_mse_max", "vamp_mse_std",
        "vamp_ymmse_mean", "vamp_ymmse_min", "vamp_ymmse_max", "vamp_ymmse_std",
        "vamp_within_10pct", "vamp_oscillating_frac", "vamp_iters_mean",
    ] + [f"vamp_mse_block_{i+1}" for i in range(k_pad)] + [
        "exact_mse_mean", "exact_mse_std", "exact_ymmse_mean",
    ] + [f"exact_mse_block_{i+1}" for i in range(k_pad)]

    tasks = []
    for gi, value in enumerate(grid):
        problem = _problem_at(spectrum, prior, vary, value, c, sigma2)
        n_rows_n = int(round(problem.c * p))
        for inst_seed, rot_seed in _trial_seeds(int(seed) + gi, trials):
            tasks.append({
                "grid_index": gi, "N": max(n_rows_n, 1), "p": p,
                "spectrum": spectrum, "prior": prior,
                "sigma2": problem.sigma2, "inst_seed": inst_seed,
                "rot_seed": rot_seed, "vamp": _vamp_dict(vamp_cfg),
                "rotate": do_rotate,
            })

    results = [None] * len(tasks)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(_safe_trial, tasks)):
                results[i] = res
    else:
        for i, task in enumerate(tasks):
            results[i] = _safe_trial(task)

    rows = []
    per_point = trials
    for gi, theory in enumerate(theory_rows):
        batch = results[gi * per_point:(gi + 1) * per_point]
        ok = [b for b in batch if not b["failed"]]
        failed = per_point - len(ok)
        theory_mmse = theory[theory_header.index("mmse_total")]
        ext = [p, tasks[gi * per_point]["N"], per_point, failed]
        if ok:
            vm = np.array([b["vamp_mse"] for b in ok])
            vy = np.array([b["vamp_ymmse"] for b in ok])
            within = (np.abs(vm - theory_mmse) <= 0.1 * theory_mmse
                      if np.isfinite(theory_mmse) and theory_mmse > 0
                      else np.zeros_like(vm, dtype=bool))
            blocks = np.mean([b["vamp_blocks"] for b in ok], axis=0)
            ext += [vm.mean(), vm.min(), vm.max(),
                    vm.std(ddof=1) if len(vm) > 1 else 0.0,
                    vy.mean(), vy.min(), vy.max(),
                    vy.std(ddof=1) if len(vy) > 1 else 0.0,
                    float(np.mean(within)),
                    float(np.mean([b["vamp_osc"] for b in ok])),
                    float(np.mean([b["vamp_iters"] for b in ok]))]
            ext += _pad(blocks, k, k_pad)
            if "exact_mse" in ok[0]:
                em = np.array([b["exact_mse"] for b in ok])
                ey = np.array([b["exact_ymmse"] for b in ok])
                eb = np.mean([b["exact_blocks"] for b in ok], axis=0)
                ext += [em.mean(), em.std(ddof=1) if len(em) > 1 else 0.0,
                        ey.mean()] + _pad(eb, k, k_pad)
            else:
                ext += [float("nan")] * (3 + k_pad)
        else:
            ext += [float("nan")] * (11 + k_pad) + [float("nan")] * (3 + k_pad)
        rows.append(theory + ext)
    return header, rows, transitions


def _vamp_dict(cfg):
    return {"max_iter": cfg.max_iter, "damping": cfg.damping,
            "min_precision": cfg.min_precision, "stop_tol": cfg.stop_tol,
            "init_precision": cfg.init_precision,
            "informative_start": cfg.informative_start,
            "informative_noise": cfg.informative_noise, "seed": cfg.seed}


def _safe_trial(task):
    try:
        return _run_trial(task)
    except Exception as exc:  # noqa: BLE001 - flagged per-row by contract
        return {"failed": True, "error": str(exc)}


# ---------------------------------------------------------------------------
# CSV with embedded config


def _format_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_bytes(header, rows, config, trailing=()):
    buf = io.StringIO()
    cfg_json = json.dumps(config, sort_keys=True)
    digest = hashlib.sha256(cfg_json.encode()).hexdigest()
    buf.write(f"# {CSV_VERSION}\n")
    buf.write(f"# config {cfg_json}\n")
    buf.write(f"# config_sha256 {digest}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    for line in trailing:
        buf.write(f"# {line}\n")
    return buf.getvalue().encode()


def write_csv(path, header, rows, config, trailing=()):
    data = csv_bytes(header, rows, config, trailing)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def read_csv(path):
    """Returns (meta, header, rows) where rows hold floats where possible."""
    meta = {"trailing": []}
    header = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    data_lines = []
    for line in lines:
        if line.startswith("# config "):
            meta["config"] = json.loads(line[len("# config "):])
        elif line.startswith("# config_sha256 "):
            meta["config_sha256"] = line.split()[-1]
        elif line.startswith("#"):
            meta["trailing"].append(line[1:].strip())
        elif line.strip():
            data_lines.append(line)
    for record in csv.reader(data_lines):
        if header is None:
            header = record
            continue
        row = {}
        for key, value in zip(header, record):
            try:
                row[key] = float(value)
            except ValueError:
                row[key] = {"true": True, "false": False}.get(value, value)
        rows.append(row)
    return meta, header, rows


# ---------------------------------------------------------------------------
# Config-driven execution (the round-trip contract)


def run_config(config):
    """Execute a sweep/simulate/reproduce config; returns (header, rows, trailing)."""
    command = config["command"]
    opts = SolverOptions(**config.get("solver", {}))
    if command == "sweep":
        spectrum = SpectrumSpec.parse(config["spectrum"])
        prior = PriorSpec.parse(config["prior"])
        header, rows, transitions = sweep_rows(
            spectrum, prior, config["vary"], np.asarray(config["grid"]),
            c=config.get("c"), sigma2=config.get("sigma2"), opts=opts)
        trailing = [f"transition {config['vary']}*={t!r}" for t in transitions]
        return header, rows, trailing
    if command in ("simulate", "reproduce"):
        spectra = [SpectrumSpec.parse(s) for s in config["spectra"]]
        k_pad = max(s.n_atoms for s in spectra)
        all_rows = []
        header = None
        trailing = []
        for spectrum in spectra:
            prior = PriorSpec.parse(config["prior"])
            h, rows, transitions = simulate_rows(
                spectrum, prior, config["vary"], np.asarray(config["grid"]),
                p=config["p"], trials=config["trials"], seed=config["seed"],
                c=config.get("c"), sigma2=config.get("sigma2"), opts=opts,
                vamp_cfg=VampConfig(**config.get("vamp", {})),
                rotate=config.get("rotate", "auto"),
                jobs=config.get("jobs", 1), pad_k=k_pad)
            trailing += [f"transition[{spectrum.id_string()}] "
                         f"{config['vary']}*={t!r}" for t in transitions]
            header = h
            all_rows += rows
        return header, all_rows, trailing
    raise ValueError(f"config has unknown command {config['command']!r}")


def regenerate(csv_path):
    """Re-run the config embedded in a CSV; returns the regenerated bytes."""
    meta, _, _ = read_csv(csv_path)
    if "config" not in meta:
        raise ValueError(f"{csv_path} carries no embedded config")
    config = meta["config"]
    header, rows, trailing = run_config(config)
    return csv_bytes(header, rows, config, trailing)


# ---------------------------------------------------------------------------
# Figure registry (desk scale by default; paper scale via flag)

_C_GRID = "0.3:1.5:13"
_SNR_GRID = "1:15:8"
_MIX5 = "0.9:0.2,0.7:0.2,0.5:0.2,0.3:0.2,0.1:0.2"
_MIX2 = "0.9:0.5,0.1:0.5"
_MIX3 = "0.9:1,0.8:1,0.7:1"

FIGURES = {
    "1a": dict(title="MMSE vs c, gaussian prior", prior="gaussian(1)",
               spectra=["0:1", _MIX5], vary="c", grid=_C_GRID, sigma2=0.1,
               style="markers", ylabel="MMSE"),
    "1b": dict(title="MMSE vs c, rademacher", prior="rademacher",
               spectra=["0:1", "0.9:1"], vary="c", grid=_C_GRID, sigma2=0.1,
               style="span", ylabel="MMSE"),
    "2a": dict(title="MMSE vs c, block designs", prior="rademacher",
               spectra=[_MIX2, _MIX3], vary="c", grid=_C_GRID, sigma2=0.1,
               style="span", ylabel="MMSE"),
    "2b": dict(title="MMSE vs c, block designs (averaged)", prior="rademacher",
               spectra=[_MIX2, _MIX3], vary="c", grid=_C_GRID, sigma2=0.1,
               style="mean", ylabel="MMSE"),
    "3a": dict(title="MSE vs 1/sigma2, iid design, c=0.3", prior="rademacher",
               spectra=["0:1"], vary="inv_sigma2", grid=_SNR_GRID, c=0.3,
               style="mean", ylabel="MMSE"),
    "3b": dict(title="MSE vs 1/sigma2, block design, c=0.3", prior="rademacher",
               spectra=[_MIX2], vary="inv_sigma2", grid=_SNR_GRID, c=0.3,
               style="mean", ylabel="MMSE"),
    "4a": dict(title="YMMSE vs c, block designs", prior="rademacher",
               spectra=[_MIX2, _MIX3], vary="c", grid=_C_GRID, sigma2=0.1,
               style="markers", ylabel="YMMSE"),
    "4b": dict(title="YMMSE vs c, rotation-invariant designs", prior="rademacher",
               spectra=["0:1", "0.9:1"], vary="c", grid=_C_GRID, sigma2=0.1,
               style="markers", ylabel="YMMSE"),
}


def figure_config(figure_id, p=None, trials=None, seed=0, paper_scale=False,
                  grid=None, jobs=1):
    """Materialize the config dict for one figure id."""
    if figure_id not in FIGURES:
        raise ValueError(f"unknown figure id {figure_id!r}; valid ids: "
                         + ", ".join(sorted(FIGURES)))
    fig = FIGURES[figure_id]
    if paper_scale:
        p = p or 2100
        trials = trials or 50
    else:
        p = p or 512
        trials = trials or 20
    config = {
        "command": "reproduce",
        "figure": figure_id,
        "title": fig["title"],
        "style": fig["style"],
        "ylabel": fig["ylabel"],
        "prior": fig["prior"],
        "spectra": list(fig["spectra"]),
        "vary": fig["vary"],
        "grid": [float(v) for v in parse_grid(grid or fig["grid"])],
        "p": int(p),
        "trials": int(trials),
        "seed": int(seed),
        "jobs": int(jobs),
    }
    if "sigma2" in fig:
        config["sigma2"] = fig["sigma2"]
    if "c" in fig:
        config["c"] = fig["c"]
    return config
