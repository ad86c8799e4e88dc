"""Experiment execution: single runs, seed/parameter sweeps, file outputs.

Outputs per run: ``trajectory.csv`` (one row per recorded step),
``summary.json`` (status, final observables, config echo, wall time), and
``snapshot_t*.csv`` population dumps at the requested times.  Files are
written atomically (temp file + rename).  All randomness descends from the
config seed through ``numpy.random.SeedSequence`` spawning, in the fixed
order (init, dynamics, evaluation).
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..diagnostics import TRAJECTORY_COLUMNS, TrajectoryRecord, ensemble_energy, rate_fit
from ..dynamics import run_step
from ..ensemble import init_from_sampler, write_snapshot_csv
from ..errors import ConfigurationError, ExtinctionError, NumericError, StepSizeError
from ..potentials import all_potentials
from .config import ExperimentConfig, parse_config

RUN_ERRORS = (NumericError, ExtinctionError, StepSizeError)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def observe(model, ens, births: int, deaths: int, eval_rng) -> TrajectoryRecord:
    """One trajectory record; batch models use a fresh evaluation minibatch
    drawn from the dedicated eval stream so the dynamics stream is untouched."""
    n = ens.n
    w = ens.weights
    if model.is_exact:
        energy = ensemble_energy(model, ens)
        v = all_potentials(model, ens)
        grad = model.grad_F(ens.thetas)
        if model.is_interacting:
            _, fsum = model.kernel_weighted_sums(ens.thetas, ens.thetas, w)
            grad = grad + fsum / n
    else:
        batch = model.sample_batch(eval_rng)
        energy = model.batch_loss(ens.thetas, w, batch)
        v = ens.thetas[:, 0] * model.batch_potential_hat(ens.thetas, w, batch)
        grad = model.batch_grad_V(ens.thetas, w, batch)
    mean_v = float(w @ v) / n
    var_v = float(w @ (v - mean_v) ** 2) / n
    grad_sq = float(w @ np.sum(grad**2, axis=1)) / n
    return TrajectoryRecord(
        step=ens.step_count,
        time=ens.time,
        energy=energy,
        mean_V=mean_v,
        var_V=var_v,
        grad_norm_sq=grad_sq,
        births=births,
        deaths=deaths,
        n=n,
    )


def _write_trajectory(path: Path, records):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write("# schema_version=1\n")
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in records:
            w.writerow(r.to_row())
    os.replace(tmp, path)


def run_experiment(config: ExperimentConfig, output_dir=None, quiet: bool = True) -> dict:
    """Execute one configured run; returns the summary dict (also written to
    summary.json).  Numeric failures mark the summary failed and keep the
    last valid record instead of raising."""
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.build_model()
    sampler = config.build_init_sampler()
    dyn = config.build_dynamics()

    root = np.random.SeedSequence(config.seed)
    init_ss, dyn_ss, eval_ss = root.spawn(3)
    ens = init_from_sampler(
        sampler,
        config.n,
        model.position_dim,
        seed=int(init_ss.generate_state(1)[0]),
        has_amplitude=model.has_amplitude,
    )
    rng = np.random.default_rng(dyn_ss)
    eval_rng = np.random.default_rng(eval_ss)

    t_start = time.perf_counter()
    records = [observe(model, ens, 0, 0, eval_rng)]
    pending = sorted(config.snapshot_times)
    snapshots = []

    def take_snapshots():
        while pending and ens.time >= pending[0] - 0.5 * dyn.dt:
            t_snap = pending.pop(0)
            path = out / f"snapshot_t{t_snap:g}.csv"
            write_snapshot_csv(ens, path)
            snapshots.append(path.name)

    take_snapshots()
    status, error = "ok", None
    births = deaths = 0
    try:
        for step in range(1, config.steps + 1):
            report = run_step(model, ens, dyn, rng)
            births += report.births
            deaths += report.deaths
            if step % config.record_every == 0 or step == config.steps:
                records.append(observe(model, ens, births, deaths, eval_rng))
                births = deaths = 0
            take_snapshots()
    except RUN_ERRORS as exc:
        status, error = "failed", f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t_start

    _write_trajectory(out / "trajectory.csv", records)
    fit = None
    if config.rate_fit is not None and status == "ok":
        res = rate_fit(records, tuple(config.rate_fit["window"]), config.rate_fit["form"])
        fit = {
            "form": res.form,
            "coefficient": res.coefficient,
            "exponent": res.exponent,
            "r_squared": res.r_squared,
            "window": list(res.window),
            "count": res.count,
        }
    last = records[-1]
    summary = {
        "schema_version": 1,
        "status": status,
        "error": error,
        "seed": config.seed,
        "final_step": last.step,
        "final_time": last.time,
        "final_energy": last.energy,
        "final_mean_V": last.mean_V,
        "final_var_V": last.var_V,
        "records": len(records),
        "snapshots": snapshots,
        "rate_fit": fit,
        "wall_time_s": wall,
        "config": config.normalized(),
    }
    _atomic_write(out / "summary.json", json.dumps(summary, indent=2))
    if not quiet:
        print(f"[{status}] steps={last.step} time={last.time:g} energy={last.energy:.6g} -> {out}")
    return summary


# ---------------------------------------------------------------------------
# sweeps


def _set_axis(data: dict, axis: str, value):
    keys = axis.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigurationError(f"axis {axis!r} does not resolve in the config")
        node = node[k]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigurationError(f"axis {axis!r} does not resolve in the config")
    if isinstance(node[leaf], bool) or not isinstance(node[leaf], (int, float, str)):
        raise ConfigurationError(f"axis {axis!r} must point at a numeric or enum field")
    node[leaf] = type(node[leaf])(value) if not isinstance(node[leaf], str) else str(value)


def _run_cell(args):
    data, cell_dir = args
    try:
        cfg = parse_config(data)
        summary = run_experiment(cfg, output_dir=cell_dir)
        return summary["status"], summary.get("final_energy"), summary.get("error")
    except (ConfigurationError, *RUN_ERRORS) as exc:
        return "failed", None, f"{type(exc).__name__}: {exc}"


def run_sweep(config: ExperimentConfig, axis: str, values, seeds: int,
              output_dir, jobs: int | None = None) -> dict:
    """Cross product of axis values and seeds; per-cell statistics in one
    report.  Cells run in a process pool and failures mark the cell only."""
    if seeds < 1:
        raise ConfigurationError("seeds must be >= 1")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = config.normalized()
    tasks = []
    for vi, value in enumerate(values):
        for si in range(seeds):
            data = json.loads(json.dumps(base))
            _set_axis(data, axis, value)
            # per-cell stream: documented derivation from (seed, value index, seed index)
            data["seed"] = int(
                np.random.SeedSequence([config.seed, vi, si]).generate_state(1)[0]
            )
            cell_dir = out / f"value_{vi:02d}" / f"seed_{si:03d}"
            tasks.append(((data, str(cell_dir)), vi, si))
    parse_config(json.loads(json.dumps(base)))  # fail fast on the base config

    n_jobs = jobs if jobs else (os.cpu_count() or 1)
    results = {}
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for (args, vi, si), res in zip(tasks, pool.map(_run_cell, [t[0] for t in tasks])):
                results[(vi, si)] = res
    else:
        for args, vi, si in tasks:
            results[(vi, si)] = _run_cell(args)

    cells = []
    for vi, value in enumerate(values):
        energies = []
        failures = []
        for si in range(seeds):
            status, energy, error = results[(vi, si)]
            if status == "ok":
                energies.append(energy)
            else:
                failures.append({"seed_index": si, "error": error})
        cells.append(
            {
                "value": value,
                "runs": seeds,
                "completed": len(energies),
                "mean_final_energy": float(np.mean(energies)) if energies else None,
                "std_final_energy": float(np.std(energies, ddof=1)) if len(energies) > 1 else None,
                "failures": failures,
            }
        )
    report = {
        "schema_version": 1,
        "axis": axis,
        "values": list(values),
        "seeds": seeds,
        "base_seed": config.seed,
        "cells": cells,
    }
    _atomic_write(out / "sweep.json", json.dumps(report, indent=2))
    return report
