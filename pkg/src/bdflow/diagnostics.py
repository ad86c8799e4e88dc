"""Observables: energies, decay terms, optimality residuals, fluctuation
scaling against the grid reference, and rate fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsConfig, run_step
from .ensemble import Ensemble, init_from_sampler
from .errors import ConfigurationError, FitError
from .meanfield import GridStepper, grid_from_sampler
from .potentials import PotentialModel, all_potentials, probe_potentials

TRAJECTORY_COLUMNS = (
    "step",
    "time",
    "energy",
    "mean_V",
    "var_V",
    "grad_norm_sq",
    "births",
    "deaths",
    "n",
)


@dataclass
class TrajectoryRecord:
    step: int
    time: float
    energy: float
    mean_V: float
    var_V: float
    grad_norm_sq: float
    births: int
    deaths: int
    n: int

    def to_row(self) -> list[str]:
        return [
            str(self.step),
            format(self.time, ".17g"),
            format(self.energy, ".17g"),
            format(self.mean_V, ".17g"),
            format(self.var_V, ".17g"),
            format(self.grad_norm_sq, ".17g"),
            str(self.births),
            str(self.deaths),
            str(self.n),
        ]


def ensemble_energy(model: PotentialModel, ens: Ensemble) -> float:
    """E = n^-1 sum w_i F_i + (2 n^2)^-1 sum_ij w_i w_j K_ij."""
    n = ens.n
    e = float(ens.weights @ model.F(ens.thetas)) / n
    if model.is_interacting:
        vsum = model.kernel_mean(ens.thetas, ens.thetas, ens.weights)
        e += 0.5 * float(ens.weights @ vsum) / n**2
    return e


def energy_decay_terms(model: PotentialModel, ens: Ensemble) -> tuple[float, float]:
    """(integral |grad V|^2 dmu, integral (V - Vbar)^2 dmu), both nonnegative."""
    n = ens.n
    w = ens.weights
    grad = model.grad_F(ens.thetas)
    v = model.F(ens.thetas).copy()
    if model.is_interacting:
        vsum, fsum = model.kernel_weighted_sums(ens.thetas, ens.thetas, w)
        grad = grad + fsum / n
        v += vsum / n
    grad_term = float(w @ np.sum(grad**2, axis=1)) / n
    vbar = float(w @ v) / n
    var_term = float(w @ (v - vbar) ** 2) / n
    return grad_term, var_term


def euler_lagrange_residual(model: PotentialModel, ens: Ensemble,
                            probe_points: np.ndarray) -> tuple[float, float]:
    """Optimality diagnostics at a candidate minimizer.

    support_residual: max_i |V(theta_i) - Vbar| over the particles.
    exterior_violation: max(0, Vbar - min V(probe)) over the probe points,
    with probe potentials evaluated against the empirical measure.
    Both vanish at a global minimizer.
    """
    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probes.size == 0:
        raise ConfigurationError("probe set must be nonempty")
    v = all_potentials(model, ens)
    vbar = float(ens.weights @ v) / ens.n
    support_residual = float(np.max(np.abs(v - vbar)))
    probe_v = probe_potentials(model, ens, probes)
    exterior_violation = max(0.0, vbar - float(probe_v.min()))
    return support_residual, exterior_violation


# ---------------------------------------------------------------------------
# fluctuation scaling


@dataclass
class FluctuationReport:
    n_list: list
    checkpoints: list
    rms: np.ndarray  # (n_checkpoints, n_phis, n_populations)
    slope: float | None
    slope_checkpoint: float
    quench_ratios: np.ndarray  # per phi, at the largest population
    skipped_reason: str | None = None

    @property
    def quench_ratio(self) -> float:
        return float(np.max(self.quench_ratios))


def fluctuation_scaling(model: PotentialModel, cfg: DynamicsConfig, init_sampler,
                        n_list, seeds: int, test_fns, *,
                        checkpoints=(0.2, 1.0, 5.0), slope_checkpoint: float = 1.0,
                        grid_cells: int = 8192, grid_dt: float | None = None,
                        seed: int = 0) -> FluctuationReport:
    """Root-mean-square gap between particle and grid moments across seeds.

    For every population size the same grid solution serves as reference;
    the returned slope is the pooled least-squares slope of log RMS against
    log n at `slope_checkpoint`, and quench ratios compare the last
    checkpoint to the first at the largest population.
    """
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 3 or n_list[-1] < 10 * n_list[0]:
        raise ConfigurationError("n_list needs >= 3 sizes spanning at least one decade")
    if model.has_amplitude or model.theta_dim != 1 or not model.is_exact:
        raise ConfigurationError("fluctuation scaling needs an exact 1D model")
    if cfg.variant not in ("gd-only", "bd-only", "gd-bd"):
        raise ConfigurationError("fluctuation scaling supports gd-only, bd-only, gd-bd")
    checkpoints = sorted(checkpoints)
    if slope_checkpoint not in checkpoints:
        raise ConfigurationError("slope_checkpoint must be one of the checkpoints")

    # deterministic grid reference
    grid = grid_from_sampler(init_sampler, grid_cells)
    if grid_dt is None:
        stepper0 = GridStepper(model, grid.copy(), cfg)
        v0 = stepper0.potential()
        vmax = float(np.max(np.abs(np.diff(v0))) / grid.dx)
        grid_dt = min(cfg.dt, 0.45 * grid.dx / max(vmax, 1e-12))
    g_cfg = DynamicsConfig(variant=cfg.variant, dt=grid_dt, alpha=cfg.alpha)
    stepper = GridStepper(model, grid, g_cfg)
    grid_moments = np.empty((len(checkpoints), len(test_fns)))
    for ci, t in enumerate(checkpoints):
        stepper.run_until(t)
        for pi, phi in enumerate(test_fns):
            grid_moments[ci, pi] = grid.moment(phi)

    # particle sweeps
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(n_list) * seeds)
    rms = np.zeros((len(checkpoints), len(test_fns), len(n_list)))
    steps_per = [round(t / cfg.dt) for t in checkpoints]
    for ni, n in enumerate(n_list):
        sq_sum = np.zeros((len(checkpoints), len(test_fns)))
        for si in range(seeds):
            child = children[ni * seeds + si]
            init_seed, dyn_seed = (int(s) for s in child.generate_state(2))
            ens = init_from_sampler(init_sampler, n, 1, init_seed)
            rng = np.random.default_rng(dyn_seed)
            done = 0
            for ci, target in enumerate(steps_per):
                for _ in range(target - done):
                    run_step(model, ens, cfg, rng)
                done = target
                for pi, phi in enumerate(test_fns):
                    m = float(ens.weights @ np.asarray(phi(ens.thetas[:, 0]))) / ens.n
                    sq_sum[ci, pi] += (m - grid_moments[ci, pi]) ** 2
        rms[:, :, ni] = np.sqrt(sq_sum / seeds)

    slope_idx = checkpoints.index(slope_checkpoint)
    slope_rms = rms[slope_idx]
    skipped = None
    slope = None
    if np.all(slope_rms < 1e-12):
        skipped = "no stochasticity: all RMS gaps vanish at the slope checkpoint"
    else:
        x = np.tile(np.log(np.asarray(n_list, dtype=float)), len(test_fns))
        y = np.log(np.maximum(slope_rms, 1e-300)).ravel()
        slope = float(np.polyfit(x, y, 1)[0])

    quench = rms[-1, :, -1] / np.maximum(rms[0, :, -1], 1e-300)
    return FluctuationReport(
        n_list=n_list,
        checkpoints=list(checkpoints),
        rms=rms,
        slope=slope,
        slope_checkpoint=slope_checkpoint,
        quench_ratios=quench,
        skipped_reason=skipped,
    )


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class FitResult:
    coefficient: float
    exponent: float  # power-law exponent or exponential rate
    r_squared: float
    form: str
    window: tuple
    count: int


def rate_fit(records, window, form: str) -> FitResult:
    """Least-squares fit of log E against log t (power-law) or t (exponential)
    over the records whose time lies in the window."""
    if form not in ("power-law", "exponential"):
        raise ConfigurationError(f"form must be power-law or exponential, got {form!r}")
    t0, t1 = window
    sel = [r for r in records if t0 <= r.time <= t1]
    if len(sel) < 10:
        raise FitError(f"need >= 10 records in window, found {len(sel)}")
    t = np.array([r.time for r in sel])
    e = np.array([r.energy for r in sel])
    if np.any(e <= 0):
        raise FitError("nonpositive energies in the fit window")
    if form == "power-law":
        if np.any(t <= 0):
            raise FitError("power-law fits need strictly positive times")
        x = np.log(t)
    else:
        x = t
    y = np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(
        coefficient=float(np.exp(intercept)),
        exponent=float(slope),
        r_squared=r2,
        form=form,
        window=(float(t0), float(t1)),
        count=len(sel),
    )
