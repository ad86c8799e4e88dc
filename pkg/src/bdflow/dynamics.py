"""Time-stepping schemes for the particle system.

Variants:

* ``gd-only``            forward-Euler transport along -grad V
* ``gd-bd``              transport + stochastic kill/duplicate pass with
                         strict population control
* ``gd-bd-fvariant``     same, rates passed through an odd nondecreasing f
* ``gd-bd-reinjection``  population deficits refilled from a prior with zero
                         output amplitude instead of cloning
* ``bd-only``            kill/duplicate pass alone (no transport)
* ``kmc-bd``             exact-event kinetic Monte Carlo for non-interacting
                         potentials, positions frozen between events
* ``proximal``           m transport steps, an implicit multiplicative
                         weight update, then systematic resampling

A particle is killed with probability 1 - exp(-alpha * vt * dt) when its
centered rate vt = V - mean(V) is positive, and duplicated with probability
1 - exp(-alpha * |vt| * dt) when negative.  Decisions within one pass use
rates frozen at the start of the pass and are independent Bernoulli draws;
the kinetic Monte Carlo path recomputes rates after every event instead.

RNG draw order per step is fixed (minibatch, then Bernoulli uniforms, then
population-control picks) so trajectories reproduce bitwise from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble
from .errors import ConfigurationError, ExtinctionError, NumericError, StepSizeError
from .potentials import PotentialModel, all_potentials

VARIANTS = (
    "gd-only",
    "gd-bd",
    "gd-bd-reinjection",
    "gd-bd-fvariant",
    "bd-only",
    "kmc-bd",
    "proximal",
)

RATE_SUM_ATOL = 1e-10


@dataclass(frozen=True)
class FVariant:
    """Odd nondecreasing rate transform; built-ins: identity, tanh(beta z)/beta."""

    kind: str = "identity"
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "tanh"):
            raise ConfigurationError(f"unknown f variant {self.kind!r}")
        if self.kind == "tanh" and not self.beta > 0:
            raise ConfigurationError("tanh f variant needs beta > 0")
        z = np.linspace(-10.0, 10.0, 1000)
        if np.any(z * self(z) < 0):
            raise ConfigurationError("f must satisfy z*f(z) >= 0 everywhere")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return z
        return np.tanh(self.beta * z) / self.beta


@dataclass
class StepReport:
    births: int = 0
    deaths: int = 0
    max_rate: float = 0.0
    population_corrections: int = 0


@dataclass
class DynamicsConfig:
    variant: str
    dt: float
    alpha: float = 1.0
    alpha_prime: float = 0.0
    f_spec: FVariant | None = None
    tau: float | None = None
    proximal_inner_iters: int = 100
    reinjection_prior: object | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.alpha < 0 or self.alpha_prime < 0:
            raise ConfigurationError("alpha and alpha_prime must be >= 0")
        if self.variant == "gd-bd-fvariant" and self.f_spec is None:
            raise ConfigurationError("gd-bd-fvariant requires f_spec")
        if self.variant == "gd-bd-reinjection" and self.reinjection_prior is None:
            raise ConfigurationError("gd-bd-reinjection requires reinjection_prior")
        if self.variant == "proximal":
            if self.tau is None:
                # default proximal horizon: 10 transport steps per cycle
                self.tau = self.alpha * 10 * self.dt
            if not self.tau > 0:
                raise ConfigurationError(f"tau must be > 0, got {self.tau}")

    @property
    def proximal_gd_steps(self) -> int:
        """Transport steps per proximal cycle, from tau = alpha * m * dt."""
        if self.alpha <= 0:
            return 1
        return max(1, round(self.tau / (self.alpha * self.dt)))


# ---------------------------------------------------------------------------
# rates


def centered_rate(model: PotentialModel, ens: Ensemble, batch: np.ndarray | None = None) -> np.ndarray:
    """vt_i = V(theta_i) - n^-1 sum_j V(theta_j); sums to zero by construction."""
    if model.is_exact:
        v = all_potentials(model, ens)
    else:
        if batch is None:
            raise ConfigurationError("batch models need a minibatch to evaluate rates")
        vhat = model.batch_potential_hat(ens.thetas, ens.weights, batch)
        v = ens.thetas[:, 0] * vhat
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise NumericError(f"non-finite potential at particle {bad}")
    vt = v - v.mean()
    scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
    if abs(float(vt.sum())) > RATE_SUM_ATOL * scale * max(1.0, ens.n / 1000):
        raise NumericError("centered rates failed to sum to zero")
    return vt


def fvariant_rate(model: PotentialModel, ens: Ensemble, f_spec: FVariant,
                  batch: np.ndarray | None = None) -> np.ndarray:
    """r_i = f(vt_i) - mean_j f(vt_j); the identity transform is a no-op so the
    base scheme is reproduced bitwise."""
    vt = centered_rate(model, ens, batch)
    if f_spec.kind == "identity":
        return vt
    fv = f_spec(vt)
    return fv - fv.mean()


def _effective_rates(model, ens, cfg, batch=None):
    if cfg.f_spec is not None:
        return fvariant_rate(model, ens, cfg.f_spec, batch)
    return centered_rate(model, ens, batch)


# ---------------------------------------------------------------------------
# transport


def gd_step(model: PotentialModel, ens: Ensemble, dt: float, batch: np.ndarray | None = None) -> Ensemble:
    """Synchronous forward-Euler update theta_i <- theta_i - grad V(theta_i) dt."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    if model.is_exact:
        vel = model.grad_F(ens.thetas)
        if model.is_interacting:
            _, fsum = model.kernel_weighted_sums(ens.thetas, ens.thetas, ens.weights)
            vel = vel + fsum / ens.n
    else:
        if batch is None:
            raise ConfigurationError("batch models need a minibatch for gradient steps")
        vel = model.batch_grad_V(ens.thetas, ens.weights, batch)
    if not np.all(np.isfinite(vel)):
        bad = int(np.flatnonzero(~np.isfinite(vel).all(axis=1))[0])
        raise NumericError(f"non-finite gradient at particle {bad}")
    ens.thetas = ens.thetas - dt * vel
    return ens


# ---------------------------------------------------------------------------
# birth-death pass


def bernoulli_phase(rates: np.ndarray, alpha: float, dt: float, rng: np.random.Generator):
    """Independent kill/duplicate draws from frozen rates.

    Returns boolean (kill, duplicate) masks; kill applies where rates > 0,
    duplication where rates < 0, each with probability 1 - exp(-alpha|r|dt).
    """
    rates = np.asarray(rates, dtype=float)
    p = -np.expm1(-alpha * np.abs(rates) * dt)
    u = rng.random(rates.size)
    kill = (rates > 0) & (u < p)
    dup = (rates < 0) & (u < p)
    return kill, dup


def _apply_birth_death(ens: Ensemble, kill: np.ndarray, dup: np.ndarray,
                       rng: np.random.Generator, prior_sampler=None) -> StepReport:
    """Rebuild the population after a Bernoulli pass, then enforce the exact
    head count: excess is removed uniformly, deficits are refilled by uniform
    cloning (or by `prior_sampler(count, rng)` rows when given)."""
    n0 = ens.n
    surv = np.flatnonzero(~kill)
    if surv.size == 0:
        raise ExtinctionError("all particles were killed in one birth-death pass")
    dup_idx = np.flatnonzero(dup & ~kill)
    report = StepReport(births=int(dup_idx.size), deaths=int(n0 - surv.size))

    idx = np.concatenate([surv, dup_idx])
    thetas = ens.thetas[idx]
    weights = ens.weights[idx]
    bids = np.concatenate([ens.birth_ids[surv], ens.claim_birth_ids(dup_idx.size)])

    n1 = idx.size
    report.population_corrections = abs(n1 - n0)
    if n1 > n0:
        drop = rng.choice(n1, size=n1 - n0, replace=False)
        keep = np.ones(n1, dtype=bool)
        keep[drop] = False
        thetas, weights, bids = thetas[keep], weights[keep], bids[keep]
    elif n1 < n0:
        deficit = n0 - n1
        if prior_sampler is None:
            parents = rng.choice(n1, size=deficit, replace=True)
            new_rows = thetas[parents]
            new_w = weights[parents]
        else:
            new_rows = prior_sampler(deficit, rng)
            new_w = np.ones(deficit)
        thetas = np.vstack([thetas, new_rows])
        weights = np.concatenate([weights, new_w])
        bids = np.concatenate([bids, ens.claim_birth_ids(deficit)])

    ens.thetas, ens.weights, ens.birth_ids = thetas, weights, bids
    return report


def birth_death_step(model: PotentialModel, ens: Ensemble, cfg: DynamicsConfig,
                     rng: np.random.Generator, rates: np.ndarray | None = None) -> StepReport:
    if rates is None:
        rates = _effective_rates(model, ens, cfg)
    kill, dup = bernoulli_phase(rates, cfg.alpha, cfg.dt, rng)
    report = _apply_birth_death(ens, kill, dup, rng)
    report.max_rate = float(cfg.alpha * np.max(np.abs(rates), initial=0.0) * cfg.dt)
    return report


def reinjection_step(model: PotentialModel, ens: Ensemble, cfg: DynamicsConfig,
                     rng: np.random.Generator, rates: np.ndarray | None = None) -> StepReport:
    """Birth-death pass whose deficit refill samples fresh particles with zero
    amplitude and positions from the configured prior."""
    if not ens.has_amplitude:
        raise ConfigurationError("reinjection needs a model with an amplitude channel")
    prior = cfg.reinjection_prior
    if prior is None:
        raise ConfigurationError("reinjection_prior is not configured")
    if prior.dim != ens.dimension:
        raise ConfigurationError(
            f"reinjection prior dimension {prior.dim} != position dimension {ens.dimension}"
        )

    def sample_prior(count: int, r: np.random.Generator) -> np.ndarray:
        rows = np.zeros((count, ens.theta_dim))
        rows[:, 1:] = prior.sample(r, count)
        return rows

    if rates is None:
        rates = _effective_rates(model, ens, cfg)
    kill, dup = bernoulli_phase(rates, cfg.alpha, cfg.dt, rng)
    report = _apply_birth_death(ens, kill, dup, rng, prior_sampler=sample_prior)
    report.max_rate = float(cfg.alpha * np.max(np.abs(rates), initial=0.0) * cfg.dt)
    return report


# ---------------------------------------------------------------------------
# exact-event simulation (no transport)

KMC_KILL = 0  # event particle killed, uniform survivor duplicated
KMC_DUP = 1  # event particle duplicated, uniform other killed


@dataclass
class KMCLog:
    times: np.ndarray
    kinds: np.ndarray
    mean_energy: np.ndarray  # population mean of F after each event
    initial_mean: float
    horizon: float

    @property
    def n_events(self) -> int:
        return self.times.size

    def mean_energy_at(self, t: float) -> float:
        """Population mean energy at absolute log time t (piecewise constant)."""
        i = int(np.searchsorted(self.times, t, side="right"))
        return self.initial_mean if i == 0 else float(self.mean_energy[i - 1])


def kmc_run(model: PotentialModel, ens: Ensemble, cfg: DynamicsConfig, horizon: float,
            rng: np.random.Generator) -> KMCLog:
    """Exact-in-time kill/duplicate simulation with positions frozen.

    Waiting times are exponential with the total rate alpha * sum_i |vt_i|;
    the event particle is chosen proportionally to |vt_i| and rates are
    recomputed after every event.  Requires K = 0 so V depends on a particle
    only through F.
    """
    if model.is_interacting:
        raise ConfigurationError("kinetic Monte Carlo requires a non-interacting model")
    if horizon < 0:
        raise ConfigurationError("horizon must be >= 0")
    n = ens.n
    f_vals = model.F(ens.thetas)
    if not np.all(np.isfinite(f_vals)):
        raise NumericError("non-finite potential in kmc_run")
    initial_mean = float(f_vals.mean())
    times, kinds, means = [], [], []
    t = 0.0
    while True:
        vt = f_vals - f_vals.mean()
        rates = cfg.alpha * np.abs(vt)
        total = float(rates.sum())
        if total <= 0.0:
            break
        wait = rng.exponential(1.0 / total)
        if t + wait > horizon:
            break
        t += wait
        cum = np.cumsum(rates)
        i = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), n - 1)
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        if vt[i] > 0:
            # kill i; duplicate the uniform survivor j into its slot
            f_vals[i] = f_vals[j]
            ens.thetas[i] = ens.thetas[j]
            ens.birth_ids[i] = ens.claim_birth_ids(1)[0]
            kinds.append(KMC_KILL)
        else:
            # duplicate i; kill the uniform other j
            f_vals[j] = f_vals[i]
            ens.thetas[j] = ens.thetas[i]
            ens.birth_ids[j] = ens.claim_birth_ids(1)[0]
            kinds.append(KMC_DUP)
        times.append(t)
        means.append(float(f_vals.mean()))
    ens.time += horizon
    return KMCLog(
        times=np.asarray(times),
        kinds=np.asarray(kinds, dtype=np.int8),
        mean_energy=np.asarray(means),
        initial_mean=initial_mean,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# proximal weights


def proximal_weight_update(model: PotentialModel, ens: Ensemble, tau: float,
                           inner_iters: int = 100, tol: float = 1e-10) -> Ensemble:
    """Implicit multiplicative weight update solved by fixed-point sweeps.

    Solves w_i = C^-1 w_i^prev exp(-tau V_i(w)) with V recomputed from the
    current iterate and C normalizing the mean weight to 1.  The exact loss
    never increases across a converged update.
    """
    if not model.is_exact:
        raise ConfigurationError("proximal weight updates need an exact model")
    if not tau > 0:
        raise ConfigurationError(f"tau must be > 0, got {tau}")
    thetas = ens.thetas
    f_vals = model.F(thetas)
    base = ens.weights.copy()
    w = base.copy()
    prev_change = math.inf
    grows = 0
    for _ in range(max(1, inner_iters)):
        if model.is_interacting:
            v = f_vals + model.kernel_mean(thetas, thetas, w) / ens.n
        else:
            v = f_vals
        raw = base * np.exp(-tau * (v - v.min()))
        mean_raw = raw.mean()
        if not np.isfinite(mean_raw) or mean_raw <= 0:
            raise NumericError("proximal update produced a degenerate weight vector")
        w_new = raw / mean_raw
        change = float(np.max(np.abs(w_new - w)))
        w = w_new
        if change < tol:
            break
        if change > prev_change:
            grows += 1
            if grows >= 3:
                raise StepSizeError(
                    "proximal iteration diverged for 3 consecutive sweeps; reduce tau"
                )
        else:
            grows = 0
        prev_change = change
    ens.weights = w
    return ens


def resample_weights(ens: Ensemble, rng: np.random.Generator) -> StepReport:
    """Systematic resampling to unit weights.

    Particle i appears N_i in {floor(w_i), ceil(w_i)} times with E[N_i] = w_i
    and sum N_i = n exactly; survivor order follows the original index order.
    """
    w = ens.weights
    if np.any(w < 0):
        raise ConfigurationError("weights must be nonnegative before resampling")
    total = float(w.sum())
    if total <= 0:
        raise ExtinctionError("all weights are zero; cannot resample")
    n = ens.n
    cum = np.cumsum(w)
    pos = (np.arange(n) + rng.random()) * (total / n)
    idx = np.searchsorted(cum, pos, side="right")
    np.clip(idx, 0, n - 1, out=idx)
    counts = np.bincount(idx, minlength=n)

    rep = np.repeat(np.arange(n), counts)
    new_bids = ens.birth_ids[rep].copy()
    starts = np.cumsum(counts) - counts
    first = np.zeros(rep.size, dtype=bool)
    first[starts[counts > 0]] = True
    new_bids[~first] = ens.claim_birth_ids(int((~first).sum()))

    ens.thetas = ens.thetas[rep]
    ens.weights = np.ones(n)
    ens.birth_ids = new_bids
    return StepReport(births=int((~first).sum()), deaths=int((counts == 0).sum()))


# ---------------------------------------------------------------------------
# orchestration


def run_step(model: PotentialModel, ens: Ensemble, cfg: DynamicsConfig,
             rng: np.random.Generator) -> StepReport:
    """Advance one full dynamics step; population size is exactly conserved."""
    n0 = ens.n
    variant = cfg.variant
    batch = None
    if not model.is_exact:
        if variant in ("kmc-bd", "proximal"):
            raise ConfigurationError(f"variant {variant} requires an exact model")
        batch = model.sample_batch(rng)

    if variant == "gd-only":
        gd_step(model, ens, cfg.dt, batch)
        report = StepReport()
        ens.step_count += 1
    elif variant in ("gd-bd", "gd-bd-fvariant"):
        gd_step(model, ens, cfg.dt, batch)
        rates = _effective_rates(model, ens, cfg, batch)
        report = birth_death_step(model, ens, cfg, rng, rates=rates)
        ens.step_count += 1
    elif variant == "gd-bd-reinjection":
        gd_step(model, ens, cfg.dt, batch)
        rates = _effective_rates(model, ens, cfg, batch)
        report = reinjection_step(model, ens, cfg, rng, rates=rates)
        ens.step_count += 1
    elif variant == "bd-only":
        rates = _effective_rates(model, ens, cfg, batch)
        report = birth_death_step(model, ens, cfg, rng, rates=rates)
        ens.step_count += 1
    elif variant == "kmc-bd":
        log = kmc_run(model, ens, cfg, cfg.dt, rng)
        report = StepReport(births=log.n_events, deaths=log.n_events)
        ens.step_count += 1
    elif variant == "proximal":
        for _ in range(cfg.proximal_gd_steps):
            gd_step(model, ens, cfg.dt, batch)
        proximal_weight_update(model, ens, cfg.tau, cfg.proximal_inner_iters)
        report = resample_weights(ens, rng)
        ens.step_count += cfg.proximal_gd_steps
    else:  # pragma: no cover - guarded by DynamicsConfig
        raise ConfigurationError(f"unknown variant {variant!r}")

    ens.time = ens.step_count * cfg.dt  # exact, no float accumulation drift
    if ens.n != n0:
        raise NumericError(f"population changed from {n0} to {ens.n} within one step")
    ens.validate()
    return report
