"""Particle population data model.

An :class:`Ensemble` holds the full parameter rows of ``n`` particles in a
contiguous ``(n, D)`` array.  For models with an output-amplitude channel the
amplitude ``c`` is stored as column 0 and the remaining ``k`` columns are the
position; otherwise all ``D = k`` columns are the position.  Each particle
also carries a nonnegative weight (mean 1 across the population) and a
monotone birth id assigned at creation, used only for lineage diagnostics.

All randomness is drawn from explicitly passed ``numpy.random.Generator``
instances (PCG64 via ``numpy.random.default_rng``), so runs are reproducible
bit-for-bit given a seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ExtinctionError, NumericError

WEIGHT_MEAN_RTOL = 1e-12


@dataclass
class ParticleState:
    """Read-only view of a single particle."""

    position: np.ndarray
    amplitude: float | None
    weight: float
    birth_id: int


@dataclass
class Ensemble:
    thetas: np.ndarray  # (n, D) full parameter rows
    weights: np.ndarray  # (n,)
    birth_ids: np.ndarray  # (n,) int64
    has_amplitude: bool = False
    rng_seed: int = 0
    step_count: int = 0
    time: float = 0.0
    next_birth_id: int = field(default=0)

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.birth_ids = np.asarray(self.birth_ids, dtype=np.int64)
        if self.thetas.ndim != 2:
            raise ConfigurationError("thetas must be a (n, D) array")
        if self.next_birth_id == 0:
            self.next_birth_id = int(self.birth_ids.max(initial=-1)) + 1

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    @property
    def theta_dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def dimension(self) -> int:
        """Length k of the position vector (amplitude excluded)."""
        return self.theta_dim - (1 if self.has_amplitude else 0)

    @property
    def positions(self) -> np.ndarray:
        return self.thetas[:, 1:] if self.has_amplitude else self.thetas

    @property
    def amplitudes(self) -> np.ndarray | None:
        return self.thetas[:, 0] if self.has_amplitude else None

    def particle(self, i: int) -> ParticleState:
        if not 0 <= i < self.n:
            raise IndexError(f"particle index {i} out of range for n={self.n}")
        amp = float(self.thetas[i, 0]) if self.has_amplitude else None
        return ParticleState(
            position=self.positions[i].copy(),
            amplitude=amp,
            weight=float(self.weights[i]),
            birth_id=int(self.birth_ids[i]),
        )

    def copy(self) -> "Ensemble":
        return Ensemble(
            thetas=self.thetas.copy(),
            weights=self.weights.copy(),
            birth_ids=self.birth_ids.copy(),
            has_amplitude=self.has_amplitude,
            rng_seed=self.rng_seed,
            step_count=self.step_count,
            time=self.time,
            next_birth_id=self.next_birth_id,
        )

    def validate(self):
        if self.n < 1:
            raise ExtinctionError("population must contain at least one particle")
        if not np.all(np.isfinite(self.thetas)):
            bad = int(np.flatnonzero(~np.isfinite(self.thetas).all(axis=1))[0])
            raise NumericError(f"non-finite parameters at particle {bad}")
        if np.any(self.weights < 0):
            raise ConfigurationError("weights must be nonnegative")
        mean_w = float(self.weights.mean())
        if abs(mean_w - 1.0) > WEIGHT_MEAN_RTOL * max(1.0, abs(mean_w)):
            raise ConfigurationError(f"mean weight must be 1, got {mean_w!r}")

    def claim_birth_ids(self, count: int) -> np.ndarray:
        ids = np.arange(self.next_birth_id, self.next_birth_id + count, dtype=np.int64)
        self.next_birth_id += count
        return ids


def init_from_sampler(sampler, n: int, k: int, seed: int, has_amplitude: bool = False) -> Ensemble:
    """Draw n i.i.d. particles from `sampler`.

    `k` is the position dimension; for amplitude models the sampler must
    produce rows of length k+1 with the amplitude first.
    """
    if n < 1:
        raise ConfigurationError(f"population size must be >= 1, got {n}")
    if k < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {k}")
    want = k + (1 if has_amplitude else 0)
    if sampler.dim != want:
        raise ConfigurationError(
            f"sampler dimension {sampler.dim} does not match expected {want} "
            f"(k={k}, has_amplitude={has_amplitude})"
        )
    rng = np.random.default_rng(seed)
    thetas = sampler.sample(rng, n)
    ens = Ensemble(
        thetas=thetas,
        weights=np.ones(n),
        birth_ids=np.arange(n, dtype=np.int64),
        has_amplitude=has_amplitude,
        rng_seed=int(seed),
    )
    ens.validate()
    return ens


def empirical_expectation(ens: Ensemble, phi) -> float:
    """Weighted empirical mean n^-1 sum_i w_i phi(theta_i).

    `phi` receives one full parameter row as a 1D array and must return a
    finite scalar.
    """
    total = 0.0
    for i in range(ens.n):
        val = np.asarray(phi(ens.thetas[i]), dtype=float)
        if val.size != 1:
            raise NumericError(f"phi returned a non-scalar at particle {i}")
        v = float(val.reshape(()))
        if not np.isfinite(v):
            raise NumericError(f"phi returned a non-finite value at particle {i}")
        total += ens.weights[i] * v
    return total / ens.n


def clone_particle(ens: Ensemble, i: int, jitter: float = 0.0, rng: np.random.Generator | None = None) -> Ensemble:
    """Append a copy of particle i; optional gaussian jitter on the copy's position."""
    if not 0 <= i < ens.n:
        raise IndexError(f"particle index {i} out of range for n={ens.n}")
    if jitter < 0:
        raise ConfigurationError("jitter must be >= 0")
    row = ens.thetas[i].copy()
    if jitter > 0:
        if rng is None:
            raise ConfigurationError("jitter > 0 requires an rng")
        off = 1 if ens.has_amplitude else 0
        row[off:] += jitter * rng.standard_normal(ens.dimension)
    ens.thetas = np.vstack([ens.thetas, row[None, :]])
    ens.weights = np.append(ens.weights, ens.weights[i])
    ens.birth_ids = np.append(ens.birth_ids, ens.claim_birth_ids(1))
    return ens


def kill_particle(ens: Ensemble, i: int) -> Ensemble:
    """Remove particle i keeping the remaining order stable."""
    if not 0 <= i < ens.n:
        raise IndexError(f"particle index {i} out of range for n={ens.n}")
    if ens.n < 2:
        raise ExtinctionError("cannot kill the last particle")
    keep = np.ones(ens.n, dtype=bool)
    keep[i] = False
    ens.thetas = ens.thetas[keep]
    ens.weights = ens.weights[keep]
    ens.birth_ids = ens.birth_ids[keep]
    return ens


SNAPSHOT_HEADER = ["id", "birth_id", "weight", "amplitude"]


def write_snapshot_csv(ens: Ensemble, path) -> None:
    """Dump the population as CSV: id,birth_id,weight,amplitude,theta_0,...

    Reals carry 17 significant digits so float64 values round-trip exactly.
    The amplitude column is left empty for models without that channel.
    """
    k = ens.dimension
    header = SNAPSHOT_HEADER + [f"theta_{j}" for j in range(k)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        amps = ens.amplitudes
        pos = ens.positions
        for i in range(ens.n):
            row = [
                i,
                int(ens.birth_ids[i]),
                format(ens.weights[i], ".17g"),
                format(amps[i], ".17g") if amps is not None else "",
            ]
            row.extend(format(x, ".17g") for x in pos[i])
            w.writerow(row)
