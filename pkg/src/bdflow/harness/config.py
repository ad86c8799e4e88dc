"""Experiment configuration: one JSON document, strict schema, full echo.

Unknown keys anywhere are rejected so typos cannot silently change an
experiment.  ``ExperimentConfig.normalized()`` emits a canonical dict with
all defaults filled in; parsing that echo reproduces the config exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..dynamics import VARIANTS, DynamicsConfig, FVariant
from ..errors import ConfigurationError
from ..potentials import build_model
from ..samplers import build_sampler

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version",
    "model",
    "init",
    "dynamics",
    "n",
    "steps",
    "seed",
    "record_every",
    "snapshot_times",
    "output_dir",
    "rate_fit",
}
_DYNAMICS_KEYS = {"variant", "dt", "alpha", "alpha_prime", "f", "tau",
                  "proximal_inner_iters", "reinjection"}
_RATE_FIT_KEYS = {"window", "form"}


def _require_int(value, name, minimum):
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    model: dict
    init: dict
    dynamics: dict
    n: int
    steps: int
    seed: int
    record_every: int = 1
    snapshot_times: tuple = ()
    output_dir: str = "."
    rate_fit: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def build_model(self):
        return build_model(self.model)

    def build_init_sampler(self):
        return build_sampler(self.init)

    def build_dynamics(self) -> DynamicsConfig:
        d = self.dynamics
        f_spec = None
        if d.get("f") is not None:
            fd = d["f"]
            extra = set(fd) - {"kind", "beta"}
            if extra:
                raise ConfigurationError(f"unknown f keys {sorted(extra)}")
            f_spec = FVariant(kind=fd["kind"], beta=float(fd.get("beta", 1.0)))
        prior = build_sampler(d["reinjection"]) if d.get("reinjection") is not None else None
        return DynamicsConfig(
            variant=d["variant"],
            dt=float(d["dt"]),
            alpha=float(d.get("alpha", 1.0)),
            alpha_prime=float(d.get("alpha_prime", 0.0)),
            f_spec=f_spec,
            tau=float(d["tau"]) if d.get("tau") is not None else None,
            proximal_inner_iters=int(d.get("proximal_inner_iters", 100)),
            reinjection_prior=prior,
        )

    def normalized(self) -> dict:
        """Canonical config echo; parsing it reproduces this config."""
        dyn = self.build_dynamics()
        d = {
            "variant": dyn.variant,
            "dt": dyn.dt,
            "alpha": dyn.alpha,
            "alpha_prime": dyn.alpha_prime,
            "f": None if dyn.f_spec is None else {"kind": dyn.f_spec.kind, "beta": dyn.f_spec.beta},
            "tau": dyn.tau,
            "proximal_inner_iters": dyn.proximal_inner_iters,
            "reinjection": None if dyn.reinjection_prior is None else dyn.reinjection_prior.to_spec(),
        }
        return {
            "schema_version": self.schema_version,
            "model": self.model,
            "init": self.build_init_sampler().to_spec(),
            "dynamics": d,
            "n": self.n,
            "steps": self.steps,
            "seed": self.seed,
            "record_every": self.record_every,
            "snapshot_times": [float(t) for t in self.snapshot_times],
            "output_dir": self.output_dir,
            "rate_fit": self.rate_fit,
        }


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    missing = {"model", "init", "dynamics", "n", "steps", "seed"} - set(data)
    if missing:
        raise ConfigurationError(f"missing config keys {sorted(missing)}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version!r}")
    dyn = data["dynamics"]
    if not isinstance(dyn, dict):
        raise ConfigurationError("dynamics must be an object")
    unknown = set(dyn) - _DYNAMICS_KEYS
    if unknown:
        raise ConfigurationError(f"unknown dynamics keys {sorted(unknown)}")
    if "variant" not in dyn or "dt" not in dyn:
        raise ConfigurationError("dynamics needs at least variant and dt")
    if dyn["variant"] not in VARIANTS:
        raise ConfigurationError(f"unknown variant {dyn['variant']!r}")
    rate_fit = data.get("rate_fit")
    if rate_fit is not None:
        unknown = set(rate_fit) - _RATE_FIT_KEYS
        if unknown or set(rate_fit) != _RATE_FIT_KEYS:
            raise ConfigurationError("rate_fit takes exactly the keys window, form")
        if len(rate_fit["window"]) != 2:
            raise ConfigurationError("rate_fit window must be [t0, t1]")
    snapshot_times = data.get("snapshot_times", [])
    if any(t < 0 for t in snapshot_times):
        raise ConfigurationError("snapshot_times must be >= 0")

    cfg = ExperimentConfig(
        model=data["model"],
        init=data["init"],
        dynamics=dyn,
        n=_require_int(data["n"], "n", 1),
        steps=_require_int(data["steps"], "steps", 1),
        seed=_require_int(data["seed"], "seed", 0),
        record_every=_require_int(data.get("record_every", 1), "record_every", 1),
        snapshot_times=tuple(float(t) for t in snapshot_times),
        output_dir=str(data.get("output_dir", ".")),
        rate_fit=rate_fit,
        schema_version=version,
    )
    # construct everything once so bad specs fail at parse time
    model = cfg.build_model()
    sampler = cfg.build_init_sampler()
    if sampler.dim != model.theta_dim:
        raise ConfigurationError(
            f"init sampler dimension {sampler.dim} does not match the model's "
            f"parameter dimension {model.theta_dim}"
        )
    dyn_cfg = cfg.build_dynamics()
    if dyn_cfg.variant == "gd-bd-reinjection":
        if not model.has_amplitude:
            raise ConfigurationError("reinjection requires a model with an amplitude channel")
        if dyn_cfg.reinjection_prior.dim != model.position_dim:
            raise ConfigurationError("reinjection prior must cover the position space")
    if dyn_cfg.variant in ("kmc-bd", "proximal") and not model.is_exact:
        raise ConfigurationError(f"variant {dyn_cfg.variant} requires an exact model")
    if dyn_cfg.variant == "kmc-bd" and model.is_interacting:
        raise ConfigurationError("kmc-bd requires a non-interacting model")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {p}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}")
    return parse_config(data)
