"""Experiment configuration shared by the CLI commands."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LoopcatError
from .fock import squeezing_param_from_db
from .homodyne import DEFAULT_PHASES_DEG, PhaseGridSpec
from .modes import FilterSpec
from .network import VBSProgram, preset
from .tomography import MLEConfig


@dataclass(frozen=True)
class ExperimentConfig:
    squeezing_db: float = 2.6
    gamma1_hz: float = 28.1e6
    gamma2_hz: float = 100e6
    tau_ns: float = 60.8
    kappa_in: float = 0.039
    kappa_out: float = 0.283
    phases_deg: tuple = DEFAULT_PHASES_DEG
    samples_per_phase: int = 3000
    n_max: int = 20
    truth_n_max: int = 30
    # preset name ("memory", "fig4b", ...) or {"couplings": [...]} for an explicit program
    program: object = "memory"
    round_trips: tuple = tuple(range(11))
    wigner_round_trips: tuple = (0, 3, 6, 9)
    wigner_half_range: float = 5.0
    wigner_resolution: int = 101
    bootstrap: int = 50
    eta_mode: float = 1.0
    p_fake: float = 0.0
    max_iterations: int = 2000
    log_likelihood_tolerance: float = 1e-9
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("phases_deg", "round_trips", "wigner_round_trips"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{name} must be a list")
            object.__setattr__(self, name, tuple(value))
        if isinstance(self.program, list):
            raise ConfigError("program must be a preset name or an object with couplings")
        try:
            self.validate()
        except ConfigError:
            raise
        except (LoopcatError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def validate(self):
        squeezing_param_from_db(self.squeezing_db)
        self.filter_spec
        self.phase_grid
        self.mle_config
        if not self.tau_ns > 0:
            raise ConfigError("tau_ns must be positive")
        if not (0 <= self.kappa_in < 1 and 0 <= self.kappa_out < 1):
            raise ConfigError("losses must lie in [0, 1)")
        if any(int(n) != n or n < 0 for n in self.round_trips) or list(self.round_trips) != sorted(set(self.round_trips)):
            raise ConfigError("round_trips must be strictly increasing nonnegative integers")
        if not set(self.wigner_round_trips) <= set(self.round_trips):
            raise ConfigError("wigner_round_trips must be a subset of round_trips")
        if self.truth_n_max < self.n_max:
            raise ConfigError("truth_n_max must be >= n_max")
        if self.bootstrap != 0 and self.bootstrap < 50:
            raise ConfigError("bootstrap must be 0 (disabled) or >= 50")
        if not 0 <= self.eta_mode <= 1 or not 0 <= self.p_fake <= 1:
            raise ConfigError("eta_mode and p_fake must lie in [0, 1]")
        if self.wigner_resolution < 16:
            raise ConfigError("wigner_resolution must be >= 16")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if isinstance(self.program, dict):
            self.explicit_program
        elif not isinstance(self.program, str):
            raise ConfigError("program must be a string or an object")

    @property
    def s(self):
        return squeezing_param_from_db(self.squeezing_db)

    @property
    def tau(self):
        return self.tau_ns * 1e-9

    @property
    def filter_spec(self):
        return FilterSpec.from_hz(self.gamma1_hz, self.gamma2_hz)

    @property
    def phase_grid(self):
        return PhaseGridSpec.from_degrees(self.phases_deg, self.samples_per_phase)

    @property
    def mle_config(self):
        return MLEConfig(self.n_max, self.max_iterations, self.log_likelihood_tolerance)

    @property
    def explicit_program(self):
        d = dict(self.program)
        d.setdefault("kappa_in", self.kappa_in)
        d.setdefault("kappa_out", self.kappa_out)
        d.setdefault("tau_ns", self.tau_ns)
        return VBSProgram.from_dict(d)

    def bs_program(self, name=None):
        """Program for the beam-splitter experiment (``name`` overrides the configured preset)."""
        if name is None and isinstance(self.program, dict):
            return self.explicit_program
        name = name or self.program
        if name == "memory" or name.startswith("memory("):
            raise ConfigError(f"{name!r} is not a beam-splitter preset")
        return preset(name, self.kappa_in, self.kappa_out, self.tau)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(payload)


def task_seed(root, stage, *key):
    """Independent child seed for one (stage, task) pair of a run."""
    return np.random.SeedSequence(int(root), spawn_key=(int(stage), *(int(k) for k in key)))


STAGE_SAMPLES = 1
STAGE_BOOTSTRAP = 2
STAGE_TRACES = 3


def finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x
