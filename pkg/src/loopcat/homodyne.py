"""Synthetic homodyne data and the estimators that consume it.

Quadrature samples come from inverse-CDF sampling of the Fock-basis pdf.
Time traces are white-noise records whose component along a chosen mode is
replaced by draws from a (possibly non-Gaussian) state; the estimators recover
that mode either as a principal eigenvector of the autocorrelation matrix or by
a parametric variance search.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .errors import (
    AmbiguityError,
    ConfigError,
    DomainError,
    GridMismatchError,
    ObjectiveError,
    PreconditionError,
    SupportError,
)
from .fock import _as_single_mode, quad_pdf
from .modes import TAU, FilterSpec, TemporalMode, TimeGrid, mode_from_response

X_LIMIT = 8.0
X_NODES = 4096
MASS_TOL = 1e-8
DEFAULT_PHASES_DEG = tuple(range(-90, 76, 15))
DEFAULT_SAMPLES_PER_PHASE = 3000


def quadrature_nodes():
    return np.linspace(-X_LIMIT, X_LIMIT, X_NODES)


def wrap_phase(theta):
    """Map angles into [-pi, pi)."""
    return (np.asarray(theta, dtype=float) + np.pi) % (2 * np.pi) - np.pi


class HomodyneSample(NamedTuple):
    theta: float
    x: float


@dataclass(frozen=True)
class PhaseGridSpec:
    phases: tuple
    samples_per_phase: int

    def __post_init__(self):
        ph = tuple(float(p) for p in self.phases)
        if not ph:
            raise DomainError("phase grid is empty")
        if int(self.samples_per_phase) < 1:
            raise DomainError("samples_per_phase must be >= 1")
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "samples_per_phase", int(self.samples_per_phase))

    @classmethod
    def from_degrees(cls, phases_deg, samples_per_phase):
        return cls(tuple(np.deg2rad(phases_deg)), samples_per_phase)

    @classmethod
    def standard(cls, samples_per_phase=DEFAULT_SAMPLES_PER_PHASE):
        """12 phases from -90 to 75 degrees in 15 degree steps."""
        return cls.from_degrees(DEFAULT_PHASES_DEG, samples_per_phase)


@dataclass(frozen=True, eq=False)
class HomodyneSamples:
    """Column-oriented collection of (theta, x) pairs."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        th = wrap_phase(self.theta)
        x = np.asarray(self.x, dtype=float)
        if th.shape != x.shape or th.ndim != 1:
            raise DomainError("theta and x must be 1-D arrays of equal length")
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite quadrature value")
        th.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return len(self.x)

    def __iter__(self):
        for t, v in zip(self.theta, self.x):
            yield HomodyneSample(float(t), float(v))

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return HomodyneSample(float(self.theta[idx]), float(self.x[idx]))
        return HomodyneSamples(self.theta[idx], self.x[idx])

    def phases(self):
        return np.unique(self.theta)

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        return cls(np.concatenate([p.theta for p in parts]), np.concatenate([p.x for p in parts]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta_deg", "x"])
            for t, v in zip(np.rad2deg(self.theta), self.x):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def read_csv(cls, path):
        """Parse a (theta_deg, x) CSV; malformed rows raise ConfigError with the line number."""
        thetas, xs = [], []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
                    continue
                if lineno == 1 and row[0].strip() == "theta_deg":
                    continue
                if len(row) != 2:
                    raise ConfigError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    t, v = float(row[0]), float(row[1])
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
                if not (math.isfinite(t) and math.isfinite(v)):
                    raise ConfigError(f"{path}:{lineno}: non-finite value in {row!r}")
                thetas.append(t)
                xs.append(v)
        if not xs:
            raise ConfigError(f"{path}:1: no samples found")
        return cls(np.deg2rad(thetas), np.array(xs))


class QuadratureSampler:
    """Cached cumulative tables of quad_pdf(rho, theta, .) on the node grid."""

    def __init__(self, rho):
        _as_single_mode(rho)
        self.rho = rho
        self.nodes = quadrature_nodes()
        self._tables = {}

    def table(self, theta):
        key = float(theta)
        if key not in self._tables:
            pdf = np.clip(quad_pdf(self.rho, key, self.nodes), 0.0, None)
            dx = self.nodes[1] - self.nodes[0]
            cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * dx / 2)])
            lost = abs(1.0 - cdf[-1] / self.rho.trace())
            if lost > MASS_TOL:
                raise SupportError(f"pdf mass outside [-{X_LIMIT}, {X_LIMIT}] is {lost:.2e} at theta={key}")
            self._tables[key] = cdf / cdf[-1]
        return self._tables[key]

    def draw(self, theta, n, rng):
        cdf = self.table(theta)
        u = rng.random(n)
        i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(cdf) - 2)
        lo, hi = cdf[i], cdf[i + 1]
        width = hi - lo
        frac = np.divide(u - lo, width, out=np.full_like(u, 0.5), where=width > 0)
        return self.nodes[i] + frac * (self.nodes[i + 1] - self.nodes[i])


def as_seed_sequence(seed):
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _rngs(seed, n):
    return [np.random.default_rng(s) for s in as_seed_sequence(seed).spawn(n)]


def sample_quadratures(rho, spec, seed):
    """Draw ``samples_per_phase`` quadratures at each phase; one child seed per phase."""
    sampler = QuadratureSampler(rho)
    thetas, xs = [], []
    for theta, rng in zip(spec.phases, _rngs(seed, len(spec.phases))):
        xs.append(sampler.draw(theta, spec.samples_per_phase, rng))
        thetas.append(np.full(spec.samples_per_phase, theta))
    return HomodyneSamples(np.concatenate(thetas), np.concatenate(xs))


def background_variance(s, theta, eta=1.0):
    """Quadrature variance of squeezed vacuum (after transmission eta) at LO phase theta."""
    theta = np.asarray(theta, dtype=float)
    v = (math.exp(-2 * s) * np.cos(theta) ** 2 + math.exp(2 * s) * np.sin(theta) ** 2) / 2
    return eta * v + (1.0 - eta) / 2


@dataclass(frozen=True, eq=False)
class HomodyneTraces:
    """A stack of time traces on one grid; ``values[i]`` was taken at phase ``theta[i]``."""

    grid: TimeGrid
    values: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.n_points:
            raise DomainError(f"values must have shape (n_traces, {self.grid.n_points})")
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite trace value")
        th = np.broadcast_to(wrap_phase(self.theta), (v.shape[0],)).copy()
        v.setflags(write=False)
        th.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "theta", th)

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        for p in parts[1:]:
            if not p.grid.same_as(parts[0].grid):
                raise GridMismatchError("cannot join traces on different grids")
        return cls(parts[0].grid, np.vstack([p.values for p in parts]),
                   np.concatenate([p.theta for p in parts]))

    def write_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


def _check_orthonormal(modes, tol=1e-9):
    stack = np.array([m.samples for m in modes])
    gram = stack @ stack.T * modes[0].grid.dt
    err = float(np.max(np.abs(gram - np.eye(len(modes)))))
    if err > tol:
        raise PreconditionError(f"analysis basis is not orthonormal (max Gram error {err:.2e})")


def synthesize_traces(analysis_basis, non_gaussian_mode_index, rho_ng, s_bg, theta, n_traces,
                      seed, bg_eta=1.0):
    """Time traces whose coefficient on the chosen basis mode follows ``rho_ng``.

    Every other direction of the grid, including the remaining basis modes,
    carries squeezed-vacuum noise at the trace's phase (after transmission
    ``bg_eta``).  ``theta`` is a scalar or one phase per trace.
    """
    basis = list(analysis_basis)
    if not basis:
        raise DomainError("empty analysis basis")
    if not 0 <= non_gaussian_mode_index < len(basis):
        raise DomainError(f"mode index {non_gaussian_mode_index} outside the basis")
    grid = basis[0].grid
    for m in basis[1:]:
        if not m.grid.same_as(grid):
            raise GridMismatchError("basis modes live on different grids")
    _check_orthonormal(basis)
    e = basis[non_gaussian_mode_index].samples
    thetas = np.broadcast_to(wrap_phase(theta), (int(n_traces),)).copy()
    noise_rng, ng_rng = _rngs(seed, 2)
    std = np.sqrt(background_variance(s_bg, thetas, bg_eta) / grid.dt)
    w = noise_rng.standard_normal((int(n_traces), grid.n_points)) * std[:, None]
    sampler = QuadratureSampler(rho_ng)
    x_ng = np.empty(int(n_traces))
    uniq, inv = np.unique(thetas, return_inverse=True)
    for k, (th, rng) in enumerate(zip(uniq, _rngs(ng_rng.integers(2**63), len(uniq)))):
        sel = inv == k
        x_ng[sel] = sampler.draw(th, int(sel.sum()), rng)
    current = w @ e * grid.dt
    values = w + np.outer(x_ng - current, e)
    return HomodyneTraces(grid, values, thetas)


def apply_mode_filter(traces, f):
    """Mode quadrature sum_i f(t_i) x(t_i) dt for each trace (a scalar for a 1-D trace)."""
    if isinstance(traces, HomodyneTraces):
        if not traces.grid.same_as(f.grid):
            raise GridMismatchError("trace and mode grids differ")
        return traces.values @ f.samples * f.grid.dt
    values = np.asarray(traces, dtype=float)
    if values.shape[-1] != f.grid.n_points:
        raise GridMismatchError("trace length does not match the mode grid")
    return values @ f.samples * f.grid.dt


@dataclass(frozen=True, eq=False)
class EigenModeResult:
    mode: TemporalMode
    eigenvalues: np.ndarray
    background: float
    index: int
    noise_edge: float


def extract_mode_eigen_full(traces, background_variance=None, min_traces=1000):
    """Principal-deviation eigenvector of the trace autocorrelation, with diagnostics."""
    n = len(traces)
    if n < min_traces:
        raise PreconditionError(f"need at least {min_traces} traces, got {n}")
    X = traces.values
    dt = traces.grid.dt
    C = X.T @ X / n
    C = (C + C.T) / 2
    evals, evecs = np.linalg.eigh(C)
    if background_variance is None:
        bg = float(np.median(evals))
    else:
        bg = float(background_variance) / dt
    dev = np.abs(evals - bg)
    order = np.argsort(dev)[::-1]
    # Marchenko-Pastur spread of the pure-noise spectrum around bg
    ratio = traces.grid.n_points / n
    edge = bg * (2 * math.sqrt(ratio) + ratio)
    gap = dev[order[0]] - dev[order[1]]
    if gap < 2 * edge:
        raise AmbiguityError(
            f"no dominant mode: top deviations {dev[order[0]]:.4g}, {dev[order[1]]:.4g} "
            f"(noise scale {edge:.3g})"
        )
    i = int(order[0])
    v = evecs[:, i].copy()
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    mode = TemporalMode.from_waveform(traces.grid, v)
    return EigenModeResult(mode, evals, bg, i, edge)


def extract_mode_eigen(traces, background_variance=None, min_traces=1000):
    """Dominant temporal mode of phase-averaged traces (sign: largest sample positive)."""
    return extract_mode_eigen_full(traces, background_variance, min_traces).mode


def variance_provider(traces, window=TAU):
    """Objective for ``optimize_mode_params``: variance of the filtered traces.

    The second moments are computed once, so each call costs one quadratic form.
    """
    X = traces.values
    n = len(traces)
    mean = X.mean(axis=0)
    cov = X.T @ X / n - np.outer(mean, mean)
    grid = traces.grid
    dt = grid.dt

    def provider(t0, gamma1, gamma2):
        f = mode_from_response(FilterSpec(gamma1, gamma2), t0, grid, window=window).samples
        return float(f @ cov @ f) * dt * dt

    return provider


@dataclass(frozen=True)
class ModeParamResult:
    t0: float
    gamma1: float
    gamma2: float
    variance: float
    n_evaluations: int

    @property
    def spec(self):
        return FilterSpec(self.gamma1, self.gamma2)


def optimize_mode_params(samples_provider, init, t0_init=0.0, xatol=1e-4, maxiter=4000):
    """Maximize the provider's variance over (t0, gamma1, gamma2).

    Search coordinates are (t0 in ns, ln gamma1, ln gamma2).  A 3x3x3 grid
    around the initial guess (t0 +- 1 ns, gammas x0.8 / x1.25) picks the start
    of a Nelder-Mead ascent.
    """
    if not isinstance(init, FilterSpec):
        raise DomainError("init must be a FilterSpec")
    count = [0]

    def objective(p):
        t0_ns, l1, l2 = (float(v) for v in p)
        g1, g2 = math.exp(l1), math.exp(l2)
        if not g1 < g2:
            return math.inf
        count[0] += 1
        val = samples_provider(t0_ns * 1e-9, g1, g2)
        if not np.isfinite(val):
            raise ObjectiveError((t0_ns * 1e-9, g1, g2), val)
        return -float(val)

    base = np.array([t0_init * 1e9, math.log(init.gamma1), math.log(init.gamma2)])
    steps = (np.array([-1.0, 0.0, 1.0]), np.log([0.8, 1.0, 1.25]), np.log([0.8, 1.0, 1.25]))
    best, best_val = None, math.inf
    for d0 in steps[0]:
        for d1 in steps[1]:
            for d2 in steps[2]:
                p = base + np.array([d0, d1, d2])
                val = objective(p)
                if val < best_val:
                    best, best_val = p, val
    if best is None:
        raise ObjectiveError(tuple(base), math.nan)
    simplex = np.array([best, best + [0.5, 0, 0], best + [0, 0.1, 0], best + [0, 0, 0.1]])
    res = minimize(objective, best, method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": 1e-12 * abs(best_val), "maxiter": maxiter,
                            "initial_simplex": simplex})
    t0_ns, l1, l2 = res.x
    return ModeParamResult(t0_ns * 1e-9, math.exp(l1), math.exp(l2), -float(res.fun), count[0])
