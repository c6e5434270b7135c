"""Real temporal mode functions on a uniform time grid.

Inner products are grid sums  <f, g> = sum_i f(t_i) g(t_i) dt,  so a unit-norm
mode satisfies sum f^2 dt = 1.  Times are in seconds, rates in rad/s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFilterError,
    DomainError,
    GridMismatchError,
    PreconditionError,
    RankDeficiencyError,
    SupportError,
)

TAU = 60.8e-9
DEFAULT_DT = 0.2e-9
NORM_TOL = 1e-10
SUPPORT_TOL = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise DomainError("a time grid needs at least two points")
        if not self.t_end > self.t_start:
            raise DomainError("t_end must exceed t_start")

    @property
    def dt(self):
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @property
    def times(self):
        return np.linspace(self.t_start, self.t_end, self.n_points)

    @classmethod
    def uniform(cls, t_start, t_end, dt):
        """Grid from t_start with spacing dt; t_end is rounded to a whole number of steps."""
        steps = int(round((t_end - t_start) / dt))
        return cls(t_start, t_start + steps * dt, steps + 1)

    @classmethod
    def default(cls, tau=TAU, dt=DEFAULT_DT, first_bin=-4, last_bin=12):
        return cls.uniform(first_bin * tau, last_bin * tau, dt)

    @classmethod
    def for_bins(cls, first_bin, last_bin, tau=TAU, dt=0.8e-9, pad=0.25):
        """Grid covering one-period windows ending at bins first..last, padded by pad * tau."""
        return cls.uniform((first_bin - 1 - pad) * tau, (last_bin + pad) * tau, dt)

    def same_as(self, other):
        return (
            self.n_points == other.n_points
            and math.isclose(self.t_start, other.t_start, rel_tol=0, abs_tol=1e-6 * self.dt)
            and math.isclose(self.t_end, other.t_end, rel_tol=0, abs_tol=1e-6 * self.dt)
        )


def _require_same_grid(a, b):
    if not a.same_as(b):
        raise GridMismatchError(f"grids differ: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class TemporalMode:
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.shape != (self.grid.n_points,):
            raise DomainError(f"expected {self.grid.n_points} samples, got {arr.shape}")
        norm = float(np.sum(arr * arr) * self.grid.dt)
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"mode is not unit norm (norm^2 = {norm!r})")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_waveform(cls, grid, values):
        values = np.asarray(values, dtype=float)
        norm = math.sqrt(float(np.sum(values * values) * grid.dt))
        if norm == 0:
            raise DomainError("cannot normalize an all-zero waveform")
        return cls(grid, values / norm)

    @property
    def times(self):
        return self.grid.times

    def peak_time(self):
        return float(self.grid.times[np.argmax(np.abs(self.samples))])

    def __neg__(self):
        return TemporalMode(self.grid, -self.samples)


@dataclass(frozen=True)
class FilterSpec:
    """Two cascaded cavity filters with angular HWHM bandwidths gamma1 < gamma2 (rad/s)."""

    gamma1: float
    gamma2: float

    def __post_init__(self):
        if self.gamma1 == self.gamma2:
            raise DegenerateFilterError("gamma1 == gamma2: the two-pole response vanishes identically")
        if not 0 < self.gamma1 < self.gamma2:
            raise DomainError(f"need 0 < gamma1 < gamma2, got {self.gamma1}, {self.gamma2}")

    @classmethod
    def from_hz(cls, gamma1_hz, gamma2_hz):
        """Build from ordinary frequencies in Hz (the only place the 2 pi enters)."""
        return cls(2 * math.pi * gamma1_hz, 2 * math.pi * gamma2_hz)

    def peak_delay(self):
        """Argmax of the response: ln(gamma2 / gamma1) / (gamma2 - gamma1)."""
        return math.log(self.gamma2 / self.gamma1) / (self.gamma2 - self.gamma1)

    def energy(self, lo=0.0, hi=math.inf):
        """Integral of h(u)^2 over lo <= u < hi (closed form)."""
        g1, g2 = self.gamma1, self.gamma2

        def prim(u):
            if math.isinf(u):
                return 0.0
            return (-math.exp(-2 * g1 * u) / (2 * g1) - math.exp(-2 * g2 * u) / (2 * g2)
                    + 2 * math.exp(-(g1 + g2) * u) / (g1 + g2))

        return prim(hi) - prim(lo)


DEFAULT_FILTER = FilterSpec.from_hz(28.1e6, 100e6)


def _response(spec, u):
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        h = np.exp(-spec.gamma1 * u) - np.exp(-spec.gamma2 * u)
    return np.where(u >= 0, h, 0.0)


def filter_response(spec, grid):
    """Unnormalized two-pole response h(t) = (e^{-g1 t} - e^{-g2 t}) Theta(t) on the grid."""
    return _response(spec, grid.times)


def mode_from_response(spec, t0, grid, window=None):
    """Heralded-photon mode f(t) ∝ h(t0 - t), normalized on the grid.

    ``window`` limits the support to t0 - window < t <= t0, e.g. one bin period
    so that bin-translated copies are exactly orthogonal.  Raises
    ``SupportError`` if the grid edge or the window discards more than 1e-6 of
    the mode energy.
    """
    u = t0 - grid.times
    vals = _response(spec, u)
    limit = min(t0 - grid.t_start, math.inf if window is None else window)
    if window is not None:
        vals = np.where(u < window, vals, 0.0)
    total = spec.energy()
    lost = spec.energy(lo=max(limit, 0.0))
    if grid.t_end < t0:
        lost += spec.energy(hi=t0 - grid.t_end)
    if lost / total > SUPPORT_TOL:
        raise SupportError(f"grid/window clips {lost / total:.2e} of the mode energy")
    return TemporalMode.from_waveform(grid, vals)


def translate(f, delta, snap_tol=None):
    """Shift a mode later in time by delta (snapped to a whole number of grid steps)."""
    dt = f.grid.dt
    snap_tol = dt / 2 if snap_tol is None else snap_tol
    k = int(round(delta / dt))
    if abs(delta - k * dt) > snap_tol:
        raise DomainError(f"shift {delta!r} is {abs(delta - k * dt):.3e} s off the grid")
    if k == 0:
        return f
    src = f.samples
    out = np.zeros_like(src)
    if k > 0:
        out[k:] = src[:-k] if k < len(src) else 0
        dropped = src[len(src) - k:] if k < len(src) else src
    else:
        out[:k] = src[-k:]
        dropped = src[:-k]
    if np.sum(dropped * dropped) * dt > 1e-12:
        raise SupportError(f"shift by {k} steps pushes the mode off the grid")
    return TemporalMode.from_waveform(f.grid, out)


def overlap(f, g):
    _require_same_grid(f.grid, g.grid)
    return float(np.dot(f.samples, g.samples) * f.grid.dt)


def reshape_pair(f1, f2, r, tol=1e-6):
    """Mode functions after a beam splitter of amplitude reflectivity r.

    f1' = sqrt(1 - r^2) f1 + r f2,   f2' = -r f1 + sqrt(1 - r^2) f2.
    """
    if abs(r) > 1:
        raise DomainError(f"|r| must be <= 1, got {r}")
    ov = overlap(f1, f2)
    if abs(ov) >= tol:
        raise PreconditionError(f"input modes are not orthogonal (overlap {ov:.2e})")
    t = math.sqrt(1.0 - r * r)
    a = t * f1.samples + r * f2.samples
    b = -r * f1.samples + t * f2.samples
    return TemporalMode.from_waveform(f1.grid, a), TemporalMode.from_waveform(f1.grid, b)


def coupling_matrix(n_modes, couplings):
    """Orthogonal map on slot coordinates for a sequence of pairwise beam splitters.

    Column m is the image of the state that started in slot m.  Each coupling is
    ``((i, j), r)`` and acts with slot i in the first and slot j in the second
    role of ``reshape_pair``.
    """
    total = np.eye(n_modes)
    for (i, j), r in couplings:
        if i == j:
            raise DomainError(f"coupling acts twice on slot {i}")
        if abs(r) > 1:
            raise DomainError(f"|r| must be <= 1, got {r}")
        t = math.sqrt(1.0 - r * r)
        B = np.eye(n_modes)
        B[i, i], B[j, i] = t, r
        B[i, j], B[j, j] = -r, t
        total = B @ total
    return total


def reshape_chain(modes, couplings, tol=1e-6):
    """Apply several pairwise couplings in order; returns the image of every input mode."""
    modes = list(modes)
    if not modes:
        return []
    grid = modes[0].grid
    stack = np.array([m.samples for m in modes])
    for m in modes[1:]:
        _require_same_grid(grid, m.grid)
    gram = stack @ stack.T * grid.dt
    if np.max(np.abs(gram - np.eye(len(modes)))) >= tol:
        raise PreconditionError("input modes are not orthonormal")
    M = coupling_matrix(len(modes), couplings)
    out = M.T @ stack
    return [TemporalMode.from_waveform(grid, row) for row in out]


def gram_schmidt_complete(seeds, target_count, tol=1e-8):
    """Orthonormal family whose first vectors span the seeds, padded with grid impulses."""
    seeds = list(seeds)
    if not seeds:
        raise DomainError("need at least one seed mode")
    grid = seeds[0].grid
    n = grid.n_points
    if target_count < len(seeds) or target_count > n:
        raise DomainError(f"target_count must lie in [{len(seeds)}, {n}]")
    w = math.sqrt(grid.dt)
    basis = []

    def project_out(v):
        for _ in range(2):
            for b in basis:
                v = v - np.dot(b, v) * b
        return v

    for idx, s in enumerate(seeds):
        _require_same_grid(grid, s.grid)
        v0 = s.samples * w
        v = project_out(v0)
        nv = np.linalg.norm(v)
        if nv < tol * max(np.linalg.norm(v0), 1.0):
            raise RankDeficiencyError(idx)
        basis.append(v / nv)
    i = 0
    while len(basis) < target_count:
        e = np.zeros(n)
        e[i] = 1.0
        v = project_out(e)
        nv = np.linalg.norm(v)
        if nv > 0.5:
            basis.append(v / nv)
        i += 1
    return [TemporalMode.from_waveform(grid, b / w) for b in basis]


def write_modes_csv(path, grid, columns):
    """Write ``t_ns`` plus one column per named waveform."""
    names = list(columns)
    t_ns = grid.times * 1e9
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_ns", *names])
        data = [np.asarray(columns[k].samples if isinstance(columns[k], TemporalMode) else columns[k])
                for k in names]
        for i, t in enumerate(t_ns):
            writer.writerow([repr(float(t)), *(repr(float(col[i])) for col in data)])


def read_mode_csv(path, column=1):
    """Read a mode written by ``write_modes_csv``; returns a TemporalMode on the file's grid."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = rows[:, 0] * 1e-9
    grid = TimeGrid(float(t[0]), float(t[-1]), len(t))
    return TemporalMode.from_waveform(grid, rows[:, column])
