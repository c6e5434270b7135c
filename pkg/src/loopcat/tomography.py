"""Homodyne tomography, Wigner evaluation and the two-loss decay model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    BootstrapError,
    DomainError,
    FitRankError,
    LoopcatError,
    PreconditionError,
    UnidentifiableStateError,
)
from .fock import (
    DensityMatrix,
    _as_single_mode,
    apply_loss,
    hermite_functions,
    herald_mixture,
    mode_mismatch_state,
    parity_origin,
    squeezed_vacuum_dm,
    wigner,
)
from .homodyne import as_seed_sequence

log = logging.getLogger(__name__)

P_FLOOR = 1e-300
MIN_SAMPLES = 100
# per-phase real arithmetic is used up to this many distinct phases
MAX_GROUPED_PHASES = 64
PREDICT_NMAX = 30


@dataclass(frozen=True)
class MLEConfig:
    n_max: int = 20
    max_iterations: int = 2000
    log_likelihood_tolerance: float = 1e-9
    x_limit: float = 8.0
    x_nodes: int = 4096

    def __post_init__(self):
        if self.n_max < 1:
            raise DomainError("n_max must be >= 1")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if not self.log_likelihood_tolerance > 0:
            raise DomainError("log_likelihood_tolerance must be positive")
        if self.x_nodes < 2 or not self.x_limit > 0:
            raise DomainError("invalid quadrature node grid")

    @property
    def nodes(self):
        return np.linspace(-self.x_limit, self.x_limit, self.x_nodes)


@dataclass(frozen=True, eq=False)
class MLEResult:
    rho: DensityMatrix
    log_likelihoods: tuple
    iterations: int
    converged: bool
    underflows: int = 0
    diluted_steps: int = 0

    @property
    def log_likelihood(self):
        return self.log_likelihoods[-1]


class _Projectors:
    """Quadrature projectors grouped by phase, with repeated node hits counted once."""

    def __init__(self, samples, cfg):
        n = len(samples)
        if n < MIN_SAMPLES:
            raise PreconditionError(f"need at least {MIN_SAMPLES} samples, got {n}")
        phases = np.unique(samples.theta)
        if len(phases) < 2:
            raise UnidentifiableStateError("samples at a single phase cannot fix the off-diagonal elements")
        nodes = cfg.nodes
        step = nodes[1] - nodes[0]
        idx = np.rint((samples.x + cfg.x_limit) / step).astype(np.int64)
        self.clipped = int(np.sum((idx < 0) | (idx >= cfg.x_nodes)))
        idx = np.clip(idx, 0, cfg.x_nodes - 1)
        H = hermite_functions(cfg.n_max, nodes)
        self.dim = cfg.n_max + 1
        self.total = float(n)
        levels = np.arange(self.dim)
        self.grouped = len(phases) <= MAX_GROUPED_PHASES
        if self.grouped:
            self.groups = []
            for th in phases:
                u, c = np.unique(idx[samples.theta == th], return_counts=True)
                self.groups.append((np.exp(1j * levels * th), np.ascontiguousarray(H[:, u]), c.astype(float)))
        else:
            pairs = np.stack([samples.theta, idx.astype(float)], axis=1)
            uniq, c = np.unique(pairs, axis=0, return_counts=True)
            self.V = H[:, uniq[:, 1].astype(np.int64)] * np.exp(1j * np.outer(levels, uniq[:, 0]))
            self.counts = c.astype(float)

    def evaluate(self, rho):
        """Log-likelihood, normalized R operator and the number of floored probabilities."""
        floored = 0
        if self.grouped:
            R = np.zeros((self.dim, self.dim), dtype=complex)
            ll = 0.0
            for ph, Psi, c in self.groups:
                rot = np.ascontiguousarray((ph.conj()[:, None] * rho * ph[None, :]).real)
                p = np.einsum("ij,ij->j", Psi, rot @ Psi)
                low = p < P_FLOOR
                if low.any():
                    floored += int(low.sum())
                    p = np.where(low, P_FLOOR, p)
                ll += float(c @ np.log(p))
                Rt = (Psi * (c / p)) @ Psi.T
                R += ph[:, None] * Rt * ph.conj()[None, :]
        else:
            p = np.einsum("ij,ij->j", self.V.conj(), rho @ self.V).real
            low = p < P_FLOOR
            floored = int(low.sum())
            p = np.where(low, P_FLOOR, p)
            ll = float(self.counts @ np.log(p))
            R = (self.V * (self.counts / p)) @ self.V.conj().T
        return ll, R / self.total, floored


def _normalize(m):
    m = (m + m.conj().T) / 2
    return m / np.trace(m).real


def run_mle(samples, cfg=MLEConfig(), initial=None):
    """Iterative R rho R reconstruction with a likelihood-monotonicity guard.

    If a plain step would lower the log-likelihood, a diluted step
    (I + eps R) rho (I + eps R) with halving eps is taken instead.
    """
    proj = _Projectors(samples, cfg)
    d = proj.dim
    if initial is None:
        rho = np.eye(d, dtype=complex) / d
    else:
        rho = _normalize(np.array(_as_single_mode(initial), dtype=complex))
        if rho.shape != (d, d):
            raise DomainError(f"initial state has dimension {rho.shape[0]}, expected {d}")
    ll, R, floored = proj.evaluate(rho)
    history = [ll]
    underflows = floored
    diluted = 0
    converged = False
    eye = np.eye(d)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        eps = None
        while True:
            if eps is None:
                cand = _normalize(R @ rho @ R)
            else:
                G = eye + eps * R
                cand = _normalize(G @ rho @ G)
            ll_c, R_c, floored = proj.evaluate(cand)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            diluted += 1
            eps = 0.5 if eps is None else eps / 2
            if eps < 1e-10:
                # no ascent direction left at working precision
                cand, ll_c, R_c = rho, ll, R
                break
        underflows += floored
        assert ll_c >= ll - 1e-12 * abs(ll), "log-likelihood decreased"
        change = abs(ll_c - ll)
        rho, ll, R = cand, ll_c, R_c
        history.append(ll)
        if change < cfg.log_likelihood_tolerance * abs(ll):
            converged = True
            break
    if proj.clipped:
        log.warning("%d samples lie outside +-%g and were assigned to the edge nodes", proj.clipped, cfg.x_limit)
    if underflows:
        log.info("probability floor hit %d times", underflows)
    return MLEResult(DensityMatrix(rho), tuple(history), it, converged, underflows, diluted)


def mle_reconstruct(samples, cfg=MLEConfig(), initial=None):
    return run_mle(samples, cfg, initial).rho


def w0(rho):
    """Wigner function at the phase-space origin, (1/pi) sum_n (-1)^n rho_nn."""
    return parity_origin(rho)


def wigner_grid(rho, half_range=5.0, resolution=101):
    """W on a square grid; entry [i, j] is W(x_i, p_j) with both axes spanning +-half_range."""
    _as_single_mode(rho)
    if resolution < 16:
        raise DomainError("resolution must be >= 16")
    if not half_range > 0:
        raise DomainError("half_range must be positive")
    axis = np.linspace(-half_range, half_range, resolution)
    return wigner(rho, axis[:, None], axis[None, :])


def grid_axis(half_range, resolution):
    return np.linspace(-half_range, half_range, resolution)


def bootstrap_w0_error(samples, cfg=MLEConfig(), B=50, seed=0, initial=None, return_values=False):
    """Standard deviation of W0 over B resamples drawn within each phase stratum."""
    if B < 50:
        raise DomainError("bootstrap needs B >= 50 resamples")
    if initial is None:
        initial = mle_reconstruct(samples, cfg)
    rng = np.random.default_rng(as_seed_sequence(seed))
    strata = [np.flatnonzero(samples.theta == th) for th in np.unique(samples.theta)]
    values = np.empty(B)
    for b in range(B):
        pick = np.concatenate([s[rng.integers(0, len(s), len(s))] for s in strata])
        try:
            values[b] = w0(mle_reconstruct(samples[pick], cfg, initial=initial))
        except LoopcatError as exc:
            raise BootstrapError(f"resample {b} of {B} failed: {exc}") from exc
    sigma = float(np.std(values, ddof=1))
    return (sigma, values) if return_values else sigma


@dataclass(frozen=True)
class DecayCurve:
    """Points (N, W0, sigma); sigma is None for model curves."""

    points: tuple

    def __post_init__(self):
        pts = tuple((int(n), float(w), None if s is None else float(s)) for n, w, s in self.points)
        ns = [p[0] for p in pts]
        if any(n < 0 for n in ns):
            raise DomainError("round-trip counts must be nonnegative")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError("round-trip counts must be strictly increasing")
        if any(p[2] is not None and not p[2] > 0 for p in pts):
            raise DomainError("uncertainties must be positive")
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return np.array([p[0] for p in self.points])

    @property
    def w0(self):
        return np.array([p[1] for p in self.points])

    @property
    def sigma(self):
        return np.array([1.0 if p[2] is None else p[2] for p in self.points])


def _check_losses(kappa_in, kappa_out):
    if not 0.0 <= kappa_in <= 1.0 or not 0.0 <= kappa_out <= 1.0:
        raise DomainError(f"losses must lie in [0, 1], got {kappa_in}, {kappa_out}")


def source_state(s, eta_mode=1.0, p_fake=0.0, n_max=PREDICT_NMAX):
    """Heralded state before any loop loss."""
    return herald_mixture(mode_mismatch_state(s, eta_mode, n_max), squeezed_vacuum_dm(s, n_max), p_fake)


def net_transmission(n, kappa_in, kappa_out):
    return (1.0 - kappa_in) ** n * (1.0 - kappa_out)


def predict_w0_curve(s, kappa_in, kappa_out, n_list, eta_mode=1.0, p_fake=0.0, n_max=PREDICT_NMAX):
    _check_losses(kappa_in, kappa_out)
    src = source_state(s, eta_mode, p_fake, n_max)
    pts = [(n, w0(apply_loss(src, net_transmission(n, kappa_in, kappa_out))), None) for n in n_list]
    return DecayCurve(tuple(pts))


def _parity_model(pops):
    """W0 after loss from the populations: (1/pi) sum_n p_n (1 - 2 eta)^n."""
    levels = np.arange(len(pops))

    def model(eta):
        eta = np.asarray(eta, dtype=float)
        return np.sum(pops * (1.0 - 2.0 * eta[..., None]) ** levels, axis=-1) / math.pi

    return model


@dataclass(frozen=True)
class LossFitResult:
    kappa_in: float
    kappa_out: float
    residual: float
    boundary_hit: bool = False
    n_evaluations: int = field(default=0, compare=False)

    def lifetime(self, tau):
        return lifetime(self.kappa_in, tau)

    def to_dict(self, tau):
        life = self.lifetime(tau)
        return {
            "kappa_in": self.kappa_in,
            "kappa_out": self.kappa_out,
            "residual": self.residual,
            "lifetime_us": None if math.isinf(life) else life * 1e6,
        }


KAPPA_IN_GRID = (0.0, 0.2)
KAPPA_OUT_GRID = (0.0, 0.6)
KAPPA_MAX = 0.999


def fit_decay(curve, s, eta_mode=1.0, p_fake=0.0, n_max=PREDICT_NMAX):
    """Weighted least-squares fit of (kappa_in, kappa_out) to a W0(N) curve."""
    if not isinstance(curve, DecayCurve):
        pts = list(curve)
        if len(pts) < 3 or len({int(p[0]) for p in pts}) < 2:
            raise FitRankError("need at least 3 points covering at least 2 round-trip counts")
        curve = DecayCurve(tuple(pts))
    if len(curve.points) < 3:
        raise FitRankError("need at least 3 points")
    n, y, sig = curve.n, curve.w0, curve.sigma
    model = _parity_model(np.diag(source_state(s, eta_mode, p_fake, n_max).data).real)
    count = [0]

    def objective(p):
        ki, ko = p
        count[0] += 1
        if not (0.0 <= ki <= KAPPA_MAX and 0.0 <= ko <= KAPPA_MAX):
            return math.inf
        r = (y - model(net_transmission(n, ki, ko))) / sig
        return float(r @ r)

    grid = [(ki, ko) for ki in np.linspace(*KAPPA_IN_GRID, 5) for ko in np.linspace(*KAPPA_OUT_GRID, 5)]
    start = min(grid, key=objective)
    res = minimize(objective, np.array(start), method="Nelder-Mead",
                   bounds=[(0.0, KAPPA_MAX), (0.0, KAPPA_MAX)],
                   options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000,
                            "initial_simplex": [start, np.add(start, (0.02, 0)), np.add(start, (0, 0.05))]})
    ki, ko = (float(v) for v in res.x)
    hit = any(abs(v - b) < 1e-6 for v in (ki, ko) for b in (0.0, KAPPA_MAX))
    return LossFitResult(ki, ko, float(res.fun), hit, count[0])


def lifetime(kappa_in, tau):
    """Storage time tau / kappa_in; ``math.inf`` for a lossless loop."""
    if not 0.0 <= kappa_in <= 1.0:
        raise DomainError(f"kappa_in must lie in [0, 1], got {kappa_in}")
    if kappa_in == 0.0:
        return math.inf
    return tau / kappa_in
