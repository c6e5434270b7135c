"""Time-bin loop network driven by a variable beam splitter (VBS).

Each bin k meets the circulating loop field on the VBS with amplitude coupling
c_k.  With s_k = sqrt(1 - c_k^2) and the loop as the second port,

    o_k      = s_k a_k + c_k g_k l_k
    l_{k+1}  = -c_k a_k + s_k g_k l_k

where g_k = sqrt(1 - kappa_in) is the round-trip loss picked up by a field that
circulates through bin k.  A full exchange (|c_k| = 1) swaps line and loop
without a circulation, so g_k = 1 there.  Every output is further scaled by
sqrt(1 - kappa_out).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, SupportError
from .modes import TAU, TemporalMode, coupling_matrix, translate

DEFAULT_LENGTH = 16
DEFAULT_KAPPA_IN = 0.039
DEFAULT_KAPPA_OUT = 0.283


@dataclass(frozen=True)
class VBSProgram:
    couplings: tuple
    kappa_in: float = 0.0
    kappa_out: float = 0.0
    tau: float = TAU
    # bin where the heralded state is injected, used for mode bookkeeping only
    cat_bin: int = 0

    def __post_init__(self):
        cs = tuple(float(c) for c in self.couplings)
        if not cs:
            raise DomainError("a program needs at least one bin")
        bad = [c for c in cs if not abs(c) <= 1.0]
        if bad:
            raise DomainError(f"couplings must satisfy |c| <= 1, got {bad[0]}")
        for name in ("kappa_in", "kappa_out"):
            k = getattr(self, name)
            if not 0.0 <= k < 1.0:
                raise DomainError(f"{name} must lie in [0, 1), got {k}")
        if not self.tau > 0:
            raise DomainError("bin period must be positive")
        if not 0 <= self.cat_bin < len(cs):
            raise DomainError("cat_bin outside the program")
        object.__setattr__(self, "couplings", cs)

    def __len__(self):
        return len(self.couplings)

    def with_losses(self, kappa_in, kappa_out):
        return VBSProgram(self.couplings, kappa_in, kappa_out, self.tau, self.cat_bin)

    def to_dict(self):
        return {
            "couplings": list(self.couplings),
            "kappa_in": self.kappa_in,
            "kappa_out": self.kappa_out,
            "tau_ns": self.tau * 1e9,
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"couplings", "kappa_in", "kappa_out", "tau_ns"}
        if unknown:
            raise ConfigError(f"unknown program keys: {sorted(unknown)}")
        try:
            return cls(
                tuple(d["couplings"]),
                float(d.get("kappa_in", 0.0)),
                float(d.get("kappa_out", 0.0)),
                float(d.get("tau_ns", TAU * 1e9)) * 1e-9,
            )
        except KeyError as exc:
            raise ConfigError(f"program is missing {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class NetworkMatrix:
    """Compiled network.

    ``T[k, j]`` is the amplitude of input bin j in output bin k.  ``full`` also
    carries the loop port: its last column is the initial loop field and its
    last row the field left in the loop after the final bin.
    """

    T: np.ndarray
    full: np.ndarray
    loss_norms: np.ndarray
    program: VBSProgram = field(repr=False)

    @property
    def n_bins(self):
        return self.T.shape[0]

    def residual_in_loop(self):
        """Row of ``full`` giving what stays in the loop after the last bin."""
        return self.full[-1, :-1]


def _run(couplings, kappa_in, kappa_out):
    m = len(couplings)
    full = np.zeros((m + 1, m + 1))
    loop = np.zeros(m + 1)
    loop[m] = 1.0  # initial loop content (vacuum input port)
    g_loss = math.sqrt(1.0 - kappa_in)
    g_out = math.sqrt(1.0 - kappa_out)
    for k, c in enumerate(couplings):
        s = math.sqrt(max(0.0, 1.0 - c * c))
        g = 1.0 if abs(c) == 1.0 else g_loss
        a = np.zeros(m + 1)
        a[k] = 1.0
        full[k] = g_out * (s * a + c * g * loop)
        loop = -c * a + s * g * loop
    full[m] = loop
    return full


def compile_program(program):
    """Build the loss-inclusive input-output matrix of a VBS program."""
    full = _run(program.couplings, program.kappa_in, program.kappa_out)
    m = len(program)
    T = full[:m, :m].copy()
    lossless = _run(program.couplings, 0.0, 0.0)[:m, :m]
    num = np.sum(T * T, axis=1)
    den = np.sum(lossless * lossless, axis=1)
    loss_norms = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
    for arr in (T, full, loss_norms):
        arr.setflags(write=False)
    return NetworkMatrix(T, full, loss_norms, program)


def memory_program(n_round_trips, program_length=DEFAULT_LENGTH, kappa_in=0.0,
                   kappa_out=0.0, tau=TAU):
    """Store the bin-0 state for N round trips and release it into bin N + 1."""
    n = int(n_round_trips)
    if n < 0:
        raise DomainError("round-trip count must be nonnegative")
    if program_length < n + 2:
        raise DomainError(f"program length {program_length} too short for N={n}")
    cs = [0.0] * program_length
    cs[0] = 1.0
    cs[n + 1] = -1.0  # release with the sign that restores +f(t - (N+1) tau)
    return VBSProgram(tuple(cs), kappa_in, kappa_out, tau)


def bs_program(pairs, cat_bin=0, program_length=DEFAULT_LENGTH, retrieve=True,
               kappa_in=0.0, kappa_out=0.0, tau=TAU):
    """Load the state of ``cat_bin`` into the loop and couple it to later bins.

    ``pairs`` is a list of ``(bin, r)``.  With ``retrieve`` the loop content is
    released by a full exchange on the bin after the last coupling; without it
    the remainder stays in the loop.
    """
    pairs = [(int(b), float(r)) for b, r in pairs]
    bins = [cat_bin] + [b for b, _ in pairs]
    if any(b2 <= b1 for b1, b2 in zip(bins, bins[1:])):
        raise DomainError(f"bin indices must be strictly increasing after the cat bin: {bins}")
    last = bins[-1] + (1 if retrieve else 0)
    if last >= program_length:
        raise DomainError(f"program length {program_length} too short for bins up to {last}")
    cs = [0.0] * program_length
    cs[cat_bin] = 1.0
    for b, r in pairs:
        if abs(r) > 1:
            raise DomainError(f"|r| must be <= 1, got {r}")
        cs[b] = r
    if retrieve:
        # c = -1 releases the loop content with the sign that makes the stored
        # state's output column equal the reshaped mode f2' exactly
        cs[last] = -1.0
    return VBSProgram(tuple(cs), kappa_in, kappa_out, tau, cat_bin)


def reshape_couplings(pairs):
    """Equivalent slot-space coupling list for a retrieved ``bs_program``.

    Slots are the coupled bins followed by the retrieval bin; the stored state
    sits in the last slot.  Returns ``(n_slots, couplings)``.
    """
    k = len(pairs)
    return k + 1, [((i, k), float(r)) for i, (_, r) in enumerate(pairs)]


PRESETS = {
    "fig4b": [(1, math.sqrt(0.5))],
    "fig4c": [(1, -math.sqrt(0.9))],
    "fig4d": [(1, -math.sqrt(0.33)), (2, math.sqrt(0.48))],
}

_MEMORY_RE = re.compile(r"^memory\((\d+)\)$")


def preset(name, kappa_in=0.0, kappa_out=0.0, tau=TAU, program_length=DEFAULT_LENGTH):
    """Program by name: ``fig4b``, ``fig4c``, ``fig4d`` or ``memory(N)``."""
    m = _MEMORY_RE.match(name.strip())
    if m:
        return memory_program(int(m.group(1)), program_length, kappa_in, kappa_out, tau)
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return bs_program(PRESETS[name], program_length=program_length,
                      kappa_in=kappa_in, kappa_out=kappa_out, tau=tau)


def propagate_mode(net, input_coeffs):
    """Send a unit-norm bin-coefficient vector through the network.

    Returns ``(output_coeffs, eta)``: the output renormalized and its power
    transmission.
    """
    v = np.asarray(input_coeffs, dtype=float)
    if v.shape != (net.n_bins,):
        raise DimensionError(f"expected {net.n_bins} coefficients, got shape {v.shape}")
    norm = float(v @ v)
    if abs(norm - 1.0) > 1e-9:
        raise DomainError(f"input coefficients must be unit norm (got {norm})")
    out = net.T @ v
    eta = float(out @ out)
    if 1.0 < eta <= 1.0 + 1e-9:
        eta = 1.0  # round-off in a lossless network
    if eta == 0.0:
        raise DomainError("nothing reaches the output for this input")
    return out / math.sqrt(eta), eta


def cat_output(net):
    """Output coefficients and transmission for the state injected at ``cat_bin``."""
    e = np.zeros(net.n_bins)
    e[net.program.cat_bin] = 1.0
    return propagate_mode(net, e)


def output_temporal_mode(coeffs, base_mode, tau=TAU):
    """Superpose bin-translated copies of ``base_mode``: sum_k c_k f(t - k tau)."""
    total = np.zeros_like(base_mode.samples)
    for k, c in enumerate(np.asarray(coeffs, dtype=float)):
        if c != 0.0:
            total = total + c * translate(base_mode, k * tau).samples
    if not np.any(total):
        raise SupportError("all coefficients vanish")
    return TemporalMode.from_waveform(base_mode.grid, total)


def composed_weights(pairs):
    """Squared mode weights of the stored state after the couplings, from 2x2 embeddings."""
    n, couplings = reshape_couplings(pairs)
    return coupling_matrix(n, couplings)[:, n - 1] ** 2
