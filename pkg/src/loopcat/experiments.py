"""End-to-end memory and beam-splitter workflows on synthetic data."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import STAGE_BOOTSTRAP, STAGE_SAMPLES, STAGE_TRACES, task_seed
from .fock import apply_loss, squeezed_single_photon_dm, squeezed_vacuum_dm
from .homodyne import (
    HomodyneSamples,
    apply_mode_filter,
    extract_mode_eigen,
    sample_quadratures,
    synthesize_traces,
)
from .modes import (
    TemporalMode,
    TimeGrid,
    coupling_matrix,
    gram_schmidt_complete,
    mode_from_response,
    overlap,
    reshape_chain,
    translate,
)
from .network import cat_output, compile_program, memory_program, reshape_couplings
from .tomography import (
    bootstrap_w0_error,
    fit_decay,
    predict_w0_curve,
    run_mle,
    source_state,
    w0,
)


def base_mode(cfg, grid=None):
    """Heralded mode of bin 0 (support one period ending at t = 0)."""
    grid = grid or TimeGrid.default(cfg.tau)
    return mode_from_response(cfg.filter_spec, 0.0, grid, window=cfg.tau)


# -- memory -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MemoryPoint:
    n: int
    coeffs: np.ndarray
    eta: float
    samples: HomodyneSamples
    w0: float
    w0_true: float
    sigma: float | None
    rho: object
    iterations: int
    log_likelihoods: tuple


def memory_state(cfg, n):
    """Output-bin coefficients, net transmission and true state after N round trips."""
    length = max(16, n + 2)
    net = compile_program(memory_program(n, length, cfg.kappa_in, cfg.kappa_out, cfg.tau))
    coeffs, eta = cat_output(net)
    src = source_state(cfg.s, cfg.eta_mode, cfg.p_fake, cfg.truth_n_max)
    return coeffs, eta, apply_loss(src, eta)


def memory_point(cfg, n, seed=None, bootstrap=None):
    """Sample the stored state, reconstruct it and (optionally) bootstrap W0."""
    seed = cfg.seed if seed is None else seed
    bootstrap = cfg.bootstrap if bootstrap is None else bootstrap
    coeffs, eta, rho_true = memory_state(cfg, n)
    samples = sample_quadratures(rho_true, cfg.phase_grid, task_seed(seed, STAGE_SAMPLES, n))
    res = run_mle(samples, cfg.mle_config)
    sigma = None
    if bootstrap:
        sigma = bootstrap_w0_error(samples, cfg.mle_config, bootstrap,
                                   task_seed(seed, STAGE_BOOTSTRAP, n), initial=res.rho)
    return MemoryPoint(n, coeffs, eta, samples, w0(res.rho), w0(rho_true), sigma, res.rho,
                       res.iterations, res.log_likelihoods)


def _memory_task(args):
    cfg, n, seed, bootstrap = args
    return memory_point(cfg, n, seed, bootstrap)


def memory_sweep(cfg, seed=None, bootstrap=None, jobs=1):
    """Run ``memory_point`` for every configured N; results are independent of ``jobs``."""
    tasks = [(cfg, n, seed, bootstrap) for n in cfg.round_trips]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_memory_task, tasks))
    return [_memory_task(t) for t in tasks]


def memory_modes(cfg, points, grid=None):
    """Output mode function of each round trip, as a superposition of bin translates."""
    f = base_mode(cfg, grid)
    out = {}
    for p in points:
        total = np.zeros_like(f.samples)
        for k, c in enumerate(p.coeffs):
            if c != 0.0:
                total = total + c * translate(f, k * cfg.tau).samples
        out[f"N={p.n}"] = TemporalMode.from_waveform(f.grid, total)
    return out


def model_curve(cfg, ns):
    return predict_w0_curve(cfg.s, cfg.kappa_in, cfg.kappa_out, ns, cfg.eta_mode, cfg.p_fake,
                            cfg.truth_n_max)


def fit_points(cfg, ns, w0s, sigmas):
    pts = [(n, w, s) for n, w, s in zip(ns, w0s, sigmas)]
    return fit_decay(pts, cfg.s, cfg.eta_mode, cfg.p_fake, cfg.truth_n_max)


# -- beam splitter ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BSResult:
    grid: TimeGrid
    predicted: TemporalMode
    network: TemporalMode
    extracted: TemporalMode
    squeezed: TemporalMode
    weights: np.ndarray
    composed_weights: np.ndarray
    eta: float
    overlaps: dict
    cat_samples: HomodyneSamples
    sq_samples: HomodyneSamples


def bs_experiment(cfg, program, seed=None):
    """Compare the reshaped, network-propagated and eigen-extracted cat modes.

    Traces are synthesized on a coarse grid around the output bins, with the
    cat (after the network's transmission) in the network mode and squeezed
    vacuum everywhere else.
    """
    seed = cfg.seed if seed is None else seed
    net = compile_program(program)
    coeffs, eta = cat_output(net)
    bins = np.flatnonzero(np.abs(coeffs) > 1e-12)
    if len(bins) == 0:
        raise ValueError("the stored state never reaches the output")
    first, last = int(bins[0]), int(bins[-1])
    grid = TimeGrid.for_bins(first, last, cfg.tau)
    f = mode_from_response(cfg.filter_spec, first * cfg.tau, grid, window=cfg.tau)
    slots = [translate(f, (b - first) * cfg.tau) for b in range(first, last + 1)]

    network_mode = TemporalMode.from_waveform(
        grid, sum(c * slots[b - first].samples for b, c in enumerate(coeffs) if first <= b <= last)
    )
    # Reshape path: slots are the coupled bins plus the retrieval bin.
    cs = program.couplings
    pairs = [(b, cs[b]) for b in range(program.cat_bin + 1, len(cs)) if 0 < abs(cs[b]) < 1]
    n_slots, couplings = reshape_couplings(pairs)
    slot_bins = [b for b, _ in pairs] + [pairs[-1][0] + 1] if pairs else [first]
    slot_modes = [slots[b - first] for b in slot_bins]
    reshaped = reshape_chain(slot_modes, couplings)
    predicted = reshaped[-1]
    squeezed = reshaped[0] if len(reshaped) > 1 else None

    basis = gram_schmidt_complete([network_mode], 1)
    spec = cfg.phase_grid
    thetas = np.repeat(spec.phases, spec.samples_per_phase)
    rho_ng = apply_loss(squeezed_single_photon_dm(cfg.s, cfg.truth_n_max), eta)
    traces = synthesize_traces(basis, 0, rho_ng, cfg.s, thetas, len(thetas),
                               task_seed(seed, STAGE_TRACES, 0), bg_eta=1.0 - cfg.kappa_out)
    extracted = extract_mode_eigen(traces)
    if overlap(extracted, predicted) < 0:
        extracted = -extracted
    cat_samples = HomodyneSamples(traces.theta, apply_mode_filter(traces, predicted))
    if squeezed is None:
        squeezed = gram_schmidt_complete([predicted, translate(f, -cfg.tau) if first > 0 else f], 2)[1]
    sq_samples = HomodyneSamples(traces.theta, apply_mode_filter(traces, squeezed))

    M = coupling_matrix(n_slots, couplings)
    overlaps = {
        "predicted_network": overlap(predicted, network_mode),
        "predicted_extracted": overlap(predicted, extracted),
        "network_extracted": overlap(network_mode, extracted),
    }
    return BSResult(grid, predicted, network_mode, extracted, squeezed,
                    coeffs[first:last + 1] ** 2, M[:, -1] ** 2, eta, overlaps, cat_samples, sq_samples)


def bs_reference_states(cfg, eta):
    """True cat and background states matching ``bs_experiment``'s synthesis."""
    cat = apply_loss(squeezed_single_photon_dm(cfg.s, cfg.truth_n_max), eta)
    sq = apply_loss(squeezed_vacuum_dm(cfg.s, cfg.truth_n_max), 1.0 - cfg.kappa_out)
    return cat, sq


def lifetime_us(cfg, kappa_in):
    return math.inf if kappa_in == 0 else cfg.tau / kappa_in * 1e6
