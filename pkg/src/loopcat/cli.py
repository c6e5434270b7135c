"""Command-line front end: ``loopcat {memory,bs,tomo,selftest}``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure
(including a failing selftest).  Set ``LOOPCAT_LOG=INFO`` (or DEBUG) for
progress messages on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import re
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, STAGE_BOOTSTRAP, task_seed
from .errors import ConfigError, LoopcatError
from .homodyne import HomodyneSamples
from .modes import TimeGrid, write_modes_csv
from .tomography import bootstrap_w0_error, lifetime, run_mle, w0, wigner_grid

log = logging.getLogger("loopcat")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class StageError(Exception):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


def _dump_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def _write_wigner(path, rho, half_range, resolution):
    W = wigner_grid(rho, half_range, resolution)
    np.savetxt(path, W, delimiter=",", fmt="%.17g",
               header=f"half_range={half_range!r},resolution={resolution}", comments="# ")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunWriter:
    """Collects outputs in a staging directory and publishes them only on success."""

    def __init__(self, out_dir, cfg):
        self.out = Path(out_dir)
        self.cfg = cfg
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=".loopcat-", dir=self.out.parent))
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.stage / name

    def snapshot(self):
        # the output location is not part of what was computed
        d = self.cfg.to_dict()
        d.pop("output_dir")
        return d

    def commit(self):
        _dump_json(self.path("config.json"), self.snapshot())
        manifest = {
            "version": __version__,
            "seed": self.cfg.seed,
            "config": self.snapshot(),
            "files": {name: _sha256(self.stage / name) for name in sorted(self.files)},
        }
        _dump_json(self.stage / "manifest.json", manifest)
        self.out.mkdir(parents=True, exist_ok=True)
        for name in [*self.files, "manifest.json"]:
            os.replace(self.stage / name, self.out / name)
        shutil.rmtree(self.stage, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (LoopcatError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        raise StageError(name, exc) from exc


# -- commands ---------------------------------------------------------------

def cmd_memory(cfg, jobs=1):
    from .experiments import fit_points, memory_modes, memory_sweep, model_curve

    writer = RunWriter(cfg.output_dir, cfg)
    try:
        t = time.perf_counter()
        points = _stage("sampling/reconstruction", memory_sweep, cfg, jobs=jobs)
        log.info("memory sweep done in %.1f s", time.perf_counter() - t)
        ns = [p.n for p in points]
        last_bin = max(12, max(ns) + 2)
        grid = TimeGrid.default(cfg.tau, last_bin=last_bin)
        modes = _stage("mode functions", memory_modes, cfg, points, grid)
        write_modes_csv(writer.path("modes.csv"), grid, modes)

        model = _stage("model curve", model_curve, cfg, ns)
        with open(writer.path("w0.csv"), "w") as fh:
            fh.write("N,eta_net,w0,sigma,w0_model\n")
            for p, wm in zip(points, model.w0):
                sigma = "" if p.sigma is None else repr(p.sigma)
                fh.write(f"{p.n},{p.eta!r},{p.w0!r},{sigma},{float(wm)!r}\n")

        for p in points:
            p.samples.write_csv(writer.path(f"samples_N{p.n}.csv"))
            if p.n in cfg.wigner_round_trips:
                _write_wigner(writer.path(f"wigner_N{p.n}.csv"), p.rho,
                              cfg.wigner_half_range, cfg.wigner_resolution)

        if len(points) >= 3:
            sigmas = [p.sigma for p in points]
            if any(s is None or s <= 0 for s in sigmas):
                sigmas = [None] * len(points)
            fit = _stage("loss fit", fit_points, cfg, ns, [p.w0 for p in points], sigmas)
            payload = fit.to_dict(cfg.tau)
            payload["boundary_hit"] = fit.boundary_hit
            payload["weighted"] = sigmas[0] is not None
        else:
            payload = {"kappa_in": None, "kappa_out": None, "residual": None, "lifetime_us": None,
                       "note": "fewer than 3 round-trip counts; fit skipped"}
        _dump_json(writer.path("fit.json"), payload)
        writer.commit()
    except BaseException:
        writer.abort()
        raise
    return points


def cmd_bs(cfg, preset_name=None):
    from .experiments import bs_experiment

    writer = RunWriter(cfg.output_dir, cfg)
    try:
        program = cfg.bs_program(preset_name)
        res = _stage("beam-splitter synthesis", bs_experiment, cfg, program)
        write_modes_csv(writer.path("modes.csv"), res.grid, {
            "predicted": res.predicted, "network": res.network,
            "extracted": res.extracted, "squeezed": res.squeezed,
        })
        cat = _stage("cat reconstruction", run_mle, res.cat_samples, cfg.mle_config)
        sq = _stage("squeezed reconstruction", run_mle, res.sq_samples, cfg.mle_config)
        _write_wigner(writer.path("wigner_cat.csv"), cat.rho, cfg.wigner_half_range, cfg.wigner_resolution)
        _write_wigner(writer.path("wigner_sq.csv"), sq.rho, cfg.wigner_half_range, cfg.wigner_resolution)
        res.cat_samples.write_csv(writer.path("samples_cat.csv"))
        _dump_json(writer.path("overlaps.json"), {
            "program": program.to_dict(),
            "overlaps": res.overlaps,
            "weights": [float(w) for w in res.weights],
            "composed_weights": [float(w) for w in res.composed_weights],
            "eta_net": res.eta,
            "w0_cat": w0(cat.rho),
            "w0_squeezed": w0(sq.rho),
        })
        writer.commit()
    except BaseException:
        writer.abort()
        raise
    return res


def cmd_tomo(samples_path, cfg):
    samples = HomodyneSamples.read_csv(samples_path)
    writer = RunWriter(cfg.output_dir, cfg)
    try:
        res = _stage("reconstruction", run_mle, samples, cfg.mle_config)
        sigma = None
        if cfg.bootstrap:
            sigma = _stage("bootstrap", bootstrap_w0_error, samples, cfg.mle_config, cfg.bootstrap,
                           task_seed(cfg.seed, STAGE_BOOTSTRAP, 0), initial=res.rho)
        _dump_json(writer.path("rho.json"), res.rho.to_dict())
        _write_wigner(writer.path("wigner.csv"), res.rho, cfg.wigner_half_range, cfg.wigner_resolution)
        _dump_json(writer.path("result.json"), {
            "w0": w0(res.rho),
            "sigma_w0": sigma,
            "iterations": res.iterations,
            "converged": res.converged,
            "log_likelihood": res.log_likelihood,
            "n_samples": len(samples),
            "n_phases": int(len(samples.phases())),
        })
        writer.commit()
    except BaseException:
        writer.abort()
        raise
    return res


def selftest_checks():
    """Fast invariant checks as (name, callable returning (ok, detail))."""
    from . import fock
    from .modes import DEFAULT_FILTER, TAU, mode_from_response, overlap, reshape_pair, translate
    from .network import compile_program, memory_program

    def vacuum_variance():
        x = np.linspace(-10, 10, 4001)
        p = fock.quad_pdf(fock.vacuum_dm(4), 0.0, x)
        var = float(np.sum(x * x * p) * (x[1] - x[0]))
        return abs(var - 0.5) < 1e-9, f"var={var:.12f} (expect 0.5)"

    def wigner_anchors():
        a = fock.parity_origin(fock.vacuum_dm(4)) - 1 / math.pi
        b = fock.parity_origin(fock.fock_dm(1, 4)) + 1 / math.pi
        err = max(abs(a), abs(b))
        return err < 1e-12, f"max err {err:.1e}"

    def lossy_photon():
        errs = [abs(fock.parity_origin(fock.apply_loss(fock.fock_dm(1, 4), e)) - (1 - 2 * e) / math.pi)
                for e in (0.0, 0.25, 0.5, 0.717, 1.0)]
        return max(errs) < 1e-9, f"max err {max(errs):.1e}"

    def wigner_normalization():
        s = fock.squeezing_param_from_db(2.6)
        ax = np.linspace(-6, 6, 241)
        W = fock.wigner(fock.squeezed_single_photon_dm(s), ax[:, None], ax[None, :])
        total = float(W.sum() * (ax[1] - ax[0]) ** 2)
        return abs(total - 1) < 1e-6, f"integral {total:.9f}"

    def bs_invariance():
        s = fock.squeezing_param_from_db(2.6)
        ket = fock.squeezed_fock_ket(s, 0, 8, tail_tol=None)
        pair = np.kron(ket, ket)
        worst = 1.0
        for r in (math.sqrt(0.5), -math.sqrt(0.9)):
            out = fock.apply_bs_two_mode(fock.ket_to_dm(pair, 2), r)
            worst = min(worst, fock.fidelity_pure(out, pair))
        return 1 - worst < 1e-6, f"1-F = {1 - worst:.1e}"

    def reshape_orthonormal():
        grid = TimeGrid.default()
        f1 = mode_from_response(DEFAULT_FILTER, 0.0, grid, window=TAU)
        f2 = translate(f1, TAU)
        worst = 0.0
        for r in np.linspace(-1, 1, 21):
            a, b = reshape_pair(f1, f2, r)
            worst = max(worst, abs(overlap(a, b)), abs(overlap(a, a) - 1), abs(overlap(b, b) - 1))
        return worst < 1e-9, f"max Gram err {worst:.1e}"

    def loss_composition():
        s = fock.squeezing_param_from_db(2.6)
        rho = fock.squeezed_single_photon_dm(s)
        lhs = fock.apply_loss(fock.apply_loss(rho, 0.9), 0.7).data
        rhs = fock.apply_loss(rho, 0.63).data
        err = float(np.max(np.abs(lhs - rhs)))
        return err < 1e-12, f"max err {err:.1e}"

    def memory_transmission():
        err = 0.0
        for n in (0, 3, 7, 10):
            net = compile_program(memory_program(n, 16, 0.039, 0.283))
            e = np.zeros(16)
            e[0] = 1
            out = net.T @ e
            err = max(err, abs(float(out @ out) - 0.961 ** n * 0.717))
        return err < 1e-12, f"max err {err:.1e}"

    return [
        ("vacuum quadrature variance", vacuum_variance),
        ("Wigner origin anchors", wigner_anchors),
        ("lossy single-photon W0", lossy_photon),
        ("Wigner normalization", wigner_normalization),
        ("beam-splitter invariance", bs_invariance),
        ("reshape orthonormality", reshape_orthonormal),
        ("loss composition", loss_composition),
        ("memory transmission", memory_transmission),
    ]


def cmd_selftest(stream=None):
    stream = stream or sys.stdout
    rows = []
    for name, fn in selftest_checks():
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed report
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail, time.perf_counter() - t))
    width = max(len(r[0]) for r in rows)
    for name, ok, detail, dt in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {dt:6.2f}s  {detail}", file=stream)
    passed = all(r[1] for r in rows)
    print(f"{sum(r[1] for r in rows)}/{len(rows)} checks passed", file=stream)
    return passed


# -- entry point ------------------------------------------------------------

def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="loopcat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
        p.add_argument("--seed", type=_seed, help="root RNG seed (overrides the config)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--preset", metavar="NAME", help="network preset (fig4b, fig4c, fig4d, memory(N))")

    p = sub.add_parser("memory", help="store-and-retrieve sweep over round trips")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the per-N tasks")
    p = sub.add_parser("bs", help="beam-splitter reshaping experiment")
    common(p)
    p = sub.add_parser("tomo", help="reconstruct a state from a (theta_deg, x) CSV")
    p.add_argument("samples", metavar="CSV")
    common(p)
    sub.add_parser("selftest", help="fast invariant checks")
    return parser


_MEMORY_PRESET = re.compile(r"^memory\((\d+)\)$")


def load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.preset is not None:
        m = _MEMORY_PRESET.match(args.preset)
        if args.command == "memory":
            if not m:
                raise ConfigError(f"memory expects a memory(N) preset, got {args.preset!r}")
            n = int(m.group(1))
            changes["round_trips"] = (n,)
            changes["wigner_round_trips"] = tuple(k for k in cfg.wigner_round_trips if k == n)
        else:
            changes["program"] = args.preset
    return cfg.replace(**changes) if changes else cfg


def _configure_logging():
    level = os.environ.get("LOOPCAT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return EXIT_OK if cmd_selftest() else EXIT_NUMERIC
        cfg = load_config(args)
        if args.command == "memory":
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            cmd_memory(cfg, jobs=args.jobs)
        elif args.command == "bs":
            cmd_bs(cfg)
        elif args.command == "tomo":
            cmd_tomo(args.samples, cfg)
        print(f"wrote results to {cfg.output_dir}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"loopcat: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"loopcat: {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    except LoopcatError as exc:
        print(f"loopcat: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
