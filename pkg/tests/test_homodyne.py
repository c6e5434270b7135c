import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from loopcat.errors import (
    AmbiguityError,
    ArityError,
    ConfigError,
    DomainError,
    GridMismatchError,
    PreconditionError,
    SupportError,
)
from loopcat.fock import apply_loss, fock_dm, squeezed_single_photon_dm, squeezed_vacuum_dm, vacuum_dm
from loopcat.homodyne import (
    HomodyneSamples,
    HomodyneTraces,
    PhaseGridSpec,
    QuadratureSampler,
    apply_mode_filter,
    background_variance,
    extract_mode_eigen,
    extract_mode_eigen_full,
    optimize_mode_params,
    sample_quadratures,
    synthesize_traces,
    variance_provider,
    wrap_phase,
)
from loopcat.modes import (
    DEFAULT_FILTER,
    TAU,
    FilterSpec,
    TimeGrid,
    gram_schmidt_complete,
    mode_from_response,
    overlap,
    translate,
)

S = math.log(10) / 20 * 2.6


class TestPhaseGrid:
    def test_standard_grid(self):
        spec = PhaseGridSpec.standard()
        assert len(spec.phases) == 12
        assert spec.phases[0] == pytest.approx(-math.pi / 2)
        assert spec.phases[-1] == pytest.approx(math.radians(75))
        assert spec.samples_per_phase == 3000

    def test_invalid(self):
        with pytest.raises(DomainError):
            PhaseGridSpec((), 10)
        with pytest.raises(DomainError):
            PhaseGridSpec((0.0,), 0)

    @given(st.floats(-100, 100))
    def test_wrap(self, t):
        w = float(wrap_phase(t))
        assert -math.pi <= w < math.pi
        assert math.cos(w) == pytest.approx(math.cos(t), abs=1e-9)


class TestSampling:
    def test_squeezed_vacuum_distribution(self):
        # oracle: the x quadrature of squeezed vacuum is Gaussian with variance e^{-2s}/2
        spec = PhaseGridSpec((0.0, math.pi / 2), 4000)
        smp = sample_quadratures(squeezed_vacuum_dm(S, 20), spec, seed=11)
        for theta, var in ((0.0, math.exp(-2 * S) / 2), (math.pi / 2, math.exp(2 * S) / 2)):
            x = smp.x[np.isclose(smp.theta, theta)]
            p = stats.kstest(x, "norm", args=(0.0, math.sqrt(var))).pvalue
            assert p > 1e-3

    def test_single_photon_moments(self):
        spec = PhaseGridSpec.from_degrees([0, 45], 20000)
        x = sample_quadratures(fock_dm(1, 10), spec, seed=3).x
        # <x^2> = 3/2, <x^4> = 15/4 for |1>
        assert np.mean(x ** 2) == pytest.approx(1.5, abs=0.05)
        assert np.mean(x ** 4) == pytest.approx(3.75, abs=0.3)

    def test_seeded_reproducible(self):
        spec = PhaseGridSpec.standard(200)
        rho = squeezed_single_photon_dm(S, 20)
        a = sample_quadratures(rho, spec, seed=5)
        b = sample_quadratures(rho, spec, seed=5)
        c = sample_quadratures(rho, spec, seed=6)
        assert np.array_equal(a.x, b.x)
        assert not np.array_equal(a.x, c.x)

    def test_layout(self):
        spec = PhaseGridSpec.standard(50)
        smp = sample_quadratures(vacuum_dm(5), spec, seed=0)
        assert len(smp) == 600
        assert np.allclose(np.sort(smp.phases()), np.sort(spec.phases))

    def test_support_error(self):
        with pytest.raises(SupportError):
            QuadratureSampler(fock_dm(60, 70)).table(0.0)

    def test_multimode_rejected(self):
        from loopcat.fock import product_state

        two = product_state(vacuum_dm(3), vacuum_dm(3))
        with pytest.raises(ArityError):
            QuadratureSampler(two)


class TestSamplesCSV:
    def test_round_trip(self, tmp_path):
        smp = sample_quadratures(vacuum_dm(5), PhaseGridSpec.standard(10), seed=1)
        path = tmp_path / "s.csv"
        smp.write_csv(path)
        back = HomodyneSamples.read_csv(path)
        assert np.array_equal(back.x, smp.x)
        assert np.allclose(back.theta, smp.theta, atol=1e-15)

    @pytest.mark.parametrize("content,line", [
        ("theta_deg,x\n0,1.0\n15,abc\n", 3),
        ("theta_deg,x\n0,1.0,2\n", 2),
        ("0,nan\n", 1),
        ("", 1),
    ])
    def test_errors_carry_line(self, tmp_path, content, line):
        path = tmp_path / "bad.csv"
        path.write_text(content)
        with pytest.raises(ConfigError, match=rf"bad\.csv:{line}:"):
            HomodyneSamples.read_csv(path)

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("# recorded\n\n0,0.5\n90,-0.25\n")
        smp = HomodyneSamples.read_csv(path)
        assert list(smp.x) == [0.5, -0.25]

    def test_indexing(self):
        smp = HomodyneSamples([0.0, 1.0, 2.0], [0.1, 0.2, 0.3])
        assert smp[1].x == 0.2
        assert len(smp[1:]) == 2
        assert [s.theta for s in smp] == [0.0, 1.0, 2.0]
        with pytest.raises(DomainError):
            HomodyneSamples([0.0], [0.1, 0.2])


def test_background_variance():
    assert background_variance(S, 0.0) == pytest.approx(math.exp(-2 * S) / 2)
    assert background_variance(S, math.pi / 2) == pytest.approx(math.exp(2 * S) / 2)
    assert background_variance(S, 0.3, eta=0.0) == pytest.approx(0.5)
    # phase average of the squeezed variances equals <x^2> averaged over theta
    th = np.linspace(-math.pi, math.pi, 2001)[:-1]
    assert np.mean(background_variance(S, th)) == pytest.approx(math.cosh(2 * S) / 2)


@pytest.fixture(scope="module")
def dual_peak():
    grid = TimeGrid.for_bins(1, 2, TAU)
    f = mode_from_response(DEFAULT_FILTER, TAU, grid, window=TAU)
    g = translate(f, TAU)
    return grid, f, g


class TestSynthesis:
    def test_seeded_reproducible(self, dual_peak):
        grid, f, g = dual_peak
        basis = gram_schmidt_complete([f, g], 2)
        tr = synthesize_traces(basis, 0, vacuum_dm(8), S, 0.3, 50, seed=4)
        xs = apply_mode_filter(tr, f)
        tr2 = synthesize_traces(basis, 0, vacuum_dm(8), S, 0.3, 50, seed=4)
        assert np.array_equal(tr.values, tr2.values)
        assert np.all(np.abs(xs) < 8)

    def test_mode_statistics(self, dual_peak):
        grid, f, g = dual_peak
        rho = apply_loss(squeezed_single_photon_dm(S, 20), 0.7)
        th = np.repeat([0.0, math.pi / 2], 3000)
        tr = synthesize_traces([f, g], 0, rho, S, th, len(th), seed=8)
        xf = apply_mode_filter(tr, f)
        xg = apply_mode_filter(tr, g)
        for sel, theta in ((th == 0.0, 0.0), (th > 0, math.pi / 2)):
            # the background mode g carries squeezed vacuum at the trace phase
            assert np.var(xg[sel]) == pytest.approx(background_variance(S, theta), rel=0.08)
        # the planted mode follows rho: <x^2> averaged over the two phases equals <n> + 1/2
        n_mean = float(np.real(np.diag(rho.data)) @ np.arange(rho.data.shape[0]))
        assert np.mean(xf ** 2) == pytest.approx(n_mean + 0.5, rel=0.05)

    def test_basis_checks(self, dual_peak):
        grid, f, _ = dual_peak
        with pytest.raises(PreconditionError):
            synthesize_traces([f, f], 0, vacuum_dm(4), S, 0.0, 10, seed=0)
        with pytest.raises(DomainError):
            synthesize_traces([f], 1, vacuum_dm(4), S, 0.0, 10, seed=0)
        other = mode_from_response(DEFAULT_FILTER, 0.0, TimeGrid.default(), window=TAU)
        with pytest.raises(GridMismatchError):
            synthesize_traces([f, other], 0, vacuum_dm(4), S, 0.0, 10, seed=0)

    def test_trace_container(self, dual_peak):
        grid, f, _ = dual_peak
        with pytest.raises(DomainError):
            HomodyneTraces(grid, np.zeros((3, 5)), 0.0)
        a = HomodyneTraces(grid, np.zeros((2, grid.n_points)), 0.5)
        b = HomodyneTraces(grid, np.ones((3, grid.n_points)), [0.1, 0.2, 0.3])
        joined = HomodyneTraces.concat([a, b])
        assert len(joined) == 5 and joined.theta[0] == 0.5

    def test_filter_grid_mismatch(self, dual_peak):
        grid, f, _ = dual_peak
        with pytest.raises(GridMismatchError):
            apply_mode_filter(np.zeros(grid.n_points + 1), f)


@pytest.fixture(scope="module")
def traces(dual_peak):
    grid, f, g = dual_peak
    mode = f.__class__.from_waveform(grid, -math.sqrt(0.5) * f.samples + math.sqrt(0.5) * g.samples)
    th = np.tile(np.deg2rad(np.arange(-90, 76, 15)), 500)
    rho = squeezed_single_photon_dm(S, 20)
    return mode, synthesize_traces([mode], 0, rho, S, th, len(th), seed=21)


class TestEigenExtraction:

    def test_recovers_planted_mode(self, traces):
        mode, tr = traces
        res = extract_mode_eigen_full(tr)
        assert abs(overlap(res.mode, mode)) > 0.98
        assert res.background == pytest.approx(math.cosh(2 * S) / 2 / tr.grid.dt, rel=0.05)

    def test_sign_convention(self, traces):
        _, tr = traces
        v = extract_mode_eigen(tr).samples
        assert v[np.argmax(np.abs(v))] > 0

    def test_known_background(self, traces):
        mode, tr = traces
        m = extract_mode_eigen(tr, background_variance=math.cosh(2 * S) / 2)
        assert abs(overlap(m, mode)) > 0.98

    def test_pure_noise_is_ambiguous(self, dual_peak):
        grid, f, g = dual_peak
        th = np.tile(np.deg2rad(np.arange(-90, 76, 15)), 500)
        tr = synthesize_traces([f], 0, squeezed_vacuum_dm(S, 20), S, th, len(th), seed=2)
        with pytest.raises(AmbiguityError):
            extract_mode_eigen(tr)

    def test_too_few(self, traces):
        _, tr = traces
        small = HomodyneTraces(tr.grid, tr.values[:10], tr.theta[:10])
        with pytest.raises(PreconditionError):
            extract_mode_eigen(small)


class TestModeParams:
    def test_provider_peaks_at_truth(self):
        grid = TimeGrid.for_bins(0, 0, TAU)
        f = mode_from_response(DEFAULT_FILTER, 0.0, grid, window=TAU)
        th = np.tile(np.deg2rad(np.arange(-90, 76, 15)), 300)
        tr = synthesize_traces([f], 0, squeezed_single_photon_dm(S, 20), S, th, len(th), seed=1)
        prov = variance_provider(tr)
        g1, g2 = DEFAULT_FILTER.gamma1, DEFAULT_FILTER.gamma2
        best = prov(0.0, g1, g2)
        assert best > prov(0.0, 0.7 * g1, g2)
        assert best > prov(0.0, g1, 1.6 * g2)
        assert best > prov(-3e-9, g1, g2)

    def test_exact_provider_recovered(self):
        # a noiseless provider peaked at a known filter
        target = FilterSpec(2 * math.pi * 30e6, 2 * math.pi * 90e6)
        grid = TimeGrid.for_bins(0, 0, TAU)
        ref = mode_from_response(target, 0.0, grid, window=TAU)

        def provider(t0, g1, g2):
            f = mode_from_response(FilterSpec(g1, g2), t0, grid, window=TAU)
            return 1.0 + overlap(f, ref) ** 2

        res = optimize_mode_params(provider, DEFAULT_FILTER)
        assert res.gamma1 == pytest.approx(target.gamma1, rel=1e-3)
        assert res.gamma2 == pytest.approx(target.gamma2, rel=1e-3)
        assert abs(res.t0) < 0.05e-9
        assert res.spec.gamma1 == res.gamma1

    def test_init_type(self):
        with pytest.raises(DomainError):
            optimize_mode_params(lambda *a: 1.0, (1.0, 2.0))
