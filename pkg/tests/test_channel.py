import numpy as np
import pytest

from asyncalign import (
    ParameterError,
    approximation_error,
    build_circulant,
    build_toeplitz,
    channel_links,
    draw_realization,
    make_waveform,
    noise_covariance,
    phase_model,
    phase_model_error,
    phase_truncation_error,
    strong_norm,
    weak_norm,
)
from asyncalign.channel import (
    base_eigenvalues,
    covariance_factor,
    dft_matrix,
    phase_ramp,
    phase_truncation_bound,
    to_dft,
)


@pytest.fixture(scope="module")
def rrc8():
    return make_waveform("root-raised-cosine", 0.25, 8)


@pytest.fixture(scope="module")
def rrc4():
    return make_waveform("root-raised-cosine", 0.25, 4)


class TestNorms:
    def test_identity_weak_norm(self):
        for N in (2, 7, 32):
            assert weak_norm(np.eye(N)) == pytest.approx(1.0)

    def test_strong_norm_of_diagonal(self):
        assert strong_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)

    def test_weak_below_strong(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
            assert weak_norm(A) <= strong_norm(A) + 1e-12


class TestToeplitz:
    def test_ideal_sinc_zero_delay_is_identity(self):
        w = make_waveform("sinc")
        np.testing.assert_allclose(build_toeplitz(w, 0.0, 5), np.eye(5), atol=1e-12)

    def test_ideal_sinc_half_delay_column(self):
        w = make_waveform("sinc")
        gam = build_toeplitz(w, 0.5, 4)
        np.testing.assert_allclose(gam[:, 0], np.sinc(np.arange(4) + 0.5), atol=1e-12)

    def test_shift_structure(self, rrc8):
        gam = build_toeplitz(rrc8, 0.3, 12)
        np.testing.assert_allclose(gam[:-1, :-1], gam[1:, 1:], atol=0)


class TestCirculant:
    def test_ideal_sinc_identity(self):
        link = build_circulant(make_waveform("sinc"), 0.0, 8)
        np.testing.assert_allclose(link.lam, np.ones(8), atol=1e-12)
        np.testing.assert_allclose(link.matrix(), np.eye(8), atol=1e-12)

    def test_truncated_rrc_full_rank(self, rrc4):
        link = build_circulant(rrc4, 0.3, 16)
        assert link.singular_ratio() > 1e-9

    def test_eigenvalues_are_generator_dft(self, rrc4):
        link = build_circulant(rrc4, 0.3, 16)
        np.testing.assert_allclose(link.lam, np.fft.fft(link.generator.values),
                                   atol=1e-12)

    def test_dft_diagonalization_residual(self, rrc4):
        link = build_circulant(rrc4, -0.45, 16)
        U = dft_matrix(16)
        recon = U.conj().T @ np.diag(link.lam) @ U
        assert strong_norm(link.matrix() - recon) <= 1e-10

    def test_apply_matches_matrix(self, rrc4):
        link = build_circulant(rrc4, 0.21, 16)
        rng = np.random.default_rng(3)
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        np.testing.assert_allclose(link.apply(x), link.matrix() @ x, atol=1e-12)

    def test_full_rank_over_random_draws(self, rrc4, rrc8):
        rng = np.random.default_rng(11)
        for w in (rrc4, rrc8):
            for _ in range(50):
                tau_hat = float(rng.uniform(-1, 1))
                assert build_circulant(w, tau_hat, 64).singular_ratio() > 1e-9


class TestPhaseModel:
    def test_zero_delay_is_identity(self):
        np.testing.assert_allclose(phase_ramp(0.0, 16), np.ones(16))

    def test_half_delay_phases(self):
        got = phase_model(np.ones(4), 0.5, 4)
        np.testing.assert_allclose(got, np.exp(-1j * np.pi * np.arange(4) / 4),
                                   atol=1e-14)

    def test_exponent_additivity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = rng.uniform(-2, 2, 2)
            lhs = phase_ramp(a, 32) * phase_ramp(b, 32)
            np.testing.assert_allclose(lhs, phase_ramp(a + b, 32), atol=1e-12)

    def test_ideal_band_limited_model_is_exact(self):
        # for infinite-support pulses the circulant is placed on the model
        w = make_waveform("root-raised-cosine", 0.25, None)
        lam = build_circulant(w, 0.37, 32).lam
        model = phase_model(base_eigenvalues(w, 32), 0.37, 32)
        assert phase_model_error(lam, model) <= 1e-10


class TestNoiseCovariance:
    def test_unit_diagonal(self, rrc4):
        phi = noise_covariance(rrc4, 16, 4)
        np.testing.assert_allclose(np.diag(phi), np.ones(16), atol=1e-9)

    def test_psd_up_to_roundoff(self, rrc4):
        phi = noise_covariance(rrc4, 16, 4)
        vals = np.linalg.eigvalsh(phi)
        assert vals.min() >= -1e-10

    def test_band_order(self, rrc4):
        phi = noise_covariance(rrc4, 16, 4)
        r, c = np.indices(phi.shape)
        assert np.all(phi[np.abs(r - c) >= 4] == 0)

    def test_factor_reproduces_covariance(self, rrc4):
        phi = noise_covariance(rrc4, 16, 4, sigma2=2.0)
        half = covariance_factor(phi)
        np.testing.assert_allclose(half @ half.conj().T, phi, atol=1e-10)


class TestApproximationError:
    def test_zero_for_equal_matrices(self, rrc8):
        link = build_circulant(rrc8, 0.37, 64)
        err = approximation_error(link.matrix(), link, rrc8)
        assert err["weak_error"] <= 1e-12
        assert err["max_diag_error"] <= 1e-12

    def test_error_decays_with_block_length(self, rrc8):
        errs = {}
        for N in (64, 512):
            toep = build_toeplitz(rrc8, 0.37, N)
            errs[N] = approximation_error(toep, build_circulant(rrc8, 0.37, N),
                                          rrc8)["weak_error"]
        assert errs[512] < errs[64]

    def test_diagonal_error_under_bound(self, rrc8):
        for N in (64, 128, 256):
            toep = build_toeplitz(rrc8, 0.37, N)
            err = approximation_error(toep, build_circulant(rrc8, 0.37, N), rrc8)
            assert err["max_diag_error"] <= err["diag_bound"]

    def test_bound_matches_series_oracle(self, rrc8):
        # closed-form tail (Hurwitz zeta) against the raw series to 1e6 terms
        from asyncalign.channel import diag_error_bound
        N = 64
        a, eta = rrc8.decay_constant, rrc8.decay_exponent
        k = np.arange(1, N)
        series = (2 * a / N) * np.sum(k ** (1 - eta)) \
            + 2 * a * np.sum(np.arange(N, 10**6, dtype=float) ** (-eta))
        assert diag_error_bound(rrc8, N) == pytest.approx(series, rel=1e-9)

    def test_asymptotic_equivalence(self, rrc8):
        # weak-norm error monotone (10% jitter allowed), strong norms bounded
        weak_errs, strongs = [], []
        for N in (64, 128, 256, 512):
            toep = build_toeplitz(rrc8, 0.37, N)
            circ = build_circulant(rrc8, 0.37, N)
            weak_errs.append(approximation_error(toep, circ, rrc8)["weak_error"])
            strongs.extend([strong_norm(toep), strong_norm(circ.matrix())])
        for prev, nxt in zip(weak_errs, weak_errs[1:]):
            assert nxt <= 1.1 * prev
        assert max(strongs) < 3.0


class TestPhaseTruncationError:
    def test_ideal_pulse_has_no_truncation_error(self):
        w = make_waveform("sinc")
        lam = build_circulant(w, 0.4, 64).lam
        model = phase_model(base_eigenvalues(w, 64), 0.4, 64)
        assert phase_model_error(lam, model) <= 1e-10

    def test_decay_with_support(self):
        errs = {}
        for u in (4, 16):
            w = make_waveform("root-raised-cosine", 0.25, u)
            errs[u] = phase_truncation_error(w, 0.4, 64, u)["max_error"]
        assert errs[16] < errs[4]

    def test_under_tail_bound(self):
        for u in (4, 8, 16):
            w = make_waveform("root-raised-cosine", 0.25, u)
            res = phase_truncation_error(w, 0.4, 64, u)
            assert res["max_error"] <= res["bound"]

    def test_bound_matches_series_oracle(self):
        w = make_waveform("root-raised-cosine", 0.25, 8)
        series = 4 * w.decay_constant * np.sum(
            np.arange(8, 10**6, dtype=float) ** (-3.0))
        assert phase_truncation_bound(w, 8) == pytest.approx(series, rel=1e-9)


class TestRealization:
    def test_deterministic_for_seed(self):
        a = draw_realization(3, 1, 7)
        b = draw_realization(3, 1, 7)
        np.testing.assert_array_equal(a.gains, b.gains)
        np.testing.assert_array_equal(a.delays, b.delays)

    def test_relative_delay_arithmetic(self):
        real = draw_realization(3, 1, 0)
        real.delays[0, 1] = 0.7
        real.delays[0, 2] = 0.2
        assert real.rel_delay(0, 1, 2) == pytest.approx(0.5)

    def test_relative_delays_bounded_and_distinct(self):
        for seed in range(100):
            real = draw_realization(3, 1, seed)
            for i in range(3):
                vals = [real.rel_delay(i, m, j)
                        for m in range(3) for j in range(3) if m != j]
                assert max(abs(v) for v in vals) < 1.0
                diffs = np.abs(np.subtract.outer(vals, vals))
                np.fill_diagonal(diffs, np.inf)
                assert diffs.min() > 0  # pairwise distinct within a receiver

    def test_small_networks_rejected(self):
        with pytest.raises(ParameterError):
            draw_realization(2, 1, 0)

    def test_gains_never_vanish(self):
        for seed in range(20):
            real = draw_realization(4, 2, seed)
            assert np.abs(real.gains).min() > 1e-6


class TestDiagonalModelConsistency:
    def test_dft_turns_circulant_into_diagonal(self, rrc4):
        # transforming by U reduces the block model to elementwise products
        real = draw_realization(3, 1, 9)
        links = channel_links(real, rrc4, 16, "circulant")
        rng = np.random.default_rng(2)
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        for (i, j), link in links.links.items():
            lhs = to_dft(link.apply(x))
            rhs = link.lam * to_dft(x)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)
