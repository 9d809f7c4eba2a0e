import dataclasses

import numpy as np
import pytest

from asyncalign import (
    DegenerateReceiverError,
    DimensionError,
    apply_channel,
    channel_links,
    draw_realization,
    encode_frame,
    make_waveform,
    mimo_run,
    noise_covariance,
    rate_sweep,
    scheme_dims,
    spread_delay_realization,
    synchronous_realization,
    zero_force,
)
from asyncalign.channel import covariance_factor
from asyncalign.linksim import (
    Frame,
    LinkSetup,
    design_precoders,
    dof_slope,
    extend_body,
    strip_cps,
    truth_links,
)


@pytest.fixture(scope="module")
def ideal_pulse():
    return make_waveform("root-raised-cosine", 0.25, None)


def gaussian_payload(rng, count):
    return (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2)


def make_frames(prec, dims, rng, u, cps):
    return {j: encode_frame(gaussian_payload(rng, dims.streams(j)), prec.V[j], u, cps)
            for j in prec.V}


class TestFraming:
    def test_cps_layout(self):
        body = np.arange(5, dtype=complex)
        block = extend_body(body, 1, "full")
        np.testing.assert_array_equal(block, [3, 4, 0, 1, 2, 3, 4, 0, 1])
        assert len(block) == 5 + 2 * (1 + 1)

    def test_zero_support_overhead(self):
        block = extend_body(np.arange(6, dtype=complex), 0, "full")
        assert len(block) == 6 + 2

    def test_strip_round_trip(self):
        body = np.arange(8, dtype=complex)
        assert np.array_equal(strip_cps(extend_body(body, 2, "full"), 8, 2), body)

    def test_payload_length_guard(self):
        V = np.eye(4)[:, :2]
        with pytest.raises(DimensionError):
            encode_frame(np.ones(3), V, 1)

    def test_encode_applies_precoder(self):
        V = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]])
        frame = encode_frame(np.array([2.0, 1.0]), V, 1, "none")
        np.testing.assert_allclose(frame.body, [2.0, 1.0, 1.0])


class TestApplyChannel:
    def test_trivial_link_passes_body_through(self):
        # synchronous sinc network with identity gains: every y equals the
        # summed bodies; silence two users to isolate the third.
        w = make_waveform("sinc")
        real = synchronous_realization(3, 1, 0, delay=0.0)
        gains = np.zeros((3, 3, 1, 1), dtype=complex)
        gains[0, 0] = gains[1, 1] = gains[2, 2] = 1.0
        real = dataclasses.replace(real, gains=gains)
        links = channel_links(real, w, 8, "circulant")
        rng = np.random.default_rng(0)
        frames = {}
        for j in range(3):
            body = gaussian_payload(rng, 8) if j == 0 else np.zeros(8, dtype=complex)
            frames[j] = Frame(payload=body, body=body,
                              block=extend_body(body, 2, "full"), u=2, cps="full")
        y = apply_channel(frames, real, links, 0.0)
        np.testing.assert_allclose(y[0], frames[0].body, atol=1e-12)

    def test_full_cps_matches_circulant_exactly(self, ideal_pulse):
        dims = scheme_dims(3, 16)
        w = make_waveform("root-raised-cosine", 0.25, 8)
        real = draw_realization(3, 1, 3)
        setup_c = LinkSetup(realization=real, waveform=w, dims=dims, mode="circulant")
        prec, _ = design_precoders(setup_c)
        rng = np.random.default_rng(1)
        frames = make_frames(prec, dims, rng, 8, "full")
        y_circ = apply_channel(frames, real, truth_links(setup_c), 0.0)
        setup_t = dataclasses.replace(setup_c, mode="toeplitz-exact")
        y_toep = apply_channel(frames, real, truth_links(setup_t), 0.0)
        for i in range(3):
            assert np.abs(y_toep[i] - y_circ[i]).max() <= 1e-12

    def test_dropping_suffix_breaks_equivalence(self, ideal_pulse):
        dims = scheme_dims(3, 16)
        w = make_waveform("root-raised-cosine", 0.25, 8)
        real = draw_realization(3, 1, 3)
        setup_c = LinkSetup(realization=real, waveform=w, dims=dims, mode="circulant")
        prec, _ = design_precoders(setup_c)
        rng = np.random.default_rng(1)
        setup_t = dataclasses.replace(setup_c, mode="toeplitz-exact")
        frames_full = make_frames(prec, dims, rng, 8, "full")
        frames_pref = {j: encode_frame(frames_full[j].payload, prec.V[j], 8, "prefix")
                       for j in frames_full}
        y_circ = apply_channel(frames_full, real, truth_links(setup_c), 0.0)
        full_gap = max(np.abs(apply_channel(frames_full, real, truth_links(setup_t),
                                            0.0)[i] - y_circ[i]).max()
                       for i in range(3))
        pref_gap = max(np.abs(apply_channel(frames_pref, real, truth_links(setup_t),
                                            0.0)[i] - y_circ[i]).max()
                       for i in range(3))
        assert pref_gap >= 10 * max(full_gap, 1e-14)

    def test_bare_body_error_shrinks_with_block_length(self):
        # without CPS the honest banded-Toeplitz output drifts from the
        # circulant model only at the block edges: rms gap shrinks with N
        w = make_waveform("root-raised-cosine", 0.25, 8)
        rng = np.random.default_rng(5)
        gaps = {}
        for N in (64, 256):
            from asyncalign.channel import build_circulant
            from asyncalign.linksim import _band_convolve
            link = build_circulant(w, 0.33, N)
            rms = []
            for _ in range(30):
                x = gaussian_payload(rng, N)
                y_circ = link.apply(x)
                y_toep = _band_convolve(link.generator.taps, 8, x)[:N]
                rms.append(np.mean(np.abs(y_toep - y_circ) ** 2))
            gaps[N] = np.sqrt(np.mean(rms))
        assert gaps[256] < gaps[64]

    def test_noise_covariance_monte_carlo(self):
        # sample covariance of the colored matched-filter noise vs Phi
        w = make_waveform("root-raised-cosine", 0.25, 4)
        N, runs = 16, 20000
        phi = noise_covariance(w, N, 4, 1.0)
        half = covariance_factor(phi)
        rng = np.random.default_rng(123)
        z = ((rng.standard_normal((runs, N)) + 1j * rng.standard_normal((runs, N)))
             / np.sqrt(2)) @ half.T
        sample = z.conj().T @ z / runs
        rel = np.linalg.norm(sample - phi) / np.linalg.norm(phi)
        assert rel <= 0.05

    def test_energy_additivity_per_user(self, ideal_pulse):
        dims = scheme_dims(3, 2)
        real = draw_realization(3, 1, 8)
        setup = LinkSetup(realization=real, waveform=ideal_pulse, dims=dims)
        prec, _ = design_precoders(setup)
        links = truth_links(setup)
        rng = np.random.default_rng(2)
        frames = make_frames(prec, dims, rng, 2, "none")
        y_all = apply_channel(frames, real, links, 0.0)[0]
        parts = []
        for only in range(3):
            solo = {j: frames[j] if j == only else
                    Frame(payload=np.zeros_like(frames[j].payload),
                          body=np.zeros_like(frames[j].body),
                          block=np.zeros_like(frames[j].block), u=2, cps="none")
                    for j in range(3)}
            parts.append(apply_channel(solo, real, links, 0.0)[0])
        np.testing.assert_allclose(sum(parts), y_all, atol=1e-12)
        for j, part in enumerate(parts):
            expect = abs(real.gain(0, j)) ** 2 * np.linalg.norm(
                links.links[(0, j)].apply(frames[j].body)) ** 2
            assert np.linalg.norm(part) ** 2 == pytest.approx(expect, rel=1e-10)


class TestZeroForcing:
    @pytest.mark.parametrize("K,n", [(3, 1), (3, 2)])
    def test_noiseless_recovery_is_exact(self, K, n, ideal_pulse):
        for seed in range(25):
            dims = scheme_dims(K, n)
            real = draw_realization(K, 1, seed)
            setup = LinkSetup(realization=real, waveform=ideal_pulse, dims=dims)
            prec, _ = design_precoders(setup)
            links = truth_links(setup)
            rng = np.random.default_rng(seed + 1000)
            frames = make_frames(prec, dims, rng, 2, "none")
            y = apply_channel(frames, real, links, 0.0)
            for i in range(K):
                x_hat = zero_force(y[i], prec, links, i)
                err = (np.linalg.norm(x_hat - frames[i].payload)
                       / np.linalg.norm(frames[i].payload))
                assert err <= 1e-6

    def test_leakage_decays_with_support(self):
        # ideal-phase design against circulant truth: post-ZF interference
        # shrinks as the truncation support grows (paired trials, median)
        dims = scheme_dims(3, 16)
        ideal = make_waveform("root-raised-cosine", 0.25, None)
        reals = [draw_realization(3, 1, seed) for seed in range(20)]
        medians = {}
        for u in (4, 8, 16):
            w = make_waveform("root-raised-cosine", 0.25, u)
            leaks = []
            for real in reals:
                setup = LinkSetup(realization=real, waveform=w, dims=dims,
                                  mode="circulant")
                design = channel_links(real, ideal, dims.N, "ideal-phase")
                from asyncalign import aligner
                prec = aligner.build_precoders(
                    dims, aligner.build_generators(design, dims))
                links = truth_links(setup)
                from asyncalign.linksim import receiver_report
                _, leak = receiver_report(prec, links, 1, snr=1.0, strict=False)
                leaks.append(leak)
            medians[u] = float(np.median(leaks))
        assert medians[4] > medians[8] > medians[16]

    def test_synchronous_receiver_degenerates(self, ideal_pulse):
        real = synchronous_realization(3, 1, 4, delay=0.3)
        dims = scheme_dims(3, 2)
        setup = LinkSetup(realization=real, waveform=ideal_pulse, dims=dims)
        prec, _ = design_precoders(setup)
        links = truth_links(setup)
        with pytest.raises(DegenerateReceiverError):
            zero_force(np.zeros(dims.N, dtype=complex), prec, links, 1)


class TestRateSweep:
    def test_slope_hits_stream_ratio_band_limited(self, ideal_pulse):
        real = spread_delay_realization(3, 8, 1, 0)
        dims = scheme_dims(3, 8)
        setup = LinkSetup(realization=real, waveform=ideal_pulse, dims=dims)
        results = rate_sweep(setup, np.arange(40, 61, 4))
        target = dims.total_streams() / dims.N
        assert results[0].dof_slope == pytest.approx(target, rel=0.10)

    def test_noise_rescaling_preserves_slope(self, ideal_pulse):
        # doubling every noise variance is a 3 dB grid shift: same slope
        real = spread_delay_realization(3, 4, 1, 0)
        dims = scheme_dims(3, 4)
        setup = LinkSetup(realization=real, waveform=ideal_pulse, dims=dims)
        base = rate_sweep(setup, np.arange(40, 61, 4))[0].dof_slope
        shifted = rate_sweep(setup, np.arange(40, 61, 4) - 10 * np.log10(2))
        assert shifted[0].dof_slope == pytest.approx(base, rel=0.05)

    def test_cps_accounting_divides_by_extended_span(self, ideal_pulse):
        real = spread_delay_realization(3, 4, 1, 0)
        dims = scheme_dims(3, 4)
        grid = np.arange(40, 61, 5)
        plain = rate_sweep(LinkSetup(realization=real, waveform=ideal_pulse,
                                     dims=dims), grid)
        cps = rate_sweep(LinkSetup(realization=real, waveform=ideal_pulse,
                                   dims=dims, accounting="cps", u_overhead=3),
                         grid)
        ratio = plain[0].sum_rate / cps[0].sum_rate
        assert ratio == pytest.approx((dims.N + 8) / dims.N, rel=1e-9)

    def test_grid_validation(self, ideal_pulse):
        real = draw_realization(3, 1, 0)
        setup = LinkSetup(realization=real, waveform=ideal_pulse,
                          dims=scheme_dims(3, 1))
        with pytest.raises(DimensionError):
            rate_sweep(setup, [20.0])

    def test_run_results_carry_replay_metadata(self, ideal_pulse):
        real = draw_realization(3, 1, 42)
        setup = LinkSetup(realization=real, waveform=ideal_pulse,
                          dims=scheme_dims(3, 1))
        res = rate_sweep(setup, [10.0, 20.0, 30.0, 40.0])
        for r in res:
            assert r.meta["seed"] == 42
            assert r.meta["mode"] == "ideal-phase"


class TestMimo:
    def test_two_antenna_noiseless_recovery(self, ideal_pulse):
        for seed in range(10):
            real = draw_realization(3, 2, seed)
            setup = LinkSetup(realization=real, waveform=ideal_pulse,
                              dims=scheme_dims(3, 1))
            result = mimo_run(setup, seed=seed)
            assert max(result.recovery_error.values()) <= 1e-6
            assert result.projector_leakage <= 1e-9
            assert result.streams == {0: 4, 1: 2, 2: 2}

    def test_single_antenna_reduction_is_deterministic(self, ideal_pulse):
        real = draw_realization(3, 1, 5)
        setup = LinkSetup(realization=real, waveform=ideal_pulse,
                          dims=scheme_dims(3, 2))
        a = mimo_run(setup, seed=7)
        b = mimo_run(setup, seed=7)
        assert a.recovery_error == b.recovery_error
        assert max(a.recovery_error.values()) <= 1e-9

    def test_dof_slope_helper(self):
        x = np.array([10.0, 20.0, 30.0, 40.0])
        rates = 2.5 * np.log2(10 ** (x / 10)) + 1.0
        assert dof_slope(x, rates) == pytest.approx(2.5)
