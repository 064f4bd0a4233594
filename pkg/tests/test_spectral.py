import numpy as np
import pytest

from specsketch import (
    AllocationAudit,
    AutocorrEstimate,
    SketchedBlock,
    TimeSeriesSource,
    autocorr_direct,
    autocorr_fft,
    autocorr_from_sketch,
    bartlett_window,
    block_seed,
    column_autocorr,
    draw,
    estimate_from_blocks,
    psd_from_autocorr,
    run_pipeline,
    sketch_blocks,
)
from conftest import brute_force_autocorr


class TestAutocorrDirect:
    def test_constant_signal(self):
        est = autocorr_direct(np.ones((3, 1)))
        assert np.allclose(est.r, [1.0, 1.0, 1.0], atol=1e-15)
        assert list(est.counts) == [3, 2, 1]

    def test_single_spike(self):
        est = autocorr_direct(np.array([[1.0], [0.0], [0.0]]))
        assert np.allclose(est.r, [1 / 3, 0.0, 0.0], atol=1e-15)

    def test_matches_independent_double_loop(self):
        x = np.random.default_rng(42).standard_normal((7, 3))
        est = autocorr_direct(x)
        assert np.abs(est.r - brute_force_autocorr(x)).max() <= 1e-12

    def test_one_dimensional_input(self):
        v = np.array([1.0, 2.0, 3.0])
        assert np.allclose(autocorr_direct(v[:, None]).r,
                           autocorr_direct(v.reshape(3, 1)).r)


class TestColumnAutocorr:
    def test_all_ones(self):
        assert np.allclose(column_autocorr(np.ones(3)), [3.0, 2.0, 1.0],
                           atol=1e-12)

    def test_unit_impulse(self):
        v = np.zeros(5)
        v[0] = 1.0
        assert np.allclose(column_autocorr(v), [1, 0, 0, 0, 0], atol=1e-12)

    def test_matches_direct_sum(self):
        v = np.random.default_rng(3).standard_normal(64)
        direct = np.array([np.dot(v[:64 - tau], v[tau:]) for tau in range(64)])
        fast = column_autocorr(v)
        assert np.abs(fast - direct).max() <= 1e-10 * np.abs(direct).max()


class TestFftPath:
    def test_matches_direct_on_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n_steps = int(rng.integers(2, 128))
            n_particles = int(rng.integers(1, 9))
            x = rng.standard_normal((n_steps, n_particles))
            a = autocorr_fft(x).r
            b = autocorr_direct(x).r
            assert np.abs(a - b).max() <= 1e-10 * max(np.abs(b).max(), 1.0)


class TestSketchedAutocorr:
    def test_square_haar_is_exact(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((20, 8))
        op = draw("haar", 8, 8, 99)
        block = SketchedBlock(0, np.stack([op.matrix @ row for row in x]),
                              "haar", 8, 99)
        est = autocorr_from_sketch(block)
        assert np.abs(est.r - autocorr_direct(x).r).max() <= 1e-8

    def test_monte_carlo_unbiased(self):
        n_steps, n_particles, m, n_draws = 16, 32, 8, 500
        rng = np.random.default_rng(6)
        x = rng.standard_normal((n_steps, n_particles))
        truth = autocorr_direct(x).r
        samples = np.empty((n_draws, n_steps))
        for s in range(n_draws):
            op = draw("gaussian", m, n_particles, s)
            block = SketchedBlock(0, x @ op.matrix.T, "gaussian",
                                  n_particles, s)
            samples[s] = autocorr_from_sketch(block).r
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / np.sqrt(n_draws)
        assert np.all(np.abs(mean - truth) <= 4 * se + 1e-12)

    def test_zero_matrix_sketches_to_zero(self):
        op = draw("gaussian", 1, 5, 0)
        block = SketchedBlock(0, np.zeros((7, 1)), "gaussian", 5, 0)
        assert np.all(autocorr_from_sketch(block).r == 0.0)


class TestBartlettWindow:
    def test_endpoint_weights(self):
        est = AutocorrEstimate(np.arange(1.0, 5.0), np.array([4, 3, 2, 1]))
        windowed = bartlett_window(est)
        assert windowed.r[0] == est.r[0]
        assert windowed.r[-1] == pytest.approx(est.r[-1] / 4)
        assert windowed.windowed

    def test_unit_sequence(self):
        est = AutocorrEstimate(np.ones(4), np.array([4, 3, 2, 1]))
        assert np.allclose(bartlett_window(est).r, [1, 3 / 4, 1 / 2, 1 / 4])

    def test_rejects_missing_lags(self):
        est = AutocorrEstimate(np.array([1.0, np.nan]), np.array([2, 0]))
        with pytest.raises(ValueError):
            bartlett_window(est)


class TestPowerSpectrum:
    def test_white_autocorr_flat_spectrum(self):
        n = 9
        r = np.zeros(n)
        r[0] = 1.0
        psd = psd_from_autocorr(
            AutocorrEstimate(r, n - np.arange(n)), dt=1.0)
        assert np.allclose(psd.density, np.ones(n), atol=1e-12)

    def test_on_bin_cosine_peaks_at_its_bin(self):
        n, k0, dt = 128, 17, 1.0
        f = k0 / ((2 * n - 1) * dt)
        taus = np.arange(n)
        r = np.cos(2 * np.pi * f * taus * dt)
        psd = psd_from_autocorr(AutocorrEstimate(r, n - taus), dt)
        assert int(np.argmax(psd.density)) == k0

    def test_frequency_grid(self):
        n, dt = 16, 0.25
        psd = psd_from_autocorr(
            AutocorrEstimate(np.eye(1, n, 0)[0], n - np.arange(n)), dt)
        assert psd.freqs[0] == 0.0
        assert np.all(np.diff(psd.freqs) > 0)
        assert psd.freqs[1] == pytest.approx(1 / ((2 * n - 1) * dt))
        assert len(psd.freqs) == len(psd.density) == n

    def test_windowed_flag_propagates(self):
        est = AutocorrEstimate(np.ones(4), np.arange(4, 0, -1))
        psd = psd_from_autocorr(bartlett_window(est), 1.0)
        assert psd.windowed

    def test_rejects_invalid_lags(self):
        est = AutocorrEstimate(np.array([1.0, np.nan, 0.0]),
                               np.array([3, 0, 1]))
        with pytest.raises(ValueError):
            psd_from_autocorr(est, 1.0)

    def test_single_lag_edge_case(self):
        psd = psd_from_autocorr(AutocorrEstimate([2.0], [1]), 1.0)
        assert psd.density[0] == pytest.approx(2.0)


class TestPipeline:
    def test_lossless_haar_single_block(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((24, 10))
        src = TimeSeriesSource.from_matrix(x)
        est, psd = run_pipeline(src, 1, 10, "haar", 123)
        exact = autocorr_direct(x)
        assert np.abs(est.r - exact.r).max() <= 1e-8
        exact_psd = psd_from_autocorr(exact, 1.0)
        assert np.abs(psd.density - exact_psd.density).max() <= 1e-8
        assert not est.windowed

    def test_identical_blocks_average_to_single_block(self):
        rng = np.random.default_rng(8)
        one = rng.standard_normal((12, 6))
        stream = np.vstack([one] * 4)
        src = TimeSeriesSource.from_matrix(stream)
        est, _ = run_pipeline(src, 4, 6, "haar", 5)
        reference = bartlett_window(autocorr_direct(one))
        assert est.windowed
        assert np.abs(est.r - reference.r).max() <= 1e-8

    def test_window_override(self):
        rng = np.random.default_rng(9)
        one = rng.standard_normal((8, 4))
        src = TimeSeriesSource.from_matrix(np.vstack([one, one]))
        est, _ = run_pipeline(src, 2, 4, "haar", 5, window=False)
        assert not est.windowed
        est, _ = run_pipeline(TimeSeriesSource.from_matrix(one), 1, 4,
                              "haar", 5, window=True)
        assert est.windowed

    def test_rejects_non_integral_blocking(self):
        src = TimeSeriesSource.from_matrix(np.zeros((10, 3)))
        with pytest.raises(ValueError):
            run_pipeline(src, 3, 2, "gaussian", 0)

    def test_short_stream_raises(self):
        src = TimeSeriesSource(8, 3, 1.0, lambda: iter(np.zeros((5, 3))))
        with pytest.raises(ValueError, match="ended"):
            run_pipeline(src, 1, 2, "gaussian", 0)

    def test_memory_contract(self):
        # large ambient dimension, the raw matrix would be 10^7 cells
        n_steps, n_particles, m = 100, 100_000, 50

        def rows():
            for t in range(n_steps):
                yield np.full(n_particles, float(t % 3))

        src = TimeSeriesSource(n_steps, n_particles, 1.0, rows)
        audit = AllocationAudit()
        run_pipeline(src, 1, m, "gaussian", 3, audit=audit)
        full = n_steps * n_particles
        assert audit.max_cells < full
        assert audit.total_cells < full

    def test_fresh_seed_per_block(self):
        seeds = {block_seed(77, b) for b in range(32)}
        assert len(seeds) == 32
        assert block_seed(77, 3) == block_seed(77, 3)

    def test_blocks_reconstructable_from_header_fields(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((8, 6))
        src = TimeSeriesSource.from_matrix(x)
        blocks = list(sketch_blocks(src, 2, 3, "gaussian", 9))
        for block in blocks:
            op = draw(block.kind, block.m, block.n_particles, block.seed)
            redone = np.stack([op.matrix @ row
                               for row in x[block.block_index * 4:
                                            (block.block_index + 1) * 4]])
            assert np.abs(block.data - redone).max() <= 1e-12

    def test_estimate_from_blocks_validates_shapes(self):
        a = SketchedBlock(0, np.zeros((4, 2)), "gaussian", 8, 1)
        b = SketchedBlock(1, np.zeros((5, 2)), "gaussian", 8, 2)
        with pytest.raises(ValueError):
            estimate_from_blocks([a, b])
        with pytest.raises(ValueError):
            estimate_from_blocks([])
