import math

import numpy as np
import pytest
import scipy.fft

from specsketch import (
    gram_autocorr_bounds,
    psd_errors,
    required_compression_ratio,
    storage_report,
)


class TestPsdErrors:
    def test_perfect_estimate(self):
        truth = np.array([1.0, 2.0, 3.0])
        rep = psd_errors(truth, truth)
        assert (rep.rel_l1, rep.rel_l2, rep.rel_linf) == (0.0, 0.0, 0.0)

    def test_doubled_estimate(self):
        truth = np.array([1.0, 2.0, 3.0])
        rep = psd_errors(2 * truth, truth)
        assert rep.rel_l1 == pytest.approx(1.0)
        assert rep.rel_l2 == pytest.approx(1.0)
        assert rep.rel_linf == pytest.approx(1.0)

    def test_hand_case_with_zero_bin(self):
        truth = np.array([1.0, 0.0, 2.0])
        est = np.array([2.0, 1.0, 2.0])
        rep = psd_errors(est, truth)
        assert rep.rel_l1 == pytest.approx(2 / 3)
        assert rep.rel_l2 == pytest.approx(math.sqrt(2) / math.sqrt(5))
        assert rep.rel_linf == pytest.approx(1.0)  # zero bin excluded

    def test_zero_truth_rejected(self):
        with pytest.raises(ValueError):
            psd_errors(np.ones(3), np.zeros(3))

    def test_linf_ignores_zero_truth_bins(self):
        rng = np.random.default_rng(1)
        truth = rng.uniform(1, 2, size=8)
        est = truth + rng.uniform(-0.1, 0.1, size=8)
        base = psd_errors(est, truth).rel_linf
        padded_truth = np.concatenate([truth, [0.0, 0.0]])
        padded_est = np.concatenate([est, [123.0, -7.0]])
        assert psd_errors(padded_est, padded_truth).rel_linf == base

    def test_csv_row_format(self):
        rep = psd_errors(np.array([1.0]), np.array([2.0]))
        row = rep.csv_row("demo", 0.25)
        assert row.startswith("demo,0.25,")
        assert len(row.split(",")) == 5


class TestGramBound:
    def test_identical_matrices(self):
        sigma = np.eye(4)
        lhs1, rhs1, lhsi, rhsi = gram_autocorr_bounds(sigma, sigma, 2)
        assert lhs1 == rhs1 == lhsi == rhsi == 0.0

    def test_identity_difference_hand_values(self):
        # Delta = I, T = 4: every diagonal sum at positive lag is zero and
        # the lag-0 term is trace/(N*4) = 1/N; ||Delta||_F = 2.
        sigma = np.zeros((4, 4))
        lhs1, rhs1, lhsi, rhsi = gram_autocorr_bounds(np.eye(4), sigma, 1)
        assert lhsi == pytest.approx(1.0)
        assert rhsi == pytest.approx(2.0)
        assert lhs1 == pytest.approx(1.0)
        assert rhs1 == pytest.approx(math.sqrt(1 + math.log(4)) * 2)
        # and scaled by the particle count
        lhs1, rhs1, lhsi, rhsi = gram_autocorr_bounds(np.eye(4), sigma, 4)
        assert lhsi == pytest.approx(1 / 4)
        assert rhsi == pytest.approx(1 / 2)

    def test_holds_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(2, 65))
            a = rng.standard_normal((n, n))
            b = rng.standard_normal((n, n))
            sigma = a + a.T
            sigma_hat = b + b.T
            lhs1, rhs1, lhsi, rhsi = gram_autocorr_bounds(sigma, sigma_hat, 3)
            assert lhs1 <= rhs1 * (1 + 1e-12)
            assert lhsi <= rhsi * (1 + 1e-12)

    def test_rejects_asymmetric(self):
        bad = np.arange(9.0).reshape(3, 3)
        with pytest.raises(ValueError):
            gram_autocorr_bounds(bad, np.eye(3), 1)

    def test_parseval_linkage(self):
        # relative l2 on the full even-extension spectrum equals relative
        # l2 on the extended lag sequence (the DFT is unitary up to scale)
        rng = np.random.default_rng(3)
        r_truth = rng.standard_normal(33)
        r_est = r_truth + 0.1 * rng.standard_normal(33)

        def extend(r):
            return np.concatenate([r, r[-1:0:-1]])

        g_t, g_e = extend(r_truth), extend(r_est)
        s_t = scipy.fft.fft(g_t).real
        s_e = scipy.fft.fft(g_e).real
        lag_err = np.linalg.norm(g_e - g_t) / np.linalg.norm(g_t)
        spec_err = np.linalg.norm(s_e - s_t) / np.linalg.norm(s_t)
        assert abs(lag_err - spec_err) <= 1e-9


class TestStorage:
    def test_sketch_ratio(self):
        rep = storage_report("sketch", 10_000, 384, m=38)
        assert rep.gamma_eff == pytest.approx(38 / 384, abs=1e-4)
        assert rep.gamma_eff > 38 / 384  # header never free
        assert rep.metadata_values <= 8

    def test_time_and_particle(self):
        rep = storage_report("time", 100, 50, sample_size=20)
        assert rep.payload_values == 20 * 50
        assert rep.metadata_values == 20
        rep = storage_report("particle", 100, 50, sample_size=10)
        assert rep.payload_values == 10 * 100
        assert rep.metadata_values == 10

    def test_entries_csc_overhead(self):
        n_steps, n_particles = 10_000, 384
        nnz = int(0.01 * n_steps * n_particles)
        rep = storage_report("entries", n_steps, n_particles, nnz=nnz)
        nominal = nnz / (n_steps * n_particles)
        assert rep.gamma_eff > 2 * nominal
        assert rep.gamma_eff == pytest.approx(0.0201, abs=1e-3)

    def test_full_is_one(self):
        assert storage_report("full", 7, 9).gamma_eff == 1.0

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            storage_report("zip", 10, 10)


class TestCompressionRatioCalculator:
    def test_orders_of_magnitude_only(self):
        gamma = required_compression_ratio("gaussian", 0.5, 0.1, 32, 10_000)
        assert gamma > 0
        # shrinks as the particle count grows, all else fixed
        assert required_compression_ratio("gaussian", 0.5, 0.1, 32, 100_000) \
            < gamma
