import numpy as np
import pytest

import specsketch as sk
from specsketch.spectral import autocorr_fft, bartlett_window, psd_from_autocorr


@pytest.fixture(scope="session")
def adversarial_bench():
    """Full-scale adversarial benchmark data shared by the heavy criteria.

    Returns (cfg, X, truth_density) where the reference density is the
    Bartlett-windowed full-data estimate (the benchmark comparison applies
    the same window to every method).
    """
    cfg = sk.AdversarialConfig(seed=0)
    x = sk.gen_adversarial(cfg).to_matrix()
    truth = psd_from_autocorr(bartlett_window(autocorr_fft(x)), cfg.dt).density
    return cfg, x, truth


def brute_force_autocorr(x: np.ndarray) -> np.ndarray:
    """Reference double-loop implementation, independent of the package."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_steps, n_particles = x.shape
    out = np.zeros(n_steps)
    for tau in range(n_steps):
        acc = 0.0
        for t in range(n_steps - tau):
            for i in range(n_particles):
                acc += x[t, i] * x[t + tau, i]
        out[tau] = acc / (n_particles * (n_steps - tau))
    return out
