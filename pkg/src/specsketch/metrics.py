"""Error metrics, the Gram-difference error bound, and storage accounting.

The error bound implemented here relates the autocorrelation vectors of two
symmetric T x T Gram matrices to the Frobenius norm of their difference:

    || R[Sigma_hat] - R[Sigma] ||_1   <= sqrt(1 + ln T) / N * ||Delta||_F
    || R[Sigma_hat] - R[Sigma] ||_inf <=            1     / N * ||Delta||_F

with R_tau[M] = 1/(N (T - tau)) * sum_t M[t, t + tau]. Natural log
throughout. These are theorems; any violation on any input is a bug in the
implementation, and the test suite exercises them on random instances.

Storage is accounted in value slots (one stored number = one slot) so
results do not depend on float width; the honest compression ratio of a
method includes its meta-data (sample indices, sparse-matrix pointers).
The sketch stores none: its operator rebuilds from a constant-size header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class ErrorReport:
    """Relative l1 / l2 / l-infinity discrepancies between two spectra."""

    rel_l1: float
    rel_l2: float
    rel_linf: float
    n_compared: int

    def csv_row(self, label: str, gamma_eff: float = float("nan")) -> str:
        return (f"{label},{gamma_eff:.6g},{self.rel_l1:.9g},"
                f"{self.rel_l2:.9g},{self.rel_linf:.9g}")


def psd_errors(est: np.ndarray, truth: np.ndarray) -> ErrorReport:
    """Relative error metrics of an estimated spectrum against a reference.

    rel_l1 and rel_l2 are ratios of vector norms of the difference to the
    reference; rel_linf is the worst per-bin relative deviation, taken only
    over bins where the reference is nonzero.
    """
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    if not np.any(truth):
        raise ValueError("reference spectrum is identically zero")
    diff = est - truth
    nonzero = truth != 0
    rel_linf = float(np.max(np.abs(diff[nonzero]) / np.abs(truth[nonzero])))
    return ErrorReport(
        rel_l1=float(np.abs(diff).sum() / np.abs(truth).sum()),
        rel_l2=float(np.linalg.norm(diff) / np.linalg.norm(truth)),
        rel_linf=rel_linf,
        n_compared=est.size,
    )


def _autocorr_of_gram(mat: np.ndarray, n_particles: int) -> np.ndarray:
    """R_tau[M] = 1/(N (T - tau)) * sum of the tau-th diagonal."""
    n = mat.shape[0]
    return np.array([np.trace(mat, offset=tau) / (n_particles * (n - tau))
                     for tau in range(n)])


def gram_autocorr_bounds(sigma: np.ndarray, sigma_hat: np.ndarray, n_particles: int,
                  ) -> tuple[float, float, float, float]:
    """Both sides of the Gram-difference autocorrelation bounds.

    Returns (lhs_l1, rhs_l1, lhs_linf, rhs_linf) for symmetric T x T
    matrices; lhs <= rhs must hold for each pair.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64)
    for name, mat in (("sigma", sigma), ("sigma_hat", sigma_hat)):
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"{name} must be square")
        if np.abs(mat - mat.T).max() > 1e-10:
            raise ValueError(f"{name} is not symmetric to 1e-10")
    if sigma.shape != sigma_hat.shape:
        raise ValueError("matrices must have equal shape")

    n = sigma.shape[0]
    diff = _autocorr_of_gram(sigma_hat, n_particles) \
        - _autocorr_of_gram(sigma, n_particles)
    fro = float(np.linalg.norm(sigma - sigma_hat))
    lhs_l1 = float(np.abs(diff).sum())
    lhs_linf = float(np.abs(diff).max())
    rhs_l1 = math.sqrt(1.0 + math.log(n)) / n_particles * fro
    rhs_linf = fro / n_particles
    return lhs_l1, rhs_l1, lhs_linf, rhs_linf


#: Value slots a sketched block header occupies (kind, m, N, seed, transform).
SKETCH_HEADER_SLOTS = 5


@dataclass
class StorageReport:
    """Honest storage cost of a compression method, in value slots."""

    method: str
    payload_values: int
    metadata_values: int
    n_steps: int
    n_particles: int

    @property
    def gamma_eff(self) -> float:
        return (self.payload_values + self.metadata_values) \
            / (self.n_steps * self.n_particles)


def storage_report(method: str, n_steps: int, n_particles: int, *,
                   m: int = 0, sample_size: int = 0, nnz: int = 0,
                   ) -> StorageReport:
    """Account payload plus meta-data for one stored block.

    sketch
        payload T*m, constant meta-data (the header rebuilds the operator),
        so gamma_eff is m/N plus a vanishing term.
    time / particle
        payload |I|*N or T*|I|, plus the |I| sampled indices.
    entries
        nnz values stored sparse (CSC): nnz row indices plus N+1 column
        pointers of meta-data, so gamma_eff strictly exceeds nnz/(T*N).
    full
        everything, ratio exactly 1.
    """
    if n_steps < 1 or n_particles < 1:
        raise ValueError("dimensions must be positive")
    if method == "sketch":
        return StorageReport(method, n_steps * m, SKETCH_HEADER_SLOTS,
                             n_steps, n_particles)
    if method == "time":
        return StorageReport(method, sample_size * n_particles, sample_size,
                             n_steps, n_particles)
    if method == "particle":
        return StorageReport(method, n_steps * sample_size, sample_size,
                             n_steps, n_particles)
    if method == "entries":
        return StorageReport(method, nnz, nnz + n_particles + 1,
                             n_steps, n_particles)
    if method == "full":
        return StorageReport(method, n_steps * n_particles, 0,
                             n_steps, n_particles)
    raise ValueError(f"unknown storage method {method!r}")


def required_compression_ratio(kind, eps: float, delta: float, n_steps: int,
                               n_particles: int) -> float:
    """Documentation-level compression ratio for a target l1 accuracy.

    Propagates the l1 bound through the JLT dimension formula for data with
    entries bounded by 1 (||X||_F^2 <= T N): distortion eps_jlt =
    eps / (T sqrt(1 + ln T)) on 2T vectors gives m, and gamma = m / N.
    Asymptotics only; nothing in the test suite asserts its constants.
    """
    from .sketch import required_dim
    eps_jlt = eps / (n_steps * math.sqrt(1.0 + math.log(n_steps)))
    if eps_jlt >= 1.0:
        eps_jlt = 0.999999
    m = required_dim(kind, eps_jlt, delta, 2 * n_steps,
                     ambient_dim=n_particles)
    return m / n_particles
