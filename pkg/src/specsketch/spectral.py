"""Autocorrelation and power spectral density estimation, exact and sketched.

The sample autocorrelation at lag tau of a (T, N) data matrix X is

    r[tau] = 1/(N (T - tau)) * sum_t sum_i X(t, i) X(t + tau, i)

i.e. the per-lag unbiased average of the tau-th diagonal of X X^T, averaged
over particles. Because that quantity is linear in the Gram matrix X X^T,
it can be computed from a sketched matrix Xhat = X Omega^T column by column
with ordinary fast autocorrelation, without ever forming X X^T or storing X.

The power spectral density is the discrete Fourier transform of the
autocorrelation (Wiener-Khinchin); we transform the even extension of
length 2T - 1 so the spectrum is exactly real.

Per-lag 1/(T - tau) normalization is kept exactly, which may produce an
indefinite autocorrelation sequence; PSD values are therefore allowed to
dip negative and are not clamped.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .seeding import derive_seed
from .sketch import SketchKind, apply, draw

#: Column-chunk size for batched FFTs, and the row-chunk cell budget used by
#: the streaming pipeline (about 8 MB of float64 per transient buffer).
_CHUNK_COLS = 512
_CHUNK_CELLS = 1 << 20


@dataclass
class TimeSeriesSource:
    """A row-streamed (n_steps, n_particles) data matrix with time step dt.

    ``rows()`` returns a fresh iterator over the n_steps rows, so a source
    can be consumed more than once (generators recompute, file readers
    reopen). Nothing ever materializes the full matrix unless ``to_matrix``
    is called explicitly.
    """

    n_steps: int
    n_particles: int
    dt: float
    _factory: Callable[[], Iterator[np.ndarray]]

    def rows(self) -> Iterator[np.ndarray]:
        return self._factory()

    def to_matrix(self) -> np.ndarray:
        """Materialize the full matrix (small data and tests only)."""
        out = np.empty((self.n_steps, self.n_particles))
        for t, row in enumerate(self.rows()):
            out[t] = row
        return out

    @classmethod
    def from_matrix(cls, x: np.ndarray, dt: float = 1.0) -> "TimeSeriesSource":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return cls(x.shape[0], x.shape[1], dt, lambda: iter(x))


@dataclass
class SketchedBlock:
    """The compressed (T, m) matrix Xhat = X Omega^T for one stream block.

    The operator itself is not stored; (kind, m, ambient dim, seed,
    transform) reconstruct it deterministically.
    """

    block_index: int
    data: np.ndarray
    kind: SketchKind
    n_particles: int
    seed: int
    transform: str | None = None
    dt: float = 1.0

    @property
    def n_steps(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


@dataclass
class AutocorrEstimate:
    """Lag-indexed autocorrelation with per-lag contributing-pair counts.

    ``valid`` marks lags with at least one observed pair; estimators leave
    r = nan at unobserved lags. Interpolation (see baselines) fills those
    and flips their valid flag without touching counts.
    """

    r: np.ndarray
    counts: np.ndarray
    valid: np.ndarray = None  # type: ignore[assignment]
    windowed: bool = False
    normalization: str = "per-lag-unbiased"

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.r.shape != self.counts.shape:
            raise ValueError("lag values and counts must have equal length")
        if self.valid is None:
            self.valid = self.counts > 0
        else:
            self.valid = np.asarray(self.valid, dtype=bool)

    @property
    def n_lags(self) -> int:
        return self.r.shape[0]


@dataclass
class PowerSpectrum:
    """One-sided spectral density on the grid freqs[k] = k / ((2T-1) dt)."""

    freqs: np.ndarray
    density: np.ndarray
    windowed: bool = False
    blocks: int = 1


@dataclass
class AllocationAudit:
    """Records the major array allocations of a pipeline run.

    Used to assert the streaming contract: no allocation on the order of
    the full (n_steps x n_particles) matrix ever happens.
    """

    entries: list = field(default_factory=list)

    def record(self, label: str, cells: int) -> None:
        self.entries.append((label, int(cells)))

    @property
    def max_cells(self) -> int:
        return max((c for _, c in self.entries), default=0)

    @property
    def total_cells(self) -> int:
        return sum(c for _, c in self.entries)


def autocorr_direct(x: np.ndarray) -> AutocorrEstimate:
    """Reference per-lag unbiased autocorrelation, O(T^2 N), no FFT.

    This is the slow oracle the fast paths are validated against.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n_steps, n_particles = x.shape
    r = np.empty(n_steps)
    for tau in range(n_steps):
        r[tau] = np.sum(x[:n_steps - tau] * x[tau:]) / (n_particles * (n_steps - tau))
    counts = n_steps - np.arange(n_steps, dtype=np.int64)
    return AutocorrEstimate(r, counts)


def column_autocorr(v: np.ndarray) -> np.ndarray:
    """Unnormalized lag sums u[tau] = sum_t v[t] v[t + tau] via FFT.

    Zero-padded circular correlation, O(T log T).
    """
    v = np.asarray(v, dtype=np.float64)
    return _fft_autocorr_sum(v[:, None])


def _fft_autocorr_sum(mat: np.ndarray) -> np.ndarray:
    """Sum of unnormalized column autocorrelations of a (T, k) matrix.

    Columns are processed in chunks so the transient FFT buffers stay small
    regardless of k.
    """
    n_steps, n_cols = mat.shape
    nfft = scipy.fft.next_fast_len(2 * n_steps - 1, real=True)
    total = np.zeros(n_steps)
    for lo in range(0, n_cols, _CHUNK_COLS):
        spec = scipy.fft.rfft(mat[:, lo:lo + _CHUNK_COLS], n=nfft, axis=0)
        power = spec.real ** 2 + spec.imag ** 2
        corr = scipy.fft.irfft(power, n=nfft, axis=0)
        total += corr[:n_steps].sum(axis=1)
    return total


def autocorr_fft(x: np.ndarray) -> AutocorrEstimate:
    """Exact autocorrelation of a full (T, N) matrix via the FFT path.

    Matches ``autocorr_direct`` to floating-point accuracy at O(N T log T).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n_steps, n_particles = x.shape
    sums = _fft_autocorr_sum(x)
    counts = n_steps - np.arange(n_steps, dtype=np.int64)
    return AutocorrEstimate(sums / (n_particles * counts), counts)


def autocorr_from_sketch(block: SketchedBlock) -> AutocorrEstimate:
    """Autocorrelation recovered from a sketched block.

    Sums fast autocorrelations of the m compressed columns and normalizes
    by the *ambient* particle count, exploiting linearity in the Gram
    matrix; the T x T Gram matrix itself is never constructed. Exact when
    the operator is orthogonal with unit scale (square Haar), unbiased in
    expectation otherwise.
    """
    n_steps = block.n_steps
    sums = _fft_autocorr_sum(block.data)
    counts = n_steps - np.arange(n_steps, dtype=np.int64)
    r = sums / (block.n_particles * counts)
    return AutocorrEstimate(r, counts)


def bartlett_window(est: AutocorrEstimate) -> AutocorrEstimate:
    """Apply the triangular lag taper r[tau] * (T - tau) / T.

    Reduces spectral leakage of block-averaged estimates. Requires a fully
    valid estimate (interpolate missing lags first).
    """
    if not est.valid.all():
        raise ValueError("cannot window an estimate with missing lags; "
                         "interpolate first")
    n = est.n_lags
    weights = (n - np.arange(n)) / n
    return AutocorrEstimate(est.r * weights, est.counts.copy(),
                            valid=est.valid.copy(), windowed=True,
                            normalization=est.normalization)


def psd_from_autocorr(est: AutocorrEstimate, dt: float = 1.0) -> PowerSpectrum:
    """Power spectral density: DFT of the even extension of the lag sequence.

    The extension g of length 2T - 1 has g[tau] = g[-tau] = r[tau], so its
    DFT is real; the first T bins are returned on the frequency grid
    k / ((2T - 1) dt). A nonzero imaginary residue beyond rounding is an
    internal error.
    """
    if not est.valid.all():
        raise ValueError("PSD needs a value at every lag; interpolate the "
                         "missing ones first")
    n = est.n_lags
    g = np.concatenate([est.r, est.r[-1:0:-1]])
    spectrum = scipy.fft.fft(g)
    density = spectrum.real[:n].copy()
    residue = np.abs(spectrum.imag).max() if n > 1 else 0.0
    if residue > 1e-9 * max(np.abs(density).max(), 1e-300):
        raise ArithmeticError(f"non-real spectrum (imag residue {residue:g})")
    freqs = np.arange(n) / ((2 * n - 1) * dt)
    return PowerSpectrum(freqs, density, windowed=est.windowed)


def block_seed(master_seed: int, block_index: int) -> int:
    """Seed for the fresh sketch of block b: splitmix64 chain on (seed, b)."""
    return derive_seed(master_seed, block_index)


def _iter_row_chunks(rows: Iterator[np.ndarray], n_steps: int,
                     n_particles: int) -> Iterable[np.ndarray]:
    chunk = max(1, min(64, _CHUNK_CELLS // max(1, n_particles)))
    buf = np.empty((chunk, n_particles))
    filled = 0
    taken = 0
    while taken < n_steps:
        try:
            row = np.asarray(next(rows), dtype=np.float64)
        except StopIteration:
            raise ValueError(f"stream ended after {taken} rows, "
                             f"expected {n_steps}") from None
        if row.shape != (n_particles,):
            raise ValueError(f"stream row has shape {row.shape}, "
                             f"expected ({n_particles},)")
        buf[filled] = row
        filled += 1
        taken += 1
        if filled == chunk:
            yield buf[:filled]
            filled = 0
    if filled:
        yield buf[:filled]


def sketch_blocks(src: TimeSeriesSource, n_blocks: int, m: int,
                  kind: SketchKind | str, master_seed: int,
                  transform: str = "wht",
                  audit: AllocationAudit | None = None,
                  ) -> Iterator[SketchedBlock]:
    """Stream the source through fresh per-block sketch operators.

    Splits the n_steps-long stream into ``n_blocks`` equal blocks; block b
    gets its own operator seeded from ``block_seed(master_seed, b)``. Rows
    are consumed as they arrive and only the current (T, m) compressed
    block is held, never the raw matrix.
    """
    kind = SketchKind(kind)
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if src.n_steps % n_blocks:
        raise ValueError(f"stream length {src.n_steps} is not divisible "
                         f"into {n_blocks} blocks")
    n_steps = src.n_steps // n_blocks
    if m < 1:
        raise ValueError("m must be >= 1")

    rows = src.rows()
    for b in range(n_blocks):
        seed_b = block_seed(master_seed, b)
        op = draw(kind, m, src.n_particles, seed_b, transform=transform)
        if audit is not None:
            payload = op.matrix.size if op.matrix is not None \
                else op.signs.size + op.picks.size
            audit.record(f"operator[{b}]", payload)
            audit.record(f"sketch[{b}]", n_steps * m)
        compressed = np.empty((n_steps, m))
        filled = 0
        for chunk in _iter_row_chunks(rows, n_steps, src.n_particles):
            if audit is not None and b == 0 and filled == 0:
                audit.record("row-chunk", chunk.size)
            compressed[filled:filled + chunk.shape[0]] = apply(op, chunk)
            filled += chunk.shape[0]
        yield SketchedBlock(
            b, compressed, kind, src.n_particles, seed_b,
            transform=transform if kind is SketchKind.FJLT else None,
            dt=src.dt)


def estimate_from_blocks(blocks: Iterable[SketchedBlock],
                         window: bool | None = None,
                         ) -> tuple[AutocorrEstimate, PowerSpectrum]:
    """Average per-block sketched autocorrelations and take the PSD.

    Blocks must agree in shape, ambient dimension and dt. The Bartlett
    window is applied iff more than one block was averaged; pass
    ``window`` to override.
    """
    r_sum = None
    first = None
    n_blocks = 0
    for block in blocks:
        if first is None:
            first = block
            r_sum = np.zeros(block.n_steps)
        elif (block.n_steps, block.m, block.n_particles, block.dt) != \
                (first.n_steps, first.m, first.n_particles, first.dt):
            raise ValueError(f"block {block.block_index} dimensions differ "
                             "from the first block")
        r_sum += autocorr_from_sketch(block).r
        n_blocks += 1
    if not n_blocks:
        raise ValueError("no blocks to estimate from")

    n_steps = first.n_steps
    counts = n_steps - np.arange(n_steps, dtype=np.int64)
    est = AutocorrEstimate(r_sum / n_blocks, counts)
    if window is None:
        window = n_blocks > 1
    if window:
        est = bartlett_window(est)
    psd = psd_from_autocorr(est, first.dt)
    psd.blocks = n_blocks
    return est, psd


def run_pipeline(src: TimeSeriesSource, n_blocks: int, m: int,
                 kind: SketchKind | str, master_seed: int,
                 transform: str = "wht", window: bool | None = None,
                 audit: AllocationAudit | None = None,
                 ) -> tuple[AutocorrEstimate, PowerSpectrum]:
    """Streaming sketch-compress-estimate pipeline.

    Splits the stream into ``n_blocks`` equal blocks with a fresh operator
    per block, averages the per-block autocorrelations, windows iff more
    than one block was averaged (override with ``window``), and returns
    the autocorrelation and its PSD.

    Peak memory is O(T m) plus operator state; the full matrix is never
    held. Pass an ``AllocationAudit`` to record the actual buffer sizes.
    """
    blocks = sketch_blocks(src, n_blocks, m, kind, master_seed,
                           transform=transform, audit=audit)
    return estimate_from_blocks(blocks, window=window)
