"""Classical subsampling estimators of the time autocorrelation.

These are the benchmark competitors to sketching: keep a subset of rows
(time), columns (particles) or entries of the data matrix and form the
per-lag unbiased estimate from the surviving products,

    r[tau] = sum of observed products at lag tau / (pair count at lag tau),

averaged over particles where applicable. The per-lag pair count z[tau] is
obtained with the indicator trick: autocorrelate the 0/1 sampling indicator
(one extra "book-keeping particle") instead of counting pairs by hand.

Also included are the two on-the-fly correlators traditionally used when
data cannot be stored at all: a fixed-window block correlator and a
multiple-tau hierarchical correlator whose coarse levels average blocks of
samples before correlating. The hierarchical long-lag values are knowingly
biased; that bias is the documented behavior, not a defect.

Time indices are 1-based throughout, matching the usual sampling-pattern
conventions (a power-series block starts at 1); estimators convert to
0-based array positions internally.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from .seeding import generator
from .spectral import AutocorrEstimate, _fft_autocorr_sum, autocorr_fft, column_autocorr

_CHUNK_COLS = 512


class SamplingScheme(str, Enum):
    RANDOM = "random"
    POWER_SERIES = "power-series"
    SPARSE_RULER = "sparse-ruler"


@dataclass
class TimeIndexSet:
    """A sorted, deduplicated set of sampled time indices in {1..n_steps}."""

    indices: np.ndarray
    n_steps: int
    scheme: SamplingScheme
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size == 0:
            raise ValueError("empty time index set")
        if idx[0] < 1 or idx[-1] > self.n_steps:
            raise ValueError(f"indices must lie in [1, {self.n_steps}]")
        self.indices = idx

    def __len__(self) -> int:
        return self.indices.size

    def mask(self) -> np.ndarray:
        out = np.zeros(self.n_steps, dtype=bool)
        out[self.indices - 1] = True
        return out

    def save(self, path) -> None:
        """ASCII serialization, one sorted index per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{i}\n" for i in self.indices)

    @classmethod
    def load(cls, path, n_steps: int,
             scheme: SamplingScheme = SamplingScheme.RANDOM) -> "TimeIndexSet":
        with open(path, encoding="utf-8") as fh:
            idx = [int(line) for line in fh if line.strip()]
        return cls(np.asarray(idx), n_steps, scheme)


def wichmann_marks(r: int, s: int) -> np.ndarray:
    """Mark positions of the Wichmann ruler W(r, s), starting at 0.

    Cumulative sums of the segment pattern
    [1 x r, (r+1) x 1, (2r+1) x r, (4r+3) x s, (2r+2) x (r+1), 1 x r];
    the pairwise differences of the marks cover every lag up to the span.
    """
    if r < 0 or s < 0:
        raise ValueError("ruler parameters must be nonnegative")
    segments = ([1] * r + [r + 1] + [2 * r + 1] * r + [4 * r + 3] * s
                + [2 * r + 2] * (r + 1) + [1] * r)
    return np.concatenate([[0], np.cumsum(segments)])


def _wichmann_span(r: int, s: int) -> int:
    return 4 * r * r + 8 * r + 3 + s * (4 * r + 3)


def smallest_wichmann(span: int) -> tuple[int, int]:
    """(r, s) of the shortest Wichmann ruler whose span is >= span.

    Ties broken by fewer marks, then smaller r.
    """
    best = None
    for r in range(25):
        base = _wichmann_span(r, 0)
        s = max(0, -(-(span - base) // (4 * r + 3)))
        cand = (_wichmann_span(r, s), 4 * r + s + 3, r, s)
        if best is None or cand < best:
            best = cand
    return best[2], best[3]


def sample_time(scheme: SamplingScheme | str, n_steps: int, gamma_or_k,
                seed: int = 0) -> TimeIndexSet:
    """Draw a time sampling pattern.

    random
        ceil(gamma * n_steps) uniform draws with replacement, deduplicated;
        ``gamma_or_k`` is the ratio gamma in (0, 1].
    power-series
        dense-then-doubling marks: the base block {1, 2, 4, ..., 2^k}
        repeated at offsets 2^k, 2^(k+1), 2^(k+2), ... until past n_steps;
        ``gamma_or_k`` is the block exponent k >= 1.
    sparse-ruler
        the shortest Wichmann ruler spanning at least 2^k, tiled
        end-to-end over {1..n_steps}, so every lag up to the ruler span is
        realized inside each tile.
    """
    scheme = SamplingScheme(scheme)
    if n_steps < 2:
        raise ValueError("need at least 2 time steps")

    if scheme is SamplingScheme.RANDOM:
        gamma = float(gamma_or_k)
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        size = int(np.ceil(gamma * n_steps))
        draws = generator(seed).integers(1, n_steps + 1, size=size)
        return TimeIndexSet(draws, n_steps, scheme, {"gamma": gamma, "seed": seed})

    k = int(gamma_or_k)
    if k < 1:
        raise ValueError(f"block exponent k must be >= 1, got {k}")

    if scheme is SamplingScheme.POWER_SERIES:
        base = 2 ** np.arange(k + 1, dtype=np.int64)  # 1, 2, 4, ..., 2^k
        parts = [base]
        offset = 2 ** k
        while offset < n_steps:
            parts.append(offset + base)
            offset *= 2
        idx = np.concatenate(parts)
        return TimeIndexSet(idx[idx <= n_steps], n_steps, scheme, {"k": k})

    r, s = smallest_wichmann(2 ** k)
    marks = wichmann_marks(r, s)
    span = int(marks[-1])
    offsets = np.arange(0, n_steps, span, dtype=np.int64)
    idx = (offsets[:, None] + marks[None, :] + 1).ravel()
    return TimeIndexSet(idx[idx <= n_steps], n_steps, scheme,
                        {"k": k, "ruler": (r, s)})


def lag_counts(index_set: TimeIndexSet) -> np.ndarray:
    """Per-lag pair counts z[tau] = #{t : t and t + tau both sampled}.

    Computed exactly as the fast autocorrelation of the 0/1 indicator,
    rounded back to integer.
    """
    xi = index_set.mask().astype(np.float64)
    return np.rint(column_autocorr(xi)).astype(np.int64)


def autocorr_time_subsampled(rows: np.ndarray, index_set: TimeIndexSet,
                             ) -> AutocorrEstimate:
    """Autocorrelation from rows sampled at the given time indices.

    ``rows`` holds the surviving rows in index order, shape (len(I), N).
    Non-sampled rows are treated as zero so they drop out of the products,
    and each lag is divided by its actual pair count; lags with no pairs
    are left nan and flagged invalid.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] != len(index_set):
        raise ValueError(f"got {rows.shape[0]} rows for {len(index_set)} "
                         "sampled indices")
    n_steps = index_set.n_steps
    n_particles = rows.shape[1]
    pos = index_set.indices - 1

    sums = np.zeros(n_steps)
    filled = np.zeros((n_steps, min(_CHUNK_COLS, n_particles)))
    for lo in range(0, n_particles, _CHUNK_COLS):
        width = min(_CHUNK_COLS, n_particles - lo)
        filled[:, :width] = 0.0
        filled[pos, :width] = rows[:, lo:lo + width]
        sums += _fft_autocorr_sum(filled[:, :width])

    z = lag_counts(index_set)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(z > 0, sums / (n_particles * np.maximum(z, 1)), np.nan)
    return AutocorrEstimate(r, z)


def autocorr_particle_subsampled(columns: np.ndarray) -> AutocorrEstimate:
    """Autocorrelation from a column (particle) subset.

    The estimate is the full per-lag unbiased formula restricted to the
    sampled columns, i.e. particle averaging over the subset only; every
    lag is observed.
    """
    columns = np.atleast_2d(np.asarray(columns, dtype=np.float64))
    if columns.shape[1] < 1:
        raise ValueError("need at least one sampled column")
    return autocorr_fft(columns)


@dataclass
class EntrySampleSet:
    """Uniformly sampled matrix entries in compressed sparse column layout.

    ``t_indices`` holds 1-based time indices, column by column, delimited
    by ``col_ptr`` (length n_particles + 1); ``values`` aligns with
    ``t_indices``.
    """

    n_steps: int
    n_particles: int
    t_indices: np.ndarray
    col_ptr: np.ndarray
    values: np.ndarray

    @property
    def n_sampled(self) -> int:
        return self.t_indices.size

    def column(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.col_ptr[i], self.col_ptr[i + 1]
        return self.t_indices[lo:hi], self.values[lo:hi]


def sample_entries(x: np.ndarray, gamma: float, seed: int = 0) -> EntrySampleSet:
    """Sample ceil(gamma * T * N) entries uniformly with replacement.

    Duplicates collapse, so the realized count is slightly below the
    nominal target, exactly as a stored sparse matrix would be.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n_steps, n_particles = x.shape
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    total = n_steps * n_particles
    draws = generator(seed).integers(0, total, size=int(np.ceil(gamma * total)))
    flat = np.unique(draws)
    cols = flat // n_steps
    times = flat % n_steps  # 0-based; stored 1-based below
    order = np.lexsort((times, cols))
    cols, times = cols[order], times[order]
    col_ptr = np.zeros(n_particles + 1, dtype=np.int64)
    np.add.at(col_ptr, cols + 1, 1)
    col_ptr = np.cumsum(col_ptr)
    return EntrySampleSet(n_steps, n_particles, (times + 1).astype(np.int64),
                          col_ptr.astype(np.int64), x[times, cols])


def autocorr_entrywise(entries: EntrySampleSet) -> AutocorrEstimate:
    """Autocorrelation from uniformly sampled entries.

    Products and pair counts are pooled over all columns before dividing,
    which keeps the estimate well defined when individual columns have no
    pair at some lag. Lags with no pair anywhere stay invalid.
    """
    if entries.n_sampled == 0:
        raise ValueError("empty entry sample")
    n_steps, n_particles = entries.n_steps, entries.n_particles
    sums = np.zeros(n_steps)
    pair_counts = np.zeros(n_steps)

    vals = np.zeros((n_steps, min(_CHUNK_COLS, n_particles)))
    mask = np.zeros_like(vals)
    for lo in range(0, n_particles, _CHUNK_COLS):
        width = min(_CHUNK_COLS, n_particles - lo)
        a, b = entries.col_ptr[lo], entries.col_ptr[lo + width]
        rows01 = entries.t_indices[a:b] - 1
        cols01 = np.repeat(np.arange(width),
                           np.diff(entries.col_ptr[lo:lo + width + 1]))
        vals[:, :width] = 0.0
        mask[:, :width] = 0.0
        vals[rows01, cols01] = entries.values[a:b]
        mask[rows01, cols01] = 1.0
        sums += _fft_autocorr_sum(vals[:, :width])
        pair_counts += _fft_autocorr_sum(mask[:, :width])

    z = np.rint(pair_counts).astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(z > 0, sums / np.maximum(z, 1), np.nan)
    return AutocorrEstimate(r, z)


def interpolate_missing_lags(est: AutocorrEstimate) -> AutocorrEstimate:
    """Fill unobserved lags with a natural cubic spline through the valid ones.

    Valid lags pass through bit for bit. Beyond the last valid lag the fill
    is constant at the last valid value (splines extrapolate wildly; a
    constant is conservative). Requires at least 4 valid lags including
    lag 0; a fully valid estimate is returned unchanged.
    """
    valid = est.valid
    if valid.sum() < 4:
        raise ValueError("need at least 4 valid lags to interpolate")
    if not valid[0]:
        raise ValueError("lag 0 must be valid")
    if valid.all():
        return est

    taus = np.arange(est.n_lags)
    known_t = taus[valid]
    known_r = est.r[valid]
    r = est.r.copy()
    last = known_t[-1]
    interior = ~valid & (taus < last)
    if interior.any():
        spline = CubicSpline(known_t, known_r, bc_type="natural")
        r[interior] = spline(taus[interior])
    r[taus > last] = known_r[-1]
    return AutocorrEstimate(r, est.counts.copy(),
                            valid=np.ones(est.n_lags, dtype=bool),
                            windowed=est.windowed,
                            normalization=est.normalization)


def block_correlator(rows: Iterable[np.ndarray], window: int) -> AutocorrEstimate:
    """On-the-fly correlator over a rolling window of the last ``window`` rows.

    Accumulates lag products as rows arrive, so only the window buffer is
    ever held. Lags at and beyond the window size are never observed and
    come back invalid.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    buf = None
    accum = np.zeros(window)
    pairs = np.zeros(window, dtype=np.int64)
    t = 0
    n_particles = 0
    for row in rows:
        row = np.asarray(row, dtype=np.float64)
        if buf is None:
            n_particles = row.size
            buf = np.zeros((window, n_particles))
        buf[t % window] = row
        reach = min(t, window - 1)
        taus = np.arange(reach + 1)
        accum[:reach + 1] += buf[(t - taus) % window] @ row
        pairs[:reach + 1] += 1
        t += 1
    if t == 0:
        raise ValueError("empty stream")

    r = np.full(t, np.nan)
    counts = np.zeros(t, dtype=np.int64)
    upto = min(window, t)
    counts[:upto] = pairs[:upto]
    r[:upto] = accum[:upto] / (n_particles * pairs[:upto])
    return AutocorrEstimate(r, counts)


class _CorrelatorLevel:
    """One coarse-graining level of the hierarchical correlator."""

    def __init__(self, window: int, n_particles: int):
        self.buf = np.zeros((window, n_particles))
        self.accum = np.zeros(window)
        self.pairs = np.zeros(window, dtype=np.int64)
        self.count = 0
        self.window = window

    def push(self, sample: np.ndarray) -> None:
        t = self.count
        self.buf[t % self.window] = sample
        reach = min(t, self.window - 1)
        taus = np.arange(reach + 1)
        self.accum[:reach + 1] += self.buf[(t - taus) % self.window] @ sample
        self.pairs[:reach + 1] += 1
        self.count += 1


def hierarchical_correlator(rows: Iterable[np.ndarray], window: int,
                            coarse_factor: int = 2, n_levels: int = 1,
                            ) -> AutocorrEstimate:
    """Multiple-tau correlator: geometrically coarsened rolling windows.

    Level j correlates averages of coarse_factor**j consecutive raw rows,
    covering lags coarse_factor**j * {1..window-1}; each covered lag takes
    its value from the finest level that reaches it. Averaging before
    correlating makes the coarse-level values biased for the raw
    autocorrelation (exact only for integrated quantities); lags no level
    reaches stay invalid.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    if coarse_factor < 2:
        raise ValueError("coarse_factor must be >= 2")
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")

    levels: list[_CorrelatorLevel] = []
    agg_sum: list[np.ndarray] = []
    agg_n: list[int] = []
    t = 0
    n_particles = 0
    for row in rows:
        sample = np.asarray(row, dtype=np.float64)
        if not levels:
            n_particles = sample.size
            for _ in range(n_levels):
                levels.append(_CorrelatorLevel(window, n_particles))
                agg_sum.append(np.zeros(n_particles))
                agg_n.append(0)
        for j in range(n_levels):
            levels[j].push(sample)
            if j == n_levels - 1:
                break
            agg_sum[j] += sample
            agg_n[j] += 1
            if agg_n[j] < coarse_factor:
                break
            sample = agg_sum[j] / coarse_factor
            agg_sum[j] = np.zeros(n_particles)
            agg_n[j] = 0
        t += 1
    if t == 0:
        raise ValueError("empty stream")

    r = np.full(t, np.nan)
    counts = np.zeros(t, dtype=np.int64)
    for j in reversed(range(n_levels)):
        stride = coarse_factor ** j
        lvl = levels[j]
        for delta in range(window):
            tau = delta * stride
            if tau >= t or lvl.pairs[delta] == 0:
                continue
            r[tau] = lvl.accum[delta] / (n_particles * lvl.pairs[delta])
            counts[tau] = lvl.pairs[delta]
    return AutocorrEstimate(r, counts)
