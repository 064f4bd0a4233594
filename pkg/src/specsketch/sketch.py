"""Random sketch operators for streaming dimension reduction.

A sketch is an ``m x N`` random linear map drawn so that norms and inner
products of fixed vectors survive compression with high probability
(a Johnson-Lindenstrauss transform). Three families are provided:

``gaussian``
    Independent entries from N(0, 1/m).
``haar``
    Rows of a Gaussian draw orthonormalized (QR with sign fixing) and
    scaled by sqrt(N/m); for m = N this is exactly orthogonal and lossless.
``fjlt``
    The fast transform sqrt(n_pad/m) * P^T H D: random signs D, a fast
    orthonormal transform H (Walsh-Hadamard or DCT-II), and m coordinates
    sampled uniformly with replacement. Applying it costs
    O(n_pad log n_pad) instead of O(m N).

Padding note: the Walsh-Hadamard transform requires a power-of-two length,
so inputs are zero padded from N to the next power of two n_pad. Zero
padding is an isometry, and H^T H = I holds on the padded space, so the
unbiasedness scale is sqrt(n_pad/m) (which reduces to sqrt(N/m) whenever
no padding occurs, e.g. always for the DCT).

Operators are immutable; ``apply`` is pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft

from .seeding import generator


class SketchKind(str, Enum):
    GAUSSIAN = "gaussian"
    HAAR = "haar"
    FJLT = "fjlt"


#: Walsh-Hadamard (power-of-two padding) or orthonormal DCT-II (no padding).
FJLT_TRANSFORMS = ("wht", "dct")

# Explicit constant for the JLT dimension bound m = ceil(C / eps^2 * ln(d/delta)).
# The literature states only the asymptotic; C is calibrated so the standard
# worked example (eps = 1/3, delta = 0.1, d = 1000) gives m = 535.
JLT_BASE_CONSTANT = 6.45

# The FJLT guarantee degrades the failure probability by N^(-ln(N)^3); the
# corrected delta is clamped to [delta * FJLT_DELTA_FLOOR, delta] to keep the
# bound finite for small N, where the correction exceeds delta itself.
FJLT_DELTA_FLOOR = 1e-6


@dataclass(frozen=True)
class SketchOperator:
    """An immutable m x N random linear map plus the seed that rebuilds it.

    For dense kinds the payload is ``matrix``; for the FJLT it is the sign
    vector, the sampled coordinate list and the transform tag. Identical
    (kind, m, n, seed, transform) always reconstruct a bit-identical payload,
    so persisted files only ever store those five values.
    """

    kind: SketchKind
    m: int
    n: int
    seed: int
    transform: str | None = None
    matrix: np.ndarray | None = None
    signs: np.ndarray | None = None
    picks: np.ndarray | None = None
    n_pad: int = 0

    @property
    def scale(self) -> float:
        """FJLT output scale sqrt(n_pad / m)."""
        return math.sqrt(self.n_pad / self.m)


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def draw(kind: SketchKind | str, m: int, n: int, seed: int,
         transform: str = "wht") -> SketchOperator:
    """Draw a sketch operator deterministically from a 64-bit seed.

    Parameters
    ----------
    kind : one of "gaussian", "haar", "fjlt"
    m : compressed dimension (>= 1)
    n : ambient dimension; the Haar family additionally requires m <= n
    seed : 64-bit integer keying the Philox stream
    transform : FJLT fast transform, "wht" or "dct" (ignored otherwise)
    """
    kind = SketchKind(kind)
    if m < 1:
        raise ValueError(f"compressed dimension m must be >= 1, got {m}")
    if n < 1:
        raise ValueError(f"ambient dimension must be >= 1, got {n}")
    rng = generator(seed)

    if kind is SketchKind.GAUSSIAN:
        mat = rng.standard_normal((m, n)) / math.sqrt(m)
        return SketchOperator(kind, m, n, seed, matrix=mat)

    if kind is SketchKind.HAAR:
        if m > n:
            raise ValueError(f"haar sketch needs m <= n, got m={m} n={n}")
        g = rng.standard_normal((m, n))
        # Orthonormalize the rows: QR of the transpose, then fix the signs of
        # R's diagonal so the result follows the Haar distribution rather
        # than the LAPACK sign convention.
        q, r = np.linalg.qr(g.T)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        mat = math.sqrt(n / m) * (q * signs).T
        return SketchOperator(kind, m, n, seed, matrix=np.ascontiguousarray(mat))

    if transform not in FJLT_TRANSFORMS:
        raise ValueError(f"unknown FJLT transform {transform!r}; "
                         f"expected one of {FJLT_TRANSFORMS}")
    n_pad = _next_pow2(n) if transform == "wht" else n
    signs = (rng.integers(0, 2, size=n_pad) * 2 - 1).astype(np.float64)
    picks = rng.integers(0, n_pad, size=m)
    return SketchOperator(kind, m, n, seed, transform=transform,
                          signs=signs, picks=picks, n_pad=n_pad)


def _fwht(block: np.ndarray) -> np.ndarray:
    """In-place fast Walsh-Hadamard transform along the last axis.

    Sylvester (natural) ordering; the length must be a power of two.
    Unnormalized: the orthonormal transform divides by sqrt(length).
    """
    n = block.shape[-1]
    h = 1
    while h < n:
        view = block.reshape(-1, n // (2 * h), 2, h)
        top = view[:, :, 0, :].copy()
        view[:, :, 0, :] += view[:, :, 1, :]
        view[:, :, 1, :] = top - view[:, :, 1, :]
        h *= 2
    return block


def apply(op: SketchOperator, x: np.ndarray) -> np.ndarray:
    """Apply the sketch to a length-n vector or a (rows, n) matrix of rows.

    Dense kinds do a matrix product; the FJLT pads to n_pad, flips signs,
    runs the fast transform and gathers the sampled coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.shape[-1] != op.n:
        raise ValueError(f"input length {rows.shape[-1]} does not match "
                         f"operator ambient dimension {op.n}")

    if op.matrix is not None:
        out = rows @ op.matrix.T
    else:
        padded = np.zeros((rows.shape[0], op.n_pad))
        padded[:, :op.n] = rows
        padded *= op.signs
        if op.transform == "wht":
            spectrum = _fwht(padded) / math.sqrt(op.n_pad)
        else:
            spectrum = scipy.fft.dct(padded, type=2, norm="ortho", axis=-1)
        out = spectrum[:, op.picks] * op.scale

    return out[0] if single else out


def required_dim(kind: SketchKind | str, eps: float, delta: float,
                 n_vectors: int, ambient_dim: int | None = None) -> int:
    """Compressed dimension sufficient for a JLT(eps, delta, n_vectors).

    Evaluates m = ceil(C / eps^2 * ln(n_vectors / delta)) with the explicit
    constant ``JLT_BASE_CONSTANT``. The FJLT bound carries the extra
    ceil(log2 N)^4 factor and the corrected failure probability
    delta - N^(-ln(N)^3), so it needs ``ambient_dim``; the correction is
    clamped (see ``FJLT_DELTA_FLOOR``). Monotone: nonincreasing in eps and
    delta, nondecreasing in n_vectors.
    """
    kind = SketchKind(kind)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n_vectors < 2:
        raise ValueError(f"n_vectors must be >= 2, got {n_vectors}")

    if kind is SketchKind.FJLT:
        if ambient_dim is None:
            raise ValueError("the FJLT bound depends on the ambient "
                             "dimension; pass ambient_dim")
        correction = float(ambient_dim) ** -(math.log(ambient_dim) ** 3) \
            if ambient_dim > 1 else 1.0
        delta_eff = min(max(delta - correction, delta * FJLT_DELTA_FLOOR), delta)
        factor = max(1, math.ceil(math.log2(max(ambient_dim, 2)))) ** 4
    else:
        delta_eff = delta
        factor = 1

    base = JLT_BASE_CONSTANT * eps ** -2 * math.log(n_vectors / delta_eff)
    return math.ceil(base * factor)
