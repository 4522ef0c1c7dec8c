"""Frequency-domain temporal filtering for multivariate windows.

Series live in arrays shaped (N, T, D): N variables, T time steps, D
feature dimensions. The discrete Fourier transform follows the unnormalized
forward convention

    F(k) = sum_t x(t) exp(-2 pi i k t / T),      x(t) = (1/T) sum_k F(k) exp(+2 pi i k t / T),

computed by an iterative radix-2 FFT when T is a power of two and by the
plain O(T^2) transform otherwise.

Two filtering pipelines share the same spectral core (transform, keep S
modes, multiply by per-variable complex S x S weights, zero-pad, invert):

* coarse: applied to the raw window;
* fine:   the window is first split into trend (moving average, the first
  w-1 outputs zero-padded) and seasonal parts, the seasonal part is
  filtered, and the trend is added back.

`spectral_attention` is the nonlinear variant of the fine stage: queries
come from the trend, keys/values from the seasonal part, attention happens
over the retained modes, and the result is added onto the trend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "ComplexSpectrumTensor",
    "TemporalFDMParams",
    "ColumnSamplingReport",
    "dft",
    "idft",
    "select_modes",
    "pad_modes",
    "moving_average_matrix",
    "decompose",
    "coarse_fdm",
    "fine_fdm",
    "spectral_attention",
    "column_sampling_check",
]


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def _fft_radix2(values: np.ndarray) -> np.ndarray:
    """Iterative radix-2 FFT over the last axis (length must be 2**m)."""
    n = values.shape[-1]
    levels = n.bit_length() - 1
    # bit-reversal reordering
    rev = np.zeros(n, dtype=np.intp)
    for i in range(n):
        r, v = 0, i
        for _ in range(levels):
            r = (r << 1) | (v & 1)
            v >>= 1
        rev[i] = r
    out = values[..., rev]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        out = out.reshape(out.shape[:-1] + (n // size, size))
        even = out[..., :half]
        odd = out[..., half:] * twiddle
        out = np.concatenate([even + odd, even - odd], axis=-1)
        out = out.reshape(out.shape[:-2] + (n,))
        size *= 2
    return out


def _dft_direct(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    k = np.arange(n)
    kernel = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return np.einsum("...t,kt->...k", values, kernel)


def dft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized forward transform along ``axis``."""
    arr = np.asarray(x)
    if arr.shape[axis] == 0:
        raise ShapeError("cannot transform an empty axis")
    moved = np.moveaxis(arr.astype(np.complex128), axis, -1)
    n = moved.shape[-1]
    if n & (n - 1) == 0 and n > 1:
        out = _fft_radix2(moved)
    else:
        out = _dft_direct(moved)
    return np.moveaxis(out, -1, axis)


def idft(f: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse transform (the 1/T convention), via conjugation of `dft`."""
    arr = np.asarray(f, dtype=np.complex128)
    n = arr.shape[axis]
    return np.conj(dft(np.conj(arr), axis=axis)) / n


# ---------------------------------------------------------------------------
# spectra and mode bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexSpectrumTensor:
    """S retained spectral modes of an (N, T, D) window."""

    values: np.ndarray          # complex, (N, S, D)
    length_full: int            # T
    mode_indices: np.ndarray    # (S,) ints into [0, T)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        idx = np.asarray(self.mode_indices, dtype=np.intp)
        if values.ndim != 3:
            raise ShapeError(f"spectrum values must be (N, S, D), got {values.shape}")
        if idx.ndim != 1 or idx.size != values.shape[1]:
            raise ShapeError("mode index count must match the retained-mode axis")
        if idx.size != np.unique(idx).size:
            raise ParameterError("mode indices must be unique")
        if idx.size and (idx.min() < 0 or idx.max() >= self.length_full):
            raise ParameterError("mode indices must lie within [0, T)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mode_indices", idx)


@dataclass(frozen=True)
class TemporalFDMParams:
    """Parameters of one frequency-domain temporal stage.

    weights is complex with shape (N or 1, D or 1, S, S); size-1 leading
    axes share one filter across variables and/or feature dimensions.
    attention, when present, holds the three real (T, T) time-mixing
    projections of the nonlinear stage (query, key, value).
    """

    mode_indices: np.ndarray
    weights: np.ndarray
    decomp_window: int = 1
    attention: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        idx = np.asarray(self.mode_indices, dtype=np.intp)
        w = np.asarray(self.weights, dtype=np.complex128)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"weights must be (N|1, D|1, S, S), got {w.shape}")
        if idx.size != w.shape[2]:
            raise ShapeError("weights mode axis must match the number of mode indices")
        if self.decomp_window < 1:
            raise ParameterError("decomposition window must be >= 1")
        object.__setattr__(self, "mode_indices", idx)
        object.__setattr__(self, "weights", w)


def select_modes(full: np.ndarray, indices: np.ndarray) -> ComplexSpectrumTensor:
    """Keep the listed modes of a full (N, T, D) spectrum."""
    arr = np.asarray(full, dtype=np.complex128)
    if arr.ndim != 3:
        raise ShapeError(f"full spectrum must be (N, T, D), got {arr.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= arr.shape[1]):
        raise ParameterError(
            f"mode indices must lie within [0, {arr.shape[1]}), got {idx}")
    return ComplexSpectrumTensor(values=arr[:, idx, :], length_full=arr.shape[1],
                                 mode_indices=idx)


def pad_modes(spectrum: ComplexSpectrumTensor) -> np.ndarray:
    """Scatter retained modes back to full length; absent modes are 0+0j."""
    n, s, d = spectrum.values.shape
    out = np.zeros((n, spectrum.length_full, d), dtype=np.complex128)
    out[:, spectrum.mode_indices, :] = spectrum.values
    return out


def lowest_modes(t: int, s: int) -> np.ndarray:
    """Default mode policy: the S lowest frequency indices."""
    if not 1 <= s <= t:
        raise ParameterError(f"mode count must lie in [1, T], got S={s}, T={t}")
    return np.arange(s, dtype=np.intp)


# ---------------------------------------------------------------------------
# trend / seasonal decomposition
# ---------------------------------------------------------------------------

def moving_average_matrix(t: int, window: int) -> np.ndarray:
    """(T, T) operator: row i averages entries i-w+1..i, zero for i < w-1."""
    if not 1 <= window <= t:
        raise ParameterError(f"window must lie in [1, T], got w={window}, T={t}")
    mat = np.zeros((t, t))
    for i in range(window - 1, t):
        mat[i, i - window + 1:i + 1] = 1.0 / window
    return mat


def decompose(z: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Split (..., T, D) into (trend, seasonal); they sum back exactly."""
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim < 2:
        raise ShapeError("decompose expects at least (T, D)")
    mat = moving_average_matrix(arr.shape[-2], window)
    trend = np.einsum("ts,...sd->...td", mat, arr)
    return trend, arr - trend


# ---------------------------------------------------------------------------
# filtering pipelines
# ---------------------------------------------------------------------------

def _filter_modes(z: np.ndarray, params: TemporalFDMParams) -> np.ndarray:
    """transform -> select -> complex weights -> pad -> invert -> real part."""
    n, t, d = z.shape
    spectrum = dft(z, axis=1)
    kept = select_modes(spectrum, params.mode_indices)
    w = np.broadcast_to(params.weights, (n, d) + params.weights.shape[2:])
    filtered = np.einsum("nid,ndij->njd", kept.values, w)
    padded = pad_modes(ComplexSpectrumTensor(filtered, t, kept.mode_indices))
    return idft(padded, axis=1).real


def coarse_fdm(z: np.ndarray, params: TemporalFDMParams) -> np.ndarray:
    """Filter the raw window over its retained frequency modes."""
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"window must be (N, T, D), got {arr.shape}")
    return _filter_modes(arr, params)


def fine_fdm(z: np.ndarray, params: TemporalFDMParams) -> np.ndarray:
    """Trend + filtered seasonal component."""
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"window must be (N, T, D), got {arr.shape}")
    trend, seasonal = decompose(arr, params.decomp_window)
    return trend + _filter_modes(seasonal, params)


def spectral_attention(trend: np.ndarray, seasonal: np.ndarray,
                       params: TemporalFDMParams) -> np.ndarray:
    """Mode-space attention between trend queries and seasonal keys/values.

    Scores are the real part of Q K^T over retained modes, scaled by
    sqrt(S * D); softmax rows mix the seasonal value modes, and the
    reconstructed result is added onto the trend.
    """
    if params.attention is None:
        raise ParameterError("params.attention must hold the three projections")
    zt = np.asarray(trend, dtype=np.float64)
    zs = np.asarray(seasonal, dtype=np.float64)
    if zt.shape != zs.shape or zt.ndim != 3:
        raise ShapeError("trend and seasonal parts must both be (N, T, D)")
    n, t, d = zt.shape
    idx = params.mode_indices
    proj_q, proj_k, proj_v = params.attention

    def project(mat, part):
        mixed = np.maximum(np.einsum("ij,njd->nid", mat, part), 0.0)
        return select_modes(dft(mixed, axis=1), idx).values

    q = project(proj_q, zt)
    k = project(proj_k, zs)
    v = project(proj_v, zs)
    scores = np.einsum("nid,njd->nij", q, k).real / np.sqrt(idx.size * d)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    mixed = np.einsum("nij,njd->nid", weights, v)
    padded = pad_modes(ComplexSpectrumTensor(mixed, t, idx))
    return zt + idft(padded, axis=1).real


# ---------------------------------------------------------------------------
# column-sampling projection quality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSamplingReport:
    """Monte Carlo check of the column-sampling projection bound.

    For random S-column subsets A' of A, compares
    lhs = ||A W - A' pinv(A') A W||_F against
    rhs = (1 + eps) ||W||_F ||A - A_k||_F with eps = sqrt(k^2 / S) * c.
    """

    mean_lhs: float
    max_lhs: float
    rhs: float
    epsilon: float
    violation_rate: float
    trials: int


def column_sampling_check(a: np.ndarray, w: np.ndarray, k: int, s: int,
                          trials: int = 500, seed: int = 0,
                          c: float = 1.0) -> ColumnSamplingReport:
    a = np.asarray(a, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if a.ndim != 2 or w.ndim != 2 or w.shape[0] != a.shape[1]:
        raise ShapeError("need A (N, T) and W (T, M)")
    t = a.shape[1]
    if not 1 <= s <= t:
        raise ParameterError(f"sample size S must lie in [1, T], got {s}")
    if not 1 <= k <= min(a.shape):
        raise ParameterError(f"target rank k must lie in [1, min(N, T)], got {k}")

    singular = np.linalg.svd(a, compute_uv=False)
    tail = float(np.sqrt((singular[k:] ** 2).sum()))
    epsilon = float(np.sqrt(k * k / s) * c)
    rhs = (1.0 + epsilon) * float(np.linalg.norm(w)) * tail

    rng = np.random.default_rng(seed)
    aw = a @ w
    lhs_values = np.empty(trials)
    for trial in range(trials):
        idx = rng.choice(t, size=s, replace=False)
        cols = a[:, idx]
        projected = cols @ np.linalg.pinv(cols) @ aw
        lhs_values[trial] = np.linalg.norm(aw - projected)
    violations = float(np.mean(lhs_values > rhs))
    return ColumnSamplingReport(mean_lhs=float(lhs_values.mean()),
                                max_lhs=float(lhs_values.max()),
                                rhs=rhs, epsilon=epsilon,
                                violation_rate=violations, trials=trials)
