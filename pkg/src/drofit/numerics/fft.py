"""Iterative radix-2 FFT, vectorized over leading axes.

Convention: forward unnormalized, inverse scaled by 1/n.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ConfigError


def _check_pow2(n: int) -> None:
    if n < 1 or n & (n - 1):
        raise ConfigError(f"FFT length must be a power of two, got {n}")


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(m) / (2 * m))


def fft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    n = x.shape[-1]
    _check_pow2(n)
    ctype = np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128
    lead = x.shape[:-1]
    y = x[..., _bit_reversal(n)].astype(ctype)
    m = 1
    while m < n:
        blocks = y.reshape(*lead, n // (2 * m), 2, m)
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * _twiddles(m).astype(ctype)
        y = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        m *= 2
    return y


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def rfft(frame: np.ndarray) -> np.ndarray:
    """Spectrum of a real signal along the last axis: ``n // 2 + 1`` bins."""
    frame = np.asarray(frame)
    n = frame.shape[-1]
    return fft(frame)[..., : n // 2 + 1]


def irfft(spectrum: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`rfft`; imaginary parts of DC and Nyquist are ignored."""
    spectrum = np.asarray(spectrum)
    if n is None:
        n = 2 * (spectrum.shape[-1] - 1)
    _check_pow2(n)
    if spectrum.shape[-1] != n // 2 + 1:
        raise ConfigError(f"irfft: {spectrum.shape[-1]} bins do not match n={n}")
    mirror = np.conj(spectrum[..., n // 2 - 1: 0: -1])
    full = np.concatenate([spectrum, mirror], axis=-1)
    out = ifft(full).real
    return out.astype(np.float32) if spectrum.dtype == np.complex64 else out


def irfft_adjoint(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum(g * irfft(X))`` with respect to ``Re X`` and ``Im X``."""
    n = g.shape[-1]
    spec = rfft(g)
    weight = np.full(n // 2 + 1, 2.0 / n)
    weight[0] = weight[-1] = 1.0 / n
    return spec.real * weight, spec.imag * weight
