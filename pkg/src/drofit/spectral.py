"""STFT analysis/synthesis and sub-band partitioning."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import Tensor, concat, getitem, make_op
from .numerics.fft import irfft, irfft_adjoint, rfft

SAMPLE_RATE = 16000
FFT_SIZE = 1024
HOP = 512
DEFAULT_BANDS = (32, 32, 64, 128, 257)


@lru_cache(maxsize=None)
def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass
class Spectrogram:
    real: Tensor
    imag: Tensor
    sample_rate: int = SAMPLE_RATE
    fft_size: int = FFT_SIZE
    hop: int = HOP

    def __post_init__(self):
        if not isinstance(self.real, Tensor):
            self.real = Tensor(self.real)
        if not isinstance(self.imag, Tensor):
            self.imag = Tensor(self.imag)
        if self.real.shape != self.imag.shape:
            raise ShapeError(f"real {self.real.shape} and imag {self.imag.shape} differ")
        if self.real.shape[0] != self.fft_size // 2 + 1:
            raise ShapeError(f"{self.real.shape[0]} bins inconsistent with fft_size {self.fft_size}")

    @property
    def bins(self) -> int:
        return self.real.shape[0]

    @property
    def frames(self) -> int:
        return self.real.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.real.data ** 2 + self.imag.data ** 2)

    def complex(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data

    def with_data(self, real, imag) -> "Spectrogram":
        return Spectrogram(real, imag, self.sample_rate, self.fft_size, self.hop)


def num_frames(length: int, hop: int = HOP) -> int:
    return length // hop + 1


def frame_signal(padded: np.ndarray, fft_size: int, hop: int, count: int) -> np.ndarray:
    idx = np.arange(count)[:, None] * hop + np.arange(fft_size)[None, :]
    return padded[idx]


def stft(wave, fft_size: int = FFT_SIZE, hop: int = HOP, sample_rate: int = SAMPLE_RATE) -> Spectrogram:
    """Centered STFT: reflect-padded by ``fft_size // 2``, periodic Hann window."""
    wave = np.asarray(wave.data if isinstance(wave, Tensor) else wave)
    if wave.ndim != 1 or wave.size == 0:
        raise ShapeError("stft expects a non-empty 1-D waveform")
    half = fft_size // 2
    padded = np.pad(wave, half, mode="reflect") if wave.size > 1 else np.pad(wave, half, mode="edge")
    frames = frame_signal(padded, fft_size, hop, num_frames(wave.size, hop))
    spec = rfft(frames * hann(fft_size).astype(wave.dtype)).T
    return Spectrogram(spec.real.copy(), spec.imag.copy(), sample_rate, fft_size, hop)


@lru_cache(maxsize=64)
def _envelope(fft_size: int, hop: int, frames: int) -> np.ndarray:
    window_sq = hann(fft_size) ** 2
    env = np.zeros(fft_size + hop * (frames - 1))
    for t in range(frames):
        env[t * hop: t * hop + fft_size] += window_sq
    return env


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    count, n = frames.shape
    out = np.zeros(n + hop * (count - 1), dtype=frames.dtype)
    for t in range(count):
        out[t * hop: t * hop + n] += frames[t]
    return out


def istft(spec: Spectrogram, out_len: int) -> Tensor:
    """Overlap-add resynthesis normalized by the summed squared window.

    Differentiable with respect to ``spec.real`` / ``spec.imag``.
    """
    n, hop = spec.fft_size, spec.hop
    if spec.bins != n // 2 + 1 or hop < 1 or hop > n:
        raise ConfigError(f"inconsistent STFT metadata: {spec.bins} bins, fft {n}, hop {hop}")
    count = spec.frames
    window = hann(n).astype(spec.real.dtype)
    env = _envelope(n, hop, count)
    tiny = env > 1e-11
    scale = np.where(tiny, 1.0 / np.where(tiny, env, 1.0), 0.0).astype(spec.real.dtype)
    half = n // 2
    keep = min(out_len, env.size - half)

    X = (spec.real.data + 1j * spec.imag.data).T
    frames = irfft(X, n) * window
    full = _overlap_add(frames, hop) * scale
    out = np.zeros(out_len, dtype=spec.real.dtype)
    out[:keep] = full[half: half + keep]

    def backward(g):
        gfull = np.zeros(env.size, dtype=g.dtype)
        gfull[half: half + keep] = g[:keep]
        gfull *= scale
        gframes = frame_signal(gfull, n, hop, count) * window
        gre, gim = irfft_adjoint(gframes)
        return gre.T, gim.T

    return make_op(out, (spec.real, spec.imag), backward)


@dataclass(frozen=True)
class BandPartition:
    group_sizes: tuple[int, ...] = DEFAULT_BANDS

    def __post_init__(self):
        if not self.group_sizes or any(s < 1 for s in self.group_sizes):
            raise ConfigError(f"band sizes must be positive, got {self.group_sizes}")

    @property
    def total(self) -> int:
        return sum(self.group_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.group_sizes)]))

    def validate(self, bins: int) -> None:
        if self.total != bins:
            raise ConfigError(f"band sizes {self.group_sizes} sum to {self.total}, expected {bins}")


def band_partition(spec: Spectrogram, partition: BandPartition) -> list["BandSlice"]:
    """Split along frequency into contiguous groups, all frames kept."""
    partition.validate(spec.bins)
    bounds = partition.offsets
    return [BandSlice(getitem(spec.real, slice(a, b)), getitem(spec.imag, slice(a, b)), a)
            for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass
class BandSlice:
    real: Tensor
    imag: Tensor
    offset: int

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.real.data ** 2 + self.imag.data ** 2)


def reassemble(groups: list[BandSlice], like: Spectrogram) -> Spectrogram:
    return like.with_data(concat([g.real for g in groups], 0), concat([g.imag for g in groups], 0))


def features_3ch(spec) -> Tensor:
    """Stack (magnitude, real, imaginary) into ``[3, F, T]``; magnitude is recomputed."""
    real, imag = spec.real.data, spec.imag.data
    return Tensor(np.stack([np.sqrt(real * real + imag * imag), real, imag]))
