"""Chunk-wise streaming inference with constant-size state.

The engine reproduces the offline pipeline exactly: frames are cut from the
same reflect-padded signal, the network runs frame-locally except for the
TCN (whose left context lives in per-layer caches), and overlap-add uses the
same squared-window normalization.  A sample is emitted once no later frame
can touch it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import StreamError
from .model import Model
from .numerics.fft import irfft, rfft
from .spectral import Spectrogram, hann


@dataclass
class LatencyReport:
    algorithmic_latency_samples: int
    algorithmic_latency_ms: float
    frames_processed: int
    chunks: int
    chunk_ms_mean: float
    chunk_ms_max: float
    state_bytes: int
    real_time_factor: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class StreamState:
    model: Model
    chunk_frames: int
    # Input ring: absolute sample index of buf[0] and number of valid samples.
    buf: np.ndarray
    buf_start: int = 0
    buf_len: int = 0
    caches: list[np.ndarray] = field(default_factory=list)
    # Overlap-add tail over padded positions [ola_start, ola_start + fft_size);
    # the window-power envelope stays 64-bit like the offline normalizer.
    ola: np.ndarray | None = None
    env: np.ndarray | None = None
    ola_start: int = 0
    pending: list[np.ndarray] = field(default_factory=list)  # frames awaiting a full chunk
    total_in: int = 0
    emitted: int = 0
    frames_done: int = 0
    flushed: bool = False
    chunk_times: list[float] = field(default_factory=list)
    busy_seconds: float = 0.0
    created_bytes: int = 0

    @property
    def next_frame(self) -> int:
        return self.frames_done + len(self.pending)

    def nbytes(self) -> int:
        arrays = [self.buf, self.ola, self.env, *self.caches]
        frame_bytes = self.model.config.fft_size * self.buf.itemsize
        return sum(a.nbytes for a in arrays) + self.chunk_frames * frame_bytes


def create_stream(model: Model, chunk_frames: int = 1) -> StreamState:
    cfg = model.config
    if not cfg.causal:
        raise StreamError("streaming requires causal TCN")
    if chunk_frames < 1:
        raise StreamError(f"chunk_frames must be >= 1, got {chunk_frames}")
    n = cfg.fft_size
    dtype = model.dtype
    state = StreamState(model, chunk_frames, np.zeros(n + cfg.hop, dtype=dtype),
                        caches=model.init_tcn_caches(), ola=np.zeros(n, dtype=dtype),
                        env=np.zeros(n))
    state.created_bytes = state.nbytes()
    return state


def _ready(state: StreamState) -> bool:
    cfg = state.model.config
    half = cfg.fft_size // 2
    t = state.next_frame
    return state.total_in >= max(t * cfg.hop + half, half + 1)


def _cut_frame(state: StreamState, padded_window) -> np.ndarray:
    window = hann(state.model.config.fft_size).astype(state.buf.dtype)
    return padded_window * window


def _interior_frame(state: StreamState) -> np.ndarray:
    """Window of the next frame, all of whose samples (or left reflections) are buffered."""
    cfg = state.model.config
    n, half = cfg.fft_size, cfg.fft_size // 2
    first = state.next_frame * cfg.hop - half  # absolute index of the window's first sample
    idx = np.arange(first, first + n)
    idx = np.where(idx < 0, -idx, idx)  # left reflection about sample 0
    return _cut_frame(state, state.buf[idx - state.buf_start])


def _consume(state: StreamState, samples: np.ndarray) -> None:
    """Append to the ring, dropping samples no future frame needs."""
    cfg = state.model.config
    half = cfg.fft_size // 2
    keep_from = max(0, state.next_frame * cfg.hop - half - cfg.hop)
    drop = min(max(0, keep_from - state.buf_start), state.buf_len)
    if state.buf_len + samples.size - drop > state.buf.size:
        raise StreamError("input ring overflow")  # callers feed at most the free space
    if drop:
        state.buf[: state.buf_len - drop] = state.buf[drop: state.buf_len]
        state.buf_start += drop
        state.buf_len -= drop
    state.buf[state.buf_len: state.buf_len + samples.size] = samples
    state.buf_len += samples.size
    state.total_in += samples.size


def _free_space(state: StreamState) -> int:
    cfg = state.model.config
    keep_from = max(0, state.next_frame * cfg.hop - cfg.fft_size // 2 - cfg.hop)
    return state.buf.size - state.buf_len + min(max(0, keep_from - state.buf_start), state.buf_len)


def _run_frames(state: StreamState, frames: list[np.ndarray]) -> np.ndarray:
    """Network + overlap-add for consecutive windowed frames; returns finalized samples."""
    cfg = state.model.config
    n, hop = cfg.fft_size, cfg.hop
    tic = time.perf_counter()
    spec = rfft(np.stack(frames)).T
    noisy = Spectrogram(spec.real.copy(), spec.imag.copy(), cfg.sample_rate, n, hop)
    real, imag, state.caches = state.model.stream_spectrum(noisy, state.caches)
    window = hann(n).astype(state.buf.dtype)
    out_frames = irfft((real.data + 1j * imag.data).T, n) * window
    window_sq = hann(n) ** 2
    finals = []
    for frame in out_frames:
        start = state.frames_done * hop - state.ola_start
        state.ola[start: start + n] += frame
        state.env[start: start + n] += window_sq
        state.frames_done += 1
        ready = state.frames_done * hop - state.ola_start
        finals.append(_emit(state, ready))
    state.busy_seconds += time.perf_counter() - tic
    state.chunk_times.append(time.perf_counter() - tic)
    return np.concatenate(finals) if finals else np.zeros(0, dtype=state.buf.dtype)


def _emit(state: StreamState, count: int) -> np.ndarray:
    """Normalize and release the first ``count`` tail positions; drop the left padding."""
    half = state.model.config.fft_size // 2
    env = state.env[:count]
    tiny = env > 1e-11
    scale = np.where(tiny, 1.0 / np.where(tiny, env, 1.0), 0.0).astype(state.ola.dtype)
    block = state.ola[:count] * scale
    skip = max(0, half - state.ola_start)
    out = block[min(skip, count):]
    state.ola[: state.ola.size - count] = state.ola[count:]
    state.ola[state.ola.size - count:] = 0
    state.env[: state.env.size - count] = state.env[count:]
    state.env[state.env.size - count:] = 0
    state.ola_start += count
    state.emitted += out.size
    return out


def push_samples(state: StreamState, samples) -> np.ndarray:
    """Feed input; returns every output sample that became final (maybe none)."""
    if state.flushed:
        raise StreamError("cannot push to a flushed stream")
    samples = np.asarray(samples, dtype=state.buf.dtype).reshape(-1)
    outputs = []
    pos = 0
    while pos < samples.size:
        take = min(_free_space(state), samples.size - pos)
        _consume(state, samples[pos: pos + take])
        pos += take
        while _ready(state):
            state.pending.append(_interior_frame(state))
            if len(state.pending) == state.chunk_frames:
                frames, state.pending = state.pending, []
                outputs.append(_run_frames(state, frames))
    return np.concatenate(outputs) if outputs else np.zeros(0, dtype=state.buf.dtype)


def _tail_frames(state: StreamState) -> list[np.ndarray]:
    """Remaining frames at end of stream, using the offline right-edge padding."""
    cfg = state.model.config
    n, hop, half = cfg.fft_size, cfg.hop, cfg.fft_size // 2
    total = state.total_in
    count = total // hop + 1
    held = state.buf[: state.buf_len]
    if state.buf_start == 0:
        mode = "reflect" if total > 1 else "edge"
        padded, origin = np.pad(held, half, mode=mode), -half
    else:
        padded, origin = np.pad(held, (0, half), mode="reflect"), state.buf_start
    frames = []
    for t in range(state.next_frame, count):
        first = t * hop - half - origin
        frames.append(_cut_frame(state, padded[first: first + n]))
    return frames


def flush(state: StreamState) -> tuple[np.ndarray, LatencyReport]:
    if state.flushed:
        raise StreamError("stream already flushed")
    out = []
    if state.total_in:
        frames = state.pending + _tail_frames(state)
        state.pending = []
        for i in range(0, len(frames), state.chunk_frames):
            out.append(_run_frames(state, frames[i: i + state.chunk_frames]))
        out.append(_emit(state, state.ola.size))
    state.flushed = True
    tail = np.concatenate(out) if out else np.zeros(0, dtype=state.buf.dtype)
    # Offline synthesis trims to, or zero-fills up to, the input length.
    overshoot = state.emitted - state.total_in
    if overshoot > 0:
        tail = tail[: tail.size - overshoot]
    elif overshoot < 0:
        tail = np.concatenate([tail, np.zeros(-overshoot, dtype=tail.dtype)])
    state.emitted = state.total_in
    return tail, latency_report(state)


def algorithmic_latency(model: Model, chunk_frames: int = 1) -> int:
    """Input-to-output delay in samples: one analysis window plus chunk batching."""
    cfg = model.config
    return cfg.fft_size + (chunk_frames - 1) * cfg.hop


def latency_report(state: StreamState) -> LatencyReport:
    cfg = state.model.config
    latency = algorithmic_latency(state.model, state.chunk_frames)
    times = np.array(state.chunk_times) * 1e3
    audio_s = state.total_in / cfg.sample_rate
    return LatencyReport(
        latency, 1e3 * latency / cfg.sample_rate, state.frames_done, len(times),
        float(times.mean()) if times.size else 0.0, float(times.max()) if times.size else 0.0,
        state.created_bytes, state.busy_seconds / audio_s if audio_s else 0.0)


def stream_wave(model: Model, wave, pushes: Iterable[int] | int, chunk_frames: int = 1) -> np.ndarray:
    """Stream ``wave`` through a fresh state with the given push sizes (cycled)."""
    wave = np.asarray(wave)
    sizes = [pushes] if isinstance(pushes, int) else list(pushes)
    if not sizes or min(sizes) < 1:
        raise StreamError("push sizes must be positive")
    state = create_stream(model, chunk_frames)
    out, pos, i = [], 0, 0
    while pos < wave.size:
        size = sizes[i % len(sizes)]
        out.append(push_samples(state, wave[pos: pos + size]))
        pos += size
        i += 1
    tail, _ = flush(state)
    out.append(tail)
    return np.concatenate(out)


def equivalence_check(model: Model, wave, chunkings: list, chunk_frames: int = 1) -> float:
    """Max abs deviation between offline output and streaming under each push pattern."""
    if not model.config.causal:
        raise StreamError("streaming requires causal TCN")
    reference = model.enhance(wave)
    worst = 0.0
    for pattern in chunkings:
        streamed = stream_wave(model, wave, pattern, chunk_frames)
        if streamed.shape != reference.shape:
            raise StreamError(f"streamed length {streamed.size} != offline length {reference.size}")
        worst = max(worst, float(np.max(np.abs(streamed - reference))) if reference.size else 0.0)
    return worst
