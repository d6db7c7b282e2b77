"""Waveform I/O, SNR-controlled mixing, noise segmentation, synthetic sources
and JSON-lines mixture manifests."""

from __future__ import annotations

import dataclasses
import fnmatch
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from .errors import DataError

SAMPLE_RATE = 16000
TRAIN_LADDER = (-5.0, -10.0, -15.0, -20.0, -25.0)
TEST_LADDER = (-5.0, -10.0, -15.0, -20.0, -25.0, -30.0)


# -- WAV I/O -------------------------------------------------------------------

def load_wav(path, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Mono WAV as float64.

    16-bit PCM maps to [-1, 1) by dividing by 32768; float files are widened
    without rescaling, so float64 files round-trip exactly.
    """
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read WAV {path}: {exc}") from exc
    if rate != sample_rate:
        raise DataError(f"{path}: sample rate {rate} Hz, expected {sample_rate} Hz")
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype.kind == "f":
        return data.astype(np.float64)
    raise DataError(f"{path}: unsupported sample format {data.dtype}")


def save_wav(path, wave, sample_rate: int = SAMPLE_RATE, encoding: str = "float") -> None:
    """Write mono audio; ``encoding`` is ``"float"`` (keeps 32/64-bit) or ``"pcm16"``."""
    wave = np.asarray(wave)
    if wave.ndim != 1:
        raise DataError("save_wav expects a 1-D waveform")
    if encoding == "pcm16":
        data = np.clip(np.round(wave * 32768.0), -32768, 32767).astype(np.int16)
    elif encoding == "float":
        data = wave if wave.dtype in (np.float32, np.float64) else wave.astype(np.float64)
    else:
        raise DataError(f"unknown WAV encoding {encoding!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, sample_rate, data)


# -- mixing ---------------------------------------------------------------------

def _power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def mix_at_snr(clean, noise, snr_db: float) -> tuple[np.ndarray, float]:
    """Return ``(clean + g*noise, g)`` with g chosen from full-utterance power."""
    clean, noise = np.asarray(clean, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise DataError(f"clean {clean.shape} and noise {noise.shape} lengths differ")
    p_clean, p_noise = _power(clean), _power(noise)
    if p_clean == 0.0 or p_noise == 0.0:
        raise DataError("cannot mix at an SNR with a zero-energy clean or noise signal")
    gain = float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))
    return clean + gain * noise, gain


def measured_snr(clean, scaled_noise) -> float:
    return 10.0 * np.log10(_power(np.asarray(clean)) / _power(np.asarray(scaled_noise)))


def segment_long_noise(long_wave, seg_len: int, stride: int) -> list[np.ndarray]:
    if seg_len < 1 or stride < 1:
        raise DataError("seg_len and stride must be positive")
    long_wave = np.asarray(long_wave)
    if seg_len > long_wave.size:
        return []
    count = (long_wave.size - seg_len) // stride + 1
    return [long_wave[i * stride: i * stride + seg_len] for i in range(count)]


# -- synthetic sources -----------------------------------------------------------

@dataclass(frozen=True)
class DroneNoiseSpec:
    """Rotor-noise stand-in: decaying blade-pass harmonics over coloured noise."""

    blade_pass_hz: float = 190.0
    n_harmonics: int = 12
    harmonic_decay_db_per_octave: float = 4.0
    # Broadband level relative to the harmonic stack; None disables it.
    broadband_level_db: float | None = -12.0
    am_depth: float = 0.2
    am_rate_hz: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if not self.blade_pass_hz > 0:
            raise DataError(f"blade_pass_hz must be positive, got {self.blade_pass_hz}")
        if self.n_harmonics < 1:
            raise DataError("n_harmonics must be >= 1")
        levels = [self.harmonic_decay_db_per_octave, self.am_depth, self.am_rate_hz]
        if self.broadband_level_db is not None:
            levels.append(self.broadband_level_db)
        if not np.all(np.isfinite(levels)):
            raise DataError("drone noise levels must be finite")
        if not 0.0 <= self.am_depth < 1.0:
            raise DataError(f"am_depth must lie in [0, 1), got {self.am_depth}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def synth_drone_noise(spec: DroneNoiseSpec, duration_s: float, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise DataError("duration too short to synthesize any samples")
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n) / sample_rate
    harmonics = np.zeros(n)
    nyquist = sample_rate / 2
    for k in range(1, spec.n_harmonics + 1):
        freq = k * spec.blade_pass_hz
        if freq >= nyquist:
            break
        amp = 10.0 ** (-spec.harmonic_decay_db_per_octave * np.log2(k) / 20.0)
        harmonics += amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    wave = harmonics
    if spec.broadband_level_db is not None:
        # One-pole lowpass tilts white noise towards the low end like rotor wash.
        broadband = lfilter([0.5], [1.0, -0.5], rng.standard_normal(n))
        target = np.sqrt(_power(harmonics)) * 10.0 ** (spec.broadband_level_db / 20.0)
        wave = wave + broadband * target / np.sqrt(_power(broadband))
    if spec.am_depth:
        wave = wave * (1.0 + spec.am_depth * np.sin(2 * np.pi * spec.am_rate_hz * t + rng.uniform(0, 2 * np.pi)))
    return wave / np.sqrt(_power(wave))


# Rough vowel formant centres (Hz) used by the speech-like generator.
_VOWELS = ((730, 1090, 2440), (270, 2290, 3010), (300, 870, 2240), (530, 1840, 2480), (570, 840, 2410))


def _resonator(x: np.ndarray, freq: float, bandwidth: float, sample_rate: int) -> np.ndarray:
    r = np.exp(-np.pi * bandwidth / sample_rate)
    theta = 2 * np.pi * freq / sample_rate
    return lfilter([1.0 - r], [1.0, -2 * r * np.cos(theta), r * r], x)


def synth_speech(duration_s: float, sample_rate: int = SAMPLE_RATE, seed: int = 0,
                 rms: float = 0.1, floor_db: float | None = -50.0) -> np.ndarray:
    """Speech-like test signal: formant-filtered glottal pulses in syllables.

    Voiced syllables of 80-300 ms with a drifting pitch and random vowel,
    occasional noise bursts standing in for fricatives, separated by short
    pauses.  It has the syllabic modulation and harmonic structure that
    intelligibility and enhancement measures respond to; it is not speech.
    A white recording floor ``floor_db`` below the speech level keeps pauses
    out of digital silence, as in real recordings; ``None`` disables it.
    """
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise DataError("duration too short to synthesize any samples")
    rng = np.random.default_rng(seed)
    out = np.zeros(n)
    pos = int(rng.integers(0, sample_rate // 20))
    pitch = rng.uniform(95, 220)
    while pos < n:
        length = int(rng.uniform(0.08, 0.3) * sample_rate)
        seg = min(length, n - pos)
        t = np.arange(seg) / sample_rate
        if rng.random() < 0.2:
            src = rng.standard_normal(seg)
            src = _resonator(src, rng.uniform(2500, 6000), 1500, sample_rate) * 0.5
        else:
            f0 = pitch * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(1, 4) * t)) * rng.uniform(0.9, 1.1)
            phase = np.cumsum(f0) / sample_rate
            pulses = np.diff(np.floor(phase), prepend=0.0)  # one impulse per pitch period
            pulses = lfilter([1.0], [1.0, -0.95], pulses)  # glottal spectral tilt
            src = sum(_resonator(pulses, f, 60 + 0.06 * f, sample_rate) * g
                      for f, g in zip(_VOWELS[rng.integers(len(_VOWELS))], (1.0, 0.6, 0.3)))
        envelope = np.sin(np.pi * np.arange(seg) / max(seg, 1)) ** 2
        out[pos: pos + seg] += src * envelope
        pos += seg + int(rng.uniform(0.02, 0.15) * sample_rate)
    out = lfilter([1.0, -1.0], [1.0, -0.995], out)  # DC blocker
    power = _power(out)
    if power == 0.0:
        return out
    out *= rms / np.sqrt(power)
    if floor_db is not None:
        out += rng.standard_normal(n) * rms * 10.0 ** (floor_db / 20.0)
    return out


# -- manifests --------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureEntry:
    id: str
    clean: str  # WAV path, or "synth:<seed>" for the speech-like generator
    noise: dict  # {"path": ..., "offset": samples} or {"synth": DroneNoiseSpec fields}
    snr_db: float
    split: str
    seed: int
    duration_s: float = 5.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MixtureManifest:
    entries: list[MixtureEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def split(self, name: str) -> "MixtureManifest":
        return MixtureManifest([e for e in self.entries if e.split == name])

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "MixtureManifest":
        entries = []
        try:
            with open(path) as fh:
                for lineno, line in enumerate(fh, 1):
                    if line.strip():
                        try:
                            entries.append(MixtureEntry(**json.loads(line)))
                        except (json.JSONDecodeError, TypeError) as exc:
                            raise DataError(f"{path}:{lineno}: bad manifest entry: {exc}") from exc
        except OSError as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        return cls(entries)


def _clean_pool(clean_source) -> list[str]:
    """Clean sources: a directory of WAVs, an explicit list, or a count of synthetic voices."""
    if isinstance(clean_source, int):
        return [f"synth:{i}" for i in range(clean_source)]
    if isinstance(clean_source, (str, Path)):
        root = Path(clean_source)
        if not root.is_dir():
            raise DataError(f"clean directory {root} does not exist")
        files = sorted(str(p) for p in root.glob("*.wav"))
        if not files:
            raise DataError(f"no WAV files in {root}")
        return files
    return [str(c) for c in clean_source]


def _speaker(item: str) -> str:
    return Path(item).stem if not item.startswith("synth:") else item


def build_manifest(clean_source, noise_source, snr_ladders: dict[str, tuple[float, ...]],
                   counts_per_snr: dict[str, int], seed: int = 0, holdout: str | None = None,
                   duration_s: float = 5.0, sample_rate: int = SAMPLE_RATE) -> MixtureManifest:
    """Deterministic mixture list.

    ``noise_source`` is a ``DroneNoiseSpec`` (every entry gets its own seed) or
    a list of noise WAV paths (entries draw a random whole segment).  Clean
    items whose stem matches ``holdout`` are reserved for the test split.
    """
    rng = np.random.default_rng(seed)
    pool = _clean_pool(clean_source)
    held = [c for c in pool if holdout and fnmatch.fnmatch(_speaker(c), holdout)]
    rest = [c for c in pool if c not in held]
    noise_lengths = {}
    if not isinstance(noise_source, DroneNoiseSpec):
        for path in noise_source:
            rate, data = wavfile.read(path, mmap=True)
            if rate != sample_rate:
                raise DataError(f"{path}: sample rate {rate} Hz, expected {sample_rate} Hz")
            noise_lengths[str(path)] = data.shape[0]
        if not noise_lengths:
            raise DataError("no noise sources given")
    seg_len = int(round(duration_s * sample_rate))
    entries = []
    for split in snr_ladders:
        candidates = held if split == "test" and held else rest
        if not candidates:
            raise DataError(f"no clean material left for split {split!r} after holdout")
        for snr in snr_ladders[split]:
            for _ in range(counts_per_snr[split]):
                entry_seed = int(rng.integers(2 ** 31))
                clean = candidates[int(rng.integers(len(candidates)))]
                if isinstance(noise_source, DroneNoiseSpec):
                    noise = {"synth": dataclasses.replace(noise_source, seed=entry_seed).to_dict()}
                else:
                    path = sorted(noise_lengths)[int(rng.integers(len(noise_lengths)))]
                    if noise_lengths[path] < seg_len:
                        raise DataError(f"noise file {path} shorter than {duration_s} s")
                    noise = {"path": path, "offset": int(rng.integers(noise_lengths[path] - seg_len + 1))}
                entries.append(MixtureEntry("", clean, noise, float(snr), split, entry_seed, duration_s))
    order = rng.permutation(len(entries))
    shuffled = [entries[i] for i in order]
    return MixtureManifest([dataclasses.replace(e, id=f"{e.split}-{i:05d}") for i, e in enumerate(shuffled)])


def _fit(wave: np.ndarray, n: int) -> np.ndarray:
    if wave.size >= n:
        return wave[:n]
    return np.pad(wave, (0, n - wave.size))


def materialize(entry: MixtureEntry, sample_rate: int = SAMPLE_RATE) -> tuple[np.ndarray, np.ndarray, float]:
    """``(clean, mixture, gain)`` for one manifest entry; clean is cut or zero-padded."""
    n = int(round(entry.duration_s * sample_rate))
    if entry.clean.startswith("synth:"):
        clean = synth_speech(entry.duration_s, sample_rate, seed=int(entry.clean[6:]))
    else:
        clean = _fit(load_wav(entry.clean, sample_rate), n)
    if "synth" in entry.noise:
        noise = synth_drone_noise(DroneNoiseSpec(**entry.noise["synth"]), entry.duration_s, sample_rate)
    else:
        offset = entry.noise["offset"]
        noise = load_wav(entry.noise["path"], sample_rate)[offset: offset + n]
    mixture, gain = mix_at_snr(clean, _fit(noise, n), entry.snr_db)
    return clean, mixture, gain
