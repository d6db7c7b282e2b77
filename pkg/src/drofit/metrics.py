"""Objective evaluation: SI-SDR, STOI, LSD and per-SNR set reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from . import loss
from .errors import DataError
from .numerics.fft import rfft
from .spectral import FFT_SIZE, HOP, stft

REPORT_COLUMNS_VERSION = 1

# STOI constants (10 kHz analysis).
STOI_RATE = 10000
STOI_FRAME = 256
STOI_HOP = 128
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0
STOI_MIN_SAMPLES = STOI_FRAME + (STOI_SEGMENT - 1) * STOI_HOP  # at 10 kHz
_EPS = np.finfo(np.float64).eps


def si_sdr_metric(est, ref, epsilon: float = 1e-10) -> float:
    """SI-SDR in dB (clipped to +-100), the negated time-domain loss."""
    return -loss.loss_time_sisdr(np.asarray(est, dtype=np.float64),
                                 np.asarray(ref, dtype=np.float64), epsilon).item()


def lsd_metric(est, ref, fft_size: int = FFT_SIZE, hop: int = HOP) -> float:
    est, ref = np.asarray(est, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    return loss.lsd(stft(est, fft_size, hop), stft(ref, fft_size, hop)).item()


# -- STOI ------------------------------------------------------------------------

def _stoi_window() -> np.ndarray:
    # Symmetric Hann without its zero endpoints, as in the reference STOI code.
    return np.hanning(STOI_FRAME + 2)[1:-1]


def _frames(x: np.ndarray) -> np.ndarray:
    count = (x.size - STOI_FRAME) // STOI_HOP + 1
    idx = np.arange(count)[:, None] * STOI_HOP + np.arange(STOI_FRAME)[None, :]
    return x[idx]


def _remove_silent_frames(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames whose reference energy is 40 dB below the loudest, then overlap-add."""
    w = _stoi_window()
    xf, yf = _frames(x) * w, _frames(y) * w
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energy > energy.max() - STOI_DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    n = STOI_FRAME + STOI_HOP * (len(xf) - 1)
    x_out, y_out = np.zeros(n), np.zeros(n)
    for i in range(len(xf)):
        x_out[i * STOI_HOP: i * STOI_HOP + STOI_FRAME] += xf[i]
        y_out[i * STOI_HOP: i * STOI_HOP + STOI_FRAME] += yf[i]
    return x_out, y_out


def third_octave_bands(rate: int = STOI_RATE, nfft: int = STOI_NFFT, bands: int = STOI_BANDS,
                       min_freq: float = STOI_MIN_FREQ) -> tuple[np.ndarray, np.ndarray]:
    """Binary band matrix ``[bands, nfft/2+1]`` and the band centre frequencies."""
    freqs = np.linspace(0, rate, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(bands)
    centres = min_freq * 2.0 ** (k / 3)
    lows = min_freq * 2.0 ** ((2 * k - 1) / 6)
    highs = min_freq * 2.0 ** ((2 * k + 1) / 6)
    matrix = np.zeros((bands, freqs.size))
    for i in range(bands):
        lo = int(np.argmin(np.square(freqs - lows[i])))
        hi = int(np.argmin(np.square(freqs - highs[i])))
        matrix[i, lo:hi] = 1.0
    return matrix, centres


def _band_envelopes(x: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    frames = _frames(x) * _stoi_window()
    padded = np.zeros((frames.shape[0], STOI_NFFT))
    padded[:, :STOI_FRAME] = frames
    power = np.abs(rfft(padded)) ** 2
    return np.sqrt(power @ matrix.T).T  # [bands, frames]


def stoi(est, ref, sample_rate: int = 16000) -> float:
    """Short-time objective intelligibility of ``est`` against clean ``ref``."""
    est, ref = np.asarray(est, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise DataError(f"stoi needs equal-length 1-D signals, got {est.shape} and {ref.shape}")
    min_len = int(np.ceil(STOI_MIN_SAMPLES * sample_rate / STOI_RATE))
    if ref.size < min_len:
        raise DataError(f"stoi needs at least {min_len} samples ({1000 * min_len / sample_rate:.1f} ms) "
                        f"at {sample_rate} Hz, got {ref.size}")
    if sample_rate != STOI_RATE:
        g = gcd(STOI_RATE, sample_rate)
        ref = resample_poly(ref, STOI_RATE // g, sample_rate // g)
        est = resample_poly(est, STOI_RATE // g, sample_rate // g)
    ref, est = _remove_silent_frames(ref, est)
    matrix, _ = third_octave_bands()
    x_env, y_env = _band_envelopes(ref, matrix), _band_envelopes(est, matrix)
    frames = x_env.shape[1]
    if frames < STOI_SEGMENT:
        raise DataError(f"stoi needs {STOI_SEGMENT} non-silent frames after silence removal, got {frames}")
    # Segments [bands, segments, 30] over every 30-frame window.
    idx = np.arange(STOI_SEGMENT, frames + 1)[:, None] - STOI_SEGMENT + np.arange(STOI_SEGMENT)[None, :]
    x_seg, y_seg = x_env[:, idx], y_env[:, idx]
    scale = np.linalg.norm(x_seg, axis=2, keepdims=True) / (np.linalg.norm(y_seg, axis=2, keepdims=True) + _EPS)
    clip = 1.0 + 10.0 ** (-STOI_BETA_DB / 20.0)
    y_prime = np.minimum(y_seg * scale, x_seg * clip)
    x_c = x_seg - x_seg.mean(axis=2, keepdims=True)
    y_c = y_prime - y_prime.mean(axis=2, keepdims=True)
    x_c /= np.linalg.norm(x_c, axis=2, keepdims=True) + _EPS
    y_c /= np.linalg.norm(y_c, axis=2, keepdims=True) + _EPS
    return float(np.sum(x_c * y_c) / (x_c.shape[0] * x_c.shape[1]))


# -- set evaluation --------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    si_sdr_db: float
    stoi: float
    lsd_db: float
    snr_db: float | None = None
    count: int = 1

    def __post_init__(self):
        values = (self.si_sdr_db, self.stoi, self.lsd_db)
        if not np.all(np.isfinite(values)):
            raise DataError(f"non-finite metric in {values}")


def evaluate_pair(est, ref, snr_db: float | None = None, sample_rate: int = 16000) -> EvalResult:
    return EvalResult(si_sdr_metric(est, ref), stoi(est, ref, sample_rate), lsd_metric(est, ref), snr_db)


def aggregate(results: list[EvalResult], snr_db: float | None = None) -> EvalResult:
    weights = np.array([r.count for r in results], dtype=np.float64)
    def mean(attr):
        return float(np.dot(weights, [getattr(r, attr) for r in results]) / weights.sum())
    return EvalResult(mean("si_sdr_db"), mean("stoi"), mean("lsd_db"), snr_db, int(weights.sum()))


@dataclass
class EvalReport:
    """Per-SNR and overall rows for the enhanced output and the unprocessed input."""

    enhanced: dict[float, EvalResult] = field(default_factory=dict)
    noisy: dict[float, EvalResult] = field(default_factory=dict)
    enhanced_mean: EvalResult | None = None
    noisy_mean: EvalResult | None = None
    omitted: tuple[str, ...] = ("pesq", "estoi")

    def rows(self) -> list[dict]:
        out = []
        for name, table, overall in (("input", self.noisy, self.noisy_mean),
                                     ("enhanced", self.enhanced, self.enhanced_mean)):
            for snr in sorted(table, reverse=True):
                out.append({"system": name, "snr_db": snr, **_metric_cols(table[snr])})
            out.append({"system": name, "snr_db": "all", **_metric_cols(overall)})
        return out

    def to_delimited(self, delimiter: str = "\t") -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, ["system", "snr_db", "count", "si_sdr_db", "stoi", "lsd_db"],
                                delimiter=delimiter, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns_version": REPORT_COLUMNS_VERSION, "omitted_metrics": list(self.omitted),
                           "rows": self.rows()}, indent=2)


def _metric_cols(r: EvalResult) -> dict:
    return {"count": r.count, "si_sdr_db": round(r.si_sdr_db, 4), "stoi": round(r.stoi, 4),
            "lsd_db": round(r.lsd_db, 4)}


def evaluate_set(manifest, enhance, sample_rate: int = 16000) -> EvalReport:
    """Score ``enhance(mixture) -> wave`` over a manifest, grouped by mixture SNR.

    ``enhance`` may be a model (its ``enhance`` method is used) or any callable.
    """
    from .data import materialize

    fn = enhance.enhance if hasattr(enhance, "enhance") else enhance
    enhanced: dict[float, list[EvalResult]] = {}
    noisy: dict[float, list[EvalResult]] = {}
    for entry in manifest:
        clean, mixture, _ = materialize(entry, sample_rate)
        out = np.asarray(fn(mixture), dtype=np.float64)
        enhanced.setdefault(entry.snr_db, []).append(evaluate_pair(out, clean, entry.snr_db, sample_rate))
        noisy.setdefault(entry.snr_db, []).append(evaluate_pair(mixture, clean, entry.snr_db, sample_rate))
    if not enhanced:
        raise DataError("cannot evaluate an empty manifest")
    report = EvalReport({s: aggregate(r, s) for s, r in enhanced.items()},
                        {s: aggregate(r, s) for s, r in noisy.items()})
    report.enhanced_mean = aggregate(list(report.enhanced.values()))
    report.noisy_mean = aggregate(list(report.noisy.values()))
    return report
