"""Training objective: log-magnitude + complex spectral terms and negative SI-SDR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DataError, ShapeError
from .numerics import Tensor

SISDR_CAP_DB = 100.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.7
    epsilon: float = 1e-10
    log_floor: float = 1e-8
    lsd_weight: float = 0.0
    cmse_weight: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.epsilon <= 0 or self.log_floor <= 0:
            raise ConfigError("epsilon and log_floor must be positive")


def _check(est, ref) -> None:
    if est.real.shape != ref.real.shape:
        raise ShapeError(f"spectrogram shapes differ: {est.real.shape} vs {ref.real.shape}")


def _magnitude(spec) -> Tensor:
    return nx.sqrt(nx.square(spec.real) + nx.square(spec.imag))


def _ref_log_mag(ref, floor: float) -> np.ndarray:
    mag = np.sqrt(ref.real.data ** 2 + ref.imag.data ** 2)
    return np.log10(np.maximum(mag, floor))


def loss_mag(est, ref, log_floor: float = 1e-8) -> Tensor:
    """Mean squared difference of floored log10 magnitudes."""
    _check(est, ref)
    est_log = nx.log10(nx.clamp_min(_magnitude(est), log_floor))
    return nx.mean(nx.square(est_log - _ref_log_mag(ref, log_floor)))


def loss_complex(est, ref) -> Tensor:
    """Mean squared modulus of the complex difference."""
    _check(est, ref)
    return nx.mean(nx.square(est.real - ref.real.data) + nx.square(est.imag - ref.imag.data))


cmse = loss_complex


def loss_stft(est, ref, w: LossWeights = LossWeights()) -> Tensor:
    return (1.0 - w.beta) * loss_mag(est, ref, w.log_floor) + w.beta * loss_complex(est, ref)


def loss_time_sisdr(est_wave, ref_wave, epsilon: float = 1e-10) -> Tensor:
    """Negative SI-SDR in dB, clipped to [-100, 100].

    Target is the projection of the estimate onto the reference,
    ``(<est, ref> / ||ref||^2) ref``; the residual is everything else.  The
    guard ``epsilon`` is relative to the estimate's energy, so the value is
    exactly invariant to rescaling the estimate and a perfect estimate reaches
    ``10 log10(1 / epsilon)`` dB (the cap, at the default).
    """
    est = nx.as_tensor(est_wave)
    ref = np.asarray(getattr(ref_wave, "data", ref_wave))
    if est.shape != ref.shape:
        raise ShapeError(f"waveform lengths differ: {est.shape} vs {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise DataError("SI-SDR reference is all zeros")
    scale = nx.dot(est, ref) * (1.0 / ref_energy)
    target = nx.reshape(scale, (1,)) * ref
    residual = est - target
    energy = nx.tsum(nx.square(est))
    # A silent estimate has nothing to scale by; fall back to an absolute guard (0 dB).
    guard = energy * epsilon if energy.data > 0 else epsilon
    num = nx.tsum(nx.square(target)) + guard
    den = nx.tsum(nx.square(residual)) + guard
    sisdr = 10.0 * (nx.log10(num) - nx.log10(den))
    clipped = np.clip(sisdr.data, -SISDR_CAP_DB, SISDR_CAP_DB)
    if clipped != sisdr.data:
        sisdr = nx.make_op(np.asarray(clipped), (sisdr,), lambda g: (np.zeros_like(g),))
    return -sisdr


def lsd(est, ref, floor: float = 1e-8) -> Tensor:
    """Log-spectral distance in dB: frame-mean of the RMS over bins."""
    _check(est, ref)
    est_db = 20.0 * nx.log10(nx.clamp_min(_magnitude(est), floor))
    ref_db = 20.0 * _ref_log_mag(ref, floor)
    per_frame = nx.mean(nx.square(est_db - ref_db), axis=0)
    return nx.mean(nx.sqrt(per_frame))


@dataclass
class LossBreakdown:
    total: Tensor
    stft: float
    mag: float
    complex: float
    time: float
    lsd: float | None = None


def total_loss(est_spec, ref_spec, est_wave, ref_wave, w: LossWeights = LossWeights()) -> LossBreakdown:
    mag = loss_mag(est_spec, ref_spec, w.log_floor)
    comp = loss_complex(est_spec, ref_spec)
    spectral = (1.0 - w.beta) * mag + w.beta * comp
    time = loss_time_sisdr(est_wave, ref_wave, w.epsilon)
    total = spectral + w.alpha * time
    lsd_value = None
    if w.lsd_weight:
        aux = lsd(est_spec, ref_spec, w.log_floor)
        total = total + w.lsd_weight * aux
        lsd_value = aux.item()
    if w.cmse_weight:
        total = total + w.cmse_weight * comp
    return LossBreakdown(total, spectral.item(), mag.item(), comp.item(), time.item(), lsd_value)
