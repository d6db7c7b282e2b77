"""Architecture hyperparameters and the derived shape/padding bookkeeping."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from ..errors import ConfigError
from ..numerics import conv1d_out_len, conv1d_transposed_out_len


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ModelConfig:
    fft_size: int = 1024
    hop: int = 512
    sample_rate: int = 16000
    bands: tuple[int, ...] = (32, 32, 64, 128, 257)
    k_full: int = 64
    k_sub: int = 32
    # None derives round(F / k); sub_tokens defaults to max(1, round(size / k_sub)).
    full_tokens: int | None = None
    sub_tokens: tuple[int, ...] | None = None
    # None means an unbounded window (full self-path block).
    w_full: int | None = 8
    w_sub: int | None = 8
    n_layers: int = 4
    tcn_layers: int = 3
    d: int = 32
    heads: int = 4
    ffn_mult: int = 2
    enc_kernels: tuple[int, ...] = (6, 8, 6)
    enc_strides: tuple[int, ...] = (2, 2, 2)
    enc_channels: tuple[int, ...] = (32, 56, 32)
    enc_pads: tuple[tuple[int, int], ...] | None = None
    sub_kernel: int = 6
    sub_stride: int = 2
    sub_pad: tuple[int, int] = (2, 2)
    tcn_kernel: int = 3
    tcn_dilations: tuple[int, ...] | None = None
    combine_kernel: tuple[int, int] = (3, 1)
    dropout: float = 0.1
    causal: bool = True
    prelu_init: float = 0.25

    # -- derived quantities ----------------------------------------------
    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def n_full(self) -> int:
        return self.full_tokens if self.full_tokens is not None else round_half_up(self.bins / self.k_full)

    @property
    def group_tokens(self) -> tuple[int, ...]:
        if self.sub_tokens is not None:
            return tuple(self.sub_tokens)
        return tuple(max(1, round_half_up(s / self.k_sub)) for s in self.bands)

    @property
    def n_sub(self) -> int:
        return sum(self.group_tokens)

    @property
    def seq_len(self) -> int:
        return self.n_full + self.n_sub

    @property
    def encoder_pads(self) -> tuple[tuple[int, int], ...]:
        if self.enc_pads is not None:
            return tuple(tuple(p) for p in self.enc_pads)
        pads = []
        for i, k in enumerate(self.enc_kernels):
            side = k // 2 - (1 if i == len(self.enc_kernels) - 1 else 0)
            pads.append((side, side))
        return tuple(pads)

    @property
    def encoder_lengths(self) -> tuple[int, ...]:
        """Frequency positions entering and leaving each encoder layer."""
        lengths = [self.bins]
        for k, s, p in zip(self.enc_kernels, self.enc_strides, self.encoder_pads):
            lengths.append(conv1d_out_len(lengths[-1], k, s, p))
        return tuple(lengths)

    @property
    def decoder_crops(self) -> tuple[tuple[int, int], ...]:
        """Per transposed layer (deepest first), the crop restoring the encoder length."""
        lengths = self.encoder_lengths
        crops = []
        for i in reversed(range(len(self.enc_kernels))):
            full = conv1d_transposed_out_len(lengths[i + 1], self.enc_kernels[i], self.enc_strides[i])
            excess = full - lengths[i]
            crops.append((excess // 2, excess - excess // 2))
        return tuple(crops)

    @property
    def sub_lengths(self) -> tuple[int, ...]:
        return tuple(conv1d_out_len(s, self.sub_kernel, self.sub_stride, self.sub_pad) for s in self.bands)

    @property
    def dilations(self) -> tuple[int, ...]:
        if self.tcn_dilations is not None:
            return tuple(self.tcn_dilations)
        return tuple(2 ** i for i in range(self.tcn_layers))

    @property
    def receptive_field(self) -> int:
        return 1 + (self.tcn_kernel - 1) * sum(self.dilations)

    def padding_ledger(self) -> dict:
        return {
            "encoder_pads": [list(p) for p in self.encoder_pads],
            "encoder_lengths": list(self.encoder_lengths),
            "decoder_crops": [list(c) for c in self.decoder_crops],
            "sub_pad": list(self.sub_pad),
            "sub_lengths": list(self.sub_lengths),
            "tcn_pad": "causal-left" if self.causal else "symmetric",
        }

    # -- validation --------------------------------------------------------
    def validate(self) -> "ModelConfig":
        problems = []
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            problems.append(f"fft_size {self.fft_size} is not a power of two")
        if not 1 <= self.hop <= self.fft_size:
            problems.append(f"hop {self.hop} outside [1, fft_size]")
        if sum(self.bands) != self.bins:
            problems.append(f"bands {self.bands} sum to {sum(self.bands)}, expected F={self.bins}")
        if any(b < 1 for b in self.bands):
            problems.append("band sizes must be >= 1")
        if self.d < 1 or self.heads < 1 or self.d % self.heads:
            problems.append(f"d={self.d} is not divisible by heads={self.heads}")
        if len({len(self.enc_kernels), len(self.enc_strides), len(self.enc_channels)}) != 1:
            problems.append("enc_kernels, enc_strides and enc_channels differ in length")
        elif self.enc_channels[-1] != self.d:
            problems.append(f"last encoder width {self.enc_channels[-1]} must equal d={self.d}")
        if self.enc_pads is not None and len(self.enc_pads) != len(self.enc_kernels):
            problems.append("enc_pads must list one (left, right) pair per encoder layer")
        if self.sub_tokens is not None:
            if len(self.sub_tokens) != len(self.bands):
                problems.append("sub_tokens must list one count per band")
            if any(t < 1 for t in self.sub_tokens):
                problems.append("every band needs at least one token")
        expected_sub = round_half_up(self.bins / self.k_sub)
        if self.k_full < 1 or self.k_sub < 1:
            problems.append("compression ratios must be >= 1")
        elif self.n_sub != expected_sub:
            problems.append(f"sub-band tokens {self.group_tokens} sum to {self.n_sub}, "
                            f"expected round(F/k_sub)={expected_sub}")
        if self.n_full < 1:
            problems.append("full-band path needs at least one token")
        for name, w in (("w_full", self.w_full), ("w_sub", self.w_sub)):
            if w is not None and w < 1:
                problems.append(f"{name} must be >= 1 or None")
        if self.n_layers < 0 or self.tcn_layers < 0:
            problems.append("layer counts must be non-negative")
        if len(self.dilations) != self.tcn_layers:
            problems.append("tcn_dilations must list one dilation per TCN layer")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout {self.dropout} outside [0, 1)")
        if not problems:
            try:
                lengths = self.encoder_lengths
                if min(lengths) < 1 or min(self.sub_lengths) < 1:
                    problems.append(f"encoder collapses the frequency axis: {lengths}")
                if any(min(c) < 0 for c in self.decoder_crops):
                    problems.append("decoder cannot restore encoder lengths with these pads")
            except Exception as exc:  # shape arithmetic on nonsense values
                problems.append(str(exc))
        if problems:
            raise ConfigError("invalid ModelConfig: " + "; ".join(problems))
        return self

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in fields:
                raise ConfigError(f"unknown ModelConfig field {key!r}")
            kwargs[key] = _tupleize(value)
        return cls(**kwargs)

    @classmethod
    def tiny(cls, **changes) -> "ModelConfig":
        """64-point FFT, 33 bins, d=8, one Transformer and one TCN layer."""
        base = cls(fft_size=64, hop=32, bands=(2, 2, 4, 8, 17), k_full=8, k_sub=4,
                   sub_tokens=(1, 1, 1, 2, 3), w_full=4, w_sub=4, n_layers=1, tcn_layers=1,
                   d=8, heads=2, enc_channels=(4, 6, 8))
        return base.replace(**changes)


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


DEFAULT_CONFIG = ModelConfig()
