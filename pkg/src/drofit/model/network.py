"""The enhancement network: parallel full/sub-band encoders, frequency-wise
Transformer, causal TCN, gated-skip decoders and the combine block.

Layouts used throughout (T = frames):

* encoder activations ``[T, C, positions]`` (frames are the batch axis)
* token sequences ``[T, L, d]`` with full-band tokens first
* TCN activations ``[L, d, T]`` (tokens are the batch axis, time is convolved)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nx
from ..errors import ShapeError, StreamError
from ..numerics import Tensor, scope
from ..spectral import Spectrogram, features_3ch, istft, stft
from .config import ModelConfig
from .mask import AttentionMask, build_attention_mask


@dataclass
class ParamLeaf:
    name: str
    tensor: Tensor
    trainable: bool = True

    @property
    def size(self) -> int:
        return self.tensor.data.size


@dataclass
class EncoderSkips:
    full: list[Tensor] = field(default_factory=list)
    sub: list[Tensor] = field(default_factory=list)


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, ParamLeaf]):
        self.config = config.validate()
        self.params = params
        self.mask = build_attention_mask(config)
        # Gate name -> forced sigmoid value; lets tests pin gates at 0 or 1.
        self.gate_override: dict[str, float] = {}

    # -- parameter access ----------------------------------------------
    def p(self, name: str) -> Tensor:
        return self.params[name].tensor

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [(n, leaf.tensor) for n, leaf in self.params.items()]

    def trainable(self) -> list[Tensor]:
        return [leaf.tensor for leaf in self.params.values() if leaf.trainable]

    def num_params(self) -> int:
        return sum(leaf.size for leaf in self.params.values())

    def zero_grad(self) -> None:
        for leaf in self.params.values():
            leaf.tensor.grad = None

    def requires_grad_(self, flag: bool = True) -> "Model":
        for leaf in self.params.values():
            leaf.tensor.requires_grad = flag and leaf.trainable
        return self

    def astype(self, dtype) -> "Model":
        params = {n: ParamLeaf(n, Tensor(leaf.tensor.data.astype(dtype)), leaf.trainable)
                  for n, leaf in self.params.items()}
        out = Model(self.config, params)
        out.gate_override = dict(self.gate_override)
        return out

    @property
    def dtype(self):
        return next(iter(self.params.values())).tensor.dtype

    def gate(self, name: str) -> Tensor:
        if name in self.gate_override:
            shape = self.p(name).shape
            return Tensor(np.full(shape, self.gate_override[name], dtype=self.dtype))
        return nx.sigmoid(self.p(name))

    def gate_names(self) -> list[str]:
        return [n for n in self.params if n.endswith(".gate")]

    # -- building blocks -------------------------------------------------
    def _cna(self, prefix: str, x: Tensor, stride: int, padding, transposed: bool = False,
             act: bool = True, crop=None) -> Tensor:
        with scope(prefix):
            if transposed:
                y = nx.conv1d_transposed(x, self.p(f"{prefix}.conv.weight"), self.p(f"{prefix}.conv.bias"),
                                         stride=stride, padding=crop)
            else:
                y = nx.conv1d(x, self.p(f"{prefix}.conv.weight"), self.p(f"{prefix}.conv.bias"),
                              stride=stride, padding=padding)
            if act:
                y = nx.layer_norm(y, self.p(f"{prefix}.norm.gain"), self.p(f"{prefix}.norm.shift"), axis=1)
                y = nx.prelu(y, self.p(f"{prefix}.act.slope"), axis=1)
        return y

    def _linear(self, prefix: str, x: Tensor) -> Tensor:
        return nx.linear(x, self.p(f"{prefix}.weight"), self.p(f"{prefix}.bias"))

    def _pointwise(self, prefix: str, x: Tensor) -> Tensor:
        return nx.conv1d(x, self.p(f"{prefix}.weight"), self.p(f"{prefix}.bias"))

    def _gated_skip(self, prefix: str, decoder_in: Tensor, skip: Tensor) -> Tensor:
        with scope(prefix):
            proj = self._pointwise(f"{prefix}.proj", skip)
        g = nx.reshape(self.gate(f"{prefix}.gate"), (1, -1, 1))
        return decoder_in + g * proj

    # -- encoders ----------------------------------------------------------
    def full_encoder_forward(self, features: Tensor) -> tuple[Tensor, list[Tensor]]:
        """``[3, F, T]`` -> tokens ``[T, F_F, d]`` plus per-layer skips."""
        cfg = self.config
        if features.shape[:2] != (3, cfg.bins):
            raise ShapeError(f"features must be [3, {cfg.bins}, T], got {features.shape}")
        x = nx.transpose(features, (2, 0, 1))
        skips = []
        for i, (stride, pad) in enumerate(zip(cfg.enc_strides, cfg.encoder_pads)):
            x = self._cna(f"full_encoder.cna{i}", x, stride, pad)
            skips.append(x)
        with scope("full_encoder.gconv"):
            x = self._linear("full_encoder.gconv", x)
        return nx.transpose(x, (0, 2, 1)), skips

    def sub_encoder_forward(self, features: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Magnitude of each band -> tokens ``[T, F_S, d]`` plus per-band skips."""
        cfg = self.config
        mag = nx.transpose(features[0], (1, 0))  # [T, F]
        offsets = np.concatenate([[0], np.cumsum(cfg.bands)])
        tokens, skips = [], []
        for g in range(len(cfg.bands)):
            prefix = f"sub_encoder.group{g}"
            band = nx.reshape(mag[:, offsets[g]: offsets[g + 1]], (mag.shape[0], 1, -1))
            h = self._cna(prefix, band, cfg.sub_stride, cfg.sub_pad)
            skips.append(h)
            with scope(f"{prefix}.proj"):
                z = self._linear(f"{prefix}.proj", h)
            tokens.append(nx.transpose(z, (0, 2, 1)))
        return nx.concat(tokens, axis=1), skips

    def encode(self, features: Tensor) -> tuple[Tensor, EncoderSkips]:
        full, full_skips = self.full_encoder_forward(features)
        sub, sub_skips = self.sub_encoder_forward(features)
        return nx.concat([full, sub], axis=1), EncoderSkips(full_skips, sub_skips)

    # -- frequency-wise transformer -----------------------------------------
    def freq_transformer_forward(self, tokens: Tensor, mask: AttentionMask | None = None) -> Tensor:
        """Post-norm blocks attending across the L token axis of each frame separately."""
        cfg = self.config
        mask = self.mask if mask is None else mask
        if tokens.shape[1:] != (cfg.seq_len, cfg.d):
            raise ShapeError(f"tokens must be [T, {cfg.seq_len}, {cfg.d}], got {tokens.shape}")
        x = tokens
        for i in range(cfg.n_layers):
            pre = f"transformer.layer{i}"
            with scope(f"{pre}.attn"):
                q = self._linear(f"{pre}.attn.q", x)
                k = self._linear(f"{pre}.attn.k", x)
                v = self._linear(f"{pre}.attn.v", x)
                a = nx.masked_multihead_attention(q, k, v, cfg.heads, mask)
                a = self._linear(f"{pre}.attn.o", a)
            x = nx.layer_norm(x + a, self.p(f"{pre}.norm1.gain"), self.p(f"{pre}.norm1.shift"))
            with scope(f"{pre}.ffn"):
                h = nx.prelu(self._linear(f"{pre}.ffn.fc1", x), self.p(f"{pre}.ffn.act.slope"), axis=-1)
                h = self._linear(f"{pre}.ffn.fc2", h)
            x = nx.layer_norm(x + h, self.p(f"{pre}.norm2.gain"), self.p(f"{pre}.norm2.shift"))
        return x

    # -- temporal convolution -------------------------------------------------
    def tcn_cache_shapes(self) -> list[tuple[int, int, int]]:
        cfg = self.config
        return [(cfg.seq_len, cfg.d, (cfg.tcn_kernel - 1) * dil) for dil in cfg.dilations]

    def init_tcn_caches(self, dtype=None) -> list[np.ndarray]:
        dtype = self.dtype if dtype is None else dtype
        return [np.zeros(s, dtype=dtype) for s in self.tcn_cache_shapes()]

    def tcn_forward(self, tokens: Tensor, caches: list[np.ndarray] | None = None, train: bool = False,
                    rng: np.random.Generator | None = None):
        """Residual dilated conv blocks over time, weights shared by all tokens.

        With ``caches`` (streaming) each layer's left context comes from the
        cache instead of zero padding, and ``(out, new_caches)`` is returned.
        """
        cfg = self.config
        x = nx.transpose(tokens, (1, 2, 0))  # [L, d, T]
        new_caches = [] if caches is not None else None
        if caches is not None:
            if not cfg.causal:
                raise StreamError("streaming requires causal TCN")
            expected = self.tcn_cache_shapes()
            if len(caches) != len(expected) or any(c.shape != s for c, s in zip(caches, expected)):
                raise StreamError(f"TCN cache shapes {[c.shape for c in caches]} != {expected}")
        for i, dil in enumerate(cfg.dilations):
            pre = f"tcn.layer{i}"
            ctx = (cfg.tcn_kernel - 1) * dil
            with scope(pre):
                if caches is not None:
                    xin = nx.concat([Tensor(caches[i]), x], axis=2)
                    new_caches.append(np.ascontiguousarray(xin.data[:, :, xin.shape[2] - ctx:]))
                    pad = (0, 0)
                else:
                    xin = x
                    pad = (ctx, 0) if cfg.causal else (ctx // 2, ctx - ctx // 2)
                y = nx.conv1d(xin, self.p(f"{pre}.conv.weight"), self.p(f"{pre}.conv.bias"),
                              padding=pad, dilation=dil)
                y = nx.layer_norm(y, self.p(f"{pre}.norm.gain"), self.p(f"{pre}.norm.shift"), axis=1)
                y = nx.prelu(y, self.p(f"{pre}.act.slope"), axis=1)
                y = nx.dropout(y, cfg.dropout, train, rng)
            x = x + y
        out = nx.transpose(x, (2, 0, 1))
        return (out, new_caches) if caches is not None else out

    # -- decoders and combination -----------------------------------------
    def full_decoder_forward(self, latent_full: Tensor, skips: list[Tensor]) -> Tensor:
        cfg = self.config
        x = nx.transpose(latent_full, (0, 2, 1))  # [T, d, F_F]
        with scope("full_decoder.gconv"):
            x = self._linear("full_decoder.gconv", x)
        depth = len(cfg.enc_kernels)
        for j, crop in enumerate(cfg.decoder_crops):
            level = depth - 1 - j
            x = self._gated_skip(f"skip_gates.full{level}", x, skips[level])
            x = self._cna(f"full_decoder.up{j}", x, cfg.enc_strides[level], None, transposed=True,
                          act=j < depth - 1, crop=crop)
        return x  # [T, 2, F]

    def sub_decoder_forward(self, latent_sub: Tensor, skips: list[Tensor]) -> Tensor:
        cfg = self.config
        outs, start = [], 0
        for g, n_tok in enumerate(cfg.group_tokens):
            pre = f"sub_decoder.group{g}"
            tok = nx.transpose(latent_sub[:, start: start + n_tok], (0, 2, 1))  # [T, d, t_g]
            start += n_tok
            with scope(f"{pre}.fc_in"):
                h = self._linear(f"{pre}.fc_in", tok)
            h = self._gated_skip(f"skip_gates.sub{g}", h, skips[g])
            with scope(f"{pre}.pwc"):
                h = self._pointwise(f"{pre}.pwc", h)
            with scope(f"{pre}.fc_out"):
                h = self._linear(f"{pre}.fc_out", h)
            outs.append(h)
        return nx.concat(outs, axis=2)  # [T, 2, F]

    def decode_and_combine(self, latent: Tensor, skips: EncoderSkips) -> tuple[Tensor, Tensor]:
        """Latent tokens -> enhanced (real, imag), each ``[F, T]``."""
        cfg = self.config
        full = self.full_decoder_forward(latent[:, : cfg.n_full], skips.full)
        sub = self.sub_decoder_forward(latent[:, cfg.n_full:], skips.sub)
        both = nx.transpose(nx.concat([full, sub], axis=1), (1, 2, 0))  # [4, F, T]
        kf, kt = cfg.combine_kernel
        with scope("combine.conv"):
            conv = nx.conv2d(nx.reshape(both, (1, 4, cfg.bins, -1)), self.p("combine.conv.weight"),
                             self.p("combine.conv.bias"),
                             padding=((kf // 2, kf - 1 - kf // 2), (kt - 1, 0)))
        full_map = nx.reshape(nx.transpose(full, (1, 2, 0)), (1, 2, cfg.bins, -1))
        g = nx.reshape(self.gate("combine.gate"), (1, 2, 1, 1))
        out = g * conv + (1.0 - g) * full_map
        return out[0, 0], out[0, 1]

    # -- end to end --------------------------------------------------------
    def spectrum_forward(self, noisy: Spectrogram, train: bool = False,
                         rng: np.random.Generator | None = None) -> Spectrogram:
        cfg = self.config
        if noisy.bins != cfg.bins:
            raise ShapeError(f"spectrogram has {noisy.bins} bins, model expects {cfg.bins}")
        real, imag = self._map_spectrum(noisy, None, train, rng)
        return Spectrogram(real, imag, cfg.sample_rate, cfg.fft_size, cfg.hop)

    def stream_spectrum(self, noisy: Spectrogram, caches: list[np.ndarray]):
        """Eval-mode mapping of a run of consecutive frames, carrying TCN caches.

        Returns ``(real, imag, new_caches)``; feeding a spectrogram in pieces
        gives the same frames as one :meth:`spectrum_forward` call.
        """
        return self._map_spectrum(noisy, caches, False, None)

    def _map_spectrum(self, noisy: Spectrogram, caches, train, rng):
        feats = features_3ch(noisy)
        if feats.dtype != self.dtype:
            feats = Tensor(feats.data.astype(self.dtype))
        tokens, skips = self.encode(feats)
        latent = self.freq_transformer_forward(tokens)
        if caches is None:
            latent = self.tcn_forward(latent, train=train, rng=rng)
            return self.decode_and_combine(latent, skips)
        latent, caches = self.tcn_forward(latent, caches)
        return (*self.decode_and_combine(latent, skips), caches)

    def forward(self, noisy_wave, train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, Spectrogram]:
        wave = np.asarray(noisy_wave, dtype=self.dtype)
        cfg = self.config
        spec = stft(wave, cfg.fft_size, cfg.hop, cfg.sample_rate)
        enhanced = self.spectrum_forward(spec, train=train, rng=rng)
        return istft(enhanced, wave.size), enhanced

    __call__ = forward

    def enhance(self, noisy_wave) -> np.ndarray:
        wave, _ = self.forward(noisy_wave)
        return wave.data


# -- construction -----------------------------------------------------------

def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map; a pure function of the config."""
    cfg = config
    d = cfg.d
    shapes: dict[str, tuple[int, ...]] = {}

    def cna(prefix, c_in, c_out, k, transposed=False, act=True):
        shapes[f"{prefix}.conv.weight"] = (c_in, c_out, k) if transposed else (c_out, c_in, k)
        shapes[f"{prefix}.conv.bias"] = (c_out,)
        if act:
            shapes[f"{prefix}.norm.gain"] = (c_out,)
            shapes[f"{prefix}.norm.shift"] = (c_out,)
            shapes[f"{prefix}.act.slope"] = (c_out,)

    def lin(prefix, d_in, d_out):
        shapes[f"{prefix}.weight"] = (d_out, d_in)
        shapes[f"{prefix}.bias"] = (d_out,)

    def pwc(prefix, c_in, c_out):
        shapes[f"{prefix}.weight"] = (c_out, c_in, 1)
        shapes[f"{prefix}.bias"] = (c_out,)

    widths = (3,) + tuple(cfg.enc_channels)
    lengths = cfg.encoder_lengths
    for i, k in enumerate(cfg.enc_kernels):
        cna(f"full_encoder.cna{i}", widths[i], widths[i + 1], k)
    lin("full_encoder.gconv", lengths[-1], cfg.n_full)

    for g, (n_tok, l_sub) in enumerate(zip(cfg.group_tokens, cfg.sub_lengths)):
        cna(f"sub_encoder.group{g}", 1, d, cfg.sub_kernel)
        lin(f"sub_encoder.group{g}.proj", l_sub, n_tok)

    for i in range(cfg.n_layers):
        pre = f"transformer.layer{i}"
        for name in ("q", "k", "v", "o"):
            lin(f"{pre}.attn.{name}", d, d)
        shapes[f"{pre}.norm1.gain"] = (d,)
        shapes[f"{pre}.norm1.shift"] = (d,)
        lin(f"{pre}.ffn.fc1", d, cfg.ffn_mult * d)
        shapes[f"{pre}.ffn.act.slope"] = (cfg.ffn_mult * d,)
        lin(f"{pre}.ffn.fc2", cfg.ffn_mult * d, d)
        shapes[f"{pre}.norm2.gain"] = (d,)
        shapes[f"{pre}.norm2.shift"] = (d,)

    for i in range(cfg.tcn_layers):
        cna(f"tcn.layer{i}", d, d, cfg.tcn_kernel)

    depth = len(cfg.enc_kernels)
    lin("full_decoder.gconv", cfg.n_full, lengths[-1])
    out_widths = (2,) + tuple(cfg.enc_channels[:-1])
    for j in range(depth):
        level = depth - 1 - j
        pwc(f"skip_gates.full{level}.proj", widths[level + 1], widths[level + 1])
        shapes[f"skip_gates.full{level}.gate"] = (widths[level + 1],)
        cna(f"full_decoder.up{j}", widths[level + 1], out_widths[level], cfg.enc_kernels[level],
            transposed=True, act=j < depth - 1)

    for g, (size, n_tok, l_sub) in enumerate(zip(cfg.bands, cfg.group_tokens, cfg.sub_lengths)):
        lin(f"sub_decoder.group{g}.fc_in", n_tok, l_sub)
        pwc(f"skip_gates.sub{g}.proj", d, d)
        shapes[f"skip_gates.sub{g}.gate"] = (d,)
        pwc(f"sub_decoder.group{g}.pwc", d, 2)
        lin(f"sub_decoder.group{g}.fc_out", l_sub, size)

    kf, kt = cfg.combine_kernel
    shapes["combine.conv.weight"] = (2, 4, kf, kt)
    shapes["combine.conv.bias"] = (2,)
    shapes["combine.gate"] = (2,)
    return shapes


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if ".conv.weight" in name and len(shape) == 3 and name.startswith("full_decoder.up"):
        return shape[0] * shape[2]  # transposed conv: [C_in, C_out, K]
    if len(shape) == 1:
        return 0
    return int(np.prod(shape[1:]))


def build_model(config: ModelConfig | None = None, seed: int = 0) -> Model:
    """Fresh parameters: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Norm gains start at 1, shifts at 0, PReLU slopes at ``prelu_init`` and all
    gate logits at 0 (sigmoid 0.5).
    """
    config = (config or ModelConfig()).validate()
    rng = np.random.default_rng(seed)
    shapes = parameter_shapes(config)
    params: dict[str, ParamLeaf] = {}
    weight_fan: dict[str, int] = {}
    for name, shape in shapes.items():
        if name.endswith(".weight"):
            weight_fan[name[: -len(".weight")]] = _fan_in(name, shape)
    for name, shape in shapes.items():
        if name.endswith(".gain"):
            data = np.ones(shape)
        elif name.endswith((".shift", ".gate")):
            data = np.zeros(shape)
        elif name.endswith(".slope"):
            data = np.full(shape, config.prelu_init)
        else:
            owner = name.rsplit(".", 1)[0]
            bound = 1.0 / np.sqrt(max(weight_fan[owner], 1))
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = ParamLeaf(name, Tensor(data))
    return Model(config, params)

