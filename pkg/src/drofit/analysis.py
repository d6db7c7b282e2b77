"""Parameter and multiply-accumulate accounting.

MAC convention: one multiply-accumulate is one MAC.  Counted: every
convolution, transposed convolution and linear map (bias adds excluded), the
attention score (QK^T) and weighting (AV) products over attended pairs only,
and the attention projections.  Not counted: softmax, normalization,
activations, gating, residual adds, STFT/iSTFT.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import Model, ModelConfig, expected_pairs
from .model.config import round_half_up
from .numerics import count_macs as _instrument

# Reference constants as published: (params in millions, GMACs per 5 s utterance).
PUBLISHED_REFERENCE = {
    "DroFiT": (0.105, 1.86),
    "DCU-Net": (2.808, 32.23),
    "SMoLnet-T": (0.187, 18.64),
}
PUBLISHED_CLAIMED_RATIOS = {"DCU-Net": {"macs": 17.3, "params": 26.7}, "SMoLnet-T": {"macs": 10.0}}
REFERENCE_FRAMES = 157  # 5 s at 16 kHz with hop 512


@dataclass
class CostRow:
    name: str
    params: int = 0
    macs: int = 0
    kinds: dict[str, int] = field(default_factory=dict)


@dataclass
class CostReport:
    rows: list[CostRow]
    frames: int
    attention: dict[str, float] = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    def row(self, name: str) -> CostRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_delimited(self, delimiter: str = "\t") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(["layer", "params", "macs"])
        for r in self.rows:
            writer.writerow([r.name, r.params, r.macs])
        writer.writerow(["TOTAL", self.total_params, self.total_macs])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "frames": self.frames,
            "mac_convention": __doc__.split("MAC convention: ", 1)[1].strip().replace("\n", " "),
            "rows": [{"name": r.name, "params": r.params, "macs": r.macs, "kinds": r.kinds} for r in self.rows],
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "attention_complexity": self.attention,
        }, indent=2)


# -- closed forms ------------------------------------------------------------------

def closed_form_macs(config: ModelConfig, frames: int) -> dict[str, dict[str, int]]:
    """MACs per instrumentation scope and kernel kind for ``frames`` STFT frames."""
    cfg, T, d = config, frames, config.d
    out: dict[str, dict[str, int]] = defaultdict(dict)
    lengths = cfg.encoder_lengths
    widths = (3,) + tuple(cfg.enc_channels)
    depth = len(cfg.enc_kernels)
    for i, k in enumerate(cfg.enc_kernels):
        out[f"full_encoder.cna{i}"]["conv1d"] = T * widths[i + 1] * widths[i] * k * lengths[i + 1]
    out["full_encoder.gconv"]["linear"] = T * d * lengths[-1] * cfg.n_full
    for g, (n_tok, l_sub) in enumerate(zip(cfg.group_tokens, cfg.sub_lengths)):
        out[f"sub_encoder.group{g}"]["conv1d"] = T * d * cfg.sub_kernel * l_sub
        out[f"sub_encoder.group{g}.proj"]["linear"] = T * d * l_sub * n_tok
    L, pairs = cfg.seq_len, expected_pairs(cfg)
    for i in range(cfg.n_layers):
        out[f"transformer.layer{i}.attn"] = {"linear": 4 * T * L * d * d,
                                             "attn_qk": T * pairs * d, "attn_av": T * pairs * d}
        out[f"transformer.layer{i}.ffn"]["linear"] = 2 * T * L * d * cfg.ffn_mult * d
    for i in range(cfg.tcn_layers):
        out[f"tcn.layer{i}"]["conv1d"] = L * d * d * cfg.tcn_kernel * T
    out["full_decoder.gconv"]["linear"] = T * d * cfg.n_full * lengths[-1]
    out_widths = (2,) + tuple(cfg.enc_channels[:-1])
    for j in range(depth):
        level = depth - 1 - j
        c = widths[level + 1]
        out[f"skip_gates.full{level}"]["conv1d"] = T * c * c * lengths[level + 1]
        out[f"full_decoder.up{j}"]["conv1d_transposed"] = (
            T * c * out_widths[level] * cfg.enc_kernels[level] * lengths[level + 1])
    for g, (size, n_tok, l_sub) in enumerate(zip(cfg.bands, cfg.group_tokens, cfg.sub_lengths)):
        out[f"sub_decoder.group{g}.fc_in"]["linear"] = T * d * n_tok * l_sub
        out[f"skip_gates.sub{g}"]["conv1d"] = T * d * d * l_sub
        out[f"sub_decoder.group{g}.pwc"]["conv1d"] = T * 2 * d * l_sub
        out[f"sub_decoder.group{g}.fc_out"]["linear"] = T * 2 * l_sub * size
    kf, kt = cfg.combine_kernel
    out["combine.conv"]["conv2d"] = 2 * 4 * kf * kt * cfg.bins * T
    return {s: dict(k) for s, k in out.items()}


def instrumented_macs(model: Model, frames: int, seed: int = 0) -> dict[str, dict[str, int]]:
    """Run a forward pass on ``frames`` frames of noise and read the kernel counters."""
    cfg = model.config
    wave = np.random.default_rng(seed).standard_normal((frames - 1) * cfg.hop + cfg.hop // 2).astype(model.dtype)
    with _instrument() as counter:
        model.forward(wave)
    return counter.as_dict()


_LEAVES = {"weight", "bias", "gain", "shift", "slope", "gate"}
_BLOCKS = {"conv", "norm", "act"}


def _param_group(name: str, scopes: list[str]) -> str:
    owner = max((s for s in scopes if name.startswith(s + ".")), key=len, default=None)
    if owner is not None:
        return owner
    parts = name.split(".")
    while parts and (parts[-1] in _LEAVES or parts[-1] in _BLOCKS):
        parts.pop()
    return ".".join(parts)


def count_params(model: Model) -> dict[str, int]:
    """Parameter counts grouped by module path."""
    scopes = list(closed_form_macs(model.config, 1))
    groups: dict[str, int] = defaultdict(int)
    for name, tensor in model.named_tensors():
        groups[_param_group(name, scopes)] += tensor.data.size
    return dict(groups)


def count_macs(model: Model, frames: int = REFERENCE_FRAMES) -> CostReport:
    """Per-layer params and MACs plus the attention complexity block."""
    cfg = model.config
    macs = closed_form_macs(cfg, frames)
    params = count_params(model)
    rows = []
    for name in list(macs) + [n for n in params if n not in macs]:
        kinds = macs.get(name, {})
        rows.append(CostRow(name, params.get(name, 0), sum(kinds.values()), kinds))
    return CostReport(rows, frames, attention_complexity(
        cfg.bins, frames, cfg.d, cfg.k_full, cfg.k_sub, cfg.w_full, cfg.w_sub,
        n_full=cfg.n_full, n_sub=cfg.n_sub))


# -- attention complexity ---------------------------------------------------------------

def attention_complexity(F: int, T: int, d: int, k_F: float, k_S: float, w_F: int | None, w_S: int | None,
                         n_full: int | None = None, n_sub: int | None = None) -> dict[str, float]:
    """Operation counts (O-constants 1) of the four attention designs.

    eq1: joint time-frequency attention, F^2 T^2 d.
    eq2: frequency-only attention, F^2 T d.
    eq3: attention over the compressed token sequence, (F_F + F_S)^2 T d.
    eq4: banded attention, (F_F w_F + 2 F_F F_S + F_S w_S) T d.

    Token counts default to round(F/k) as in the model, so eq3 equals
    (1/k_F + 1/k_S)^2 F^2 T d whenever k divides F.  A window of ``None``
    spans its whole block.
    """
    if min(F, T, d) < 1 or k_F <= 0 or k_S <= 0:
        raise ConfigError("F, T, d must be >= 1 and compression ratios positive")
    ff = round_half_up(F / k_F) if n_full is None else n_full
    fs = round_half_up(F / k_S) if n_sub is None else n_sub
    if ff < 1 or fs < 1:
        raise ConfigError(f"compression leaves no tokens (F_F={ff}, F_S={fs})")
    wf = ff if w_F is None else min(w_F, ff)
    ws = fs if w_S is None else min(w_S, fs)
    eq1 = F * F * T * T * d
    eq2 = F * F * T * d
    eq3 = (ff + fs) ** 2 * T * d
    eq4 = (ff * wf + 2 * ff * fs + fs * ws) * T * d
    return {"eq1": eq1, "eq2": eq2, "eq3": eq3, "eq4": eq4, "F_F": ff, "F_S": fs,
            "eq1/eq2": eq1 / eq2, "eq2/eq3": eq2 / eq3, "eq3/eq4": eq3 / eq4, "eq2/eq4": eq2 / eq4}


# -- reference comparison ---------------------------------------------------------------

def compare_to_reference(report: CostReport | None = None) -> list[dict]:
    """Published totals, ratios against them and (optionally) our measured totals."""
    ours_p, ours_m = PUBLISHED_REFERENCE["DroFiT"]
    rows = []
    for name, (params_m, gmacs) in PUBLISHED_REFERENCE.items():
        row = {"model": name, "params_M": params_m, "GMACs": gmacs,
               "params_ratio_vs_DroFiT": params_m / ours_p, "macs_ratio_vs_DroFiT": gmacs / ours_m,
               "claimed": PUBLISHED_CLAIMED_RATIOS.get(name, {})}
        rows.append(row)
    if report is not None:
        scale = REFERENCE_FRAMES / report.frames
        measured_p = report.total_params / 1e6
        measured_m = report.total_macs * scale / 1e9
        rows.append({"model": "DroFiT (this build)", "params_M": measured_p, "GMACs": measured_m,
                     "params_ratio_vs_DroFiT": measured_p / ours_p, "macs_ratio_vs_DroFiT": measured_m / ours_m,
                     "delta_params_M": measured_p - ours_p, "delta_GMACs": measured_m - ours_m})
    return rows


def comparison_table(rows: list[dict], delimiter: str = "\t") -> str:
    buf = io.StringIO()
    cols = ["model", "params_M", "GMACs", "params_ratio_vs_DroFiT", "macs_ratio_vs_DroFiT"]
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([r["model"]] + [f"{r[c]:.4f}" for c in cols[1:]])
    return buf.getvalue()
