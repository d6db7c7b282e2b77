import numpy as np
import pytest

from drofit.errors import ConfigError, DataError, ShapeError, StreamError
from drofit.model import (
    ModelConfig,
    build_attention_mask,
    build_model,
    expected_pairs,
    load_checkpoint,
    parameter_shapes,
    read_header,
    save_checkpoint,
    window_block,
)
from drofit.numerics import Tensor, count_macs, grad_check
from drofit.spectral import features_3ch, stft

# Regression constants for the default configuration.
DEFAULT_PARAMS = 157_617


def random_features(config, frames, rng):
    wave = rng.standard_normal(config.hop * (frames - 1)) * 0.1
    return features_3ch(stft(wave, config.fft_size, config.hop))


def perturb_frame(tokens: np.ndarray, t: int, rng) -> Tensor:
    out = tokens.copy()
    out[t] += rng.standard_normal(out[t].shape)
    return Tensor(out)


# -- config ----------------------------------------------------------------------

def test_default_derived_sizes():
    cfg = ModelConfig()
    assert (cfg.bins, cfg.n_full, cfg.n_sub, cfg.seq_len) == (513, 8, 16, 24)
    assert cfg.group_tokens == (1, 1, 2, 4, 8)
    assert cfg.encoder_lengths == (513, 257, 129, 64)
    assert cfg.receptive_field == 15


def test_config_round_trips_through_dict():
    cfg = ModelConfig.tiny(dropout=0.0)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("changes, fragment", [
    ({"heads": 3}, "divisible"),
    ({"bands": (32, 32, 64, 128, 256)}, "sum to"),
    ({"sub_tokens": (1, 1, 2, 4, 7)}, "sub-band tokens"),
    ({"dropout": 1.0}, "dropout"),
    ({"fft_size": 1000}, "power of two"),
])
def test_invalid_config_names_the_violation(changes, fragment):
    with pytest.raises(ConfigError, match=fragment):
        build_model(ModelConfig().replace(**changes))


def test_unknown_config_field():
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"depth": 3})


# -- construction ------------------------------------------------------------------

def test_default_parameter_count():
    shapes = parameter_shapes(ModelConfig())
    assert sum(int(np.prod(s)) for s in shapes.values()) == DEFAULT_PARAMS


def test_parameter_count_is_a_function_of_config(default_model):
    assert default_model.num_params() == DEFAULT_PARAMS
    assert build_model(ModelConfig(), seed=7).num_params() == DEFAULT_PARAMS


def test_same_seed_builds_identical_parameters():
    a, b = build_model(ModelConfig.tiny(), 3), build_model(ModelConfig.tiny(), 3)
    for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
        assert na == nb
        np.testing.assert_array_equal(ta.data, tb.data)
    c = build_model(ModelConfig.tiny(), 4)
    assert not np.array_equal(a.p("combine.conv.weight").data, c.p("combine.conv.weight").data)


def test_initial_gates_are_one_half(tiny_model):
    for name in tiny_model.gate_names():
        np.testing.assert_array_equal(tiny_model.gate(name).data, 0.5)


def test_parameter_groups_present(default_model):
    prefixes = {n.split(".")[0] for n, _ in default_model.named_tensors()}
    assert prefixes == {"full_encoder", "sub_encoder", "transformer", "tcn", "full_decoder",
                        "sub_decoder", "skip_gates", "combine"}
    assert any(n.startswith("transformer.layer3.") for n, _ in default_model.named_tensors())
    assert any(n.startswith("tcn.layer2.") for n, _ in default_model.named_tensors())


# -- attention mask -------------------------------------------------------------------

def test_default_mask_pairs():
    mask = build_attention_mask(ModelConfig())
    assert mask.size == 24
    assert mask.pairs == 8 * 8 + 2 * 8 * 16 + 16 * 8 == 448
    assert mask.pairs == expected_pairs(ModelConfig())
    assert mask.matrix[:8, 8:].all() and mask.matrix[8:, :8].all()
    assert mask.matrix.any(axis=1).all()


def test_unwindowed_mask_is_full():
    mask = build_attention_mask(ModelConfig(w_full=None, w_sub=None))
    assert mask.pairs == 576


def test_sub_band_block_is_banded():
    block = build_attention_mask(ModelConfig()).matrix[8:, 8:]
    assert (block.sum(axis=1) == 8).all()
    i, j = np.nonzero(block)
    # Interior rows are centred; edge rows slide inward, so spans never exceed w.
    assert np.abs(i - j).max() <= 7
    assert block[8, 4:12].all() and not block[8, 3] and not block[8, 12]


@pytest.mark.parametrize("n, w", [(1, 8), (5, 2), (16, 8), (7, 3), (4, None)])
def test_window_block_row_counts(n, w):
    span = n if w is None else min(w, n)
    assert (window_block(n, w).sum(axis=1) == span).all()


@pytest.mark.parametrize("cfg", [ModelConfig(), ModelConfig.tiny(), ModelConfig(w_full=3, w_sub=30)])
def test_mask_pairs_match_cost_formula(cfg):
    assert build_attention_mask(cfg).pairs == expected_pairs(cfg)


# -- encoders ---------------------------------------------------------------------------

def test_default_encoder_shapes(default_model, rng):
    feats = random_features(default_model.config, 157, rng)
    full, skips = default_model.full_encoder_forward(feats)
    assert full.shape == (157, 8, 32)
    assert [s.shape[2] for s in skips] == [257, 129, 64]
    sub, sub_skips = default_model.sub_encoder_forward(feats)
    assert sub.shape == (157, 16, 32)
    assert len(sub_skips) == 5


def test_encoders_are_frame_independent(tiny_model, rng):
    feats = random_features(tiny_model.config, 12, rng)
    perm = rng.permutation(12)
    tokens, _ = tiny_model.encode(feats)
    permuted, _ = tiny_model.encode(Tensor(feats.data[:, :, perm]))
    np.testing.assert_allclose(permuted.data, tokens.data[perm], atol=1e-12)


def test_zero_input_gives_identical_frames(tiny_model):
    tokens, _ = tiny_model.encode(Tensor(np.zeros((3, 33, 5))))
    np.testing.assert_array_equal(tokens.data, np.broadcast_to(tokens.data[0], tokens.shape))


def test_sub_groups_are_independent(tiny_model, rng):
    cfg = tiny_model.config
    feats = random_features(cfg, 6, rng)
    base, _ = tiny_model.sub_encoder_forward(feats)
    changed = feats.data.copy()
    changed[0, 4:8] = 0.0  # third band (bins 4..7)
    out, _ = tiny_model.sub_encoder_forward(Tensor(changed))
    diff = np.abs(out.data - base.data).max(axis=(0, 2))
    token_group = np.repeat(np.arange(5), cfg.group_tokens)
    assert (diff[token_group == 2] > 0).all()
    assert (diff[token_group != 2] == 0).all()


def test_encoder_rejects_wrong_bins(tiny_model):
    with pytest.raises(ShapeError):
        tiny_model.full_encoder_forward(Tensor(np.zeros((3, 32, 4))))


# -- transformer --------------------------------------------------------------------------

def test_transformer_is_frame_equivariant(tiny_model, rng):
    x = rng.standard_normal((9, 12, 8))
    perm = rng.permutation(9)
    out = tiny_model.freq_transformer_forward(Tensor(x)).data
    np.testing.assert_allclose(tiny_model.freq_transformer_forward(Tensor(x[perm])).data, out[perm],
                               atol=1e-12)


def test_without_cross_blocks_full_tokens_ignore_sub_tokens(tiny_model, rng):
    mask = build_attention_mask(tiny_model.config, cross=False)
    x = rng.standard_normal((3, 12, 8))
    y = x.copy()
    y[:, 4:] += rng.standard_normal((3, 8, 8))
    a = tiny_model.freq_transformer_forward(Tensor(x), mask).data
    b = tiny_model.freq_transformer_forward(Tensor(y), mask).data
    np.testing.assert_array_equal(a[:, :4], b[:, :4])
    # With the cross blocks the full-band tokens do see the change.
    assert not np.allclose(tiny_model.freq_transformer_forward(Tensor(x)).data[:, :4],
                           tiny_model.freq_transformer_forward(Tensor(y)).data[:, :4])


def test_attention_macs_match_pair_count(default_model, rng):
    frames = 5
    with count_macs() as counter:
        default_model.freq_transformer_forward(Tensor(rng.standard_normal((frames, 24, 32))))
    per_scope = counter.as_dict()
    for i in range(4):
        attn = per_scope[f"transformer.layer{i}.attn"]
        assert attn["attn_qk"] == attn["attn_av"] == 448 * frames * 32


def test_transformer_rejects_wrong_length(tiny_model):
    with pytest.raises(ShapeError):
        tiny_model.freq_transformer_forward(Tensor(np.zeros((2, 11, 8))))


# -- TCN ----------------------------------------------------------------------------------

def test_tcn_is_causal(default_model, rng):
    x = rng.standard_normal((30, 24, 32))
    base = default_model.tcn_forward(Tensor(x)).data
    out = default_model.tcn_forward(perturb_frame(x, 20, rng)).data
    np.testing.assert_array_equal(out[:20], base[:20])
    assert not np.allclose(out[20], base[20])


def test_tcn_receptive_field_is_15(default_model, rng):
    x = rng.standard_normal((40, 24, 32))
    base = default_model.tcn_forward(Tensor(x)).data
    # Frame 25 sees frames 11..25; frame 10 lies outside, frame 11 inside.
    outside = default_model.tcn_forward(perturb_frame(x, 10, rng)).data
    np.testing.assert_array_equal(outside[25], base[25])
    inside = default_model.tcn_forward(perturb_frame(x, 11, rng)).data
    assert not np.allclose(inside[25], base[25])


def test_tcn_shares_weights_across_tokens(tiny_model, rng):
    x = rng.standard_normal((6, 12, 8))
    perm = rng.permutation(12)
    out = tiny_model.tcn_forward(Tensor(x)).data
    np.testing.assert_allclose(tiny_model.tcn_forward(Tensor(x[:, perm])).data, out[:, perm], atol=1e-12)


def test_tcn_chunked_with_caches_matches_offline(default_model, rng):
    x = rng.standard_normal((20, 24, 32))
    offline = default_model.tcn_forward(Tensor(x)).data
    caches, pieces = default_model.init_tcn_caches(), []
    for start in range(0, 20, 7):
        out, caches = default_model.tcn_forward(Tensor(x[start: start + 7]), caches)
        pieces.append(out.data)
    np.testing.assert_allclose(np.concatenate(pieces), offline, atol=1e-12)


def test_tcn_rejects_bad_cache(tiny_model):
    with pytest.raises(StreamError):
        tiny_model.tcn_forward(Tensor(np.zeros((2, 12, 8))), [np.zeros((12, 8, 1))])


# -- decoder, combine and end to end ------------------------------------------------------

def test_combine_gate_zero_returns_full_path(tiny_model, rng):
    feats = random_features(tiny_model.config, 6, rng)
    tokens, skips = tiny_model.encode(feats)
    full = tiny_model.full_decoder_forward(tokens[:, :4], skips.full).data
    tiny_model.gate_override = {"combine.gate": 0.0}
    try:
        real, imag = tiny_model.decode_and_combine(tokens, skips)
    finally:
        tiny_model.gate_override = {}
    np.testing.assert_array_equal(real.data, full[:, 0].T)
    np.testing.assert_array_equal(imag.data, full[:, 1].T)


def test_skip_gate_endpoints(tiny_model, rng):
    feats = random_features(tiny_model.config, 4, rng)
    tokens, skips = tiny_model.encode(feats)
    latent = tokens[:, :4]
    zeroed = [Tensor(np.zeros(s.shape)) for s in skips.full]
    names = [n for n in tiny_model.gate_names() if n.startswith("skip_gates.full")]
    tiny_model.gate_override = {n: 0.0 for n in names}
    try:
        # Closed gates: skip content is irrelevant.
        np.testing.assert_array_equal(tiny_model.full_decoder_forward(latent, skips.full).data,
                                      tiny_model.full_decoder_forward(latent, zeroed).data)
        tiny_model.gate_override = {n: 1.0 for n in names}
        opened = tiny_model.full_decoder_forward(latent, skips.full).data
    finally:
        tiny_model.gate_override = {}
    assert not np.allclose(opened, tiny_model.full_decoder_forward(latent, zeroed).data)


def test_zero_decoder_weights_give_finite_bias_field(rng):
    model = build_model(ModelConfig.tiny(), 0)
    for name, t in model.named_tensors():
        if name.startswith(("full_decoder", "sub_decoder", "combine")) and name.endswith(".weight"):
            t.data = np.zeros_like(t.data)
    model.gate_override = {"combine.gate": 1.0}
    spec = model.spectrum_forward(stft(rng.standard_normal(400), 64, 32))
    assert np.isfinite(spec.real.data).all() and np.isfinite(spec.imag.data).all()
    np.testing.assert_allclose(spec.real.data, model.p("combine.conv.bias").data[0])


def test_direct_mapping_of_silence_is_not_zero(tiny_model):
    wave, spec = tiny_model.forward(np.zeros(640))
    assert np.abs(spec.real.data).max() > 0


def test_forward_is_length_preserving_and_deterministic(default_model, rng):
    wave = rng.standard_normal(80000) * 0.1
    a, spec = default_model.forward(wave)
    assert a.shape == (80000,)
    assert (spec.bins, spec.frames) == (513, 157)
    np.testing.assert_array_equal(default_model.enhance(wave), a.data)


@pytest.mark.parametrize("length", [1, 31, 33, 1000])
def test_tiny_forward_any_length(tiny_model, rng, length):
    assert tiny_model.enhance(rng.standard_normal(length)).shape == (length,)


def test_end_to_end_gradient_on_few_parameters(rng):
    model = build_model(ModelConfig.tiny(dropout=0.0), 2)
    wave = rng.standard_normal(32 * 7) * 0.1
    chosen = [model.p(n) for n in ("full_encoder.cna0.conv.weight", "transformer.layer0.attn.q.weight",
                                   "tcn.layer0.conv.weight", "combine.gate")]
    assert grad_check(lambda: model.forward(wave)[0], chosen) < 1e-4


# -- checkpoints ---------------------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_identical(tmp_path, rng):
    model = build_model(ModelConfig.tiny(), 5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, step=12, optimizer={"m.x": np.arange(3.0)}, meta={"note": "x"})
    ckpt = load_checkpoint(path)
    assert ckpt.step == 12 and ckpt.meta == {"note": "x"}
    np.testing.assert_array_equal(ckpt.optimizer["m.x"], np.arange(3.0))
    for (na, ta), (nb, tb) in zip(model.named_tensors(), ckpt.model.named_tensors()):
        assert na == nb
        np.testing.assert_array_equal(ta.data, tb.data)
    wave = rng.standard_normal(500)
    np.testing.assert_array_equal(model.enhance(wave), ckpt.model.enhance(wave))
    header = read_header(path)
    assert header["padding"] == model.config.padding_ledger()
    assert header["config"]["fft_size"] == 64


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build_model(ModelConfig.tiny(), 0))
    path.write_bytes(path.read_bytes()[:-40])
    with pytest.raises(DataError):
        load_checkpoint(path)
