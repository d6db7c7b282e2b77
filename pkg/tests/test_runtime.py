import numpy as np
import pytest

from drofit.errors import StreamError
from drofit.model import ModelConfig, build_model
from drofit.runtime import (
    algorithmic_latency,
    create_stream,
    equivalence_check,
    flush,
    push_samples,
    stream_wave,
)

PATTERNS = [1, 7, 32, 97, 1000, [3, 61, 2, 128]]


@pytest.fixture(scope="module")
def model():
    return build_model(ModelConfig.tiny(), seed=11)


@pytest.mark.parametrize("chunk_frames", [1, 2, 5])
def test_streaming_matches_offline(model, chunk_frames):
    wave = np.random.default_rng(chunk_frames).standard_normal(1500) * 0.2
    assert equivalence_check(model, wave, PATTERNS, chunk_frames) < 1e-10


@pytest.mark.parametrize("length", [1, 2, 31, 32, 33, 64, 65])
def test_short_streams_match_offline(model, length):
    wave = np.random.default_rng(length).standard_normal(length)
    assert equivalence_check(model, wave, [1, 5, length]) < 1e-10


def test_default_model_streams_exactly(default_model):
    wave = np.random.default_rng(0).standard_normal(4000) * 0.1
    assert equivalence_check(default_model, wave, [511, 4000]) < 1e-10


def test_float32_streaming_matches_within_1e_5(model):
    model32 = model.astype(np.float32)
    wave = np.random.default_rng(3).standard_normal(1200).astype(np.float32) * 0.2
    streamed = stream_wave(model32, wave, [13, 200])
    assert streamed.dtype == np.float32
    np.testing.assert_allclose(streamed, model32.enhance(wave), atol=1e-5)


def test_sub_hop_push_emits_nothing(default_model):
    state = create_stream(default_model)
    assert push_samples(state, np.zeros(511)).size == 0
    assert state.total_in == 511


def test_length_is_conserved(model):
    state = create_stream(model, 2)
    wave = np.random.default_rng(1).standard_normal(1001)
    emitted = sum(push_samples(state, wave[i: i + 77]).size for i in range(0, 1001, 77))
    tail, report = flush(state)
    assert emitted + tail.size == 1001
    assert report.frames_processed == 1001 // 32 + 1


@pytest.mark.parametrize("chunk_frames", [1, 3])
def test_worst_case_delay_equals_algorithmic_latency(model, chunk_frames):
    state = create_stream(model, chunk_frames)
    emitted, delays = 0, []
    for i, v in enumerate(np.random.default_rng(0).standard_normal(700)):
        out = push_samples(state, [v])
        delays += [i + 1 - j for j in range(emitted, emitted + out.size)]
        emitted += out.size
    assert max(delays) == algorithmic_latency(model, chunk_frames)


def test_default_latency_is_one_window(default_model):
    assert algorithmic_latency(default_model) == 1024
    _, report = flush(create_stream(default_model))
    assert report.algorithmic_latency_ms == 64.0


def test_state_size_is_independent_of_stream_length(model):
    sizes = []
    for seconds in (1, 6):
        state = create_stream(model, 4)
        created = state.nbytes()
        wave = np.random.default_rng(seconds).standard_normal(16000 * seconds)
        for i in range(0, wave.size, 4000):
            push_samples(state, wave[i: i + 4000])
            assert state.nbytes() == created
        _, report = flush(state)
        assert report.state_bytes == created
        sizes.append(created)
    assert sizes[0] == sizes[1]


def test_state_size_depends_on_chunking_only(model):
    assert create_stream(model, 1).nbytes() < create_stream(model, 8).nbytes()


def test_per_frame_cost_does_not_grow(model):
    state = create_stream(model, 1)
    wave = np.random.default_rng(2).standard_normal(32 * 600)
    push_samples(state, wave)
    times = np.array(state.chunk_times)
    quarter = times.size // 4
    # Median is robust to scheduler hiccups; constant cost keeps the ratio near 1.
    assert np.median(times[-quarter:]) < 2.0 * np.median(times[:quarter])


def test_flush_lifecycle(model):
    state = create_stream(model)
    tail, report = flush(state)
    assert tail.size == 0 and report.frames_processed == 0
    with pytest.raises(StreamError):
        flush(state)
    with pytest.raises(StreamError):
        push_samples(state, np.zeros(3))


def test_report_fields(model):
    state = create_stream(model, 2)
    push_samples(state, np.random.default_rng(0).standard_normal(1600))
    _, report = flush(state)
    assert report.real_time_factor > 0
    assert report.chunks >= 1 and report.chunk_ms_max >= report.chunk_ms_mean > 0
    assert set(report.as_dict()) >= {"algorithmic_latency_samples", "state_bytes", "real_time_factor"}


def test_non_causal_model_is_refused():
    model = build_model(ModelConfig.tiny(causal=False), 0)
    with pytest.raises(StreamError, match="causal"):
        create_stream(model)
    with pytest.raises(StreamError, match="causal"):
        equivalence_check(model, np.zeros(100), [1])


def test_bad_arguments(model):
    with pytest.raises(StreamError):
        create_stream(model, 0)
    with pytest.raises(StreamError):
        stream_wave(model, np.zeros(10), [0])
