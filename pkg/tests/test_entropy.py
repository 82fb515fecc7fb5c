import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajcodec.entropy import CoderState, EntropyDecodeError, entropy_decode, entropy_encode


def test_forty_zeros_compress_below_eight_bytes():
    payload = entropy_encode([np.zeros(40, dtype=int)])
    # oracle run: 5 flush bytes plus one byte of coded zero flags
    assert len(payload) == 6
    assert [f.tolist() for f in entropy_decode(payload, 1, 40)] == [[0] * 40]


def test_zero_stream_below_one_bit_per_symbol():
    payload = entropy_encode([np.zeros(40, dtype=int)] * 1000)
    assert 8 * len(payload) < 40 * 1000
    assert len(payload) == 8


def test_empty_sequence_is_flush_only():
    payload = entropy_encode([])
    assert payload == bytes(5)
    assert entropy_decode(payload, 0, 40) == []


def test_round_trip_1000_frames(rng):
    frames = [np.round(rng.laplace(0, 4, 40)).astype(np.int64) for _ in range(1000)]
    decoded = entropy_decode(entropy_encode(frames), 1000, 40)
    assert all(np.array_equal(a, b) for a, b in zip(frames, decoded))


def test_rate_grows_with_spread(rng):
    sizes = []
    for scale in (0.3, 1, 3, 10):
        frames = [np.round(rng.normal(0, scale, 40)).astype(int) for _ in range(200)]
        sizes.append(len(entropy_encode(frames)))
    assert sizes == sorted(sizes)


def test_extreme_magnitudes():
    frame = np.array([2**31 - 1, -(2**31 - 1), 1, -1, 0, 123456, -7, 2**20], dtype=np.int64)
    assert np.array_equal(entropy_decode(entropy_encode([frame]), 1, 8)[0], frame)


def test_state_continues_adaptation():
    enc_state, dec_state = CoderState(), CoderState()
    a = [np.array([1, 0, -2, 0])]
    b = [np.array([0, 0, 3, 0])]
    pa, pb = entropy_encode(a, enc_state), entropy_encode(b, enc_state)
    assert np.array_equal(entropy_decode(pa, 1, 4, dec_state)[0], a[0])
    assert np.array_equal(entropy_decode(pb, 1, 4, dec_state)[0], b[0])
    assert enc_state.counts0 == dec_state.counts0 and enc_state.counts1 == dec_state.counts1


def test_truncated_payload_raises(rng):
    frames = [rng.integers(-50, 50, 40) for _ in range(50)]
    payload = entropy_encode(frames)
    with pytest.raises(EntropyDecodeError):
        entropy_decode(payload[: len(payload) // 2], 50, 40)


def test_corruption_detected_or_mismatch(rng):
    frames = [rng.integers(-20, 20, 40) for _ in range(50)]
    payload = bytearray(entropy_encode(frames))
    payload[len(payload) // 2] ^= 0x5A
    try:
        decoded = entropy_decode(bytes(payload), 50, 40)
    except EntropyDecodeError:
        return
    assert not all(np.array_equal(a, b) for a, b in zip(frames, decoded))


def test_odd_frame_length_rejected():
    with pytest.raises(ValueError):
        entropy_encode([np.zeros(3, dtype=int)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(-(2**20), 2**20), min_size=6, max_size=6), max_size=30))
def test_round_trip_property(frames):
    payload = entropy_encode(frames)
    decoded = entropy_decode(payload, len(frames), 6)
    assert [d.tolist() for d in decoded] == frames


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 400))
def test_probabilities_stay_valid(n):
    state = CoderState()
    entropy_encode([np.zeros(2, dtype=int)] * n, state)
    for ctx in range(state.context_count):
        p = state.probability_of_zero(ctx)
        assert 0 < p < 1
        assert state.counts0[ctx] + state.counts1[ctx] <= 2**15 + 1
