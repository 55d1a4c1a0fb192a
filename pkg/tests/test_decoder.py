import numpy as np
import pytest

from helpers import lstm_oracle, randomize
from parkgraph.autodiff import ShapeError
from parkgraph.decoder import decode, init_state
from parkgraph.nn import LstmParams, lstm_step

K, HIDDEN = 5, 7


def make(seed, layers=1):
    rng = np.random.default_rng(seed)
    params = randomize(LstmParams.init(rng, K, HIDDEN, embed=4, calendar_embed=3, layers=layers), rng)
    return params, rng


def inputs(rng, steps, batch=None):
    lead = () if batch is None else (batch,)
    return rng.standard_normal(lead + (HIDDEN,)), rng.random(lead + (K,)), rng.random(lead + (steps, 4))


def test_init_state_copies_code():
    params, rng = make(0)
    code = rng.standard_normal(HIDDEN)
    state = init_state(code, params)
    np.testing.assert_array_equal(state.h[0].data, code)
    np.testing.assert_array_equal(state.c[0].data, code)
    zero = init_state(np.zeros(HIDDEN), params)
    assert not zero.h[0].data.any() and not zero.c[0].data.any()
    assert len(init_state(code, make(0, layers=3)[0]).h) == 3


def test_init_state_rejects_wrong_length():
    params = LstmParams.init(np.random.default_rng(0), 27, 40)
    with pytest.raises(ShapeError):
        init_state(np.zeros(39), params)


def test_single_step_equals_lstm_step():
    params, rng = make(1)
    code, s, cal = inputs(rng, 1)
    out = decode(init_state(code, params), s, cal, 1, params).data
    _, _, s_next = lstm_step(code, code, s, cal[0], params)
    np.testing.assert_array_equal(out, s_next.data[None])


@pytest.mark.parametrize("seed", range(20))
def test_three_steps_match_hand_chained_oracle(seed):
    params, rng = make(seed)
    code, s_last, cal = inputs(rng, 3)
    h, c, s, expected = code, code, s_last, []
    for j in range(3):
        h, c, s = lstm_oracle(h, c, s, cal[j], params)
        expected.append(s)
    out = decode(init_state(code, params), s_last, cal, 3, params).data
    np.testing.assert_allclose(out, np.array(expected), rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_prefix_property(seed):
    params, rng = make(seed)
    code, s, cal = inputs(rng, 96)
    long = decode(init_state(code, params), s, cal, 96, params).data
    for n in (1, 4, 8, 33):
        np.testing.assert_array_equal(decode(init_state(code, params), s, cal, n, params).data, long[:n])


def test_same_parameters_decode_any_horizon():
    params, rng = make(2)
    code, s, cal = inputs(rng, 96, batch=3)
    for n in (1, 8, 96):
        out = decode(init_state(code, params), s, cal, n, params).data
        assert out.shape == (3, n, K)
        assert np.all((out > 0) & (out < 1))


def test_batched_decode_matches_single():
    params, rng = make(3)
    code, s, cal = inputs(rng, 6, batch=4)
    out = decode(init_state(code, params), s, cal, 6, params).data
    for b in range(4):
        single = decode(init_state(code[b], params), s[b], cal[b], 6, params).data
        np.testing.assert_allclose(out[b], single, rtol=0, atol=1e-13)


def test_teacher_forcing_feeds_ground_truth():
    params, rng = make(4)
    code, s, cal = inputs(rng, 5)
    teacher = rng.random((5, K))
    forced = decode(init_state(code, params), s, cal, 5, params, teacher=teacher).data
    h, c, inp = code, code, s
    for j in range(5):
        h, c, out = lstm_oracle(h, c, inp, cal[j], params)
        np.testing.assert_allclose(forced[j], out, rtol=0, atol=1e-12)
        inp = teacher[j]


def test_teacher_forced_step_ignores_own_predictions():
    """Changing an early output path cannot reach step j when teacher[j-1] is fed instead."""
    params, rng = make(5)
    code, s, cal = inputs(rng, 4)
    teacher = rng.random((4, K))
    base = decode(init_state(code, params), s, cal, 4, params, teacher=teacher).data
    free = decode(init_state(code, params), s, cal, 4, params).data
    assert not np.allclose(base[1:], free[1:])
    mask = np.array([True, False, True, True])
    mixed = decode(init_state(code, params), s, cal, 4, params, teacher=teacher, teacher_mask=mask).data
    np.testing.assert_array_equal(mixed[0], base[0])
    assert not np.allclose(mixed[1], base[1])
    # step 1 consumed the model's own step-0 output, which equals the teacher-run step-0 output,
    # so mixed[1] must equal a free run's step 1
    np.testing.assert_array_equal(mixed[1], free[1])


def test_multilayer_uses_top_cell_for_output():
    params, rng = make(6, layers=2)
    code, s, cal = inputs(rng, 2)
    out = decode(init_state(code, params), s, cal, 2, params).data
    assert out.shape == (2, K) and np.all((out > 0) & (out < 1))
    shallow = make(6)[0]
    single = decode(init_state(code, shallow), s, cal, 2, shallow).data
    assert not np.allclose(out, single)


def test_decode_argument_errors():
    params, rng = make(7)
    code, s, cal = inputs(rng, 3)
    state = init_state(code, params)
    with pytest.raises(ShapeError):
        decode(state, s, cal, 4, params)
    with pytest.raises(ValueError):
        decode(state, s, cal, 0, params)
    with pytest.raises(ShapeError):
        decode(state, s, cal, 3, params, teacher=np.zeros((1, K)))
