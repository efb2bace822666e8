import numpy as np
import pytest
from hypothesis import given, strategies as st

from issma.comms import RSC_CODE, rsc_encode
from issma.decoder import TRELLIS, Trellis, decode
from issma.errors import ShapeError
from oracles import maxlog_codeword_search

seeds = st.integers(0, 2**32 - 1)


def test_trellis_matches_encoder_steps():
    t = Trellis.from_code(RSC_CODE)
    assert t.num_states == 4
    for s in range(4):
        for u in range(2):
            nxt, p = RSC_CODE.step(s, u)
            assert t.next_state[s, u] == nxt and t.parity[s, u] == p
    frm, to, u, p = t.edges()
    assert len(frm) == 8
    assert np.array_equal(np.bincount(to, minlength=4), [2, 2, 2, 2])


@given(st.integers(1, 9), seeds)
def test_maxlog_matches_exhaustive_codeword_search(T, seed):
    llr = 3 * np.random.default_rng(seed).standard_normal(2 * T)
    ext, post_info, bits = decode(llr)
    best, post = maxlog_codeword_search(llr)
    assert np.array_equal(bits, best)
    assert np.allclose(post_info, post[0::2], atol=1e-9)
    assert np.allclose(ext + llr, post, atol=1e-9)


@given(st.integers(1, 60), seeds)
def test_noiseless_codeword_is_recovered(T, seed):
    rng = np.random.default_rng(seed)
    u = rng.integers(0, 2, T)
    llr = 4.0 * (2 * rsc_encode(u) - 1)
    assert np.array_equal(decode(llr)[2], u)


@given(st.floats(0.01, 100), seeds)
def test_scaling_invariance(a, seed):
    llr = np.random.default_rng(seed).standard_normal(24)
    e1, p1, b1 = decode(llr)
    e2, p2, b2 = decode(a * llr)
    assert np.allclose(e2, a * e1, rtol=1e-9, atol=1e-9)
    assert np.allclose(p2, a * p1, rtol=1e-9, atol=1e-9)


def test_batched_frames(rng):
    llr = rng.standard_normal((3, 2, 20))
    e, p, b = decode(llr)
    assert e.shape == (3, 2, 20) and p.shape == (3, 2, 10)
    for i in range(3):
        for j in range(2):
            assert np.allclose(decode(llr[i, j])[0], e[i, j])


def test_awgn_coding_gain():
    rng = np.random.default_rng(7)
    u = rng.integers(0, 2, (20, 1000))
    x = 2.0 * rsc_encode(u) - 1
    ebn0 = 10 ** 0.4
    sigma2 = 1 / (2 * 0.5 * ebn0)
    y = x + np.sqrt(sigma2) * rng.standard_normal(x.shape)
    ber = np.mean(decode(2 * y / sigma2)[2] != u)
    assert ber < 5e-3  # uncoded BPSK at 4 dB is about 1.25e-2


def test_shape_errors():
    with pytest.raises(ShapeError):
        decode(np.zeros(5))
    with pytest.raises(ShapeError):
        decode(np.zeros(0))
    assert TRELLIS.num_states == 4
