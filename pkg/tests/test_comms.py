import numpy as np
import pytest
from hypothesis import given, strategies as st

from issma.comms import (ChannelModel, Constellation, Interleaver, add_awgn, exponential_correlation,
                         gray_code, qam_map, rsc_encode, sample_channel, snr_db_to_sigma2)
from issma.errors import ModelError, ParamError, ShapeError
from oracles import rsc_encode_reference


@given(st.integers(1, 8))
def test_gray_neighbours_differ_in_one_bit(n):
    g = gray_code(n)
    assert sorted(g) == list(range(1 << n))
    assert all(bin(a ^ b).count("1") == 1 for a, b in zip(g[:-1], g[1:]))


@pytest.mark.parametrize("Q", [2, 4, 6, 8])
def test_qam_unit_energy_and_gray(Q):
    c = Constellation.qam(Q)
    assert c.size == 2 ** Q
    assert np.isclose(np.mean(np.abs(c.points) ** 2), 1.0)
    assert len(np.unique(np.round(c.points, 12))) == c.size
    # nearest neighbours (horizontal or vertical) differ in exactly one bit
    dmin = 2.0 / c.P
    for s in range(c.size):
        d = np.abs(c.points - c.points[s])
        for t in np.nonzero(np.isclose(d, dmin))[0]:
            assert np.sum(c.bits[s] != c.bits[t]) == 1


def test_qpsk_mapping_values():
    c = Constellation.qam(2)
    r = 1 / np.sqrt(2)
    assert np.allclose(c.points, [(-1 - 1j) * r, (-1 + 1j) * r, (1 - 1j) * r, (1 + 1j) * r])
    assert np.array_equal(c.bits, [[0, 0], [0, 1], [1, 0], [1, 1]])


def test_qam16_first_half_selects_real_axis():
    c = Constellation.qam(4)
    for s in range(16):
        same_re = [t for t in range(16) if np.all(c.bits[t, :2] == c.bits[s, :2])]
        assert np.allclose(c.points[same_re].real, c.points[s].real)


@given(st.sampled_from([2, 4, 6]), st.integers(0, 2**32 - 1))
def test_bits_roundtrip_and_flip(Q, seed):
    c = Constellation.qam(Q)
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, (3, 5 * Q))
    idx = c.bits_to_indices(bits)
    assert np.array_equal(c.indices_to_bits(idx), bits)
    assert np.allclose(qam_map(bits, c), c.points[idx])
    q = int(rng.integers(Q))
    f = c.flip_bit(idx, q)
    diff = c.bits[f] != c.bits[idx]
    assert np.all(diff[..., q]) and diff.sum() == idx.size


def test_constellation_errors():
    with pytest.raises(ParamError):
        Constellation.qam(3)
    with pytest.raises(ShapeError):
        Constellation.qam(4).bits_to_indices(np.zeros(6))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=40))
def test_rsc_matches_shift_register(u):
    assert np.array_equal(rsc_encode(np.array(u)), rsc_encode_reference(u))


def test_rsc_batch_and_known_output():
    assert np.array_equal(rsc_encode([1, 0, 0, 0]), [1, 1, 0, 1, 0, 1, 0, 0])
    U = np.random.default_rng(0).integers(0, 2, (4, 9))
    out = rsc_encode(U)
    for i in range(4):
        assert np.array_equal(out[i], rsc_encode(U[i]))
    with pytest.raises(ShapeError):
        rsc_encode(np.zeros(0))


@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_interleaver_roundtrip(n, seed):
    il = Interleaver.random(n, seed)
    x = np.random.default_rng(seed).standard_normal((2, n))
    assert np.array_equal(il.deinterleave(il.interleave(x)), x)
    assert sorted(il.permutation) == list(range(n))
    assert np.array_equal(Interleaver.random(n, seed).permutation, il.permutation)


def test_channel_statistics(rng):
    H = sample_channel(ChannelModel(3, 2), rng, 40000)
    assert H.shape == (40000, 3, 2)
    assert np.allclose(np.mean(np.abs(H) ** 2, axis=0), 1.0, atol=0.03)
    assert np.allclose(np.mean(H ** 2, axis=0), 0.0, atol=0.03)


def test_kronecker_channel_covariance(rng):
    m = ChannelModel.exponential(3, 2, 0.7)
    H = sample_channel(m, rng, 100000)
    # E[h_i h_j^*] over receive antennas for a fixed column equals R_r
    Cr = np.einsum("vi,vj->ij", H[:, :, 0], np.conj(H[:, :, 0])) / len(H)
    Ct = np.einsum("vi,vj->ij", H[:, 0, :], np.conj(H[:, 0, :])) / len(H)
    assert np.allclose(Cr, exponential_correlation(3, 0.7), atol=0.02)
    assert np.allclose(Ct, exponential_correlation(2, 0.7).T, atol=0.02)


def test_channel_model_errors():
    with pytest.raises(ModelError):
        ChannelModel(2, 2, "rician")
    with pytest.raises(ModelError):
        ChannelModel(2, 2, "kronecker_correlated", R_t=np.array([[1, 2], [2, 1]]))
    with pytest.raises(ModelError):
        ChannelModel(2, 2, "kronecker_correlated", R_t=2 * np.eye(2))
    with pytest.raises(ModelError):
        ChannelModel(2, 2, "kronecker_correlated", R_t=np.eye(3))


def test_awgn_and_snr(rng):
    y = add_awgn(np.zeros(200000), 0.3, rng)
    assert np.isclose(np.mean(np.abs(y) ** 2), 0.3, rtol=0.02)
    with pytest.raises(ParamError):
        add_awgn(np.zeros(2), 0.0, rng)
    assert np.isclose(snr_db_to_sigma2(10.0, 4), 0.4)
    assert np.isclose(snr_db_to_sigma2(0.0, 6), 6.0)
