import numpy as np
import pytest
from hypothesis import given, strategies as st

from issma.comms import Constellation, complex_normal
from issma.detector import (MultiplicationCounter, SearchConfig, detect, extend_and_compute_llrs,
                            m_search, mmse_pic_detect, vblast_order)
from issma.errors import ParamError
from issma.pathmetric import DetectionProblem
from issma.priors import PriorStats
from conftest import random_problem
from oracles import exhaustive_costs, exhaustive_maxlog, mmse_pic_reference

seeds = st.integers(0, 2**32 - 1)


def stack(problems):
    c = problems[0].constellation
    pri = PriorStats.from_llrs(np.stack([p.priors.llr for p in problems]), c)
    return DetectionProblem(np.stack([p.R for p in problems]), np.stack([p.y for p in problems]),
                            problems[0].sigma2, pri, c, np.array([p.C_const for p in problems]))


def test_search_config_validation():
    for bad in ({"M": 0}, {"J": -1}, {"N_l": -1}, {"metric": "x"}, {"ordering": "x"},
                {"clip_mode": "x"}, {"llr_clip": 0}):
        with pytest.raises(ParamError):
            SearchConfig(**bad)
    SearchConfig(M=2, J=8).check_list_size(2)
    with pytest.raises(ParamError, match="2\\^Q"):
        SearchConfig(M=2, J=9).check_list_size(2)


@given(st.integers(1, 3), st.sampled_from([2, 4]), seeds)
def test_genie_m1_finds_map_vector(N, Q, seed):
    if N * Q > 8:
        N = 2
    rng = np.random.default_rng(seed)
    prob, _, _, llr, _ = random_problem(rng, N, Q)
    X, d = exhaustive_costs(prob.R, prob.y, prob.sigma2, llr, prob.constellation, prob.C_const)
    cands = m_search(prob, SearchConfig(M=1, J=0, metric="genie"))
    best = cands.symbols[np.argmin(cands.cost)]
    assert np.isclose(cands.cost.min(), d.min())
    assert np.isclose(d[np.all(X == best, axis=1)][0], d.min())


@given(st.integers(1, 3), seeds)
def test_full_list_gives_exhaustive_maxlog(N, seed):
    rng = np.random.default_rng(seed)
    prob, _, _, llr, _ = random_problem(rng, N, 2)
    cfg = SearchConfig(M=4 ** N, J=0, metric="causal", clip_mode="always", llr_clip=1e6)
    cands = m_search(prob, cfg)
    assert cands.size == 4 ** N
    out = extend_and_compute_llrs(cands, prob, cfg)
    ref = exhaustive_maxlog(prob.R, prob.y, prob.sigma2, llr, prob.constellation)
    assert np.allclose(out.posterior_llrs, ref, atol=1e-9)
    assert np.allclose(out.extrinsic_llrs, ref - llr, atol=1e-9)


def test_candidate_costs_are_exact(rng):
    prob, _, _, llr, _ = random_problem(rng, 4, 4)
    cands = m_search(prob, SearchConfig(M=3))
    X, d = exhaustive_costs(prob.R, prob.y, prob.sigma2, llr, prob.constellation, prob.C_const)
    lookup = {tuple(x): v for x, v in zip(X, d)}
    for s, cst in zip(cands.symbols, cands.cost):
        assert np.isclose(lookup[tuple(s)], cst)
    assert np.all(np.diff(cands.cost) >= 0)
    assert np.allclose(cands.psi, -cands.cost / prob.sigma2)


@given(st.integers(2, 6), st.integers(1, 5), seeds)
def test_zero_lookahead_equals_causal_search(N, M, seed):
    rng = np.random.default_rng(seed)
    prob, *_ = random_problem(rng, N)
    a = m_search(prob, SearchConfig(M=M, N_l=0, metric="lela"))
    b = m_search(prob, SearchConfig(M=M, metric="causal"))
    assert np.array_equal(a.symbols, b.symbols) and np.allclose(a.cost, b.cost)


def test_batched_search_matches_single(rng):
    probs = [random_problem(rng, 5, 4)[0] for _ in range(4)]
    for p in probs:
        p.sigma2 = 0.5
    cfg = SearchConfig(M=3, N_l=2)
    batched = m_search(stack(probs), cfg)
    for b, p in enumerate(probs):
        single = m_search(p, cfg)
        assert np.array_equal(single.symbols, batched.symbols[b])
        assert np.allclose(single.cost, batched.cost[b])


def test_list_extension_flips_and_clipping(rng):
    prob, _, _, llr, _ = random_problem(rng, 4, 2, prior_scale=0.0)
    cfg = SearchConfig(M=1, J=2)
    cands = m_search(prob, cfg)
    out = extend_and_compute_llrs(cands, prob, cfg)
    assert np.all(np.isfinite(out.posterior_llrs))
    assert out.stats["flips"] > 0
    # every posterior equals a max-log value over list + flipped vectors
    X, d = exhaustive_costs(prob.R, prob.y, prob.sigma2, llr, prob.constellation, prob.C_const)
    psi = dict(zip(map(tuple, X), -d / prob.sigma2))
    c = prob.constellation
    order = np.argsort(cands.cost, kind="stable")[:2]
    pool = {tuple(s) for s in cands.symbols}
    for n in range(4):
        for q in range(2):
            for j in order:
                f = cands.symbols[j].copy()
                f[n] = c.flip_bit(f[n], q)
                pool.add(tuple(f))
    for n in range(4):
        for q in range(2):
            one = max(psi[v] for v in pool if c.bits[v[n], q] == 1)
            zero = max(psi[v] for v in pool if c.bits[v[n], q] == 0)
            assert np.isclose(out.posterior_llrs[n, q], one - zero)


def test_no_counter_hypothesis_falls_back_to_clip(rng):
    prob, *_ = random_problem(rng, 3, 2, prior_scale=0.0)
    cfg = SearchConfig(M=1, J=0, llr_clip=5.0)
    out = extend_and_compute_llrs(m_search(prob, cfg), prob, cfg)
    # level 1 keeps all four children; levels 2 and 3 have a single symbol
    assert np.all(np.abs(out.posterior_llrs[1:]) == 5.0)
    assert np.all(np.abs(out.posterior_llrs[0]) < np.inf)


def test_always_clip_bounds_posteriors(rng):
    prob, *_ = random_problem(rng, 4, 4, sigma2=0.01)
    cfg = SearchConfig(M=2, J=4, llr_clip=3.0, clip_mode="always")
    out = extend_and_compute_llrs(m_search(prob, cfg), prob, cfg)
    assert np.all(np.abs(out.posterior_llrs) <= 3.0)


def test_vblast_orthogonal_columns():
    H = np.diag([1.0, 3.0, 2.0]).astype(complex)
    perm = vblast_order(H, 0.1)
    assert list(perm) == [0, 2, 1]
    assert list(vblast_order(np.eye(4), 0.1)) == [0, 1, 2, 3]


@given(seeds)
def test_vblast_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    H = complex_normal(rng, (5, 4))
    pi = rng.permutation(4)
    p1 = vblast_order(H, 0.3)
    p2 = vblast_order(H[:, pi], 0.3)
    assert np.array_equal(pi[p2], p1)
    assert sorted(p1) == [0, 1, 2, 3]


def test_vblast_rank_deficient_fallback(caplog):
    H = np.array([[1, 2, 0], [2, 4, 0], [0, 0, 1]], dtype=complex)
    perm = vblast_order(H, 0.0)
    assert sorted(perm) == [0, 1, 2]
    assert "rank-deficient" in caplog.text


def test_detect_order_invariant_with_full_search(rng):
    c = Constellation.qam(2)
    H = complex_normal(rng, (6, 3, 3))
    y = complex_normal(rng, (6, 3))
    llr = rng.standard_normal((6, 3, 2))
    kw = dict(M=64, J=0, metric="causal")
    a = detect(H, y, 0.4, llr, c, SearchConfig(ordering="vblast", **kw))
    b = detect(H, y, 0.4, llr, c, SearchConfig(ordering="none", **kw))
    assert np.allclose(a.posterior_llrs, b.posterior_llrs)
    for i in range(6):
        ref = exhaustive_maxlog(H[i], y[i], 0.4, llr[i], c)
        assert np.allclose(ref, a.posterior_llrs[i], atol=1e-9)
    assert np.allclose(a.extrinsic_llrs, a.posterior_llrs - llr)


def test_detect_clips_priors(rng):
    c = Constellation.qam(2)
    H = complex_normal(rng, (2, 2))
    llr = np.array([[50.0, -50.0], [0.5, 0.2]])
    out = detect(H, complex_normal(rng, 2), 0.5, llr, c, SearchConfig(M=2, llr_clip=8.0))
    assert np.allclose(out.extrinsic_llrs, out.posterior_llrs - np.clip(llr, -8, 8))


def test_counter_matches_per_level_formula(rng):
    N, M, N_l, Q = 6, 3, 2, 2
    S = 1 << Q
    prob, *_ = random_problem(rng, N, Q)
    counter = MultiplicationCounter()
    m_search(prob, SearchConfig(M=M, N_l=N_l), counter=counter)
    metric = bias = upd = 0
    P = 1
    for k in range(N, 0, -1):
        metric += S * k + P * S
        w = min(k - 1, N_l)
        if k > 1 and w > 0:
            bias += P * w * w
            upd += w * w + 2 * P * S * w
        P = min(M, P * S)
    assert counter["metric"] == metric
    assert counter["bias"] == bias
    assert counter["bias_update"] == upd
    assert counter.vectors == 1 and counter.per_vector() == counter.total
    other = MultiplicationCounter()
    other.add("llr", 5)
    other.vectors = 1
    counter.merge(other)
    assert counter.vectors == 2 and counter["llr"] == 5


def test_causal_search_counts_no_bias(rng):
    prob, *_ = random_problem(rng, 4)
    counter = MultiplicationCounter()
    m_search(prob, SearchConfig(M=2, metric="causal"), counter=counter)
    assert counter["bias"] == 0 and counter["bias_update"] == 0


@given(st.integers(1, 4), st.integers(0, 2), st.sampled_from([2, 4]), seeds)
def test_mmse_pic_matches_reference(N, extra, Q, seed):
    rng = np.random.default_rng(seed)
    c = Constellation.qam(Q)
    L = N + extra
    H = complex_normal(rng, (L, N))
    y = complex_normal(rng, L)
    llr = 2 * rng.standard_normal((N, Q))
    out = mmse_pic_detect(H, y, 0.3, llr, c, llr_clip=100.0)
    ref = mmse_pic_reference(H, y, 0.3, llr, c)
    assert np.allclose(out.extrinsic_llrs, ref, rtol=1e-7, atol=1e-7)


def test_mmse_pic_high_snr_hard_decisions(rng):
    c = Constellation.qam(4)
    H = complex_normal(rng, (500, 4, 4))
    s = rng.integers(0, 16, (500, 4))
    y = np.einsum("vln,vn->vl", H, c.points[s]) + complex_normal(rng, (500, 4), 1e-4)
    counter = MultiplicationCounter()
    out = mmse_pic_detect(H, y, 1e-4, np.zeros((500, 4, 4)), c, counter=counter)
    assert np.mean((out.posterior_llrs > 0) != c.bits[s].astype(bool)) < 1e-3
    assert counter["linear"] > 0 and counter.vectors == 500


def test_uncoded_qpsk_2x2_ser():
    rng = np.random.default_rng(3)
    c = Constellation.qam(2)
    n = 100000
    sigma2 = 2 / 10 ** 2.0
    H = complex_normal(rng, (n, 2, 2))
    s = rng.integers(0, 4, (n, 2))
    y = np.einsum("vln,vn->vl", H, c.points[s]) + complex_normal(rng, (n, 2), sigma2)
    out = detect(H, y, sigma2, np.zeros((n, 2, 2)), c, SearchConfig(M=4, J=4))
    hard = c.bits_to_indices((out.posterior_llrs > 0).astype(int).reshape(n, 4)).reshape(n, 2)
    assert np.mean(hard != s) < 0.01


@given(st.integers(2, 6), st.integers(1, 4), st.sampled_from(["causal", "lela"]), seeds)
def test_larger_M_never_worsens_best_cost(N, M, metric, seed):
    rng = np.random.default_rng(seed)
    prob, *_ = random_problem(rng, N)
    a = m_search(prob, SearchConfig(M=M, metric=metric, N_l=2)).cost.min()
    b = m_search(prob, SearchConfig(M=M + int(rng.integers(1, 4)), metric=metric, N_l=2)).cost.min()
    assert b <= a + 1e-12


@given(st.integers(2, 5), seeds)
def test_list_holds_distinct_vectors(N, seed):
    rng = np.random.default_rng(seed)
    prob, *_ = random_problem(rng, N, 4)
    cands = m_search(prob, SearchConfig(M=5))
    assert len({tuple(s) for s in cands.symbols}) == cands.size == 16 * min(5, 16 ** (N - 1))


def test_mmse_pic_identity_channel_noiseless():
    c = Constellation.qam(4)
    s = np.array([3, 12, 7])
    y = c.points[s]
    out = mmse_pic_detect(np.eye(3), y, 1e-9, np.zeros((3, 4)), c)
    assert np.array_equal(out.posterior_llrs > 0, c.bits[s].astype(bool))


def test_mmse_pic_zero_priors_is_plain_mmse(rng):
    c = Constellation.qam(2)
    H = complex_normal(rng, (3, 3))
    y = complex_normal(rng, 3)
    W = np.linalg.solve(H @ H.conj().T + 0.2 * np.eye(3), H)
    xhat = (W.conj().T @ y) / np.real(np.sum(W.conj() * H, axis=0))
    out = mmse_pic_detect(H, y, 0.2, np.zeros((3, 2)), c, llr_clip=1e6)
    # QPSK max-log LLR of bit 0 is proportional to Re(xhat) with a positive gain
    assert np.array_equal(np.sign(out.extrinsic_llrs[:, 0]), np.sign(xhat.real))
    assert np.array_equal(np.sign(out.extrinsic_llrs[:, 1]), np.sign(xhat.imag))


def test_mmse_pic_extrinsic_survives_saturated_priors(rng):
    c = Constellation.qam(2)
    H = complex_normal(rng, (2, 2))
    s = np.array([1, 2])
    y = H @ c.points[s]
    llr = 20.0 * c.signs[s]
    out = mmse_pic_detect(H, y, 1e-6, llr, c)
    assert np.all(np.abs(out.extrinsic_llrs) == 8.0)
    assert np.array_equal(out.extrinsic_llrs > 0, c.bits[s].astype(bool))
    clipped = mmse_pic_detect(H, y, 1e-6, llr, c, clip_mode="always")
    assert np.allclose(clipped.extrinsic_llrs, 0.0)
