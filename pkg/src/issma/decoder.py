"""Max-log BCJR decoder for the rate-1/2 RSC code.

LLR convention: positive means bit 1. Inputs are interleaved coded LLRs
``[s0, p0, s1, p1, ...]`` along the last axis; any leading axes are frames
decoded in parallel.
"""

from dataclasses import dataclass

import numpy as np

from .comms import RSC_CODE
from .errors import ShapeError


@dataclass(frozen=True, eq=False)
class Trellis:
    """Tabulated transitions: ``next_state[s, u]``, ``parity[s, u]``."""

    num_states: int
    next_state: np.ndarray
    parity: np.ndarray

    @classmethod
    def from_code(cls, code=RSC_CODE):
        S = code.num_states
        s = np.arange(S)[:, None]
        u = np.arange(2)[None, :]
        nxt, p = code.step(np.broadcast_to(s, (S, 2)), np.broadcast_to(u, (S, 2)))
        return cls(num_states=S, next_state=np.asarray(nxt), parity=np.asarray(p))

    def edges(self):
        """Flat edge list ``(from, to, info bit, parity bit)``."""
        S = self.num_states
        frm = np.repeat(np.arange(S), 2)
        u = np.tile(np.arange(2), S)
        return frm, self.next_state[frm, u], u, self.parity[frm, u]


TRELLIS = Trellis.from_code()


@dataclass(eq=False)
class DecoderIO:
    llr_in: np.ndarray
    coded_extrinsic: np.ndarray = None
    info_posterior: np.ndarray = None
    info_bits: np.ndarray = None


def maxlog_map_decode(io, trellis=TRELLIS):
    """Fill ``io`` with coded-bit extrinsics, info-bit posteriors and decisions.

    The forward recursion starts in state 0; the backward recursion starts
    from a uniform metric (unterminated trellis).
    """
    L = np.asarray(io.llr_in, dtype=float)
    n2 = L.shape[-1]
    if n2 == 0 or n2 % 2:
        raise ShapeError(f"coded length must be even and positive, got {n2}")
    T = n2 // 2
    lead = L.shape[:-1]
    Ls = L[..., 0::2]
    Lp = L[..., 1::2]
    S = trellis.num_states
    frm, to, u, p = trellis.edges()
    cu = 2.0 * u - 1.0
    cp = 2.0 * p - 1.0

    # branch metrics (..., T, E)
    gamma = 0.5 * (Ls[..., None] * cu + Lp[..., None] * cp)

    alpha = np.empty(lead + (T + 1, S))
    alpha[..., 0, :] = -np.inf
    alpha[..., 0, 0] = 0.0
    # every state has exactly two incoming and two outgoing edges
    into = np.argsort(to, kind="stable").reshape(S, 2)
    out_of = np.argsort(frm, kind="stable").reshape(S, 2)
    for t in range(T):
        cand = alpha[..., t, frm] + gamma[..., t, :]
        a = np.maximum(cand[..., into[:, 0]], cand[..., into[:, 1]])
        alpha[..., t + 1, :] = a - a.max(-1, keepdims=True)

    beta = np.empty(lead + (T + 1, S))
    beta[..., T, :] = 0.0
    for t in range(T - 1, -1, -1):
        cand = beta[..., t + 1, to] + gamma[..., t, :]
        b = np.maximum(cand[..., out_of[:, 0]], cand[..., out_of[:, 1]])
        beta[..., t, :] = b - b.max(-1, keepdims=True)

    edge = alpha[..., :-1, frm] + gamma + beta[..., 1:, to]  # (..., T, E)
    u1 = u == 1
    p1 = p == 1
    post_s = edge[..., u1].max(-1) - edge[..., ~u1].max(-1)
    post_p = edge[..., p1].max(-1) - edge[..., ~p1].max(-1)

    post = np.empty_like(L)
    post[..., 0::2] = post_s
    post[..., 1::2] = post_p
    io.coded_extrinsic = post - L
    io.info_posterior = post_s
    io.info_bits = (post_s > 0).astype(np.int64)
    return io


def decode(llr_in, trellis=TRELLIS):
    """Convenience wrapper returning ``(coded_extrinsic, info_posterior, info_bits)``."""
    io = maxlog_map_decode(DecoderIO(llr_in), trellis)
    return io.coded_extrinsic, io.info_posterior, io.info_bits
