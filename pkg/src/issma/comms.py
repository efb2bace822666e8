"""Transmitter chain and channel: RSC encoder, interleaver, gray QAM, MIMO
channel sampling and AWGN.

Bit convention used throughout the package: logical 1 <-> +1 <-> positive
LLR, logical 0 <-> -1 <-> negative LLR.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, ParamError, ShapeError
from .numkit import hermitian_sqrt


def gray_code(nbits):
    """Binary-reflected gray labels for positions ``0 .. 2**nbits - 1``."""
    i = np.arange(1 << nbits)
    return i ^ (i >> 1)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Square ``2**Q``-ary QAM alphabet with per-axis gray labelling.

    ``points[s]`` is the symbol whose Q-bit label is the integer ``s``
    (most significant bit first). The first ``Q/2`` label bits select the
    real level, the last ``Q/2`` the imaginary level.
    """

    Q: int
    points: np.ndarray
    P: float
    bits: np.ndarray  # (2**Q, Q) in {0, 1}

    @classmethod
    def qam(cls, Q):
        if Q < 2 or Q % 2:
            raise ParamError(f"bits per symbol must be even and >= 2, got {Q}")
        h = Q // 2
        m = 1 << h
        levels = np.arange(-m + 1, m, 2, dtype=float)
        # gray label -> position on the axis
        pos = np.empty(m, dtype=int)
        pos[gray_code(h)] = np.arange(m)
        P = np.sqrt(2.0 * (m * m - 1) / 3.0)
        s = np.arange(1 << Q)
        re = levels[pos[s >> h]]
        im = levels[pos[s & (m - 1)]]
        points = (re + 1j * im) / P
        bits = (s[:, None] >> np.arange(Q - 1, -1, -1)) & 1
        return cls(Q=Q, points=points, P=P, bits=bits)

    @property
    def size(self):
        return 1 << self.Q

    @property
    def signs(self):
        """Label bits as +-1, shape (2**Q, Q)."""
        return 2.0 * self.bits - 1.0

    def bits_to_indices(self, bits):
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape[-1] % self.Q:
            raise ShapeError(f"bit count {bits.shape[-1]} not divisible by Q={self.Q}")
        b = bits.reshape(bits.shape[:-1] + (-1, self.Q))
        weights = 1 << np.arange(self.Q - 1, -1, -1)
        return b @ weights

    def indices_to_bits(self, idx):
        idx = np.asarray(idx)
        return self.bits[idx].reshape(idx.shape[:-1] + (-1,))

    def flip_bit(self, idx, q):
        """Index of the symbol whose label differs from ``idx`` in bit ``q``."""
        return np.asarray(idx) ^ (1 << (self.Q - 1 - q))


def qam_map(bits, c):
    """Map a bit sequence (last axis) to constellation points."""
    return c.points[c.bits_to_indices(bits)]


@dataclass(frozen=True)
class RscCode:
    """Rate-1/2 recursive systematic convolutional code.

    Polynomials are coefficient tuples in increasing powers of D. Defaults
    give feedback ``1 + D + D^2`` and feedforward ``1 + D^2``.
    """

    feedback: tuple = (1, 1, 1)
    feedforward: tuple = (1, 0, 1)

    @property
    def memory(self):
        return len(self.feedback) - 1

    @property
    def num_states(self):
        return 1 << self.memory

    def step(self, state, u):
        """One encoder transition.

        ``state`` packs the register as ``w[t-1]`` in the MSB ... ``w[t-m]``
        in the LSB. Works elementwise on integer arrays.
        """
        m = self.memory
        reg = [(state >> (m - 1 - i)) & 1 for i in range(m)]  # w[t-1], ..., w[t-m]
        w = u
        for i in range(m):
            if self.feedback[i + 1]:
                w = w ^ reg[i]
        p = w if self.feedforward[0] else 0 * w
        for i in range(m):
            if self.feedforward[i + 1]:
                p = p ^ reg[i]
        nxt = (w << (m - 1)) | (state >> 1)
        return nxt, p


RSC_CODE = RscCode()


def rsc_encode(info_bits, code=RSC_CODE):
    """Encode along the last axis; output is ``[s0, p0, s1, p1, ...]``.

    The trellis starts in the zero state and is left unterminated.
    """
    u = np.asarray(info_bits, dtype=np.int64)
    if u.shape[-1] == 0:
        raise ShapeError("empty input")
    state = np.zeros(u.shape[:-1], dtype=np.int64)
    out = np.empty(u.shape[:-1] + (2 * u.shape[-1],), dtype=np.int64)
    out[..., 0::2] = u
    for t in range(u.shape[-1]):
        state, p = code.step(state, u[..., t])
        out[..., 2 * t + 1] = p
    return out


@dataclass(frozen=True, eq=False)
class Interleaver:
    permutation: np.ndarray
    seed: object = None

    @classmethod
    def random(cls, size, seed=None):
        rng = np.random.default_rng(seed)
        return cls(permutation=rng.permutation(size), seed=seed)

    @property
    def size(self):
        return len(self.permutation)

    def interleave(self, x):
        return np.asarray(x)[..., self.permutation]

    def deinterleave(self, x):
        x = np.asarray(x)
        out = np.empty_like(x)
        out[..., self.permutation] = x
        return out


def exponential_correlation(n, rho):
    """Correlation matrix with entries ``rho**|i - j|``."""
    i = np.arange(n)
    return rho ** np.abs(i[:, None] - i[None, :]).astype(float)


@dataclass(eq=False)
class ChannelModel:
    """i.i.d. Rayleigh or Kronecker-correlated MIMO channel, ``L x N``."""

    L: int
    N: int
    kind: str = "iid_gaussian"
    R_t: np.ndarray = None
    R_r: np.ndarray = None
    _sqrt_t: np.ndarray = field(default=None, init=False, repr=False)
    _sqrt_r: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("iid_gaussian", "kronecker_correlated"):
            raise ModelError(f"unknown channel kind {self.kind!r}")
        if self.L < 1 or self.N < 1:
            raise ModelError("channel dimensions must be positive")
        if self.kind == "kronecker_correlated":
            self.R_t = np.eye(self.N) if self.R_t is None else np.asarray(self.R_t)
            self.R_r = np.eye(self.L) if self.R_r is None else np.asarray(self.R_r)
            self._sqrt_t = _corr_sqrt(self.R_t, self.N, "R_t")
            self._sqrt_r = _corr_sqrt(self.R_r, self.L, "R_r")

    @classmethod
    def exponential(cls, L, N, rho):
        return cls(L, N, "kronecker_correlated",
                   exponential_correlation(N, rho), exponential_correlation(L, rho))


def _corr_sqrt(Rc, n, name):
    if Rc.shape != (n, n):
        raise ModelError(f"{name} must be {n}x{n}, got {Rc.shape}")
    if not np.allclose(Rc, Rc.conj().T, atol=1e-12):
        raise ModelError(f"{name} is not hermitian")
    if not np.allclose(np.diag(Rc), 1.0, atol=1e-12):
        raise ModelError(f"{name} must have unit diagonal")
    if np.array_equal(Rc, np.eye(n)):
        return None
    S = hermitian_sqrt(Rc)
    if S is None:
        raise ModelError(f"{name} is not positive semi-definite")
    return S


def complex_normal(rng, shape, var=1.0):
    """Circular complex Gaussian samples with total variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(model, rng, size=None):
    """Draw ``H`` (or a stack of ``size`` channels) from ``model``."""
    lead = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    H = complex_normal(rng, lead + (model.L, model.N))
    if model.kind == "kronecker_correlated":
        if model._sqrt_r is not None:
            H = model._sqrt_r @ H
        if model._sqrt_t is not None:
            H = H @ model._sqrt_t
    return H


def add_awgn(y, sigma2, rng):
    """Add ``CN(0, sigma2)`` noise to every entry of ``y``."""
    if not sigma2 > 0:
        raise ParamError(f"noise variance must be positive, got {sigma2}")
    y = np.asarray(y)
    return y + complex_normal(rng, y.shape, sigma2)


def snr_db_to_sigma2(snr_db, N):
    """Noise variance for ``SNR = 10 log10(N / sigma2)``."""
    return N / 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
