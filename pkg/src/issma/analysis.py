"""SINR of the look-ahead scalar channel, its bounds, large-system limits and
correct-path-loss (CPL) probability bounds.

Notation: at tree level ``k`` the undecided block is ``R11 = R[:k-1, :k-1]``,
``r = R[:k-1, k-1]`` and ``Sigma = R11 Lam R11^H + sigma2 I``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import comb, erfc

from .comms import complex_normal, snr_db_to_sigma2
from .errors import ParamError
from .numkit import hermitian_solve, qr_thin


@dataclass(eq=False)
class LevelContext:
    k: int
    r_k: np.ndarray
    r_kk: float
    Sigma_k: np.ndarray
    sigma2: float
    lambda_min: float = 1.0
    lambda_max: float = 1.0

    @classmethod
    def from_R(cls, R, lam, sigma2, k):
        """Context of level ``k`` (1-based) of an upper-triangular ``R``."""
        R = np.asarray(R, dtype=complex)
        lam = np.broadcast_to(np.asarray(lam, dtype=float), R.shape[-1:])
        n = k - 1
        R11 = R[:n, :n]
        Sigma = (R11 * lam[:n]) @ R11.conj().T + sigma2 * np.eye(n)
        lk = lam[:n] if n else np.ones(1)
        return cls(k=k, r_k=R[:n, n].copy(), r_kk=float(np.real(R[n, n])), Sigma_k=Sigma,
                   sigma2=float(sigma2), lambda_min=float(lk.min()), lambda_max=float(lk.max()))


def _sigma_powers(ctx):
    """``(r^H S^-1 r, r^H S^-2 r, r^H S^-3 r)``."""
    if ctx.r_k.size == 0:
        return 0.0, 0.0, 0.0
    u = hermitian_solve(ctx.Sigma_k, ctx.r_k)   # S^-1 r
    v = hermitian_solve(ctx.Sigma_k, u)         # S^-2 r
    s1 = float(np.real(np.vdot(ctx.r_k, u)))
    s2 = float(np.real(np.vdot(u, u)))
    s3 = float(np.real(np.vdot(u, v)))
    return s1, s2, s3


def sinr_lela(ctx):
    """SINR of the scalar channel seen by the look-ahead metric at level ``k``."""
    _, s2, s3 = _sigma_powers(ctx)
    sg = ctx.sigma2
    d = ctx.r_kk ** 2
    return (sg ** 2 * s2 + d) ** 2 / (sg * (sg ** 3 * s3 + d))


def sinr_causal(ctx):
    return ctx.r_kk ** 2 / ctx.sigma2


def sinr_bounds(ctx):
    """``(lower, upper)`` with ``lower <= sinr_lela(ctx) <= upper``."""
    s1, s2, _ = _sigma_powers(ctx)
    d = ctx.r_kk ** 2 / ctx.sigma2
    return ctx.sigma2 * s2 + d, s1 + d


def simulate_scalar_sinr(ctx, R11, rng, n_samples, c=None, lam=1.0):
    """Empirical SINR of the look-ahead scalar channel.

    Draws the undecided symbols (uniform over ``c`` if given, else Gaussian
    with variance ``lam``) and the noise, forms ``e = [Z b; n_k]`` with
    ``b = R11 (x - 0) + n_1^{k-1}`` and projects it on ``v = [Z r; r_kk]``.
    Returns ``||v||^4 / E|v^H e|^2``.
    """
    n = ctx.k - 1
    sg = ctx.sigma2
    Z = sg * np.linalg.inv(ctx.Sigma_k)
    if c is None:
        x = complex_normal(rng, (n_samples, n), lam)
    else:
        x = c.points[rng.integers(0, c.size, (n_samples, n))]
    b = x @ R11.T + complex_normal(rng, (n_samples, n), sg)
    nk = complex_normal(rng, n_samples, sg)
    Zr = Z @ ctx.r_k
    proj = (b @ Z.T) @ np.conj(Zr) + ctx.r_kk * nk
    v2 = float(np.real(np.vdot(Zr, Zr))) + ctx.r_kk ** 2
    return v2 ** 2 / np.mean(np.abs(proj) ** 2)


# --- large-system limits ---------------------------------------------------

@dataclass(frozen=True)
class AsymptoticParams:
    beta: float
    gamma: float

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ParamError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0 < self.gamma < 1:
            raise ParamError(f"gamma must lie in (0, 1), got {self.gamma}")


def g_function(x, b):
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + 2.0 * (1.0 + b) * x + (1.0 - b) ** 2 * x ** 2)


def asymptotic_bounds(p, lambda_min, lambda_max, sigma2):
    """Limits ``(upper, lower)`` of the SINR-gain bounds at level ``gamma N + 1``."""
    gb = p.gamma * p.beta
    xmin = lambda_min / sigma2
    xmax = lambda_max / sigma2
    upper = (-1.0 - (1.0 - gb) * xmin + g_function(xmin, gb)) / (2.0 * lambda_min)
    lower = (-(1.0 - gb) + (1.0 + gb + (1.0 - gb) ** 2 * xmax) / g_function(xmax, gb)) / (2.0 * sigma2)
    return upper, lower


def upper_limit_noiseless(gamma_beta, lambda_min):
    """``lim_{sigma2 -> 0}`` of the asymptotic upper bound."""
    return gamma_beta / (lambda_min * (1.0 - gamma_beta))


def finite_gain_bounds(R, k, sigma2, lambda_min=1.0, lambda_max=1.0):
    """``(B_upper, B_lower)`` for one channel with extreme prior variances."""
    n = k - 1
    R11 = R[:n, :n]
    r = R[:n, n]
    G = R11 @ R11.conj().T
    A = sigma2 * np.eye(n) + lambda_max * G
    Bm = sigma2 * np.eye(n) + lambda_min * G
    upper = float(np.real(np.vdot(r, hermitian_solve(Bm, r))))
    u = hermitian_solve(A, r)
    lower = sigma2 * float(np.real(np.vdot(u, u)))
    return upper, lower


def mc_gain_bounds(N, L, k, sigma2, n_channels, rng, lambda_min=1.0, lambda_max=1.0):
    """Average finite-size gain bounds over ``H`` with ``CN(0, 1/L)`` entries."""
    up = np.empty(n_channels)
    lo = np.empty(n_channels)
    for i in range(n_channels):
        H = complex_normal(rng, (L, N), 1.0 / L)
        _, R = qr_thin(H)
        up[i], lo[i] = finite_gain_bounds(R, k, sigma2, lambda_min, lambda_max)
    return up.mean(), lo.mean(), up.std(ddof=1) / np.sqrt(n_channels), lo.std(ddof=1) / np.sqrt(n_channels)


def marcenko_pastur_pdf(x, c):
    """Limiting eigenvalue density of ``H^H H`` for ``H`` with ``CN(0, 1/L)``
    entries and ratio ``c = columns / rows <= 1``."""
    x = np.asarray(x, dtype=float)
    a = (1.0 - np.sqrt(c)) ** 2
    b = (1.0 + np.sqrt(c)) ** 2
    inside = (x > a) & (x < b)
    xs = np.where(inside, x, 1.0)
    return np.where(inside, np.sqrt(np.clip((xs - a) * (b - xs), 0, None)) / (2 * np.pi * c * xs), 0.0)


# --- CPL probabilities -------------------------------------------------------

def qam_gap_constant(Q):
    return 3.0 / (2 ** Q - 1)


def cpl_prefactor(Q):
    return 4.0 * (1.0 - 1.0 / np.sqrt(2.0 ** Q))


def gaussian_q(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def cpl_level_bound(ctx, Q, exact=False):
    """Per-level CPL bound from the lower SINR bound, or from the exact SINR."""
    K = qam_gap_constant(Q)
    s = sinr_lela(ctx) if exact else sinr_bounds(ctx)[0]
    return float(cpl_prefactor(Q) * gaussian_q(np.sqrt(K * s)))


def cpl_level_causal(ctx, Q):
    return float(cpl_prefactor(Q) * gaussian_q(np.sqrt(qam_gap_constant(Q) * sinr_causal(ctx))))


def cpl_total(p):
    """``(1 - prod(1 - p_k), sum p_k)``."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ParamError("per-level probabilities must lie in [0, 1]")
    return float(1.0 - np.prod(1.0 - p)), float(p.sum())


def channel_cpl_bounds(R, sigma2, Q, lam=1.0):
    """Per-level CPL values for one channel: look-ahead exact SINR, look-ahead
    lower SINR bound and causal, each of length ``N`` (level 1 first)."""
    N = R.shape[-1]
    ex = np.empty(N)
    lb = np.empty(N)
    ca = np.empty(N)
    for k in range(1, N + 1):
        ctx = LevelContext.from_R(R, lam, sigma2, k)
        ex[k - 1] = min(1.0, cpl_level_bound(ctx, Q, exact=True))
        lb[k - 1] = min(1.0, cpl_level_bound(ctx, Q))
        ca[k - 1] = min(1.0, cpl_level_causal(ctx, Q))
    return ex, lb, ca


def chi_square_q_average(L, k, Q, sigma2):
    """``E[Q(sqrt(K |r_kk|^2 / sigma2))]`` over ``|r_kk|^2 ~ Gamma(L-k+1, 1)``."""
    if L < k:
        raise ParamError(f"need L >= k, got L={L}, k={k}")
    K = qam_gap_constant(Q)
    mu = np.sqrt(K / (K + 2.0 * sigma2))
    n = L - k + 1
    lo = 0.5 * (1.0 - mu)
    hi = 0.5 * (1.0 + mu)
    return float(lo ** n * sum(comb(n - 1 + l, l, exact=True) * hi ** l for l in range(n)))


@dataclass(frozen=True)
class ScalingGain:
    value: float
    stderr: float
    flagged: bool


def _gain_factors(eta, K, sigma2, lambda_max):
    return np.prod(1.0 / (1.0 + 0.5 * K * sigma2 / (lambda_max * eta + sigma2) ** 2), axis=-1)


def scaling_gain(L, k, Q, sigma2, lambda_max=1.0, mc_samples=20000, rng=None, rel_tol=1e-3):
    """Monte-Carlo estimate of the scaling-gain upper bound at level ``k``.

    Eigenvalues are those of ``H1^H H1`` with ``H1`` an ``L x (k-1)`` matrix of
    ``CN(0, 1)`` entries. ``flagged`` is set when the relative standard error
    exceeds ``rel_tol``.
    """
    if k < 2:
        raise ParamError("scaling gain needs k >= 2")
    rng = np.random.default_rng(rng)
    K = qam_gap_constant(Q)
    vals = np.empty(mc_samples)
    block = max(1, 200000 // (L * (k - 1)))
    for s in range(0, mc_samples, block):
        m = min(block, mc_samples - s)
        H1 = complex_normal(rng, (m, L, k - 1))
        eta = np.linalg.eigvalsh(np.conj(np.swapaxes(H1, -1, -2)) @ H1)
        vals[s:s + m] = _gain_factors(eta, K, sigma2, lambda_max)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(mc_samples))
    return ScalingGain(mean, se, bool(se > rel_tol * mean))


def wishart_eig_pdf(x, L, k):
    """Joint density of the unordered eigenvalues of ``H1^H H1`` (``k-1`` of them).

    ``x`` has shape ``(..., k-1)``; the result has shape ``x.shape[:-1]``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = k - 1
    logc = -math.lgamma(n + 1) - sum(math.lgamma(n - i + 1) + math.lgamma(L - i + 1) for i in range(1, n + 1))
    val = np.exp(logc - x.sum(-1) + (L - k + 1) * np.log(x).sum(-1))
    for i in range(n):
        for j in range(i + 1, n):
            val = val * (x[..., i] - x[..., j]) ** 2
    return val


def scaling_gain_quadrature(L, k, Q, sigma2, lambda_max=1.0):
    """Scaling-gain bound by direct integration of the eigenvalue density, ``k-1 <= 2``."""
    K = qam_gap_constant(Q)
    f = lambda *xs: float(_gain_factors(np.array(xs), K, sigma2, lambda_max)
                          * wishart_eig_pdf(np.array(xs), L, k))
    upper = L + 40.0 * np.sqrt(L) + 40.0
    if k == 2:
        return integrate.quad(f, 0, upper, limit=200)[0]
    if k == 3:
        return integrate.dblquad(lambda x2, x1: f(x1, x2), 0, upper, 0, upper, epsabs=1e-10)[0]
    raise ParamError("quadrature is implemented for k in {2, 3}")


def avg_cpl_dominant(L, N, Q, sigma2, lambda_max=1.0, mc_samples=20000, rng=None):
    """Top-level dominant-term CPL bounds ``(look_ahead, causal)``."""
    q = chi_square_q_average(L, N, Q, sigma2)
    causal = cpl_prefactor(Q) * q
    if N < 2:
        return causal, causal
    g = scaling_gain(L, N, Q, sigma2, lambda_max, mc_samples, rng)
    return causal * g.value, causal


def simulate_cpl(L, N, Q, snr_db, trials, metric, rng, batch=5000):
    """Monte-Carlo CPL rate of an ``M = 1`` search without ordering.

    A trial counts as a loss if the single surviving path differs from the
    transmitted vector at any level. Returns ``(rate, per_level_first_loss)``
    where the second array (level 1 first) holds first-loss counts / trials.
    """
    from .comms import Constellation
    from .detector import SearchConfig, m_search
    from .pathmetric import DetectionProblem
    from .priors import PriorStats

    c = Constellation.qam(Q)
    sigma2 = float(snr_db_to_sigma2(snr_db, N))
    cfg = SearchConfig(M=1, J=0, N_l=max(N - 1, 0), metric=metric, ordering="none")
    first = np.zeros(N)
    lost = 0
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        H = complex_normal(rng, (B, L, N))
        s = rng.integers(0, c.size, (B, N))
        y_o = np.einsum("bln,bn->bl", H, c.points[s]) + complex_normal(rng, (B, L), sigma2)
        prob = DetectionProblem.from_channel(H, y_o, sigma2, PriorStats.uniform((B, N), c), c)
        best = m_search(prob, cfg).symbols[:, 0, :]
        wrong = best != s
        miss = wrong.any(axis=1)
        lost += int(miss.sum())
        # highest wrong level is where the path was first lost
        top = N - 1 - np.argmax(wrong[:, ::-1], axis=1)
        np.add.at(first, top[miss], 1)
        done += B
    return lost / trials, first / trials
