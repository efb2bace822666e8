"""Path metrics for tree search over ``y = R x + n``.

Levels are numbered as in the tree: level ``N`` is the first symbol visited
(the root's children), level 1 the last. Arrays are 0-based, so level ``k``
lives in row/column ``k - 1`` of ``R``.

Three metrics are provided:

* causal: accumulated branch metrics of the visited symbols;
* look-ahead (``lela``): causal plus the squared norm of the MMSE-whitened
  residual of the not-yet-visited rows, ``||Z_k a_k||^2``;
* genie: causal plus the exact minimum over all completions (enumeration).
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ShapeError, TooLarge
from .numkit import qr_thin
from .priors import PriorStats

GENIE_MAX_BITS = 20


@dataclass(eq=False)
class DetectionProblem:
    """Triangularized detection problem, optionally stacked.

    ``R`` is ``(..., N, N)`` upper triangular with a non-negative real
    diagonal, ``y = Q1^H y_o`` and ``C_const = ||Q2^H y_o||^2``.
    """

    R: np.ndarray
    y: np.ndarray
    sigma2: object
    priors: PriorStats
    constellation: object
    C_const: object = 0.0

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=complex)
        self.y = np.asarray(self.y, dtype=complex)
        if self.R.shape[-1] != self.R.shape[-2] or self.y.shape[-1] != self.R.shape[-1]:
            raise ShapeError("R must be N x N and y of length N")
        if np.any(np.asarray(self.sigma2) <= 0):
            raise ShapeError("sigma2 must be positive")

    @classmethod
    def from_channel(cls, H, y_o, sigma2, priors, constellation):
        Q1, R = qr_thin(H)
        y_o = np.asarray(y_o, dtype=complex)
        y = np.einsum("...ln,...l->...n", np.conj(Q1), y_o)
        C = np.sum(np.abs(y_o) ** 2, axis=-1) - np.sum(np.abs(y) ** 2, axis=-1)
        return cls(R, y, sigma2, priors, constellation, np.clip(C, 0.0, None))

    @property
    def N(self):
        return self.R.shape[-1]

    @property
    def batch_shape(self):
        return self.R.shape[:-2]

    def prior_term(self, i, s):
        """``xi(x_i = s) = -sigma2 * ln Pr(bits of s)`` at 0-based row ``i``."""
        lp = self.priors.log_prior[..., i, s]
        with np.errstate(invalid="ignore"):
            return np.where(np.isneginf(lp), np.inf, -np.asarray(self.sigma2) * lp)


def branch_metric(problem, i, path):
    """Branch metric of level ``i`` (1-based) for symbols ``x_i .. x_N``.

    ``path`` holds constellation indices for levels ``i .. N`` in that order.
    """
    N = problem.N
    path = np.asarray(path)
    if len(path) != N - i + 1:
        raise ShapeError(f"path for level {i} must hold {N - i + 1} symbols")
    x = problem.constellation.points[path]
    r = problem.y[i - 1] - problem.R[i - 1, i - 1:] @ x
    return float(np.abs(r) ** 2 + problem.prior_term(i - 1, path[0]))


def cost_metric(problem, x_idx):
    """``d_APP(x) = -sigma2 * psi(x)`` for a complete symbol vector."""
    x_idx = np.asarray(x_idx)
    x = problem.constellation.points[x_idx]
    res = np.sum(np.abs(problem.y - problem.R @ x) ** 2)
    prior = sum(problem.prior_term(i, s) for i, s in enumerate(x_idx))
    return float(res + prior + problem.C_const)


@dataclass(eq=False)
class PathNode:
    """A partial path ``x_k .. x_N`` ending at tree level ``k``.

    ``symbols[j]`` is the constellation index chosen at level ``k + j``.
    ``a`` is the residual of rows ``1 .. k-1`` after cancelling the visited
    symbols and the prior means of the undecided ones.
    """

    level: int
    symbols: tuple
    gamma_c: float
    gamma_b: float
    a: np.ndarray

    @property
    def gamma_l(self):
        return self.gamma_c + self.gamma_b


def root_node(problem):
    a = problem.y - problem.R @ problem.priors.sym_mean
    return PathNode(level=problem.N + 1, symbols=(), gamma_c=0.0, gamma_b=0.0, a=a)


def _extend_residual(problem, node, s):
    k = node.level - 1
    if k < 1:
        raise ShapeError("cannot extend a complete path")
    delta = problem.constellation.points[s] - problem.priors.sym_mean[k - 1]
    full = node.a - problem.R[:k, k - 1] * delta
    return k, full[:k - 1], full[k - 1]


def causal_metric_extend(problem, node, s):
    """Causal metric of ``node`` extended by symbol index ``s``."""
    k, _, v = _extend_residual(problem, node, s)
    return float(node.gamma_c + np.abs(v) ** 2 + problem.prior_term(k - 1, s))


def lela_metric_extend(problem, node, s, zs):
    """Extend ``node`` by symbol ``s``, updating causal metric, bias and residual."""
    k, a, v = _extend_residual(problem, node, s)
    gamma_c = float(node.gamma_c + np.abs(v) ** 2 + problem.prior_term(k - 1, s))
    w = zs.window(k)
    gamma_b = 0.0
    if w > 0:
        u = zs[k] @ a[k - 1 - w:]
        gamma_b = float(np.sum(np.abs(u) ** 2))
    return PathNode(level=k, symbols=(s,) + node.symbols, gamma_c=gamma_c, gamma_b=gamma_b, a=a)


@dataclass(eq=False)
class ZSequence:
    """Per-level whitening operators ``Z_k = sigma2 (R11 Lam R11^H + sigma2 I)^-1``.

    ``Z[k]`` acts on the last ``window(k) = min(k - 1, N_l)`` rows above
    level ``k``; it has shape ``(..., w, w)``.
    """

    N: int
    N_l: int
    Z: dict = field(default_factory=dict)

    def window(self, k):
        return min(k - 1, self.N_l)

    def __getitem__(self, k):
        return self.Z[k]

    @property
    def full(self):
        return self.N_l >= self.N - 1


def z_extend(Z, r, rjj, lam, sigma2):
    """Grow ``Z`` by one row/column (block-inverse update, no inversion).

    ``Z`` is ``(..., w, w)``, ``r`` the ``w`` entries of the new column of
    ``R`` above the diagonal, ``rjj`` the (real) diagonal entry and ``lam``
    the prior variance of the new symbol.
    """
    Zr = np.einsum("...ij,...j->...i", Z, r)
    rZr = np.real(np.einsum("...i,...i->...", np.conj(r), Zr))
    lam = np.asarray(lam, dtype=float)
    K = 1.0 / (lam * (rZr + rjj ** 2) + sigma2)
    Klam = K * lam
    w = Z.shape[-1]
    out = np.empty(Z.shape[:-2] + (w + 1, w + 1), dtype=complex)
    out[..., :w, :w] = Z - Klam[..., None, None] * Zr[..., :, None] * np.conj(Zr)[..., None, :]
    out[..., :w, w] = -(Klam * rjj)[..., None] * Zr
    out[..., w, :w] = -(Klam * rjj)[..., None] * np.conj(Zr)
    out[..., w, w] = K * (lam * rZr + sigma2)
    return out


def _z_chain(R, lam, sigma2, start, stop):
    """Yield ``Z`` for windows ``[start, j)`` with ``j = start+1 .. stop``."""
    batch = R.shape[:-2]
    Z = np.zeros(batch + (0, 0), dtype=complex)
    for j in range(start, stop):
        Z = z_extend(Z, R[..., start:j, j], np.real(R[..., j, j]), lam[..., j], sigma2)
        yield Z


def compute_z_sequence(problem, N_l=None):
    """Precompute ``Z_k`` for ``k = 2 .. N``.

    With ``N_l >= N - 1`` (or ``None``) the full operators are built by one
    recursion; otherwise each level uses the window of the ``N_l`` rows
    directly above it, built by the same recursion restricted to that window.
    """
    R = problem.R
    lam = np.asarray(problem.priors.sym_var, dtype=float)
    return z_sequence(R, lam, problem.sigma2, N_l)


def z_sequence(R, lam, sigma2, N_l=None):
    N = R.shape[-1]
    N_l = N - 1 if N_l is None else int(N_l)
    sigma2 = np.asarray(sigma2, dtype=float)
    zs = ZSequence(N=N, N_l=N_l)
    if N_l <= 0:
        return zs
    head = min(N_l, N - 1)
    for j, Z in enumerate(_z_chain(R, lam, sigma2, 0, head)):
        zs.Z[j + 2] = Z
    for k in range(head + 2, N + 1):
        start = k - 1 - N_l
        for Z in _z_chain(R, lam, sigma2, start, k - 1):
            pass
        zs.Z[k] = Z
    return zs


def _completions(S, n):
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(product(range(S), repeat=n)), dtype=np.int64)


def genie_bias(problem, k, target, combos=None):
    """Exact ``min_{x_1..x_{k-1}} sum_{i<k} b(x_i^N)``.

    ``target`` holds ``y_1^{k-1} - R_12 x_k^N`` with shape ``(..., P, k-1)``
    where the leading dims match the problem's batch shape.
    """
    n = k - 1
    if n == 0:
        return np.zeros(target.shape[:-1])
    c = problem.constellation
    if n * c.Q > GENIE_MAX_BITS:
        raise TooLarge(f"genie enumeration over {n * c.Q} bits exceeds {GENIE_MAX_BITS}")
    X = _completions(c.size, n) if combos is None else combos  # (C, n)
    R11 = problem.R[..., :n, :n]
    RX = np.einsum("...ij,cj->...ci", R11, c.points[X])  # (..., C, n)
    lp = problem.priors.log_prior[..., :n, :]  # (..., n, S)
    prior = lp[..., np.arange(n)[None, :], X].sum(-1)  # (..., C)
    with np.errstate(invalid="ignore"):
        xi = np.where(np.isneginf(prior), np.inf, -np.asarray(problem.sigma2)[..., None] * prior)
    extra = target.ndim - RX.ndim + 1  # node axes between batch and the row axis
    RX = RX.reshape(RX.shape[:-2] + (1,) * extra + RX.shape[-2:])
    xi = xi.reshape(xi.shape[:-1] + (1,) * extra + xi.shape[-1:])
    d = np.sum(np.abs(target[..., None, :] - RX) ** 2, axis=-1) + xi
    return d.min(axis=-1)


def genie_metric(problem, symbols):
    """Genie-aided metric of the partial path ``symbols`` = ``x_k .. x_N``."""
    symbols = tuple(int(s) for s in symbols)
    N = problem.N
    k = N - len(symbols) + 1
    if not 1 <= k <= N:
        raise ShapeError("partial path must hold 1..N symbols")
    gamma_c = sum(branch_metric(problem, i, symbols[i - k:]) for i in range(k, N + 1))
    x = problem.constellation.points[np.array(symbols)]
    target = problem.y[:k - 1] - problem.R[:k - 1, k - 1:] @ x
    return float(gamma_c + genie_bias(problem, k, target[None, :])[0])
