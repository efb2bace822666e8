"""Soft-output M-algorithm detector and the MMSE-PIC baseline.

The search is vectorized over a stack of independent detection problems:
every level expands all survivors of all problems at once. Ties between
equal metrics are broken by (parent index, symbol index), which is what a
stable sort over the flattened child array gives.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ParamError
from .pathmetric import DetectionProblem, genie_bias, z_sequence, _completions
from .priors import PriorStats

log = logging.getLogger(__name__)

METRICS = ("causal", "lela", "genie")
ORDERINGS = ("vblast", "none")
CLIP_MODES = ("fallback", "always")
# complex entries per flip-evaluation block
FLIP_CHUNK = 1 << 22


@dataclass
class SearchConfig:
    M: int = 4
    J: int = 16
    N_l: int = 5
    metric: str = "lela"
    llr_clip: float = 8.0
    ordering: str = "vblast"
    # "fallback": only a bit with no counter-hypothesis gets +-llr_clip;
    # "always": every posterior LLR is clipped to +-llr_clip
    clip_mode: str = "fallback"

    def __post_init__(self):
        if self.M < 1:
            raise ParamError(f"M must be >= 1, got {self.M}")
        if self.J < 0:
            raise ParamError(f"J must be >= 0, got {self.J}")
        if self.N_l < 0:
            raise ParamError(f"N_l must be >= 0, got {self.N_l}")
        if self.metric not in METRICS:
            raise ParamError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.ordering not in ORDERINGS:
            raise ParamError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        if self.clip_mode not in CLIP_MODES:
            raise ParamError(f"clip_mode must be one of {CLIP_MODES}, got {self.clip_mode!r}")
        if not self.llr_clip > 0:
            raise ParamError(f"llr_clip must be positive, got {self.llr_clip}")

    def check_list_size(self, Q):
        if self.J > (1 << Q) * self.M:
            raise ParamError(f"J={self.J} exceeds 2^Q*M={(1 << Q) * self.M}")


class MultiplicationCounter:
    """Complex multiplications by category.

    A complex-by-complex product and a squared magnitude each count as one.
    QR decomposition and detection ordering are not counted.

    ``bias`` holds the whitening matvecs (one per survivor and level);
    ``bias_update`` the per-child corrections and norms of the bias term.
    """

    CATEGORIES = ("metric", "bias", "bias_update", "llr", "linear")

    def __init__(self):
        self.counts = Counter()
        self.vectors = 0

    def add(self, category, n):
        self.counts[category] += int(n)

    @property
    def total(self):
        return sum(self.counts.values())

    def __getitem__(self, category):
        return self.counts[category]

    def merge(self, other):
        self.counts.update(other.counts)
        self.vectors += other.vectors

    def per_vector(self, category=None):
        n = self.total if category is None else self.counts[category]
        return n / self.vectors if self.vectors else 0.0


@dataclass(eq=False)
class CandidateList:
    """Complete paths surviving the search, sorted by cost.

    ``symbols`` has shape ``(..., size, N)`` holding constellation indices in
    the detection order; ``cost`` is ``d_APP`` including the constant term;
    ``psi = -cost / sigma2``.
    """

    symbols: np.ndarray
    cost: np.ndarray
    psi: np.ndarray
    permutation: np.ndarray = None

    @property
    def size(self):
        return self.symbols.shape[-2]


@dataclass(eq=False)
class DetectorOutput:
    extrinsic_llrs: np.ndarray
    posterior_llrs: np.ndarray
    stats: dict = field(default_factory=dict)


def _flat(problem):
    """Problem arrays reshaped to a single batch axis."""
    bs = problem.batch_shape
    B = int(np.prod(bs)) if bs else 1
    N = problem.N
    c = problem.constellation
    R = problem.R.reshape(B, N, N)
    y = problem.y.reshape(B, N)
    sigma2 = np.broadcast_to(np.asarray(problem.sigma2, dtype=float), bs).reshape(B)
    C = np.broadcast_to(np.asarray(problem.C_const, dtype=float), bs).reshape(B)
    pri = problem.priors
    flat = PriorStats(llr=pri.llr.reshape(B, N, c.Q), bit_prob=pri.bit_prob.reshape(B, N, c.Q),
                      sym_mean=pri.sym_mean.reshape(B, N), sym_var=pri.sym_var.reshape(B, N),
                      log_prior=pri.log_prior.reshape(B, N, c.size))
    return DetectionProblem(R, y, sigma2, flat, c, C), bs


def _prior_terms(problem):
    lp = problem.priors.log_prior
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(lp), np.inf, -problem.sigma2[:, None, None] * lp)


def m_search(problem, cfg, zs=None, counter=None):
    """Breadth-first M-algorithm over a (stack of) detection problem(s).

    Levels ``N .. 2`` keep the ``M`` children with the smallest metric;
    level 1 keeps all ``2**Q * M`` complete paths, sorted by cost.
    """
    flat, bs = _flat(problem)
    B, N = flat.y.shape
    c = flat.constellation
    S = c.size
    pts = c.points
    R = flat.R
    xbar = flat.priors.sym_mean
    xi = _prior_terms(flat)  # (B, N, S)

    if cfg.metric == "lela" and zs is None:
        zs = z_sequence(R, flat.priors.sym_var, flat.sigma2, cfg.N_l)
    combos = {}

    a = (flat.y - np.einsum("bij,bj->bi", R, xbar))[:, None, :]  # (B, P, k)
    gc = np.zeros((B, 1))
    syms = np.zeros((B, 1, N), dtype=np.int64)
    n_metric = n_bias = n_bias_upd = 0

    for k in range(N, 0, -1):
        i0 = k - 1
        P = a.shape[1]
        delta = pts[None, :] - xbar[:, i0, None]  # (B, S)
        prod = delta[:, :, None] * R[:, None, :k, i0]  # (B, S, k)
        child = a[:, :, None, :] - prod[:, None, :, :]  # (B, P, S, k)
        n_metric += S * k + P * S
        with np.errstate(invalid="ignore"):
            g_child = gc[:, :, None] + np.abs(child[..., i0]) ** 2 + xi[:, None, i0, :]
        a_child = child[..., :i0]

        metric = g_child
        if cfg.metric == "lela" and k > 1:
            w = zs.window(k)
            if w > 0:
                # Z a_child = Z a_parent - delta * Z r: one matvec per survivor
                Zk = zs[k]
                base = np.einsum("bij,bpj->bpi", Zk, a[:, :, i0 - w:i0])
                Zr = np.einsum("bij,bj->bi", Zk, R[:, i0 - w:i0, i0])
                u = base[:, :, None, :] - delta[:, None, :, None] * Zr[:, None, None, :]
                metric = g_child + np.sum(u.real ** 2 + u.imag ** 2, axis=-1)
                n_bias += P * w * w
                n_bias_upd += w * w + 2 * P * S * w
        elif cfg.metric == "genie" and k > 1:
            if i0 not in combos:
                combos[i0] = _completions(S, i0)
            target = a_child + np.einsum("bij,bj->bi", R[:, :i0, :i0], xbar[:, :i0])[:, None, None, :]
            metric = g_child + genie_bias(flat, k, target, combos[i0])

        keep = P * S if k == 1 else min(cfg.M, P * S)
        flat_metric = metric.reshape(B, P * S)
        order = np.argsort(flat_metric, axis=1, kind="stable")[:, :keep]
        parent, sym = np.divmod(order, S)
        a = np.take_along_axis(a_child.reshape(B, P * S, i0), order[:, :, None], axis=1)
        gc = np.take_along_axis(g_child.reshape(B, P * S), order, axis=1)
        syms = np.take_along_axis(syms, parent[:, :, None], axis=1)
        syms[:, :, i0] = sym

    if counter is not None:
        counter.add("metric", B * n_metric)
        counter.add("bias", B * n_bias)
        counter.add("bias_update", B * n_bias_upd)
        counter.vectors += B

    cost = gc + flat.C_const[:, None]
    psi = -cost / flat.sigma2[:, None]
    size = syms.shape[1]
    return CandidateList(symbols=syms.reshape(bs + (size, N)), cost=cost.reshape(bs + (size,)),
                         psi=psi.reshape(bs + (size,)))


def exact_psi(problem, symbols, batch_index=None):
    """``psi(x) = -(||y - R x||^2 + C) / sigma2 + sum ln Pr(x)`` for stacked paths.

    ``problem`` is flat (single batch axis); ``symbols`` is ``(E, J, N)`` and
    ``batch_index`` maps each of the ``E`` rows to a problem.
    """
    b = np.arange(len(symbols)) if batch_index is None else batch_index
    x = problem.constellation.points[symbols]
    r = problem.y[b][:, None, :] - np.einsum("eij,ekj->eki", problem.R[b], x)
    lp = np.take_along_axis(problem.priors.log_prior[b][:, None, :, :],
                            symbols[..., None], axis=-1)[..., 0].sum(-1)
    s2 = problem.sigma2[b][:, None]
    return -(np.sum(np.abs(r) ** 2, axis=-1) + problem.C_const[b][:, None]) / s2 + lp


def extend_and_compute_llrs(cands, problem, cfg, counter=None):
    """Max-log bit LLRs from the candidate list, with bit-flip list extension.

    For a bit on which every candidate agrees, the bit is flipped in the
    ``J`` lowest-cost candidates and their ``psi`` is evaluated exactly.
    A bit still lacking a counter-hypothesis (``J = 0``) gets ``+-llr_clip``;
    with ``clip_mode="always"`` every posterior is clipped to that range.
    Flipped vectors cannot already be in the list (the list holds no vector
    with the opposite bit value) and are pairwise distinct, so no
    de-duplication is needed.
    """
    flat, bs = _flat(problem)
    B, N = flat.y.shape
    c = flat.constellation
    Q = c.Q
    size = cands.size
    syms = cands.symbols.reshape(B, size, N)
    psi = cands.psi.reshape(B, size)
    cost = cands.cost.reshape(B, size)

    bits = c.bits[syms].astype(bool)  # (B, size, N, Q)
    p = psi[:, :, None, None]
    max_one = np.where(bits, p, -np.inf).max(axis=1)
    max_zero = np.where(~bits, p, -np.inf).max(axis=1)
    one_sided = bits.all(axis=1) | ~bits.any(axis=1)

    n_flip = 0
    J = min(cfg.J, size)
    if J > 0 and one_sided.any():
        best = np.argsort(cost, axis=1, kind="stable")[:, :J]  # (B, J)
        events = np.nonzero(one_sided)
        step = max(1, FLIP_CHUNK // (J * N * N))
        for s0 in range(0, len(events[0]), step):
            bi, ni, qi = (ev[s0:s0 + step] for ev in events)
            base = np.take_along_axis(syms[bi], best[bi][:, :, None], axis=1)  # (E, J, N)
            flipped = base.copy()
            e = np.arange(len(bi))
            flipped[e, :, ni] = c.flip_bit(base[e, :, ni], qi[:, None])
            psi_f = exact_psi(flat, flipped, bi).max(axis=1)
            was_one = bits[bi, 0, ni, qi]
            max_zero[bi, ni, qi] = np.where(was_one, psi_f, max_zero[bi, ni, qi])
            max_one[bi, ni, qi] = np.where(was_one, max_one[bi, ni, qi], psi_f)
        n_flip = len(events[0]) * J
        if counter is not None:
            counter.add("llr", n_flip * (N * (N + 1) // 2 + N))

    with np.errstate(invalid="ignore"):
        post = max_one - max_zero
    post = np.where(np.isnan(post), 0.0, post)
    if cfg.clip_mode == "always":
        post = np.clip(post, -cfg.llr_clip, cfg.llr_clip)
    else:
        post = np.where(np.isinf(post), np.sign(post) * cfg.llr_clip, post)
    ext = post - flat.priors.llr
    shape = bs + (N, Q)
    stats = {"list_size": size + (J if n_flip else 0), "flips": n_flip}
    if counter is not None:
        stats["multiplications"] = counter.total
    return DetectorOutput(ext.reshape(shape), post.reshape(shape), stats)


def vblast_order(H, sigma2):
    """MMSE-based successive ordering.

    Returns ``perm`` with ``perm[j]`` the column of ``H`` placed at tree level
    ``j + 1``; the last entry is the most reliable stream (detected first).
    Equal reliabilities are resolved in favour of the larger column index,
    so ``H = I`` yields the identity.
    """
    H = np.asarray(H, dtype=complex)
    bs = H.shape[:-2]
    L, N = H.shape[-2:]
    Hf = H.reshape((-1, L, N))
    B = Hf.shape[0]
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), bs).reshape(B)

    sv = np.linalg.svd(Hf, compute_uv=False)
    deficient = sv[:, -1] < 1e-12 * np.maximum(sv[:, 0], np.finfo(float).tiny)

    G = np.einsum("bli,blj->bij", np.conj(Hf), Hf) + s2[:, None, None] * np.eye(N)
    # deficient channels are ordered separately below; keep the inverse defined
    G[deficient] = np.eye(N)
    P = np.linalg.inv(G)
    perm = np.empty((B, N), dtype=np.int64)
    done = np.zeros((B, N), dtype=bool)
    idx = np.arange(N)
    rows = np.arange(B)
    for pos in range(N - 1, -1, -1):
        d = np.where(done, np.inf, np.real(np.diagonal(P, axis1=1, axis2=2)))
        best = d.min(axis=1, keepdims=True)
        tied = (d <= best * (1 + 1e-12)) & ~done
        j = np.argmax(np.where(tied, idx, -1), axis=1)
        perm[:, pos] = j
        done[rows, j] = True
        pj = P[rows, :, j]
        P = P - pj[:, :, None] * P[rows, j, :][:, None, :] / P[rows, j, j][:, None, None]

    if deficient.any():
        log.warning("rank-deficient channel: falling back to column-norm ordering")
        norms = np.sum(np.abs(Hf[deficient]) ** 2, axis=1)
        perm[deficient] = np.argsort(norms, axis=1, kind="stable")
    return perm.reshape(bs + (N,))


def detect(H, y_o, sigma2, llr_pri, c, cfg, counter=None):
    """Full detection pipeline for a stack of received vectors.

    Parameters
    ----------
    H : ndarray, shape (..., L, N)
    y_o : ndarray, shape (..., L)
    sigma2 : float or ndarray broadcastable to the batch shape
    llr_pri : ndarray, shape (..., N, Q)
        A priori LLRs (positive favours bit 1); clipped to ``+-cfg.llr_clip``.
    c : Constellation
    cfg : SearchConfig
    counter : MultiplicationCounter, optional

    Returns
    -------
    DetectorOutput
        LLRs in the original stream order, shape ``(..., N, Q)``.
    """
    H = np.asarray(H, dtype=complex)
    bs = H.shape[:-2]
    N = H.shape[-1]
    llr_pri = np.clip(np.broadcast_to(np.asarray(llr_pri, dtype=float), bs + (N, c.Q)),
                      -cfg.llr_clip, cfg.llr_clip)
    if cfg.ordering == "vblast":
        perm = vblast_order(H, sigma2)
    else:
        perm = np.broadcast_to(np.arange(N), bs + (N,))
    Hp = np.take_along_axis(H, perm[..., None, :], axis=-1)
    pri = PriorStats.from_llrs(np.take_along_axis(llr_pri, perm[..., None], axis=-2), c)
    problem = DetectionProblem.from_channel(Hp, y_o, sigma2, pri, c)
    cands = m_search(problem, cfg, counter=counter)
    cands.permutation = perm
    out = extend_and_compute_llrs(cands, problem, cfg, counter)
    post = np.empty_like(out.posterior_llrs)
    np.put_along_axis(post, perm[..., None], out.posterior_llrs, axis=-2)
    return DetectorOutput(post - llr_pri, post, out.stats)


def mmse_pic_detect(H, y_o, sigma2, llr_pri, c, llr_clip=8.0, counter=None, clip_mode="fallback"):
    """Soft interference cancellation followed by per-stream MMSE filtering.

    The filter output for stream ``k`` is modelled as ``x_k + CN(0, nu2)``
    and converted to max-log extrinsic bit LLRs using the priors of the
    other bits of the same symbol. ``clip_mode`` has the same meaning as in
    :class:`SearchConfig`.
    """
    H = np.asarray(H, dtype=complex)
    y_o = np.asarray(y_o, dtype=complex)
    bs = H.shape[:-2]
    L, N = H.shape[-2:]
    Q = c.Q
    llr_pri = np.clip(np.broadcast_to(np.asarray(llr_pri, dtype=float), bs + (N, Q)),
                      -llr_clip, llr_clip)
    pri = PriorStats.from_llrs(llr_pri, c)
    s2 = np.asarray(sigma2, dtype=float)
    s2 = s2.reshape(s2.shape + (1,) * (H.ndim - 2 - s2.ndim))

    lam = pri.sym_var
    xbar = pri.sym_mean
    A = np.einsum("...ln,...n,...mn->...lm", H, lam, np.conj(H)) + s2[..., None] * np.eye(L)
    AiH = np.linalg.solve(A, H)  # columns A^-1 h_k
    g = np.real(np.einsum("...ln,...ln->...n", np.conj(H), AiH))
    denom = 1.0 + (1.0 - lam) * g
    mu = g / denom
    resid = y_o - np.einsum("...ln,...n->...l", H, xbar)
    z = (np.einsum("...ln,...l->...n", np.conj(AiH), resid) + g * xbar) / denom
    xhat = z / mu
    nu2 = np.maximum((1.0 - mu) / mu, 1e-300)

    metric = -np.abs(xhat[..., None] - c.points) ** 2 / nu2[..., None]  # (..., N, S)
    ext = np.empty(bs + (N, Q))
    for q in range(Q):
        others = np.delete(np.arange(Q), q)
        # log-prior of the other bits as +-L/2 (the common term cancels)
        lp = 0.5 * np.einsum("...nq,sq->...ns", llr_pri[..., others], c.signs[:, others])
        tot = metric + lp
        one = c.bits[:, q] == 1
        ext[..., q] = tot[..., one].max(-1) - tot[..., ~one].max(-1)
    if clip_mode == "always":
        post = np.clip(ext + llr_pri, -llr_clip, llr_clip)
    else:
        # the filter output excludes the stream's own prior, so bound the
        # extrinsic itself; subtracting a clipped prior from a clipped
        # posterior would erase it once both saturate
        ext = np.clip(np.nan_to_num(ext, nan=0.0), -llr_clip, llr_clip)
        post = ext + llr_pri
    if counter is not None:
        B = int(np.prod(bs)) if bs else 1
        counter.add("linear", B * (2 * L * L * N + L ** 3 // 3 + 2 * L * N + N * c.size))
        counter.vectors += B
    return DetectorOutput(post - llr_pri, post, {"list_size": 0, "flips": 0})
