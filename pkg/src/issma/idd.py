"""Iterative detection and decoding over a fast-fading MIMO channel.

All frames of one SNR point are processed together; the detector sees the
stack of every symbol vector of every frame. Each frame draws its bits,
channels and noise from its own stream seeded by ``(seed, snr index, frame)``
so that runs with different detectors see identical realizations.
"""

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .comms import (ChannelModel, Constellation, Interleaver, RSC_CODE, add_awgn, rsc_encode,
                    sample_channel, snr_db_to_sigma2)
from .decoder import TRELLIS, decode
from .detector import MultiplicationCounter, SearchConfig, detect, mmse_pic_detect
from .errors import ConfigError, ParamError

DETECTORS = ("issma", "conventional_ma", "mmse_pic")
# symbol vectors handed to the detector at once
DETECT_CHUNK = 4096


@dataclass
class IddConfig:
    N: int = 4
    L: int = 4
    Q: int = 2
    snr_db: tuple = (6.0,)
    iterations: int = 7
    info_bits: int = 200000
    frame_coded_bits: int = 12000
    search: SearchConfig = field(default_factory=SearchConfig)
    detector: str = "issma"
    channel: ChannelModel = None
    fading: str = "fast"
    seed: int = 0

    def __post_init__(self):
        if self.channel is None:
            self.channel = ChannelModel(self.L, self.N)
        self.snr_db = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        self.validate()

    def validate(self):
        checks = [
            ("N", self.N >= 1, "must be >= 1"),
            ("L", self.L >= self.N, "must be >= N"),
            ("Q", self.Q >= 2 and self.Q % 2 == 0, "must be even and >= 2"),
            ("iterations", self.iterations >= 1, "must be >= 1"),
            ("info_bits", self.info_bits > 0, "must be > 0"),
            ("frame_coded_bits", self.frame_coded_bits >= 2 and self.frame_coded_bits % 2 == 0,
             "must be even and >= 2"),
            ("detector", self.detector in DETECTORS, f"must be one of {DETECTORS}"),
            ("fading", self.fading in ("fast", "block"), "must be 'fast' or 'block'"),
            ("snr_db", len(self.snr_db) > 0, "must not be empty"),
            ("channel", (self.channel.L, self.channel.N) == (self.L, self.N),
             "dimensions must match (L, N)"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, msg)
        try:
            self.search.check_list_size(self.Q)
        except ParamError as exc:
            raise ConfigError("search.J", str(exc)) from None

    @property
    def info_per_frame(self):
        return self.frame_coded_bits // 2

    @property
    def frames(self):
        return math.ceil(self.info_bits / self.info_per_frame)

    @property
    def vectors_per_frame(self):
        return math.ceil(self.frame_coded_bits / (self.N * self.Q))

    def search_config(self):
        if self.detector == "conventional_ma":
            return dataclasses.replace(self.search, N_l=0, metric="causal")
        return self.search


@dataclass
class IddResult:
    """One row per (SNR, iteration)."""

    rows: list = field(default_factory=list)

    COLUMNS = ("snr_db", "iteration", "ber_info", "ber_coded", "mult_per_symbol", "frames")

    def ber(self, iteration, kind="ber_info"):
        pts = sorted((r["snr_db"], r[kind]) for r in self.rows if r["iteration"] == iteration)
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def snr_at_ber(self, target=0.01, iteration=None):
        """SNR where the BER curve crosses ``target`` (log-linear interpolation)."""
        it = max(r["iteration"] for r in self.rows) if iteration is None else iteration
        snr, ber = self.ber(it)
        return interpolate_crossing(snr, ber, target)


def interpolate_crossing(snr, ber, target):
    """First crossing of ``target`` by a decreasing BER curve, interpolating
    ``log10(BER)`` linearly in SNR. Returns ``nan`` if the curve never crosses."""
    lb = np.log10(np.maximum(np.asarray(ber, dtype=float), 1e-12))
    lt = np.log10(target)
    for i in range(len(snr) - 1):
        if lb[i] >= lt >= lb[i + 1] and lb[i] != lb[i + 1]:
            return float(snr[i] + (lt - lb[i]) * (snr[i + 1] - snr[i]) / (lb[i + 1] - lb[i]))
    return float("nan")


def _frame_rng(seed, snr_index, frame):
    return np.random.default_rng([int(seed), int(snr_index), int(frame)])


def _interleaver(cfg):
    return Interleaver.random(cfg.frame_coded_bits, np.random.default_rng([int(cfg.seed), 1 << 20]))


def _transmit(cfg, c, sigma2, snr_index):
    """Per-frame bits, coded bits, channels and received vectors."""
    F = cfg.frame_coded_bits
    V = cfg.vectors_per_frame
    pad = V * cfg.N * cfg.Q - F
    il = _interleaver(cfg)
    info, coded, H, y = [], [], [], []
    for f in range(cfg.frames):
        rng = _frame_rng(cfg.seed, snr_index, f)
        u = rng.integers(0, 2, cfg.info_per_frame)
        cb = rsc_encode(u, RSC_CODE)
        tx = np.concatenate([il.interleave(cb), np.zeros(pad, dtype=np.int64)])
        s = c.points[c.bits_to_indices(tx.reshape(V, cfg.N * cfg.Q))]
        if cfg.fading == "fast":
            h = sample_channel(cfg.channel, rng, V)
        else:
            h = np.broadcast_to(sample_channel(cfg.channel, rng), (V, cfg.L, cfg.N))
        yo = add_awgn(np.einsum("vln,vn->vl", h, s), sigma2, rng)
        info.append(u)
        coded.append(cb)
        H.append(h)
        y.append(yo)
    return np.stack(info), np.stack(coded), np.stack(H), np.stack(y), il


def _detect_all(cfg, c, H, y, sigma2, llr_pri, counter):
    scfg = cfg.search_config()
    n = H.shape[0]
    ext = np.empty(llr_pri.shape)
    post = np.empty(llr_pri.shape)
    for s0 in range(0, n, DETECT_CHUNK):
        sl = slice(s0, s0 + DETECT_CHUNK)
        if cfg.detector == "mmse_pic":
            out = mmse_pic_detect(H[sl], y[sl], sigma2, llr_pri[sl], c, scfg.llr_clip, counter,
                                  scfg.clip_mode)
        else:
            out = detect(H[sl], y[sl], sigma2, llr_pri[sl], c, scfg, counter)
        ext[sl] = out.extrinsic_llrs
        post[sl] = out.posterior_llrs
    return ext, post


def run_snr_point(cfg, snr_index):
    """All iterations at one SNR point; returns the result rows."""
    c = Constellation.qam(cfg.Q)
    snr = cfg.snr_db[snr_index]
    sigma2 = float(snr_db_to_sigma2(snr, cfg.N))
    info, coded, H, y, il = _transmit(cfg, c, sigma2, snr_index)
    Fr, V = H.shape[:2]
    F = cfg.frame_coded_bits
    shape = (Fr, V, cfg.N, cfg.Q)
    Hf = H.reshape(Fr * V, cfg.L, cfg.N)
    yf = y.reshape(Fr * V, cfg.L)

    prior = np.zeros(shape)
    rows = []
    for it in range(1, cfg.iterations + 1):
        counter = MultiplicationCounter()
        ext, post = _detect_all(cfg, c, Hf, yf, sigma2, prior.reshape(Fr * V, cfg.N, cfg.Q), counter)
        det_ext = il.deinterleave(ext.reshape(Fr, -1)[:, :F])
        det_post = il.deinterleave(post.reshape(Fr, -1)[:, :F])
        dec_ext, _, u_hat = decode(det_ext, TRELLIS)
        ber_coded = float(np.mean((det_post > 0) != (coded == 1)))
        ber_info = float(np.mean(u_hat != info))
        rows.append({"snr_db": snr, "iteration": it, "ber_info": ber_info, "ber_coded": ber_coded,
                     "mult_per_symbol": counter.per_vector(), "frames": Fr,
                     "bias_per_symbol": counter.per_vector("bias") + counter.per_vector("bias_update")})
        pr = np.zeros((Fr, V * cfg.N * cfg.Q))
        pr[:, :F] = il.interleave(dec_ext)
        prior = pr.reshape(shape)
    return rows


def run_idd(cfg, workers=1):
    """Simulate every SNR point of ``cfg``; SNR points run in parallel when
    ``workers > 1``. Results do not depend on ``workers``."""
    cfg.validate()
    idx = range(len(cfg.snr_db))
    if workers > 1 and len(cfg.snr_db) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run_snr_point, [cfg] * len(idx), idx))
    else:
        parts = [run_snr_point(cfg, i) for i in idx]
    return IddResult(rows=[r for p in parts for r in p])


def count_multiplications(fn, *args, **kwargs):
    """Run ``fn(..., counter=c)`` with a fresh counter; return ``(result, c)``."""
    counter = MultiplicationCounter()
    return fn(*args, counter=counter, **kwargs), counter
