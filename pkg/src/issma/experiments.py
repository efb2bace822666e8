"""Experiment drivers behind the command line. Each returns
``(columns, rows, extra)`` where ``extra`` lands in the JSON sidecar."""

import numpy as np

from . import analysis as an
from .comms import ChannelModel, Constellation, complex_normal, snr_db_to_sigma2
from .detector import MultiplicationCounter, SearchConfig, detect
from .idd import IddConfig, run_idd
from .numkit import qr_thin


def _rng(cfg, *tag):
    return np.random.default_rng([cfg["seed"], *tag])


def search_config(cfg):
    se = cfg["search"]
    return SearchConfig(M=se["M"] if se["M"] is not None else 4, J=se["J"], N_l=se["N_l"],
                        metric=se["metric"], llr_clip=se["llr_clip"], ordering=se["ordering"],
                        clip_mode=se["clip_mode"])


def idd_config(cfg, detector):
    s = cfg["system"]
    ch = s["channel"]
    if ch["kind"] == "kronecker_correlated":
        model = ChannelModel.exponential(s["L"], s["N"], ch["rho"])
    else:
        model = ChannelModel(s["L"], s["N"])
    return IddConfig(N=s["N"], L=s["L"], Q=s["Q"], snr_db=tuple(s["snr_db"]),
                     iterations=s["iterations"], info_bits=s["info_bits"],
                     frame_coded_bits=s["frame_coded_bits"], search=search_config(cfg),
                     detector=detector, channel=model, fading=s["fading"], seed=cfg["seed"])


def ber_sweep(cfg):
    dets = cfg["system"]["detectors"]
    base = ["snr_db", "iteration", "ber_info", "ber_coded", "mult_per_symbol", "frames"]
    cols = (["detector"] if len(dets) > 1 else []) + base
    rows, extra = [], {"snr_at_1pct": {}}
    for d in dets:
        res = run_idd(idd_config(cfg, d), workers=cfg["workers"])
        for r in res.rows:
            rows.append(([d] if len(dets) > 1 else []) + [r[c] for c in base])
        extra["snr_at_1pct"][d] = res.snr_at_ber(0.01)
    return cols, rows, extra


def cpl_sweep(cfg):
    s, a = cfg["system"], cfg["analysis"]
    N, L, Q = s["N"], s["L"], s["Q"]
    cols = ["snr_db", "cpl_simulated", "cpl_causal_simulated", "cpl_exact_sinr",
            "cpl_lower_sinr_bound", "cpl_dominant_lela", "cpl_dominant_causal"]
    rows = []
    for i, snr in enumerate(a["snr_db"]):
        sim_l, _ = an.simulate_cpl(L, N, Q, snr, a["trials"], "lela", _rng(cfg, 1, i))
        sim_c, _ = an.simulate_cpl(L, N, Q, snr, a["trials"], "causal", _rng(cfg, 1, i))
        sigma2 = float(snr_db_to_sigma2(snr, N))
        ex, lb = average_channel_cpl(L, N, Q, sigma2, a["bound_channels"], _rng(cfg, 2, i))
        dom_l, dom_c = an.avg_cpl_dominant(L, N, Q, sigma2, 1.0, a["mc_samples"], _rng(cfg, 3, i))
        rows.append([snr, sim_l, sim_c, ex, lb, dom_l, dom_c])
    return cols, rows, {}


def average_channel_cpl(L, N, Q, sigma2, channels, rng):
    """Channel average of the total CPL built from per-level exact-SINR and
    lower-bound-SINR values."""
    ex = np.empty(channels)
    lb = np.empty(channels)
    for i in range(channels):
        _, R = qr_thin(complex_normal(rng, (L, N)))
        pe, pl, _ = an.channel_cpl_bounds(R, sigma2, Q)
        ex[i] = an.cpl_total(pe)[0]
        lb[i] = an.cpl_total(pl)[0]
    return float(ex.mean()), float(lb.mean())


def scaling_gain(cfg):
    s, a = cfg["system"], cfg["analysis"]
    cols = ["N", "snr_db", "scaling_gain", "stderr", "flagged"]
    rows = []
    for n in a["sizes"]:
        for j, snr in enumerate(a["snr_db"]):
            g = an.scaling_gain(n, n, s["Q"], float(snr_db_to_sigma2(snr, n)), a["lambda_max"],
                                a["mc_samples"], _rng(cfg, 4, n, j))
            rows.append([n, snr, g.value, g.stderr, int(g.flagged)])
    return cols, rows, {}


def sinr_bounds(cfg):
    s, a = cfg["system"], cfg["analysis"]
    N, L = s["N"], s["L"]
    cols = ["snr_db", "k", "sinr_causal", "sinr_lela", "lower", "upper", "violations"]
    rows = []
    for i, snr in enumerate(a["snr_db"]):
        rng = _rng(cfg, 5, i)
        sigma2 = float(snr_db_to_sigma2(snr, N))
        acc = np.zeros((N, 4))
        viol = np.zeros(N, dtype=int)
        for _ in range(a["instances"]):
            _, R = qr_thin(complex_normal(rng, (L, N)))
            lam = rng.uniform(a["lambda_min"], a["lambda_max"], N)
            for k in range(1, N + 1):
                ctx = an.LevelContext.from_R(R, lam, sigma2, k)
                v = an.sinr_lela(ctx)
                lo, up = an.sinr_bounds(ctx)
                acc[k - 1] += (an.sinr_causal(ctx), v, lo, up)
                viol[k - 1] += int(not (lo - 1e-12 * abs(lo) <= v <= up + 1e-12 * abs(up)))
        acc /= a["instances"]
        for k in range(1, N + 1):
            rows.append([snr, k, *acc[k - 1], int(viol[k - 1])])
    return cols, rows, {}


def complexity_counts(N, L, Q, M, N_l_values, vectors, snr_db, rng):
    """Per-vector bias and total multiplication counts for each ``N_l``."""
    c = Constellation.qam(Q)
    sigma2 = float(snr_db_to_sigma2(snr_db, N))
    H = complex_normal(rng, (vectors, L, N))
    s = rng.integers(0, c.size, (vectors, N))
    y = np.einsum("vln,vn->vl", H, c.points[s]) + complex_normal(rng, (vectors, L), sigma2)
    out = []
    for nl in N_l_values:
        counter = MultiplicationCounter()
        detect(H, y, sigma2, np.zeros((vectors, N, Q)), c, SearchConfig(M=M, N_l=nl), counter)
        bias = counter.per_vector("bias") + counter.per_vector("bias_update")
        out.append((nl, bias, counter.per_vector("bias"), counter.per_vector()))
    return out


def fit_r2(x, y, intercept=True):
    """Coefficient of determination of a least-squares fit ``y ~ a x (+ b)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.c_[x, np.ones_like(x)] if intercept else x[:, None]
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    r = y - A @ coef
    return float(1.0 - (r @ r) / np.sum((y - y.mean()) ** 2)), coef


def complexity_report(cfg):
    s, a = cfg["system"], cfg["analysis"]
    N, M = s["N"], cfg["search"]["M"]
    snr = s["snr_db"][0]
    counts = complexity_counts(N, s["L"], s["Q"], M, a["N_l_values"], a["vectors"], snr, _rng(cfg, 6))
    model = [M * N * nl ** 2 for nl, *_ in counts]
    r2, coef = fit_r2(model, [b for _, b, _, _ in counts])
    cols = ["N_l", "bias_mults", "bias_matvec_mults", "total_mults", "model_M_N_Nl2"]
    rows = [[nl, b, bm, t, m] for (nl, b, bm, t), m in zip(counts, model)]
    return cols, rows, {"fit_r2": r2, "fit_slope": float(coef[0]), "fit_intercept": float(coef[1])}


def asymptotics(cfg):
    a = cfg["analysis"]
    cols = ["gamma_beta", "snr_db", "upper_inf", "lower_inf", "noiseless_limit"]
    extra_cols = a["finite_N"] > 0
    if extra_cols:
        cols += ["upper_finite", "lower_finite"]
    rows = []
    for gb in a["gamma_beta"]:
        p = an.AsymptoticParams(beta=1.0, gamma=gb)
        for j, snr in enumerate(a["snr_db"]):
            sigma2 = 10.0 ** (-snr / 10.0)
            up, lo = an.asymptotic_bounds(p, a["lambda_min"], a["lambda_max"], sigma2)
            row = [gb, snr, float(up), float(lo), an.upper_limit_noiseless(gb, a["lambda_min"])]
            if extra_cols:
                n = a["finite_N"]
                k = int(round(gb * n)) + 1
                fu, fl, _, _ = an.mc_gain_bounds(n, n, k, sigma2, a["finite_channels"], _rng(cfg, 7, j),
                                                 a["lambda_min"], a["lambda_max"])
                row += [fu, fl]
            rows.append(row)
    return cols, rows, {}


EXPERIMENTS = {
    "ber_sweep": ber_sweep,
    "cpl_sweep": cpl_sweep,
    "scaling_gain": scaling_gain,
    "sinr_bounds": sinr_bounds,
    "complexity_report": complexity_report,
    "asymptotics": asymptotics,
}
