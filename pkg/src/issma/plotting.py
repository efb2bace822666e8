"""PNG figures rendered next to each result CSV (non-interactive backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.6),
    "savefig.dpi": 150,
}


def _table(cols, rows):
    return {c: [r[i] for r in rows] for i, c in enumerate(cols)}


def _positive(v):
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, v, np.nan)


def plot_ber_sweep(ax, t):
    dets = sorted(set(t["detector"])) if "detector" in t else [None]
    last = max(t["iteration"])
    for d in dets:
        for it in sorted(set(t["iteration"])):
            if it not in (1, last):
                continue
            sel = [i for i in range(len(t["snr_db"]))
                   if t["iteration"][i] == it and (d is None or t["detector"][i] == d)]
            lab = f"{d + ', ' if d else ''}iter {it}"
            ax.semilogy([t["snr_db"][i] for i in sel], _positive([t["ber_info"][i] for i in sel]),
                        "o-" if it == last else "x--", label=lab)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("information BER")


def plot_cpl_sweep(ax, t):
    x = t["snr_db"]
    ax.semilogy(x, _positive(t["cpl_simulated"]), "o-", label="simulated, look-ahead")
    ax.semilogy(x, _positive(t["cpl_causal_simulated"]), "s-", label="simulated, causal")
    ax.semilogy(x, _positive(t["cpl_exact_sinr"]), "--", label="exact-SINR value")
    ax.semilogy(x, _positive(t["cpl_lower_sinr_bound"]), ":", label="lower-SINR bound")
    ax.semilogy(x, _positive(t["cpl_dominant_lela"]), "-.", label="top level, look-ahead")
    ax.semilogy(x, _positive(t["cpl_dominant_causal"]), "-.", label="top level, causal")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("CPL probability")


def plot_scaling_gain(ax, t):
    for n in sorted(set(t["N"])):
        sel = [i for i, v in enumerate(t["N"]) if v == n]
        ax.plot([t["snr_db"][i] for i in sel], [t["scaling_gain"][i] for i in sel], "o-", label=f"N = {n}")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("scaling gain")


def plot_sinr_bounds(ax, t):
    snrs = sorted(set(t["snr_db"]))
    s0 = snrs[len(snrs) // 2]
    sel = [i for i, v in enumerate(t["snr_db"]) if v == s0]
    k = [t["k"][i] for i in sel]
    for col, style in (("sinr_causal", "s-"), ("lower", "v--"), ("sinr_lela", "o-"), ("upper", "^--")):
        ax.semilogy(k, _positive([t[col][i] for i in sel]), style, label=col.replace("_", " "))
    ax.set_xlabel(f"level k (SNR {s0:g} dB)")
    ax.set_ylabel("mean SINR")


def plot_complexity_report(ax, t):
    ax.plot(t["model_M_N_Nl2"], t["bias_mults"], "o", label="counted")
    x = np.asarray(t["model_M_N_Nl2"], dtype=float)
    y = np.asarray(t["bias_mults"], dtype=float)
    a, b = np.polyfit(x, y, 1)
    ax.plot(x, a * x + b, "--", label="linear fit")
    for xi, yi, nl in zip(x, y, t["N_l"]):
        ax.annotate(f"N_l={nl}", (xi, yi), textcoords="offset points", xytext=(4, -10), fontsize=7)
    ax.set_xlabel("M N N_l^2")
    ax.set_ylabel("bias multiplications / vector")


def plot_asymptotics(ax, t):
    for gb in sorted(set(t["gamma_beta"])):
        sel = [i for i, v in enumerate(t["gamma_beta"]) if v == gb]
        x = [t["snr_db"][i] for i in sel]
        line, = ax.plot(x, [t["upper_inf"][i] for i in sel], "-", label=f"upper, gb={gb:g}")
        ax.plot(x, [t["lower_inf"][i] for i in sel], "--", color=line.get_color())
        if "upper_finite" in t:
            ax.plot(x, [t["upper_finite"][i] for i in sel], "o", color=line.get_color(), ms=3)
    ax.set_xlabel("1 / sigma2 [dB]")
    ax.set_ylabel("SINR gain bound")


PLOTTERS = {
    "ber_sweep": plot_ber_sweep,
    "cpl_sweep": plot_cpl_sweep,
    "scaling_gain": plot_scaling_gain,
    "sinr_bounds": plot_sinr_bounds,
    "complexity_report": plot_complexity_report,
    "asymptotics": plot_asymptotics,
}


def render(experiment, cols, rows, path):
    """Draw ``experiment``'s figure from its table and save it to ``path``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        PLOTTERS[experiment](ax, _table(cols, rows))
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
