"""Figure rendering for the experiment reports.

Each experiment writes its CSV and, unless figures are disabled, a PNG with
the same stem.  The CSV stays the canonical, byte-reproducible output; the
figures are companions for quick inspection.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.8,
    "font.size": 10,
}


def _fig():
    plt.rcParams.update(_STYLE)
    return plt.subplots()


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_align_check(rows, path):
    fig, ax = _fig()
    trials = [r["trial"] for r in rows]
    ax.semilogy(trials, [max(r["min_rank_ratio"], 1e-20) for r in rows],
                ".", label="min stack rank ratio")
    ax.semilogy(trials, [max(r["eq_shared_residual"], 1e-20) for r in rows],
                "x", label="shared-span residual")
    ax.semilogy(trials, [max(r["eq_membership_residual"], 1e-20) for r in rows],
                "+", label="membership residual")
    ax.axhline(1e-9, color="k", ls="--", lw=1, label="rank threshold")
    ax.set_xlabel("trial")
    ax.set_ylabel("value")
    ax.set_title("alignment check")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_error_decay(rows, path, xkey):
    fig, ax = _fig()
    xs = [r[xkey] for r in rows]
    for key, style in (("measured", "o-"), ("bound", "s--")):
        if key in rows[0]:
            ax.loglog(xs, [r[key] for r in rows], style, label=key)
    if "diag_deviation" in rows[0]:
        ax.loglog(xs, [r["diag_deviation"] for r in rows], "^:",
                  label="raw diagonal deviation")
    ax.set_xlabel(xkey)
    ax.set_ylabel("error")
    ax.set_title("approximation error decay")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_dof_sweep(rows, path, slope, target=None):
    fig, ax = _fig()
    snr = np.array([r["snr_db"] for r in rows])
    rate = np.array([r["sum_rate"] for r in rows])
    ax.plot(snr, rate, "o-", label="sum rate")
    x = np.log2(10 ** (snr / 10))
    half = len(x) // 2
    fit = np.polyfit(x[half:], rate[half:], 1)
    ax.plot(snr, np.polyval(fit, x), "--", label=f"slope {slope:.4f}")
    if target is not None:
        ref = rate[-1] + target * (x - x[-1])
        ax.plot(snr, ref, ":", label=f"target slope {target:.4f}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("sum rate (bits / channel use)")
    ax.set_title("rate sweep")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_mimo_demo(rows, path):
    fig, ax = _fig()
    users = [r["user"] for r in rows]
    ax.semilogy(users, [max(r["recovery_error"], 1e-20) for r in rows],
                "o", label="recovery error")
    ax.semilogy(users, [max(r["projector_leakage"], 1e-20) for r in rows],
                "s", label="projector leakage")
    ax.axhline(1e-6, color="k", ls="--", lw=1)
    ax.set_xlabel("user")
    ax.set_ylabel("relative error")
    ax.set_title("multi-antenna recovery")
    ax.legend(fontsize=8)
    _save(fig, path)
