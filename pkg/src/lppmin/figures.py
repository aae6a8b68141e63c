"""Figure rendering for experiment reports.

Every writer takes a result object and a target path and renders one figure.
Output is deterministic for a fixed result: the SVG id salt is pinned and
date metadata is stripped, so reruns produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lppmin"

import matplotlib.pyplot as plt
import numpy as np

from .env import mean_abs_F


def _save(fig, out) -> None:
    out = str(out)
    meta = {"Date": None} if out.endswith(".svg") else None
    fig.savefig(out, metadata=meta)
    plt.close(fig)


def save_shape_figure(est, out) -> None:
    """Estimated shape curve with the linear lower and corner upper bound."""
    c = est.params.c
    D = mean_abs_F(est.params)
    alphas = np.asarray(est.alphas)
    lam = np.array([est.lam(a) for a in alphas])
    se = np.array([est.se(a) for a in alphas])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(alphas, lam, yerr=se, fmt="o-", ms=3, lw=1, label="lambda_hat")
    grid = np.linspace(0, 1, 101)
    ax.plot(grid, c * (1 - grid), "--", lw=1, label="c(1-a)")
    ax.plot(grid, c - grid * (c - D), ":", lw=1, label="c-a(c-D)")
    ax.set_xlabel("slope a")
    ax.set_ylabel("minimal action rate")
    ax.set_title(f"shape estimate, kappa={est.params.kappa:g}, n={est.n_values[-1]}")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    _save(fig, out)


def save_cloud_figure(cloud, rectangles, out) -> None:
    """One rescaled discrepancy cloud with the test rectangles outlined."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.scatter(cloud.xs, cloud.ys, s=6, alpha=0.6, edgecolors="none")
    for (a1, a2, b1, b2) in rectangles:
        ax.add_patch(plt.Rectangle((a1, b1), a2 - a1, b2 - b1,
                                   fill=False, ec="tab:red", lw=1))
    ax.set_xlabel("x / n^zeta")
    ax.set_ylabel("n^(1-zeta) d(x)")
    ax.set_title(f"rescaled discrepancy cloud, n={cloud.n}")
    fig.tight_layout()
    _save(fig, out)


def save_scaling_figure(report, out) -> None:
    """Median |ell|, excess action, and d against n on log-log axes."""
    ns = np.asarray(report.n_grid, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, med, slope in (
        ("|ell|", report.med_ell, report.slope_ell),
        ("cn+A", report.med_excess, report.slope_action),
        ("d", report.med_d, report.slope_d),
    ):
        med = np.asarray(med)
        ax.loglog(ns, med, "o", ms=4, label=f"{label} (slope {slope:+.3f})")
        anchor = med[len(med) // 2]
        ax.loglog(ns, anchor * (ns / ns[len(ns) // 2]) ** slope, "-", lw=1)
    ax.set_xlabel("n")
    ax.set_ylabel("median")
    ax.set_title(f"scaling, zeta={report.zeta:.4f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out)


def save_limitlaw_figure(report, kappa, out) -> None:
    """Empirical survival of the rescaled excess action vs the limit law."""
    xs = np.asarray(report.values)
    surv = 1.0 - np.arange(1, len(xs) + 1) / len(xs)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.step(xs, surv, where="post", lw=1, label=f"empirical, n={report.n}")
    grid = np.linspace(0, max(2.0, float(xs[-1])), 200)
    expo = 2 * kappa + 3
    ax.plot(grid, np.exp(-grid ** expo), "--", lw=1,
            label=f"exp(-t^{expo:g})")
    ax.set_xlabel("(cn + A) / (h n^zeta)")
    ax.set_ylabel("survival")
    ax.set_title(f"limit law, KS={report.ks:.4f}, h={report.h:.4f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out)


def save_variance_figure(rows, out) -> None:
    """Variance of the edge-arrival action across record edges."""
    xs = [r.x for r in rows if r.x > 0]
    vs = [r.variance for r in rows if r.x > 0]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.loglog(xs, vs, "o-", ms=4)
    ax.set_xlabel("record edge position x_i")
    ax.set_ylabel("var of A(B) over B")
    ax.set_title("variance across record edges, fixed F")
    fig.tight_layout()
    _save(fig, out)
