"""Matplotlib figures rendered next to evaluation reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_psds_curve(report: dict, path) -> None:
    """PSDS operating points and their upper staircase on [0, e_max]."""
    e_max = report["config"]["e_max"]
    pts = sorted((p["efpr"], p["eff_tpr"]) for p in report["per_threshold"])
    xs, ys = [0.0], [0.0]
    best = 0.0
    for x, y in pts:
        if x > e_max:
            break
        xs.extend([x, x])
        ys.extend([best, max(best, y)])
        best = max(best, y)
    xs.append(e_max)
    ys.append(best)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, drawstyle="default", color="tab:blue", label="upper staircase")
    if pts:
        px, py = zip(*pts)
        ax.plot(px, py, "o", ms=4, color="tab:orange", label="operating points")
    ax.set_xlim(0, e_max)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("eFPR (FP / hour)")
    ax.set_ylabel("effective TPR")
    ax.set_title(f"PSDS = {report['psds']:.4f}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_recall_bars(recalls: dict[int, float], path) -> None:
    """Bar chart of recall@k values."""
    ks = sorted(recalls)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar([str(k) for k in ks], [recalls[k] for k in ks], color="tab:blue")
    ax.set_xlabel("k")
    ax.set_ylabel("recall@k (%)")
    ax.set_ylim(0, 105)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_envelope(envelope_db: np.ndarray, hop_s: float, threshold_db: float,
                  path) -> None:
    """Energy envelope with the activity threshold overlaid."""
    t = np.arange(len(envelope_db)) * hop_s
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(t, envelope_db, color="tab:blue")
    ax.axhline(threshold_db, color="tab:red", ls="--", lw=1, label="threshold")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("mean energy (dBFS)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
