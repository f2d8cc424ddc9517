"""Figure rendering for the report path (file output only, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import PAIR_CATEGORIES

FIG_DPI = 150


def _bar_positions(n_groups: int, n_series: int) -> tuple[np.ndarray, float]:
    width = 0.8 / max(n_series, 1)
    base = np.arange(n_groups)
    return base, width


def save_nmac_breakdown(reports: dict[str, dict], out_path: Path) -> Path:
    """Grouped bars of NMAC means by pair and by bottleneck, one series
    per model."""
    bneck_cats = sorted({c for d in reports.values()
                         for c in d["nmac_bottleneck"]})
    cats = list(PAIR_CATEGORIES) + bneck_cats + ["Total"]
    fig, ax = plt.subplots(figsize=(9, 4))
    base, width = _bar_positions(len(cats), len(reports))
    for i, (label, d) in enumerate(reports.items()):
        vals = ([d["nmac_pair"][c]["mean"] for c in PAIR_CATEGORIES]
                + [d["nmac_bottleneck"][c]["mean"] for c in bneck_cats]
                + [d["nmac_total"]["mean"]])
        ax.bar(base + i * width, vals, width, label=label)
    ax.set_xticks(base + 0.4 - width / 2)
    ax.set_xticklabels(cats)
    ax.set_ylabel("NMAC events per episode")
    ax.set_title("Conflict breakdown by fleet pairing and bottleneck")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIG_DPI)
    plt.close(fig)
    return out_path


def save_outcome_summary(reports: dict[str, dict], out_path: Path) -> Path:
    """Successful-agent counts and mission times per model."""
    labels = list(reports)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ns = [reports[m]["n_success"]["mean"] for m in labels]
    err = [reports[m]["n_success"]["std"] for m in labels]
    ax1.bar(labels, ns, yerr=err, capsize=3, color="tab:blue")
    ax1.set_ylabel("successful agents per episode")
    ax1.set_title("Mission completions")
    ax1.tick_params(axis="x", rotation=20)

    base, width = _bar_positions(len(labels), 2)
    for i, fleet in enumerate(("A", "B")):
        vals = []
        for m in labels:
            mm = reports[m]["mission_minutes"].get(fleet, {})
            v = mm.get("mean")
            vals.append(np.nan if v is None else v)
        ax2.bar(base + i * width, vals, width, label=f"fleet {fleet}")
    for j, m in enumerate(labels):
        f = reports[m].get("fairness_pct")
        if f is not None:
            ax2.annotate(f"F={f:.1f}%", (j + width / 2, 0.2),
                         ha="center", fontsize=7, rotation=90)
    ax2.set_xticks(base + width / 2)
    ax2.set_xticklabels(labels, rotation=20)
    ax2.set_ylabel("mean mission time (min)")
    ax2.set_title("Mission times and fairness")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIG_DPI)
    plt.close(fig)
    return out_path


def _rolling(xs: list[float], window: int = 25) -> np.ndarray:
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        return arr
    kernel = np.ones(min(window, arr.size)) / min(window, arr.size)
    return np.convolve(arr, kernel, mode="valid")


def save_training_curves(rows: list[dict], label: str, out_path: Path) -> Path:
    """Reward / success / NMAC training curves from a train_log.csv."""
    fleets = sorted({r["fleet"] for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    panels = (("mean_reward", "mean reward per agent"),
              ("success_count", "fleet successes"),
              ("nmac_count", "fleet NMAC involvements"))
    for ax, (col, title) in zip(axes, panels):
        for fleet in fleets:
            ys = [float(r[col]) for r in rows if r["fleet"] == fleet]
            smooth = _rolling(ys)
            offset = len(ys) - len(smooth)
            ax.plot(np.arange(offset, len(ys)), smooth, label=f"fleet {fleet}")
        ax.set_xlabel("episode")
        ax.set_title(title, fontsize=9)
        ax.legend(fontsize=7)
    fig.suptitle(f"training curves: {label}", fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIG_DPI)
    plt.close(fig)
    return out_path
