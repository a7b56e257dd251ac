"""Report figures written next to the tabular outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_PNG_META = {"Software": None}

COLORS = {"conventional": "0.6", "proposed": "#1f77b4"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_comparison(results, path):
    """Grouped bars of mean accuracy (±std) per subject and paradigm."""
    names = [f"{r.subject_id}\n{r.paradigm}" for r in results]
    x = np.arange(len(results))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(results) + 1.5), 3.4))
    for j, side in enumerate(("conventional", "proposed")):
        reps = [getattr(r.comparison, side) for r in results]
        ax.bar(x + (j - 0.5) * width, [rp.mean for rp in reps], width,
               yerr=[rp.std for rp in reps], capsize=3, color=COLORS[side], label=side)
    ax.axhline(0.2, color="k", lw=0.8, ls=":", label="chance")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1)
    ax.set_ylabel("5-class accuracy")
    ax.legend(frameon=False, fontsize=8, loc="upper left")
    _save(fig, path)


def plot_cells(report, path, title=""):
    """Accuracy of every CV cell, conventional against proposed."""
    conv = np.ravel(report.conventional.per_cell)
    prop = np.ravel(report.proposed.per_cell)
    fig, ax = plt.subplots(figsize=(3.6, 3.4))
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8)
    ax.scatter(conv, prop, s=10, alpha=0.6, color=COLORS["proposed"])
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("conventional cell accuracy")
    ax.set_ylabel("proposed cell accuracy")
    if title:
        ax.set_title(title, fontsize=9)
    _save(fig, path)


def plot_onsets(onsets, path, lengths=None, title=""):
    """Histogram of detected EMG onsets; trials without onset are counted in the title."""
    found = np.array([t for t in onsets if t is not None], dtype=float)
    missing = sum(t is None for t in onsets)
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.hist(found, bins=np.arange(0.0, 4.01, 0.1), color=COLORS["proposed"])
    ax.set_xlabel("onset after cue (s)")
    ax.set_ylabel("trials")
    label = f"{title}  " if title else ""
    ax.set_title(f"{label}{len(found)} detected, {missing} fallback", fontsize=9)
    if lengths:
        ax.text(0.98, 0.95, "lengths: " + ", ".join(f"{x:g}" for x in lengths),
                transform=ax.transAxes, ha="right", va="top", fontsize=8)
    _save(fig, path)
