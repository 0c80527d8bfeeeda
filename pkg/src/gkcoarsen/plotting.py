"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.bbox": "tight",
    "savefig.dpi": 150,
}
WIDTH = 5.5  # inches


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _t_label(t: float) -> str:
    return "T = inf" if math.isinf(t) else f"T = {int(t)}"


def plot_history(history, path, title: str | None = None) -> Path:
    """Loss and accuracy curves of one run; vertical ticks mark recoarsening events."""
    epochs = [r.epoch for r in history]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(WIDTH, WIDTH * 0.4))
        ax_loss.plot(epochs, [r.loss for r in history], color="k")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("training loss")
        for key, color in (("train_acc", "C0"), ("val_acc", "C1"), ("test_acc", "C2")):
            ax_acc.plot(epochs, [getattr(r, key) for r in history], color=color, label=key.replace("_acc", ""))
        for r in history:
            if r.recoarsened:
                ax_acc.axvline(r.epoch, color="0.6", linewidth=0.4, alpha=0.5)
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("accuracy")
        ax_acc.set_ylim(0, 1)
        ax_acc.legend(loc="lower right")
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_sweep_t(rows, path, reference=None) -> Path:
    """Mean validation accuracy per epoch for every recoarsening period.

    ``rows`` are ``(T, seed, epoch, val_acc)`` tuples; ``reference`` is an
    optional list of the same tuples from full-graph runs, drawn dashed.
    """
    groups: dict[float, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for t, _seed, epoch, val in rows:
        groups[t][epoch].append(val)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(WIDTH * 0.7, WIDTH * 0.5))
        for i, t in enumerate(sorted(groups)):
            epochs = sorted(groups[t])
            ax.plot(epochs, [np.mean(groups[t][e]) for e in epochs], color=f"C{i}", label=_t_label(t))
        if reference:
            ref: dict[int, list[float]] = defaultdict(list)
            for _t, _seed, epoch, val in reference:
                ref[epoch].append(val)
            epochs = sorted(ref)
            ax.plot(epochs, [np.mean(ref[e]) for e in epochs], "k--", label="full graph")
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation accuracy")
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_sweep_ratio(summary, path) -> Path:
    """Test accuracy (mean +- std) and wall time against coarsening ratio."""
    r = [s["ratio"] for s in summary]
    with plt.rc_context(STYLE):
        fig, (ax_acc, ax_time) = plt.subplots(1, 2, figsize=(WIDTH, WIDTH * 0.4))
        ax_acc.errorbar(r, [s["test_acc_mean"] for s in summary], yerr=[s["test_acc_std"] for s in summary],
                        marker="o", capsize=2, color="C0", label="test")
        ax_acc.errorbar(r, [s["val_acc_mean"] for s in summary], yerr=[s["val_acc_std"] for s in summary],
                        marker="s", capsize=2, color="C1", label="val")
        ax_acc.set_xscale("log")
        ax_acc.set_xlabel("coarsening ratio r")
        ax_acc.set_ylabel("accuracy")
        ax_acc.legend()
        ax_time.errorbar(r, [s["seconds_mean"] for s in summary], yerr=[s["seconds_std"] for s in summary],
                         marker="o", capsize=2, color="k")
        ax_time.set_xscale("log")
        ax_time.set_xlabel("coarsening ratio r")
        ax_time.set_ylabel("training time (s)")
        return _save(fig, path)
