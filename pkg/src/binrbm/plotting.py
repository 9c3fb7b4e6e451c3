"""Matplotlib figures for training traces and oracle comparisons."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .train import TrainTrace  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.3,
}


def _save(fig, path):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.stem}.", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    try:
        fig.savefig(tmp, bbox_inches="tight", metadata={"Software": None})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def plot_traces(traces: dict[str, TrainTrace], path, title: str | None = None) -> Path:
    """ELBO, teacher overlap and clip events per epoch, one line per run."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(6.0, 6.5), sharex=True)
        for label, tr in traces.items():
            ep = tr.column("epoch")
            axes[0].plot(ep, tr.column("elbo"), label=label)
            ov = tr.column("overlap")
            if not np.all(np.isnan(ov)):
                axes[1].plot(ep, ov, label=label)
            axes[2].step(ep, tr.column("clip_events"), where="post", label=label)
        axes[0].set_ylabel("ELBO estimate")
        axes[1].set_ylabel("teacher overlap")
        axes[1].set_ylim(-0.02, 1.02)
        axes[2].set_ylabel("clipped entries")
        axes[2].set_xlabel("epoch")
        axes[0].legend(loc="lower right", frameon=False)
        if title:
            axes[0].set_title(title)
        fig.align_ylabels(axes)
        _save(fig, path)
    return Path(path)


def plot_trace(trace: TrainTrace, path, label: str = "run") -> Path:
    return plot_traces({label: trace}, path, title=label)


def plot_bethe_errors(free_energy, magnetization, path) -> Path:
    """Per-instance Bethe free-energy and magnetization errors (log scale)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        idx = np.arange(len(free_energy))
        ax.semilogy(idx, np.maximum(free_energy, 1e-17), "o", label="|log Z error| / N")
        ax.semilogy(idx, np.maximum(magnetization, 1e-17), "s", label="max |m_i error|")
        ax.set_xlabel("instance")
        ax.set_ylabel("error")
        ax.legend(frameon=False)
        _save(fig, path)
    return Path(path)
