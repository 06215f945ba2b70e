"""Headless figure rendering for the report-producing CLI commands.

Figures are written straight to files with volatile metadata stripped,
so re-running a pipeline reproduces them byte for byte. CSV/JSON
artifacts never depend on this module.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "tpembed"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_figure(fig, path) -> None:
    """Write and close a figure, suppressing timestamps and tool tags."""
    path = str(path)
    fmt = path.rsplit(".", 1)[-1].lower()
    metadata = None
    if fmt == "png":
        metadata = {"Software": None}
    elif fmt == "svg":
        metadata = {"Date": None}
    fig.savefig(path, dpi=120, metadata=metadata)
    plt.close(fig)


def _axes():
    fig, ax = plt.subplots(figsize=(5.0, 4.0), constrained_layout=True)
    ax.grid(True, alpha=0.3)
    return fig, ax


def roc_figure(curves, path) -> None:
    """Overlay TAR-versus-FMR curves; ``curves`` is (label, RocCurve) pairs."""
    fig, ax = _axes()
    for label, curve in curves:
        ax.plot(curve.fmr, curve.tar, label=label, linewidth=1.5)
    ax.set_xlabel("false match rate")
    ax.set_ylabel("true accept rate")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    save_figure(fig, path)


def pr_figure(curves, path) -> None:
    """Precision-recall overlay; each entry is (label, (n,3) cutoff/P/R rows)."""
    fig, ax = _axes()
    for label, rows in curves:
        ax.plot(rows[:, 2], rows[:, 1], label=label, linewidth=1.5)
    ax.set_xlabel("pairwise recall")
    ax.set_ylabel("pairwise precision")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower left")
    save_figure(fig, path)


def cmc_figure(entries, path) -> None:
    """Identification-rate-by-rank curves; entries are (label, ranks, values)."""
    fig, ax = _axes()
    for label, ranks, values in entries:
        ax.plot(ranks, values, label=label, linewidth=1.5, marker="o", markersize=3)
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    save_figure(fig, path)
