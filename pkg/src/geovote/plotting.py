"""File-only matplotlib rendering for the report path.

Uses the Agg backend unconditionally; nothing here ever opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_sweep_figure(sweep, path) -> None:
    """Accuracy versus ensemble size, one line per aggregation.

    Sizes sit on a log2 axis; if the class count p falls inside the
    swept range, a dashed green vertical line marks m = p.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    table = sweep.table()
    sizes = [row[0] for row in table]
    for column, label, marker in ((1, "mv", "o"), (2, "wmv", "s")):
        points = [(row[0], row[column]) for row in table if row[column] is not None]
        if points:
            ax.plot(
                [m for m, _ in points],
                [100.0 * acc for _, acc in points],
                marker=marker,
                label=label,
            )
    p = sweep.spec.n_classes
    if sizes and min(sizes) <= p <= max(sizes):
        ax.axvline(p, color="green", linestyle="--", linewidth=1.2, label=f"m = p = {p}")
    ax.set_xscale("log", base=2)
    ax.set_xticks(sizes)
    ax.set_xticklabels([str(s) for s in sizes])
    ax.set_xlabel("ensemble size m")
    ax.set_ylabel("final accuracy (%)")
    ax.set_title(sweep.dataset)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_series_figure(records, path) -> None:
    """Cumulative prequential accuracy over instances, one line per run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for record in records:
        xs = [seen for seen, _ in record.result.checkpoints]
        ys = [100.0 * acc for _, acc in record.result.checkpoints]
        ax.plot(xs, ys, label=f"{record.method} m={record.m} ({record.aggregation})")
    ax.set_xlabel("instances")
    ax.set_ylabel("cumulative accuracy (%)")
    ax.set_title(records[0].dataset if records else "series")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
