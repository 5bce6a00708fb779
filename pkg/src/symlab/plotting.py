"""Static SVG line charts for experiment tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIG_WIDTH = 4.5
GOLDEN = 0.618

RC = {
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    # fixed ids and no timestamp keep re-runs byte-identical
    "svg.hashsalt": "symlab",
    "svg.fonttype": "none",
}


def line_chart(path, series, xlabel, ylabel, title=None, logx=False, logy=False, reference=None):
    """Write one chart; ``series`` maps a label to ``(xs, ys)``.

    ``reference`` is an optional ``(xs, ys, label)`` drawn dashed, e.g. an
    exact value or a fitted slope.
    """
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, (xs, ys) in series.items():
            ax.plot(xs, ys, marker="o", label=label)
        if reference is not None:
            xs, ys, label = reference
            ax.plot(xs, ys, "k--", label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1 or reference is not None:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
