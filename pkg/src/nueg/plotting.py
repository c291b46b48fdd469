"""Figure rendering for sequence reports.

Figures are written next to the CSV summary; the CSV stays the canonical
numeric interface.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_sequence_figure(rows, path, title, xlabel="scale",
                           ylabel="energy per volume"):
    """Plot (scale, value, err_low, err_high) rows with asymmetric error
    bars and save the figure as a PNG file."""
    scales = [r[0] for r in rows]
    values = [r[1] for r in rows]
    lo = [r[1] - r[2] for r in rows]
    hi = [r[3] - r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.errorbar(scales, values, yerr=[lo, hi], fmt="o-", capsize=3,
                linewidth=1.2, markersize=4)
    if len(scales) > 1 and min(scales) > 0 and max(scales) / min(scales) >= 4:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
