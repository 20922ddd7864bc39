"""SVG figures of return and exploitability against iteration."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (5.0, 3.2),
    "svg.hashsalt": "mfgmesh",  # stable element ids between runs
    "svg.fonttype": "none",
}

PANELS = {
    "return": ("return_mean", "return_std", "average discounted return"),
    "exploitability": ("exploitability_mean", "exploitability_std", "approx. exploitability"),
}


def _series(summary: dict, mean_key: str, std_key: str):
    ks, means, stds = [], [], []
    for row in summary["per_k"]:
        if row[mean_key] is None:
            continue
        ks.append(row["k"])
        means.append(row[mean_key])
        stds.append(row[std_key])
    return np.array(ks), np.array(means), np.array(stds)


def emit_plots(summaries, out_dir) -> list[Path]:
    """Write ``return.svg`` and ``exploitability.svg``, one mean line and ±1 std band per summary."""
    if isinstance(summaries, dict):
        summaries = [summaries]
    if not summaries:
        raise ValueError("no summary to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(STYLE):
        for name, (mean_key, std_key, ylabel) in PANELS.items():
            fig, ax = plt.subplots()
            for summary in summaries:
                ks, mean, std = _series(summary, mean_key, std_key)
                label = summary.get("label") or "run"
                if len(ks) == 0:
                    ax.plot([], [], label=label)
                    continue
                (line,) = ax.plot(ks, mean, label=label, lw=1.2)
                ax.fill_between(ks, mean - std, mean + std, color=line.get_color(),
                                alpha=0.25, lw=0)
            ax.set_xlabel("iteration k")
            ax.set_ylabel(ylabel)
            ax.legend(frameon=False)
            fig.tight_layout()
            path = out / f"{name}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths
