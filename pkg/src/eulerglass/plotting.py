"""Optional PNG figures rendered from the emitted CSVs.

matplotlib is imported only here, inside the functions, and only when a run
asks for plots; nothing else in the package depends on it.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from pathlib import Path

from .experiments import read_csv


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _group(rows, *keys):
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(r)
    return out


def plot_overlap(out_dir: Path, plt) -> list[str]:
    names = []
    for (beta, u, log_T), rows in sorted(_group(read_csv(out_dir / "overlap.csv"), "beta", "u", "log_T").items()):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        lo = [r["bin_lo"] for r in rows]
        width = [r["bin_hi"] - r["bin_lo"] for r in rows]
        ax.bar(lo, [r["mass"] for r in rows], width=width, align="edge", color="0.55")
        ax.set_xlabel("overlap")
        ax.set_ylabel("mass")
        ax.set_title(f"beta={beta:g}, u={u:g}, log T={log_T:.3g}")
        name = f"overlap_beta{beta:g}_u{u:g}_logT{log_T:.3f}.png"
        fig.tight_layout()
        fig.savefig(out_dir / name, dpi=120)
        plt.close(fig)
        names.append(name)
    return names


def _ladder_plot(out_dir, plt, csv_name, series_keys, x, y, target, png):
    rows = read_csv(out_dir / csv_name)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for key, rs in sorted(_group(rows, *series_keys).items()):
        label = ", ".join(f"{k}={v:g}" for k, v in zip(series_keys, key))
        line, = ax.plot([r[x] for r in rs], [r[y] for r in rs], "o-", label=label)
        ax.axhline(rs[0][target], color=line.get_color(), ls=":", lw=1)
    ax.set_xlabel("log T")
    ax.set_ylabel(y)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / png, dpi=120)
    plt.close(fig)
    return [png]


def render_outputs(experiment: str, out_dir) -> list[str]:
    """Render figures for the experiment; returns the PNG names written."""
    out_dir = Path(out_dir)
    try:
        plt = _pyplot()
    except ImportError:
        warnings.warn("matplotlib is not installed; skipping plots")
        return []
    if experiment == "overlap":
        return plot_overlap(out_dir, plt)
    if experiment == "free-energy":
        return _ladder_plot(out_dir, plt, "free_energy.csv", ("beta", "u"), "log_T",
                            "normalized", "target", "free_energy.png")
    if experiment == "high-points":
        return _ladder_plot(out_dir, plt, "high_points.csv", ("u", "gamma"), "log_T",
                            "estimate", "target", "high_points.png")
    return []
