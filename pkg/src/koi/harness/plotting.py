"""SVG curve emission for aggregated runs.

Two panels: success rate vs environment steps with a +/- 1 std band across
seeds, and the std itself vs steps (the variance-trend view). Output SVGs
are deterministic: the hash salt is pinned and no date metadata is embedded.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
matplotlib.rcParams["svg.hashsalt"] = "koi"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

MODE_COLORS = {
    "koi": "tab:red",
    "uniform": "tab:blue",
    "sdm_only": "tab:green",
    "mcm_only": "tab:orange",
    "fixed_interval": "tab:purple",
    "uniform_motion": "tab:brown",
}


def plot_curves(curves: dict, out_path, title: str = "") -> Path:
    """curves: mode -> (steps, mean, std); writes one SVG, returns its path."""
    if not curves:
        raise ValueError("no curves to plot")
    fig, (ax_succ, ax_std) = plt.subplots(1, 2, figsize=(10, 4))
    for mode, (steps, mean, std) in curves.items():
        color = MODE_COLORS.get(mode)
        ax_succ.plot(steps, mean, label=mode, color=color)
        ax_succ.fill_between(steps, mean - std, mean + std, alpha=0.2, color=color)
        ax_std.plot(steps, std, label=mode, color=color)
    ax_succ.set_xlabel("environment steps")
    ax_succ.set_ylabel("success rate")
    ax_succ.set_ylim(-0.05, 1.05)
    ax_succ.legend()
    if title:
        ax_succ.set_title(title)
    ax_std.set_xlabel("environment steps")
    ax_std.set_ylabel("std across seeds")
    ax_std.set_title("variance trend")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path
