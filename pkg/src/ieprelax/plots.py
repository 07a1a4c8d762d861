"""Figure rendering for experiment reports.

Every report path that emits delimited data also renders a matplotlib
figure next to it; all rendering goes through the Agg backend so the CLI
works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

GRID_STYLE = {
    "both_infeasible": dict(marker="o", color="black", label="both infeasible",
                            facecolors="none"),
    "r1_feasible_r2_infeasible": dict(marker="x", color="red",
                                      label="level 1 feasible, level 2 infeasible"),
    "both_feasible": dict(marker="*", color="blue", label="both feasible"),
    "undetermined": dict(marker="s", color="gray", label="undetermined"),
    "r1_infeasible_r2_feasible": dict(marker="D", color="magenta",
                                      label="nesting violation"),
}


def render_grid(points, path, title="") -> None:
    """Scatter of grid classifications in the (X11, X22) plane.

    points: iterable of (v1, v2, class_name)."""
    fig, ax = plt.subplots(figsize=(5.2, 5))
    byclass = {}
    for v1, v2, cls in points:
        byclass.setdefault(cls, []).append((v1, v2))
    for cls, pts in sorted(byclass.items()):
        arr = np.array(pts)
        style = GRID_STYLE.get(cls, dict(marker=".", color="green", label=cls))
        ax.scatter(arr[:, 0], arr[:, 1], s=28, **style)
    ax.set_xlabel("$X_{11}$")
    ax.set_ylabel("$X_{22}$")
    ax.set_title(title)
    ax.set_aspect("equal")
    ax.legend(loc="upper left", bbox_to_anchor=(0, -0.12), fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_success_rates(rates, path, title="") -> None:
    """Bar chart of rounding success counts per relaxation level.

    rates: dict level -> (successes, trials)."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    levels = list(rates)
    succ = [rates[l][0] for l in levels]
    tot = [rates[l][1] for l in levels]
    pct = [100.0 * s / t if t else 0.0 for s, t in zip(succ, tot)]
    bars = ax.bar(levels, pct, color="#4878b0")
    for bar, s, t in zip(bars, succ, tot):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 1,
                f"{s}/{t}", ha="center", fontsize=9)
    ax.set_ylabel("accepted trials (%)")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_recovery_curve(rows, path, threshold=None, title="") -> None:
    """Recovery rate against the number of random constraints.

    rows: iterable of (ell, rate, reps)."""
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    rows = sorted(rows)
    ells = [r[0] for r in rows]
    rates = [r[1] for r in rows]
    ax.plot(ells, rates, "o-", color="#4878b0")
    if threshold is not None:
        ax.axvline(threshold, color="gray", linestyle="--", linewidth=1,
                   label=f"threshold {threshold:.2f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("number of random constraints")
    ax.set_ylabel("recovery rate")
    ax.set_ylim(-0.02, 1.05)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_certifications(rows, path, title="") -> None:
    """Per-seed certification outcomes for the subgraph experiment.

    rows: iterable of (seed, outcome) with outcome in
    {"r1", "r2plus", "none", "skipped"}."""
    order = {"r1": 2, "r2plus": 1, "none": 0, "skipped": 0.5}
    colors = {"r1": "#2c7a2c", "r2plus": "#7aa843", "none": "#b04848",
              "skipped": "#999999"}
    fig, ax = plt.subplots(figsize=(5.6, 3.0))
    rows = list(rows)
    for seed, outcome in rows:
        ax.bar(seed, order.get(outcome, 0), color=colors.get(outcome, "gray"))
    ax.set_xlabel("graph seed")
    ax.set_yticks([0, 1, 2])
    ax.set_yticklabels(["uncertified", "certified (level 2+)", "certified (level 1)"])
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
