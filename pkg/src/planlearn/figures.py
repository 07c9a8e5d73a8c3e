"""Figure rendering for simulation output.

Uses the Agg backend so files render without a display; callers pass the
target path and get the written path back.
"""

from __future__ import annotations

import statistics
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .sim import RunSummary, TraceRecord  # noqa: E402


def belief_trajectory(
    trace: Sequence[TraceRecord],
    path: str,
    boundaries: Iterable[Fraction] = (),
    title: str = "Belief in the favored hypothesis",
) -> str:
    stages = [r.stage for r in trace]
    beliefs = [r.posterior_fragile for r in trace]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(stages, beliefs, lw=1.2, color="#1f5fa8")
    for b in boundaries:
        ax.axhline(float(b), ls="--", lw=0.9, color="#b0413e",
                   label=f"policy boundary {float(b):g}")
    ax.set_xlabel("stage")
    ax.set_ylabel("posterior probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    if list(boundaries):
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def switch_histogram(
    summaries: Sequence[RunSummary],
    path: str,
    title: str = "Stage at which the policy switched",
    bins: Optional[int] = None,
) -> str:
    switched = [s.switch_stage for s in summaries if s.switch_stage is not None]
    unswitched = len(summaries) - len(switched)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if switched:
        if bins is None:
            bins = max(10, min(50, len(switched) // 10))
        ax.hist(switched, bins=bins, color="#1f5fa8", edgecolor="white")
        med = statistics.median(switched)
        ax.axvline(med, ls="--", lw=1.2, color="#b0413e",
                   label=f"median {med:g}")
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("switch stage")
    ax.set_ylabel("runs")
    label = title
    if unswitched:
        label += f"  ({unswitched} run(s) never switched)"
    ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
