"""Flat-file emitters: JSON reports and static SVG line plots."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def plot_ms(curves, path, title="", exact=None) -> None:
    """Single-panel SVG of mean-square trajectories on a log ordinate.

    ``curves`` is a list of ``(label, EnsembleResult)``; each shows the
    estimate, a +/- 2 SE band and (when present) the reference column.
    ``exact`` optionally adds ``(label, times, values)`` curves.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    positives = [r.ms_estimate[r.ms_estimate > 0] for _, r in curves]
    floor = min((p.min() for p in positives if p.size), default=1e-300) * 1e-2
    for i, (label, res) in enumerate(curves):
        color = f"C{i % 10}"
        est = np.asarray(res.ms_estimate)
        se = np.asarray(res.ms_stderr)
        ax.plot(res.times, np.where(est > 0, est, np.nan), color=color, label=label)
        lo = np.maximum(est - 2 * se, floor)
        ax.fill_between(res.times, lo, est + 2 * se, color=color, alpha=0.2, linewidth=0)
        if res.reference is not None:
            ref = np.asarray(res.reference)
            ax.plot(res.times, np.where(ref > 0, ref, np.nan), color=color, linestyle="--",
                    linewidth=1, label=f"{label} reference")
    for label, t, v in exact or ():
        v = np.asarray(v)
        ax.plot(t, np.where(v > 0, v, np.nan), color="k", linestyle=":", linewidth=1.2, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("E ||X||^2")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
