"""
Report figures (matplotlib, non-interactive backend)
"""
from collections import defaultdict
from pathlib import Path

import matplotlib
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from evaluation.entities import EvalResult  # noqa: E402

DEFAULT_GROUP = "default"


def plot_dice_by_experiment(results: list[EvalResult], path: Path) -> Path:
    """Mean Dice with population std as error bars, bars grouped by variant"""
    groups: dict[str, list[EvalResult]] = defaultdict(list)
    for r in results:
        groups[str(r.metadata.get("variant", DEFAULT_GROUP))].append(r)

    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(results)), 4.0))
    position, ticks, labels = 0.0, [], []
    for group, members in groups.items():
        xs = [position + i for i in range(len(members))]
        ax.bar(
            xs,
            [r.dice_mean for r in members],
            yerr=[r.dice_std for r in members],
            capsize=4,
            label=group,
        )
        ticks += xs
        labels += [r.experiment for r in members]
        position += len(members) + 1
    ax.set_xticks(ticks)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("Dice")
    if len(groups) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_dice_vs_fraction(results: list[EvalResult], path: Path) -> Path | None:
    """One line per variant over the source annotation fraction; None without fractions"""
    lines: dict[str, list[tuple[float, float, float]]] = defaultdict(list)
    for r in results:
        if "source_fraction" in r.metadata:
            lines[str(r.metadata.get("variant", DEFAULT_GROUP))].append(
                (float(r.metadata["source_fraction"]), r.dice_mean, r.dice_std)
            )
    if not lines:
        return None

    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for variant, points in lines.items():
        points.sort()
        ax.errorbar(
            [100 * p[0] for p in points], [p[1] for p in points], yerr=[p[2] for p in points],
            marker="o", capsize=3, label=variant,
        )
    ax.set_xscale("log")
    ax.set_xlabel("annotated source volumes (%)")
    ax.set_ylabel("Dice")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def bar_heights(rows: list[dict], key: str) -> list[float]:
    """Column values with missing entries (None, or NaN read back from CSV) drawn as 0"""
    return [0.0 if pd.isna(row.get(key)) else float(row[key]) for row in rows]


def plot_self_training(iterations: list[dict], path: Path) -> Path:
    """Paired before/after validation Dice bars per self-training iteration"""
    fig, ax = plt.subplots(figsize=(max(4.0, 1.5 * len(iterations)), 4.0))
    xs = list(range(len(iterations)))
    width = 0.38
    before, after = bar_heights(iterations, "val_dice_before"), bar_heights(iterations, "val_dice_after")
    ax.bar([x - width / 2 for x in xs], before, width, label="before")
    ax.bar([x + width / 2 for x in xs], after, width, label="after")
    ax.set_xticks(xs)
    ax.set_xticklabels([f"iter {row['iteration']}" for row in iterations])
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("validation Dice")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
