"""Report writers: a CSV table plus a matplotlib figure per command."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _save(fig, path):
    # fixed metadata keeps the PNG bytes reproducible
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def bake_report(baked, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        (v.index, v.weight, v.visible_pixels, v.edge_pixels, v.contributing_pixels, v.texels)
        for v in baked.views
    ]
    csv_path = _write_csv(
        out / "bake_views.csv",
        ["view", "weight", "visible_pixels", "edge_pixels", "contributing_pixels", "texels"],
        rows,
    )

    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2))
    axes[0].imshow(np.clip(baked.pixels, 0, 1), interpolation="nearest")
    axes[0].set_title("baked texture")
    axes[1].imshow(baked.hole_mask, cmap="gray_r", interpolation="nearest")
    axes[1].set_title(f"holes ({baked.hole_fraction:.1%})")
    for ax in axes[:2]:
        ax.set_xticks([])
        ax.set_yticks([])
    idx = [v.index for v in baked.views]
    axes[2].bar(idx, [v.visible_pixels for v in baked.views], color="0.8", label="visible")
    axes[2].bar(idx, [v.contributing_pixels for v in baked.views], color="tab:blue", label="contributing")
    axes[2].set_xlabel("view")
    axes[2].set_ylabel("pixels")
    axes[2].legend(frameon=False)
    fig.tight_layout()
    return csv_path, _save(fig, out / "bake_report.png")


def eval_report(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = result.to_dict()
    csv_path = _write_csv(out / "eval_metrics.csv", ["metric", "value"], list(d.items()))

    cm = np.array(
        [[result.true_positives, result.false_negatives], [result.false_positives, result.true_negatives]]
    )
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(cm, cmap="Blues")
    for (i, j), n in np.ndenumerate(cm):
        ax.text(j, i, str(n), ha="center", va="center", color="white" if n > cm.max() / 2 else "black")
    ax.set_xticks([0, 1], ["flagged", "passed"])
    ax.set_yticks([0, 1], ["unusable", "usable"])
    ax.set_xlabel("checker verdict")
    ax.set_ylabel("label")
    ax.set_title(f"precision {result.precision:.2%}  recall {result.recall:.2%}")
    fig.tight_layout()
    return csv_path, _save(fig, out / "confusion.png")


def pipeline_report(run, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in run.stages:
        for a in run.attempts.get(name, []):
            reasons = [a.error] if a.error else [x for r in a.reports for x in r.reasons]
            rows.append((name, a.index, a.seed, a.passed, "; ".join(reasons)))
    csv_path = _write_csv(out / "attempts.csv", ["stage", "attempt", "seed", "passed", "reasons"], rows)

    fig, ax = plt.subplots(figsize=(6, 3))
    for y, name in enumerate(run.stages):
        for a in run.attempts.get(name, []):
            ax.scatter(a.index, y, s=120, color="tab:green" if a.passed else "tab:red")
    ax.set_yticks(range(len(run.stages)), run.stages)
    ax.set_xlabel("attempt")
    ax.set_title(f"pipeline {run.status}")
    ax.set_xlim(-0.5, run.max_retries + 0.5)
    fig.tight_layout()
    return csv_path, _save(fig, out / "attempts.png")
