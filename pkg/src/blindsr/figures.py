"""Figure rendering for the report paths.

Every report-producing command writes a PNG figure next to its delimited
output: per-image metric bars for evaluation, FPS bars with throughput
ratios for the benchmark, and loss curves for training.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _finish(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metrics_figure(report, path) -> None:
    """Per-image PSNR/SSIM bars (or inference timings when no reference
    metrics exist)."""
    rows = [r for r in report.rows if r.error is None]
    names = [r.filename for r in rows]
    have_ref = any(r.psnr_db is not None for r in rows)
    if have_ref:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(8, len(rows) * 0.5), 4))
        ax1.bar(names, [r.psnr_db or 0.0 for r in rows], color="#4878cf")
        ax1.set_ylabel("PSNR (dB)")
        ax2.bar(names, [r.ssim or 0.0 for r in rows], color="#6acc65")
        ax2.set_ylabel("SSIM")
        for ax in (ax1, ax2):
            ax.tick_params(axis="x", rotation=90, labelsize=7)
    else:
        fig, ax = plt.subplots(figsize=(max(8, len(rows) * 0.5), 4))
        ax.bar(names, [r.inference_ms or 0.0 for r in rows], color="#d65f5f")
        ax.set_ylabel("inference (ms)")
        ax.tick_params(axis="x", rotation=90, labelsize=7)
    fig.suptitle("evaluation report")
    _finish(fig, path)


def render_benchmark_figure(result: dict, path) -> None:
    """Grouped FPS bars per ladder step with the lite/star ratio annotated."""
    steps = [s for s in result["steps"] if not s.get("skipped")]
    labels = [f"{s['input'][0]}x{s['input'][1]}" for s in steps]
    star = [s["star_fps"] for s in steps]
    lite = [s["lite_fps"] for s in steps]
    x = range(len(steps))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.bar([i - 0.2 for i in x], star, width=0.4, label="star", color="#4878cf")
    ax.bar([i + 0.2 for i in x], lite, width=0.4, label="lite", color="#6acc65")
    for i, s in enumerate(steps):
        ax.annotate(f"{s['lite_over_star']:.1f}x", (i + 0.2, lite[i]),
                    ha="center", va="bottom", fontsize=8)
    ax.set_xticks(list(x), labels)
    ax.set_yscale("log")
    ax.set_ylabel("FPS (median)")
    ax.set_xlabel("input resolution")
    ax.legend()
    ax.set_title("upsampling throughput (4x)")
    _finish(fig, path)


def render_training_figure(records: list[dict], path) -> None:
    """Loss curves over iterations, one line per recorded loss term."""
    keys = sorted({k for r in records for k in r if k.startswith("loss_")})
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for key in keys:
        pts = [(r["iteration"], r[key]) for r in records if key in r]
        if pts:
            ax.plot(*zip(*pts), label=key.removeprefix("loss_"), linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("training losses")
    _finish(fig, path)
