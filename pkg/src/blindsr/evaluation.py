"""Reference metrics, dataset evaluation reports, and the throughput benchmark.

PSNR is computed on full RGB in the [0, 1] domain with no channel
conversion or border crop, capped at 80 dB so identical images report a
finite value. SSIM is the standard 11x11 Gaussian-window (sigma 1.5)
formulation with stabilizers K1=0.01, K2=0.03 at dynamic range 1,
averaged over channels.

The benchmark walks a ladder of (input, 4x target) resolutions and
reports the median FPS of repeated single-image forwards after warmup;
raw timings are retained for audit. Evaluation rows may be computed in
parallel, but the benchmark is strictly sequential to keep timings
honest.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import statistics
import time
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import cv2
import numpy as np
import torch

from .imgio import list_images, load_image, save_image

PSNR_CAP_DB = 80.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, cap: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images, capped."""
    _check_pair(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(1.0 / mse))


def _ssim_window() -> np.ndarray:
    ax = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * SSIM_SIGMA ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    pad = (SSIM_WINDOW - 1) // 2
    out = cv2.filter2D(img, -1, window, borderType=cv2.BORDER_REFLECT)
    return out[pad:-pad, pad:-pad]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity over the valid window positions,
    averaged across channels. Accepts CHW or single-channel HW arrays."""
    _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}px per side")
    window = _ssim_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    values = []
    for ch in range(a.shape[0]):
        x = a[ch].astype(np.float64)
        y = b[ch].astype(np.float64)
        mu_x = _filter_valid(x, window)
        mu_y = _filter_valid(y, window)
        sigma_x = _filter_valid(x * x, window) - mu_x ** 2
        sigma_y = _filter_valid(y * y, window) - mu_y ** 2
        sigma_xy = _filter_valid(x * y, window) - mu_x * mu_y
        ssim_map = (((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2))
                    / ((mu_x ** 2 + mu_y ** 2 + c1) * (sigma_x + sigma_y + c2)))
        values.append(float(ssim_map.mean()))
    return float(np.mean(values))


@dataclass
class MetricsRow:
    filename: str
    psnr_db: float | None = None
    ssim: float | None = None
    inference_ms: float | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    environment: str = ""
    timestamp: str = ""

    COLUMNS = ("psnr_db", "ssim", "inference_ms")

    def compute_aggregates(self):
        self.aggregates = {}
        for col in self.COLUMNS:
            values = [getattr(r, col) for r in self.rows
                      if r.error is None and getattr(r, col) is not None]
            if values:
                self.aggregates[col] = {"mean": float(np.mean(values)),
                                        "median": float(np.median(values))}
        return self.aggregates

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filename", "psnr_db", "ssim", "inference_ms"])
            for r in self.rows:
                writer.writerow([r.filename,
                                 "" if r.psnr_db is None else f"{r.psnr_db:.4f}",
                                 "" if r.ssim is None else f"{r.ssim:.6f}",
                                 "" if r.inference_ms is None else f"{r.inference_ms:.3f}"])


def environment_string() -> str:
    return (f"{platform.platform()}; python {platform.python_version()}; "
            f"torch {torch.__version__}; {torch.get_num_threads()} threads")


def super_resolve(gen: torch.nn.Module, img: np.ndarray) -> np.ndarray:
    """Run one CHW [0, 1] image through a generator, clipping the output."""
    gen.eval()
    with torch.no_grad():
        sr = gen(torch.from_numpy(np.ascontiguousarray(img)).float().unsqueeze(0))
    return np.clip(sr.squeeze(0).numpy(), 0.0, 1.0)


def evaluate_dataset(sr_fn, input_dir, hr_dir=None, out_dir=None) -> MetricsReport:
    """Evaluate a super-resolver over a directory of images.

    Args:
        sr_fn: callable mapping a CHW [0, 1] array to its SR output.
        input_dir: images fed to ``sr_fn``.
        hr_dir: optional reference directory; files are matched by name.
        out_dir: optional directory to write SR outputs into.

    Unreadable or mismatched rows are recorded as row-level errors and the
    run continues; an empty input directory is fatal.
    """
    paths = list_images(input_dir)
    if not paths:
        raise ValueError(f"no images found in {input_dir}")
    hr_lookup = {}
    if hr_dir is not None:
        hr_lookup = {p.name: p for p in list_images(hr_dir)}
    report = MetricsReport(environment=environment_string(),
                           timestamp=datetime.now(timezone.utc).isoformat())
    for path in paths:
        row = MetricsRow(filename=path.name)
        try:
            img = load_image(path)
            t0 = time.perf_counter()
            sr = sr_fn(img)
            row.inference_ms = (time.perf_counter() - t0) * 1000.0
            if out_dir is not None:
                save_image(sr, Path(out_dir) / path.name)
            if hr_dir is not None:
                hr_path = hr_lookup.get(path.name)
                if hr_path is None:
                    raise ValueError(f"no matching reference for {path.name}")
                hr = load_image(hr_path)
                row.psnr_db = psnr(sr, hr)
                row.ssim = ssim(sr, hr)
        except Exception as exc:  # row-level failure, keep going
            row.error = str(exc)
        report.rows.append(row)
    report.compute_aggregates()
    return report


def generator_sr_fn(gen: torch.nn.Module):
    return lambda img: super_resolve(gen, img)


# Benchmark ladder resolutions as (width, height); targets are 4x both dims.
DESK_LADDER_INPUTS = ((160, 90), (214, 120), (240, 135), (320, 180), (480, 270))
FULL_LADDER_INPUTS = ((640, 360), (854, 480), (960, 540), (1280, 720), (1920, 1080))


@dataclass
class BenchmarkLadder:
    """Sequence of (input, target) resolution pairs plus run counts."""

    steps: list[tuple[tuple[int, int], tuple[int, int]]]
    repeats: int = 20
    warmup: int = 3

    def __post_init__(self):
        for inp, target in self.steps:
            if target[0] != 4 * inp[0] or target[1] != 4 * inp[1]:
                raise ValueError(
                    f"ladder step {inp} -> {target}: target must be 4x the input in both dims")


def desk_ladder(repeats: int = 20, warmup: int = 3) -> BenchmarkLadder:
    steps = [(inp, (inp[0] * 4, inp[1] * 4)) for inp in DESK_LADDER_INPUTS]
    return BenchmarkLadder(steps=steps, repeats=repeats, warmup=warmup)


def full_ladder(repeats: int = 20, warmup: int = 3) -> BenchmarkLadder:
    steps = [(inp, (inp[0] * 4, inp[1] * 4)) for inp in FULL_LADDER_INPUTS]
    return BenchmarkLadder(steps=steps, repeats=repeats, warmup=warmup)


def time_forward(gen: torch.nn.Module, width: int, height: int,
                 repeats: int, warmup: int) -> list[float]:
    """Wall-clock seconds of repeated single-image forwards (after warmup)."""
    gen.eval()
    x = torch.rand(1, 3, height, width, generator=torch.Generator().manual_seed(0))
    timings = []
    with torch.inference_mode():
        for _ in range(warmup):
            gen(x)
        for _ in range(repeats):
            t0 = time.perf_counter()
            gen(x)
            timings.append(time.perf_counter() - t0)
    return timings


def benchmark(gen_star: torch.nn.Module, gen_lite: torch.nn.Module,
              ladder: BenchmarkLadder) -> dict:
    """Median-FPS table for both generators over the ladder.

    Each step records per-model median FPS, the lite/star throughput
    ratio, and the raw timings. A step that runs out of memory is marked
    skipped and the run continues.
    """
    if ladder.warmup < 3:
        raise ValueError("benchmark requires warmup >= 3")
    result = {"environment": environment_string(),
              "timestamp": datetime.now(timezone.utc).isoformat(),
              "repeats": ladder.repeats, "warmup": ladder.warmup, "steps": []}
    for (iw, ih), (tw, th) in ladder.steps:
        step = {"input": [iw, ih], "target": [tw, th], "skipped": False}
        try:
            star_times = time_forward(gen_star, iw, ih, ladder.repeats, ladder.warmup)
            lite_times = time_forward(gen_lite, iw, ih, ladder.repeats, ladder.warmup)
        except (MemoryError, RuntimeError) as exc:
            if isinstance(exc, RuntimeError) and "memory" not in str(exc).lower():
                raise
            step["skipped"] = True
            step["reason"] = str(exc)
            result["steps"].append(step)
            continue
        star_fps = 1.0 / statistics.median(star_times)
        lite_fps = 1.0 / statistics.median(lite_times)
        step.update({
            "star_fps": star_fps,
            "lite_fps": lite_fps,
            "lite_over_star": lite_fps / star_fps,
            "star_raw_seconds": star_times,
            "lite_raw_seconds": lite_times,
        })
        result["steps"].append(step)
    return result


def write_benchmark_report(result: dict, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(result, indent=2))
