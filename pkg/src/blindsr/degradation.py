"""Adaptive degradation synthesis for blind super-resolution training.

HR images are turned into LR counterparts by a randomized pipeline of
blur, resize, noise and JPEG stages. The parameter space is split into
three frequency-balanced levels: two first-order levels with small and
large parameter ranges, and one second-order level that runs the stage
sequence twice. Every sampled parameter is recorded in a
:class:`DegradationRecipe` so the exact LR image can be reproduced.

Images are numpy float arrays, channels x height x width, range [0, 1].
All randomness flows through an explicit ``numpy.random.Generator``;
the functions hold no mutable state and are safe to use from multiple
workers as long as each worker owns its own generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import cv2
import numpy as np
from scipy import special

DOWNSCALE = 4
KERNELSIZE = 21

RESIZE_MODES = ("area", "bilinear", "bicubic")

_CV2_RESIZE_FLAGS = {
    "area": cv2.INTER_AREA,
    "bilinear": cv2.INTER_LINEAR,
    "bicubic": cv2.INTER_CUBIC,
}


class DegradationError(ValueError):
    """Invalid degradation parameters or inputs."""


def _check_probs(name, probs, size):
    if len(probs) != size:
        raise DegradationError(f"{name} must have {size} entries, got {len(probs)}")
    if any(p < 0 for p in probs):
        raise DegradationError(f"{name} entries must be >= 0, got {probs}")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise DegradationError(f"{name} must sum to 1.0, got {sum(probs)!r}")


def _check_range(name, rng_pair):
    lo, hi = rng_pair
    if lo > hi:
        raise DegradationError(f"{name} must satisfy min <= max, got {rng_pair}")


@dataclass(frozen=True)
class StageParams:
    """Sampling ranges for one pass of the blur/resize/noise/JPEG sequence.

    ``gaussian_noise_sigma_range`` is expressed on the [0, 255] scale and
    converted internally; ``jpeg_quality_range`` is inclusive integers.
    """

    blur_sigma_range: tuple[float, float] = (0.2, 1.5)
    iso_aniso_probs: tuple[float, float] = (0.65, 0.35)
    resize_scale_range: tuple[float, float] = (0.7, 1.3)
    resize_mode_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    gaussian_noise_sigma_range: tuple[float, float] = (1.0, 20.0)
    poisson_noise_scale_range: tuple[float, float] = (0.05, 2.0)
    noise_type_probs: tuple[float, float] = (0.5, 0.5)
    jpeg_quality_range: tuple[int, int] = (50, 95)

    def __post_init__(self):
        _check_probs("iso_aniso_probs", self.iso_aniso_probs, 2)
        _check_probs("resize_mode_probs", self.resize_mode_probs, 3)
        _check_probs("noise_type_probs", self.noise_type_probs, 2)
        for name in ("blur_sigma_range", "resize_scale_range",
                     "gaussian_noise_sigma_range", "poisson_noise_scale_range",
                     "jpeg_quality_range"):
            _check_range(name, getattr(self, name))
        qlo, qhi = self.jpeg_quality_range
        if qlo < 1 or qhi > 100:
            raise DegradationError(
                f"jpeg_quality_range must lie within [1, 100], got {self.jpeg_quality_range}")
        if self.blur_sigma_range[0] <= 0:
            raise DegradationError("blur sigma must be positive")


@dataclass(frozen=True)
class LevelParams:
    """One degradation level: one stage per pass.

    Second-order levels carry two stages plus the probability of skipping
    the second-stage blur and of appending a sinc low-pass filter.
    """

    order: int
    stages: tuple[StageParams, ...]
    second_stage_blur_skip_prob: float = 0.0
    sinc_prob: float = 0.0
    sinc_cutoff_range: tuple[float, float] = (math.pi / 3, math.pi)

    def __post_init__(self):
        if self.order not in (1, 2):
            raise DegradationError(f"order must be 1 or 2, got {self.order}")
        if len(self.stages) != self.order:
            raise DegradationError(
                f"level of order {self.order} needs {self.order} stage(s), got {len(self.stages)}")
        if not 0.0 <= self.second_stage_blur_skip_prob <= 1.0:
            raise DegradationError("second_stage_blur_skip_prob must be in [0, 1]")
        if not 0.0 <= self.sinc_prob <= 1.0:
            raise DegradationError("sinc_prob must be in [0, 1]")
        _check_range("sinc_cutoff_range", self.sinc_cutoff_range)
        lo, hi = self.sinc_cutoff_range
        if lo <= 0 or hi > math.pi:
            raise DegradationError("sinc cutoffs must lie in (0, pi]")


@dataclass(frozen=True)
class DegradationSpace:
    """The full degradation space: exactly three levels and their selection
    distribution. Only the third level may be second-order."""

    levels: tuple[LevelParams, LevelParams, LevelParams]
    level_probs: tuple[float, float, float] = (0.3, 0.3, 0.4)

    def __post_init__(self):
        if len(self.levels) != 3:
            raise DegradationError(f"expected exactly 3 levels, got {len(self.levels)}")
        _check_probs("level_probs", self.level_probs, 3)
        for i, level in enumerate(self.levels[:2]):
            if level.order != 1:
                raise DegradationError(f"levels[{i}] must be first-order")
        if self.levels[2].order != 2:
            raise DegradationError("levels[2] must be the (only) second-order level")


def default_space() -> DegradationSpace:
    """Space with the default level selection distribution [0.3, 0.3, 0.4].

    The numeric ranges follow conventional magnitudes for real-world
    degradation synthesis: a mild and a strong first-order level, and a
    second-order level that reuses the strong ranges in its first pass
    and tighter ranges in the second.
    """
    mild = StageParams(
        blur_sigma_range=(0.2, 0.8),
        resize_scale_range=(0.85, 1.2),
        gaussian_noise_sigma_range=(1.0, 10.0),
        poisson_noise_scale_range=(0.05, 1.0),
        jpeg_quality_range=(75, 95),
    )
    strong = StageParams(
        blur_sigma_range=(0.2, 1.5),
        resize_scale_range=(0.7, 1.3),
        gaussian_noise_sigma_range=(1.0, 20.0),
        poisson_noise_scale_range=(0.05, 2.0),
        jpeg_quality_range=(50, 95),
    )
    second = StageParams(
        blur_sigma_range=(0.2, 0.75),
        resize_scale_range=(0.85, 1.15),
        gaussian_noise_sigma_range=(1.0, 10.0),
        poisson_noise_scale_range=(0.05, 1.0),
        jpeg_quality_range=(60, 95),
    )
    return DegradationSpace(
        levels=(
            LevelParams(order=1, stages=(mild,)),
            LevelParams(order=1, stages=(strong,)),
            LevelParams(order=2, stages=(strong, second),
                        second_stage_blur_skip_prob=0.2, sinc_prob=0.8),
        ),
    )


@dataclass(frozen=True)
class BlurKernel:
    """Normalized 2-D filter of odd side length."""

    weights: np.ndarray
    kind: str  # iso-gaussian | aniso-gaussian | sinc

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DegradationError(f"kernel must be square 2-D, got shape {w.shape}")
        if w.shape[0] % 2 == 0 or w.shape[0] < 3:
            raise DegradationError(f"kernel side must be odd and >= 3, got {w.shape[0]}")
        if abs(float(w.sum()) - 1.0) > 1e-6:
            raise DegradationError(f"kernel must be normalized, sum={w.sum()!r}")
        if self.kind not in ("iso-gaussian", "aniso-gaussian", "sinc"):
            raise DegradationError(f"unknown kernel kind {self.kind!r}")


@dataclass
class DegradationRecipe:
    """Replayable record of one degradation: the chosen level and the ordered
    stage list with every sampled numeric parameter (noise stages carry their
    own seed so replay is bit-exact)."""

    level_index: int
    stages: list[dict] = field(default_factory=list)
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DegradationRecipe":
        d = json.loads(text)
        return cls(level_index=d["level_index"], stages=d["stages"], seed=d.get("seed", 0))


def _validate_image(img):
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise DegradationError("image must be a 3-D array (channels, height, width)")
    if img.shape[1] < 1 or img.shape[2] < 1:
        raise DegradationError("image must be non-empty")


def sample_level(space: DegradationSpace, rng: np.random.Generator) -> int:
    """Draw a level index according to the space's selection distribution."""
    return int(rng.choice(3, p=np.asarray(space.level_probs, dtype=np.float64)))


def make_gaussian_kernel(sigma1: float, sigma2: float, angle: float,
                         size: int = KERNELSIZE) -> BlurKernel:
    """Build a normalized (an)isotropic Gaussian kernel.

    Args:
        sigma1: standard deviation along the first principal axis.
        sigma2: standard deviation along the second axis; equal sigmas give
            an isotropic, rotation-invariant kernel.
        angle: rotation of the principal axes, radians.
        size: odd kernel side length, >= 3.
    """
    if size % 2 == 0 or size < 3:
        raise DegradationError(f"kernel size must be odd and >= 3, got {size}")
    if sigma1 <= 0 or sigma2 <= 0:
        raise DegradationError("sigma values must be positive")
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2
    xx, yy = np.meshgrid(ax, ax)  # xx varies along columns, yy along rows
    cos_t, sin_t = math.cos(angle), math.sin(angle)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    cov = rot @ np.diag([sigma1 ** 2, sigma2 ** 2]) @ rot.T
    inv = np.linalg.inv(cov)
    quad = inv[0, 0] * xx ** 2 + 2 * inv[0, 1] * xx * yy + inv[1, 1] * yy ** 2
    weights = np.exp(-0.5 * quad)
    weights /= weights.sum()
    kind = "iso-gaussian" if sigma1 == sigma2 else "aniso-gaussian"
    return BlurKernel(weights=weights, kind=kind)


def make_sinc_kernel(cutoff: float, size: int = KERNELSIZE) -> BlurKernel:
    """Build a normalized circular-symmetric low-pass (sinc) kernel.

    Args:
        cutoff: cutoff frequency in radians, in (0, pi].
        size: odd kernel side length.
    """
    if not 0 < cutoff <= math.pi:
        raise DegradationError(f"cutoff must lie in (0, pi], got {cutoff}")
    if size % 2 == 0 or size < 3:
        raise DegradationError(f"kernel size must be odd and >= 3, got {size}")
    c = (size - 1) / 2
    ax = np.arange(size, dtype=np.float64) - c
    xx, yy = np.meshgrid(ax, ax)
    r = np.sqrt(xx ** 2 + yy ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = cutoff * special.j1(cutoff * r) / (2 * np.pi * r)
    weights[int(c), int(c)] = cutoff ** 2 / (4 * np.pi)
    weights /= weights.sum()
    return BlurKernel(weights=weights, kind="sinc")


def apply_blur(img: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Filter each channel with the kernel, reflective boundary handling.

    Uses the correlation convention; all kernels produced here are
    centrosymmetric so this coincides with true convolution.
    """
    _validate_image(img)
    hwc = np.ascontiguousarray(np.moveaxis(img, 0, -1))
    out = cv2.filter2D(hwc, -1, kernel.weights, borderType=cv2.BORDER_REFLECT)
    if out.ndim == 2:  # single-channel inputs come back squeezed
        out = out[:, :, None]
    return np.moveaxis(out, -1, 0)


def jpeg_compress(img: np.ndarray, quality: int) -> np.ndarray:
    """Round-trip the image through a JPEG encode/decode at the given quality."""
    _validate_image(img)
    if not 1 <= int(quality) <= 100:
        raise DegradationError(f"JPEG quality must be in [1, 100], got {quality}")
    hwc = np.moveaxis(img, 0, -1)
    u8 = np.clip(hwc * 255.0, 0, 255).round().astype(np.uint8)
    bgr = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
    ok, buf = cv2.imencode(".jpg", bgr, [int(cv2.IMWRITE_JPEG_QUALITY), int(quality)])
    if not ok:
        raise DegradationError("JPEG encoding failed")
    dec = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    rgb = cv2.cvtColor(dec, cv2.COLOR_BGR2RGB).astype(img.dtype) / 255.0
    return np.moveaxis(rgb, -1, 0)


def _resize(img: np.ndarray, new_h: int, new_w: int, mode: str) -> np.ndarray:
    hwc = np.ascontiguousarray(np.moveaxis(img, 0, -1))
    out = cv2.resize(hwc, (new_w, new_h), interpolation=_CV2_RESIZE_FLAGS[mode])
    if out.ndim == 2:
        out = out[:, :, None]
    return np.moveaxis(out, -1, 0)


def _apply_gaussian_noise(img, sigma255, seed):
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma255 / 255.0, size=img.shape)
    return np.clip(img + noise, 0.0, 1.0).astype(img.dtype)


def _apply_poisson_noise(img, scale, seed):
    # shot noise: treat [0,255] pixel values as photon counts
    rng = np.random.default_rng(seed)
    base = np.clip(img, 0.0, 1.0)
    noisy = rng.poisson(base * 255.0).astype(np.float64) / 255.0
    return np.clip(img + (noisy - base) * scale, 0.0, 1.0).astype(img.dtype)


def add_noise(img: np.ndarray, params, rng: np.random.Generator) -> np.ndarray:
    """Corrupt the image with Gaussian or Poisson noise sampled from ``params``.

    ``params`` may be a :class:`StageParams` or a first-order
    :class:`LevelParams` (its single stage is used). Output is clipped to
    [0, 1]; results are deterministic for a given generator state.
    """
    _validate_image(img)
    stage = params.stages[0] if isinstance(params, LevelParams) else params
    record = _sample_noise_stage(stage, rng)
    return _run_noise_stage(img, record)


def _sample_noise_stage(stage: StageParams, rng) -> dict:
    kind = "gaussian" if rng.random() < stage.noise_type_probs[0] else "poisson"
    seed = int(rng.integers(0, 2 ** 31 - 1))
    if kind == "gaussian":
        lo, hi = stage.gaussian_noise_sigma_range
        return {"kind": "noise", "noise": "gaussian",
                "sigma255": float(rng.uniform(lo, hi)), "noise_seed": seed}
    lo, hi = stage.poisson_noise_scale_range
    return {"kind": "noise", "noise": "poisson",
            "scale": float(rng.uniform(lo, hi)), "noise_seed": seed}


def _run_noise_stage(img, record):
    if record["noise"] == "gaussian":
        return _apply_gaussian_noise(img, record["sigma255"], record["noise_seed"])
    return _apply_poisson_noise(img, record["scale"], record["noise_seed"])


def _sample_blur_stage(stage: StageParams, rng, pass_index) -> dict:
    iso = rng.random() < stage.iso_aniso_probs[0]
    lo, hi = stage.blur_sigma_range
    sigma1 = float(rng.uniform(lo, hi))
    if iso:
        sigma2, angle = sigma1, 0.0
    else:
        sigma2 = float(rng.uniform(lo, hi))
        angle = float(rng.uniform(-math.pi, math.pi))
    return {"kind": "blur", "pass": pass_index,
            "kernel": "iso-gaussian" if iso else "aniso-gaussian",
            "sigma1": sigma1, "sigma2": sigma2, "angle": angle, "size": KERNELSIZE}


def sample_recipe(space: DegradationSpace, rng: np.random.Generator,
                  seed: int = 0) -> DegradationRecipe:
    """Sample a complete degradation recipe (no image required).

    First-order levels produce one blur/resize/noise/JPEG pass. The
    second-order level runs two passes; its second-pass blur is skipped
    with ``second_stage_blur_skip_prob`` and a sinc filter is appended
    with ``sinc_prob``. A final fixed bicubic resize to a quarter of the
    source size closes every recipe.
    """
    level_index = sample_level(space, rng)
    level = space.levels[level_index]
    stages: list[dict] = []
    for pass_index, stage in enumerate(level.stages):
        blur_executed = True
        if pass_index == 1:
            blur_executed = rng.random() >= level.second_stage_blur_skip_prob
        if blur_executed:
            stages.append(_sample_blur_stage(stage, rng, pass_index))
        scale = float(rng.uniform(*stage.resize_scale_range))
        mode = RESIZE_MODES[int(rng.choice(3, p=np.asarray(stage.resize_mode_probs)))]
        stages.append({"kind": "resize", "pass": pass_index, "scale": scale, "mode": mode})
        noise = _sample_noise_stage(stage, rng)
        noise["pass"] = pass_index
        stages.append(noise)
        stages.append({"kind": "jpeg", "pass": pass_index,
                       "quality": int(rng.integers(stage.jpeg_quality_range[0],
                                                   stage.jpeg_quality_range[1] + 1))})
        if pass_index == 1 and rng.random() < level.sinc_prob:
            stages.append({"kind": "sinc", "pass": pass_index,
                           "cutoff": float(rng.uniform(*level.sinc_cutoff_range)),
                           "size": KERNELSIZE})
    stages.append({"kind": "final_resize", "mode": "bicubic"})
    return DegradationRecipe(level_index=level_index, stages=stages, seed=seed)


def apply_recipe(hr: np.ndarray, recipe: DegradationRecipe) -> np.ndarray:
    """Replay a recipe on an HR image. Deterministic: the same recipe and
    image always yield the bit-identical LR image."""
    _validate_image(hr)
    h, w = hr.shape[1], hr.shape[2]
    if h % DOWNSCALE or w % DOWNSCALE:
        raise DegradationError(
            f"HR dimensions must be divisible by {DOWNSCALE}, got {h}x{w}")
    img = hr.astype(np.float32, copy=True)
    for record in recipe.stages:
        kind = record["kind"]
        if kind == "blur":
            kernel = make_gaussian_kernel(record["sigma1"], record["sigma2"],
                                          record["angle"], record["size"])
            img = apply_blur(img, kernel)
        elif kind == "sinc":
            img = apply_blur(img, make_sinc_kernel(record["cutoff"], record["size"]))
        elif kind == "resize":
            ch, cw = img.shape[1], img.shape[2]
            nh = max(1, int(round(ch * record["scale"])))
            nw = max(1, int(round(cw * record["scale"])))
            img = _resize(img, nh, nw, record["mode"])
        elif kind == "noise":
            img = _run_noise_stage(img, record)
        elif kind == "jpeg":
            img = jpeg_compress(np.clip(img, 0.0, 1.0), record["quality"])
        elif kind == "final_resize":
            img = _resize(img, h // DOWNSCALE, w // DOWNSCALE, record["mode"])
        else:
            raise DegradationError(f"unknown stage kind {kind!r}")
    return np.clip(img, 0.0, 1.0)


def degrade(hr: np.ndarray, space: DegradationSpace,
            rng: np.random.Generator) -> tuple[np.ndarray, DegradationRecipe]:
    """Sample a recipe and apply it, returning the quarter-size LR image
    together with the recipe that reproduces it."""
    _validate_image(hr)
    h, w = hr.shape[1], hr.shape[2]
    if h % DOWNSCALE or w % DOWNSCALE:
        raise DegradationError(
            f"HR dimensions must be divisible by {DOWNSCALE}, got {h}x{w}")
    recipe = sample_recipe(space, rng)
    return apply_recipe(hr, recipe), recipe
