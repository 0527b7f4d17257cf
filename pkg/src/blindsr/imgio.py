"""Image file I/O and array layout helpers.

The toolkit's in-memory format is float32 RGB, channels x height x width,
range [0, 1]. Files are read and written through OpenCV (PNG/JPEG).
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


def load_image(path) -> np.ndarray:
    """Read an image file as float32 RGB CHW in [0, 1]."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise IOError(f"cannot read image: {path}")
    rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
    return np.moveaxis(rgb.astype(np.float32) / 255.0, -1, 0)


def save_image(img: np.ndarray, path) -> None:
    """Write a CHW [0, 1] image; format follows the file extension."""
    hwc = np.moveaxis(np.clip(img, 0.0, 1.0), 0, -1)
    u8 = (hwc * 255.0).round().astype(np.uint8)
    bgr = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), bgr):
        raise IOError(f"cannot write image: {path}")


def list_images(directory) -> list[Path]:
    """Image files directly inside ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.suffix.lower() in IMAGE_EXTENSIONS)


def center_crop_multiple(img: np.ndarray, multiple: int) -> np.ndarray:
    """Center-crop so both spatial dims are divisible by ``multiple``."""
    _, h, w = img.shape
    nh, nw = h - h % multiple, w - w % multiple
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} too small to crop to a multiple of {multiple}")
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[:, top:top + nh, left:left + nw]
