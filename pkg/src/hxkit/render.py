"""Quick-look rendering of cube bands to 8-bit grayscale or RGB images."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .envi_io import HyperCube


def _stretch_band(band: np.ndarray, stretch: str, valid: np.ndarray) -> np.ndarray:
    data = band[valid]
    out = np.zeros(band.shape, dtype=np.uint8)
    if data.size == 0:
        return out
    if stretch == "minmax":
        lo, hi = float(data.min()), float(data.max())
    elif stretch == "stddev2":
        mu, sd = float(data.mean()), float(data.std())
        lo, hi = mu - 2.0 * sd, mu + 2.0 * sd
    else:
        raise ValueError(f"unknown stretch {stretch!r}")
    if hi <= lo:
        out[valid] = 128  # declared midpoint for zero range
        return out
    scaled = np.clip((band - lo) / (hi - lo), 0.0, 1.0) * 255.0
    out[valid] = np.rint(scaled[valid]).astype(np.uint8)
    return out


def render(cube: HyperCube, band: int | None = None,
           rgb: tuple[int, int, int] | None = None,
           stretch: str = "minmax") -> np.ndarray:
    """Linear-stretched uint8 image: (H, W) for one band, (H, W, 3) for RGB."""
    if (band is None) == (rgb is None):
        raise ValueError("specify exactly one of band or rgb")
    valid = cube.valid_mask()
    if band is not None:
        if not (0 <= band < cube.bands):
            raise ValueError(f"band {band} out of range")
        return _stretch_band(cube.values[:, :, band], stretch, valid)
    for b in rgb:
        if not (0 <= b < cube.bands):
            raise ValueError(f"band {b} out of range")
    return np.stack(
        [_stretch_band(cube.values[:, :, b], stretch, valid) for b in rgb], axis=2
    )


def write_image(image: np.ndarray, path: str | Path) -> Path:
    """Write a uint8 image as PGM (gray), PPM (RGB) or PNG (needs Pillow)."""
    path = Path(path)
    image = np.ascontiguousarray(image, dtype=np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        if image.ndim != 2:
            raise ValueError("PGM requires a single-band image")
        header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
        path.write_bytes(header + image.tobytes())
    elif suffix == ".ppm":
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError("PPM requires an RGB image")
        header = f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
        path.write_bytes(header + image.tobytes())
    elif suffix == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise RuntimeError("PNG output requires Pillow; use .pgm/.ppm instead") from exc
        Image.fromarray(image).save(path, format="PNG")
    else:
        raise ValueError(f"unsupported image suffix {suffix!r} (use .pgm/.ppm/.png)")
    return path
