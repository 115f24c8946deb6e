"""Sensor simulation: Gaussian spectral response functions and resampling.

Builds band-wise Gaussian SRFs from center/FWHM pairs, applies them to
simulate broad-band (Mx) imagery from narrow-band (Hx) cubes, and spatially
downsamples with a block-mean or Gaussian PSF.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .envi_io import HyperCube
from .errors import EmptySupportError

# FWHM = 2*sqrt(2*ln 2) * sigma for a Gaussian
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

# relative weight below which SRF entries are zeroed before normalization
SRF_TRUNCATION = 1e-6


@dataclass
class SpectralResponse:
    """Row-stochastic weight matrix mapping source bands to target bands."""

    source_wavelengths: np.ndarray
    weights: np.ndarray
    target_centers: np.ndarray
    target_fwhm: np.ndarray

    def __post_init__(self):
        self.source_wavelengths = np.asarray(self.source_wavelengths, dtype=float)
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.target_centers = np.asarray(self.target_centers, dtype=float)
        self.target_fwhm = np.asarray(self.target_fwhm, dtype=float)
        if self.weights.shape != (self.target_centers.size, self.source_wavelengths.size):
            raise ValueError("weights shape must be (target_bands, source_bands)")
        if np.any(self.weights < 0):
            raise ValueError("SRF weights must be non-negative")
        sums = self.weights.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("SRF rows must sum to 1 within 1e-12")


def gaussian_srf(centers: np.ndarray, fwhm: np.ndarray, grid: np.ndarray) -> SpectralResponse:
    """Gaussian response rows on a source wavelength grid.

    Row k is exp(-(grid - c_k)^2 / (2 sigma_k^2)) with sigma_k = fwhm_k * FWHM_TO_SIGMA,
    truncated below SRF_TRUNCATION of the row maximum and normalized to unit sum.
    A band whose +/-3 sigma support misses the grid entirely is an error, not a
    silently zero-filled row.
    """
    centers = np.asarray(centers, dtype=float).ravel()
    fwhm = np.asarray(fwhm, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float).ravel()
    if centers.size != fwhm.size:
        raise ValueError("centers and fwhm must have equal length")
    if np.any(fwhm <= 0):
        raise ValueError("fwhm must be positive")
    if grid.size == 0 or not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be nonempty and strictly increasing")

    sigma = fwhm * FWHM_TO_SIGMA
    weights = np.zeros((centers.size, grid.size))
    for k, (c, s) in enumerate(zip(centers, sigma)):
        inside = (grid >= c - 3.0 * s) & (grid <= c + 3.0 * s)
        if not np.any(inside):
            raise EmptySupportError(
                f"grid does not overlap [{c - 3 * s:g}, {c + 3 * s:g}] nm for band {k}"
            )
        row = np.exp(-((grid - c) ** 2) / (2.0 * s * s))
        row[row < SRF_TRUNCATION * row.max()] = 0.0
        weights[k] = row / row.sum()
    return SpectralResponse(source_wavelengths=grid, weights=weights,
                            target_centers=centers, target_fwhm=fwhm)


def spectral_resample(cube: HyperCube, srf: SpectralResponse) -> HyperCube:
    """Weighted band sums per SRF row; header gets the target centers/FWHM."""
    if srf.weights.shape[1] != cube.bands:
        raise ValueError(
            f"SRF expects {srf.weights.shape[1]} source bands, cube has {cube.bands}"
        )
    if cube.header.wavelengths is not None:
        if not np.allclose(cube.header.wavelengths, srf.source_wavelengths, atol=1e-9):
            raise ValueError("SRF source grid does not match cube wavelengths")
    out = np.tensordot(cube.values, srf.weights, axes=([2], [1]))
    header = cube.header.copy()
    header.bands = int(srf.target_centers.size)
    header.wavelengths = [float(v) for v in srf.target_centers]
    header.fwhm = [float(v) for v in srf.target_fwhm]
    header.bbl = None
    return HyperCube(header, out, cube.nodata)


def spatial_downsample(cube: HyperCube, factor: int, psf: str = "block_mean") -> HyperCube:
    """Reduce spatial resolution by an integer factor.

    block_mean averages factor x factor blocks; gaussian convolves each band
    with sigma = factor/2 before decimating. Dimensions not divisible by the
    factor are cropped to the largest multiple, with a warning.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    if psf not in ("block_mean", "gaussian"):
        raise ValueError(f"unknown psf {psf!r}")
    if factor == 1:
        return HyperCube(cube.header.copy(), cube.values.copy(), cube.nodata)

    lines = (cube.lines // factor) * factor
    samples = (cube.samples // factor) * factor
    if lines == 0 or samples == 0:
        raise ValueError(f"cube too small for factor {factor}")
    values = cube.values
    if lines != cube.lines or samples != cube.samples:
        warnings.warn(
            f"cropping {cube.lines}x{cube.samples} to {lines}x{samples} "
            f"(multiple of {factor})"
        )
        values = values[:lines, :samples, :]

    if psf == "block_mean":
        blocks = values.reshape(lines // factor, factor, samples // factor, factor, cube.bands)
        if cube.nodata is not None:
            valid = blocks != cube.nodata
            num = np.where(valid, blocks, 0.0).sum(axis=(1, 3))
            cnt = valid.sum(axis=(1, 3))
            out = np.where(cnt > 0, num / np.maximum(cnt, 1), cube.nodata)
        else:
            out = blocks.mean(axis=(1, 3))
    else:
        if cube.nodata is not None and np.any(values == cube.nodata):
            warnings.warn("gaussian psf ignores nodata; sentinel values are smoothed")
        smoothed = ndimage.gaussian_filter(
            values, sigma=(factor / 2.0, factor / 2.0, 0.0), mode="reflect"
        )
        off = factor // 2
        out = smoothed[off::factor, off::factor, :]
        out = out[: lines // factor, : samples // factor, :]

    header = cube.header.copy()
    header.lines = lines // factor
    header.samples = samples // factor
    return HyperCube(header, out, cube.nodata)


# ---------------------------------------------------------------------------
# Sensor definitions
# ---------------------------------------------------------------------------

# generic broad-band VNIR Mx preset: blue/green/red/NIR
BUILTIN_SENSORS = {
    "vnir4": (np.array([485.0, 560.0, 660.0, 830.0]),
              np.array([70.0, 80.0, 60.0, 120.0])),
}


def builtin_sensor(name: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        centers, fwhm = BUILTIN_SENSORS[name]
    except KeyError:
        raise ValueError(f"unknown sensor preset {name!r}: have {sorted(BUILTIN_SENSORS)}")
    return centers.copy(), fwhm.copy()


def read_sensor_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Sensor definition CSV with columns (center_nm, fwhm_nm); header row optional."""
    centers, fwhm = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                c = float(row[0])
            except ValueError:
                continue  # header row
            centers.append(c)
            fwhm.append(float(row[1]))
    if not centers:
        raise ValueError(f"no sensor bands found in {path}")
    return np.asarray(centers), np.asarray(fwhm)
