"""Hx-Mx fusion by coupled non-negative matrix factorization.

A low-spatial-resolution hyperspectral cube and a high-spatial-resolution
multispectral cube of the same scene are alternately unmixed with shared
factors: the endmember matrix learned from the Hx side is pushed through the
spectral response to constrain the Mx side, whose abundances carry the
spatial detail back. The fused product is endmembers x high-res abundances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cube import spectral_angle_map
from .envi_io import HyperCube
from .resample import spatial_downsample

# multiplicative-update denominator guard
NMF_EPS = 1e-12


@dataclass
class DegradationPair:
    """Known spectral response R (rows sum to 1) and integer spatial factor."""

    R: np.ndarray
    spatial_factor: int
    psf: str = "block_mean"

    def __post_init__(self):
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if np.any(self.R < 0):
            raise ValueError("spectral response must be non-negative")
        if np.any(np.abs(self.R.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("spectral response rows must sum to 1")
        self.spatial_factor = int(self.spatial_factor)
        if self.spatial_factor < 1:
            raise ValueError("spatial factor must be a positive integer")
        if self.psf != "block_mean":
            raise ValueError("only the block_mean PSF is supported")


class FusionResult(NamedTuple):
    fused: HyperCube
    hx_objectives: list[list[float]]  # per outer pass, per inner iteration
    mx_objectives: list[list[float]]


def simulate_degradation(reference: HyperCube, deg: DegradationPair
                         ) -> tuple[HyperCube, HyperCube]:
    """Produce (hx_low, mx_high) from a reference scene; pure composition of
    the spatial block-mean and the spectral response."""
    if deg.R.shape[1] != reference.bands:
        raise ValueError("spectral response column count does not match reference bands")
    hx_low = spatial_downsample(reference, deg.spatial_factor, psf="block_mean")
    mx_values = np.tensordot(reference.values, deg.R, axes=([2], [1]))
    header = reference.header.copy()
    header.bands = deg.R.shape[0]
    header.wavelengths = None
    wl = reference.header.wavelengths
    if wl is not None:
        # centroid wavelengths, kept only when the band order allows them
        centers = deg.R @ np.asarray(wl)
        if np.all(np.diff(centers) > 0):
            header.wavelengths = [float(v) for v in centers]
    header.fwhm = None
    header.bbl = None
    mx_high = HyperCube(header, mx_values, reference.nodata)
    return hx_low, mx_high


def _nmf_update_h(X, W, H):
    num = W.T @ X
    den = W.T @ W @ H + NMF_EPS
    return H * num / den


def _nmf_update_w(X, W, H):
    num = X @ H.T
    den = W @ (H @ H.T) + NMF_EPS
    return W * num / den


def _block_mean_maps(H: np.ndarray, lines: int, samples: int, factor: int) -> np.ndarray:
    p = H.shape[0]
    maps = H.reshape(p, lines, samples)
    blocks = maps.reshape(p, lines // factor, factor, samples // factor, factor)
    return blocks.mean(axis=(2, 4)).reshape(p, -1)


def _nn_upsample_maps(H: np.ndarray, lines: int, samples: int, factor: int) -> np.ndarray:
    p = H.shape[0]
    maps = H.reshape(p, lines, samples)
    up = np.repeat(np.repeat(maps, factor, axis=1), factor, axis=2)
    return up.reshape(p, -1)


def cnmf_fuse(hx_low: HyperCube, mx_high: HyperCube, deg: DegradationPair, p: int,
              outer_iters: int = 3, inner_iters: int = 100, seed: int = 0
              ) -> FusionResult:
    """Coupled NMF fusion.

    Each outer pass (1) factorizes the Hx cube as W * H_low with multiplicative
    updates, W seeded by VCA on the first pass, H_low re-initialized from the
    block mean of the high-resolution abundances afterwards; then (2) fixes
    the Mx endmembers to R*W and updates the high-resolution abundances
    H_high only. Factors stay exactly non-negative and the Frobenius
    objective of each inner loop is recorded per iteration.
    """
    from .unmix import extract_vca

    p = int(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    if p > hx_low.bands:
        raise ValueError(f"p={p} exceeds hx band count {hx_low.bands}")
    f = deg.spatial_factor
    if hx_low.lines * f != mx_high.lines or hx_low.samples * f != mx_high.samples:
        raise ValueError("hx dims x factor must equal mx dims")
    if deg.R.shape != (mx_high.bands, hx_low.bands):
        raise ValueError("spectral response shape must be (mx_bands, hx_bands)")
    for cube, name in ((hx_low, "hx"), (mx_high, "mx")):
        vals = cube.values if cube.nodata is None else cube.values[cube.valid_mask()]
        if np.any(vals < -1e-6):
            raise ValueError(f"{name} cube has negative values")

    Xh = np.clip(hx_low.flat().T, 0.0, None)          # bands x n_low
    Xm = np.clip(mx_high.flat().T, 0.0, None)         # mx_bands x n_high

    W = np.clip(extract_vca(hx_low, p, seed=seed).E, NMF_EPS, None)
    H_low = np.full((p, Xh.shape[1]), 1.0 / p)
    H_high = None

    hx_objs: list[list[float]] = []
    mx_objs: list[list[float]] = []
    for outer in range(int(outer_iters)):
        if outer > 0:
            H_low = np.maximum(
                _block_mean_maps(H_high, mx_high.lines, mx_high.samples, f), NMF_EPS
            )
        obj_h = []
        for _ in range(int(inner_iters)):
            H_low = _nmf_update_h(Xh, W, H_low)
            W = _nmf_update_w(Xh, W, H_low)
            obj_h.append(float(np.linalg.norm(Xh - W @ H_low) ** 2))
        hx_objs.append(obj_h)

        Wm = deg.R @ W
        if H_high is None:
            H_high = np.maximum(
                _nn_upsample_maps(H_low, hx_low.lines, hx_low.samples, f), NMF_EPS
            )
        obj_m = []
        for _ in range(int(inner_iters)):
            H_high = _nmf_update_h(Xm, Wm, H_high)
            obj_m.append(float(np.linalg.norm(Xm - Wm @ H_high) ** 2))
        mx_objs.append(obj_m)

    fused_vals = (W @ H_high).T.reshape(mx_high.lines, mx_high.samples, hx_low.bands)
    header = hx_low.header.copy()
    header.lines = mx_high.lines
    header.samples = mx_high.samples
    fused = HyperCube(header, fused_vals, hx_low.nodata)
    return FusionResult(fused=fused, hx_objectives=hx_objs, mx_objectives=mx_objs)


def nn_upsample(cube: HyperCube, factor: int) -> HyperCube:
    """Nearest-neighbor spatial upsampling (the naive fusion baseline)."""
    factor = int(factor)
    vals = np.repeat(np.repeat(cube.values, factor, axis=0), factor, axis=1)
    header = cube.header.copy()
    header.lines = cube.lines * factor
    header.samples = cube.samples * factor
    return HyperCube(header, vals, cube.nodata)


def sam_error_map(fused: HyperCube, reference: HyperCube) -> np.ndarray:
    """Per-pixel spectral angle (radians) between fused and reference."""
    if fused.shape != reference.shape:
        raise ValueError("fused and reference shapes differ")
    return spectral_angle_map(fused.values, reference.values)
