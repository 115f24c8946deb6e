"""Data quality analysis: noise estimation, SNR, bad bands, destriping,
whitening and the continuum-interpolated band ratio."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import LabelMask
from .envi_io import HyperCube
from .errors import NoBandNearError

SNR_CAP_DB = 120.0
# eigenvalue floor (relative to the largest) applied before whitening
WHITEN_EIGENVALUE_FLOOR = 1e-10


@dataclass
class NoiseProfile:
    """Per-band noise standard deviation and derived SNR."""

    method: str
    sigma: np.ndarray
    snr_db: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.snr_db = np.asarray(self.snr_db, dtype=float)
        if self.sigma.shape != self.snr_db.shape:
            raise ValueError("sigma and snr_db must have equal length")
        if np.any(self.sigma[np.isfinite(self.sigma)] < 0):
            raise ValueError("sigma must be non-negative")


def _snr_db(mean: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """20*log10(|mean|/sigma), capped to +/-SNR_CAP_DB; sigma == 0 hits the cap."""
    mean = np.abs(np.asarray(mean, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    out = np.full(mean.shape, -SNR_CAP_DB)
    pos = (sigma > 0) & (mean > 0)
    out[pos] = 20.0 * np.log10(mean[pos] / sigma[pos])
    out[(sigma == 0)] = SNR_CAP_DB
    return np.clip(out, -SNR_CAP_DB, SNR_CAP_DB)


def _residual_std(y: np.ndarray, predictors: list[np.ndarray]) -> tuple[float, float, int]:
    """(sum of squared residuals, dof, n) for an intercept + predictors fit."""
    A = np.column_stack([np.ones_like(y)] + predictors)
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = y.size - A.shape[1]
    return float(resid @ resid), float(max(dof, 1)), y.size


def estimate_noise(cube: HyperCube, method: str, roi: LabelMask | None = None,
                   block: int = 8) -> NoiseProfile:
    """Estimate per-band noise standard deviation.

    spectral_decorrelation regresses each band on its spectral neighbors over
    all pixels; spatial_spectral fits, inside block x block tiles, each value
    on its left/upper spatial neighbors and spectral neighbors; homogeneous_roi
    takes the per-band standard deviation inside a user ROI.
    """
    if method not in ("spectral_decorrelation", "spatial_spectral", "homogeneous_roi"):
        raise ValueError(f"unknown noise estimation method {method!r}")

    valid = cube.valid_mask()
    X = cube.flat()[valid.ravel()]
    nbands = cube.bands
    sigma = np.zeros(nbands)

    if method == "homogeneous_roi":
        if roi is None:
            raise ValueError("homogeneous_roi requires an ROI mask")
        if roi.labels.shape != (cube.lines, cube.samples):
            raise ValueError("ROI dims do not match cube")
        sel = (roi.labels != 0) & valid
        n = int(np.count_nonzero(sel))
        if n < 16:
            raise ValueError(f"ROI has {n} pixels; at least 16 required")
        data = cube.values[sel]
        sigma = data.std(axis=0, ddof=1)
        count = n
    elif method == "spectral_decorrelation":
        count = X.shape[0]
        if count < 4:
            raise ValueError("too few valid pixels for regression")
        for b in range(nbands):
            preds = []
            if b > 0:
                preds.append(X[:, b - 1])
            if b < nbands - 1:
                preds.append(X[:, b + 1])
            ssr, dof, _ = _residual_std(X[:, b], preds)
            sigma[b] = np.sqrt(ssr / dof)
    else:
        block = int(block)
        if block < 2:
            raise ValueError("block must be >= 2")
        if cube.samples < 2 or cube.lines < 2:
            raise ValueError("spatial_spectral needs at least a 2x2 image")
        ssr_tot = np.zeros(nbands)
        dof_tot = np.zeros(nbands)
        count = 0
        for r0 in range(0, cube.lines, block):
            for c0 in range(0, cube.samples, block):
                tile = cube.values[r0:r0 + block, c0:c0 + block, :]
                tv = valid[r0:r0 + block, c0:c0 + block]
                if tile.shape[0] < 2 or tile.shape[1] < 2:
                    continue
                sel = tv[1:, 1:] & tv[:-1, 1:] & tv[1:, :-1]
                if not np.any(sel):
                    continue
                for b in range(nbands):
                    y = tile[1:, 1:, b][sel]
                    preds = [tile[1:, :-1, b][sel], tile[:-1, 1:, b][sel]]
                    if b > 0:
                        preds.append(tile[1:, 1:, b - 1][sel])
                    if b < nbands - 1:
                        preds.append(tile[1:, 1:, b + 1][sel])
                    if y.size <= len(preds) + 1:
                        continue
                    ssr, dof, n = _residual_std(y, preds)
                    ssr_tot[b] += ssr
                    dof_tot[b] += dof
                count += int(np.count_nonzero(sel))
        if np.any(dof_tot == 0):
            raise ValueError("not enough pixels per tile for spatial_spectral")
        sigma = np.sqrt(ssr_tot / dof_tot)

    means = X.mean(axis=0) if X.shape[0] else np.zeros(nbands)
    return NoiseProfile(method=method, sigma=sigma, snr_db=_snr_db(means, sigma),
                        sample_count=int(count))


def compute_snr(cube: HyperCube, noise: NoiseProfile) -> np.ndarray:
    """Per-band SNR in dB: 20*log10(mean/sigma) over non-nodata pixels."""
    if noise.sigma.size != cube.bands:
        raise ValueError("noise profile band count does not match cube")
    X = cube.flat()[cube.valid_mask().ravel()]
    return _snr_db(X.mean(axis=0), noise.sigma)


def detect_bad_bands(noise: NoiseProfile, snr_threshold_db: float) -> list[int]:
    """Binary usable-band list: 0 where SNR falls below the threshold or sigma
    is non-finite, else 1."""
    good = (noise.snr_db >= snr_threshold_db) & np.isfinite(noise.sigma)
    return [int(v) for v in good]


def destripe(cube: HyperCube, axis: str = "column") -> HyperCube:
    """Moment matching: rescale each column (or row) to the band's global
    mean/std; zero-variance stripes are shifted only."""
    if axis not in ("column", "row"):
        raise ValueError("axis must be 'column' or 'row'")
    values = cube.values.copy()
    valid = cube.valid_mask()
    for b in range(cube.bands):
        band = values[:, :, b]
        data = band[valid]
        if data.size == 0:
            continue
        g_mean, g_std = data.mean(), data.std()
        work = band if axis == "column" else band.T
        vmask = valid if axis == "column" else valid.T
        for j in range(work.shape[1]):
            col = work[:, j]
            sel = vmask[:, j]
            if not np.any(sel):
                continue
            c_mean, c_std = col[sel].mean(), col[sel].std()
            if c_std == 0:
                col[sel] = col[sel] - c_mean + g_mean
            else:
                col[sel] = (col[sel] - c_mean) * (g_std / c_std) + g_mean
    return cube.with_values(values)


def whiten(cube: HyperCube) -> HyperCube:
    """Decorrelate and unit-scale bands: y = L^(-1/2) U^T (x - mean).

    Eigenvalues below WHITEN_EIGENVALUE_FLOOR * max are floored; the
    corresponding output bands have near-zero variance and a warning is
    emitted because the input was rank deficient.
    """
    X = cube.flat()[cube.valid_mask().ravel()]
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(cube.bands, cube.bands)
    evals, evecs = np.linalg.eigh(cov)
    floor = WHITEN_EIGENVALUE_FLOOR * max(evals.max(), 0.0)
    if np.any(evals < floor):
        warnings.warn("rank-deficient covariance: floored eigenvalues give "
                      "near-zero variance output bands")
        evals = np.maximum(evals, floor)
    W = evecs @ np.diag(1.0 / np.sqrt(evals))
    out = (cube.flat() - mean) @ W
    header = cube.header.copy()
    header.wavelengths = None
    header.fwhm = None
    header.bbl = None
    return HyperCube(header, out.reshape(cube.shape), cube.nodata)


def _nearest_band(wavelengths: np.ndarray, target_nm: float, tolerance_nm: float) -> int:
    idx = int(np.argmin(np.abs(wavelengths - target_nm)))
    if abs(wavelengths[idx] - target_nm) > tolerance_nm:
        raise NoBandNearError(target_nm, tolerance_nm)
    return idx


def cibr(cube: HyperCube, absorption_nm: float = 940.0, left_nm: float = 865.0,
         right_nm: float = 1025.0, tolerance_nm: float = 15.0) -> np.ndarray:
    """Continuum interpolated band ratio.

    R = L(abs) / (w1*L(left) + w2*L(right)) with the interpolation weights
    computed from the actual band centers used; a spectrum linear in
    wavelength across the three bands gives exactly 1.
    """
    if cube.header.wavelengths is None:
        raise ValueError("cibr requires cube wavelengths")
    wl = np.asarray(cube.header.wavelengths)
    ia = _nearest_band(wl, absorption_nm, tolerance_nm)
    il = _nearest_band(wl, left_nm, tolerance_nm)
    ir = _nearest_band(wl, right_nm, tolerance_nm)
    la, l1, l2 = wl[ia], wl[il], wl[ir]
    if l2 == l1:
        raise ValueError("left and right window bands coincide")
    w1 = (l2 - la) / (l2 - l1)
    w2 = (la - l1) / (l2 - l1)
    continuum = w1 * cube.values[:, :, il] + w2 * cube.values[:, :, ir]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(continuum) < 1e-12, np.nan,
                         cube.values[:, :, ia] / continuum)
    return ratio


def write_noise_csv(noise: NoiseProfile, path: str | Path,
                    wavelengths: list[float] | None = None) -> None:
    """Noise profile as CSV rows (band, wavelength, sigma, snr_db)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["band", "wavelength_nm", "sigma", "snr_db"])
        for b in range(noise.sigma.size):
            wl = wavelengths[b] if wavelengths is not None else ""
            writer.writerow([b, wl, repr(float(noise.sigma[b])), repr(float(noise.snr_db[b]))])
