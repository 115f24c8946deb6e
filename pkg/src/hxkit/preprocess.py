"""Spectral smoothing, continuum removal, scaling and linear dimensionality reduction."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from .envi_io import HyperCube
from .errors import NonPositiveInputError

# floor added to the noise covariance diagonal before the MNF eigenproblem
MNF_NOISE_RIDGE = 1e-10


# ---------------------------------------------------------------------------
# Savitzky-Golay smoothing
# ---------------------------------------------------------------------------

def savgol_weights(window: int, order: int, offset: int = 0) -> np.ndarray:
    """Least-squares weights evaluating the local fit at `offset` from center.

    Solves the (window x (order+1)) Vandermonde system on positions
    -h..h and returns the row of the hat matrix for the evaluation point.
    """
    h = window // 2
    pos = np.arange(-h, h + 1, dtype=float)
    A = np.vander(pos, order + 1, increasing=True)
    # pinv row: weights w with w @ values = fitted polynomial at `offset`
    powers = np.asarray([float(offset) ** k for k in range(order + 1)])
    return powers @ np.linalg.pinv(A)


def savitzky_golay(spectrum: np.ndarray, window: int, order: int) -> np.ndarray:
    """Local least-squares polynomial smoothing of a 1-D spectrum.

    The interior uses the standard central weights. Near the boundaries the
    polynomial fitted to the first/last full window is evaluated at each edge
    position, which keeps degree-<=order polynomials exactly invariant over
    the whole output.
    """
    spectrum = np.asarray(spectrum, dtype=float).ravel()
    window = int(window)
    order = int(order)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    if order < 0 or order >= window:
        raise ValueError("order must satisfy 0 <= order < window")
    if spectrum.size < window:
        raise ValueError(f"spectrum length {spectrum.size} < window {window}")

    h = window // 2
    center = savgol_weights(window, order, 0)
    out = np.empty_like(spectrum)
    out[h:-h or None] = np.correlate(spectrum, center, mode="valid")
    # edges: evaluate the first/last window fit at the uncovered offsets
    for i in range(h):
        out[i] = savgol_weights(window, order, i - h) @ spectrum[:window]
        out[-(i + 1)] = savgol_weights(window, order, h - i) @ spectrum[-window:]
    return out


def savitzky_golay_cube(cube: HyperCube, window: int, order: int) -> HyperCube:
    """Apply SG smoothing along the spectral axis of every pixel."""
    flat = cube.flat()
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = savitzky_golay(flat[i], window, order)
    return cube.with_values(out.reshape(cube.shape))


# ---------------------------------------------------------------------------
# Continuum removal
# ---------------------------------------------------------------------------

def _upper_hull(x: np.ndarray, y: np.ndarray) -> list[int]:
    """Indices of the upper convex hull of (x, y), endpoints included."""
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            # pop i2 if it lies on or below the chord i1 -> i
            cross = (x[i2] - x[i1]) * (y[i] - y[i1]) - (x[i] - x[i1]) * (y[i2] - y[i1])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def continuum_removal(spectrum: np.ndarray, wavelengths: np.ndarray) -> np.ndarray:
    """Divide a spectrum by the piecewise-linear upper convex hull.

    Hull vertices map to exactly 1; everything else falls in (0, 1].
    Idempotent because the hull of the result is the constant-1 chord.
    """
    spectrum = np.asarray(spectrum, dtype=float).ravel()
    wavelengths = np.asarray(wavelengths, dtype=float).ravel()
    if spectrum.size != wavelengths.size:
        raise ValueError("spectrum and wavelengths must have equal length")
    if np.any(spectrum <= 0):
        raise NonPositiveInputError("continuum removal requires strictly positive values")
    if not np.all(np.diff(wavelengths) > 0):
        raise ValueError("wavelengths must be strictly increasing")
    hull = _upper_hull(wavelengths, spectrum)
    continuum = np.interp(wavelengths, wavelengths[hull], spectrum[hull])
    return spectrum / continuum


def continuum_removal_cube(cube: HyperCube) -> HyperCube:
    if cube.header.wavelengths is None:
        raise ValueError("cube has no wavelengths; continuum removal needs them")
    wl = np.asarray(cube.header.wavelengths)
    flat = cube.flat()
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = continuum_removal(flat[i], wl)
    return cube.with_values(out.reshape(cube.shape))


# ---------------------------------------------------------------------------
# Per-band scaling transforms
# ---------------------------------------------------------------------------

def fit_transform(cube: HyperCube, kind: str) -> HyperCube:
    """Per-band standard / minmax / robust scaling.

    A band whose denominator (std, range or IQR) is zero is emitted as all
    zeros with a warning rather than dividing by zero.
    """
    if kind not in ("standard", "minmax", "robust"):
        raise ValueError(f"unknown transform kind {kind!r}")
    values = cube.values.copy()
    valid = cube.valid_mask() if cube.nodata is not None else None
    degenerate = []
    for b in range(cube.bands):
        band = values[:, :, b]
        data = band[valid] if valid is not None else band.ravel()
        if kind == "standard":
            center, denom = data.mean(), data.std()
        elif kind == "minmax":
            center, denom = data.min(), data.max() - data.min()
        else:
            q25, q50, q75 = np.percentile(data, [25.0, 50.0, 75.0])
            center, denom = q50, q75 - q25
        if denom == 0:
            degenerate.append(b)
            new = np.zeros_like(band)
        else:
            new = (band - center) / denom
        if valid is not None:
            new = np.where(valid, new, cube.nodata)
        values[:, :, b] = new
    if degenerate:
        warnings.warn(f"degenerate denominator in bands {degenerate}; emitted as zeros")
    return cube.with_values(values)


# ---------------------------------------------------------------------------
# PCA / MNF
# ---------------------------------------------------------------------------

@dataclass
class LinearTransformModel:
    """Fitted linear reduction: y = basis^T (x - mean)."""

    kind: str
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    noise_cov: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.basis = np.asarray(self.basis, dtype=float)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        if self.kind not in ("pca", "mnf"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.basis.shape[0] != self.mean.size:
            raise ValueError("basis rows must match mean length")
        if self.basis.shape[1] != self.eigenvalues.size:
            raise ValueError("one eigenvalue per basis column required")
        if np.any(np.diff(self.eigenvalues) > 1e-9 * max(1.0, abs(self.eigenvalues[0]))):
            raise ValueError("eigenvalues must be non-increasing")

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Deterministic orientation: largest-magnitude loading made positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _valid_pixels(cube: HyperCube) -> np.ndarray:
    flat = cube.flat()
    if cube.nodata is None:
        return flat
    return flat[cube.valid_mask().ravel()]


def fit_pca(cube: HyperCube, k: int) -> LinearTransformModel:
    """Eigendecomposition of the band covariance, components by descending variance."""
    k = int(k)
    if k < 1 or k > cube.bands:
        raise ValueError(f"k must be in [1, {cube.bands}]")
    X = _valid_pixels(cube)
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(cube.bands, cube.bands)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    basis = _fix_signs(evecs[:, :k])
    return LinearTransformModel(kind="pca", mean=mean, basis=basis, eigenvalues=evals[:k])


def estimate_noise_covariance(cube: HyperCube) -> np.ndarray:
    """Shift-difference noise covariance: d = (x[r,c] - x[r,c+1]) / sqrt(2)."""
    if cube.samples < 2:
        raise ValueError("shift-difference noise estimate needs at least 2 columns")
    d = (cube.values[:, :-1, :] - cube.values[:, 1:, :]) / np.sqrt(2.0)
    d = d.reshape(-1, cube.bands)
    if cube.nodata is not None:
        left = cube.values[:, :-1, :].reshape(-1, cube.bands)
        right = cube.values[:, 1:, :].reshape(-1, cube.bands)
        keep = ~(np.any(left == cube.nodata, axis=1) | np.any(right == cube.nodata, axis=1))
        d = d[keep]
    return np.cov(d, rowvar=False, ddof=1).reshape(cube.bands, cube.bands)


def fit_mnf(cube: HyperCube, k: int, noise_estimator: str = "shift_difference",
            noise_cov: np.ndarray | None = None) -> LinearTransformModel:
    """Minimum noise fraction transform.

    Solves the symmetric generalized eigenproblem of the data covariance
    against the (ridge-regularized) noise covariance; eigenvalues are SNR+1
    and components are ordered by decreasing eigenvalue.
    """
    k = int(k)
    if k < 1 or k > cube.bands:
        raise ValueError(f"k must be in [1, {cube.bands}]")
    if noise_estimator == "shift_difference":
        sigma_n = estimate_noise_covariance(cube)
    elif noise_estimator == "provided":
        if noise_cov is None:
            raise ValueError("noise_estimator='provided' requires noise_cov")
        sigma_n = np.asarray(noise_cov, dtype=float)
    else:
        raise ValueError(f"unknown noise estimator {noise_estimator!r}")
    if sigma_n.shape != (cube.bands, cube.bands):
        raise ValueError("noise covariance must be (bands, bands)")

    X = _valid_pixels(cube)
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(cube.bands, cube.bands)
    ridge = MNF_NOISE_RIDGE * np.trace(sigma_n) / cube.bands
    sigma_n = sigma_n + ridge * np.eye(cube.bands)

    evals, evecs = sla.eigh(cov, sigma_n)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    basis = _fix_signs(evecs[:, :k])
    return LinearTransformModel(kind="mnf", mean=mean, basis=basis,
                                eigenvalues=evals[:k], noise_cov=sigma_n)


def apply_transform(model: LinearTransformModel, cube: HyperCube) -> HyperCube:
    """Project a cube onto the model components; wavelengths no longer apply."""
    if model.mean.size != cube.bands:
        raise ValueError("model was fitted on a different band count")
    flat = cube.flat() - model.mean
    out = flat @ model.basis
    header = cube.header.copy()
    header.bands = model.n_components
    header.wavelengths = None
    header.fwhm = None
    header.bbl = None
    return HyperCube(header, out.reshape(cube.lines, cube.samples, -1), cube.nodata)


def inverse_transform(model: LinearTransformModel, cube_k: HyperCube) -> HyperCube:
    """Reconstruct band space from component space (exact at full rank)."""
    if cube_k.bands != model.n_components:
        raise ValueError("component count mismatch")
    # PCA basis is orthonormal so pinv(basis^T) == basis; MNF needs the pinv
    back = np.linalg.pinv(model.basis.T)
    flat = cube_k.flat() @ back.T + model.mean
    header = cube_k.header.copy()
    header.bands = model.mean.size
    return HyperCube(header, flat.reshape(cube_k.lines, cube_k.samples, -1), cube_k.nodata)


def save_model(model: LinearTransformModel, path: str | Path) -> None:
    doc = {
        "kind": model.kind,
        "mean": model.mean.tolist(),
        "basis": model.basis.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
    }
    if model.noise_cov is not None:
        doc["noise_cov"] = np.asarray(model.noise_cov).tolist()
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path: str | Path) -> LinearTransformModel:
    doc = json.loads(Path(path).read_text())
    return LinearTransformModel(
        kind=doc["kind"],
        mean=np.asarray(doc["mean"]),
        basis=np.asarray(doc["basis"]),
        eigenvalues=np.asarray(doc["eigenvalues"]),
        noise_cov=np.asarray(doc["noise_cov"]) if "noise_cov" in doc else None,
    )
