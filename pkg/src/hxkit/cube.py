"""Cube algebra and spectral measures.

Subsetting, scaling, per-band statistics, spectral angle, scatter statistics,
plus the spectral-library and label-mask containers used throughout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envi_io import HeaderInfo, HyperCube, load_cube
from .errors import DegenerateVarianceError, ZeroNormError, ZeroScaleError


@dataclass
class SpectralLibrary:
    """Named spectra on a common wavelength grid (rows = spectra)."""

    names: list[str]
    wavelengths: np.ndarray
    spectra: np.ndarray
    units: str = "reflectance"

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=float)
        self.spectra = np.atleast_2d(np.asarray(self.spectra, dtype=float))
        if self.spectra.shape[0] != len(self.names):
            raise ValueError("spectra row count must match names")
        if self.spectra.shape[1] != self.wavelengths.size:
            raise ValueError("spectra column count must match wavelengths")
        if not np.all(np.diff(self.wavelengths) > 0):
            raise ValueError("wavelengths must be strictly increasing")


def read_library_csv(path: str | Path) -> SpectralLibrary:
    """Load a library CSV: header row of names, first column wavelength (nm)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError("library CSV needs a header row and at least one data row")
    names = [c.strip() for c in rows[0][1:]]
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    return SpectralLibrary(names=names, wavelengths=data[:, 0], spectra=data[:, 1:].T)


def write_library_csv(library: SpectralLibrary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm"] + list(library.names))
        for i, wl in enumerate(library.wavelengths):
            writer.writerow([repr(float(wl))] + [repr(float(v)) for v in library.spectra[:, i]])


@dataclass
class LabelMask:
    """Per-pixel integer class labels; 0 means unlabeled. Doubles as ROI."""

    labels: np.ndarray
    class_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2:
            raise ValueError("labels must be 2-D (lines, samples)")
        present = set(np.unique(self.labels).tolist()) - {0}
        missing = present - set(self.class_names)
        if missing:
            raise ValueError(f"labels without class names: {sorted(missing)}")

    def class_ids(self) -> list[int]:
        return sorted(set(np.unique(self.labels).tolist()) - {0})

    def count(self, class_id: int) -> int:
        return int(np.count_nonzero(self.labels == class_id))


def load_label_mask(hdr_path: str | Path, names_path: str | Path) -> LabelMask:
    """Read a rasterized mask (single-band ENVI byte cube) plus JSON class table."""
    cube = load_cube(hdr_path)
    if cube.bands != 1:
        raise ValueError("label raster must have exactly one band")
    names_raw = json.loads(Path(names_path).read_text())
    class_names = {int(k): str(v) for k, v in names_raw.items()}
    return LabelMask(labels=cube.values[:, :, 0].astype(np.int64), class_names=class_names)


def save_label_mask(mask: LabelMask, hdr_path: str | Path, names_path: str | Path) -> None:
    from .envi_io import save_cube

    header = HeaderInfo(samples=mask.labels.shape[1], lines=mask.labels.shape[0], bands=1)
    cube = HyperCube(header, mask.labels[:, :, None].astype(float))
    save_cube(cube, hdr_path, data_type="u8" if mask.labels.max(initial=0) < 256 else "i32")
    Path(names_path).write_text(
        json.dumps({str(k): v for k, v in sorted(mask.class_names.items())}, indent=2) + "\n"
    )


# ---------------------------------------------------------------------------
# Subsetting and scaling
# ---------------------------------------------------------------------------

def _check_range(rng: tuple[int, int], size: int, what: str) -> tuple[int, int]:
    start, stop = int(rng[0]), int(rng[1])
    if start < 0 or stop > size or start >= stop:
        raise ValueError(f"invalid {what} range [{start}, {stop}) for size {size}")
    return start, stop


def spatial_subset(cube: HyperCube, row_range: tuple[int, int],
                   col_range: tuple[int, int]) -> HyperCube:
    """Crop to half-open row/column ranges; spectral metadata untouched."""
    r0, r1 = _check_range(row_range, cube.lines, "row")
    c0, c1 = _check_range(col_range, cube.samples, "column")
    header = cube.header.copy()
    header.lines = r1 - r0
    header.samples = c1 - c0
    return HyperCube(header, cube.values[r0:r1, c0:c1, :].copy(), cube.nodata)


def spectral_subset(cube: HyperCube, band_indices: list[int]) -> HyperCube:
    """Keep the listed bands; wavelengths/fwhm/bbl subset consistently.

    Indices must be strictly increasing (duplicates and reordering would
    break the wavelength monotonicity contract).
    """
    idx = [int(i) for i in band_indices]
    if not idx:
        raise ValueError("band_indices must be nonempty")
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate band index")
    if any(i < 0 or i >= cube.bands for i in idx):
        raise ValueError("band index out of range")
    if idx != sorted(idx):
        raise ValueError("band indices must be strictly increasing")
    header = cube.header.copy()
    header.bands = len(idx)
    for name in ("wavelengths", "fwhm", "bbl"):
        vec = getattr(header, name)
        if vec is not None:
            setattr(header, name, [vec[i] for i in idx])
    return HyperCube(header, cube.values[:, :, idx].copy(), cube.nodata)


def scale_cube(cube: HyperCube, factor: float) -> HyperCube:
    """Multiply all values by a finite nonzero factor; nodata left unscaled."""
    factor = float(factor)
    if not np.isfinite(factor) or factor == 0.0:
        raise ZeroScaleError(f"scale factor must be finite and nonzero, got {factor}")
    values = cube.values * factor
    if cube.nodata is not None:
        values[cube.values == cube.nodata] = cube.nodata
    return HyperCube(cube.header.copy(), values, cube.nodata)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def band_stats(cube: HyperCube, histogram_bins: int = 256) -> list[dict]:
    """Per-band min/max/mean/std and a fixed-bin histogram.

    Nodata values are excluded; each entry reports how many pixels counted.
    """
    out = []
    for b in range(cube.bands):
        band = cube.values[:, :, b].ravel()
        if cube.nodata is not None:
            band = band[band != cube.nodata]
        if band.size == 0:
            out.append({"band": b, "count": 0, "min": np.nan, "max": np.nan,
                        "mean": np.nan, "std": np.nan,
                        "histogram": np.zeros(histogram_bins, dtype=np.int64),
                        "bin_edges": np.zeros(histogram_bins + 1)})
            continue
        lo, hi = float(band.min()), float(band.max())
        counts, edges = np.histogram(band, bins=histogram_bins, range=(lo, hi))
        out.append({
            "band": b,
            "count": int(band.size),
            "min": lo,
            "max": hi,
            "mean": float(band.mean()),
            "std": float(band.std()),
            "histogram": counts,
            "bin_edges": edges,
        })
    return out


def spectral_angle(x: np.ndarray, y: np.ndarray) -> float:
    """Angle in radians between two spectra; scale-invariant, in [0, pi]."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ZeroNormError("spectral angle undefined for zero-norm spectrum")
    c = np.dot(x, y) / (nx * ny)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def spectral_angle_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel spectral angle between two (lines, samples, bands) stacks.

    Zero-norm pixels yield NaN instead of raising.
    """
    dot = np.sum(a * b, axis=-1)
    na = np.sqrt(np.sum(a * a, axis=-1))
    nb = np.sqrt(np.sum(b * b, axis=-1))
    denom = na * nb
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), np.nan)
    return np.arccos(np.clip(c, -1.0, 1.0))


def scatter_stats(cube: HyperCube, band_i: int, band_j: int) -> dict:
    """Paired values of two bands plus their Pearson correlation.

    Uses a two-pass mean/variance computation to stay stable on large
    radiance magnitudes. Raises on zero-variance bands.
    """
    for b in (band_i, band_j):
        if b < 0 or b >= cube.bands:
            raise ValueError(f"band index {b} out of range")
    vi = cube.values[:, :, band_i].ravel()
    vj = cube.values[:, :, band_j].ravel()
    if cube.nodata is not None:
        keep = (vi != cube.nodata) & (vj != cube.nodata)
        vi, vj = vi[keep], vj[keep]
    if vi.size < 2:
        raise ValueError("need at least two pixel pairs")
    mi, mj = vi.mean(), vj.mean()
    di, dj = vi - mi, vj - mj
    si = np.sqrt(np.sum(di * di))
    sj = np.sqrt(np.sum(dj * dj))
    if si == 0.0 or sj == 0.0:
        raise DegenerateVarianceError("constant band has no defined correlation")
    r = float(np.sum(di * dj) / (si * sj))
    return {"band_i": band_i, "band_j": band_j,
            "values_i": vi, "values_j": vj, "pearson_r": r, "count": int(vi.size)}


def write_scatter_csv(stats: dict, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"band_{stats['band_i']}", f"band_{stats['band_j']}"])
        for a, b in zip(stats["values_i"], stats["values_j"]):
            writer.writerow([repr(float(a)), repr(float(b))])
