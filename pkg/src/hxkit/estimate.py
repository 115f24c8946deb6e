"""Regression of target properties on spectra, plus spectral indices.

PLSR (NIPALS) and ridge regression with k-fold cross-validation, per-pixel
prediction maps, and a small extensible table of two-wavelength indices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envi_io import HyperCube
from .errors import NoBandNearError


@dataclass
class RegressionModel:
    """Affine model on raw spectra: prediction = x . coefficients + intercept."""

    kind: str
    coefficients: np.ndarray
    intercept: float
    hyperparameter: float
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients + self.intercept


def _check_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X rows must match y length")
    return X, y


def plsr_fit(X: np.ndarray, y: np.ndarray, n_components: int,
             standardize: bool = True) -> RegressionModel:
    """Partial least squares (NIPALS, single response).

    Iteratively extracts weight/score/loading triples from the centered
    (optionally standardized) predictors, deflating after each component;
    the final coefficients act on raw spectra.
    """
    X, y = _check_xy(X, y)
    n, bands = X.shape
    k = int(n_components)
    if k < 1 or k > min(n - 1, bands):
        raise ValueError(f"n_components must be in [1, {min(n - 1, bands)}]")
    if np.std(y) == 0:
        raise ValueError("y has zero variance")

    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0, ddof=1) if standardize else np.ones(bands)
    x_std = np.where(x_std > 0, x_std, 1.0)
    y_mean = float(y.mean())

    E = (X - x_mean) / x_std
    f = y - y_mean
    Wmat = np.zeros((bands, k))
    Pmat = np.zeros((bands, k))
    qvec = np.zeros(k)
    used = 0
    for h in range(k):
        w = E.T @ f
        nw = np.linalg.norm(w)
        if nw < 1e-14:
            break
        w = w / nw
        t = E @ w
        tt = float(t @ t)
        if tt < 1e-14:
            break
        pvec = E.T @ t / tt
        q = float(f @ t) / tt
        E = E - np.outer(t, pvec)
        f = f - q * t
        Wmat[:, h] = w
        Pmat[:, h] = pvec
        qvec[h] = q
        used += 1
    if used == 0:
        raise ValueError("no usable components (X^T y vanished)")
    Wu, Pu, qu = Wmat[:, :used], Pmat[:, :used], qvec[:used]
    beta_std = Wu @ np.linalg.solve(Pu.T @ Wu, qu)
    coef = beta_std / x_std
    intercept = y_mean - float(x_mean @ coef)
    return RegressionModel(kind="plsr", coefficients=coef, intercept=intercept,
                           hyperparameter=float(k), x_mean=x_mean, x_std=x_std,
                           y_mean=y_mean)


def ridge_fit(X: np.ndarray, y: np.ndarray, alpha: float,
              fit_intercept: bool = True) -> RegressionModel:
    """Ridge regression beta = (X^T X + alpha I)^-1 X^T y.

    With fit_intercept the system is solved on centered data and the
    intercept restored; without it the closed form applies to X and y as
    given (intercept 0).
    """
    X, y = _check_xy(X, y)
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    bands = X.shape[1]
    if fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        yc = y - y_mean
    else:
        x_mean = np.zeros(bands)
        y_mean = 0.0
        Xc, yc = X, y
    beta = np.linalg.solve(Xc.T @ Xc + alpha * np.eye(bands), Xc.T @ yc)
    intercept = y_mean - float(x_mean @ beta)
    return RegressionModel(kind="ridge", coefficients=beta, intercept=intercept,
                           hyperparameter=alpha, x_mean=x_mean,
                           x_std=np.ones(bands), y_mean=y_mean)


def _fit(kind: str, X, y, hyper):
    if kind == "plsr":
        return plsr_fit(X, y, int(hyper))
    if kind == "ridge":
        return ridge_fit(X, y, float(hyper))
    raise ValueError(f"unknown regression kind {kind!r}")


def cross_validate(X: np.ndarray, y: np.ndarray, kind: str, hyper_grid: list,
                   k_folds: int = 5, seed: int = 0) -> dict:
    """Seeded k-fold CV over a hyperparameter grid.

    Returns one row per grid value with mean R^2 and RMSE across folds, and
    the best model refitted on all data (ties go to the smaller value).
    """
    X, y = _check_xy(X, y)
    n = X.shape[0]
    k_folds = int(k_folds)
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if k_folds > n:
        raise ValueError(f"k_folds={k_folds} exceeds sample count {n}")
    if not hyper_grid:
        raise ValueError("hyper_grid must be nonempty")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k_folds)

    rows = []
    for hyper in hyper_grid:
        r2s, rmses = [], []
        for i in range(k_folds):
            test_idx = folds[i]
            train_idx = np.concatenate([folds[j] for j in range(k_folds) if j != i])
            model = _fit(kind, X[train_idx], y[train_idx], hyper)
            pred = model.predict(X[test_idx])
            err = y[test_idx] - pred
            rmses.append(float(np.sqrt(np.mean(err**2))))
            ss_tot = float(np.sum((y[test_idx] - y[test_idx].mean()) ** 2))
            ss_res = float(err @ err)
            r2s.append(1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0))
        rows.append({"hyper": float(hyper), "mean_r2": float(np.mean(r2s)),
                     "mean_rmse": float(np.mean(rmses))})
    best_row = max(rows, key=lambda r: (r["mean_r2"], -r["hyper"]))
    best_model = _fit(kind, X, y, best_row["hyper"])
    return {"kind": kind, "rows": rows, "best_hyper": best_row["hyper"],
            "best_model": best_model}


def predict_map(model: RegressionModel, cube: HyperCube) -> np.ndarray:
    """Per-pixel prediction image; nodata pixels become NaN."""
    if model.coefficients.size != cube.bands:
        raise ValueError("model band count does not match cube")
    out = cube.flat() @ model.coefficients + model.intercept
    out = out.reshape(cube.lines, cube.samples)
    if cube.nodata is not None:
        out = np.where(cube.valid_mask(), out, np.nan)
    return out


def save_regression_model(model: RegressionModel, path: str | Path) -> None:
    doc = {
        "kind": model.kind,
        "coefficients": model.coefficients.tolist(),
        "intercept": model.intercept,
        "hyperparameter": model.hyperparameter,
        "x_mean": model.x_mean.tolist(),
        "x_std": model.x_std.tolist(),
        "y_mean": model.y_mean,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_regression_model(path: str | Path) -> RegressionModel:
    doc = json.loads(Path(path).read_text())
    return RegressionModel(
        kind=doc["kind"],
        coefficients=np.asarray(doc["coefficients"]),
        intercept=float(doc["intercept"]),
        hyperparameter=float(doc["hyperparameter"]),
        x_mean=np.asarray(doc["x_mean"]),
        x_std=np.asarray(doc["x_std"]),
        y_mean=float(doc["y_mean"]),
    )


# ---------------------------------------------------------------------------
# Training data ingestion
# ---------------------------------------------------------------------------

def load_training_pixels(path: str | Path, cube: HyperCube) -> tuple[np.ndarray, np.ndarray]:
    """CSV of (row, col, target) referencing cube pixels."""
    rows, targets = [], []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                r, c = int(rec[0]), int(rec[1])
            except ValueError:
                continue  # header
            if not (0 <= r < cube.lines and 0 <= c < cube.samples):
                raise ValueError(f"training pixel ({r}, {c}) outside cube")
            rows.append(cube.values[r, c, :])
            targets.append(float(rec[2]))
    if not rows:
        raise ValueError(f"no training pixels in {path}")
    return np.vstack(rows), np.asarray(targets)


def load_training_table(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Standalone CSV: spectrum columns followed by a final target column."""
    data = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                data.append([float(v) for v in rec])
            except ValueError:
                continue  # header
    if not data:
        raise ValueError(f"no training rows in {path}")
    arr = np.asarray(data)
    if arr.shape[1] < 2:
        raise ValueError("need at least one feature column and a target column")
    return arr[:, :-1], arr[:, -1]


# ---------------------------------------------------------------------------
# Spectral indices
# ---------------------------------------------------------------------------

@dataclass
class IndexDefinition:
    """Two-wavelength index: normalized difference (a-b)/(a+b) or ratio a/b."""

    name: str
    kind: str
    lambda_a: float
    lambda_b: float
    tolerance_nm: float = 10.0

    def __post_init__(self):
        if self.kind not in ("normalized_difference", "ratio"):
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.lambda_a == self.lambda_b:
            raise ValueError("index wavelengths must be distinct")
        if self.tolerance_nm <= 0:
            raise ValueError("tolerance must be positive")


BUILTIN_INDICES = {
    "ndvi": IndexDefinition("ndvi", "normalized_difference", 800.0, 670.0),
    "sr": IndexDefinition("sr", "ratio", 800.0, 670.0),
    "ndwi": IndexDefinition("ndwi", "normalized_difference", 860.0, 1240.0),
    "rendvi": IndexDefinition("rendvi", "normalized_difference", 750.0, 705.0),
}


def _nearest_band(wavelengths: np.ndarray, target: float, tol: float) -> int:
    i = int(np.argmin(np.abs(wavelengths - target)))
    if abs(wavelengths[i] - target) > tol:
        raise NoBandNearError(target, tol)
    return i


def compute_index(cube: HyperCube, definition: IndexDefinition) -> np.ndarray:
    """Evaluate an index using the nearest band to each named wavelength.

    Pixels whose denominator magnitude falls below 1e-12 come out as NaN.
    """
    if cube.header.wavelengths is None:
        raise ValueError("cube has no wavelengths; indices need them")
    wl = np.asarray(cube.header.wavelengths)
    ia = _nearest_band(wl, definition.lambda_a, definition.tolerance_nm)
    ib = _nearest_band(wl, definition.lambda_b, definition.tolerance_nm)
    a = cube.values[:, :, ia]
    b = cube.values[:, :, ib]
    if definition.kind == "normalized_difference":
        denom = a + b
        num = a - b
    else:
        denom = b
        num = a
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(denom) < 1e-12, np.nan, num / denom)
    return out


def read_index_csv(path: str | Path) -> dict[str, IndexDefinition]:
    """User index table: name, kind, lambda_a, lambda_b[, tolerance_nm]."""
    out: dict[str, IndexDefinition] = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip() or rec[0].strip().lower() == "name":
                continue
            tol = float(rec[4]) if len(rec) > 4 and rec[4].strip() else 10.0
            d = IndexDefinition(rec[0].strip(), rec[1].strip(),
                                float(rec[2]), float(rec[3]), tol)
            out[d.name] = d
    if not out:
        raise ValueError(f"no index definitions in {path}")
    return out
