"""Spectral unmixing: material counting, endmember extraction and abundance
estimation.

Extractors (PPI, ATGP, N-FINDR, VCA) always return actual image pixels and
record their source coordinates. Abundance solvers cover unconstrained,
non-negative, fully constrained, generalized-bilinear and sparse (ADMM)
variants. All randomized algorithms are seeded and bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt
from scipy import stats as sstats

from .cube import SpectralLibrary
from .envi_io import HyperCube
from .parallel import map_blocks
from .preprocess import LinearTransformModel, apply_transform, fit_pca

NNLS_TOL = 1e-10
# sum-to-one augmentation weight for FCLS-style solves
FCLS_DELTA = 1e-3


@dataclass
class EndmemberSet:
    """Endmember spectra as columns of E (bands x p), with provenance."""

    E: np.ndarray
    algorithm: str
    source_pixels: list[tuple[int, int]] | None = None
    wavelengths: np.ndarray | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.E = np.atleast_2d(np.asarray(self.E, dtype=float))
        if self.E.shape[1] < 1:
            raise ValueError("at least one endmember required")
        if np.any(np.all(self.E == 0, axis=0)):
            raise ValueError("endmember columns must be nonzero")

    @property
    def p(self) -> int:
        return self.E.shape[1]

    def to_library(self) -> SpectralLibrary:
        wl = self.wavelengths
        if wl is None:
            wl = np.arange(self.E.shape[0], dtype=float)
        names = [f"{self.algorithm}_{i + 1}" for i in range(self.p)]
        return SpectralLibrary(names=names, wavelengths=np.asarray(wl), spectra=self.E.T)


@dataclass
class AbundanceMap:
    """Per-pixel endmember fractions (lines x samples x p)."""

    values: np.ndarray
    constraint: str
    endmembers: EndmemberSet | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("abundance values must be 3-D")
        if self.constraint not in ("none", "nonneg", "nonneg_sum1"):
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if self.constraint in ("nonneg", "nonneg_sum1") and np.any(self.values < -1e-9):
            raise ValueError("negative abundances under a non-negativity constraint")
        if self.constraint == "nonneg_sum1":
            sums = self.values.sum(axis=2)
            if np.any(np.abs(sums - 1.0) > 1e-6):
                raise ValueError("abundances do not sum to 1 within 1e-6")


@dataclass
class GbmCoefficients:
    """Upper-triangular bilinear interaction coefficients per pixel."""

    gamma: np.ndarray
    pairs: list[tuple[int, int]]
    residual_rmse: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if np.any(self.gamma < -1e-9) or np.any(self.gamma > 1 + 1e-9):
            raise ValueError("gamma coefficients must lie in [0, 1]")


def _pixels(cube: HyperCube) -> np.ndarray:
    return cube.flat()


# ---------------------------------------------------------------------------
# Material count (eigenvalue Neyman-Pearson test)
# ---------------------------------------------------------------------------

def material_count_hfc(cube: HyperCube, pfa: float) -> int:
    """Number of spectrally distinct sources via paired eigenvalue testing.

    Compares the sorted eigenvalues of the (non-centered) correlation matrix
    and the covariance matrix band by band; a source is counted when their
    difference exceeds the Neyman-Pearson threshold at false-alarm rate pfa
    with variance 2(l_R^2 + l_K^2)/N.
    """
    if not (0.0 < pfa < 1.0):
        raise ValueError("pfa must lie strictly between 0 and 1")
    X = _pixels(cube)
    if cube.nodata is not None:
        X = X[cube.valid_mask().ravel()]
    n = X.shape[0]
    corr = (X.T @ X) / n
    cov = np.cov(X, rowvar=False, ddof=1).reshape(cube.bands, cube.bands)
    er = np.sort(np.linalg.eigvalsh(corr))[::-1]
    ek = np.sort(np.linalg.eigvalsh(cov))[::-1]
    diff = er - ek
    std = np.sqrt(2.0 * (er**2 + ek**2) / n)
    tau = sstats.norm.isf(pfa) * std
    return int(np.count_nonzero(diff > tau))


# ---------------------------------------------------------------------------
# Endmember extraction
# ---------------------------------------------------------------------------

def _index_to_rc(idx: int, samples: int) -> tuple[int, int]:
    return int(idx) // samples, int(idx) % samples


def _make_set(cube: HyperCube, indices: list[int], algorithm: str,
              details: dict | None = None) -> EndmemberSet:
    X = _pixels(cube)
    E = X[indices].T.copy()
    wl = np.asarray(cube.header.wavelengths) if cube.header.wavelengths else None
    src = [_index_to_rc(i, cube.samples) for i in indices]
    return EndmemberSet(E=E, algorithm=algorithm, source_pixels=src,
                        wavelengths=wl, details=details or {})


def extract_atgp(cube: HyperCube, p: int) -> EndmemberSet:
    """Automatic target generation: repeated orthogonal-complement argmax.

    Starts from the maximum-norm pixel and at each step picks the pixel with
    the largest residual after projecting out the span of the current set.
    Deterministic; ties break to the lowest linear pixel index.
    """
    p = int(p)
    X = _pixels(cube)
    if p < 1 or p > min(X.shape):
        raise ValueError(f"p must be in [1, {min(X.shape)}]")
    norms = np.einsum("ij,ij->i", X, X)
    indices = [int(np.argmax(norms))]
    for _ in range(1, p):
        U = X[indices].T  # bands x k
        Q, _ = np.linalg.qr(U)
        resid = X - (X @ Q) @ Q.T
        rnorm = np.einsum("ij,ij->i", resid, resid)
        rnorm[indices] = -1.0  # projection already annihilates them; be explicit
        indices.append(int(np.argmax(rnorm)))
    return _make_set(cube, indices, "atgp")


def simplex_volume(points: np.ndarray) -> float:
    """Volume of the simplex spanned by p points in p-1 dimensions."""
    pts = np.asarray(points, dtype=float)
    pcount = pts.shape[0]
    M = np.vstack([np.ones(pcount), pts.T])
    from math import factorial

    return abs(np.linalg.det(M)) / factorial(pcount - 1)


def extract_nfindr(cube: HyperCube, p: int, model: LinearTransformModel | None = None,
                   seed: int = 0, restarts: int = 3) -> EndmemberSet:
    """N-FINDR: maximize simplex volume in (p-1)-dim PCA space by single swaps.

    Seeded random starts (3 by default, best volume kept); each sweep only
    accepts volume-increasing swaps, so the search terminates. Candidate
    volumes are evaluated with a rank-one determinant update, vectorized over
    all pixels.
    """
    p = int(p)
    if p < 2:
        raise ValueError("n-findr needs p >= 2")
    if model is None:
        model = fit_pca(cube, p - 1)
    if model.n_components != p - 1:
        raise ValueError(f"reduction model must have {p - 1} components")
    Z = apply_transform(model, cube).flat()  # n x (p-1)
    n = Z.shape[0]
    if n < p:
        raise ValueError("fewer pixels than endmembers")
    V = np.vstack([np.ones(n), Z.T])  # p x n homogeneous coordinates

    from math import factorial

    fact = factorial(p - 1)
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best_idx: list[int] = []
    best_vol = -1.0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        idx = list(rng.choice(n, size=p, replace=False))
        A = V[:, idx]
        det = np.linalg.det(A)
        tries = 0
        while abs(det) < 1e-12 and tries < 50:
            idx = list(rng.choice(n, size=p, replace=False))
            A = V[:, idx]
            det = np.linalg.det(A)
            tries += 1
        improved = True
        while improved:
            improved = False
            for j in range(p):
                A = V[:, idx]
                det = np.linalg.det(A)
                if abs(det) < 1e-300:
                    break
                # replacing column j by v scales det by (A^-1 v)_j
                ratios = np.linalg.solve(A, V)[j]
                cand = np.abs(det * ratios)
                k = int(np.argmax(cand))
                if cand[k] > abs(det) * (1.0 + 1e-12) and k != idx[j]:
                    idx[j] = k
                    improved = True
        vol = abs(np.linalg.det(V[:, idx])) / fact
        if vol > best_vol:
            best_vol = vol
            best_idx = list(idx)
    order = np.argsort(best_idx)  # stable presentation order
    final = [int(best_idx[i]) for i in order]
    return _make_set(cube, final, "nfindr", details={"volume": float(best_vol)})


def extract_ppi(cube: HyperCube, p: int, n_skewers: int = 1000, seed: int = 0) -> EndmemberSet:
    """Pixel purity index: count extremity hits along random projections.

    Every skewer credits the pixels attaining the minimum and maximum
    projection; the p pixels with the highest counts win, ties resolved by
    the lower linear index.
    """
    p = int(p)
    X = _pixels(cube)
    n = X.shape[0]
    if p < 1 or p > n:
        raise ValueError(f"p must be in [1, {n}]")
    rng = np.random.default_rng(seed)
    counts = np.zeros(n, dtype=np.int64)
    chunk = 256
    for start in range(0, int(n_skewers), chunk):
        m = min(chunk, int(n_skewers) - start)
        skewers = rng.standard_normal((cube.bands, m))
        skewers /= np.linalg.norm(skewers, axis=0, keepdims=True)
        proj = X @ skewers
        np.add.at(counts, np.argmax(proj, axis=0), 1)
        np.add.at(counts, np.argmin(proj, axis=0), 1)
    # sort by count descending, then pixel index ascending
    order = np.lexsort((np.arange(n), -counts))
    top = sorted(int(i) for i in order[:p])
    det = {"counts": {int(i): int(counts[i]) for i in top}, "n_skewers": int(n_skewers)}
    return _make_set(cube, top, "ppi", details=det)


def _vca_snr_estimate(Y: np.ndarray, p: int) -> float:
    """Projection-based SNR estimate used to pick the VCA subspace."""
    bands, n = Y.shape
    mean = Y.mean(axis=1, keepdims=True)
    Y0 = Y - mean
    evals, evecs = np.linalg.eigh((Y0 @ Y0.T) / n)
    Ud = evecs[:, np.argsort(evals)[::-1][:p]]
    x = Ud.T @ Y0
    p_y = float(np.sum(Y**2)) / n
    p_x = float(np.sum(x**2)) / n + float(np.dot(mean.ravel(), mean.ravel()))
    denom = p_y - p_x
    if denom <= 0:
        return 120.0
    return float(10.0 * np.log10(max(p_x - (p / bands) * p_y, 1e-300) / denom))


def extract_vca(cube: HyperCube, p: int, seed: int = 0,
                snr_db: float | None = None) -> EndmemberSet:
    """Vertex component analysis.

    Estimates the SNR when not given; above the 15 + 10*log10(p) threshold the
    data is projected onto its p-dim SVD subspace and scaled projectively,
    otherwise onto the (p-1)-dim PCA subspace of the mean-removed data with a
    constant coordinate appended. Then p rounds of projecting onto the
    orthogonal complement of the current endmember set along a seeded random
    direction, taking the extreme pixel each time.
    """
    p = int(p)
    X = _pixels(cube)
    n, bands = X.shape
    if p < 1 or p > min(n, bands):
        raise ValueError(f"p must be in [1, {min(n, bands)}]")
    Y = X.T  # bands x n
    rng = np.random.default_rng(seed)
    snr = _vca_snr_estimate(Y, p) if snr_db is None else float(snr_db)
    snr_th = 15.0 + 10.0 * np.log10(p)

    if snr > snr_th:
        d = p
        evals, evecs = np.linalg.eigh((Y @ Y.T) / n)
        Ud = evecs[:, np.argsort(evals)[::-1][:d]]
        x = Ud.T @ Y
        u = x.mean(axis=1, keepdims=True)
        denom = (x * u).sum(axis=0)
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        work = x / denom
    else:
        d = p - 1
        mean = Y.mean(axis=1, keepdims=True)
        Y0 = Y - mean
        if d > 0:
            evals, evecs = np.linalg.eigh((Y0 @ Y0.T) / n)
            Ud = evecs[:, np.argsort(evals)[::-1][:d]]
            x = Ud.T @ Y0
        else:
            x = np.zeros((0, n))
        c = float(np.sqrt((x**2).sum(axis=0).max())) if d > 0 else 1.0
        work = np.vstack([x, np.full(n, c if c > 0 else 1.0)])

    A = np.zeros((p, p))
    A[p - 1, 0] = 1.0
    indices: list[int] = []
    for i in range(p):
        if p == 1:
            f = np.ones(1)
        else:
            f = np.zeros(p)
            for _ in range(100):
                w = rng.standard_normal(p)
                f = w - A @ (np.linalg.pinv(A) @ w)
                if np.linalg.norm(f) > 1e-12:
                    break
            else:
                raise RuntimeError("could not find a direction outside the "
                                   "current endmember subspace")
            f /= np.linalg.norm(f)
        v = f @ work
        k = int(np.argmax(np.abs(v)))
        A[:, i] = work[:, k]
        indices.append(k)
    return _make_set(cube, indices, "vca", details={"snr_db": float(snr)})


# ---------------------------------------------------------------------------
# Non-negative least squares (active set, Lawson-Hanson)
# ---------------------------------------------------------------------------

def nnls(A: np.ndarray, b: np.ndarray, tol: float = NNLS_TOL) -> np.ndarray:
    """min ||Ax - b|| subject to x >= 0 by the active-set method.

    Exact least-squares sub-solves on the passive set; at termination the KKT
    conditions hold: gradients vanish on the support and are non-negative on
    the zero set (within tol).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    m, ncol = A.shape
    x = np.zeros(ncol)
    passive = np.zeros(ncol, dtype=bool)
    w = A.T @ b
    it = 0
    max_iter = 3 * ncol + 30
    while it < max_iter:
        it += 1
        candidates = np.where(~passive & (w > tol))[0]
        if candidates.size == 0:
            break
        j = candidates[np.argmax(w[candidates])]
        passive[j] = True
        while True:
            cols = np.where(passive)[0]
            z = np.zeros(ncol)
            sol, _, _, _ = np.linalg.lstsq(A[:, cols], b, rcond=None)
            z[cols] = sol
            if np.all(z[cols] > tol):
                x = z
                break
            neg = cols[z[cols] <= tol]
            denom = x[neg] - z[neg]
            steps = np.where(denom > 0, x[neg] / denom, np.inf)
            alpha = float(np.min(steps)) if steps.size else np.inf
            if not np.isfinite(alpha):
                # degenerate: offending variables already sit at zero
                passive[neg] = False
                x[neg] = 0.0
                continue
            x = x + alpha * (z - x)
            passive[np.where(passive)[0][x[passive] <= tol]] = False
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x


def _solve_per_pixel(X: np.ndarray, solver, p: int, threads: int = 1) -> np.ndarray:
    out = np.empty((X.shape[0], p))

    def work(start: int, stop: int) -> None:
        for i in range(start, stop):
            out[i] = solver(X[i])

    map_blocks(work, X.shape[0], threads=threads)
    return out


def abundance_ucls(cube: HyperCube, E: np.ndarray) -> AbundanceMap:
    """Unconstrained least-squares abundances a = (E^T E)^-1 E^T y."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[0] != cube.bands:
        raise ValueError("endmember band count does not match cube")
    if np.linalg.cond(E) > 1e12:
        raise ValueError("endmember matrix is rank deficient (condition > 1e12)")
    X = _pixels(cube)
    coeffs = np.linalg.solve(E.T @ E, E.T @ X.T).T
    return AbundanceMap(values=coeffs.reshape(cube.lines, cube.samples, -1),
                        constraint="none")


def abundance_nnls(cube: HyperCube, E: np.ndarray, threads: int = 1) -> AbundanceMap:
    """Non-negative least-squares abundances per pixel."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[0] != cube.bands:
        raise ValueError("endmember band count does not match cube")
    X = _pixels(cube)
    out = _solve_per_pixel(X, lambda y: nnls(E, y), E.shape[1], threads)
    return AbundanceMap(values=out.reshape(cube.lines, cube.samples, -1),
                        constraint="nonneg")


def _fcls_system(E: np.ndarray, delta: float) -> tuple[np.ndarray, float]:
    scale = float(np.abs(E).max())
    if scale == 0:
        raise ValueError("endmember matrix is all zeros")
    A = np.vstack([E / scale, np.full((1, E.shape[1]), 1.0 / delta)])
    return A, scale


def fcls_solve(E: np.ndarray, y: np.ndarray, delta: float = FCLS_DELTA) -> np.ndarray:
    """Fully constrained (nonneg + sum-to-one) solve for one spectrum."""
    A, scale = _fcls_system(E, delta)
    b = np.concatenate([np.asarray(y, dtype=float) / scale, [1.0 / delta]])
    return nnls(A, b)


def abundance_fcls(cube: HyperCube, E: np.ndarray, delta: float = FCLS_DELTA,
                   threads: int = 1) -> AbundanceMap:
    """Fully constrained abundances: NNLS on E augmented with a 1/delta
    sum-to-one row (after scaling E to unit maximum, which leaves the
    abundances unchanged)."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[0] != cube.bands:
        raise ValueError("endmember band count does not match cube")
    A, scale = _fcls_system(E, delta)
    t = 1.0 / delta
    X = _pixels(cube)

    def solver(y: np.ndarray) -> np.ndarray:
        return nnls(A, np.concatenate([y / scale, [t]]))

    out = _solve_per_pixel(X, solver, E.shape[1], threads)
    return AbundanceMap(values=out.reshape(cube.lines, cube.samples, -1),
                        constraint="nonneg_sum1")


# ---------------------------------------------------------------------------
# Generalized bilinear model
# ---------------------------------------------------------------------------

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, v.size + 1) > (css - 1.0))[0]
    if rho.size == 0:
        out = np.zeros_like(v)
        out[int(np.argmax(v))] = 1.0
        return out
    r = rho[-1]
    theta = (css[r] - 1.0) / (r + 1.0)
    return np.maximum(v - theta, 0.0)


def _gbm_model(E: np.ndarray, B: np.ndarray, pairs: list[tuple[int, int]],
               a: np.ndarray, g: np.ndarray) -> np.ndarray:
    prods = np.array([a[i] * a[j] for i, j in pairs])
    return E @ a + B @ (g * prods)


def abundance_gbm(cube: HyperCube, E: np.ndarray, iterations: int = 20,
                  threads: int = 1) -> tuple[AbundanceMap, GbmCoefficients]:
    """Generalized bilinear unmixing.

    Model: y = E a + sum_{i<j} gamma_ij a_i a_j (e_i o e_j). Alternates a
    projected-gradient step for a on the simplex (backtracking, so the
    residual never increases) with an exact box-constrained least-squares
    solve for gamma in [0, 1].
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[0] != cube.bands:
        raise ValueError("endmember band count does not match cube")
    p = E.shape[1]
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    B = np.column_stack([E[:, i] * E[:, j] for i, j in pairs]) if pairs else np.zeros((E.shape[0], 0))
    X = _pixels(cube)
    n = X.shape[0]
    a_out = np.empty((n, p))
    g_out = np.empty((n, len(pairs)))
    r_out = np.empty(n)

    def solve_pixel(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        a = fcls_solve(E, y)
        s = a.sum()
        a = a / s if s > 0 else np.full(p, 1.0 / p)
        g = np.zeros(len(pairs))

        def resid(a_, g_):
            r = y - _gbm_model(E, B, pairs, a_, g_)
            return float(r @ r)

        f = resid(a, g)
        for _ in range(int(iterations)):
            if pairs:
                prods = np.array([a[i] * a[j] for i, j in pairs])
                M = B * prods
                if np.any(prods > 0):
                    res = sopt.lsq_linear(M, y - E @ a, bounds=(0.0, 1.0), method="bvls")
                    g_new = res.x
                    if resid(a, g_new) <= f:
                        g = g_new
                        f = resid(a, g)
            # projected gradient on the simplex with backtracking
            r = y - _gbm_model(E, B, pairs, a, g)
            grad = -2.0 * (E.T @ r)
            for (i, j), gij in zip(pairs, g):
                coup = -2.0 * gij * float((E[:, i] * E[:, j]) @ r)
                grad[i] += coup * a[j]
                grad[j] += coup * a[i]
            step = 1.0 / max(np.linalg.norm(grad), 1e-12)
            improved = False
            for _ in range(20):
                a_new = project_simplex(a - step * grad)
                f_new = resid(a_new, g)
                if f_new <= f:
                    a, f = a_new, f_new
                    improved = True
                    break
                step *= 0.5
            if not improved and not pairs:
                break
        return a, g, np.sqrt(f / y.size)

    def work(start: int, stop: int) -> None:
        for i in range(start, stop):
            a_out[i], g_out[i], r_out[i] = solve_pixel(X[i])

    map_blocks(work, n, threads=threads)
    amap = AbundanceMap(values=a_out.reshape(cube.lines, cube.samples, p),
                        constraint="nonneg_sum1")
    gamma = GbmCoefficients(
        gamma=np.clip(g_out, 0.0, 1.0).reshape(cube.lines, cube.samples, len(pairs)),
        pairs=pairs,
        residual_rmse=r_out.reshape(cube.lines, cube.samples),
    )
    return amap, gamma


# ---------------------------------------------------------------------------
# Sparse unmixing (ADMM)
# ---------------------------------------------------------------------------

def sparse_unmix(cube: HyperCube, library: np.ndarray, lam: float,
                 constraint: str = "nonneg", max_iter: int = 200,
                 tol: float = 1e-6, mu: float = 0.1) -> AbundanceMap:
    """Sparse regression of every pixel on a spectral library.

    ADMM on min 0.5||Ax - y||^2 + lam*||x||_1 + indicator(x >= 0), with an
    optional sum-to-one constraint enforced through a weighted all-ones row.
    The splitting variable update is the one-sided soft threshold
    max(u - lam/mu, 0); iteration stops when primal and dual RMS residuals
    drop below tol.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if constraint not in ("nonneg", "nonneg_sum1"):
        raise ValueError(f"unknown constraint {constraint!r}")
    A = np.atleast_2d(np.asarray(library, dtype=float))
    if A.shape[0] != cube.bands:
        raise ValueError("library band count does not match cube")
    Y = _pixels(cube).T  # bands x n
    if constraint == "nonneg_sum1":
        scale = float(np.abs(A).max())
        A = np.vstack([A / scale, np.full((1, A.shape[1]), 1.0 / FCLS_DELTA)])
        Y = np.vstack([Y / scale, np.full((1, Y.shape[1]), 1.0 / FCLS_DELTA)])
    m = A.shape[1]
    n = Y.shape[1]

    gram = A.T @ A + mu * np.eye(m)
    chol = np.linalg.cholesky(gram)
    Aty = A.T @ Y

    x = np.zeros((m, n))
    z = np.zeros((m, n))
    u = np.zeros((m, n))
    thresh = lam / mu
    scale_rms = np.sqrt(m * n)
    for _ in range(int(max_iter)):
        rhs = Aty + mu * (z - u)
        x = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        z_prev = z
        z = np.maximum(x + u - thresh, 0.0)
        u = u + x - z
        primal = np.linalg.norm(x - z) / scale_rms
        dual = mu * np.linalg.norm(z - z_prev) / scale_rms
        if primal < tol and dual < tol:
            break
    out = z.T.reshape(cube.lines, cube.samples, m)
    if constraint == "nonneg_sum1":
        # final feasibility projection onto the sum-one ray; the weighted
        # augmentation row already holds the sums near 1, so this only moves
        # values at the level of the ADMM tolerance
        sums = out.sum(axis=2)
        out = np.where(sums[..., None] > 0,
                       out / np.maximum(sums[..., None], 1e-300),
                       1.0 / m)
    return AbundanceMap(values=out, constraint=constraint)


# ---------------------------------------------------------------------------
# Reconstruction error
# ---------------------------------------------------------------------------

def rmse_map(cube: HyperCube, E: np.ndarray, abundances: AbundanceMap) -> np.ndarray:
    """Per-pixel RMS reconstruction error sqrt(mean_b (y - E a)^2)."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    recon = abundances.values @ E.T
    err = cube.values - recon
    return np.sqrt(np.mean(err * err, axis=2))
