"""Material counting, extraction, abundance solvers and sparse unmixing."""

from itertools import combinations, permutations

import numpy as np
import pytest

from hxkit.cube import spectral_angle
from hxkit.envi_io import HyperCube
from hxkit.preprocess import fit_pca
from hxkit.unmix import (AbundanceMap, abundance_fcls, abundance_gbm,
                         abundance_nnls, abundance_ucls, extract_atgp,
                         extract_nfindr, extract_ppi, extract_vca,
                         fcls_solve, material_count_hfc, nnls, rmse_map,
                         simplex_volume, sparse_unmix)

from .synth import (default_header, gaussian_bump_endmembers,
                    make_mixture_cube, make_noise_cube,
                    oracle_fcls_objective, oracle_nnls_objective)


def _match_endmembers(E_true: np.ndarray, E_est: np.ndarray) -> list[float]:
    """Best-permutation per-endmember spectral angles."""
    p = E_true.shape[1]
    best = None
    for perm in permutations(range(p)):
        angles = [spectral_angle(E_true[:, i], E_est[:, perm[i]]) for i in range(p)]
        if best is None or sum(angles) < sum(best):
            best = angles
    return best


# ---------------------------------------------------------------------------
# Material count
# ---------------------------------------------------------------------------

def test_hfc_three_endmembers():
    cube, _, _ = make_mixture_cube(50, 50, 3, 30, snr_db=40.0, seed=0)
    assert material_count_hfc(cube, 1e-3) == 3
    assert material_count_hfc(cube, 1e-4) == 3


def test_hfc_pure_noise_zero():
    cube = make_noise_cube(50, 50, 20, sigma=1.0, seed=1, mean=0.0)
    assert material_count_hfc(cube, 1e-4) == 0


def test_hfc_monotone_in_pfa():
    cube, _, _ = make_mixture_cube(40, 40, 3, 25, snr_db=25.0, seed=2)
    counts = [material_count_hfc(cube, pfa) for pfa in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_hfc_pfa_validation():
    cube, _, _ = make_mixture_cube(10, 10, 2, 8, snr_db=None, seed=3)
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            material_count_hfc(cube, bad)


# ---------------------------------------------------------------------------
# ATGP
# ---------------------------------------------------------------------------

def test_atgp_p1_max_norm():
    cube, _, _ = make_mixture_cube(10, 10, 3, 12, snr_db=None, seed=4)
    ems = extract_atgp(cube, 1)
    norms = np.linalg.norm(cube.flat(), axis=1)
    expect = int(np.argmax(norms))
    assert ems.source_pixels[0] == (expect // 10, expect % 10)


def test_atgp_recovers_simplex_vertices():
    cube, E, _ = make_mixture_cube(15, 15, 3, 20, snr_db=None, seed=5)
    ems = extract_atgp(cube, 3)
    angles = _match_endmembers(E, ems.E)
    assert max(angles) < 1e-7
    # the planted pure pixels occupy the first row of the scene
    assert set(ems.source_pixels) == {(0, 0), (0, 1), (0, 2)}


def test_atgp_never_repeats_pixels():
    cube, _, _ = make_mixture_cube(8, 8, 3, 10, snr_db=20.0, seed=6)
    ems = extract_atgp(cube, 5)
    assert len(set(ems.source_pixels)) == 5


# ---------------------------------------------------------------------------
# N-FINDR
# ---------------------------------------------------------------------------

def test_simplex_volume_unit_triangle():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert simplex_volume(pts) == pytest.approx(0.5)


def test_nfindr_recovers_vertices_vs_bruteforce():
    cube, E, _ = make_mixture_cube(12, 12, 3, 16, snr_db=None, seed=7)
    model = fit_pca(cube, 2)
    ems = extract_nfindr(cube, 3, model=model, seed=0)
    angles = _match_endmembers(E, ems.E)
    assert max(angles) < 1e-7

    # brute-force maximum volume over all pixel triples (144 pixels)
    from hxkit.preprocess import apply_transform

    Z = apply_transform(model, cube).flat()
    best = 0.0
    for tri in combinations(range(Z.shape[0]), 3):
        best = max(best, simplex_volume(Z[list(tri)]))
    assert ems.details["volume"] == pytest.approx(best, rel=1e-9)


def test_nfindr_deterministic():
    cube, _, _ = make_mixture_cube(10, 10, 3, 12, snr_db=30.0, seed=8)
    a = extract_nfindr(cube, 3, seed=5)
    b = extract_nfindr(cube, 3, seed=5)
    assert a.source_pixels == b.source_pixels
    assert np.array_equal(a.E, b.E)


# ---------------------------------------------------------------------------
# PPI
# ---------------------------------------------------------------------------

def test_ppi_finds_vertices():
    cube, E, A = make_mixture_cube(12, 12, 3, 16, snr_db=None, seed=9)
    ems = extract_ppi(cube, 3, n_skewers=1000, seed=0)
    angles = _match_endmembers(E, ems.E)
    assert max(angles) < 1e-7


def test_ppi_interior_pixel_rarely_hit():
    # centroid of a symmetric simplex: make pixel 0 the exact centroid
    cube, E, _ = make_mixture_cube(10, 10, 3, 12, snr_db=None, seed=10)
    values = cube.values.copy()
    values[0, 0] = E.mean(axis=1)
    cube2 = HyperCube(cube.header, values)
    ems = extract_ppi(cube2, 3, n_skewers=1000, seed=0)
    counts = ems.details["counts"]
    assert 0 not in counts  # centroid never wins a skewer


def test_ppi_deterministic():
    cube, _, _ = make_mixture_cube(8, 8, 3, 10, snr_db=30.0, seed=11)
    a = extract_ppi(cube, 3, seed=3)
    b = extract_ppi(cube, 3, seed=3)
    assert a.source_pixels == b.source_pixels


# ---------------------------------------------------------------------------
# VCA
# ---------------------------------------------------------------------------

def test_vca_noiseless_recovery():
    cube, E, _ = make_mixture_cube(15, 15, 3, 20, snr_db=None, seed=12)
    ems = extract_vca(cube, 3, seed=0)
    angles = _match_endmembers(E, ems.E)
    assert max(angles) < 1e-7
    assert set(ems.source_pixels) == {(0, 0), (0, 1), (0, 2)}


def test_vca_40db_median_under_5_degrees():
    medians = []
    for seed in range(10):
        cube, E, _ = make_mixture_cube(50, 50, 3, 30, snr_db=40.0, seed=100 + seed)
        ems = extract_vca(cube, 3, seed=seed)
        angles = _match_endmembers(E, ems.E)
        medians.append(np.median(angles))
    assert np.median(medians) < np.deg2rad(5.0)


def test_vca_low_snr_branch():
    # forcing the reported SNR below 15 + 10*log10(p) selects the affine
    # (p-1 dims + constant row) projection; vertices still recovered
    cube, E, _ = make_mixture_cube(15, 15, 3, 20, snr_db=None, seed=42)
    ems = extract_vca(cube, 3, seed=1, snr_db=5.0)
    angles = _match_endmembers(E, ems.E)
    assert max(angles) < 1e-7


def test_vca_deterministic():
    cube, _, _ = make_mixture_cube(10, 10, 3, 12, snr_db=30.0, seed=13)
    a = extract_vca(cube, 3, seed=21)
    b = extract_vca(cube, 3, seed=21)
    assert a.source_pixels == b.source_pixels
    assert np.array_equal(a.E, b.E)


def test_extractors_return_actual_pixels():
    cube, _, _ = make_mixture_cube(9, 9, 3, 12, snr_db=25.0, seed=14)
    for ems in (extract_atgp(cube, 3), extract_vca(cube, 3, seed=0),
                extract_nfindr(cube, 3, seed=0), extract_ppi(cube, 3, seed=0)):
        for col, (r, c) in enumerate(ems.source_pixels):
            assert np.array_equal(ems.E[:, col], cube.values[r, c, :]), ems.algorithm


# ---------------------------------------------------------------------------
# NNLS / UCLS / FCLS
# ---------------------------------------------------------------------------

def test_nnls_boundary_case():
    E = np.array([[1.0], [0.0]])
    x = nnls(E, np.array([-1.0, 0.0]))
    assert x.tolist() == [0.0]


def test_nnls_kkt_conditions():
    rng = np.random.default_rng(15)
    for _ in range(50):
        m = rng.integers(2, 11)
        nb = rng.integers(max(2, m - 2), 12)
        A = rng.standard_normal((nb, m))
        y = rng.standard_normal(nb)
        x = nnls(A, y)
        grad = A.T @ (A @ x - y)
        assert np.all(x >= 0)
        assert np.all(np.abs(grad[x > 0]) <= 1e-8)
        assert np.all(grad[x <= 0] >= -1e-8)


def test_nnls_matches_bruteforce_oracle():
    rng = np.random.default_rng(16)
    for _ in range(50):
        m = int(rng.integers(1, 11))
        nb = int(rng.integers(m, m + 8))
        A = rng.standard_normal((nb, m))
        y = rng.standard_normal(nb)
        x = nnls(A, y)
        obj = 0.5 * float(np.sum((A @ x - y) ** 2))
        assert obj <= oracle_nnls_objective(A, y) + 1e-5


def test_ucls_exact_recovery():
    cube, E, A = make_mixture_cube(8, 8, 3, 12, snr_db=None, seed=17)
    amap = abundance_ucls(cube, E)
    assert np.allclose(amap.values, A, atol=1e-9)


def test_ucls_orthonormal_shortcut():
    E, _ = np.linalg.qr(np.random.default_rng(18).standard_normal((6, 2)))
    values = np.random.default_rng(19).standard_normal((3, 3, 6))
    cube = HyperCube(default_header(3, 3, 6), values)
    amap = abundance_ucls(cube, E)
    assert np.allclose(amap.values, values @ E, atol=1e-9)


def test_ucls_orthogonal_target_zero():
    E = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    values = np.zeros((1, 1, 3))
    values[0, 0, 2] = 5.0
    cube = HyperCube(default_header(1, 1, 3), values)
    assert np.allclose(abundance_ucls(cube, E).values, 0.0, atol=1e-12)


def test_ucls_residual_orthogonality():
    cube, E, _ = make_mixture_cube(6, 6, 3, 10, snr_db=20.0, seed=20)
    amap = abundance_ucls(cube, E)
    Y = cube.flat()
    R = Y - amap.values.reshape(-1, 3) @ E.T
    assert np.linalg.norm(E.T @ R.T) <= 1e-8 * np.linalg.norm(E.T @ Y.T)


def test_ucls_rank_deficient_rejected():
    E = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    cube, _, _ = make_mixture_cube(2, 2, 2, 3, snr_db=None, seed=21)
    with pytest.raises(ValueError, match="rank"):
        abundance_ucls(cube, E)


def test_fcls_exact_on_noiseless_simplex():
    cube, E, A = make_mixture_cube(8, 8, 3, 12, snr_db=None, seed=22)
    amap = abundance_fcls(cube, E)
    assert np.allclose(amap.values, A, atol=1e-6)


def test_fcls_sums_to_one():
    cube, E, _ = make_mixture_cube(10, 10, 3, 15, snr_db=30.0, seed=23)
    amap = abundance_fcls(cube, E)
    sums = amap.values.sum(axis=2)
    assert np.all(np.abs(sums - 1.0) <= 1e-6)
    assert amap.constraint == "nonneg_sum1"


def test_fcls_matches_bruteforce_qp():
    rng = np.random.default_rng(24)
    for _ in range(50):
        m = int(rng.integers(2, 4))
        nb = int(rng.integers(4, 11))
        A = rng.uniform(0.1, 1.0, (nb, m))
        y = rng.uniform(0.1, 1.0, nb)
        x = fcls_solve(A, y)
        obj = 0.5 * float(np.sum((A @ x - y) ** 2))
        assert obj <= oracle_fcls_objective(A, y) + 1e-5


def test_rmse_map_cases():
    cube, E, A = make_mixture_cube(6, 6, 3, 10, snr_db=None, seed=25)
    exact = AbundanceMap(values=A, constraint="nonneg_sum1")
    assert np.allclose(rmse_map(cube, E, exact), 0.0, atol=1e-12)
    zero = AbundanceMap(values=np.zeros_like(A), constraint="nonneg")
    expect = np.sqrt(np.mean(cube.values**2, axis=2))
    assert np.allclose(rmse_map(cube, E, zero), expect, atol=1e-12)


def test_rmse_fcls_at_least_ucls():
    cube, E, _ = make_mixture_cube(8, 8, 3, 12, snr_db=20.0, seed=26)
    r_ucls = rmse_map(cube, E, abundance_ucls(cube, E))
    r_fcls = rmse_map(cube, E, abundance_fcls(cube, E))
    assert np.all(r_fcls >= r_ucls - 1e-9)


# ---------------------------------------------------------------------------
# GBM
# ---------------------------------------------------------------------------

def test_gbm_linear_data_gives_zero_gamma():
    cube, E, A = make_mixture_cube(6, 6, 3, 12, snr_db=None, seed=27)
    amap, gamma = abundance_gbm(cube, E, iterations=10)
    fcls = abundance_fcls(cube, E)
    assert np.all(gamma.gamma <= 0.05)
    assert np.allclose(amap.values, fcls.values, atol=1e-3)


def test_gbm_bilinear_data_beats_fcls():
    rng = np.random.default_rng(28)
    p, bands, lines, samples = 3, 12, 8, 8
    E = gaussian_bump_endmembers(bands, p)
    A = rng.dirichlet(np.full(p, 2.0), size=lines * samples)
    gamma_true = 0.8
    bilinear = (A[:, 0] * A[:, 1])[:, None] * (E[:, 0] * E[:, 1])[None, :]
    Y = A @ E.T + gamma_true * bilinear
    cube = HyperCube(default_header(lines, samples, bands),
                     Y.reshape(lines, samples, bands))
    amap, gamma = abundance_gbm(cube, E, iterations=15)
    recon_gbm = float(np.mean(gamma.residual_rmse))
    fcls = abundance_fcls(cube, E)
    err = cube.values - fcls.values @ E.T
    recon_fcls = float(np.mean(np.sqrt(np.mean(err**2, axis=2))))
    assert recon_gbm < recon_fcls


def test_gbm_residual_monotone():
    # alternation with exact/backtracked sub-solves: more iterations can
    # never worsen any pixel's residual
    cube, E, _ = make_mixture_cube(4, 4, 3, 10, snr_db=15.0, seed=29)
    prev = None
    for iters in (1, 2, 4, 8):
        _, gamma = abundance_gbm(cube, E, iterations=iters)
        if prev is not None:
            assert np.all(gamma.residual_rmse <= prev + 1e-9)
        prev = gamma.residual_rmse


# ---------------------------------------------------------------------------
# Sparse unmixing
# ---------------------------------------------------------------------------

def _library(bands=20, m=20):
    x = np.arange(bands, dtype=float)
    lib = np.empty((bands, m))
    for j in range(m):
        c = (j + 0.5) * bands / m
        lib[:, j] = 0.1 + np.exp(-((x - c) ** 2) / (2 * (bands / 12) ** 2))
    return lib


def test_sparse_lambda_zero_matches_nnls():
    rng = np.random.default_rng(30)
    A = _library(15, 8)
    Y = rng.uniform(0.2, 1.0, (2, 3, 15))
    cube = HyperCube(default_header(2, 3, 15), Y)
    sp = sparse_unmix(cube, A, lam=0.0, max_iter=2000, tol=1e-10)
    nn = abundance_nnls(cube, A)
    assert np.allclose(sp.values, nn.values, atol=1e-5)


def test_sparse_large_lambda_zeroes():
    A = _library(10, 5)
    cube = HyperCube(default_header(2, 2, 10),
                     np.random.default_rng(31).uniform(0.1, 1.0, (2, 2, 10)))
    sp = sparse_unmix(cube, A, lam=1e6)
    assert np.all(sp.values == 0.0)


def test_sparse_support_recovery():
    rng = np.random.default_rng(32)
    bands, m = 30, 20
    A = _library(bands, m)
    active = [2, 9, 16]
    coeffs = np.array([0.5, 0.3, 0.2])
    signal = A[:, active] @ coeffs
    sigma = np.sqrt(np.mean(signal**2) / 10**4.0)  # 40 dB
    n_pix = 6
    Y = signal[None, :] + rng.normal(0, sigma, (n_pix, bands))
    cube = HyperCube(default_header(1, n_pix, bands), Y[None, :, :])
    sp = sparse_unmix(cube, A, lam=1e-3, max_iter=2000, tol=1e-8)
    for pix in range(n_pix):
        x = sp.values[0, pix]
        support = set(np.nonzero(x > 0.02)[0].tolist())
        assert support == set(active)
        assert np.allclose(x[active], coeffs, atol=0.05)

    # oracle: exhaustive support search with NNLS restricted to 3 columns
    best_obj, best_support = np.inf, None
    y = Y[0]
    for tri in combinations(range(m), 3):
        xs = nnls(A[:, list(tri)], y)
        obj = 0.5 * float(np.sum((A[:, list(tri)] @ xs - y) ** 2))
        if obj < best_obj:
            best_obj, best_support = obj, set(tri)
    assert best_support == set(active)


def test_sparse_matches_bruteforce_lasso_oracle():
    rng = np.random.default_rng(33)
    for _ in range(50):
        m = int(rng.integers(2, 11))
        nb = int(rng.integers(m, m + 6))
        A = rng.uniform(0.1, 1.0, (nb, m))
        y = rng.uniform(0.1, 1.0, nb)
        lam = float(rng.choice([0.0, 1e-3, 1e-2]))
        cube = HyperCube(default_header(1, 1, nb), y.reshape(1, 1, nb))
        sp = sparse_unmix(cube, A, lam=lam, max_iter=4000, tol=1e-10)
        x = sp.values[0, 0]
        obj = 0.5 * float(np.sum((A @ x - y) ** 2)) + lam * float(np.sum(x))
        assert obj <= oracle_nnls_objective(A, y, lam) + 1e-5


def test_sparse_sum1_constraint():
    A = _library(12, 6)
    rng = np.random.default_rng(34)
    cube = HyperCube(default_header(2, 2, 12), rng.uniform(0.2, 1.0, (2, 2, 12)))
    sp = sparse_unmix(cube, A, lam=0.0, constraint="nonneg_sum1",
                      max_iter=2000, tol=1e-9)
    assert np.all(np.abs(sp.values.sum(axis=2) - 1.0) <= 1e-6)
