"""Gaussian SRF construction and spectral/spatial resampling."""

import numpy as np
import pytest

from hxkit.envi_io import HeaderInfo, HyperCube
from hxkit.errors import EmptySupportError
from hxkit.resample import (builtin_sensor, gaussian_srf, read_sensor_csv,
                            spatial_downsample, spectral_resample)

from .synth import default_header


def test_sigma_from_fwhm():
    # sigma = FWHM / (2 sqrt(2 ln 2)) = FWHM / 2.35482
    grid = np.linspace(400, 600, 201)
    srf = gaussian_srf([500.0], [10.0], grid)
    sigma = 10.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    assert sigma == pytest.approx(4.24661, abs=1e-5)
    # recover sigma from the discrete weights as a second check
    w = srf.weights[0]
    mean = np.sum(w * grid)
    var = np.sum(w * (grid - mean) ** 2)
    assert np.sqrt(var) == pytest.approx(sigma, rel=1e-3)


def test_row_symmetry_on_symmetric_grid():
    grid = np.linspace(480, 520, 41)  # symmetric around 500
    srf = gaussian_srf([500.0], [12.0], grid)
    w = srf.weights[0]
    assert np.allclose(w, w[::-1], atol=1e-15)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_single_grid_point_row_is_one():
    srf = gaussian_srf([500.0], [10.0], np.array([500.0]))
    assert srf.weights.tolist() == [[1.0]]


def test_empty_support_error():
    grid = np.linspace(400, 450, 51)
    with pytest.raises(EmptySupportError):
        gaussian_srf([800.0], [10.0], grid)


def test_truncation_zeroes_far_tails():
    grid = np.linspace(200, 800, 601)
    srf = gaussian_srf([500.0], [10.0], grid)
    w = srf.weights[0]
    assert w[0] == 0.0 and w[-1] == 0.0
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def _cube_from_spectra(spectra: np.ndarray, wavelengths: np.ndarray) -> HyperCube:
    lines, samples = 1, spectra.shape[0]
    header = HeaderInfo(samples=samples, lines=lines, bands=spectra.shape[1],
                        wavelengths=[float(v) for v in wavelengths])
    return HyperCube(header, spectra[None, :, :])


def test_resample_constant_spectrum():
    grid = np.linspace(400, 700, 31)
    srf = gaussian_srf([500.0, 600.0], [20.0, 30.0], grid)
    cube = _cube_from_spectra(np.full((3, 31), 7.5), grid)
    out = spectral_resample(cube, srf)
    assert np.allclose(out.values, 7.5, atol=1e-12)
    assert out.header.wavelengths == [500.0, 600.0]
    assert out.header.fwhm == [20.0, 30.0]


def test_resample_indicator_row_picks_band():
    from hxkit.resample import SpectralResponse

    grid = np.array([400.0, 500.0, 600.0])
    weights = np.array([[0.0, 1.0, 0.0]])
    srf = SpectralResponse(source_wavelengths=grid, weights=weights,
                           target_centers=np.array([500.0]),
                           target_fwhm=np.array([1.0]))
    spectra = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    out = spectral_resample(_cube_from_spectra(spectra, grid), srf)
    assert out.values[0, :, 0].tolist() == [2.0, 5.0]


def test_resample_linear_spectrum_hits_center():
    # Gaussian-weighted average of a linear-in-wavelength spectrum equals the
    # value at the center; oracle = dense quadrature of the same integrand
    grid = np.linspace(400, 800, 2001)
    center, fwhm = 600.0, 40.0
    srf = gaussian_srf([center], [fwhm], grid)
    slope, offset = 0.002, -0.1
    spectrum = offset + slope * grid
    resampled = float(srf.weights[0] @ spectrum)

    sigma = fwhm / (2 * np.sqrt(2 * np.log(2)))
    kernel = np.exp(-((grid - center) ** 2) / (2 * sigma**2))
    quad = np.trapezoid(kernel * spectrum, grid) / np.trapezoid(kernel, grid)
    assert resampled == pytest.approx(quad, abs=1e-9)
    assert resampled == pytest.approx(offset + slope * center, abs=1e-6)


def test_resample_commutes_with_scaling():
    grid = np.linspace(400, 700, 31)
    srf = gaussian_srf([550.0], [25.0], grid)
    rng = np.random.default_rng(2)
    cube = _cube_from_spectra(rng.uniform(0.5, 1.5, (4, 31)), grid)
    from hxkit.cube import scale_cube

    a = spectral_resample(scale_cube(cube, 3.0), srf)
    b = scale_cube(spectral_resample(cube, srf), 3.0)
    assert np.allclose(a.values, b.values, rtol=1e-12)


# ---------------------------------------------------------------------------
# Spatial downsampling
# ---------------------------------------------------------------------------

def test_block_mean_hand_case():
    values = np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None]
    cube = HyperCube(default_header(2, 2, 1), values)
    out = spatial_downsample(cube, 2, "block_mean")
    assert out.values[0, 0, 0] == 2.5


def test_downsample_identity_and_constant():
    cube = HyperCube(default_header(4, 4, 2), np.full((4, 4, 2), 3.3))
    assert np.array_equal(spatial_downsample(cube, 1).values, cube.values)
    out = spatial_downsample(cube, 2, "block_mean")
    assert np.allclose(out.values, 3.3)
    gout = spatial_downsample(cube, 2, "gaussian")
    assert np.allclose(gout.values, 3.3)


def test_block_mean_preserves_global_mean():
    rng = np.random.default_rng(4)
    cube = HyperCube(default_header(8, 8, 3), rng.uniform(0, 1, (8, 8, 3)))
    out = spatial_downsample(cube, 4, "block_mean")
    for b in range(3):
        assert out.values[:, :, b].mean() == pytest.approx(
            cube.values[:, :, b].mean(), abs=1e-12)


def test_downsample_crops_with_warning():
    rng = np.random.default_rng(5)
    cube = HyperCube(default_header(5, 7, 1), rng.uniform(0, 1, (5, 7, 1)))
    with pytest.warns(UserWarning, match="cropping"):
        out = spatial_downsample(cube, 2, "block_mean")
    assert out.shape == (2, 3, 1)


def test_downsample_bad_args():
    cube = HyperCube(default_header(4, 4, 1), np.zeros((4, 4, 1)))
    with pytest.raises(ValueError):
        spatial_downsample(cube, 0)
    with pytest.raises(ValueError):
        spatial_downsample(cube, 2, "sinc")


# ---------------------------------------------------------------------------
# Sensor definitions
# ---------------------------------------------------------------------------

def test_builtin_sensor():
    centers, fwhm = builtin_sensor("vnir4")
    assert centers.size == 4 and np.all(fwhm > 0)
    with pytest.raises(ValueError):
        builtin_sensor("nope")


def test_sensor_csv(tmp_path):
    path = tmp_path / "sensor.csv"
    path.write_text("center_nm,fwhm_nm\n500,20\n600,30\n")
    centers, fwhm = read_sensor_csv(path)
    assert centers.tolist() == [500.0, 600.0]
    assert fwhm.tolist() == [20.0, 30.0]
