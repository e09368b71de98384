import numpy as np
import pytest
from scipy.special import erf

from coherent_hartree.grid import (Grid, GridError, LinearConvolver, SpectralField, TruncationWarning,
                                   check_truncation, displacement_samples, inner, l2_norm, outer_mass_fraction,
                                   periodic_convolve, sigma_norm, spectral_derivative, spectral_energy,
                                   spectral_interpolate, spectral_shift)


def gaussian(y, center=0.0):
    return np.pi ** -0.25 * np.exp(-(y - center) ** 2 / 2)


def on_points(func):
    """Adapt a scalar profile to the (..., 1) point arrays passed by Grid.sample."""
    return lambda x: func(x[..., 0])


@pytest.fixture
def grid():
    return Grid.uniform(1024, 40.0)


def test_grid_rejects_bad_sizes():
    with pytest.raises(GridError):
        Grid.uniform(100, 1.0)
    with pytest.raises(GridError):
        Grid.uniform(4, 1.0)
    with pytest.raises(GridError):
        Grid.uniform(16, -1.0)


def test_grid_points_and_periodicity(grid):
    x = grid.axes[0]
    assert x[0] == pytest.approx(-20.0)
    assert np.all(np.diff(x) > 0)
    assert x[-1] + grid.spacing[0] == pytest.approx(x[0] + grid.length[0])


def test_zero_field_has_zero_norm(grid):
    assert l2_norm(SpectralField(grid, np.zeros(grid.shape))) == 0.0


def test_gaussian_norm_matches_erf_oracle(grid):
    f = grid.sample(on_points(gaussian))
    # mass of |f|^2 = pi^{-1/2} e^{-y^2} on [-20, 20) from the error function
    oracle = np.sqrt(0.5 * (erf(20.0) - erf(-20.0)))
    assert abs(l2_norm(f) - oracle) <= 1e-12


def test_norm_phase_invariant(grid):
    f = grid.sample(on_points(gaussian))
    assert l2_norm(f * np.exp(0.7j)) == pytest.approx(l2_norm(f), rel=1e-15)


def test_parseval_and_round_trip(grid):
    rng = np.random.default_rng(1)
    f = SpectralField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
    assert abs(l2_norm(f) ** 2 - spectral_energy(f)) <= 1e-12 * l2_norm(f) ** 2
    back = np.fft.ifft(f.spectrum)
    assert np.max(np.abs(back - f.values)) <= 1e-13 * np.max(np.abs(f.values))


def test_inner_is_conjugate_linear_in_first_slot(grid):
    f = grid.sample(on_points(gaussian))
    g = grid.sample(on_points(lambda y: gaussian(y, 1.0)))
    assert inner(f * 2j, g) == pytest.approx(-2j * inner(f, g))


def test_sigma_norm_values(grid):
    f = grid.sample(on_points(gaussian))
    assert sigma_norm(f, 0) == pytest.approx(l2_norm(f), rel=1e-15)
    # int y^2 |a|^2 = int |a'|^2 = 1/2 for the standard Gaussian
    assert sigma_norm(f, 1) == pytest.approx(1 + 2 / np.sqrt(2), abs=1e-10)
    values = [sigma_norm(f, k) for k in range(5)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_sigma_norm_under_one_cell_translation(grid):
    f = grid.sample(on_points(gaussian))
    g = grid.sample(on_points(lambda y: gaussian(y, grid.spacing[0])))
    assert abs(sigma_norm(g, 1) - sigma_norm(f, 1)) <= 2 * grid.spacing[0] * l2_norm(f)


def test_sigma_norm_order_range(grid):
    with pytest.raises(GridError):
        sigma_norm(grid.sample(on_points(gaussian)), 8)


def test_spectral_derivative_of_gaussian(grid):
    f = grid.sample(on_points(gaussian))
    d1 = spectral_derivative(f.values, grid, (1,))
    exact = -grid.axes[0] * gaussian(grid.axes[0])
    assert np.max(np.abs(d1 - exact)) < 1e-12


def test_convolution_constant_kernel(grid):
    rho = grid.sample(on_points(lambda y: np.abs(gaussian(y)) ** 2))
    out = periodic_convolve(grid.sample(on_points(np.ones_like)), rho)
    assert np.max(np.abs(out.values - l2_norm(grid.sample(on_points(gaussian))) ** 2)) < 1e-12


def test_convolution_delta_kernel(grid):
    rho = grid.sample(on_points(lambda y: gaussian(y) ** 2))
    delta = np.zeros(grid.shape)
    delta[grid.n[0] // 2] = 1.0 / grid.spacing[0]
    out = periodic_convolve(SpectralField(grid, delta), rho)
    assert np.max(np.abs(out.values - rho.values)) < 1e-13


def test_convolution_gaussians_closed_form(grid):
    kernel = displacement_samples(lambda x: np.exp(-x[..., 0] ** 2), grid)
    rho = grid.sample(on_points(lambda y: np.exp(-y ** 2)))
    out = periodic_convolve(kernel, rho)
    # int e^{-(x-z)^2} e^{-z^2} dz = sqrt(pi/2) e^{-x^2/2}
    exact = np.sqrt(np.pi / 2) * np.exp(-grid.axes[0] ** 2 / 2)
    assert np.max(np.abs(out.values - exact)) < 1e-13


def test_convolution_symmetric_and_linear(grid):
    a = grid.sample(on_points(lambda y: np.exp(-y ** 2)))
    b = grid.sample(on_points(lambda y: np.exp(-(y - 1) ** 2 / 3)))
    ab = periodic_convolve(a, b).values
    ba = periodic_convolve(b, a).values
    assert np.max(np.abs(ab - ba)) < 1e-13
    lin = periodic_convolve(a, b * 2.0 + a).values
    assert np.max(np.abs(lin - 2 * ab - periodic_convolve(a, a).values)) < 1e-12


def test_linear_convolver_matches_direct_sum():
    grid = Grid.uniform(64, 8.0)
    y = grid.axes[0]
    rho = np.exp(-y ** 2)
    kernel = lambda w: w[..., 0] ** 2  # growing kernel: must not wrap
    conv = LinearConvolver(grid)
    out = conv.apply(conv.kernel_spectrum(kernel), rho)
    direct = grid.spacing[0] * ((y[:, None] - y[None, :]) ** 2 @ rho)
    assert np.max(np.abs(out - direct)) < 1e-11


def test_interpolation_reproduces_nodes(grid):
    f = grid.sample(on_points(gaussian))
    vals = spectral_interpolate(f, grid.axes[0])
    assert np.max(np.abs(vals - f.values)) <= 1e-12


def test_interpolation_of_single_mode():
    grid = Grid.uniform(32, 2 * np.pi)
    f = grid.sample(on_points(lambda x: np.exp(3j * x)))
    pts = np.array([0.123, 1.7, -2.9])
    assert np.max(np.abs(spectral_interpolate(f, pts) - np.exp(3j * pts))) < 1e-13


def test_interpolation_half_cell_matches_refined_grid():
    coarse = Grid.uniform(256, 40.0)
    fine = coarse.refined(8)
    f = coarse.sample(on_points(gaussian))
    pts = coarse.axes[0] + coarse.spacing[0] / 2
    oracle = gaussian(fine.axes[0])[4::8]
    assert np.max(np.abs(spectral_interpolate(f, pts) - oracle)) <= 1e-9


def test_interpolation_zero_extension(grid):
    f = grid.sample(on_points(gaussian))
    assert spectral_interpolate(f, np.array([25.0]), outside="zero")[0] == 0


def test_spectral_shift_matches_interpolation(grid):
    f = grid.sample(on_points(gaussian))
    shift = 1.2345
    assert np.max(np.abs(spectral_shift(f, shift) - gaussian(grid.axes[0] + shift))) < 1e-12


def test_truncation_diagnostics():
    grid = Grid.uniform(64, 4.0)
    f = grid.sample(on_points(gaussian))
    assert outer_mass_fraction(f) > 1e-10
    with pytest.warns(TruncationWarning):
        check_truncation(f)
