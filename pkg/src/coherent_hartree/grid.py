"""Periodic Cartesian grids, spectral fields and the quadratures built on them.

Grid points are ``x_m = c - L/2 + m L / N`` along each axis and angular
frequencies are ``xi_k = 2 pi k / L`` in FFT order.  Spectra are plain
unnormalised FFTs of the samples, so Parseval reads

    ||f||^2 = h^d * sum |f_m|^2 = (h^d / N^d) * sum |F_k|^2

with ``h^d`` the cell volume and ``N^d`` the total number of points.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

TRUNCATION_WARN_LEVEL = 1e-10


class GridError(ValueError):
    """Raised for malformed grids or fields living on mismatched grids."""


class TruncationWarning(UserWarning):
    """Field mass outside the central half-box exceeds the configured level."""


def _as_tuple(value, dim: int, cast) -> tuple:
    if np.ndim(value) == 0:
        return tuple(cast(value) for _ in range(dim))
    out = tuple(cast(v) for v in value)
    if len(out) != dim:
        raise GridError(f"expected {dim} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on a box of side lengths ``length`` centred at ``center``."""

    n: tuple[int, ...]
    length: tuple[float, ...]
    center: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.n) == len(self.length) == len(self.center)):
            raise GridError("n, length and center must have the same dimension")
        if len(self.n) not in (1, 2, 3):
            raise GridError("only dimensions 1 to 3 are supported")
        for npts in self.n:
            if npts < 8 or npts & (npts - 1):
                raise GridError(f"points per axis must be a power of two >= 8, got {npts}")
        for side in self.length:
            if not np.isfinite(side) or side <= 0:
                raise GridError(f"box length must be positive and finite, got {side}")

    @classmethod
    def uniform(cls, n: int | Sequence[int], length: float | Sequence[float],
                center: float | Sequence[float] = 0.0, dim: int = 1) -> "Grid":
        if np.ndim(n) > 0:
            dim = len(n)
        return cls(_as_tuple(n, dim, int), _as_tuple(length, dim, float),
                   _as_tuple(center, dim, float))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(side / npts for side, npts in zip(self.length, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(c - side / 2 + np.arange(npts) * side / npts
                     for npts, side, c in zip(self.n, self.length, self.center))

    @cached_property
    def coords(self) -> np.ndarray:
        """Point coordinates with shape ``(d, *n)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Point coordinates with shape ``(*n, d)``."""
        return np.moveaxis(self.coords, 0, -1)

    @cached_property
    def freq_axes(self) -> tuple[np.ndarray, ...]:
        return tuple(2 * np.pi * sfft.fftfreq(npts, d=side / npts)
                     for npts, side in zip(self.n, self.length))

    @cached_property
    def freqs(self) -> np.ndarray:
        """Angular frequencies with shape ``(d, *n)`` in FFT order."""
        return np.stack(np.meshgrid(*self.freq_axes, indexing="ij"))

    @cached_property
    def xi_squared(self) -> np.ndarray:
        return np.sum(self.freqs ** 2, axis=0)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True where any axis sits on its Nyquist index."""
        mask = np.zeros(self.n, dtype=bool)
        for axis, npts in enumerate(self.n):
            index = [slice(None)] * self.dim
            index[axis] = npts // 2
            mask[tuple(index)] = True
        return mask

    @property
    def lower(self) -> np.ndarray:
        return np.array([c - side / 2 for c, side in zip(self.center, self.length)])

    def same_as(self, other: "Grid") -> bool:
        return (self.n == other.n
                and np.allclose(self.length, other.length, rtol=0, atol=1e-14 * max(self.length))
                and np.allclose(self.center, other.center, rtol=0, atol=1e-14 * max(self.length)))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(tuple(npts * factor for npts in self.n), self.length, self.center)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "SpectralField":
        """Evaluate ``func`` on the ``(*n, d)`` point array and wrap the result."""
        return SpectralField(self, np.asarray(func(self.points), dtype=complex))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex samples on a grid, with the FFT image computed on demand."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise GridError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field contains non-finite values")
        object.__setattr__(self, "values", vals.astype(complex, copy=False))

    @cached_property
    def spectrum(self) -> np.ndarray:
        return sfft.fftn(self.values)

    def norm(self) -> float:
        return l2_norm(self)

    def with_values(self, values: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, values)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _require_same_grid(self, other)
        return SpectralField(self.grid, self.values + other.values)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _require_same_grid(self, other)
        return SpectralField(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.values * scalar)

    __rmul__ = __mul__


def _require_same_grid(*fields: SpectralField) -> None:
    first = fields[0].grid
    for other in fields[1:]:
        if not first.same_as(other.grid):
            raise GridError("fields live on different grids")


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(np.abs(f.values) ** 2)))


def inner(f: SpectralField, g: SpectralField) -> complex:
    """Discrete L2 pairing, conjugate-linear in the first slot."""
    _require_same_grid(f, g)
    return complex(f.grid.cell_volume * np.vdot(f.values, g.values))


def spectral_energy(f: SpectralField) -> float:
    """Squared L2 norm evaluated on the spectral side."""
    grid = f.grid
    return float(grid.cell_volume / grid.size * np.sum(np.abs(f.spectrum) ** 2))


def spectral_derivative(values: np.ndarray, grid: Grid, order: Sequence[int],
                        spectrum: np.ndarray | None = None) -> np.ndarray:
    """Multi-index derivative computed in Fourier space.

    Odd derivatives drop the Nyquist mode so real data stays real.
    """
    if spectrum is None:
        spectrum = sfft.fftn(values)
    multiplier = np.ones(grid.shape, dtype=complex)
    for axis, power in enumerate(order):
        if power == 0:
            continue
        xi = grid.freqs[axis]
        factor = (1j * xi) ** power
        if power % 2:
            index = [slice(None)] * grid.dim
            index[axis] = grid.n[axis] // 2
            factor = factor.copy()
            factor[tuple(index)] = 0.0
        multiplier = multiplier * factor
    return sfft.ifftn(multiplier * spectrum)


def _multi_indices(dim: int, max_order: int):
    for total in range(max_order + 1):
        for combo in itertools.product(range(total + 1), repeat=dim):
            if sum(combo) == total:
                yield combo


def sigma_norm(f: SpectralField, k: int) -> float:
    """Weighted Sobolev norm: sum of ||x^a d^b f|| over |a| + |b| <= k.

    Positions are measured from the grid centre and derivatives are spectral.
    """
    if not 0 <= k <= 7:
        raise GridError(f"sigma_norm order must lie in [0, 7], got {k}")
    grid = f.grid
    spectrum = f.spectrum
    rel = grid.coords - np.asarray(grid.center).reshape((grid.dim,) + (1,) * grid.dim)
    weight = np.sqrt(grid.cell_volume)
    total = 0.0
    for b in _multi_indices(grid.dim, k):
        deriv = spectral_derivative(f.values, grid, b, spectrum) if any(b) else f.values
        for a in _multi_indices(grid.dim, k - sum(b)):
            term = deriv
            for axis, power in enumerate(a):
                if power:
                    term = term * rel[axis] ** power
            total += weight * float(np.linalg.norm(term))
    return total


def displacement_samples(kernel: Callable[[np.ndarray], np.ndarray], grid: Grid) -> SpectralField:
    """Sample a kernel on displacements ``x - center`` of ``grid`` (for periodic_convolve)."""
    shift = np.asarray(grid.center)
    return SpectralField(grid, np.asarray(kernel(grid.points - shift), dtype=complex))


def periodic_convolve(kernel: SpectralField, density: SpectralField) -> SpectralField:
    """Torus convolution ``h^d sum_n K(x_m - x_n) rho(x_n)``.

    The kernel samples are read as displacements measured from the centre of
    the kernel's grid, so both arguments play symmetric roles.
    """
    if kernel.grid.n != density.grid.n or not np.allclose(kernel.grid.length, density.grid.length):
        raise GridError("kernel and density must share point counts and box lengths")
    grid = density.grid
    kernel_origin = sfft.ifftshift(kernel.values)
    out = sfft.ifftn(sfft.fftn(kernel_origin) * density.spectrum) * grid.cell_volume
    return SpectralField(grid, out)


class LinearConvolver:
    """Non-periodic convolution ``h^d sum_n K(y_m - y_n) rho(y_n)`` on a fixed grid.

    The kernel is tabulated on all displacements ``(-N+1 .. N-1) h`` and the sum
    is evaluated exactly with zero-padded FFTs, so slowly decaying or growing
    kernels do not wrap around the box.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.padded = tuple(2 * npts for npts in grid.n)
        offsets = [np.fft.fftfreq(2 * npts, d=1.0 / (2 * npts)) * h
                   for npts, h in zip(grid.n, grid.spacing)]
        # index N of each padded axis is never produced by a valid difference
        self.displacements = np.stack(np.meshgrid(*offsets, indexing="ij"), axis=-1)

    def kernel_spectrum(self, kernel: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        samples = np.asarray(kernel(self.displacements), dtype=complex)
        return sfft.fftn(samples)

    def apply(self, kernel_hat: np.ndarray, density: np.ndarray) -> np.ndarray:
        rho_hat = sfft.fftn(density, s=self.padded)
        full = sfft.ifftn(kernel_hat * rho_hat)
        index = tuple(slice(0, npts) for npts in self.grid.n)
        return full[index] * self.grid.cell_volume


def _wrap_points(points: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Return wrapped offsets from the lower corner and an inside-box mask."""
    lower = grid.lower
    lengths = np.asarray(grid.length)
    offset = points - lower
    inside = np.all((offset >= 0) & (offset < lengths), axis=-1)
    return np.mod(offset, lengths), inside


def _symmetric_coefficients(spectrum: np.ndarray, grid: Grid) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Split Nyquist modes evenly between +/- frequencies; return coefficients and wavenumbers."""
    coeffs = spectrum / grid.size
    wavenumbers = []
    for axis, (npts, side) in enumerate(zip(grid.n, grid.length)):
        nyq = npts // 2
        index = [slice(None)] * coeffs.ndim
        index[axis] = slice(nyq, nyq + 1)
        half = coeffs[tuple(index)] * 0.5
        coeffs = np.concatenate([coeffs, half], axis=axis)
        index[axis] = slice(nyq, nyq + 1)
        coeffs[tuple(index)] = half
        k = np.concatenate([np.fft.fftfreq(npts, d=1.0 / npts), [float(nyq)]])
        k[nyq] = -nyq
        wavenumbers.append(2 * np.pi * k / side)
    return coeffs, tuple(wavenumbers)


def spectral_interpolate(f: SpectralField, points: np.ndarray, outside: str = "wrap",
                         chunk: int = 4096) -> np.ndarray:
    """Trigonometric interpolant of ``f`` at arbitrary points (shape ``(M, d)`` or ``(M,)`` in 1-D).

    ``outside="wrap"`` evaluates the periodic extension; ``outside="zero"``
    returns 0 for points outside the box, which is the right continuation for
    decaying envelopes.  Direct O(N M) summation, chunked over points.
    """
    grid = f.grid
    pts = np.asarray(points, dtype=float)
    if grid.dim == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != grid.dim:
        raise GridError(f"points must have shape (M, {grid.dim})")
    if outside not in ("wrap", "zero"):
        raise GridError(f"unknown outside mode {outside!r}")
    offset, inside = _wrap_points(pts, grid)
    coeffs, wavenumbers = _symmetric_coefficients(f.spectrum, grid)
    result = np.zeros(len(pts), dtype=complex)
    active = np.nonzero(inside)[0] if outside == "zero" else np.arange(len(pts))
    for start in range(0, len(active), chunk):
        idx = active[start:start + chunk]
        partial = coeffs
        # contract one axis at a time: leading axes become the point axis
        for axis in range(grid.dim):
            phase = np.exp(1j * np.outer(offset[idx, axis], wavenumbers[axis]))
            if axis == 0:
                partial = phase @ partial.reshape(partial.shape[0], -1)
                partial = partial.reshape((len(idx),) + coeffs.shape[1:])
            else:
                partial = np.einsum("mk,mk...->m...", phase, partial)
        result[idx] = partial
    return result


def spectral_shift(f: SpectralField, shift: Sequence[float] | float, outside: str = "zero") -> np.ndarray:
    """Values of the interpolant at ``x_m + shift`` for every grid point, in O(N log N)."""
    grid = f.grid
    shift_vec = np.asarray(_as_tuple(shift, grid.dim, float))
    phase = np.exp(1j * np.tensordot(shift_vec, grid.freqs, axes=1))
    spec = f.spectrum * phase
    if grid.dim == 1:
        spec = spec.copy()
        nyq = grid.n[0] // 2
        # symmetric Nyquist treatment: average of the +/- continuations
        spec[nyq] = f.spectrum[nyq] * np.cos(np.pi * grid.n[0] * shift_vec[0] / grid.length[0])
    values = sfft.ifftn(spec)
    if outside == "zero":
        _, inside = _wrap_points(grid.points + shift_vec, grid)
        values = np.where(inside, values, 0.0)
    return values


def outer_mass_fraction(f: SpectralField) -> float:
    """Fraction of the squared norm lying outside the central half-box."""
    grid = f.grid
    rel = np.abs(grid.coords - np.asarray(grid.center).reshape((grid.dim,) + (1,) * grid.dim))
    quarter = np.asarray(grid.length).reshape((grid.dim,) + (1,) * grid.dim) / 4
    outer = np.any(rel > quarter, axis=0)
    density = np.abs(f.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    return float(np.sum(density[outer]) / total)


def check_truncation(f: SpectralField, level: float = TRUNCATION_WARN_LEVEL, label: str = "field") -> float:
    """Warn when too much mass sits outside the central half-box; return the fraction."""
    frac = outer_mass_fraction(f)
    if frac > level:
        warnings.warn(f"{label}: mass fraction {frac:.2e} outside the central half-box "
                      f"exceeds {level:.0e}", TruncationWarning, stacklevel=2)
    return frac


def power_of_two_at_least(value: float, minimum: int = 8) -> int:
    npts = max(int(minimum), 1)
    while npts < value:
        npts *= 2
    return npts
