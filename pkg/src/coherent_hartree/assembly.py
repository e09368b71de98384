"""Building physical-space wave functions from packet data, and windowed observables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Grid, GridError, SpectralField, l2_norm, outer_mass_fraction, spectral_interpolate

SUPPORT_LEVEL = 1e-8
POINTS_PER_WAVELENGTH = 8


class ResolutionError(ValueError):
    """The x-grid cannot resolve the semiclassical oscillations."""


class SupportError(ValueError):
    """Initial packets are not contained in the computational box."""


@dataclass
class PacketFrame:
    """One packet at one time: centre, action, envelope on its y-grid and extra phase."""

    q: np.ndarray
    p: np.ndarray
    action: float
    envelope: SpectralField
    theta: float = 0.0


def max_spacing(eps: float, p_max: float) -> float:
    """Largest admissible cell size: eight points per wavelength 2 pi eps / |p|."""
    if p_max <= 0:
        return np.inf
    return 2 * np.pi * eps / (POINTS_PER_WAVELENGTH * p_max)


def check_resolution(grid: Grid, eps: float, p_max: float) -> None:
    h = max(grid.spacing)
    limit = max_spacing(eps, p_max)
    if h > limit * (1 + 1e-12):
        raise ResolutionError(f"cell size {h:.3e} exceeds {limit:.3e} needed for eps={eps:g}, |p|max={p_max:.3g}")


def semiclassical_grid(eps: float, p_max: float, half_extent: float, center=0.0, dim: int = 1,
                       max_points: int = 1 << 16) -> Grid:
    """Power-of-two box holding ``[c - half_extent, c + half_extent]`` in its central half, resolved for eps."""
    side = 1.0
    while side < 4 * half_extent:
        side *= 2
    h = max_spacing(eps, p_max)
    npts = 8
    while side / npts > h:
        npts *= 2
    if npts > max_points:
        raise ResolutionError(f"eps={eps:g} would need {npts} points per axis")
    return Grid.uniform(npts, side, center, dim)


def _profile_values(profile: Callable, points: np.ndarray) -> np.ndarray:
    return np.asarray(profile(points), dtype=complex)


def initial_data(profiles: Sequence[Callable], q0, p0, eps: float, grid: Grid) -> SpectralField:
    """eps^{-d/4} sum_j a_j((x - q_j)/sqrt(eps)) exp(i (x - q_j) . p_j / eps)."""
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    if q0.shape[1] != grid.dim:
        q0, p0 = q0.T, p0.T
    root = np.sqrt(eps)
    x = grid.points
    psi = np.zeros(grid.shape, dtype=complex)
    for prof, q, p in zip(profiles, q0, p0):
        rel = x - q
        psi += _profile_values(prof, rel / root) * np.exp(1j * (rel @ p) / eps)
    field = SpectralField(grid, psi * eps ** (-grid.dim / 4))
    frac = outer_mass_fraction(field)
    if frac > SUPPORT_LEVEL:
        raise SupportError(f"initial data has mass fraction {frac:.2e} outside the central half-box")
    return field


def assemble(frames: Sequence[PacketFrame], eps: float, grid: Grid, with_theta: bool = True) -> SpectralField:
    """Sum of eps^{-d/4} u_j((x - q_j)/sqrt(eps)) exp(i (S_j + p_j.(x - q_j))/eps + i theta_j).

    Envelopes are continued by zero outside their own boxes.
    """
    if not frames:
        raise GridError("no packets to assemble")
    p_max = max(float(np.linalg.norm(f.p)) for f in frames)
    check_resolution(grid, eps, p_max)
    root = np.sqrt(eps)
    x = grid.points.reshape(-1, grid.dim)
    psi = np.zeros(grid.size, dtype=complex)
    for frame in frames:
        rel = x - np.asarray(frame.q, dtype=float)
        env = spectral_interpolate(frame.envelope, rel / root, outside="zero")
        phase = (frame.action + rel @ np.asarray(frame.p, dtype=float)) / eps
        if with_theta:
            phase = phase + frame.theta
        nonzero = env != 0
        psi[nonzero] += env[nonzero] * np.exp(1j * phase[nonzero])
    return SpectralField(grid, psi.reshape(grid.shape) * eps ** (-grid.dim / 4))


def l2_error(numerical: SpectralField, approximate: SpectralField) -> float:
    if not numerical.grid.same_as(approximate.grid):
        raise GridError("fields live on different grids")
    return l2_norm(numerical - approximate)


def smooth_window(r: np.ndarray) -> np.ndarray:
    """C-infinity window: 1 for r <= 1/2, 0 for r >= 1, smooth in between."""
    r = np.abs(np.asarray(r, dtype=float))

    def bump(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    s = np.clip(2 * (1 - r), 0.0, 1.0)
    a, b = bump(s), bump(1 - s)
    return a / (a + b)


@dataclass
class PacketObservables:
    mass: float
    centroid: np.ndarray
    momentum: np.ndarray


def packet_observables(psi: SpectralField, centers, eps: float, radius: float | None = None) -> list[PacketObservables]:
    """Mass, position centroid and eps-scaled momentum centroid inside smooth windows.

    The default radius is a third of the centre separation, which keeps two
    windows disjoint.
    """
    grid = psi.grid
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if radius is None:
        if len(centers) < 2:
            raise GridError("a radius is required for a single window")
        radius = float(np.linalg.norm(centers[0] - centers[1])) / 3
    if len(centers) == 2 and np.linalg.norm(centers[0] - centers[1]) <= 2 * radius:
        raise GridError("observation windows overlap")
    if radius <= 0:
        raise GridError("window radius must be positive")
    x = grid.points
    out = []
    for c in centers:
        w = smooth_window(np.linalg.norm(x - c, axis=-1) / radius)
        local = w * psi.values
        dens = np.abs(local) ** 2
        mass = grid.cell_volume * float(np.sum(dens))
        if mass == 0.0:
            out.append(PacketObservables(0.0, np.zeros(grid.dim), np.zeros(grid.dim)))
            continue
        centroid = grid.cell_volume * (dens.reshape(-1) @ x.reshape(-1, grid.dim)) / mass
        spec = np.abs(sfft.fftn(local)) ** 2
        momentum = eps * (grid.freqs.reshape(grid.dim, -1) @ spec.reshape(-1)) / float(np.sum(spec))
        out.append(PacketObservables(mass, centroid, momentum))
    return out
