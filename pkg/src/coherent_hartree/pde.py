"""Strang split-step Fourier solver for the semiclassical Hartree equation

    i eps psi_t + eps^2/2 Lap psi = V(t, x) psi + eps^alpha (K * |psi|^2) psi

on a periodic box.  ``alpha=None`` switches the interaction off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Grid, SpectralField, displacement_samples, l2_norm
from .potentials import Kernel, Potential, ZeroKernel

DEFAULT_DT_FACTOR = 0.1


class PDEError(RuntimeError):
    pass


@dataclass
class PDEConfig:
    eps: float
    alpha: float | None
    grid: Grid
    potential: Potential
    kernel: Kernel = field(default_factory=ZeroKernel)
    dt_factor: float = DEFAULT_DT_FACTOR

    def __post_init__(self):
        if not (self.eps > 0 and np.isfinite(self.eps)):
            raise PDEError("eps must be positive")
        if self.alpha is not None and self.alpha not in (0, 0.5, 1):
            raise PDEError(f"alpha must be 1, 1/2, 0 or None, got {self.alpha}")
        if self.dt_factor <= 0:
            raise PDEError("dt_factor must be positive")

    @property
    def dt(self) -> float:
        return self.dt_factor * self.eps

    @property
    def coupling(self) -> float:
        """Prefactor eps^alpha of the interaction (0 for the linear equation)."""
        if self.alpha is None or self.kernel.is_zero:
            return 0.0
        return float(self.eps ** self.alpha)


@dataclass
class PDEState:
    t: float
    psi: np.ndarray


@dataclass
class PDERun:
    times: np.ndarray
    snapshots: list[SpectralField]
    masses: np.ndarray
    steps: int
    observations: list[dict] = field(default_factory=list)

    @property
    def max_mass_drift(self) -> float:
        return float(np.max(np.abs(self.masses - self.masses[0])) / self.masses[0])


class HartreeSolver:
    """Holds the cached kernel transform and potential samples for one configuration."""

    def __init__(self, config: PDEConfig):
        self.config = config
        grid = config.grid
        self.grid = grid
        self._axes = tuple(range(grid.dim))
        self._xi2 = grid.xi_squared
        self._kernel_hat = None
        if config.coupling:
            samples = displacement_samples(config.kernel.value, grid).values
            self._kernel_hat = sfft.fftn(sfft.ifftshift(samples)) * grid.cell_volume
        self._static_V = None
        if not config.potential.time_dependent:
            self._static_V = config.potential.value(0.0, grid.points)

    def external(self, t: float) -> np.ndarray:
        if self._static_V is not None:
            return self._static_V
        return self.config.potential.value(t, self.grid.points)

    def interaction(self, psi: np.ndarray) -> np.ndarray:
        """eps^alpha (K * |psi|^2) on the torus."""
        if self._kernel_hat is None:
            return np.zeros(self.grid.shape)
        dens_hat = sfft.fftn(np.abs(psi) ** 2)
        return self.config.coupling * np.real(sfft.ifftn(self._kernel_hat * dens_hat))

    def _half_potential(self, psi, t, dt, nonlinear):
        return psi * np.exp(-0.5j * dt / self.config.eps * (self.external(t) + nonlinear))

    def _kinetic(self, psi, dt):
        mult = np.exp(-0.5j * self.config.eps * dt * self._xi2)
        return sfft.ifftn(mult * sfft.fftn(psi))

    def step(self, state: PDEState, dt: float | None = None) -> PDEState:
        """One symmetric step; a negative ``dt`` runs the step backwards."""
        dt = self.config.dt if dt is None else dt
        psi, _ = self._advance(state.psi, state.t, dt, self.interaction(state.psi))
        return PDEState(state.t + dt, psi)

    def _advance(self, psi, t, dt, nonlinear):
        psi = self._half_potential(psi, t, dt, nonlinear)
        psi = self._kinetic(psi, dt)
        nonlinear = self.interaction(psi)
        psi = self._half_potential(psi, t + dt, dt, nonlinear)
        return psi, nonlinear

    def run(self, psi0: SpectralField, snapshot_times: Sequence[float],
            observers: Sequence[Callable[[PDEState], dict]] = ()) -> PDERun:
        """Integrate from t = 0 and record the field at each requested time.

        Step sizes are shortened per interval so every snapshot time is hit exactly.
        """
        if not psi0.grid.same_as(self.grid):
            raise PDEError("initial data is not on the solver grid")
        times = np.asarray(sorted(snapshot_times), dtype=float)
        if times[0] < 0:
            raise PDEError("snapshot times must be non-negative")
        psi = psi0.values.copy()
        t = 0.0
        nonlinear = self.interaction(psi)
        snaps, masses, obs = [], [], []
        steps = 0
        for target in times:
            span = target - t
            n = int(np.ceil(span / self.config.dt - 1e-9)) if span > 0 else 0
            for k in range(n):
                dt = span / n
                psi, nonlinear = self._advance(psi, t, dt, nonlinear)
                t = t + dt
                steps += 1
            t = float(target)
            if not np.all(np.isfinite(psi)):
                raise PDEError(f"non-finite field at t = {t:.6g}")
            field_t = SpectralField(self.grid, psi.copy())
            snaps.append(field_t)
            masses.append(l2_norm(field_t) ** 2)
            state = PDEState(t, psi)
            record = {}
            for observer in observers:
                record.update(observer(state))
            obs.append(record)
        return PDERun(times, snaps, np.array(masses), steps, obs)

    def energy(self, state: PDEState) -> float:
        """eps^2/2 ||grad psi||^2 + int V |psi|^2 + eps^alpha/2 int (K * |psi|^2) |psi|^2."""
        grid = self.grid
        psi = state.psi
        spec = sfft.fftn(psi)
        kinetic = 0.5 * self.config.eps ** 2 * grid.cell_volume / grid.size * float(np.sum(self._xi2 * np.abs(spec) ** 2))
        dens = np.abs(psi) ** 2
        potential = grid.cell_volume * float(np.sum(self.external(state.t) * dens))
        interaction = 0.5 * grid.cell_volume * float(np.sum(self.interaction(psi) * dens))
        return kinetic + potential + interaction


def energy_conserved(config: PDEConfig) -> bool:
    """Energy is invariant for a time-independent potential and an even kernel."""
    return (not config.potential.time_dependent) and (config.coupling == 0 or config.kernel.even)
