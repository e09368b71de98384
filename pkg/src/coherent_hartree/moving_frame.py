"""Exact envelope dynamics in the frame of each packet, at finite eps.

Writing the Hartree solution as a sum of packets with centres, actions and
envelopes ``tu_j`` (times a phase ``theta_eps_j``) gives an envelope system
with Taylor remainders of V and K in place of their quadratic parts, plus a
cross term built from the rectangle integral

    I(y) = int K(sqrt(eps)(y - z)) exp(i z.dp/sqrt(eps)) tu_j(z) conj(tu_partner)(z + dq/sqrt(eps)) dz

with dq = q_j - q_partner and dp = p_j - p_partner.  The cross term enters as
``c 2 Re W_j`` where W_j is I times the phase
exp(i (S_j - S_partner + p_partner.(q_partner - q_j)) / eps + i (theta_j - theta_partner)),
and c = 1/eps in the zero regime, 1/sqrt(eps) in the half regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .classical import ActionIntegrals, Trajectory, separation_eta
from .corrector import quadratic_convolution
from .envelopes import EnvelopeError, EnvelopeHistory, first_moments, step_schedule
from .grid import Grid, LinearConvolver, SpectralField, outer_mass_fraction, spectral_shift
from .potentials import Kernel, Potential, taylor_remainder_K, taylor_remainder_V


class MovingFrameError(RuntimeError):
    pass


SHIFT_MASS_LEVEL = 1e-8


# ---------------------------------------------------------------------------
# rectangle integral


def _shifted_product(u1: SpectralField, u2: SpectralField, eps: float, dq, dp) -> np.ndarray:
    grid = u1.grid
    root = np.sqrt(eps)
    dq = np.atleast_1d(np.asarray(dq, dtype=float))
    dp = np.atleast_1d(np.asarray(dp, dtype=float))
    shift = dq / root
    if np.any(shift != 0):
        # zero extension of the shifted partner is only valid if it has no mass near the box edge
        frac = outer_mass_fraction(u2)
        if frac > SHIFT_MASS_LEVEL:
            raise MovingFrameError(f"partner envelope has mass fraction {frac:.2e} near the box edge; "
                                   "its shift cannot be represented on this grid")
    if np.any(np.abs(shift) >= np.asarray(grid.length)):
        return np.zeros(grid.shape, dtype=complex)
    partner = spectral_shift(u2, shift, outside="zero")
    phase = np.exp(1j * np.tensordot(dp / root, grid.coords, axes=1))
    return phase * u1.values * np.conj(partner)


def rectangle_term(u1: SpectralField, u2: SpectralField, kernel: Callable[[np.ndarray], np.ndarray],
                   eps: float, dq, dp, method: str = "direct", chunk: int = 512) -> np.ndarray:
    """I(y) on the grid of ``u1``; ``kernel`` acts on displacement arrays ``(..., d)``.

    ``method="direct"`` sums the quadrature in O(N^2) (one dimension);
    ``method="fft"`` uses a zero-padded linear convolution.
    """
    if not u1.grid.same_as(u2.grid):
        raise MovingFrameError("envelopes must share a grid")
    if eps <= 0:
        raise MovingFrameError("the rectangle term needs eps > 0")
    grid = u1.grid
    f = _shifted_product(u1, u2, eps, dq, dp)
    root = np.sqrt(eps)
    if method == "fft":
        conv = LinearConvolver(grid)
        return conv.apply(conv.kernel_spectrum(lambda w: kernel(root * w)), f)
    if method != "direct" or grid.dim != 1:
        raise MovingFrameError("direct summation is implemented in one dimension; use method='fft'")
    y = grid.axes[0]
    out = np.empty(grid.shape, dtype=complex)
    active = np.nonzero(f)[0]
    if active.size == 0:
        out[:] = 0.0
        return out
    fz = f[active]
    z = y[active]
    for start in range(0, len(y), chunk):
        block = y[start:start + chunk]
        weights = kernel((root * (block[:, None] - z[None, :]))[..., None])
        out[start:start + chunk] = grid.cell_volume * (weights @ fz)
    return out


@dataclass
class RectangleDecay:
    eps: np.ndarray
    sup: np.ndarray
    used: np.ndarray
    branch: str
    eta: float
    fit: object


def rectangle_decay_fit(u1: SpectralField, u2: SpectralField, kernel: Callable, eps_list: Sequence[float],
                        dq, dp, floor: float = 1e-13, method: str = "direct",
                        traj: Trajectory | None = None) -> RectangleDecay:
    """Fit the decay rate of sup_y |I| over an eps sweep.

    Values at or below ``floor * ||u1|| ||u2||`` sit at roundoff level and are
    excluded from the fit.  The separation is taken from ``traj`` when given,
    otherwise from the constant offsets.
    """
    from .experiments import fit_slope

    dq = np.atleast_1d(np.asarray(dq, dtype=float))
    dp = np.atleast_1d(np.asarray(dp, dtype=float))
    eta = separation_eta(traj) if traj is not None else float(max(np.linalg.norm(dq), np.linalg.norm(dp)))
    if eta <= 0:
        raise MovingFrameError("packets are not separated in phase space (eta = 0)")
    branch = "position" if np.linalg.norm(dq) >= np.linalg.norm(dp) else "momentum"
    eps_arr = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    sups = np.array([np.max(np.abs(rectangle_term(u1, u2, kernel, e, dq, dp, method))) for e in eps_arr])
    scale = u1.norm() * u2.norm()
    used = sups > floor * scale
    fit = fit_slope(eps_arr[used], sups[used], min_points=2) if np.count_nonzero(used) >= 2 else None
    return RectangleDecay(eps_arr, sups, used, branch, eta, fit)


# ---------------------------------------------------------------------------
# moving-frame envelope solver


@dataclass
class MovingFrameResult:
    eps: float
    history: EnvelopeHistory
    theta: np.ndarray
    rate: np.ndarray
    coupling: np.ndarray

    def theta_at(self, t: float) -> np.ndarray:
        return self.theta[self.history.index_of(t)]


class _KernelRemainders:
    """Taylor-remainder kernels of K as linear convolutions on the y-grid."""

    def __init__(self, kernel: Kernel, grid: Grid, eps: float):
        self.kernel = kernel
        self.grid = grid
        self.eps = eps
        self.conv = LinearConvolver(grid) if eps > 0 else None
        zero = np.zeros(grid.dim)
        self.hess0 = kernel.hess(zero)
        self.diag_hat = None
        if eps > 0:
            self.diag_hat = self.conv.kernel_spectrum(lambda w: taylor_remainder_K(kernel, zero, w, eps))

    def diagonal(self, dens: np.ndarray) -> np.ndarray:
        if self.eps == 0:
            return quadratic_convolution(np.broadcast_to(self.hess0, (dens.shape[0],) + self.hess0.shape), dens, self.grid)
        return np.stack([self.conv.apply(self.diag_hat, d).real for d in dens])

    def cross(self, dens_partner: np.ndarray, shifts: np.ndarray) -> np.ndarray:
        """Remainder kernels at shift dq_j convolved with the partner densities."""
        if self.eps == 0:
            hess = np.stack([self.kernel.hess(s) for s in shifts])
            return quadratic_convolution(hess, dens_partner, self.grid)
        out = []
        for d, s in zip(dens_partner, shifts):
            hat = self.conv.kernel_spectrum(lambda w: taylor_remainder_K(self.kernel, s, w, self.eps))
            out.append(self.conv.apply(hat, d).real)
        return np.stack(out)


def solve_moving_frame(initial: np.ndarray, grid: Grid, traj: Trajectory, potential: Potential,
                       kernel: Kernel, reference: EnvelopeHistory, actions: ActionIntegrals, eps: float,
                       regime: str = "zero", decoupled: bool = False, store_every: int = 1) -> MovingFrameResult:
    """Integrate the finite-eps envelope system with Strang splitting.

    ``reference`` holds the limiting envelopes u_j at every step; their first
    moments define the phases theta_eps (accumulated with the trapezoid rule)
    and, in the half regime, the time-only moment potentials.  ``eps = 0``
    reproduces the limiting envelope system exactly (no cross term, no phase).
    """
    if regime not in ("zero", "half"):
        raise MovingFrameError(f"unknown regime {regime!r}")
    if eps < 0:
        raise MovingFrameError("eps must be non-negative")
    if traj.coupled != (regime == "zero"):
        raise MovingFrameError("zero regime needs coupled trajectories, half regime the standard flow")
    times = reference.times
    steps = len(times) - 1
    T = float(times[-1])
    dt = T / steps
    check_times, _ = step_schedule(T, dt)
    if len(check_times) != len(times) or not np.allclose(check_times, times):
        raise EnvelopeError("reference envelopes must be stored at every step")
    if steps % store_every:
        raise MovingFrameError("store_every must divide the number of steps")
    n_pk = initial.shape[0]
    root = np.sqrt(eps)
    weight = 1.0 if regime == "zero" else root
    cross_scale = (1.0 / eps if regime == "zero" else 1.0 / root) if eps > 0 else 0.0
    remainders = _KernelRemainders(kernel, grid, eps)
    zero_vec = np.zeros(grid.dim)
    grad0 = kernel.grad(zero_vec)
    masses = traj.masses[:n_pk]
    G_ref = first_moments(reference.fields, grid)
    if not np.allclose(actions.times, times):
        raise MovingFrameError("actions and reference envelopes use different schedules")
    S_eps = actions.at(eps) if eps > 0 else None
    axes = tuple(range(1, 1 + grid.dim))
    kin_half = np.exp(-0.25j * grid.xi_squared * dt)
    y = grid.points

    mids = times[:-1] + dt / 2
    q_mid, p_mid = traj.state_at(mids)
    q_nodes, _ = traj.state_at(times)

    def cross_gradients(q):
        if n_pk < 2:
            return np.zeros((1, grid.dim))
        dq = q[0] - q[1]
        return np.stack([kernel.grad(dq), kernel.grad(-dq)])

    def theta_rate(state, k):
        if regime == "zero" and eps == 0:
            return np.zeros(n_pk)
        diff = first_moments(state, grid) - G_ref[k]
        gc = cross_gradients(q_nodes[k])
        rate = diff @ grad0
        if n_pk == 2:
            rate = rate + np.einsum("pa,pa->p", gc, diff[::-1])
        return rate / root if regime == "zero" else rate

    def potential_at(n, w, theta_mid):
        t = mids[n]
        q = q_mid[n]
        pot = np.stack([taylor_remainder_V(potential, t, q[j], y, eps) for j in range(n_pk)])
        dens = np.abs(w) ** 2
        shifts = np.stack([q[0] - q[1], q[1] - q[0]]) if n_pk == 2 else None
        nonlocal_part = remainders.diagonal(dens)
        if n_pk == 2:
            nonlocal_part = nonlocal_part + remainders.cross(dens[::-1], shifts)
        pot = pot + weight * nonlocal_part
        if regime == "half":
            force = np.outer(masses, grad0)
            G_mid = 0.5 * (G_ref[n] + G_ref[n + 1])
            const = G_mid @ grad0
            if n_pk == 2:
                gc = cross_gradients(q)
                force = force + masses[::-1, None] * gc
                const = const + np.einsum("pa,pa->p", gc, G_mid[::-1])
            pot = pot + np.einsum("...a,pa->p...", y, force) - const.reshape((-1,) + (1,) * grid.dim)
        coupling = 0.0
        if n_pk == 2 and cross_scale and not decoupled:
            p = p_mid[n]
            S_mid = 0.5 * (S_eps[n] + S_eps[n + 1])
            for j in range(2):
                k = 1 - j
                dq = q[j] - q[k]
                dp = p[j] - p[k]
                integral = rectangle_term(SpectralField(grid, w[j]), SpectralField(grid, w[k]),
                                          kernel.value, eps, dq, dp, method="fft")
                phase = (S_mid[j] - S_mid[k] + p[k] @ (q[k] - q[j])) / eps + theta_mid[j] - theta_mid[k]
                extra = cross_scale * 2 * np.real(np.exp(1j * phase) * integral)
                pot[j] = pot[j] + extra
                coupling = max(coupling, float(np.sqrt(grid.cell_volume * np.sum(np.abs(extra * w[j]) ** 2))))
        return pot, coupling

    state = np.array(initial, dtype=complex)
    theta = np.zeros(n_pk)
    rate = theta_rate(state, 0)
    stored, stored_theta, stored_rate = [state.copy()], [theta.copy()], [rate.copy()]
    couplings = []
    for n in range(steps):
        w = sfft.ifftn(kin_half * sfft.fftn(state, axes=axes), axes=axes)
        pot, coupling = potential_at(n, w, theta + 0.5 * dt * rate)
        couplings.append(coupling)
        w = w * np.exp(-1j * dt * pot)
        state = sfft.ifftn(kin_half * sfft.fftn(w, axes=axes), axes=axes)
        if not np.all(np.isfinite(state)):
            raise MovingFrameError(f"non-finite envelope at t = {times[n + 1]:.6g}")
        new_rate = theta_rate(state, n + 1)
        theta = theta + 0.5 * dt * (rate + new_rate)
        rate = new_rate
        if (n + 1) % store_every == 0:
            stored.append(state.copy())
            stored_theta.append(theta.copy())
            stored_rate.append(rate.copy())
    history = EnvelopeHistory(grid, times[::store_every], np.stack(stored), f"moving-frame eps={eps:g}")
    return MovingFrameResult(eps, history, np.stack(stored_theta), np.stack(stored_rate), np.array(couplings))
