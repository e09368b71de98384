"""First-order corrector of the zero-regime envelopes and the phase it induces.

The corrector w_j solves, with w_j(0) = 0,

    i w_t + 1/2 Lap w = P_j w + 2 (Q0 * Re(conj(u_j) w_j)) u_j
                        + 2 (Q_j * Re(conj(u_partner) w_partner)) u_j + S_j,

where P_j is the real potential of the zero-regime envelope equation,
Q0(z) = 1/2 <z, Hess K(0) z>, Q_j(z) = 1/2 <z, Hess K(dq_j) z>, and the source
S_j = (C_V + C_0 * |u_j|^2 + C_j * |u_partner|^2) u_j collects the cubic Taylor
terms of V at q_j and of K at 0 and at dq_j.  Convolutions against polynomial
kernels are evaluated exactly from moments of the density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .classical import Trajectory, cumulative_integral
from .envelopes import EnvelopeError, EnvelopeHistory
from .grid import Grid
from .potentials import Kernel, Potential


class CorrectorError(RuntimeError):
    pass


def density_moments(rho: np.ndarray, grid: Grid, order: int) -> list[np.ndarray]:
    """Moments int z^{(k)} rho(z) dz for k = 0..order of ``rho`` with shape ``(P, *shape)``."""
    flat = rho.reshape(rho.shape[0], -1) * grid.cell_volume
    Y = grid.coords.reshape(grid.dim, -1)
    out = [np.sum(flat, axis=1)]
    if order >= 1:
        out.append(flat @ Y.T)
    if order >= 2:
        out.append(np.einsum("pn,an,bn->pab", flat, Y, Y))
    if order >= 3:
        out.append(np.einsum("pn,an,bn,cn->pabc", flat, Y, Y, Y))
    return out


def quadratic_convolution(hessians: np.ndarray, rho: np.ndarray, grid: Grid) -> np.ndarray:
    """(Q * rho)(y) for Q(z) = 1/2 <z, H_p z>, one Hessian per leading index of ``rho``."""
    m0, m1, m2 = density_moments(rho, grid, 2)
    Y = grid.coords
    quad = 0.5 * np.einsum("a...,pab,b...->p...", Y, hessians, Y) * m0.reshape((-1,) + (1,) * grid.dim)
    lin = np.einsum("pab,pb,a...->p...", hessians, m1, Y)
    const = 0.5 * np.einsum("pab,pab->p", hessians, m2)
    return quad - lin + const.reshape((-1,) + (1,) * grid.dim)


def cubic_convolution(tensors: np.ndarray, rho: np.ndarray, grid: Grid) -> np.ndarray:
    """(C * rho)(y) for C(z) = 1/6 T_p[z, z, z]."""
    m0, m1, m2, m3 = density_moments(rho, grid, 3)
    Y = grid.coords
    shape = (-1,) + (1,) * grid.dim
    t3 = np.einsum("pabc,a...,b...,c...->p...", tensors, Y, Y, Y) * m0.reshape(shape)
    t2 = np.einsum("pabc,a...,b...,pc->p...", tensors, Y, Y, m1)
    t1 = np.einsum("pabc,a...,pbc->p...", tensors, Y, m2)
    t0 = np.einsum("pabc,pabc->p", tensors, m3).reshape(shape)
    return (t3 - 3 * t2 + 3 * t1 - t0) / 6.0


def cubic_potential(tensors: np.ndarray, grid: Grid) -> np.ndarray:
    """1/6 T_p[y, y, y] on the grid."""
    Y = grid.coords
    return np.einsum("pabc,a...,b...,c...->p...", tensors, Y, Y, Y) / 6.0


@dataclass
class CorrectorCoefficients:
    """Taylor data at one time: Hessians and third derivatives along the trajectories."""

    hess_V: np.ndarray
    hess_K0: np.ndarray
    hess_cross: np.ndarray
    third_V: np.ndarray
    third_K0: np.ndarray
    third_cross: np.ndarray


def corrector_coefficients(traj: Trajectory, potential: Potential, kernel: Kernel, t: float) -> CorrectorCoefficients:
    q, _ = traj.state_at(t)
    n_pk, d = q.shape
    zero = np.zeros(d)
    H0 = np.broadcast_to(kernel.hess(zero), (n_pk, d, d))
    T0 = np.broadcast_to(kernel.third(zero), (n_pk, d, d, d))
    if n_pk == 2:
        dq = q[0] - q[1]
        Hc = np.stack([kernel.hess(dq), kernel.hess(-dq)])
        Tc = np.stack([kernel.third(dq), kernel.third(-dq)])
    else:
        Hc = np.zeros((1, d, d))
        Tc = np.zeros((1, d, d, d))
    return CorrectorCoefficients(potential.hess(t, q), H0, Hc, potential.third(t, q), T0, Tc)


def _partner(arr: np.ndarray) -> np.ndarray:
    return arr[::-1] if arr.shape[0] == 2 else np.zeros_like(arr)


def envelope_potential(u: np.ndarray, grid: Grid, co: CorrectorCoefficients) -> np.ndarray:
    """V^0_j + Q0 * |u_j|^2 + Q_j * |u_partner|^2 (real, shape ``(P, *shape)``)."""
    Y = grid.coords
    dens = np.abs(u) ** 2
    pot = 0.5 * np.einsum("a...,pab,b...->p...", Y, co.hess_V, Y)
    pot = pot + quadratic_convolution(co.hess_K0, dens, grid)
    if u.shape[0] == 2:
        pot = pot + quadratic_convolution(co.hess_cross, dens[::-1], grid)
    return pot


def corrector_source(u: np.ndarray, grid: Grid, co: CorrectorCoefficients) -> np.ndarray:
    """(C_V + C_0 * |u_j|^2 + C_j * |u_partner|^2) u_j."""
    dens = np.abs(u) ** 2
    mult = cubic_potential(co.third_V, grid) + cubic_convolution(co.third_K0, dens, grid)
    if u.shape[0] == 2:
        mult = mult + cubic_convolution(co.third_cross, dens[::-1], grid)
    return mult * u


def linearised_coupling(w: np.ndarray, u: np.ndarray, grid: Grid, co: CorrectorCoefficients) -> np.ndarray:
    """2 (Q0 * Re(conj(u_j) w_j)) u_j + 2 (Q_j * Re(conj(u_partner) w_partner)) u_j."""
    rho = 2 * np.real(np.conj(u) * w)
    mult = quadratic_convolution(co.hess_K0, rho, grid)
    if u.shape[0] == 2:
        mult = mult + quadratic_convolution(co.hess_cross, rho[::-1], grid)
    return mult * u


def theta_rate(w: np.ndarray, u: np.ndarray, grid: Grid, grad0: np.ndarray, grad_cross: np.ndarray) -> np.ndarray:
    """grad K(0) . 2 Re int z conj(u_j) w_j + grad K(dq_j) . 2 Re int z conj(u_partner) w_partner."""
    mixed = 2 * np.real(np.conj(u) * w)
    m1 = density_moments(mixed, grid, 1)[1]
    rate = m1 @ grad0
    if u.shape[0] == 2:
        rate = rate + np.einsum("pa,pa->p", grad_cross, m1[::-1])
    return rate


@dataclass
class CorrectorResult:
    grid: Grid
    times: np.ndarray
    fields: np.ndarray
    theta: np.ndarray
    rate: np.ndarray

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise CorrectorError(f"time {t} is not on the corrector schedule")
        return k

    def theta_at(self, t: float) -> np.ndarray:
        return self.theta[self.index_of(t)]


def _cross_gradients(traj: Trajectory, kernel: Kernel, times: np.ndarray) -> np.ndarray:
    q, _ = traj.state_at(times)
    if q.shape[1] < 2:
        return np.zeros_like(q)
    dq = q[:, 0] - q[:, 1]
    return np.stack([kernel.grad(dq), kernel.grad(-dq)], axis=1)


def solve_corrector(u: EnvelopeHistory, traj: Trajectory, potential: Potential, kernel: Kernel,
                    source_scale: float = 1.0) -> CorrectorResult:
    """Integrate the corrector with step 2 dt on the envelope schedule.

    ``u`` must be stored at every envelope step; odd samples serve as exact
    midpoints.  Each step is a Strang splitting whose non-kinetic part is an
    exponential midpoint update of w' = -i (P w + L(w) + S).
    """
    times_env = u.times
    n_env = len(times_env) - 1
    if n_env % 2:
        raise CorrectorError("the envelope history needs an even number of steps")
    dt_env = np.diff(times_env)
    if not np.allclose(dt_env, dt_env[0], rtol=1e-9):
        raise EnvelopeError("envelope history is not uniformly sampled")
    grid = u.grid
    step = 2 * dt_env[0]
    axes = tuple(range(1, 1 + grid.dim))
    kin_half = np.exp(-0.25j * grid.xi_squared * step)
    grad0 = kernel.grad(np.zeros(grid.dim))
    times = times_env[::2]
    grads = _cross_gradients(traj, kernel, times)
    w = np.zeros_like(u.fields[0])
    stored = [w.copy()]
    rates = [theta_rate(w, u.fields[0], grid, grad0, grads[0])]
    for k in range(n_env // 2):
        mid = u.fields[2 * k + 1]
        co = corrector_coefficients(traj, potential, kernel, times_env[2 * k + 1])
        pot = envelope_potential(mid, grid, co)
        src = source_scale * corrector_source(mid, grid, co)
        half = np.exp(-0.5j * step * pot)
        w = sfft.ifftn(kin_half * sfft.fftn(w, axes=axes), axes=axes)
        w_half = half * w - 0.5j * step * (linearised_coupling(w, mid, grid, co) + src)
        w = half * half * w - 1j * step * half * (linearised_coupling(w_half, mid, grid, co) + src)
        w = sfft.ifftn(kin_half * sfft.fftn(w, axes=axes), axes=axes)
        if not np.all(np.isfinite(w)):
            raise CorrectorError(f"non-finite corrector at t = {times[k + 1]:.6g}")
        stored.append(w.copy())
        rates.append(theta_rate(w, u.fields[2 * k + 2], grid, grad0, grads[k + 1]))
    rate = np.stack(rates)
    return CorrectorResult(grid, times, np.stack(stored), cumulative_integral(rate, times), rate)


def theta_limit(corr: CorrectorResult) -> np.ndarray:
    """The limiting phase theta_j(t) on the corrector schedule."""
    return corr.theta


def _initial_source(a: np.ndarray, grid: Grid, traj: Trajectory, potential: Potential,
                    kernel: Kernel) -> tuple[np.ndarray, CorrectorCoefficients]:
    co = corrector_coefficients(traj, potential, kernel, float(traj.times[0]))
    return corrector_source(a, grid, co), co


def theta_ddot_zero(a: np.ndarray, grid: Grid, traj: Trajectory, potential: Potential, kernel: Kernel,
                    form: str = "consistent") -> np.ndarray:
    """Second time derivative of theta_j at t = 0.

    ``form="consistent"`` differentiates the phase definition twice and uses
    w(0) = 0 and i w_t(0) = S_j(0):
        grad K(0) . 2 Re int z conj(a_j) (-i S_j) + grad K(dq_j) . 2 Re int z conj(a_p) (-i S_p).
    Since S_j(0) is a real multiple of a_j both integrals vanish identically.

    ``form="cross_amplitude"`` evaluates the three-term expression
        grad K(dq_j) [int z C_V 2 Im(conj(a_p) a_j) + int (C_0 * |a_j|^2) 2 Im(conj(a_p) a_j)
                      + int (C_j * |a_p|^2) 2 Im(conj(a_p) a_j)]
    in one dimension.  It pairs amplitudes of different packets, which the
    corrector equation never does, and does not match finite differences of
    theta (kept for comparison only).
    """
    src, co = _initial_source(a, grid, traj, potential, kernel)
    grad0 = kernel.grad(np.zeros(grid.dim))
    grads = _cross_gradients(traj, kernel, traj.times[:1])[0]
    if form == "consistent":
        return theta_rate(-1j * src, a, grid, grad0, grads)
    if form != "cross_amplitude":
        raise CorrectorError(f"unknown form {form!r}")
    if grid.dim != 1 or a.shape[0] != 2:
        raise CorrectorError("the cross-amplitude expression is defined for two packets in one dimension")
    y = grid.coords[0]
    hv = grid.cell_volume
    out = np.zeros(2)
    dens = np.abs(a) ** 2
    cv = cubic_potential(co.third_V, grid)
    c0 = cubic_convolution(co.third_K0, dens, grid)
    cc = cubic_convolution(co.third_cross, dens[::-1], grid)
    for j in range(2):
        weight = 2 * np.imag(np.conj(a[1 - j]) * a[j])
        bracket = (hv * np.sum(y * cv[j] * weight) + hv * np.sum(c0[j] * weight)
                   + hv * np.sum(cc[j] * weight))
        out[j] = grads[j, 0] * bracket
    return out


def theta_first_line_at_zero(a: np.ndarray, grid: Grid, traj: Trajectory, potential: Potential,
                             kernel: Kernel) -> np.ndarray:
    """grad K(0) . 2 Re int z conj(a_j) (-i S_j(0)); zero for every admissible datum."""
    src, _ = _initial_source(a, grid, traj, potential, kernel)
    m1 = density_moments(2 * np.real(np.conj(a) * (-1j * src)), grid, 1)[1]
    return m1 @ kernel.grad(np.zeros(grid.dim))
