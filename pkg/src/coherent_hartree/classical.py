"""Centre trajectories, actions and the two-body invariant.

Packets are indexed ``j = 0, 1``; the partner of packet ``j`` is ``1 - j``.
Arrays of positions and momenta have shape ``(n_times, P, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from .potentials import Kernel, Potential


class TrajectoryError(RuntimeError):
    pass


@dataclass
class Trajectory:
    """Sampled phase-space centres with derivatives for cubic Hermite dense output."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    force: np.ndarray
    masses: np.ndarray
    coupled: bool

    @property
    def packets(self) -> int:
        return self.q.shape[1]

    @property
    def dim(self) -> int:
        return self.q.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def state_at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated ``(q, p)``; scalar ``t`` gives ``(P, d)`` arrays, vector ``t`` adds a leading axis."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.times[0], self.times[-1]
        span = hi - lo
        if np.any(t_arr < lo - 1e-12 * max(span, 1)) or np.any(t_arr > hi + 1e-12 * max(span, 1)):
            raise TrajectoryError(f"time outside the integrated window [{lo}, {hi}]")
        h = self.dt
        k = np.clip(np.floor((t_arr - lo) / h).astype(int), 0, len(self.times) - 2)
        s = ((t_arr - self.times[k]) / h)[:, None, None]
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        q = h00 * self.q[k] + h10 * h * self.p[k] + h01 * self.q[k + 1] + h11 * h * self.p[k + 1]
        p = h00 * self.p[k] + h10 * h * self.force[k] + h01 * self.p[k + 1] + h11 * h * self.force[k + 1]
        if np.ndim(t) == 0:
            return q[0], p[0]
        return q, p

    def separation(self, t=None) -> tuple[np.ndarray, np.ndarray]:
        """``(q_0 - q_1, p_0 - p_1)`` on the sample grid or at the requested times."""
        if self.packets < 2:
            raise TrajectoryError("separation needs two packets")
        if t is None:
            q, p = self.q, self.p
            return q[:, 0] - q[:, 1], p[:, 0] - p[:, 1]
        q, p = self.state_at(t)
        return q[..., 0, :] - q[..., 1, :], p[..., 0, :] - p[..., 1, :]


def _time_grid(T: float, dt: float) -> tuple[np.ndarray, float]:
    if not (T > 0 and dt > 0):
        raise TrajectoryError("T and dt must be positive")
    steps = int(np.ceil(T / dt - 1e-9))
    return np.linspace(0.0, T, steps + 1), T / steps


def _rk4(rhs: Callable, state: np.ndarray, times: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4; returns states and right-hand sides at every node."""
    states = np.empty((len(times),) + state.shape)
    derivs = np.empty_like(states)
    states[0] = state
    for n, t in enumerate(times[:-1]):
        k1 = rhs(t, state)
        derivs[n] = k1
        k2 = rhs(t + dt / 2, state + dt / 2 * k1)
        k3 = rhs(t + dt / 2, state + dt / 2 * k2)
        k4 = rhs(t + dt, state + dt * k3)
        state = state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise TrajectoryError(f"non-finite trajectory state at t = {times[n + 1]:.6g}")
        states[n + 1] = state
    derivs[-1] = rhs(times[-1], state)
    return states, derivs


def _initial(q0, p0) -> tuple[np.ndarray, np.ndarray]:
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if q0.ndim == 1:
        q0, p0 = q0[:, None], p0[:, None]
    if q0.shape != p0.shape or q0.ndim != 2 or q0.shape[0] not in (1, 2):
        raise TrajectoryError("initial data must have shape (P, d) with P in {1, 2}")
    return q0, p0


def coupled_force(potential: Potential, kernel: Kernel, t: float, q: np.ndarray,
                  masses: np.ndarray) -> np.ndarray:
    """-grad V(q_j) - m_j grad K(0) - m_partner grad K(q_j - q_partner)."""
    force = -potential.grad(t, q)
    zero = np.zeros(q.shape[1])
    force = force - masses[:, None] * kernel.grad(zero)[None, :]
    if q.shape[0] == 2:
        dq = q[0] - q[1]
        force[0] -= masses[1] * kernel.grad(dq)
        force[1] -= masses[0] * kernel.grad(-dq)
    return force


def _integrate(force_fn, q0, p0, T, dt, masses, coupled) -> Trajectory:
    q0, p0 = _initial(q0, p0)
    times, dt = _time_grid(T, dt)
    n_pk, dim = q0.shape

    def rhs(t, z):
        q, p = z[0], z[1]
        return np.stack([p, force_fn(t, q)])

    states, derivs = _rk4(rhs, np.stack([q0, p0]), times, dt)
    return Trajectory(times, states[:, 0], states[:, 1], derivs[:, 1],
                      np.asarray(masses, dtype=float)[:n_pk], coupled)


def integrate_standard(potential: Potential, q0, p0, T: float, dt: float = 1e-3,
                       masses=(1.0, 1.0)) -> Trajectory:
    """Independent Newtonian flows q' = p, p' = -grad V(t, q) for each packet."""
    return _integrate(lambda t, q: -potential.grad(t, q), q0, p0, T, dt, masses, coupled=False)


def integrate_coupled(potential: Potential, kernel: Kernel, q0, p0, masses, T: float,
                      dt: float = 1e-3) -> Trajectory:
    """Mean-field coupled flows including self and mutual kernel forces."""
    m = np.asarray(masses, dtype=float)
    return _integrate(lambda t, q: coupled_force(potential, kernel, t, q, m[:q.shape[0]]),
                      q0, p0, T, dt, m, coupled=True)


def cumulative_integral(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Running Simpson integral along axis 0, starting from zero."""
    return cumulative_simpson(values, x=times, axis=0, initial=0.0)


def action_classical(traj: Trajectory, potential: Potential) -> np.ndarray:
    """S_j(t) = int_0^t (|p_j|^2 / 2 - V(s, q_j)) ds, shape ``(n_times, P)``."""
    lag = 0.5 * np.sum(traj.p ** 2, axis=-1)
    lag = lag - np.stack([potential.value(t, traj.q[n]) for n, t in enumerate(traj.times)])
    return cumulative_integral(lag, traj.times)


def kernel_along(traj: Trajectory, kernel: Kernel, order: int) -> np.ndarray:
    """Kernel derivative evaluated at ``q_j - q_partner`` for each packet; shape ``(n, P, ...)``."""
    dq, _ = traj.separation()
    return np.stack([kernel.kernel_derivative(dq, order), kernel.kernel_derivative(-dq, order)], axis=1)


@dataclass
class ActionIntegrals:
    """Action split by powers of eps: S^eps = classical + nonlinear + sqrt(eps) * sqrt_eps."""

    times: np.ndarray
    classical: np.ndarray
    nonlinear: np.ndarray
    sqrt_eps: np.ndarray

    def at(self, eps: float) -> np.ndarray:
        return self.classical + self.nonlinear + np.sqrt(eps) * self.sqrt_eps


def action_modified(traj: Trajectory, potential: Potential, kernel: Kernel, regime: str,
                    moments: np.ndarray | Callable[[float], np.ndarray] | None = None) -> ActionIntegrals:
    """Actions for the linear, critical, half and zero regimes.

    ``regime="half"``: S - sqrt(eps) (t K(0) m_j + m_partner int K(dq_j)).
    ``regime="zero"``: S - int (K(0) m_j + K(dq_j) m_partner)
    + sqrt(eps) int (grad K(0) . G_j + grad K(dq_j) . G_partner), where the
    envelope first moments ``G`` come as an ``(n_times, P, d)`` array on the
    trajectory grid or a callable of time returning ``(P, d)``.
    """
    classical = action_classical(traj, potential)
    zeros = np.zeros_like(classical)
    if regime in ("linear", "critical"):
        return ActionIntegrals(traj.times, classical, zeros, zeros.copy())
    n_pk = traj.packets
    m = traj.masses
    k0 = float(kernel.value(np.zeros(traj.dim)))
    self_term = np.outer(traj.times, m * k0)
    if n_pk == 2:
        cross = kernel_along(traj, kernel, 0) * m[::-1][None, :]
        cross_int = cumulative_integral(cross, traj.times)
    else:
        cross_int = np.zeros_like(classical)
    if regime == "half":
        return ActionIntegrals(traj.times, classical, zeros, -(self_term + cross_int))
    if regime != "zero":
        raise TrajectoryError(f"unknown regime {regime!r}")
    if moments is None:
        raise TrajectoryError("the zero regime needs envelope moments")
    if callable(moments):
        G = np.stack([np.asarray(moments(t), dtype=float) for t in traj.times])
    else:
        G = np.asarray(moments, dtype=float)
    if G.shape != traj.q.shape:
        raise TrajectoryError(f"moments shape {G.shape} does not match trajectory {traj.q.shape}")
    grad0 = kernel.grad(np.zeros(traj.dim))
    integrand = G @ grad0
    if n_pk == 2:
        grads = kernel_along(traj, kernel, 1)
        integrand = integrand + np.einsum("npd,npd->np", grads, G[:, ::-1])
    return ActionIntegrals(traj.times, classical, -(self_term + cross_int),
                           cumulative_integral(integrand, traj.times))


def hamiltonian_conserved(potential: Potential, kernel: Kernel) -> bool:
    """Whether the two-body invariant is a constant of the coupled motion."""
    return (not potential.time_dependent) and kernel.even


def hamiltonian_invariant(traj: Trajectory, potential: Potential, kernel: Kernel) -> np.ndarray:
    """m_1 (|p_1|^2/2 + V(q_1)) + m_2 (|p_2|^2/2 + V(q_2)) + m_1 m_2 K(q_1 - q_2) along the samples."""
    m = traj.masses
    kinetic = 0.5 * np.sum(traj.p ** 2, axis=-1)
    pot = np.stack([potential.value(t, traj.q[n]) for n, t in enumerate(traj.times)])
    total = (kinetic + pot) @ m
    if traj.packets == 2:
        dq, _ = traj.separation()
        total = total + m[0] * m[1] * kernel.value(dq)
    return total


def separation_eta(traj: Trajectory) -> float:
    """min over samples of max(|q_0 - q_1|, |p_0 - p_1|)."""
    dq, dp = traj.separation()
    return float(np.min(np.maximum(np.linalg.norm(dq, axis=-1), np.linalg.norm(dp, axis=-1))))
