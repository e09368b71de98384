"""Independent reference solutions used by the test-suite.

Gaussian oracle: under i u_t + 1/2 u_yy = (1/2 M(t) y^2 + F(t) y) u a Gaussian
u = exp(i (Gam/2 (y-g)^2 + pi (y-g) + gam)) stays Gaussian with

    Gam' = -Gam^2 - M,   g' = pi,   pi' = -M g - F,
    gam' = pi^2/2 + i Gam/2 - M g^2/2 - F g.

The coefficients are integrated with a high-accuracy adaptive ODE solver,
which shares no code with the splitting solvers under test.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp


def gaussian_initial(width: float = 1.0, momentum: float = 0.0, center: float = 0.0):
    """Coefficients (Gam, g, pi, gam) of pi^{-1/4} w^{-1/2} exp(-(y-c)^2/(2w^2) + i k y)."""
    gam = -1j * np.log(np.pi ** -0.25 * width ** -0.5) + momentum * center
    return np.array([1j / width ** 2, center, momentum, gam], dtype=complex)


def gaussian_eval(coeffs, y):
    Gam, g, pi, gam = coeffs
    s = y - g.real
    return np.exp(1j * (0.5 * Gam * s ** 2 + pi.real * s + gam))


def evolve_gaussians(initial, times, system, rtol=1e-12, atol=1e-13):
    """Integrate coupled Gaussian coefficient ODEs.

    ``initial`` is a list of coefficient arrays (one per packet);
    ``system(t, centers, masses)`` returns ``(M, F)`` lists for each packet,
    allowing F to depend on the packet centres (self-consistent moments).
    """
    n_pk = len(initial)
    masses = []
    y0 = []
    for c in initial:
        masses.append(np.exp(-2 * c[3].imag) * np.sqrt(np.pi / c[0].imag))
        y0.extend([c[0], c[1], c[2], c[3]])
    y0 = np.array(y0, dtype=complex)
    masses = np.array(masses)

    def rhs(t, z):
        out = np.empty_like(z)
        centers = np.array([z[4 * j + 1].real for j in range(n_pk)])
        Ms, Fs = system(t, centers, masses)
        for j in range(n_pk):
            Gam, g, pi, gam = z[4 * j:4 * j + 4]
            M, F = Ms[j], Fs[j]
            out[4 * j] = -Gam ** 2 - M
            out[4 * j + 1] = pi
            out[4 * j + 2] = -M * g - F
            out[4 * j + 3] = 0.5 * pi ** 2 + 0.5j * Gam - 0.5 * M * g ** 2 - F * g
        return out

    sol = solve_ivp(rhs, (times[0], times[-1]), y0, t_eval=times, rtol=rtol, atol=atol, method="DOP853")
    return [sol.y[4 * j:4 * j + 4] for j in range(n_pk)], masses


def harmonic_orbit(q0, p0, t):
    return q0 * np.cos(t) + p0 * np.sin(t), -q0 * np.sin(t) + p0 * np.cos(t)
