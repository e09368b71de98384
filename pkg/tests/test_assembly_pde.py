import numpy as np
import pytest

from coherent_hartree.amplitudes import GaussianProfile
from coherent_hartree.assembly import (PacketFrame, ResolutionError, SupportError, assemble, initial_data,
                                       l2_error, packet_observables, semiclassical_grid)
from coherent_hartree.classical import action_classical, integrate_standard
from coherent_hartree.envelopes import sample_profiles, solve_linear_envelope
from coherent_hartree.experiments import fit_slope
from coherent_hartree.grid import Grid, GridError, SpectralField, l2_norm
from coherent_hartree.pde import HartreeSolver, PDEConfig, PDEError, PDEState, energy_conserved
from coherent_hartree.potentials import (BECKernel, GaussianKernel, QuadraticPotential, ShiftedGaussianKernel,
                                         ZeroKernel)

EPS = 2.0 ** -5
HARMONIC = QuadraticPotential.harmonic()
PROFILES = [GaussianProfile(), GaussianProfile(momentum=1.0)]
Q0, P0 = np.array([[-1.0], [1.0]]), np.array([[1.0], [-1.0]])
X_GRID = semiclassical_grid(EPS, 2.0, 2.5)
Y_GRID = Grid.uniform(512, 40.0, 0.0, 1)


def frames_at_zero(theta=(0.0, 0.0)):
    env = sample_profiles(PROFILES, Y_GRID)
    return [PacketFrame(Q0[j], P0[j], 0.0, SpectralField(Y_GRID, env[j]), theta[j]) for j in range(2)]


def test_initial_data_and_assembly_agree():
    direct = initial_data(PROFILES, Q0, P0, EPS, X_GRID)
    assembled = assemble(frames_at_zero(), EPS, X_GRID)
    assert l2_error(direct, assembled) <= 1e-10
    # two well separated unit-mass packets
    assert l2_norm(direct) ** 2 == pytest.approx(2.0, abs=1e-8)


def test_theta_switch():
    plain = assemble(frames_at_zero(), EPS, X_GRID)
    off = assemble(frames_at_zero((0.3, -0.2)), EPS, X_GRID, with_theta=False)
    assert np.array_equal(plain.values, off.values)
    on = assemble(frames_at_zero((0.3, 0.3)), EPS, X_GRID)
    assert np.allclose(on.values, np.exp(0.3j) * plain.values, atol=1e-14)


def test_guards():
    coarse = Grid.uniform(64, 8.0, 0.0, 1)
    with pytest.raises(ResolutionError):
        assemble(frames_at_zero(), EPS, coarse)
    narrow = Grid.uniform(1024, 2.0, 0.0, 1)
    with pytest.raises(SupportError):
        initial_data(PROFILES, Q0, P0, EPS, narrow)
    with pytest.raises(GridError):
        packet_observables(initial_data(PROFILES, Q0, P0, EPS, X_GRID), Q0, EPS, radius=1.5)


def test_packet_observables_of_a_single_packet():
    eps = 2.0 ** -8
    grid = semiclassical_grid(eps, 2.0, 1.0)
    psi = initial_data([GaussianProfile(momentum=1.0)], [[0.3]], [[1.0]], eps, grid)
    obs = packet_observables(psi, [[0.3]], eps, radius=0.5)[0]
    assert obs.mass == pytest.approx(1.0, abs=1e-10)
    assert obs.centroid == pytest.approx([0.3], abs=1e-10)
    # envelope momentum k shifts the momentum centroid by sqrt(eps) k
    assert obs.momentum == pytest.approx([1.0 + np.sqrt(eps)], abs=1e-8)


def harmonic_ansatz(eps, t_final):
    """Linear-envelope approximation, exact for the harmonic potential."""
    traj = integrate_standard(HARMONIC, Q0, P0, T=t_final, dt=1e-3)
    env = solve_linear_envelope(sample_profiles(PROFILES, Y_GRID), Y_GRID, traj, HARMONIC, t_final, 1e-3)
    S = action_classical(traj, HARMONIC)[-1]
    frames = [PacketFrame(traj.q[-1, j], traj.p[-1, j], S[j], env.field(-1, j)) for j in range(2)]
    return frames


def test_linear_pde_reproduces_exact_harmonic_ansatz():
    solver = HartreeSolver(PDEConfig(EPS, None, X_GRID, HARMONIC, dt_factor=0.02))
    run = solver.run(initial_data(PROFILES, Q0, P0, EPS, X_GRID), [1.0])
    approx = assemble(harmonic_ansatz(EPS, 1.0), EPS, X_GRID)
    assert l2_error(run.snapshots[-1], approx) <= 1e-5


def test_pde_strang_is_second_order():
    kernel = GaussianKernel(1.0, 1.0)
    psi0 = initial_data(PROFILES, Q0, P0, EPS, X_GRID)
    ref = HartreeSolver(PDEConfig(EPS, 1, X_GRID, HARMONIC, kernel, dt_factor=0.1 / 32)).run(psi0, [0.5])
    factors = np.array([0.4, 0.2, 0.1, 0.05])
    errors = [l2_error(HartreeSolver(PDEConfig(EPS, 1, X_GRID, HARMONIC, kernel, dt_factor=f)).run(psi0, [0.5])
                       .snapshots[-1], ref.snapshots[-1]) for f in factors]
    assert fit_slope(factors, errors).slope == pytest.approx(2.0, abs=0.1)


def test_mass_energy_and_reversibility():
    bec = BECKernel(a1=1.0, A=1.0)
    config = PDEConfig(EPS, 1, X_GRID, HARMONIC, bec)
    solver = HartreeSolver(config)
    psi0 = initial_data(PROFILES, Q0, P0, EPS, X_GRID)
    energies = []
    run = solver.run(psi0, np.linspace(0, 1, 6), [lambda s: energies.append(solver.energy(s)) or {}])
    assert run.max_mass_drift <= 1e-11
    assert energy_conserved(config)
    assert np.max(np.abs(np.array(energies) - energies[0])) / abs(energies[0]) <= 1e-4
    state = PDEState(0.0, psi0.values)
    for _ in range(20):
        state = solver.step(state)
    for _ in range(20):
        state = solver.step(state, -config.dt)
    assert np.max(np.abs(state.psi - psi0.values)) <= 1e-11
    assert not energy_conserved(PDEConfig(EPS, 0, X_GRID, HARMONIC, ShiftedGaussianKernel(1.0, 1.0, 1.0)))


def test_config_validation():
    with pytest.raises(PDEError):
        PDEConfig(0.0, 1, X_GRID, HARMONIC)
    with pytest.raises(PDEError):
        PDEConfig(EPS, 2, X_GRID, HARMONIC)
    with pytest.raises(PDEError):
        PDEConfig(EPS, 1, X_GRID, HARMONIC, dt_factor=0.0)
    assert PDEConfig(EPS, 1, X_GRID, HARMONIC, ZeroKernel()).coupling == 0.0
    assert PDEConfig(EPS, 0.5, X_GRID, HARMONIC, GaussianKernel()).coupling == pytest.approx(np.sqrt(EPS))
