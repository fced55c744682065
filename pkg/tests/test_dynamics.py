import numpy as np
import pytest

from locsync.asymptotics import SeedAnsatz, build_seed
from locsync.continuation import LatticeSystem, newton_correct
from locsync.dynamics import (
    PeriodUndefined,
    integrate,
    linearization_spectrum,
    rigid_rotation_deviation,
    unfold_state,
    verify_relative_equilibrium,
)
from locsync.lattice import BoundaryKind, CouplingKind, PolarState
from locsync.model import bistable_roots


def test_zero_state_stays_zero(quintic):
    z0 = np.zeros(4, dtype=complex)
    traj = integrate(quintic, CouplingKind.dissipative(), z0, 0.01, 0.5, 1.0, 1e-2)
    assert np.max(np.abs(traj.z)) == 0.0
    assert traj.completed


def test_single_rotating_node(quintic_rotating):
    prof = bistable_roots(quintic_rotating, 0.6)
    z0 = np.array([prof.r_plus + 0j, 0j])
    traj = integrate(quintic_rotating, CouplingKind.dissipative(), z0, 0.0, 0.6,
                     2 * np.pi, 1e-3)
    assert np.max(np.abs(np.abs(traj.z[:, 0]) - prof.r_plus)) <= 1e-10
    # phase advances at unit rate
    mid = len(traj.times) // 2
    angle = np.angle(traj.z[mid, 0] / z0[0])
    assert angle == pytest.approx(
        np.mod(traj.times[mid] + np.pi, 2 * np.pi) - np.pi, abs=1e-6
    )


def test_rk4_observed_order(quintic_rotating):
    prof = bistable_roots(quintic_rotating, 0.6)
    z0 = np.array([prof.r_plus + 0j, 0j])
    errs = []
    for dt in (2e-3, 1e-3):
        traj = integrate(quintic_rotating, CouplingKind.dissipative(), z0, 0.0,
                         0.6, 1.0, dt)
        exact = prof.r_plus * np.exp(1j * traj.times[-1])
        errs.append(abs(traj.z[-1, 0] - exact))
    order = np.log2(errs[0] / errs[1])
    assert 3.8 <= order <= 4.2


def test_integration_input_validation(quintic):
    with pytest.raises(ValueError):
        integrate(quintic, CouplingKind.dissipative(), np.zeros(3, complex),
                  0.01, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(quintic, CouplingKind.dissipative(), np.zeros(3, complex),
                  0.01, 0.5, 0.5, 1.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_abort_on_blowup(quintic):
    # mu < 0 with a seed beyond the stable oscillation blows up in finite time
    z0 = np.full(3, 3.0 + 0j)
    traj = integrate(quintic, CouplingKind.dissipative(), z0, 0.0, -10.0, 50.0, 0.5)
    assert not traj.completed
    assert np.all(np.isfinite(traj.z))


def test_gauge_consistency(quintic_rotating):
    rng = np.random.default_rng(5)
    z0 = rng.normal(0, 0.5, 4) + 1j * rng.normal(0, 0.5, 4)
    alpha = 0.7
    a = integrate(quintic_rotating, CouplingKind.conservative(),
                  z0 * np.exp(1j * alpha), 0.01, 0.5, 1.0, 1e-3)
    b = integrate(quintic_rotating, CouplingKind.conservative(), z0,
                  0.01, 0.5, 1.0, 1e-3)
    assert np.max(np.abs(a.z - b.z * np.exp(1j * alpha))) <= 1e-9


def test_amplitude_conservation_at_roots(quintic_rotating):
    prof = bistable_roots(quintic_rotating, 0.4)
    z0 = np.array([prof.r_plus, prof.r_minus, 0.0], dtype=complex)
    traj = integrate(quintic_rotating, CouplingKind.dissipative(), z0, 0.0, 0.4,
                     5.0, 1e-3)
    assert np.max(np.abs(np.abs(traj.z) - np.abs(z0))) <= 1e-9


def test_unfold_shapes_and_symmetry(quintic):
    st = PolarState([1.0, 0.5, 0.1], [0.2, -0.1], 0.3, 0.5)
    off = unfold_state(st, BoundaryKind.OFF_SITE)
    on = unfold_state(st, BoundaryKind.ON_SITE)
    assert off.shape == (6,) and on.shape == (5,)
    assert np.allclose(off, off[::-1])
    assert np.allclose(on, on[::-1])


def test_period_undefined(quintic):
    traj = integrate(quintic, CouplingKind.dissipative(),
                     np.zeros(2, complex), 0.0, 0.5, 1.0, 1e-2)
    with pytest.raises(PeriodUndefined):
        verify_relative_equilibrium(traj, np.zeros(2, complex), 1e-9)


def test_relative_equilibrium_of_branch_state(quintic, quintic_rotating):
    # a converged dissipative state is a rigid rotation after shifting rho
    # by the rotating spec's omega0 = 1
    eps = 0.01
    system = LatticeSystem(quintic, CouplingKind.dissipative(), eps,
                           BoundaryKind.OFF_SITE)
    ansatz = SeedAnsatz(3, ("plus",) * 3, "in_phase", BoundaryKind.OFF_SITE, 8)
    st = newton_correct(system, build_seed(quintic, 0.5, eps, ansatz,
                                           CouplingKind.dissipative()))
    st_rot = PolarState(st.r, st.phi, st.rho + 1.0, st.mu)
    z0 = unfold_state(st_rot, BoundaryKind.OFF_SITE)
    period = 2 * np.pi / abs(st_rot.rho)
    traj = integrate(quintic_rotating, CouplingKind.dissipative(), z0, eps, 0.5,
                     period, 1e-3)
    dev = verify_relative_equilibrium(traj, z0, st_rot.rho)
    assert dev <= 1e-6


def test_relative_equilibrium_sensitivity(quintic, quintic_rotating):
    eps = 0.01
    system = LatticeSystem(quintic, CouplingKind.dissipative(), eps,
                           BoundaryKind.OFF_SITE)
    ansatz = SeedAnsatz(3, ("plus",) * 3, "in_phase", BoundaryKind.OFF_SITE, 8)
    st = newton_correct(system, build_seed(quintic, 0.5, eps, ansatz,
                                           CouplingKind.dissipative()))
    z0 = unfold_state(PolarState(st.r, st.phi, st.rho + 1.0, st.mu),
                      BoundaryKind.OFF_SITE)
    z0[2] += 1e-3
    traj = integrate(quintic_rotating, CouplingKind.dissipative(), z0, eps, 0.5,
                     2 * np.pi, 1e-3)
    assert rigid_rotation_deviation(traj, z0, st.rho + 1.0) > 1e-4


def test_spectrum_uncoupled_nodes(quintic):
    prof = bistable_roots(quintic, 0.5)
    st_plus = PolarState([prof.r_plus, 0.0], [0.0], 0.0, 0.5)
    eigs = linearization_spectrum(quintic, CouplingKind.dissipative(), st_plus,
                                  0.0, BoundaryKind.OFF_SITE)
    expected = prof.r_plus * prof.lambda_r_plus
    assert np.min(np.abs(eigs - expected)) <= 1e-8
    assert expected < 0.0
    st_minus = PolarState([prof.r_minus, 0.0], [0.0], 0.0, 0.5)
    eigs_m = linearization_spectrum(quintic, CouplingKind.dissipative(), st_minus,
                                    0.0, BoundaryKind.OFF_SITE)
    unstable = prof.r_minus * prof.lambda_r_minus
    assert np.min(np.abs(eigs_m - unstable)) <= 1e-8
    assert unstable > 0.0


def test_spectrum_gauge_mode(quintic):
    eps = 0.01
    system = LatticeSystem(quintic, CouplingKind.dissipative(), eps,
                           BoundaryKind.OFF_SITE)
    ansatz = SeedAnsatz(2, ("plus",) * 2, "in_phase", BoundaryKind.OFF_SITE, 6)
    st = newton_correct(system, build_seed(quintic, 0.5, eps, ansatz,
                                           CouplingKind.dissipative()))
    eigs = linearization_spectrum(quintic, CouplingKind.dissipative(), st, eps,
                                  BoundaryKind.OFF_SITE)
    assert np.sum(np.abs(eigs) < 1e-8) == 1
