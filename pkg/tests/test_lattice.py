import numpy as np
import pytest

from conftest import quintic_roots
from locsync.lattice import (
    BoundaryKind,
    CouplingKind,
    LatticeError,
    PolarState,
    canonicalize,
    complex_residual,
    ghost_values,
    jacobian,
    polar_to_complex,
    residual,
    residual_norm,
    wrap_phase,
)
from locsync.model import bistable_roots


def rand_state(rng, n, positive=False):
    r = rng.uniform(0.05, 1.5, n) if positive else rng.normal(0.0, 1.0, n)
    return PolarState(r, rng.normal(0.0, 2.0, n - 1), rng.normal(), rng.uniform(0.1, 0.9))


def rich_spec(quintic_rotating):
    return quintic_rotating.with_omega1(
        lambda r, mu, eps: 0.3 * r + 0.1 * r**2 * mu,
        lambda r, mu, eps: 0.3 + 0.2 * r * mu,
        lambda r, mu, eps: 0.1 * r**2,
    )


def test_coupling_unit_modulus():
    CouplingKind(np.cos(0.3), np.sin(0.3))
    with pytest.raises(LatticeError):
        CouplingKind(1.0, 0.5)


def test_state_validation():
    with pytest.raises(LatticeError):
        PolarState([1.0, 2.0], [0.1, 0.2], 0.0, 0.5)
    with pytest.raises(LatticeError):
        PolarState([1.0, np.inf], [0.1], 0.0, 0.5)


def test_pack_unpack_roundtrip():
    st = PolarState([0.3, 0.7, 1.1], [0.2, -0.4], 1.5, 0.6)
    back = PolarState.unpack(st.pack(), 3)
    assert np.array_equal(back.r, st.r)
    assert np.array_equal(back.phi, st.phi)
    assert back.rho == st.rho and back.mu == st.mu


def test_ghost_values_off_site():
    st = PolarState([0.4, 0.9], [0.3], 0.0, 0.5)
    r0, phi0, r_right, phi_right = ghost_values(st, BoundaryKind.OFF_SITE)
    assert (r0, phi0) == (0.4, 0.0)
    assert (r_right, phi_right) == (0.9, 0.0)


def test_ghost_values_on_site():
    st = PolarState([0.4, 0.9], [0.3], 0.0, 0.5)
    r0, phi0, _, _ = ghost_values(st, BoundaryKind.ON_SITE)
    assert (r0, phi0) == (0.9, -0.3)
    zero = PolarState([0.4, 0.9], [0.0], 0.0, 0.5)
    assert ghost_values(zero, BoundaryKind.ON_SITE)[1] == 0.0


def test_residual_vanishes_at_uncoupled_roots(quintic_rotating):
    prof = bistable_roots(quintic_rotating, 0.6)
    st = PolarState(
        [prof.r_plus, 0.0, prof.r_minus, prof.r_plus],
        np.zeros(3),
        float(quintic_rotating.omega0(0.6)),
        0.6,
    )
    for bc in BoundaryKind:
        res = residual(quintic_rotating, CouplingKind.dissipative(), st, 0.0, bc)
        assert np.max(np.abs(res)) <= 1e-10


def test_residual_coupling_entry_hand_expansion(quintic):
    # eps (0 - 2 r+ + r+) = -eps r+ at node 1 for (r+, 0, 0, 0), off-site
    prof = bistable_roots(quintic, 0.75)
    st = PolarState([prof.r_plus, 0.0, 0.0, 0.0], np.zeros(3), 0.0, 0.75)
    res = residual(quintic, CouplingKind.dissipative(), st, 0.01, BoundaryKind.OFF_SITE)
    _, rp = quintic_roots(0.75)
    assert res[0] == pytest.approx(-0.01 * rp, abs=1e-9)
    assert res[0] == pytest.approx(-0.012247448713916, abs=1e-9)


def test_general_coupling_reduces_to_dissipative_form(quintic_rotating):
    spec = rich_spec(quintic_rotating)
    rng = np.random.default_rng(7)
    for _ in range(20):
        st = rand_state(rng, int(rng.integers(2, 8)))
        eps = rng.uniform(0.0, 0.05)
        for bc in BoundaryKind:
            got = residual(spec, CouplingKind.dissipative(), st, eps, bc)
            # hand-rolled dissipative polar equations
            if bc is BoundaryKind.ON_SITE:
                r0, phi0 = st.r[1], -st.phi[0]
            else:
                r0, phi0 = st.r[0], 0.0
            r_ext = np.concatenate([[r0], st.r, [st.r[-1]]])
            phi_ext = np.concatenate([[phi0], st.phi, [0.0]])
            lam = np.asarray(spec.lam(st.r, st.mu))
            om = np.asarray(spec.omega(st.r, st.mu, eps))
            exp = np.empty(2 * st.n)
            for i in range(st.n):
                n = i + 1
                exp[2 * i] = lam[i] * st.r[i] + eps * (
                    r_ext[n + 1] * np.cos(phi_ext[n]) - 2 * st.r[i]
                    + r_ext[n - 1] * np.cos(phi_ext[n - 1])
                )
                exp[2 * i + 1] = (om[i] - st.rho) * st.r[i] + eps * (
                    r_ext[n + 1] * np.sin(phi_ext[n])
                    - r_ext[n - 1] * np.sin(phi_ext[n - 1])
                )
            assert np.max(np.abs(got - exp)) == 0.0


def test_general_coupling_reduces_to_conservative_form(quintic_rotating):
    spec = rich_spec(quintic_rotating)
    rng = np.random.default_rng(8)
    for _ in range(20):
        st = rand_state(rng, int(rng.integers(2, 8)))
        eps = rng.uniform(0.0, 0.05)
        got = residual(spec, CouplingKind.conservative(), st, eps, BoundaryKind.OFF_SITE)
        r_ext = np.concatenate([[st.r[0]], st.r, [st.r[-1]]])
        phi_ext = np.concatenate([[0.0], st.phi, [0.0]])
        lam = np.asarray(spec.lam(st.r, st.mu))
        om = np.asarray(spec.omega(st.r, st.mu, eps))
        exp = np.empty(2 * st.n)
        for i in range(st.n):
            n = i + 1
            # amplitude rows of the conservative polar system
            exp[2 * i] = lam[i] * st.r[i] + eps * (
                r_ext[n - 1] * np.sin(phi_ext[n - 1])
                - r_ext[n + 1] * np.sin(phi_ext[n])
            )
            exp[2 * i + 1] = (om[i] - st.rho) * st.r[i] + eps * (
                r_ext[n + 1] * np.cos(phi_ext[n]) - 2 * st.r[i]
                + r_ext[n - 1] * np.cos(phi_ext[n - 1])
            )
        assert np.max(np.abs(got - exp)) <= 1e-15


def test_complex_residual_zero_state(quintic):
    z = np.zeros(5, dtype=complex)
    res = complex_residual(quintic, CouplingKind.conservative(), z, 0.3, 0.5, 0.01)
    assert np.max(np.abs(res)) == 0.0


def test_gauge_equivariance(quintic_rotating, couplings):
    spec = rich_spec(quintic_rotating)
    rng = np.random.default_rng(9)
    z = rng.normal(0, 1, 6) + 1j * rng.normal(0, 1, 6)
    for c in couplings:
        for alpha in (0.7, -1.9, np.pi / 3):
            rotated = complex_residual(spec, c, z * np.exp(1j * alpha), 0.3, 0.5, 0.01)
            plain = complex_residual(spec, c, z, 0.3, 0.5, 0.01) * np.exp(1j * alpha)
            assert np.max(np.abs(rotated - plain)) <= 1e-12


def test_polar_complex_equivalence(quintic_rotating, couplings, boundaries):
    spec = rich_spec(quintic_rotating)
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        st = rand_state(rng, int(rng.integers(2, 9)), positive=True)
        eps = rng.uniform(0.0, 0.05)
        for c in couplings:
            for bc in boundaries:
                pol = residual(spec, c, st, eps, bc)
                z = polar_to_complex(st)
                cres = complex_residual(spec, c, z, st.rho, st.mu, eps, bc)
                theta = np.concatenate([[0.0], np.cumsum(st.phi)])
                back = cres * np.exp(-1j * theta)
                mixed = np.empty(2 * st.n)
                mixed[0::2] = back.real
                mixed[1::2] = back.imag
                worst = max(worst, float(np.max(np.abs(mixed - pol))))
    assert worst <= 1e-12


def fd_jacobian(spec, c, state, eps, bc):
    x0 = state.pack()
    n = state.n
    out = np.zeros((2 * n, 2 * n + 1))
    for j in range(2 * n + 1):
        h = 1e-6 * (1.0 + abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        fp = residual(spec, c, PolarState.unpack(xp, n), eps, bc)
        fm = residual(spec, c, PolarState.unpack(xm, n), eps, bc)
        out[:, j] = (fp - fm) / (2.0 * h)
    return out


def test_jacobian_vs_finite_differences(quintic_rotating, couplings, boundaries):
    spec = rich_spec(quintic_rotating)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(25):
        st = rand_state(rng, int(rng.integers(2, 9)))
        eps = rng.uniform(0.0, 0.05)
        for c in couplings:
            for bc in boundaries:
                diff = jacobian(spec, c, st, eps, bc) - fd_jacobian(spec, c, st, eps, bc)
                worst = max(worst, float(np.max(np.abs(diff))))
    assert worst <= 1e-6


def test_jacobian_rho_column_exact(quintic_rotating, couplings, boundaries):
    rng = np.random.default_rng(12)
    st = rand_state(rng, 6)
    for c in couplings:
        for bc in boundaries:
            jac = jacobian(quintic_rotating, c, st, 0.02, bc)
            n = st.n
            assert np.array_equal(jac[1::2, 2 * n - 1], -st.r)
            assert np.all(jac[0::2, 2 * n - 1] == 0.0)


def test_jacobian_uncoupled_amplitude_diagonal(quintic):
    rng = np.random.default_rng(13)
    st = rand_state(rng, 5)
    jac = jacobian(quintic, CouplingKind.dissipative(), st, 0.0, BoundaryKind.OFF_SITE)
    for i in range(st.n):
        expected = quintic.lam(st.r[i], st.mu) + st.r[i] * quintic.lam_r(st.r[i], st.mu)
        assert jac[2 * i, i] == pytest.approx(float(expected), rel=1e-12)


def test_wrap_phase_range():
    phi = np.array([0.0, np.pi, -np.pi, 3.5 * np.pi, -2.7])
    w = wrap_phase(phi)
    assert np.all((w > -np.pi) & (w <= np.pi))
    assert w[1] == np.pi
    assert w[2] == np.pi  # -pi wraps to the +pi representative


def test_canonicalize_sign_flip(quintic_rotating):
    # row-sign equivalence is exact when the whole nonlinearity is even in r
    rng = np.random.default_rng(14)
    spec = quintic_rotating.with_omega1(
        lambda r, mu, eps: 0.4 * r * r,
        lambda r, mu, eps: 0.8 * np.asarray(r, dtype=float),
    )
    for bc in BoundaryKind:
        st = rand_state(rng, 7)
        can = canonicalize(st)
        assert np.all(can.r >= 0.0)
        assert np.all((can.phi > -np.pi) & (can.phi <= np.pi))
        raw = residual(spec, CouplingKind.dissipative(), st, 0.02, bc)
        new = residual(spec, CouplingKind.dissipative(), can, 0.02, bc)
        signs = np.repeat(np.where(st.r < 0.0, -1.0, 1.0), 2)
        assert np.max(np.abs(new - signs * raw)) <= 1e-12
        assert np.max(np.abs(np.abs(new) - np.abs(raw))) <= 1e-12


def test_residual_norm_helper(quintic):
    st = PolarState([0.2, 0.3], [0.1], 0.0, 0.5)
    c = CouplingKind.dissipative()
    assert residual_norm(quintic, c, st, 0.01, BoundaryKind.OFF_SITE) == pytest.approx(
        float(np.max(np.abs(residual(quintic, c, st, 0.01, BoundaryKind.OFF_SITE))))
    )
