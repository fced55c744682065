import numpy as np
import pytest

from conftest import quintic_roots
from locsync.model import (
    NotBistableError,
    ParameterRangeError,
    UnknownSpecError,
    bistable_roots,
    builtin_spec,
    polynomial_spec,
    rest_state_roots,
    verify_hypotheses,
)


def test_quintic_saddle_node_root(quintic):
    assert quintic.lam(1.0, 1.0) == 0.0


def test_quintic_evenness_sample(quintic):
    assert quintic.lam(0.3, 0.5) == quintic.lam(-0.3, 0.5)


def test_quintic_rest_root_at_mu_zero(quintic):
    # solve -0 + 2 r^2 - r^4 = 0 by the quadratic formula in r^2: r = sqrt(2)
    assert quintic.lam(np.sqrt(2.0), 0.0) == pytest.approx(0.0, abs=1e-14)


def test_hbm_printed_coefficients(hbm):
    c4 = 12.0 * np.pi**2 / 8.0
    c2 = 12.0 * np.pi**4 / 5.0
    r = 0.37
    assert hbm.lam(r, 0.2) == pytest.approx(-(c4 * r**4 - c2 * r**2 + 2 * 0.2))
    assert hbm.lam(0.0, 0.3) == pytest.approx(-0.6)
    assert float(hbm.omega(r, 0.2, 0.01)) == 0.0


def test_unknown_builtin():
    with pytest.raises(UnknownSpecError):
        builtin_spec("cubic")


def test_bistable_roots_quintic(quintic):
    prof = bistable_roots(quintic, 0.75)
    rm, rp = quintic_roots(0.75)
    assert prof.r_minus == pytest.approx(rm, rel=1e-12)
    assert prof.r_plus == pytest.approx(rp, rel=1e-12)
    # lambda_r = 4r - 4r^3 at the roots
    assert prof.lambda_r_plus == pytest.approx(4 * rp - 4 * rp**3, rel=1e-10)
    assert prof.lambda_r_minus == pytest.approx(4 * rm - 4 * rm**3, rel=1e-10)
    assert prof.lambda_r_plus == pytest.approx(-2.449489742783178, abs=1e-9)
    assert prof.lambda_r_minus == pytest.approx(1.4142135623730951, abs=1e-9)
    assert prof.lambda_at_zero == -0.75
    assert not prof.near_fold


def test_bistable_roots_fold_limit(quintic):
    prof = bistable_roots(quintic, 1.0)
    assert prof.near_fold
    assert prof.r_minus == pytest.approx(1.0, abs=1e-6)
    assert prof.r_plus == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("mu", [0.0, -0.2, 1.0001, 2.0])
def test_bistable_roots_range_error(quintic, mu):
    with pytest.raises(ParameterRangeError):
        bistable_roots(quintic, mu)


def test_bistable_roots_monostable():
    mono = polynomial_spec([0.0, 1.0], mu_coefficient=-1.0, name="monostable")
    with pytest.raises(NotBistableError, match="one positive root"):
        bistable_roots(mono, 0.5)


def test_root_residuals_small(quintic, hbm):
    for spec in (quintic, hbm):
        for mu in np.linspace(0.1, 0.9, 9):
            prof = bistable_roots(spec, mu)
            assert abs(spec.lam(prof.r_minus, mu)) <= 1e-10
            assert abs(spec.lam(prof.r_plus, mu)) <= 1e-10


def test_quintic_evenness_exact_on_grid(quintic):
    r = np.linspace(0.0, 3.0, 101)
    for mu in np.linspace(0.05, 0.95, 7):
        assert np.max(np.abs(quintic.lam(r, mu) - quintic.lam(-r, mu))) == 0.0


def test_monotone_bracketing(quintic):
    mus = np.linspace(0.1, 0.9, 17)
    rm = [bistable_roots(quintic, m).r_minus for m in mus]
    rp = [bistable_roots(quintic, m).r_plus for m in mus]
    assert all(a < b for a, b in zip(rm[:-1], rm[1:]))
    assert all(a > b for a, b in zip(rp[:-1], rp[1:]))
    for m, a, b in zip(mus, rm, rp):
        orm, orp = quintic_roots(m)
        assert a == pytest.approx(orm, rel=1e-11)
        assert b == pytest.approx(orp, rel=1e-11)


def test_verify_hypotheses_quintic(quintic):
    report = verify_hypotheses(quintic, np.linspace(0.1, 0.9, 9))
    assert report.admissible
    assert report.evenness_defect == 0.0
    assert report.pitchfork_trend_ok and report.fold_trend_ok


def test_verify_hypotheses_monostable():
    mono = polynomial_spec([0.0, 1.0], mu_coefficient=-1.0, name="monostable")
    report = verify_hypotheses(mono, np.linspace(0.1, 0.9, 9))
    assert not report.admissible
    assert any("one positive root" in e.message for e in report.entries)


def test_verify_hypotheses_hbm(hbm):
    report = verify_hypotheses(hbm, np.linspace(0.1, 0.9, 9))
    assert report.admissible


def test_verify_hypotheses_empty_grid(quintic):
    with pytest.raises(ValueError):
        verify_hypotheses(quintic, [])


def test_rest_state_roots(quintic):
    rm, rp = rest_state_roots(quintic)
    assert rm == 0.0
    assert rp == pytest.approx(np.sqrt(2.0), rel=1e-10)


def test_polynomial_spec_matches_quintic(quintic):
    poly = polynomial_spec([0.0, 2.0, -1.0], mu_coefficient=-1.0)
    for r in (0.0, 0.4, 1.3):
        for mu in (0.1, 0.8):
            assert poly.lam(r, mu) == pytest.approx(quintic.lam(r, mu), abs=1e-14)
            assert poly.lam_r(r, mu) == pytest.approx(quintic.lam_r(r, mu), abs=1e-14)


def test_polynomial_spec_literal_meaning():
    # the documented file-interface form: lambda = c0 + c1 r^2 + c2 r^4
    poly = polynomial_spec([0.5, -1.0, 0.25], omega0_const=2.0)
    r = 1.2
    assert poly.lam(r, 0.7) == pytest.approx(0.5 - r**2 + 0.25 * r**4)
    assert float(poly.omega0(0.3)) == 2.0


def test_with_omega1(quintic):
    spec = quintic.with_omega1(
        lambda r, mu, eps: 5.0 * np.asarray(r, dtype=float),
        lambda r, mu, eps: 5.0 + 0.0 * np.asarray(r, dtype=float),
    )
    assert float(spec.omega(0.3, 0.5, 0.01)) == pytest.approx(0.01 * 1.5)
    assert float(spec.omega_r(0.3, 0.5, 0.01)) == pytest.approx(0.05)
    assert float(quintic.omega(0.3, 0.5, 0.01)) == 0.0
