import numpy as np
import pytest
from numpy.testing import assert_allclose

from stenoflow.errors import HyperbolicityError, InvalidInvariantsError, InvalidParameterError, StateValidityError
from stenoflow.geometry import GeometryDerivatives, derivatives_at, make_stenosis_profile, straight_vessel
from stenoflow.model import (
    C0Variant,
    Correction,
    PhysicalParams,
    eigenvalues,
    flux,
    p2_transport,
    pressure_p1,
    pressure_p2,
    riemann_invariants,
    source,
    state_from_invariants,
    wave_speed,
)

P_CONST = PhysicalParams().with_r0_star(0.18)
P_VAR = PhysicalParams(c0_variant=C0Variant.VARIABLE)


def test_table_defaults():
    p = PhysicalParams()
    assert (p.rho_f, p.mu_f, p.h, p.E, p.sigma, p.alpha) == (1.055, 0.04, 0.06, 5.02e6, 0.5, 1.1)
    assert p.gamma == pytest.approx(9.0)
    assert p.nu == pytest.approx(0.04 / 1.055)


@pytest.mark.parametrize("field, value", [("mu_f", -1.0), ("sigma", 1.0), ("alpha", 1.0), ("E", 0.0)])
def test_param_validation_names_field(field, value):
    with pytest.raises(InvalidParameterError, match=field):
        PhysicalParams(**{field: value})


def test_constant_variant_needs_r0_star():
    g = derivatives_at(straight_vessel(), 1.0)
    with pytest.raises(InvalidParameterError):
        flux(0.03, 1.0, g, PhysicalParams())


@pytest.mark.parametrize("params", [P_CONST, P_VAR])
def test_straight_tube_variants_coincide(params):
    g = derivatives_at(straight_vessel(), np.linspace(0, 6, 50))
    a = np.full(50, 0.031)
    q = np.linspace(-1, 1, 50)
    da, dq = np.sin(np.arange(50.0)), np.cos(np.arange(50.0))
    ref = flux(a, q, g, params, "classical"), source(a, q, da, dq, g, params, "classical")
    for corr in ("extended", "appendix_b"):
        got = flux(a, q, g, params, corr), source(a, q, da, dq, g, params, corr)
        for x, y in zip(np.ravel(ref), np.ravel(got)):
            assert np.array_equal(x, y)


@pytest.mark.parametrize("params", [P_CONST, P_VAR])
@pytest.mark.parametrize("corr", list(Correction))
def test_rest_state_flux_gradient_balances_source(params, corr):
    # at A = R0^2, Q = 0 the total z-derivative of the momentum flux equals the source
    geom = make_stenosis_profile(50)
    z = np.linspace(1.5, 4.0, 301)
    h = 1e-5

    def fq(zz):
        g = derivatives_at(geom, zz)
        return flux(g.r0**2, 0.0 * zz, g, params, corr)[1]

    dfdz = (fq(z + h) - fq(z - h)) / (2 * h)
    g = derivatives_at(geom, z)
    _, s = source(g.r0**2, 0.0 * z, 2 * g.r0 * g.dr0_dz, 0.0 * z, g, params, corr)
    assert_allclose(s, dfdz, atol=1e-6 * np.abs(dfdz).max())


def test_eigen_identities_and_jacobian():
    geom = make_stenosis_profile(50)
    rng = np.random.default_rng(1)
    z = rng.uniform(0, 6, 200)
    g = derivatives_at(geom, z)
    a = g.r0**2 * rng.uniform(0.8, 1.2, z.size)
    q = a * rng.uniform(-100, 100, z.size)
    l1, l2 = eigenvalues(a, q, g, P_CONST)
    h = 1e-5
    # flux Jacobian by finite differences (independent of the closed form)
    dfa = (flux(a * (1 + h), q, g, P_CONST)[1] - flux(a * (1 - h), q, g, P_CONST)[1]) / (2 * h * a)
    hq = h * (np.abs(q) + a)
    dfq = (flux(a, q + hq, g, P_CONST)[1] - flux(a, q - hq, g, P_CONST)[1]) / (2 * hq)
    scale = np.abs(l1) + np.abs(l2)
    assert_allclose(l1 + l2, dfq, atol=1e-7 * scale.max())
    assert_allclose(l1 * l2, -dfa, atol=1e-7 * (scale**2).max())
    assert np.all(l1 < 0) and np.all(l2 > 0)


def test_hyperbolicity_loss_is_reported():
    g = GeometryDerivatives(*(np.array(v) for v in (0.18, 0.0, 0.0, 0.0, 0.0, -0.5, 0.0)))
    with pytest.raises(HyperbolicityError):
        eigenvalues(0.0324, 0.0324 * 5000.0, g, P_CONST, "extended")


def test_nonpositive_area_rejected():
    g = derivatives_at(straight_vessel(), 1.0)
    for fn in (lambda: flux(0.0, 1.0, g, P_CONST), lambda: wave_speed(-1.0, g, P_CONST)):
        with pytest.raises(StateValidityError):
            fn()


def test_invariant_round_trip_and_error():
    g = derivatives_at(make_stenosis_profile(50), 2.4)
    a, q = 0.012, 0.7
    w1, w2 = riemann_invariants(a, q, g, P_VAR)
    a2, q2 = state_from_invariants(w1, w2, g, P_VAR)
    assert_allclose([a2, q2], [a, q], rtol=1e-13)
    with pytest.raises(InvalidInvariantsError):
        state_from_invariants(w2, w1, g, P_VAR)


def test_pressures():
    geom = make_stenosis_profile(50)
    g = derivatives_at(geom, np.linspace(0, 6, 11))
    assert_allclose(pressure_p1(g.r0**2, g, P_VAR), 0.0, atol=1e-9)
    assert np.all(pressure_p2(g.r0**2, 0.5, g, P_VAR, "classical") == 0)
    p2 = pressure_p2(g.r0**2, 0.5, g, P_VAR, "extended")
    assert_allclose(p2, 11.0 * 0.04 * (0.5 / g.r0**2) * g.dlnr0_dz)


def test_p2_transport_matches_gradient_of_p2():
    geom = make_stenosis_profile(40)
    z = np.linspace(1.8, 3.5, 101)
    h = 1e-6
    a_fn = lambda zz: 0.02 + 0.001 * np.sin(zz)
    q_fn = lambda zz: 0.7 + 0.05 * np.cos(zz)

    def p2(zz):
        return pressure_p2(a_fn(zz), q_fn(zz), derivatives_at(geom, zz), P_CONST)

    fd = (p2(z + h) - p2(z - h)) / (2 * h)
    g = derivatives_at(geom, z)
    got = p2_transport(a_fn(z), q_fn(z), 0.001 * np.cos(z), -0.05 * np.sin(z), g, P_CONST)
    assert_allclose(got, a_fn(z) / P_CONST.rho_f * fd, atol=1e-6 * np.abs(got).max())
