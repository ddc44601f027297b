import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.optimize import minimize_scalar

from stenoflow.errors import DomainError, InvalidParameterError
from stenoflow.geometry import (
    R_MAX_DEFAULT,
    R_MIN_DEFAULT,
    derivatives_at,
    load_profile_csv,
    make_stenosis_profile,
    straight_vessel,
    tabulated_profile,
    throat_location,
    write_profile_csv,
)


def raw_radius(z, r_max, depth):
    # the profile written out directly, independent of the module's chain-rule code
    s = z - 3.4 + 0.95 * np.exp(-0.5 * (z - 2.5) ** 2)
    return r_max - depth * np.exp(-50.0 * s**4)


@pytest.mark.parametrize("sev", [23, 40, 50])
def test_endpoints_are_r_max(sev):
    g = make_stenosis_profile(sev)
    assert g.radius(0.0) == R_MAX_DEFAULT
    assert g.radius(6.0) == R_MAX_DEFAULT


@pytest.mark.parametrize("sev, r_min", [(23, R_MIN_DEFAULT), (40, 0.6 * 0.18), (50, 0.09)])
def test_throat_radius(sev, r_min):
    g = make_stenosis_profile(sev)
    res = minimize_scalar(lambda z: raw_radius(z, g.r_max, g.depth), bounds=(2.0, 3.0), method="bounded",
                          options={"xatol": 1e-12})
    assert_allclose(res.fun, r_min, rtol=1e-9)
    assert abs(throat_location(g) - res.x) < 2e-4


def test_severity_spellings():
    assert make_stenosis_profile("50%") == make_stenosis_profile(0.5) == make_stenosis_profile(50)
    with pytest.raises(InvalidParameterError):
        make_stenosis_profile(30)


@pytest.mark.parametrize("sev", [23, 50])
def test_derivatives_match_finite_differences(sev):
    g = make_stenosis_profile(sev)
    z = np.linspace(0.05, 5.95, 400)
    h = 1e-5
    d = derivatives_at(g, z)
    fd1 = (raw_radius(z + h, g.r_max, g.depth) - raw_radius(z - h, g.r_max, g.depth)) / (2 * h)
    fd2 = (raw_radius(z + h, g.r_max, g.depth) - 2 * raw_radius(z, g.r_max, g.depth)
           + raw_radius(z - h, g.r_max, g.depth)) / h**2
    assert_allclose(d.r0, raw_radius(z, g.r_max, g.depth), rtol=1e-15)
    assert_allclose(d.dr0_dz, fd1, atol=1e-8 * np.abs(fd1).max())
    assert_allclose(d.d2r0_dz2, fd2, atol=1e-4 * np.abs(fd2).max())
    assert_allclose(d.alpha_c, -(2 / 35) * d.dr0_dz**2)
    assert_allclose(d.dlnr0_dz, d.dr0_dz / d.r0)


def test_straight_vessel_has_no_corrections():
    d = derivatives_at(straight_vessel(), np.linspace(0, 6, 11))
    for name in ("dr0_dz", "d2r0_dz2", "dlnr0_dz", "d2lnr0_dz2", "alpha_c", "dalpha_c_dz"):
        assert np.all(getattr(d, name) == 0.0)


def test_outside_domain_raises():
    g = make_stenosis_profile(50)
    with pytest.raises(DomainError):
        g.radius(6.1)
    with pytest.raises(DomainError):
        g.radius(-0.01)


def test_csv_round_trip(tmp_path):
    g = make_stenosis_profile(50)
    path = tmp_path / "p.csv"
    write_profile_csv(g, path, n=1201)
    t = load_profile_csv(path)
    z = np.linspace(0, 6, 997)
    assert_allclose(t.radius(z), g.radius(z), atol=2e-5)
    assert t.length == 6.0


def test_tabulated_rejects_bad_input(tmp_path):
    with pytest.raises(InvalidParameterError):
        tabulated_profile([0, 1, 1, 2], [1, 1, 1, 1])
    with pytest.raises(InvalidParameterError):
        tabulated_profile([0, 1, 2, 3], [1, 1, -1, 1])
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n0,1\n")
    with pytest.raises(InvalidParameterError):
        load_profile_csv(bad)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([23, 40, 50]), st.floats(0.0, 6.0))
def test_radius_bounded(sev, z):
    g = make_stenosis_profile(sev)
    r = float(g.radius(z))
    assert g.r_min - 1e-15 <= r <= g.r_max
