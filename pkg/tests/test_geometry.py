"""Rotation, direction and field-transform checks against matrix oracles."""

import math

import numpy as np
import pytest

from mimolink import geometry as geo


def _theta_hat(theta, phi):
    return np.array([math.cos(theta) * math.cos(phi),
                     math.cos(theta) * math.sin(phi),
                     -math.sin(theta)])


def _phi_hat(theta, phi):
    return np.array([-math.sin(phi), math.cos(phi), 0.0])


def _lcs_oracle(d, orientation, zeta):
    """Matrix route: rotate the unit vector with R^-1 and read angles off."""
    rot = geo.composite_rotation(orientation, zeta)
    rho = rot.T @ geo.unit_direction(d)
    theta = math.acos(np.clip(rho[2], -1.0, 1.0))
    phi = np.angle(rho[0] + 1j * rho[1])
    return theta, phi


def _psi_oracle(d, orientation, zeta):
    rot = geo.composite_rotation(orientation, zeta)
    th, ph = _lcs_oracle(d, orientation, zeta)
    col = rot @ _theta_hat(th, ph)
    return np.angle(_theta_hat(d.theta, d.phi) @ col
                    + 1j * (_phi_hat(d.theta, d.phi) @ col))


def test_wrap_deg_reference_points():
    assert geo.wrap_deg(190.0) == pytest.approx(-170.0)
    # congruence mod 360 pins wrap(-535) to -175
    assert geo.wrap_deg(-535.0) == pytest.approx(-175.0)
    assert geo.wrap_deg(180.0) == pytest.approx(-180.0)
    assert geo.wrap_deg(-180.0) == pytest.approx(-180.0)
    x = np.linspace(-1000, 1000, 4001)
    w = geo.wrap_deg(x)
    assert np.all(w >= -180.0) and np.all(w < 180.0)
    assert np.allclose((x - w) % 360.0, 0.0, atol=1e-9)


def test_composite_rotation_downtilt_entry():
    rot = geo.composite_rotation(geo.Orientation.from_degrees(0.0, 10.0, 0.0))
    assert rot[0, 0] == pytest.approx(math.cos(math.radians(10.0)))
    # proper rotation: orthogonal with unit determinant
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0)


def test_composite_rotation_slant_folds_into_gamma():
    o = geo.Orientation.from_degrees(12.0, -7.0, 20.0)
    with_slant = geo.composite_rotation(o, extra_slant=math.radians(25.0))
    folded = geo.composite_rotation(geo.Orientation.from_degrees(12.0, -7.0, 45.0))
    assert np.allclose(with_slant, folded, atol=1e-12)


def test_unit_direction_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = geo.SphericalDirection(rng.uniform(0.01, np.pi - 0.01),
                                   rng.uniform(-np.pi, np.pi))
        v = geo.unit_direction(d)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        back = geo.spherical_from_vector(v)
        assert back.theta == pytest.approx(d.theta, abs=1e-12)
        assert back.phi == pytest.approx(d.phi, abs=1e-12)


def test_pure_bearing_shifts_azimuth_only():
    o = geo.Orientation.from_degrees(30.0, 0.0, 0.0)
    d = geo.SphericalDirection.from_degrees(90.0, 50.0)
    loc = geo.gcs_to_lcs_direction(d, o)
    assert math.degrees(loc.theta) == pytest.approx(90.0, abs=1e-10)
    assert math.degrees(loc.phi) == pytest.approx(20.0, abs=1e-10)


def test_lcs_direction_matches_matrix_oracle():
    rng = np.random.default_rng(42)
    for _ in range(300):
        o = geo.Orientation(rng.uniform(-np.pi, np.pi),
                            rng.uniform(-np.pi / 2, np.pi / 2),
                            rng.uniform(-np.pi, np.pi))
        zeta = rng.uniform(-np.pi, np.pi)
        d = geo.SphericalDirection(rng.uniform(0.02, np.pi - 0.02),
                                   rng.uniform(-np.pi, np.pi))
        got = geo.gcs_to_lcs_direction(d, o, zeta)
        th, ph = _lcs_oracle(d, o, zeta)
        assert got.theta == pytest.approx(th, abs=1e-9)
        assert geo.wrap_rad(got.phi - ph) == pytest.approx(0.0, abs=1e-9)


def test_round_trip_through_rotation_matrix():
    rng = np.random.default_rng(3)
    for _ in range(100):
        o = geo.Orientation(rng.uniform(-np.pi, np.pi),
                            rng.uniform(-np.pi / 2, np.pi / 2),
                            rng.uniform(-np.pi, np.pi))
        d = geo.SphericalDirection(rng.uniform(0.02, np.pi - 0.02),
                                   rng.uniform(-np.pi, np.pi))
        loc = geo.gcs_to_lcs_direction(d, o)
        rot = geo.composite_rotation(o)
        back = geo.spherical_from_vector(rot @ geo.unit_direction(loc))
        assert back.theta == pytest.approx(d.theta, abs=1e-9)
        assert geo.wrap_rad(back.phi - d.phi) == pytest.approx(0.0, abs=1e-9)


def test_psi_zero_for_untilted_unslanted_panel():
    o = geo.Orientation.from_degrees(123.0, 0.0, 0.0)
    d = geo.SphericalDirection.from_degrees(70.0, -15.0)
    assert geo.field_displacement_angle(o, 0.0, d) == pytest.approx(0.0, abs=1e-12)


def test_psi_matches_matrix_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        o = geo.Orientation(rng.uniform(-np.pi, np.pi),
                            rng.uniform(-np.pi / 2, np.pi / 2),
                            rng.uniform(-np.pi, np.pi))
        zeta = rng.uniform(-np.pi, np.pi)
        d = geo.SphericalDirection(rng.uniform(0.02, np.pi - 0.02),
                                   rng.uniform(-np.pi, np.pi))
        psi = geo.field_displacement_angle(o, zeta, d)
        assert geo.wrap_rad(psi - _psi_oracle(d, o, zeta)) == pytest.approx(0.0, abs=1e-9)


def test_field_transform_is_unitary_and_oracle_consistent():
    rng = np.random.default_rng(5)
    for _ in range(100):
        o = geo.Orientation(rng.uniform(-np.pi, np.pi),
                            rng.uniform(-np.pi / 2, np.pi / 2),
                            rng.uniform(-np.pi, np.pi))
        zeta = rng.uniform(-np.pi, np.pi)
        d = geo.SphericalDirection(rng.uniform(0.02, np.pi - 0.02),
                                   rng.uniform(-np.pi, np.pi))
        f = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        out = geo.transform_field_to_gcs(f, o, zeta, d, pol_model=1)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(f))
        psi = _psi_oracle(d, o, zeta)
        rot = np.array([[math.cos(psi), -math.sin(psi)],
                        [math.sin(psi), math.cos(psi)]])
        assert np.allclose(out, rot @ f, atol=1e-9)


def test_pol_models_agree_at_zero_slant():
    o = geo.Orientation.from_degrees(40.0, 12.0, -8.0)
    d = geo.SphericalDirection.from_degrees(75.0, 33.0)
    f = np.array([0.8, -0.6])
    m1 = geo.transform_field_to_gcs(f, o, 0.0, d, pol_model=1)
    m2 = geo.transform_field_to_gcs(f, o, 0.0, d, pol_model=2)
    assert np.allclose(m1, m2, atol=1e-12)


def test_pole_degeneracy_raised():
    o = geo.Orientation.from_degrees(10.0, 20.0, 30.0)
    with pytest.raises(geo.PoleDegeneracy):
        geo.field_displacement_angle(o, 0.0, geo.SphericalDirection(0.0, 0.3))
    with pytest.raises(geo.PoleDegeneracy):
        geo.transform_field_to_gcs([1.0, 0.0], o, 0.0,
                                   geo.SphericalDirection(np.pi, 0.0))


def test_zenith_validation():
    with pytest.raises(ValueError):
        geo.SphericalDirection(-0.2, 0.0)
    with pytest.raises(ValueError):
        geo.SphericalDirection(np.pi + 0.2, 0.0)
