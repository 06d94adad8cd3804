import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaphase.errors import EvanescentRay, NotUnit
from metaphase.optics import MediumPair, reflect, refract, tangential_residual

E3 = np.array([0.0, 0.0, 1.0])


# --- worked cases -----------------------------------------------------------


def test_refract_normal_incidence_is_identity():
    m, lam = refract(E3, E3, [0.0, 0.0], MediumPair(1.0, 1.0))
    np.testing.assert_allclose(m, [0, 0, 1], atol=1e-15)
    assert lam == pytest.approx(0.0, abs=1e-15)


def test_refract_matches_scalar_snell():
    # oracle: sin(theta2) = sin(30 deg) / 1.5
    s2 = math.sin(math.radians(30)) / 1.5
    m, _ = refract([0.5, 0.0, math.sqrt(0.75)], E3, [0.0, 0.0], MediumPair(1.0, 1.5))
    np.testing.assert_allclose(m, [s2, 0.0, math.sqrt(1 - s2 * s2)], atol=1e-15)
    assert m[0] == pytest.approx(1 / 3, abs=1e-15)
    assert m[2] == pytest.approx(math.sqrt(8) / 3, abs=1e-15)


def test_refract_phase_gradient_tilts_ray():
    m, lam = refract(E3, E3, [0.5, 0.0], MediumPair(1.0, 1.0))
    np.testing.assert_allclose(m, [-0.5, 0.0, math.sqrt(0.75)], atol=1e-15)
    assert lam == pytest.approx(1 - math.sqrt(0.75), abs=1e-15)
    assert np.linalg.norm(m) == pytest.approx(1.0, abs=1e-15)
    assert tangential_residual(E3, m, E3, [0.5, 0.0], 1.0, 1.0) < 1e-15


def test_reflect_flat_mirror():
    m, lam = reflect(E3, E3, [0.0, 0.0])
    np.testing.assert_allclose(m, [0, 0, -1], atol=1e-15)
    assert lam == pytest.approx(2.0)


def test_reflect_with_gradient():
    m, lam = reflect(E3, E3, [0.6, 0.0])
    assert lam == pytest.approx(1.8, abs=1e-15)
    np.testing.assert_allclose(m, [-0.6, 0.0, -0.8], atol=1e-15)
    assert m @ E3 < 0


def test_reflect_oblique_specular():
    s = math.sqrt(0.5)
    m, _ = reflect([s, 0.0, s], E3, [0.0, 0.0])
    np.testing.assert_allclose(m, [s, 0.0, -s], atol=1e-15)


def test_evanescent_raises_and_nan_mode():
    # grazing exit: n1 sin > n2
    x = np.array([0.9, 0.0, math.sqrt(1 - 0.81)])
    with pytest.raises(EvanescentRay):
        refract(x, E3, [0.0, 0.0], MediumPair(1.5, 1.0))
    m, lam = refract(x, E3, [0.0, 0.0], MediumPair(1.5, 1.0), errors="nan")
    assert np.all(np.isnan(m)) and np.isnan(lam)


def test_reflect_evanescent():
    with pytest.raises(EvanescentRay):
        reflect(E3, E3, [1.2, 0.0])


def test_not_unit_rejected():
    with pytest.raises(NotUnit):
        refract([0.0, 0.0, 2.0], E3, [0.0, 0.0], MediumPair())
    with pytest.raises(NotUnit):
        reflect(E3, [0.0, 1.0], [0.0, 0.0])


def test_wrong_side_rejected():
    with pytest.raises(ValueError):
        refract(-E3, E3, [0.0, 0.0], MediumPair())


def test_medium_pair_validation():
    with pytest.raises(ValueError):
        MediumPair(0.0, 1.0)
    with pytest.raises(ValueError):
        MediumPair(1.0, float("inf"))
    assert MediumPair(1.3, 1.3).matched


def test_vectorized_shapes():
    x = np.tile(E3, (5, 1))
    g = np.zeros((5, 2))
    m, lam = refract(x, E3, g, MediumPair(1.0, 1.2))
    assert m.shape == (5, 3) and lam.shape == (5,)


# --- properties ----------------------------------------------------------------

unit_angle = st.floats(0.0, 1.45)
azimuth = st.floats(0.0, 2 * math.pi)
index = st.floats(1.0, 2.5)
grad = st.floats(-0.8, 0.8)


def _dir(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


def _disc(x, g, n1, n_out):
    w = n1 * x - np.array([g[0], g[1], 0.0])
    return n_out**2 - w @ w + w[2] ** 2


@settings(max_examples=300, deadline=None)
@given(unit_angle, azimuth, grad, grad, index, index)
def test_refraction_laws_hold(theta, phi, gx, gy, n1, n2):
    x = _dir(theta, phi)
    if _disc(x, (gx, gy), n1, n2) < 1e-9:
        return
    m, lam = refract(x, E3, [gx, gy], MediumPair(n1, n2))
    assert abs(np.linalg.norm(m) - 1) < 1e-12
    r = n1 * x - n2 * m - np.array([gx, gy, 0.0])
    assert np.linalg.norm(np.cross(r, E3)) < 1e-12
    assert m @ E3 >= 0


@settings(max_examples=300, deadline=None)
@given(unit_angle, azimuth, grad, grad, index)
def test_reflection_laws_hold(theta, phi, gx, gy, n1):
    x = _dir(theta, phi)
    if _disc(x, (gx, gy), n1, n1) < 1e-9:
        return
    m, lam = reflect(x, E3, [gx, gy], n1)
    assert abs(np.linalg.norm(m) - 1) < 1e-12
    # m = x - (lam/n1) nu - grad(psi/n1)
    expect = x - (lam / n1) * E3 - np.array([gx, gy, 0.0]) / n1
    np.testing.assert_allclose(m, expect, atol=1e-12)
    assert m @ E3 <= 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.5), azimuth)
def test_tilted_normal(theta, phi):
    # law is frame-independent: a rotated normal gives the rotated Snell result
    nu = _dir(0.3, 1.0)
    x = _dir(theta, phi)
    if x @ nu <= 0.05:
        return
    m, _ = refract(x, nu, [0.0, 0.0], MediumPair(1.0, 1.4))
    s1 = np.linalg.norm(np.cross(x, nu))
    s2 = np.linalg.norm(np.cross(m, nu))
    assert s1 == pytest.approx(1.4 * s2, abs=1e-12)
