import dataclasses

import numpy as np
import pytest

from fsi_fem.manufactured import (CASES, SourceBundle, channel_periodic_case, compatible_case, heat_wave_case,
                                  inflow_traction, stress_normal, traction_case, verify_sources)


@pytest.mark.parametrize("make", [channel_periodic_case, heat_wave_case, compatible_case])
def test_sources_consistent(make):
    rep = verify_sources(make(), n_samples=50, seed=3)
    assert rep["pass"], rep


@pytest.mark.parametrize("length", [1.0, 2.0])
def test_channel_periodic_lengths(length):
    case = channel_periodic_case(length=length)
    assert case.geometry.x_max == length
    assert verify_sources(case, n_samples=30)["pass"]


def test_perturbed_source_detected():
    case = channel_periodic_case()
    bad = case.sources.f_flow
    broken = case.with_sources(dataclasses.replace(case.sources, f_flow=lambda x, y, t: bad(x, y, t) + 1e-3))
    rep = verify_sources(broken, n_samples=20)
    assert not rep["pass"] and rep["max_residual"] >= 1e-4


def test_channel_kinematic_and_periodic():
    ex = channel_periodic_case().exact
    x = np.linspace(0, 1, 7)
    for y in (0.25, 0.75):
        Y = np.full_like(x, y)
        assert np.allclose(ex.u(x, Y, 0.3), ex.eta_t(x, Y, 0.3), atol=1e-14)
    y = np.linspace(0, 1, 5)
    assert np.allclose(ex.u(np.zeros(5), y, 0.2), ex.u(np.ones(5), y, 0.2), atol=1e-14)
    assert np.allclose(ex.eta(np.zeros(5), y, 0.2), ex.eta(np.ones(5), y, 0.2), atol=1e-14)


def test_heat_wave_vanishes_on_boundary():
    ex = heat_wave_case().exact
    s = np.linspace(0, 1, 9)
    for x, y in ((s, 0 * s), (s, 0 * s + 1), (0 * s, s), (0 * s + 1, s)):
        assert np.max(np.abs(ex.u(x, y, 0.7))) <= 1e-14


def test_compatible_is_affine():
    case = compatible_case()
    ex = case.exact
    x, y = np.array([0.2, 0.9]), np.array([0.1, 0.8])
    assert np.allclose(ex.eta(x, y, 1.0) - ex.eta(x, y, 0.0), ex.u(x, y, 0.0))
    assert np.all(ex.p(x, y, 0.0) == 0.0)


def test_stress_normal_heat_and_stokes():
    ex = channel_periodic_case().exact
    x, y = np.array([0.3]), np.array([0.5])
    G = ex.grad_u(x, y, 0.1)[0]
    D = 0.5 * (G + G.T) - ex.p(x, y, 0.1)[0] * np.eye(2)
    got = stress_normal(ex, "stokes", x, y, 0.1, np.array([0.0]), np.array([1.0]))[0]
    assert np.allclose(got, D[:, 1])
    got = stress_normal(ex, "heat", x, y, 0.1, np.array([1.0]), np.array([0.0]))[0]
    assert np.allclose(got, G[:, 0])


def test_inflow_traction_profile():
    y = np.array([0.15, 0.5, 0.85])
    assert np.allclose(inflow_traction(0.0, y), 0.0)
    assert inflow_traction(2.0, np.array([0.5]))[0] == pytest.approx(0.25 * 4 * 1e4 * 0.35**2)
    assert traction_case().exact is None
    with pytest.raises(ValueError):
        verify_sources(traction_case())


def test_zero_bundle_shapes():
    z = SourceBundle.zero(2)
    x = np.zeros(4)
    assert z.f_flow(x, x, 0).shape == (4, 2) and z.g_mass(x, x, 0).shape == (4,)
    assert SourceBundle.zero(1, with_mass=False).g_mass is None


def test_case_registry():
    assert set(CASES) == {"channel_periodic", "channel_traction", "heat_wave"}
    geometry, exact, sources = heat_wave_case()
    assert geometry.strip_roles == ("heat", "wave") and exact is not None and sources is not None
