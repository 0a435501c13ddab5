"""Test di geometria, steering e strutture dati dello stimatore."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.special import i0

from circular import KAPPA_CAP, VonMises
from model import (
    ArrayGeometry,
    ComponentBelief,
    EstimatorConfig,
    PosteriorState,
    Snapshot,
    doa_to_pa,
    expected_steering,
    pa_to_doa,
    steering,
)


def test_geometry_validation():
    geom = ArrayGeometry.from_frequency(15, 3.75, 1500.0, 200.0)
    assert geom.pa_scale == pytest.approx(np.pi)
    with pytest.raises(ValueError):
        ArrayGeometry.from_frequency(15, 4.0, 1500.0, 200.0)  # oltre mezza lunghezza d'onda
    with pytest.raises(ValueError):
        ArrayGeometry.from_frequency(1, 3.75, 1500.0, 200.0)
    with pytest.raises(ValueError):
        ArrayGeometry.from_frequency(4, -1.0, 1500.0, 200.0)


def test_steering(geom):
    assert_allclose(steering(geom, 0.0), np.ones(15))
    assert_allclose(steering(2, np.pi), [1.0, -1.0], atol=1e-12)
    theta = 0.37
    assert_allclose(np.conj(steering(geom, theta)), steering(geom, -theta), atol=1e-12)
    for theta in np.linspace(-np.pi, np.pi, 13):
        assert np.vdot(steering(geom, theta), steering(geom, theta)).real == pytest.approx(15.0)


def test_doa_to_pa(geom):
    assert doa_to_pa(geom, 0.0) == 0.0
    assert doa_to_pa(geom, 90.0) == pytest.approx(-np.pi)
    assert doa_to_pa(geom, 30.0) == pytest.approx(-np.pi / 2)
    with pytest.raises(ValueError):
        doa_to_pa(geom, 90.5)
    betas = np.linspace(-90.0, 90.0, 41)
    assert np.all(np.diff(doa_to_pa(geom, betas)) < 0.0)


def test_pa_to_doa_round_trip(geom):
    for beta in (0.0, 90.0, -90.0, 30.0):
        assert pa_to_doa(geom, doa_to_pa(geom, beta)) == pytest.approx(beta, abs=1e-12)
    betas = np.linspace(-85.0, 85.0, 171)
    assert_allclose(pa_to_doa(geom, doa_to_pa(geom, betas)), betas, atol=1e-12)


def test_pa_to_doa_invisible_region():
    # Spaziatura sotto mezza lunghezza d'onda: |theta| > pa_scale non e' visibile
    geom = ArrayGeometry.from_frequency(8, 2.0, 1500.0, 200.0)
    with pytest.raises(ValueError):
        pa_to_doa(geom, 0.99 * np.pi)


def test_expected_steering_limits():
    assert_allclose(expected_steering(VonMises(0.8, KAPPA_CAP), 6), steering(6, 0.8), atol=1e-6)
    assert_allclose(expected_steering(VonMises(0.8, 0.0), 4), [1.0, 0.0, 0.0, 0.0])


def test_expected_steering_matches_quadrature():
    kappa, mu = 5.0, 0.4
    got = expected_steering(VonMises(mu, kappa), 4)
    for m in range(4):
        def pdf(x):
            return np.exp(kappa * np.cos(x - mu)) / (2 * np.pi * i0(kappa))
        re = quad(lambda x: np.cos(m * x) * pdf(x), -np.pi, np.pi, epsabs=1e-13)[0]
        im = quad(lambda x: np.sin(m * x) * pdf(x), -np.pi, np.pi, epsabs=1e-13)[0]
        assert abs(got[m] - (re + 1j * im)) < 1e-10


def test_snapshot_validation():
    snap = Snapshot(t=3, y=[1.0, 2.0j])
    assert snap.m_sensors == 2
    assert snap.y.dtype == complex
    with pytest.raises(ValueError):
        Snapshot(t=0, y=[1.0])
    with pytest.raises(ValueError):
        Snapshot(t=1, y=[])


def test_posterior_state_validation():
    beliefs = [ComponentBelief(VonMises(0.0, 1.0), 0.5) for _ in range(3)]
    state = PosteriorState(beliefs, s_hat=[0, 1, 0], w_hat=[1.0 + 0j], c_hat=[[0.1]], nu=1.0, tau=1.0)
    assert list(state.active) == [1]
    with pytest.raises(ValueError):
        PosteriorState(beliefs, s_hat=[1, 1, 0], w_hat=[1.0], c_hat=[[0.1]], nu=1.0, tau=1.0)
    with pytest.raises(ValueError):
        PosteriorState(beliefs, s_hat=[0, 0, 0], w_hat=[], c_hat=[], nu=0.0, tau=1.0)
    with pytest.raises(ValueError):
        ComponentBelief(VonMises(0.0, 1.0), 1.5)


def test_estimator_config_validation():
    cfg = EstimatorConfig()
    assert (cfg.l_components, cfg.p_act, cfg.p_deact, cfg.kappa_r, cfg.prune_d) == (15, 0.10, 0.25, 148.0, 4)
    for bad in ({'p_act': 0.0}, {'p_deact': 1.0}, {'rho0': 1.2}, {'kappa_r': 0.0},
                {'l_components': 0}, {'prune_d': 0}, {'max_iter': 0}, {'theta_tol': 0.0}):
        with pytest.raises(ValueError):
            EstimatorConfig(**bad)
