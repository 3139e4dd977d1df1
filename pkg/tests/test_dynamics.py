"""Model-term oracles: drifts, norm profile, fixed points, conversions."""

import math

import numpy as np
import pytest

from spinsim.dynamics import (
    ConstantField,
    LinearRamp,
    ModelParams,
    NormProfile,
    diffusion_Y,
    drift_hysteresis,
    drift_mu,
    drift_scalar,
    drift_strato_ito,
    drift_Y,
    norm_profile_eval,
    strato_fixed_point,
)
from spinsim.geom3 import amat, cross, normalize, vec3

rng = np.random.default_rng(20240818)

E3 = vec3(0.0, 0.0, 1.0)


def unit():
    return normalize(rng.normal(0.0, 1.0, 3))


def params(alpha=1.0, eps=0.1, b=None):
    return ModelParams(alpha=alpha, eps=eps, b=E3 if b is None else b)


def test_model_params_validation():
    p = params()
    assert p.bnorm == 1.0
    assert np.array_equal(p.bhat, E3)
    with pytest.raises(ValueError):
        ModelParams(alpha=0.0, eps=0.1, b=E3)
    with pytest.raises(ValueError):
        ModelParams(alpha=-1.0, eps=0.1, b=E3)
    with pytest.raises(ValueError):
        ModelParams(alpha=1.0, eps=0.0, b=E3)
    with pytest.raises(ValueError):
        ModelParams(alpha=1.0, eps=0.1, b=vec3(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        ModelParams(alpha=math.nan, eps=0.1, b=E3)


def test_field_schedules():
    cf = ConstantField(vec3(0.0, 1.0, 2.0))
    assert np.array_equal(cf.at(0.0), cf.at(17.3))
    ramp = LinearRamp(E3, 0.01)
    assert np.array_equal(ramp.at(0.0), E3)
    assert np.allclose(ramp.at(0.5), 0.0, atol=0.0)
    assert np.array_equal(ramp.at(1.0), -E3)
    assert np.allclose(ramp.at(0.25), 0.5 * E3, atol=1e-15)
    with pytest.raises(ValueError):
        ramp.at(1.5)
    with pytest.raises(ValueError):
        ramp.at(-0.1)
    with pytest.raises(ValueError):
        LinearRamp(vec3(0.0, 0.0, 2.0), 0.01)  # not unit
    with pytest.raises(ValueError):
        LinearRamp(E3, 0.0)


def test_norm_profile_closed_form():
    prof = NormProfile(0.1, 1.0)
    assert prof.h(0.0) == 1.0
    for t in (0.0, 0.5, 10.0, 1e4):
        assert abs(prof.h(t) - math.sqrt(2 * 0.01 * 2 * t + 1.0)) < 1e-12
    # h' h == rate exactly
    h, hp = norm_profile_eval(prof, 3.7)
    assert abs(h * hp - prof.rate) < 1e-15
    ts = np.array([0.0, 1.0, 2.0])
    assert prof.h(ts).shape == (3,)
    with pytest.raises(ValueError):
        prof.h(-1e-9)


def test_norm_profile_eta_rescaling():
    """The rescaled profile is the plain profile run eta times faster."""
    base = NormProfile(0.05, 2.0)
    fast = NormProfile(0.05, 2.0, eta=0.01)
    for t in (0.0, 0.1, 0.9):
        assert abs(fast.h(t) - base.h(t / 0.01)) < 1e-12


def test_drift_Y_componentwise():
    for _ in range(30):
        mu = unit()
        p = params(alpha=float(rng.uniform(0.2, 3.0)), b=rng.normal(0.0, 1.0, 3))
        expect = -cross(mu, p.b) - p.alpha * cross(mu, cross(mu, p.b))
        assert np.allclose(drift_Y(mu, p.b, p), expect, atol=1e-14)


def test_diffusion_Y_is_scaled_amat():
    for _ in range(30):
        mu = unit()
        p = params(eps=float(rng.uniform(0.01, 0.5)))
        dw = rng.normal(0.0, 1.0, 3)
        via_matrix = diffusion_Y(mu, p) @ dw
        via_cross = -p.eps * (cross(mu, dw) + p.alpha * cross(mu, cross(mu, dw)))
        assert np.allclose(via_matrix, via_cross, atol=1e-14)
        assert np.allclose(diffusion_Y(mu, p), p.eps * amat(mu, p.alpha), atol=0.0)


def test_drift_requires_unit_mu():
    p = params()
    prof = NormProfile(p.eps, p.alpha)
    with pytest.raises(ValueError):
        drift_Y(vec3(1.2, 0.0, 0.0), p.b, p)
    with pytest.raises(ValueError):
        drift_mu(vec3(0.5, 0.0, 0.0), 0.0, p, prof)
    with pytest.raises(ValueError):
        drift_strato_ito(vec3(0.0, 0.0, 0.9), p.b, p)


def test_drift_mu_tangency():
    """mu . drift = -h'/h: the radial part exactly cancels norm growth."""
    for _ in range(30):
        mu = unit()
        p = params(alpha=float(rng.uniform(0.2, 3.0)), eps=float(rng.uniform(0.01, 0.5)))
        prof = NormProfile(p.eps, p.alpha)
        t = float(rng.uniform(0.0, 20.0))
        h, hp = norm_profile_eval(prof, t)
        assert abs(float(mu @ drift_mu(mu, t, p, prof)) + hp / h) < 1e-13


def test_scalar_projection_oracle():
    """Projecting the vector drift on b reproduces the scalar equation."""
    for _ in range(60):
        mu = unit()
        b = rng.normal(0.0, 1.0, 3)
        p = params(
            alpha=float(rng.uniform(0.2, 3.0)),
            eps=float(rng.uniform(0.01, 0.5)),
            b=b,
        )
        prof = NormProfile(p.eps, p.alpha)
        t = float(rng.uniform(0.0, 50.0))
        x = float(mu @ b)
        projected = float(drift_mu(mu, t, p, prof) @ b)
        scalar = drift_scalar(x, mu, t, p, prof)
        assert abs(projected - scalar) < 1e-12


def test_drift_scalar_validates_consistency():
    p = params()
    prof = NormProfile(p.eps, p.alpha)
    mu = vec3(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        drift_scalar(0.5, mu, 0.0, p, prof)  # mdotb does not match mu.b


def test_ito_correction_finite_difference():
    """The Stratonovich-to-Ito drift correction equals -eps^2 (alpha^2+1) mu.

    correction_i = 1/2 sum_{j,k} d(sigma_ij)/dx_k sigma_kj with
    sigma(x) = eps A(x), checked by central differences at unit points.
    """
    step = 1e-6
    for _ in range(20):
        mu = unit()
        alpha = float(rng.uniform(0.2, 3.0))
        eps = float(rng.uniform(0.05, 0.4))
        p = params(alpha=alpha, eps=eps)

        def sigma(x):
            return eps * amat(x, alpha)

        s0 = sigma(mu)
        corr = np.zeros(3)
        for k in range(3):
            dx = np.zeros(3)
            dx[k] = step
            dsig = (sigma(mu + dx) - sigma(mu - dx)) / (2.0 * step)
            corr += 0.5 * dsig @ s0[k, :]
        expect = -(eps**2) * (alpha**2 + 1.0) * mu
        assert np.allclose(corr, expect, atol=1e-6)
        # and the assembled Ito drift carries exactly this correction
        full = drift_strato_ito(mu, p.b, p)
        assert np.allclose(full - amat(mu, alpha) @ p.b, expect, atol=1e-12)


def test_strato_fixed_point():
    # stationarity: alpha (|b|^2 - l^2) = eps^2 (alpha^2 + 1) l
    for _ in range(30):
        p = params(
            alpha=float(rng.uniform(0.2, 3.0)),
            eps=float(rng.uniform(0.01, 0.5)),
            b=rng.normal(0.0, 1.0, 3),
        )
        l = strato_fixed_point(p)
        resid = p.alpha * (p.bnorm**2 - l**2) - p.eps**2 * (p.alpha**2 + 1.0) * l
        assert abs(resid) < 1e-12
        assert 0.0 < l < p.bnorm
    assert abs(strato_fixed_point(params()) - 0.990050) < 5e-7
    assert abs(strato_fixed_point(params(eps=0.3)) - 0.914042) < 5e-7


def test_drift_hysteresis_t0_identity():
    """At t=0 the rescaled drift is 1/eta times the unscaled moment drift."""
    for eta in (1.0, 0.1, 0.01):
        for _ in range(10):
            lam = unit()
            p = params(alpha=float(rng.uniform(0.2, 3.0)), eps=float(rng.uniform(0.01, 0.3)))
            drift, scale = drift_hysteresis(lam, 0.0, p, eta)
            base = drift_mu(lam, 0.0, p, NormProfile(p.eps, p.alpha))
            assert np.allclose(drift, base / eta, rtol=1e-12, atol=1e-15)
            assert abs(scale - p.eps / math.sqrt(eta)) < 1e-15


def test_drift_hysteresis_midpoint_and_domain():
    p = params()
    lam = unit()
    # at t = 1/2 the field vanishes: only the norm-profile pullback remains
    drift, scale = drift_hysteresis(lam, 0.5, p, 0.01)
    prof = NormProfile(p.eps, p.alpha, 0.01)
    h, hp = norm_profile_eval(prof, 0.5)
    assert np.allclose(drift, -lam * hp / h, atol=1e-14)
    assert abs(scale - p.eps / (math.sqrt(0.01) * h)) < 1e-15
    with pytest.raises(ValueError):
        drift_hysteresis(lam, 1.2, p, 0.01)
    with pytest.raises(ValueError):
        drift_hysteresis(lam, 0.0, p, 0.0)
    with pytest.raises(ValueError):
        drift_hysteresis(lam, 0.0, params(b=vec3(0.0, 0.0, 2.0)), 0.01)


def test_drift_hysteresis_field_reversal():
    """The field term flips sign across t = 1/2 at equal profile values."""
    p = params(alpha=0.7)
    lam = unit()
    eta = 0.05
    prof = NormProfile(p.eps, p.alpha, eta)
    for dt_ in (0.1, 0.3):
        lo, _ = drift_hysteresis(lam, 0.5 - dt_, p, eta)
        hi, _ = drift_hysteresis(lam, 0.5 + dt_, p, eta)
        h_lo = prof.h(0.5 - dt_)
        h_hi = prof.h(0.5 + dt_)
        field_lo = lo + lam * prof.hprime(0.5 - dt_) / h_lo
        field_hi = hi + lam * prof.hprime(0.5 + dt_) / h_hi
        assert np.allclose(field_lo * (eta * h_lo), -field_hi * (eta * h_hi), atol=1e-13)
