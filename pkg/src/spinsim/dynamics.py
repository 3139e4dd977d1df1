"""Drift and diffusion fields of the stochastic Landau-Lifshitz model.

Four formulations of the same physics are provided:

* the coupled Ito system for the unnormalized state Y with mu = Y/|Y|
  (``drift_Y`` / ``diffusion_Y``),
* the autonomous SDE for the unit moment mu, which trades the coupling
  for the closed-form norm profile h(t) (``drift_mu``),
* the Stratonovich model rewritten in Ito form (``drift_strato_ito``),
  time-homogeneous because the Stratonovich noise preserves |mu| = 1,
* the rescaled hysteresis system on t in [0, 1], where the external
  field ramps linearly from +bhat to -bhat (``drift_hysteresis``).

``drift_scalar`` is the one-dimensional equation satisfied by mu.b; it is
not an autonomous SDE and is kept only as a cross-check oracle for
``drift_mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom3 import Mat3, Vec3, amat, as_vec3, cross, norm, require_unit

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Damping alpha > 0, noise magnitude eps > 0, external field b != 0."""

    alpha: float
    eps: float
    b: Vec3

    def __post_init__(self):
        object.__setattr__(self, "b", as_vec3(self.b))
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if not (math.isfinite(self.eps) and self.eps > 0.0):
            raise ValueError(f"eps must be > 0, got {self.eps!r}")
        if norm(self.b) == 0.0:
            raise ValueError("field b must be nonzero")

    @property
    def bnorm(self) -> float:
        return norm(self.b)

    @property
    def bhat(self) -> Vec3:
        return self.b / self.bnorm


@dataclass(frozen=True)
class ConstantField:
    b: Vec3

    def __post_init__(self):
        object.__setattr__(self, "b", as_vec3(self.b))

    def at(self, t: float) -> Vec3:
        return self.b


@dataclass(frozen=True)
class LinearRamp:
    """Rescaled ramp field (1 - 2t) * bhat on t in [0, 1].

    bhat must be a unit direction; eta is the time-scale ratio between
    the field sweep and the fast spin dynamics.
    """

    bhat: Vec3
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "bhat", as_vec3(self.bhat))
        require_unit(self.bhat, UNIT_TOL, "bhat")
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError(f"eta must be > 0, got {self.eta!r}")

    def at(self, t: float) -> Vec3:
        if t < 0.0 or t > 1.0:
            raise ValueError(f"ramp evaluated outside [0, 1]: t = {t!r}")
        return (1.0 - 2.0 * t) * self.bhat


FieldSchedule = ConstantField | LinearRamp


@dataclass(frozen=True)
class NormProfile:
    """Closed-form norm |Y_t| = h(t) = sqrt(2 eps^2 (alpha^2+1) t + 1).

    With ``eta`` set, evaluates the rescaled profile of the hysteresis
    system, h(t) = sqrt(2 (alpha^2+1) eps^2 t / eta + 1).  The squared
    norm grows linearly with the stated rate regardless of the field, so
    the profile never depends on b.
    """

    eps: float
    alpha: float
    eta: float | None = None

    @property
    def rate(self) -> float:
        r = self.eps**2 * (self.alpha**2 + 1.0)
        return r / self.eta if self.eta is not None else r

    def h(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0.0):
            raise ValueError("norm profile evaluated at negative time")
        out = np.sqrt(2.0 * self.rate * t + 1.0)
        return float(out) if out.ndim == 0 else out

    def hprime(self, t):
        return self.rate / self.h(t)


def norm_profile_eval(profile: NormProfile, t):
    """Return (h(t), h'(t)); h' h == rate exactly by construction."""
    h = profile.h(t)
    return h, profile.rate / h


def drift_Y(mu: Vec3, b: Vec3, params: ModelParams) -> Vec3:
    """Deterministic part of dY: -mu ^ b - alpha mu ^ (mu ^ b)."""
    require_unit(mu, UNIT_TOL)
    mxb = cross(mu, b)
    return -mxb - params.alpha * cross(mu, mxb)


def diffusion_Y(mu: Vec3, params: ModelParams) -> Mat3:
    """Noise matrix of dY: eps * A(mu), acting on the Brownian increment.

    A(mu) dW == -mu ^ dW - alpha mu ^ (mu ^ dW) for unit mu, so one
    matrix product realizes both noise terms of the coupled system.
    """
    require_unit(mu, UNIT_TOL)
    return params.eps * amat(mu, params.alpha)


def drift_mu(mu: Vec3, t: float, params: ModelParams, profile: NormProfile) -> Vec3:
    """Drift of the autonomous unit-moment SDE.

    -[mu h'(t) + mu ^ b + alpha (mu (mu.b) - b)] / h(t); the h' term is
    the deterministic norm growth pulled back onto the sphere.
    """
    require_unit(mu, UNIT_TOL)
    h, hp = norm_profile_eval(profile, t)
    b = params.b
    return -(mu * hp + cross(mu, b) + params.alpha * (mu * (mu @ b) - b)) / h


def drift_scalar(
    mdotb: float, mu: Vec3, t: float, params: ModelParams, profile: NormProfile
) -> float:
    """Right-hand side of the scalar mu.b equation; oracle use only.

    The full right-hand side depends on mu, not just on mu.b, so this is
    not integrated standalone; it exists to cross-check drift_mu
    projected onto b.
    """
    if abs(mdotb - float(mu @ params.b)) > UNIT_TOL:
        raise ValueError("mdotb does not match mu . b")
    if abs(mdotb) > params.bnorm + UNIT_TOL:
        raise ValueError("|mdotb| exceeds |b|")
    h, hp = norm_profile_eval(profile, t)
    return -mdotb * hp / h - (params.alpha / h) * (mdotb**2 - params.bnorm**2)


def drift_strato_ito(mu: Vec3, b: Vec3, params: ModelParams) -> Vec3:
    """Ito drift equivalent to the Stratonovich model: A(mu) b - eps^2 (alpha^2+1) mu.

    The second term is the Ito correction; the diffusion matrix stays
    eps * A(mu) and the dynamics is time-homogeneous (|mu| = 1 is
    preserved without any norm profile).
    """
    require_unit(mu, UNIT_TOL)
    a = params.alpha
    return amat(mu, a) @ b - params.eps**2 * (a**2 + 1.0) * mu


def strato_fixed_point(params: ModelParams) -> float:
    """Stationary point l of E[mu.b] for the Stratonovich model, l < |b|."""
    a2p1 = params.alpha**2 + 1.0
    c = params.eps**2 * a2p1 / params.alpha
    return 0.5 * (math.sqrt(4.0 * params.bnorm**2 + c**2) - c)


def drift_hysteresis(
    lam: Vec3, t: float, params: ModelParams, eta: float
) -> tuple[Vec3, float]:
    """Drift of the rescaled hysteresis system and its diffusion scale.

    Returns (drift, s) with diffusion matrix s * A(lam): the ramp field
    (1-2t) b acts through A at rate 1/eta while the noise is scaled by
    1/sqrt(eta), both divided by the rescaled norm profile.  params.b
    must be the unit sweep direction.
    """
    require_unit(lam, UNIT_TOL, "lam")
    require_unit(params.b, UNIT_TOL, "b")
    if t < 0.0 or t > 1.0:
        raise ValueError(f"hysteresis time outside [0, 1]: t = {t!r}")
    if not eta > 0.0:
        raise ValueError(f"eta must be > 0, got {eta!r}")
    profile = NormProfile(params.eps, params.alpha, eta)
    h, hp = norm_profile_eval(profile, t)
    bt = (1.0 - 2.0 * t) * params.b
    drift = -lam * hp / h + (amat(lam, params.alpha) @ bt) / (eta * h)
    return drift, params.eps / (math.sqrt(eta) * h)
