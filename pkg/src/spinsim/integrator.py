"""Seeded Euler-Maruyama time stepping on uniform grids.

``step_coupled`` and ``step_normalized`` are the single-step reference
operations, written in plain numpy against the dynamics module.
``run_path`` integrates whole trajectories through the compiled kernels;
both consume the same per-path normal streams, so a path is a pure
function of (base_seed, path_index) regardless of which route produced
it or how work was scheduled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .dynamics import (
    ConstantField,
    FieldSchedule,
    LinearRamp,
    ModelParams,
    NormProfile,
    norm_profile_eval,
)
from .geom3 import Vec3, as_vec3, norm

MAX_SEED = 2**64


class Mode(enum.Enum):
    COUPLED_ITO = "coupled-ito"
    NORMALIZED_ITO = "normalized-ito"
    STRATONOVICH_ITO = "stratonovich-ito"
    HYSTERESIS = "hysteresis"


class IntegrationError(RuntimeError):
    """Raised when a step produces an unusable state; carries the time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t = {t})")
        self.t = t


def _as_seed(value, name: str) -> np.uint64:
    iv = int(value)
    if iv < 0 or iv >= MAX_SEED:
        raise ValueError(f"{name} must fit in an unsigned 64-bit integer")
    return np.uint64(iv)


class NormalStream:
    """Sequential reader of one path's standard-normal stream.

    Reads are chunk-size independent: take(2) then take(4) sees the same
    values as take(6).
    """

    def __init__(self, base_seed, path_index):
        self.base_seed = _as_seed(base_seed, "base_seed")
        self.path_index = _as_seed(path_index, "path_index")
        self._zbuf = np.empty(_kernels.NBLOCK)
        self._zpos = _kernels.NBLOCK
        self._idxs = np.empty(_kernels.NBLOCK, np.uint8)
        self._oks = np.empty(_kernels.NBLOCK, np.uint8)
        self._ubuf = np.empty(_kernels.UBUF, np.uint64)
        self._upos = 0
        self._ulen = 0
        self._blk = np.uint64(0)

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._zpos == _kernels.NBLOCK:
                self._upos, self._ulen, self._blk = _kernels._normals_block(
                    self._zbuf,
                    0,
                    self._idxs,
                    self._oks,
                    self._ubuf,
                    self._upos,
                    self._ulen,
                    self._blk,
                    self.path_index,
                    self.base_seed,
                )
                self._zpos = 0
            m = min(n - filled, _kernels.NBLOCK - self._zpos)
            out[filled : filled + m] = self._zbuf[self._zpos : self._zpos + m]
            self._zpos += m
            filled += m
        return out


@dataclass(frozen=True)
class RngStream:
    """Identity of one path's increment stream."""

    base_seed: int
    path_index: int

    def __post_init__(self):
        object.__setattr__(self, "base_seed", int(_as_seed(self.base_seed, "base_seed")))
        object.__setattr__(
            self, "path_index", int(_as_seed(self.path_index, "path_index"))
        )

    def normals(self, n: int) -> np.ndarray:
        return _kernels.stream_normals(
            n, np.uint64(self.base_seed), np.uint64(self.path_index)
        )

    def increments(self, n_steps: int, dt: float) -> np.ndarray:
        """Brownian increments, shape (n_steps, 3), scaled by sqrt(dt)."""
        return math.sqrt(dt) * self.normals(3 * n_steps).reshape(n_steps, 3)

    def stream(self) -> NormalStream:
        return NormalStream(self.base_seed, self.path_index)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [t0, t1]; observables kept every record_stride steps."""

    t0: float
    t1: float
    dt: float
    record_stride: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not self.t1 > self.t0:
            raise ValueError("need t1 > t0")
        ratio = (self.t1 - self.t0) / self.dt
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"(t1 - t0)/dt = {ratio!r} is not a positive integer step count"
            )
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer")
        object.__setattr__(self, "record_stride", int(self.record_stride))

    @property
    def n_steps(self) -> int:
        return round((self.t1 - self.t0) / self.dt)

    @property
    def n_recorded(self) -> int:
        return self.n_steps // self.record_stride

    def times(self) -> np.ndarray:
        """Recorded times t0 + k*stride*dt, k = 1..n_recorded."""
        k = np.arange(1, self.n_recorded + 1, dtype=np.float64)
        return self.t0 + self.dt * self.record_stride * k


@dataclass
class PathState:
    """One trajectory's state; y is carried in coupled mode only."""

    t: float
    y: Vec3 | None
    mu: Vec3
    rng: NormalStream


def _renormalize(v: Vec3, t: float) -> Vec3:
    n = norm(v)
    if not (n > 0.0 and math.isfinite(n)):
        raise IntegrationError("state norm collapsed to zero or diverged", t)
    return v / n


def step_coupled(state: PathState, params: ModelParams, b: Vec3, dt: float) -> PathState:
    """One Euler-Maruyama step of the coupled (Y, mu) system.

    Both drift and diffusion are evaluated at mu = Y/|Y|; Y itself is
    never rescaled, so its norm carries the model's deterministic
    growth.
    """
    from .dynamics import diffusion_Y, drift_Y

    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    dw = math.sqrt(dt) * state.rng.take(3)
    y = state.y + drift_Y(state.mu, b, params) * dt + diffusion_Y(state.mu, params) @ dw
    t = state.t + dt
    return PathState(t=t, y=y, mu=_renormalize(y, t), rng=state.rng)


def step_normalized(
    state: PathState,
    drift_fn: Callable[[Vec3, float], Vec3],
    diffusion_fn: Callable[[Vec3, float], np.ndarray],
    dt: float,
) -> PathState:
    """One renormalized step mu' = normalize(mu + drift dt + diffusion dW)."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    dw = math.sqrt(dt) * state.rng.take(3)
    mu = (
        state.mu
        + drift_fn(state.mu, state.t) * dt
        + diffusion_fn(state.mu, state.t) @ dw
    )
    t = state.t + dt
    return PathState(t=t, y=None, mu=_renormalize(mu, t), rng=state.rng)


def mu_step_coefficients(
    mode: Mode, schedule: FieldSchedule, grid: GridSpec, params
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-step scalars (bhat, c0, cb, cw) for the sphere kernel.

    The kernel's update mu' = normalize((1 - c0) mu + A(mu)(cb bhat + cw z))
    realizes each formulation through these arrays; z is a 3-vector of
    unit normals, so cw absorbs sqrt(dt).
    """
    n = grid.n_steps
    tk = grid.t0 + grid.dt * np.arange(n)
    dt = grid.dt
    eps, alpha = params.eps, params.alpha
    if mode is Mode.NORMALIZED_ITO:
        if not isinstance(schedule, ConstantField):
            raise ValueError("normalized mode needs a constant field")
        b = as_vec3(schedule.b)
        bn = norm(b)
        profile = NormProfile(eps, alpha)
        h, hp = norm_profile_eval(profile, tk)
        return b / bn, hp / h * dt, bn * dt / h, eps * math.sqrt(dt) / h
    if mode is Mode.STRATONOVICH_ITO:
        if not isinstance(schedule, ConstantField):
            raise ValueError("Stratonovich mode needs a constant field")
        b = as_vec3(schedule.b)
        bn = norm(b)
        ones = np.ones(n)
        c0 = eps**2 * (alpha**2 + 1.0) * dt * ones
        return b / bn, c0, bn * dt * ones, eps * math.sqrt(dt) * ones
    if mode is Mode.HYSTERESIS:
        if not isinstance(schedule, LinearRamp):
            raise ValueError("hysteresis mode needs a linear ramp schedule")
        if grid.t0 < 0.0 or grid.t1 > 1.0:
            raise ValueError("hysteresis grid must lie in [0, 1]")
        eta = schedule.eta
        profile = NormProfile(eps, alpha, eta)
        h, hp = norm_profile_eval(profile, tk)
        cb = (1.0 - 2.0 * tk) * dt / (eta * h)
        cw = eps * math.sqrt(dt) / (math.sqrt(eta) * h)
        return schedule.bhat.copy(), hp / h * dt, cb, cw
    raise ValueError(f"no sphere coefficients for mode {mode}")


def _default_mu0(mode: Mode, schedule: FieldSchedule) -> Vec3:
    if mode is Mode.HYSTERESIS:
        return schedule.bhat.copy()
    b = as_vec3(schedule.b)
    bhat = b / norm(b)
    if mode is Mode.STRATONOVICH_ITO:
        return bhat
    return -bhat  # convergence experiments start anti-aligned


def run_path(
    schedule: FieldSchedule,
    mode: Mode,
    grid: GridSpec,
    params,
    rng: RngStream,
    observables: tuple[str, ...] = ("mdotb",),
    mu0: Vec3 | None = None,
) -> dict[str, np.ndarray]:
    """Integrate one path and return its recorded series.

    Result keys: "t" plus the requested observables among "mdotb" (the
    projection onto the unit field direction, mu . b/|b|), "mu"
    (components, shape (n, 3)) and "ynorm" (|y|, coupled mode only).
    Deterministic in (rng.base_seed, rng.path_index).
    """
    known = {"mdotb", "mu", "ynorm"}
    bad = set(observables) - known
    if bad:
        raise ValueError(f"unknown observables: {sorted(bad)}")
    if "ynorm" in observables and mode is not Mode.COUPLED_ITO:
        raise ValueError("ynorm is only recorded in coupled mode")
    if mode is Mode.HYSTERESIS:
        if not isinstance(schedule, LinearRamp):
            raise ValueError("hysteresis mode needs a linear ramp schedule")
    elif not isinstance(schedule, ConstantField):
        raise ValueError(f"{mode.value} mode needs a constant field")
    mu0 = as_vec3(mu0) if mu0 is not None else _default_mu0(mode, schedule)
    n_rec = grid.n_recorded
    seed = np.uint64(rng.base_seed)
    path = np.uint64(rng.path_index)
    flags = np.zeros(1, np.int64)
    out: dict[str, np.ndarray] = {"t": grid.times()}

    if mode is Mode.COUPLED_ITO:
        if not isinstance(schedule, ConstantField):
            raise ValueError("coupled mode needs a constant field")
        obs_y2 = np.empty((1, n_rec))
        obs_mdb = np.empty((1, n_rec))
        _kernels.sim_coupled_ensemble(
            mu0,
            as_vec3(schedule.b),
            float(params.alpha),
            float(params.eps),
            grid.dt,
            grid.n_steps,
            grid.record_stride,
            seed,
            path,
            1,
            obs_y2,
            obs_mdb,
            flags,
        )
        _check_flags(flags, grid)
        if "ynorm" in observables:
            out["ynorm"] = np.sqrt(obs_y2[0])
        if "mdotb" in observables:
            out["mdotb"] = obs_mdb[0]
        if "mu" in observables:
            raise ValueError("mu components are not recorded in coupled mode")
        return out

    bhat, c0, cb, cw = mu_step_coefficients(mode, schedule, grid, params)
    want_mu = "mu" in observables
    obs = np.empty((1, n_rec))
    mu_out = np.empty((1, n_rec, 3)) if want_mu else np.empty((1, 1, 3))
    _kernels.sim_mu_ensemble(
        mu0,
        bhat,
        float(params.alpha),
        np.ascontiguousarray(c0, dtype=np.float64),
        np.ascontiguousarray(np.broadcast_to(cb, (grid.n_steps,)), dtype=np.float64),
        np.ascontiguousarray(np.broadcast_to(cw, (grid.n_steps,)), dtype=np.float64),
        grid.record_stride,
        seed,
        path,
        1,
        obs,
        mu_out,
        want_mu,
        flags,
    )
    _check_flags(flags, grid)
    if "mdotb" in observables:
        out["mdotb"] = obs[0]
    if want_mu:
        out["mu"] = mu_out[0]
    return out


def _check_flags(flags: np.ndarray, grid: GridSpec) -> None:
    bad = np.nonzero(flags)[0]
    if bad.size:
        k = int(flags[bad[0]])
        raise IntegrationError(
            "state norm collapsed to zero or diverged",
            grid.t0 + grid.dt * k,
        )
