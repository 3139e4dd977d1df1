"""Monte Carlo ensemble drivers and estimators for the model's observables.

Paths are dealt out in fixed blocks of 256 consecutive path indices.
Workers may compute blocks in any order, but block results are merged in
block order, so every estimate is bit-identical for a given
(seed, n_paths) no matter how many threads ran the blocks.

All estimators act on the recorded projection x = mu . b/|b| and derive
their observable from it per grid point; failed paths (integration
breakdown, which the renormalized scheme should never produce) are
excluded from the statistics and flagged on the result.
"""

from __future__ import annotations

import enum
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import (
    ConstantField,
    LinearRamp,
    ModelParams,
    NormProfile,
    strato_fixed_point,
)
from .geom3 import Vec3, as_vec3, norm
from .integrator import GridSpec, Mode, mu_step_coefficients

PATH_BLOCK = 256


def _n_threads(threads: int | None) -> int:
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return int(threads)


@dataclass
class EnsembleEstimate:
    """Per-grid-point (count, mean, M2) accumulator for a scalar observable."""

    t: np.ndarray
    n: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, t: np.ndarray) -> "EnsembleEstimate":
        m = t.shape[0]
        return cls(t=t, n=np.zeros(m, np.int64), mean=np.zeros(m), m2=np.zeros(m))

    @classmethod
    def from_batch(cls, t: np.ndarray, values: np.ndarray) -> "EnsembleEstimate":
        """Accumulate a (n_samples, n_points) batch in one shot."""
        k = values.shape[0]
        if k == 0:
            return cls.empty(t)
        mean = values.mean(axis=0)
        m2 = ((values - mean) ** 2).sum(axis=0)
        return cls(t=t, n=np.full(t.shape[0], k, np.int64), mean=mean, m2=m2)

    def merge(self, other: "EnsembleEstimate") -> "EnsembleEstimate":
        """Combine two accumulators as if their samples were concatenated."""
        na, nb = self.n, other.n
        n = na + nb
        safe = np.where(n > 0, n, 1)
        delta = other.mean - self.mean
        mean = self.mean + delta * (nb / safe)
        m2 = self.m2 + other.m2 + delta**2 * (na * nb / safe)
        return EnsembleEstimate(t=self.t, n=n, mean=mean, m2=m2)

    @property
    def stderr(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.sqrt(self.m2 / (self.n * (self.n - 1)))
        return np.where(self.n > 1, se, np.nan)


def wilson_interval(k, n, z: float = 1.96):
    """Wilson score interval for a binomial frequency k/n."""
    k = np.asarray(k, dtype=np.float64)
    if n == 0:
        shape = np.broadcast(k).shape
        return np.zeros(shape), np.ones(shape)
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = p + z2 / (2.0 * n)
    half = z * np.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    # the interval lives in [0, 1]; clip float roundoff at the endpoints
    return (
        np.clip((center - half) / denom, 0.0, 1.0),
        np.clip((center + half) / denom, 0.0, 1.0),
    )


def _blocks(n_paths: int):
    for lo in range(0, n_paths, PATH_BLOCK):
        yield lo, min(PATH_BLOCK, n_paths - lo)


def _run_ordered(n_paths: int, threads: int, worker):
    """Run worker(path0, count) per block; results in block order."""
    jobs = list(_blocks(n_paths))
    if threads <= 1 or len(jobs) <= 1:
        return [worker(lo, cnt) for lo, cnt in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, lo, cnt) for lo, cnt in jobs]
        return [f.result() for f in futures]


def _sphere_ensemble(
    mode: Mode,
    schedule,
    grid: GridSpec,
    params,
    mu0: Vec3,
    n_paths: int,
    seed: int,
    threads: int | None,
    transforms: dict,
    counters: dict | None = None,
    path_reducers: dict | None = None,
):
    """Shared driver: one kernel pass, many derived accumulators.

    transforms: name -> f(x, t) with x the (B, n_rec) block of mu.bhat
    values; each is accumulated into its own EnsembleEstimate.
    counters: name -> boolean f(x, t); exceedance counts per grid point.
    path_reducers: name -> f(x, t) returning one value per path.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    counters = counters or {}
    path_reducers = path_reducers or {}
    bhat, c0, cb, cw = mu_step_coefficients(mode, schedule, grid, params)
    c0 = np.ascontiguousarray(c0, dtype=np.float64)
    cb = np.ascontiguousarray(np.broadcast_to(cb, (grid.n_steps,)), dtype=np.float64)
    cw = np.ascontiguousarray(np.broadcast_to(cw, (grid.n_steps,)), dtype=np.float64)
    t = grid.times()
    n_rec = grid.n_recorded
    seed64 = np.uint64(seed)
    mu0 = as_vec3(mu0)
    alpha = float(params.alpha)
    dummy_mu = np.empty((1, 1, 3))

    def worker(path0: int, count: int):
        obs = np.empty((count, n_rec))
        flags = np.zeros(count, np.int64)
        _kernels.sim_mu_ensemble(
            mu0, bhat, alpha, c0, cb, cw, grid.record_stride,
            seed64, np.uint64(path0), count, obs, dummy_mu, False, flags,
        )
        good = obs[flags == 0]
        out = {
            "n_failed": int(np.count_nonzero(flags)),
            "est": {k: EnsembleEstimate.from_batch(t, f(good, t)) for k, f in transforms.items()},
            "cnt": {k: f(good, t).sum(axis=0, dtype=np.int64) for k, f in counters.items()},
            "paths": {k: f(good, t) for k, f in path_reducers.items()},
        }
        return out

    results = _run_ordered(n_paths, _n_threads(threads), worker)
    est = {k: EnsembleEstimate.empty(t) for k in transforms}
    cnt = {k: np.zeros(n_rec, np.int64) for k in counters}
    paths = {k: [] for k in path_reducers}
    n_failed = 0
    for r in results:
        n_failed += r["n_failed"]
        for k in transforms:
            est[k] = est[k].merge(r["est"][k])
        for k in counters:
            cnt[k] += r["cnt"][k]
        for k in path_reducers:
            paths[k].append(r["paths"][k])
    paths = {k: np.concatenate(v) if v else np.empty(0) for k, v in paths.items()}
    return est, cnt, paths, n_failed


def _window_cols(t: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    cols = np.nonzero((t >= lo) & (t <= hi))[0]
    if cols.size == 0:
        raise ValueError(f"no recorded points inside window [{lo}, {hi}]")
    return cols


@dataclass
class AlignmentResult:
    est: EnsembleEstimate  # mu . b per grid point
    tail_min: np.ndarray  # per-path min of mu . b over the tail window
    tail_window: tuple[float, float]
    n_failed: int = 0

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


def estimate_alignment(
    params,
    mu0: Vec3,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    threads: int | None = None,
    tail_window: tuple[float, float] | None = None,
) -> AlignmentResult:
    """Ensemble mean of mu_t . b, plus per-path tail minima.

    The tail minima (default window [T/2, T]) support the almost-sure
    convergence proxy: a path counts as converged when its running
    minimum over the window stays near |b|.
    """
    bn = norm(as_vec3(params.b))
    window = tail_window or (grid.t0 + 0.5 * (grid.t1 - grid.t0), grid.t1)
    t = grid.times()
    cols = _window_cols(t, window)
    est, _, paths, n_failed = _sphere_ensemble(
        Mode.NORMALIZED_ITO,
        ConstantField(params.b),
        grid,
        params,
        mu0,
        n_paths,
        seed,
        threads,
        transforms={"mdotb": lambda x, t: bn * x},
        path_reducers={"tail_min": lambda x, t: bn * x[:, cols].min(axis=1)},
    )
    return AlignmentResult(
        est=est["mdotb"], tail_min=paths["tail_min"], tail_window=window,
        n_failed=n_failed,
    )


@dataclass
class RateStatistic:
    """Normalized expected misalignment at one time."""

    t: float
    value: float
    stderr: float


@dataclass
class RateResult:
    est: EnsembleEstimate  # E[h(t) (|b| - mu_t . b)]
    limit_constant: float  # eps^2 (1+alpha^2) / (2 alpha)
    stats: list[RateStatistic] = field(default_factory=list)
    stats_h: list[RateStatistic] = field(default_factory=list)
    n_failed: int = 0

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


def estimate_rate(
    params: ModelParams,
    mu0: Vec3,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    threads: int | None = None,
) -> RateResult:
    """Normalized sqrt(t)-rate statistic along the grid.

    ``stats`` uses the sqrt(t) normalization
    (2 alpha sqrt(2) / (eps sqrt(1+alpha^2))) sqrt(t) E[|b| - mu_t . b];
    ``stats_h`` replaces sqrt(t) by h(t)/(eps sqrt(2 (1+alpha^2))).  Both
    tend to 1; their ratio differs by O(1/t).  ``est`` carries the raw
    weighted misalignment E[h(t) (|b| - mu_t . b)], whose limit is
    ``limit_constant``.
    """
    profile = NormProfile(params.eps, params.alpha)
    if profile.h(grid.t1) < 10.0:
        warnings.warn(
            f"h(T) = {profile.h(grid.t1):.2f} < 10: horizon too short for the "
            "asymptotic rate regime",
            stacklevel=2,
        )
    bn = params.bnorm
    t_rec = grid.times()
    h_rec = profile.h(t_rec)
    est, _, _, n_failed = _sphere_ensemble(
        Mode.NORMALIZED_ITO,
        ConstantField(params.b),
        grid,
        params,
        mu0,
        n_paths,
        seed,
        threads,
        transforms={"hxi": lambda x, t: h_rec * (bn * (1.0 - x))},
    )
    e = est["hxi"]
    alpha, eps = params.alpha, params.eps
    limit = eps**2 * (1.0 + alpha**2) / (2.0 * alpha)
    pref = 2.0 * alpha * math.sqrt(2.0) / (eps * math.sqrt(1.0 + alpha**2))
    with np.errstate(invalid="ignore"):
        se = e.stderr
    factor_sqrt = pref * np.sqrt(t_rec) / h_rec
    factor_h = 1.0 / limit
    stats = [
        RateStatistic(float(tt), float(v), float(s))
        for tt, v, s in zip(t_rec, factor_sqrt * e.mean, factor_sqrt * se)
    ]
    stats_h = [
        RateStatistic(float(tt), float(v), float(s))
        for tt, v, s in zip(t_rec, factor_h * e.mean, factor_h * se)
    ]
    return RateResult(
        est=e, limit_constant=limit, stats=stats, stats_h=stats_h, n_failed=n_failed
    )


def estimate_l2_decay(
    params: ModelParams,
    mu0: Vec3,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    threads: int | None = None,
):
    """EnsembleEstimate of E[h(t) (|b| - mu_t . b)^2], which decays to 0."""
    profile = NormProfile(params.eps, params.alpha)
    bn = params.bnorm
    h_rec = profile.h(grid.times())
    est, _, _, n_failed = _sphere_ensemble(
        Mode.NORMALIZED_ITO,
        ConstantField(params.b),
        grid,
        params,
        mu0,
        n_paths,
        seed,
        threads,
        transforms={"hxi2": lambda x, t: h_rec * (bn * (1.0 - x)) ** 2},
    )
    e = est["hxi2"]
    e.n_failed = n_failed  # type: ignore[attr-defined]
    return e


@dataclass
class TailProbabilityResult:
    t: np.ndarray
    freq: np.ndarray
    count: np.ndarray
    n: int
    wilson_lo: np.ndarray
    wilson_hi: np.ndarray
    beta: float
    eta_thresh: float
    n_failed: int = 0


def tail_probability(
    params: ModelParams,
    mu0: Vec3,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    beta: float,
    eta_thresh: float,
    threads: int | None = None,
) -> TailProbabilityResult:
    """Empirical P(t^beta (|b| - mu_t . b) >= eta) per recorded t.

    beta = 0 is admitted as the unweighted special case; beta must stay
    below 1/2, where the bound degenerates.
    """
    if not 0.0 <= beta < 0.5:
        raise ValueError(f"beta must lie in [0, 1/2), got {beta!r}")
    if eta_thresh <= 0.0:
        raise ValueError("eta_thresh must be > 0")
    bn = params.bnorm
    t_rec = grid.times()
    w = t_rec**beta
    _, cnt, _, n_failed = _sphere_ensemble(
        Mode.NORMALIZED_ITO,
        ConstantField(params.b),
        grid,
        params,
        mu0,
        n_paths,
        seed,
        threads,
        transforms={},
        counters={"exceed": lambda x, t: w * (bn * (1.0 - x)) >= eta_thresh},
    )
    n_good = n_paths - n_failed
    k = cnt["exceed"]
    freq = k / n_good if n_good else np.full_like(t_rec, np.nan)
    lo, hi = wilson_interval(k, n_good)
    return TailProbabilityResult(
        t=t_rec, freq=freq, count=k, n=n_good, wilson_lo=lo, wilson_hi=hi,
        beta=beta, eta_thresh=eta_thresh, n_failed=n_failed,
    )


@dataclass
class StratoResult:
    est: EnsembleEstimate  # E[mu_t . b]
    residual: EnsembleEstimate  # stationarity residual, 0 at equilibrium
    tail_mean: tuple[float, float]  # (value, stderr) of tail-window mu.b
    tail_residual: tuple[float, float]
    fixed_point: float
    tail_window: tuple[float, float]
    n_failed: int = 0

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


def strato_equilibrium(
    params: ModelParams,
    mu0: Vec3,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    threads: int | None = None,
    tail_window: tuple[float, float] | None = None,
) -> StratoResult:
    """Mean alignment and stationarity residual of the Stratonovich model.

    The residual alpha (|b|^2 - E[(mu.b)^2]) - eps^2 (alpha^2+1) E[mu.b]
    is the time derivative of E[mu.b]; near the stationary regime it
    vanishes.  It is accumulated pathwise (the expression is linear in
    the per-path quantities), so its stderr is a plain ensemble error.
    Tail summaries average each path over the tail window first, then
    treat the per-path averages as i.i.d. samples.
    """
    alpha, eps, bn = params.alpha, params.eps, params.bnorm
    window = tail_window or (grid.t0 + 0.5 * (grid.t1 - grid.t0), grid.t1)
    t = grid.times()
    cols = _window_cols(t, window)

    def resid(x, t):
        mb = bn * x
        return alpha * (bn**2 - mb**2) - eps**2 * (alpha**2 + 1.0) * mb

    est, _, paths, n_failed = _sphere_ensemble(
        Mode.STRATONOVICH_ITO,
        ConstantField(params.b),
        grid,
        params,
        mu0,
        n_paths,
        seed,
        threads,
        transforms={"mdotb": lambda x, t: bn * x, "resid": resid},
        path_reducers={
            "tail_x": lambda x, t: bn * x[:, cols].mean(axis=1),
            "tail_r": lambda x, t: resid(x[:, cols], t[cols]).mean(axis=1),
        },
    )

    def summarize(v: np.ndarray) -> tuple[float, float]:
        if v.size < 2:
            return float(v.mean()) if v.size else math.nan, math.nan
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

    return StratoResult(
        est=est["mdotb"],
        residual=est["resid"],
        tail_mean=summarize(paths["tail_x"]),
        tail_residual=summarize(paths["tail_r"]),
        fixed_point=strato_fixed_point(params),
        tail_window=window,
        n_failed=n_failed,
    )


@dataclass
class HittingTimeSample:
    delta: float
    tau: float
    censored: bool


@dataclass
class HittingTimeResult:
    delta: float
    t_max: float
    tau: np.ndarray  # censored samples carry tau = t_max
    censored: np.ndarray
    n_failed: int = 0

    @property
    def samples(self) -> list[HittingTimeSample]:
        return [
            HittingTimeSample(self.delta, float(t), bool(c))
            for t, c in zip(self.tau, self.censored)
        ]

    @property
    def censor_fraction(self) -> float:
        return float(self.censored.mean()) if self.tau.size else math.nan

    @property
    def mean_tau_lower_bound(self) -> float:
        """Mean of the censored sample; a lower bound for E[tau]."""
        return float(self.tau.mean()) if self.tau.size else math.nan

    @property
    def t_max_too_small(self) -> bool:
        return self.censor_fraction > 0.5

    def survival(self, t) -> np.ndarray:
        """P(tau > t) for t <= t_max; censored paths survive throughout."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        alive = self.censored[None, :] | (self.tau[None, :] > t[:, None])
        return alive.mean(axis=1)

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


def hitting_time(
    params: ModelParams,
    delta: float,
    t_max: float,
    dt: float,
    n_paths: int,
    seed: int,
    threads: int | None = None,
) -> HittingTimeResult:
    """First times the Stratonovich path leaves the cap {mu . b > delta}.

    Paths start aligned (mu_0 = b/|b|).  delta must exceed the
    stationary point of E[mu.b], below which the cap's complement is no
    longer recurrent in mean, and stay below |b|.
    """
    l_th = strato_fixed_point(params)
    if not l_th < delta < params.bnorm:
        raise ValueError(
            f"delta must lie in ({l_th:.6f}, {params.bnorm:.6f}), got {delta!r}"
        )
    grid = GridSpec(0.0, t_max, dt)
    alpha, eps, bn = params.alpha, params.eps, params.bnorm
    bhat = params.bhat
    seed64 = np.uint64(seed)
    n_steps = grid.n_steps
    # the cap threshold applies to mu . b; the kernel watches mu . bhat
    delta_hat = delta / bn
    c0s = eps**2 * (alpha**2 + 1.0) * dt
    cbs = bn * dt
    cws = eps * math.sqrt(dt)

    def worker(path0: int, count: int):
        steps = np.empty(count, np.int64)
        _kernels.sim_hitting_ensemble(
            bhat, bhat, alpha, c0s, cbs, cws, delta_hat, n_steps,
            seed64, np.uint64(path0), count, steps,
        )
        return steps

    chunks = _run_ordered(n_paths, _n_threads(threads), worker)
    steps = np.concatenate(chunks)
    failed = steps == -2
    steps = steps[~failed]
    censored = steps == -1
    tau = np.where(censored, t_max, steps * dt)
    result = HittingTimeResult(
        delta=delta, t_max=t_max, tau=tau, censored=censored,
        n_failed=int(failed.sum()),
    )
    if result.t_max_too_small:
        warnings.warn(
            f"{result.censor_fraction:.0%} of paths were censored at "
            f"t_max = {t_max}; increase t_max",
            stacklevel=2,
        )
    return result


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class HysteresisResult:
    est: EnsembleEstimate  # E[lambda_t . d] with d the sweep start direction
    bound: np.ndarray  # 1 / h_eta(t), lower bound for est.mean while t <= 1/2
    crossing_time: float | None
    direction: Direction
    eta: float
    n_failed: int = 0

    @property
    def partial(self) -> bool:
        return self.n_failed > 0

    @property
    def sign(self) -> float:
        return 1.0 if self.direction is Direction.FORWARD else -1.0

    @property
    def signed_mean(self) -> np.ndarray:
        """E[lambda_t . bhat] in the fixed lab direction bhat."""
        return self.sign * self.est.mean

    @property
    def field_values(self) -> np.ndarray:
        """Applied field component along bhat at the recorded times."""
        return self.sign * (1.0 - 2.0 * self.est.t)


def hysteresis_sweep(
    params: ModelParams,
    eta: float,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    direction: Direction = Direction.FORWARD,
    threads: int | None = None,
) -> HysteresisResult:
    """Ramped-field sweep; mean alignment against the 1/h bound.

    The moment starts aligned with the initial applied field and the
    field ramps linearly to its negative over t in [0, 1].  The
    estimate tracks lambda_t . d with d the start direction, so both
    sweep directions begin at +1 and obey the same lower bound for
    t <= 1/2; use signed_mean and field_values for lab-frame plotting.
    The backward sweep is the forward dynamics applied to -bhat: the
    projection on the sweep direction is a one-dimensional diffusion
    whose coefficients do not depend on that direction, so both sweeps
    share one law.

    crossing_time is the first recorded t where mean - stderr falls
    below the bound.
    """
    bhat = params.bhat
    if abs(params.bnorm - 1.0) > 1e-9:
        raise ValueError("hysteresis sweeps need a unit field direction")
    sweep_dir = bhat if direction is Direction.FORWARD else -bhat
    ramp = LinearRamp(sweep_dir, eta)
    est, _, _, n_failed = _sphere_ensemble(
        Mode.HYSTERESIS,
        ramp,
        grid,
        params,
        sweep_dir,
        n_paths,
        seed,
        threads,
        transforms={"align": lambda x, t: x},
    )
    e = est["align"]
    profile = NormProfile(params.eps, params.alpha, eta)
    bound = 1.0 / profile.h(e.t)
    with np.errstate(invalid="ignore"):
        lower = e.mean - np.where(np.isnan(e.stderr), 0.0, e.stderr)
    below = np.nonzero(lower < bound)[0]
    crossing = float(e.t[below[0]]) if below.size else None
    return HysteresisResult(
        est=e, bound=bound, crossing_time=crossing, direction=direction,
        eta=eta, n_failed=n_failed,
    )


def long_run_study(
    params: ModelParams,
    mu0: Vec3,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    beta: float,
    eta_thresh: float,
    threads: int | None = None,
):
    """One simulation pass shared by the rate, L2-decay and tail estimators.

    Returns (RateResult, l2 EnsembleEstimate, TailProbabilityResult)
    computed from identical paths; equivalent to calling the three
    estimators with the same arguments, at a third of the cost.
    """
    if not 0.0 <= beta < 0.5:
        raise ValueError(f"beta must lie in [0, 1/2), got {beta!r}")
    profile = NormProfile(params.eps, params.alpha)
    bn = params.bnorm
    t_rec = grid.times()
    h_rec = profile.h(t_rec)
    w = t_rec**beta
    est, cnt, _, n_failed = _sphere_ensemble(
        Mode.NORMALIZED_ITO,
        ConstantField(params.b),
        grid,
        params,
        mu0,
        n_paths,
        seed,
        threads,
        transforms={
            "hxi": lambda x, t: h_rec * (bn * (1.0 - x)),
            "hxi2": lambda x, t: h_rec * (bn * (1.0 - x)) ** 2,
        },
        counters={"exceed": lambda x, t: w * (bn * (1.0 - x)) >= eta_thresh},
    )
    alpha, eps = params.alpha, params.eps
    limit = eps**2 * (1.0 + alpha**2) / (2.0 * alpha)
    pref = 2.0 * alpha * math.sqrt(2.0) / (eps * math.sqrt(1.0 + alpha**2))
    e = est["hxi"]
    factor_sqrt = pref * np.sqrt(t_rec) / h_rec
    stats = [
        RateStatistic(float(tt), float(v), float(s))
        for tt, v, s in zip(t_rec, factor_sqrt * e.mean, factor_sqrt * e.stderr)
    ]
    stats_h = [
        RateStatistic(float(tt), float(v), float(s))
        for tt, v, s in zip(t_rec, e.mean / limit, e.stderr / limit)
    ]
    rate = RateResult(
        est=e, limit_constant=limit, stats=stats, stats_h=stats_h, n_failed=n_failed
    )
    l2 = est["hxi2"]
    l2.n_failed = n_failed  # type: ignore[attr-defined]
    n_good = n_paths - n_failed
    k = cnt["exceed"]
    freq = k / n_good if n_good else np.full_like(t_rec, np.nan)
    lo, hi = wilson_interval(k, n_good)
    tail = TailProbabilityResult(
        t=t_rec, freq=freq, count=k, n=n_good, wilson_lo=lo, wilson_hi=hi,
        beta=beta, eta_thresh=eta_thresh, n_failed=n_failed,
    )
    return rate, l2, tail
