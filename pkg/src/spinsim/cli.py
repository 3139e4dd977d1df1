"""Command-line front end: presets, config parsing, CSV and manifest output.

Output contract
---------------
Ensemble experiments write ``t,observable,mean,stderr,n`` rows (hysteresis
appends a ``bound`` column carrying the closed-form lower bound 1/h(t)).
Single-path dumps (n_paths = 1, align and hysteresis only) write ``t,value``
rows, again with ``bound`` appended for hysteresis.  For frequency outputs
(tail, hitting survival) the stderr column holds the half-width of the 95%
Wilson interval.  Every run also writes ``<name>.manifest.json`` with the
fully resolved configuration, tool and RNG identifiers, wall-clock duration,
summary scalars, and the SHA-256 of each data file; ``--from-manifest``
re-runs that configuration and fails with exit code 4 unless the fresh files
hash identically.

Exit codes: 0 success; 2 configuration error; 3 completed with failed paths
(partial statistics); 4 assertion or replay-hash failure; 5 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from ._kernels import RNG_ID
from .dynamics import ConstantField, LinearRamp, ModelParams, NormProfile, strato_fixed_point
from .experiments import (
    Direction,
    estimate_alignment,
    estimate_l2_decay,
    estimate_rate,
    hitting_time,
    hysteresis_sweep,
    long_run_study,
    strato_equilibrium,
    wilson_interval,
)
from .geom3 import as_vec3, norm, normalize
from .integrator import GridSpec, IntegrationError, Mode, RngStream, run_path

EXPERIMENTS = ("align", "rate", "l2decay", "tail", "strato", "hitting", "hysteresis")

DEFAULT_SEED = 1

# Per-experiment defaults for everything a flag can set.  Horizons and path
# counts follow the figure-reproduction scale; "hitting" defaults to the
# larger noise level at which its default threshold is admissible.
_DEFAULTS = {
    "align": dict(alpha=1.0, eps=0.1, t1=100.0, dt=0.01, stride=10, n_paths=100,
                  mu0="minus-b"),
    "rate": dict(alpha=1.0, eps=0.1, t1=1e4, dt=0.01, stride=100, n_paths=10000,
                 mu0="minus-b"),
    "l2decay": dict(alpha=1.0, eps=0.1, t1=1e4, dt=0.01, stride=100, n_paths=10000,
                    mu0="minus-b"),
    "tail": dict(alpha=1.0, eps=0.1, t1=1e4, dt=0.01, stride=100, n_paths=10000,
                 mu0="minus-b", beta=0.25, eta_thresh=0.5),
    "strato": dict(alpha=1.0, eps=0.1, t1=200.0, dt=0.01, stride=10, n_paths=1000,
                   mu0="plus-b"),
    "hitting": dict(alpha=1.0, eps=0.3, dt=0.01, stride=100, n_paths=1000,
                    delta=0.95, t_max=500.0),
    "hysteresis": dict(alpha=1.0, eps=0.005, t1=1.0, dt=1e-4, stride=10,
                       n_paths=1000, eta=0.01, direction="forward"),
}

_COMMON_DEFAULTS = dict(b="0,0,1", seed=DEFAULT_SEED)

# Keys accepted from config files and manifests (flag spellings use dashes).
_CONFIG_KEYS = {
    "experiment": str, "alpha": float, "eps": float, "b": str, "mu0": str,
    "t1": float, "dt": float, "stride": int, "n_paths": int, "seed": int,
    "threads": int, "eta": float, "delta": float, "beta": float,
    "eta_thresh": float, "direction": str, "t_max": float,
}

_ASSERT_TOL = {"rate": 0.25, "tail": 0.05, "align": 0.05}


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


def _parse_vec(text: str, name: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{name} must be three comma-separated numbers, got {text!r}")
    try:
        x, y, z = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{name} must be numeric, got {text!r}") from None
    return x, y, z


def _orthogonal_unit(bhat: np.ndarray) -> np.ndarray:
    e = np.array([1.0, 0.0, 0.0]) if abs(bhat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return normalize(e - (e @ bhat) * bhat)


@dataclass
class RunConfig:
    """One experiment's fully resolved parameters."""

    experiment: str
    alpha: float
    eps: float
    b: str = "0,0,1"
    mu0: str | None = None
    t1: float | None = None
    dt: float = 0.01
    stride: int = 1
    n_paths: int = 100
    seed: int = DEFAULT_SEED
    eta: float | None = None
    delta: float | None = None
    beta: float | None = None
    eta_thresh: float | None = None
    direction: str | None = None
    t_max: float | None = None
    label: str = ""

    def validate(self) -> None:
        """Parse-validate every field before any compute starts."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        try:
            params = self.params()
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from None
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.experiment in ("rate", "l2decay", "tail", "strato", "hitting"):
            if self.n_paths < 2:
                raise ConfigError(
                    f"{self.experiment} reports ensemble stderr and needs n_paths >= 2"
                )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.experiment == "hysteresis":
            if self.mu0 is not None:
                raise ConfigError(
                    "hysteresis starts at the sweep direction; mu0 cannot be set"
                )
            if self.eta is None or not self.eta > 0:
                raise ConfigError(f"hysteresis needs eta > 0, got {self.eta}")
            if self.direction not in ("forward", "backward"):
                raise ConfigError(
                    f"direction must be forward or backward, got {self.direction!r}"
                )
            if abs(params.bnorm - 1.0) > 1e-9:
                raise ConfigError("hysteresis needs |b| = 1 (a unit sweep direction)")
        elif self.experiment == "hitting":
            if self.mu0 not in (None, "plus-b"):
                raise ConfigError("hitting starts aligned (mu0 = plus-b); mu0 cannot be set")
            if self.t_max is None or not self.t_max > 0:
                raise ConfigError(f"hitting needs t_max > 0, got {self.t_max}")
            l_th = strato_fixed_point(params)
            if self.delta is None or not l_th < self.delta < params.bnorm:
                raise ConfigError(
                    f"hitting needs delta in ({l_th:.6f}, {params.bnorm:.6f}), "
                    f"got {self.delta}"
                )
        else:
            try:
                self.mu0_vec()
            except ValueError as e:
                raise ConfigError(str(e)) from None
            if self.t1 is None or not self.t1 > 0:
                raise ConfigError(f"{self.experiment} needs t1 > 0, got {self.t1}")
        if self.experiment == "tail":
            if self.beta is None or not 0.0 <= self.beta < 0.5:
                raise ConfigError(f"tail needs beta in [0, 1/2), got {self.beta}")
            if self.eta_thresh is None or not self.eta_thresh > 0:
                raise ConfigError(f"tail needs eta_thresh > 0, got {self.eta_thresh}")
        try:
            self.grid()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def params(self) -> ModelParams:
        return ModelParams(alpha=self.alpha, eps=self.eps,
                           b=as_vec3(_parse_vec(self.b, "b")))

    def grid(self) -> GridSpec:
        if self.experiment == "hitting":
            return GridSpec(0.0, self.t_max, self.dt, self.stride)
        return GridSpec(0.0, self.t1, self.dt, self.stride)

    def mu0_vec(self) -> np.ndarray:
        bhat = self.params().bhat
        key = self.mu0 or "minus-b"
        if key == "minus-b":
            return -bhat
        if key == "plus-b":
            return bhat.copy()
        if key == "orthogonal":
            return _orthogonal_unit(bhat)
        v = as_vec3(_parse_vec(key, "mu0"))
        n = norm(v)
        if n == 0.0:
            raise ConfigError("mu0 must be a nonzero vector")
        return v / n

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None and v != ""}


@dataclass
class RunPlan:
    """Everything one invocation will execute and write."""

    base: str  # file-name stem: preset name or experiment name
    runs: list[RunConfig]
    out_dir: str = "."
    threads: int | None = None
    do_assert: bool = False
    tol: float | None = None
    preset: str | None = None
    expected_hashes: dict[str, str] = field(default_factory=dict)
    replay: bool = False


def _preset_plan(name: str, file_cfg: dict, overrides: dict) -> list[RunConfig]:
    """Expand a preset into labeled runs, then apply user overrides.

    Config-file values rank below the preset's pinned parameters (the
    preset is the more specific request); flags and env rank above.
    """
    if name == "figure1":
        base = dict(experiment="align", eps=0.1, t1=100.0, dt=0.01, stride=10,
                    n_paths=1, mu0="minus-b")
        batch = [dict(alpha=a, label=f"alpha{a:g}") for a in (0.5, 1.0, 2.0)]
    elif name == "figure2":
        base = dict(experiment="rate", eps=0.1, t1=1e4, dt=0.01, stride=100,
                    n_paths=100, mu0="minus-b")
        batch = [dict(alpha=a, label=f"alpha{a:g}") for a in (0.5, 1.0, 2.0)]
    elif name == "figure3":
        base = dict(experiment="hysteresis", alpha=1.0, eps=0.005, eta=0.01,
                    t1=1.0, dt=1e-4, stride=10, n_paths=1)
        batch = [dict(direction=d, label=d) for d in ("forward", "backward")]
    elif name in ("figure4", "figure5"):
        # nearest integer step count for the 1/eta ramp horizon at step 0.01
        n_steps = round((1.0 / 3.1e-5) / 0.01)
        base = dict(experiment="hysteresis", alpha=1.0, eps=0.01, eta=3.1e-5,
                    t1=1.0, dt=1.0 / n_steps, n_paths=100, direction="forward",
                    stride=3226 if name == "figure4" else 323)
        batch = [dict(label="")]
    else:
        raise ConfigError(f"unknown preset {name!r}")
    if "experiment" in file_cfg or "experiment" in overrides:
        raise ConfigError("cannot override the experiment of a preset")
    runs = []
    for extra in batch:
        merged = {**_COMMON_DEFAULTS, **file_cfg, **base, **extra, **overrides}
        runs.append(RunConfig(**merged))
    return runs


def _read_config_file(path: str) -> dict:
    """Flat key = value lines, UTF-8, '#' comments; unknown keys are errors."""
    out = {}
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: bad value {value!r} for {key!r}"
            ) from None
    return out


def _env_overrides() -> dict:
    out = {}
    for var, key in (("SPINSIM_SEED", "seed"), ("SPINSIM_THREADS", "threads")):
        raw = os.environ.get(var)
        if raw is not None and raw != "":
            try:
                out[key] = int(raw)
            except ValueError:
                raise ConfigError(f"{var} must be an integer, got {raw!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spinsim",
        description="Stochastic single-spin dynamics: experiments and figure presets.",
    )
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--preset", choices=["figure1", "figure2", "figure3", "figure4", "figure5"])
    p.add_argument("--config", metavar="FILE", help="key = value config file")
    p.add_argument("--from-manifest", dest="from_manifest", metavar="FILE",
                   help="re-run a previous configuration and verify file hashes")
    p.add_argument("--alpha", type=float, help="damping constant (> 0)")
    p.add_argument("--eps", type=float, help="noise amplitude (> 0)")
    p.add_argument("--b", help="external field as x,y,z")
    p.add_argument("--mu0", help="start direction: minus-b, plus-b, orthogonal, or x,y,z")
    p.add_argument("--t1", type=float, help="time horizon")
    p.add_argument("--dt", type=float, help="step size")
    p.add_argument("--stride", type=int, help="record every this many steps")
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--seed", type=int, help="base seed (64-bit)")
    p.add_argument("--threads", type=int, help="worker pool size (default: all cores)")
    p.add_argument("--eta", type=float, help="hysteresis sweep rate")
    p.add_argument("--delta", type=float, help="hitting threshold")
    p.add_argument("--beta", type=float, help="tail exponent in [0, 1/2)")
    p.add_argument("--eta-thresh", dest="eta_thresh", type=float, help="tail threshold")
    p.add_argument("--direction", choices=["forward", "backward"])
    p.add_argument("--t-max", dest="t_max", type=float, help="hitting-time horizon")
    p.add_argument("--out-dir", default=None, help="output directory (default .)")
    p.add_argument("--assert", dest="do_assert", action="store_true",
                   help="exit 4 unless the experiment's headline check passes")
    p.add_argument("--tol", type=float, help="tolerance for --assert where applicable")
    p.add_argument("--version", action="version", version=f"spinsim {__version__}")
    return p


_FLAG_KEYS = tuple(_CONFIG_KEYS)  # every flag that carries config state


def build_plan(args: argparse.Namespace) -> RunPlan:
    flag_overrides = {
        k: getattr(args, k) for k in _FLAG_KEYS
        if k != "experiment" and getattr(args, k, None) is not None
    }

    if args.from_manifest:
        conflicting = [k for k in flag_overrides if k != "threads"]
        if args.experiment or args.preset or args.config or conflicting:
            raise ConfigError(
                "--from-manifest replays a stored configuration; it only "
                "combines with --out-dir and --threads"
            )
        return _plan_from_manifest(args)

    file_cfg = _read_config_file(args.config) if args.config else {}
    env_cfg = _env_overrides()
    threads = flag_overrides.pop("threads", None)
    if threads is None:
        threads = env_cfg.pop("threads", None)
    else:
        env_cfg.pop("threads", None)
    if threads is None:
        threads = file_cfg.get("threads")
    file_cfg.pop("threads", None)

    if args.preset:
        # flags > env > preset pins > file > built-in defaults
        overrides = {**env_cfg, **flag_overrides}
        overrides.pop("experiment", None)
        if args.experiment:
            raise ConfigError("give either --preset or --experiment, not both")
        runs = _preset_plan(args.preset, file_cfg, overrides)
        base = args.preset
    else:
        # flags > env > file > built-in defaults
        experiment = args.experiment or file_cfg.get("experiment")
        if not experiment:
            raise ConfigError("nothing to run: give --experiment, --preset, or --from-manifest")
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        merged = dict(_COMMON_DEFAULTS)
        merged.update(_DEFAULTS[experiment])
        for layer in (file_cfg, env_cfg, flag_overrides):
            for k, v in layer.items():
                if k != "experiment":
                    merged[k] = v
        runs = [RunConfig(experiment=experiment, **merged)]
        base = experiment
    for cfg in runs:
        cfg.validate()
    return RunPlan(
        base=base,
        runs=runs,
        out_dir=args.out_dir or ".",
        threads=threads,
        do_assert=args.do_assert,
        tol=args.tol,
        preset=args.preset,
    )


def _plan_from_manifest(args: argparse.Namespace) -> RunPlan:
    try:
        with open(args.from_manifest, encoding="utf-8") as f:
            m = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read manifest: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"manifest is not valid JSON: {e}") from None
    try:
        runs = [RunConfig(**d) for d in m["runs"]]
        base = m["base"]
        expected = {f["name"]: f["sha256"] for f in m["files"]}
    except (KeyError, TypeError) as e:
        raise ConfigError(f"manifest is missing fields: {e}") from None
    for cfg in runs:
        cfg.validate()
    return RunPlan(
        base=base,
        runs=runs,
        out_dir=args.out_dir or os.path.dirname(args.from_manifest) or ".",
        threads=args.threads,
        do_assert=bool(m.get("assert", False)),
        tol=m.get("tol"),
        preset=m.get("preset"),
        expected_hashes=expected,
        replay=True,
    )


def _fmt(x) -> str:
    return repr(float(x))


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _ensemble_rows(t, name, mean, stderr, n, bound=None):
    for i in range(len(t)):
        row = [_fmt(t[i]), name, _fmt(mean[i]), _fmt(stderr[i]), str(int(n[i]))]
        if bound is not None:
            row.append(_fmt(bound[i]))
        yield row


@dataclass
class RunOutput:
    csv_name: str
    csv_text: str
    summary: dict
    partial: bool = False
    assert_ok: bool | None = None
    assert_msg: str = ""


def _tol(plan: RunPlan, cfg: RunConfig) -> float:
    if plan.tol is not None:
        return plan.tol
    return _ASSERT_TOL.get(cfg.experiment, 0.0)


def _execute(cfg: RunConfig, plan: RunPlan) -> RunOutput:
    name = f"{plan.base}_{cfg.label}.csv" if cfg.label else f"{plan.base}.csv"
    params = cfg.params()
    grid = cfg.grid()
    threads = plan.threads
    check = plan.do_assert
    fn = {
        "align": _run_align, "rate": _run_rate, "l2decay": _run_l2,
        "tail": _run_tail, "strato": _run_strato, "hitting": _run_hitting,
        "hysteresis": _run_hysteresis,
    }[cfg.experiment]
    out = fn(cfg, params, grid, threads, check, _tol(plan, cfg))
    out.csv_name = name
    return out


def _run_align(cfg, params, grid, threads, check, tol) -> RunOutput:
    bn = params.bnorm
    if cfg.n_paths == 1:
        series = run_path(ConstantField(params.b), Mode.NORMALIZED_ITO, grid,
                          params, RngStream(cfg.seed, 0), ("mdotb",), cfg.mu0_vec())
        value = bn * series["mdotb"]
        text = _csv_text(["t", "value"],
                         ([_fmt(t), _fmt(v)] for t, v in zip(series["t"], value)))
        final = float(value[-1]) if value.size else math.nan
        summary = {"final_mdotb": final}
        ok = (final >= bn - tol) if check else None
        return RunOutput("", text, summary, assert_ok=ok,
                         assert_msg=f"final mu.b = {final:.4f} vs >= {bn - tol:.4f}")
    res = estimate_alignment(params, cfg.mu0_vec(), grid, cfg.n_paths, cfg.seed,
                             threads)
    e = res.est
    text = _csv_text(["t", "observable", "mean", "stderr", "n"],
                     _ensemble_rows(e.t, "mdotb", e.mean, e.stderr, e.n))
    final = float(e.mean[-1])
    converged = float((res.tail_min >= bn - 0.1).mean())
    summary = {
        "final_mean": final,
        "tail_converged_fraction": converged,
        "tail_window": list(res.tail_window),
        "n_failed": res.n_failed,
    }
    ok = (final >= bn - tol) if check else None
    return RunOutput("", text, summary, partial=res.partial, assert_ok=ok,
                     assert_msg=f"final mean mu.b = {final:.4f} vs >= {bn - tol:.4f}")


def _run_rate(cfg, params, grid, threads, check, tol) -> RunOutput:
    rate = estimate_rate(params, cfg.mu0_vec(), grid, cfg.n_paths, cfg.seed, threads)
    e = rate.est
    t = e.t
    stat_mean = np.array([s.value for s in rate.stats])
    stat_se = np.array([s.stderr for s in rate.stats])
    rows = list(_ensemble_rows(t, "rate_stat", stat_mean, stat_se, e.n))
    rows += list(_ensemble_rows(t, "hxi", e.mean, e.stderr, e.n))
    text = _csv_text(["t", "observable", "mean", "stderr", "n"], rows)
    final = rate.stats[-1]
    summary = {
        "final_rate_stat": final.value,
        "final_rate_stderr": final.stderr,
        "limit_constant": rate.limit_constant,
        "final_hxi": float(e.mean[-1]),
        "n_failed": rate.n_failed,
    }
    ok = (abs(final.value - 1.0) <= tol) if check else None
    return RunOutput("", text, summary, partial=rate.partial, assert_ok=ok,
                     assert_msg=f"|{final.value:.4f} - 1| vs tol {tol}")


def _run_l2(cfg, params, grid, threads, check, tol) -> RunOutput:
    e = estimate_l2_decay(params, cfg.mu0_vec(), grid, cfg.n_paths, cfg.seed, threads)
    text = _csv_text(["t", "observable", "mean", "stderr", "n"],
                     _ensemble_rows(e.t, "hxi2", e.mean, e.stderr, e.n))
    final = float(e.mean[-1])
    i_tenth = int(np.argmin(np.abs(e.t - grid.t1 / 10.0)))
    earlier = float(e.mean[i_tenth])
    n_failed = getattr(e, "n_failed", 0)
    summary = {"final_value": final, "value_at_tenth_horizon": earlier,
               "n_failed": n_failed}
    ok = (final <= earlier) if check else None
    return RunOutput("", text, summary, partial=n_failed > 0, assert_ok=ok,
                     assert_msg=f"value(T) = {final:.4g} vs value(T/10) = {earlier:.4g}")


def _run_tail(cfg, params, grid, threads, check, tol) -> RunOutput:
    _, _, res_tail = long_run_study(params, cfg.mu0_vec(), grid, cfg.n_paths,
                                    cfg.seed, cfg.beta, cfg.eta_thresh, threads)
    half = 0.5 * (res_tail.wilson_hi - res_tail.wilson_lo)
    n_col = np.full(res_tail.t.shape[0], res_tail.n, np.int64)
    text = _csv_text(["t", "observable", "mean", "stderr", "n"],
                     _ensemble_rows(res_tail.t, "tail_freq", res_tail.freq, half, n_col))
    final = float(res_tail.freq[-1])
    summary = {"final_freq": final, "beta": cfg.beta, "eta_thresh": cfg.eta_thresh,
               "n_failed": res_tail.n_failed}
    ok = (final <= tol) if check else None
    return RunOutput("", text, summary, partial=res_tail.n_failed > 0, assert_ok=ok,
                     assert_msg=f"final exceedance {final:.4f} vs <= {tol}")


def _run_strato(cfg, params, grid, threads, check, tol) -> RunOutput:
    res = strato_equilibrium(params, cfg.mu0_vec(), grid, cfg.n_paths, cfg.seed,
                             threads)
    e, r = res.est, res.residual
    rows = list(_ensemble_rows(e.t, "mdotb", e.mean, e.stderr, e.n))
    rows += list(_ensemble_rows(r.t, "residual", r.mean, r.stderr, r.n))
    text = _csv_text(["t", "observable", "mean", "stderr", "n"], rows)
    mean_v, mean_se = res.tail_mean
    res_v, res_se = res.tail_residual
    summary = {
        "tail_mean": mean_v, "tail_mean_stderr": mean_se,
        "tail_residual": res_v, "tail_residual_stderr": res_se,
        "fixed_point": res.fixed_point, "n_failed": res.n_failed,
    }
    ok = None
    msg = ""
    if check:
        below_pole = mean_v < params.bnorm - 0.005
        stationary = abs(res_v) <= 3.0 * res_se
        ok = below_pole and stationary
        msg = (f"tail mean {mean_v:.4f} < {params.bnorm - 0.005:.4f}: {below_pole}; "
               f"|residual| {abs(res_v):.2e} <= 3 se {3 * res_se:.2e}: {stationary}")
    return RunOutput("", text, summary, partial=res.partial, assert_ok=ok,
                     assert_msg=msg)


def _run_hitting(cfg, params, grid, threads, check, tol) -> RunOutput:
    res = hitting_time(params, cfg.delta, cfg.t_max, cfg.dt, cfg.n_paths,
                       cfg.seed, threads)
    t = grid.times()
    surv = res.survival(t)
    k = np.round(surv * res.tau.size).astype(np.int64)
    lo, hi = wilson_interval(k, res.tau.size)
    half = 0.5 * (hi - lo)
    n_col = np.full(t.shape[0], res.tau.size, np.int64)
    text = _csv_text(["t", "observable", "mean", "stderr", "n"],
                     _ensemble_rows(t, "survival", surv, half, n_col))
    summary = {
        "censor_fraction": res.censor_fraction,
        "mean_tau_lower_bound": res.mean_tau_lower_bound,
        "delta": cfg.delta, "n_failed": res.n_failed,
    }
    ok = (res.censor_fraction <= 0.5) if check else None
    return RunOutput("", text, summary, partial=res.partial, assert_ok=ok,
                     assert_msg=f"censor fraction {res.censor_fraction:.2%} vs <= 50%")


def _run_hysteresis(cfg, params, grid, threads, check, tol) -> RunOutput:
    direction = Direction(cfg.direction or "forward")
    if cfg.n_paths == 1:
        sweep_dir = params.bhat if direction is Direction.FORWARD else -params.bhat
        series = run_path(LinearRamp(sweep_dir, cfg.eta), Mode.HYSTERESIS, grid,
                          params, RngStream(cfg.seed, 0), ("mdotb",))
        bound = 1.0 / NormProfile(params.eps, params.alpha, cfg.eta).h(series["t"])
        text = _csv_text(
            ["t", "value", "bound"],
            ([_fmt(t), _fmt(v), _fmt(bd)]
             for t, v, bd in zip(series["t"], series["mdotb"], bound)),
        )
        summary = {"direction": direction.value, "eta": cfg.eta,
                   "final_align": float(series["mdotb"][-1])}
        return RunOutput("", text, summary)
    res = hysteresis_sweep(params, cfg.eta, grid, cfg.n_paths, cfg.seed,
                           direction, threads)
    e = res.est
    text = _csv_text(["t", "observable", "mean", "stderr", "n", "bound"],
                     _ensemble_rows(e.t, "align", e.mean, e.stderr, e.n, res.bound))
    summary = {
        "direction": direction.value, "eta": cfg.eta,
        "crossing_time": res.crossing_time, "n_failed": res.n_failed,
    }
    ok = None
    msg = ""
    if check:
        pre = e.t <= 0.5
        margin = e.mean[pre] - (res.bound[pre] - 3.0 * e.stderr[pre])
        ok = bool((margin >= 0.0).all())
        msg = f"min margin over t <= 1/2: {margin.min():.4g} (mean vs bound - 3 se)"
    return RunOutput("", text, summary, partial=res.partial, assert_ok=ok,
                     assert_msg=msg)


def _write_atomic(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def run_plan(plan: RunPlan) -> int:
    t_start = time.perf_counter()
    outputs: list[RunOutput] = []
    for cfg in plan.runs:
        try:
            outputs.append(_execute(cfg, plan))
        except IntegrationError as e:
            print(f"spinsim: integration failed: {e}", file=sys.stderr)
            return 3
    os.makedirs(plan.out_dir, exist_ok=True)
    files = []
    mismatched = []
    for out in outputs:
        data = out.csv_text.encode()
        digest = hashlib.sha256(data).hexdigest()
        path = os.path.join(plan.out_dir, out.csv_name)
        _write_atomic(path, data)
        files.append({"name": out.csv_name, "sha256": digest,
                      "rows": out.csv_text.count("\n") - 1})
        if plan.replay:
            want = plan.expected_hashes.get(out.csv_name)
            if want != digest:
                mismatched.append(out.csv_name)
    manifest = {
        "tool": "spinsim",
        "version": __version__,
        "rng": RNG_ID,
        "base": plan.base,
        "preset": plan.preset,
        "assert": plan.do_assert,
        "tol": plan.tol,
        "threads": plan.threads,
        "duration_s": round(time.perf_counter() - t_start, 3),
        "runs": [cfg.to_dict() for cfg in plan.runs],
        "summary": {(cfg.label or plan.base): out.summary
                    for cfg, out in zip(plan.runs, outputs)},
        "files": files,
    }
    manifest_path = os.path.join(plan.out_dir, f"{plan.base}.manifest.json")
    _write_atomic(
        manifest_path, (json.dumps(manifest, indent=2, default=float) + "\n").encode()
    )

    for out, rec in zip(outputs, files):
        print(f"wrote {os.path.join(plan.out_dir, rec['name'])} "
              f"({rec['rows']} rows, sha256 {rec['sha256'][:12]})")
    print(f"wrote {manifest_path}")

    if plan.replay and mismatched:
        print(f"spinsim: replay hash mismatch for: {', '.join(mismatched)}",
              file=sys.stderr)
        return 4
    failed_assert = [o for o in outputs if o.assert_ok is False]
    if failed_assert:
        for o in failed_assert:
            print(f"spinsim: assertion failed ({o.csv_name}): {o.assert_msg}",
                  file=sys.stderr)
        return 4
    if plan.do_assert:
        for o in outputs:
            if o.assert_ok:
                print(f"assert ok ({o.csv_name}): {o.assert_msg}")
    if any(o.partial for o in outputs):
        print("spinsim: some paths failed; statistics are partial", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        plan = build_plan(args)
    except ConfigError as e:
        print(f"spinsim: config error: {e}", file=sys.stderr)
        return 2
    try:
        return run_plan(plan)
    except OSError as e:
        print(f"spinsim: I/O error: {e}", file=sys.stderr)
        return 5
    except ValueError as e:
        print(f"spinsim: config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
