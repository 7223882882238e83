"""Experiment orchestration: configs, seeding, workers, and result bundles.

One invocation runs one experiment.  A run directory always receives a
manifest first, then CSV data and a JSON summary, all staged in a temporary
sibling directory and renamed into place, so an interrupted run leaves no
partial files.  Ensemble randomness is tied to (master_seed, trace_index)
counter streams: trace i draws the same numbers no matter how many workers
share the ensemble, which is what makes the worker-count determinism
contract achievable at all.
"""

from __future__ import annotations

import csv
import json
import math
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .aux_process import aux_params_for, dwell_stats, jump_prob_estimate, sample_aux_traces, trace_rows
from .bessel_ref import BesselParams, _bessel_path_kernel, exit_prob_exact
from .errors import ParseError, SimulationError, ValidationError
from .estimators import estimate_transfer_moments, exit_prob_mc
from .particle_chain import ChainConfig, run_trajectory
from .potential import PotentialSpec
from .rng import spawn_generator
from .xi_chain import (
    BelowBehavior,
    NoiseLaw,
    XiChainSpec,
    _xi_kernel,
    gamma_from_dim,
)

__all__ = ["RunConfig", "ResultBundle", "parse_config", "run", "emit_report", "EXPERIMENTS"]

EXPERIMENTS = ("full_chain", "xi_chain", "bessel", "moments", "aux", "exit_prob", "verify")

_MAX_SEED = 2**64 - 1

# Per-experiment parameter defaults; parse_config overlays user values and
# rejects unknown keys.  The xi_chain ensemble reflects at the floor by
# default: a forbidding default would make long runs from moderate starts
# fail sporadically, which is wrong for a stock configuration.
_DEFAULTS: Dict[str, Dict] = {
    "full_chain": {
        "d": 8,
        "amplitude": 0.25,
        "omega": [4.0],
        "v0_speed": 30.0,
        "ell": 1.0,
        "lambda_law": "uniform",
        "tol": 1e-8,
        "n_traces": 4,
        "max_collisions": 1000,
    },
    "xi_chain": {
        "gamma": gamma_from_dim(8),
        "xi0": 50.0,
        "steps": 10_000,
        "n_traces": 4,
        "noise": "Rademacher",
        "xi_minus": 0.5,
        "xi_plus": 1.0,
        "below": "Reflect",
    },
    "bessel": {
        "gamma": 1.0,
        "r0": 1.0,
        "dt": 1e-4,
        "horizon": 1.0,
        "n_paths": 100,
    },
    "moments": {
        "d": 8,
        "amplitude": 0.25,
        "omega": [4.0],
        "speeds": [30.0, 50.0, 80.0, 130.0, 210.0],
        "n_samples": 10_000,
        "tol": 1e-10,
        "lambda_law": "uniform",
    },
    "aux": {
        "gamma": 1.0,
        "eta0": 8,
        "n_traces": 50,
        "max_steps": 2_000_000,
        "max_transitions": None,
        "delta": 0.2,
    },
    "exit_prob": {
        "gamma": 1.0,
        "xi0": 200.0,
        "a_minus": 0.5,
        "a_plus": 2.0,
        "n_paths": 1000,
    },
    "verify": {
        "criteria": list(range(1, 14)),
        "gamma": 1.0,
    },
}


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved experiment invocation."""

    experiment: str
    params: dict
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "runs/latest"


@dataclass(frozen=True)
class ResultBundle:
    """What a run left on disk, plus the parsed verify verdicts."""

    manifest: dict
    data_files: tuple
    summary: dict
    checks: tuple
    path: Optional[Path] = None


def _load_source(source) -> dict:
    """Read JSON from a path or inline text; parse failures carry position."""
    if isinstance(source, dict):
        text = json.dumps(source)
    else:
        text = str(source)
        looks_inline = text.lstrip()[:1] in ("{", "[")
        if not looks_inline:
            p = Path(text)
            if not p.is_file():
                raise ParseError(f"config file not found: {text}")
            text = p.read_text()
        elif isinstance(source, Path):
            raise ParseError(f"config file not found: {source}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"line {err.lineno}, column {err.colno}: {err.msg}") from err
    if not isinstance(raw, dict):
        raise ParseError(f"field <root>: expected a JSON object, got {type(raw).__name__}")
    return raw


def _check_number(errs, params, key, kind=float, lo=None, hi=None, strict_lo=False):
    val = params.get(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errs.append(f"params.{key}: expected a number, got {val!r}")
        return
    val = kind(val)
    if kind is int and val != params[key]:
        errs.append(f"params.{key}: expected an integer, got {params[key]!r}")
        return
    if lo is not None and (val <= lo if strict_lo else val < lo):
        op = ">" if strict_lo else ">="
        errs.append(f"params.{key}: must be {op} {lo}, got {val}")
        return
    if hi is not None and val > hi:
        errs.append(f"params.{key}: must be <= {hi}, got {val}")
        return
    params[key] = val


def _validate_params(experiment: str, params: dict, errs: List[str]) -> None:
    if experiment in ("full_chain", "moments"):
        _check_number(errs, params, "d", int, lo=2)
        _check_number(errs, params, "amplitude", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "tol", float, lo=0.0, strict_lo=True)
        omega = params.get("omega")
        if not isinstance(omega, (list, tuple)) or not omega or not all(
            isinstance(w, (int, float)) and not isinstance(w, bool) and math.isfinite(w)
            for w in omega
        ):
            errs.append(f"params.omega: expected a nonempty list of finite numbers, got {omega!r}")
        else:
            params["omega"] = [float(w) for w in omega]
        if params.get("lambda_law") not in ("uniform", "zero"):
            errs.append(f"params.lambda_law: expected 'uniform' or 'zero', got {params.get('lambda_law')!r}")
    if experiment == "full_chain":
        _check_number(errs, params, "v0_speed", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "ell", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "n_traces", int, lo=1)
        _check_number(errs, params, "max_collisions", int, lo=1)
    elif experiment == "moments":
        speeds = params.get("speeds")
        if not isinstance(speeds, (list, tuple)) or not speeds or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in speeds
        ):
            errs.append(f"params.speeds: expected a nonempty list of positive numbers, got {speeds!r}")
        else:
            params["speeds"] = [float(v) for v in speeds]
        _check_number(errs, params, "n_samples", int, lo=2)
    elif experiment == "xi_chain":
        _check_number(errs, params, "gamma", float)
        _check_number(errs, params, "xi0", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "steps", int, lo=0)
        _check_number(errs, params, "n_traces", int, lo=1)
        _check_number(errs, params, "xi_minus", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "xi_plus", float, lo=0.0, strict_lo=True)
        try:
            NoiseLaw(params.get("noise"))
        except ValueError:
            errs.append(f"params.noise: expected one of {[n.value for n in NoiseLaw]}, got {params.get('noise')!r}")
        try:
            BelowBehavior(params.get("below"))
        except ValueError:
            errs.append(f"params.below: expected one of {[b.value for b in BelowBehavior]}, got {params.get('below')!r}")
    elif experiment == "bessel":
        _check_number(errs, params, "gamma", float, lo=0.5, strict_lo=True)
        _check_number(errs, params, "r0", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "dt", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "horizon", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "n_paths", int, lo=1)
    elif experiment == "aux":
        _check_number(errs, params, "gamma", float, lo=0.5, strict_lo=True)
        _check_number(errs, params, "eta0", int, lo=0)
        _check_number(errs, params, "n_traces", int, lo=1)
        _check_number(errs, params, "max_steps", int, lo=1)
        _check_number(errs, params, "delta", float, lo=0.0, strict_lo=True)
        if params.get("max_transitions") is not None:
            _check_number(errs, params, "max_transitions", int, lo=1)
    elif experiment == "exit_prob":
        _check_number(errs, params, "gamma", float)
        _check_number(errs, params, "xi0", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "a_minus", float, lo=0.0, strict_lo=True)
        _check_number(errs, params, "a_plus", float, lo=1.0, strict_lo=True)
        if "a_minus" in params and isinstance(params["a_minus"], float) and not params["a_minus"] < 1.0:
            errs.append(f"params.a_minus: must be < 1, got {params['a_minus']}")
        _check_number(errs, params, "n_paths", int, lo=1)
    elif experiment == "verify":
        _check_number(errs, params, "gamma", float)
        crit = params.get("criteria")
        if (
            not isinstance(crit, (list, tuple))
            or not crit
            or not all(isinstance(c, int) and not isinstance(c, bool) and 1 <= c <= 13 for c in crit)
        ):
            errs.append(f"params.criteria: expected a nonempty list of integers in 1..13, got {crit!r}")
        else:
            params["criteria"] = sorted(set(int(c) for c in crit))
        # the chain-level criteria assume the transient regime
        if isinstance(params.get("gamma"), float) and not params["gamma"] > 0.5:
            errs.append(f"params.gamma: verify requires gamma > 1/2, got {params['gamma']}")
    if errs:
        return
    # cross-field constraints, checked by building the same objects the run
    # would build; only reached when every individual field is sound
    try:
        if experiment == "xi_chain":
            XiChainSpec(
                gamma=params["gamma"],
                noise=NoiseLaw(params["noise"]),
                xi_minus=params["xi_minus"],
                xi_plus=params["xi_plus"],
                below_behavior=BelowBehavior(params["below"]),
            )
        elif experiment in ("full_chain", "moments"):
            PotentialSpec(
                d=params["d"],
                m=len(params["omega"]),
                amplitude=params["amplitude"],
                omega=tuple(params["omega"]),
            )
        elif experiment == "aux":
            spec = _aux_spec(params["gamma"])
            aparams = aux_params_for(spec, delta=params["delta"])
            if params["eta0"] <= aparams.eta_plus:
                errs.append(
                    f"params.eta0: must exceed eta_plus = {aparams.eta_plus} "
                    f"for gamma {params['gamma']}"
                )
        elif experiment == "exit_prob":
            spec = _aux_spec(params["gamma"])
            if not params["a_minus"] * params["xi0"] > spec.xi_plus:
                errs.append(
                    f"params.xi0: lower barrier a_minus*xi0 = "
                    f"{params['a_minus'] * params['xi0']:.6g} must exceed "
                    f"xi_plus = {spec.xi_plus:.6g}"
                )
    except SimulationError as err:
        errs.append(f"params: {err}")


def _aux_spec(gamma: float) -> XiChainSpec:
    """Pure chain spec for level and exit experiments; ceiling scaled to gamma."""
    return XiChainSpec(gamma=gamma, xi_plus=max(1.0, abs(gamma)))


def parse_config(source, experiment: Optional[str] = None) -> RunConfig:
    """Parse and validate a JSON config from a path or inline text.

    An empty object resolves to a stock xi_chain run with master_seed 0.
    ``experiment`` (from a CLI subcommand) must agree with an explicit
    "experiment" field when both are present.  Structural problems raise
    ParseError with the offending line or field; domain problems raise one
    ValidationError listing every violation.
    """
    raw = _load_source(source)
    known = {"experiment", "params", "master_seed", "workers", "output_dir"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ParseError(f"field {unknown[0]!r}: unknown top-level field")

    errs: List[str] = []
    exp = raw.get("experiment", experiment or "xi_chain")
    if exp not in EXPERIMENTS:
        raise ParseError(f"field 'experiment': expected one of {list(EXPERIMENTS)}, got {exp!r}")
    if experiment is not None and exp != experiment:
        errs.append(f"experiment: config says {exp!r} but the command requests {experiment!r}")
        exp = experiment

    user_params = raw.get("params", {})
    if not isinstance(user_params, dict):
        raise ParseError(f"field 'params': expected an object, got {type(user_params).__name__}")
    bad_keys = sorted(set(user_params) - set(_DEFAULTS[exp]))
    if bad_keys:
        raise ParseError(f"field 'params.{bad_keys[0]}': unknown parameter for {exp}")
    params = {**_DEFAULTS[exp], **user_params}
    params = json.loads(json.dumps(params))  # deep copy, JSON types only

    seed = raw.get("master_seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= _MAX_SEED:
        errs.append(f"master_seed: expected an integer in [0, 2^64), got {seed!r}")
        seed = 0
    workers = raw.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        errs.append(f"workers: expected an integer >= 1, got {workers!r}")
        workers = 1
    output_dir = raw.get("output_dir", "runs/latest")
    if not isinstance(output_dir, str) or not output_dir:
        errs.append(f"output_dir: expected a nonempty string, got {output_dir!r}")
        output_dir = "runs/latest"

    _validate_params(exp, params, errs)
    if errs:
        raise ValidationError(errs)
    return RunConfig(
        experiment=exp, params=params, master_seed=seed, workers=workers, output_dir=output_dir
    )


def _map_indices(n: int, workers: int, fn):
    """Apply fn to 0..n-1 with contiguous blocks per worker, merged by index."""
    results = [None] * n
    workers = min(workers, n)
    if workers <= 1:
        for i in range(n):
            results[i] = fn(i)
        return results

    def run_block(block):
        for i in block:
            results[int(i)] = fn(int(i))

    blocks = np.array_split(np.arange(n), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_block, b) for b in blocks if b.size]
        for fut in futures:
            fut.result()
    return results


def _fmt(value) -> str:
    """CSV cell: shortest round-trip for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_errors(tmp: Path, errors: List[Tuple[int, str, str]]) -> None:
    _write_csv(tmp / "errors.csv", ("trace", "error", "message"), errors)


def _run_xi_chain(cfg: RunConfig, tmp: Path):
    p = cfg.params
    spec = XiChainSpec(
        gamma=p["gamma"],
        noise=NoiseLaw(p["noise"]),
        xi_minus=p["xi_minus"],
        xi_plus=p["xi_plus"],
        below_behavior=BelowBehavior(p["below"]),
    )
    steps = p["steps"]
    rademacher = spec.noise is NoiseLaw.RADEMACHER
    forbid = spec.below_behavior is BelowBehavior.FORBID

    def one(i):
        values = np.empty(steps + 1)
        below = _xi_kernel(
            cfg.master_seed, i, p["xi0"], spec.gamma, rademacher,
            spec.xi_minus, forbid, steps, values,
        )
        if below >= 0:
            return ("error", "BelowDomain", f"state {values[below]!r} left the domain at step {below}")
        return ("ok", values)

    outcomes = _map_indices(p["n_traces"], cfg.workers, one)
    errors = []
    finals = []

    def rows():
        for i, out in enumerate(outcomes):
            if out[0] == "error":
                errors.append((i, out[1], out[2]))
                continue
            values = out[1]
            finals.append(float(values[-1]))
            for k in range(values.size):
                yield (i, k, values[k])

    _write_csv(tmp / "paths.csv", ("trace", "k", "xi"), rows())
    _write_errors(tmp, errors)
    summary = {
        "n_traces": p["n_traces"],
        "steps": steps,
        "n_errors": len(errors),
        "mean_final_xi": float(np.mean(finals)) if finals else None,
    }
    return ["paths.csv", "errors.csv"], summary, []


def _run_full_chain(cfg: RunConfig, tmp: Path):
    p = cfg.params
    spec = PotentialSpec(d=p["d"], m=len(p["omega"]), amplitude=p["amplitude"], omega=tuple(p["omega"]))
    v0 = np.zeros(spec.d)
    v0[0] = p["v0_speed"]
    chain = ChainConfig(
        spec=spec,
        v0=v0,
        max_collisions=p["max_collisions"],
        mean_free_path=p["ell"],
        lambda_law=p["lambda_law"],
        tol=p["tol"],
    )

    def one(i):
        try:
            trace = run_trajectory(chain, spawn_generator(cfg.master_seed, i), store_kinematics=False)
            return ("ok", trace)
        except SimulationError as err:
            return ("error", type(err).__name__, str(err))

    outcomes = _map_indices(p["n_traces"], cfg.workers, one)
    errors = []
    trapped = 0
    final_speeds = []

    def rows():
        nonlocal trapped
        for i, out in enumerate(outcomes):
            if out[0] == "error":
                errors.append((i, out[1], out[2]))
                continue
            trace = out[1]
            trapped += trace.trapped_at is not None
            final_speeds.append(float(trace.speeds[-1]))
            for n in range(trace.times.size):
                yield (i, n, trace.times[n], trace.speeds[n])

    _write_csv(tmp / "traces.csv", ("trace", "n", "t", "speed"), rows())
    _write_errors(tmp, errors)
    summary = {
        "n_traces": p["n_traces"],
        "max_collisions": p["max_collisions"],
        "n_errors": len(errors),
        "n_trapped": trapped,
        "mean_final_speed": float(np.mean(final_speeds)) if final_speeds else None,
    }
    return ["traces.csv", "errors.csv"], summary, []


# Ensemble averages are accumulated over fixed 64-path blocks merged in
# block order, so float association is identical for every worker count.
_BLOCK = 64


def _run_bessel(cfg: RunConfig, tmp: Path):
    p = cfg.params
    params = BesselParams(gamma=p["gamma"], r0=p["r0"], dt=p["dt"], horizon=p["horizon"])
    n = params.n_steps
    n_paths = p["n_paths"]
    n_blocks = (n_paths + _BLOCK - 1) // _BLOCK

    def one_block(b):
        acc = np.zeros(n + 1)
        count = 0
        failures = []
        buf = np.empty(n + 1)
        for i in range(b * _BLOCK, min((b + 1) * _BLOCK, n_paths)):
            status = _bessel_path_kernel(cfg.master_seed, i, params.r0, params.gamma, params.dt, n, buf)
            if status != 0:
                failures.append((i, "DegeneratePath", "path pinned at zero beyond the subdivision budget"))
                continue
            acc += buf * buf
            count += 1
        return acc, count, failures

    blocks = _map_indices(n_blocks, cfg.workers, one_block)
    total = np.zeros(n + 1)
    count = 0
    errors = []
    for acc, c, failures in blocks:
        total += acc
        count += c
        errors.extend(failures)
    if count == 0:
        raise SimulationError("every path failed; nothing to average")
    mean_sq = total / count
    t = np.arange(n + 1) * params.dt
    _write_csv(tmp / "msq.csv", ("t", "mean_r_squared"), zip(t, mean_sq))
    _write_errors(tmp, errors)
    slope = float(np.polyfit(t, mean_sq, 1)[0])
    summary = {
        "n_paths": n_paths,
        "n_errors": len(errors),
        "slope_mean_r_squared": slope,
        "target_slope": 2.0 * params.gamma + 1.0,
    }
    return ["msq.csv", "errors.csv"], summary, []


def _run_moments(cfg: RunConfig, tmp: Path):
    p = cfg.params
    spec = PotentialSpec(d=p["d"], m=len(p["omega"]), amplitude=p["amplitude"], omega=tuple(p["omega"]))
    fit = estimate_transfer_moments(
        spec, p["speeds"], p["n_samples"], cfg.master_seed,
        tol=p["tol"], lambda_law=p["lambda_law"],
    )
    _write_csv(
        tmp / "moments.csv",
        ("speed", "mean_de", "se_de", "mean_de2", "se_de2", "trapped"),
        fit.to_rows(),
    )
    summary = {
        "B_hat": fit.B_hat,
        "B_se": fit.B_se,
        "D2_hat": fit.D2_hat,
        "D2_se": fit.D2_se,
        "ratio": None if math.isnan(fit.ratio) else fit.ratio,
        "n_samples": p["n_samples"],
    }
    return ["moments.csv"], summary, []


def _run_aux(cfg: RunConfig, tmp: Path):
    p = cfg.params
    spec = _aux_spec(p["gamma"])
    aparams = aux_params_for(spec, delta=p["delta"])
    traces = sample_aux_traces(
        spec, aparams, p["eta0"], p["n_traces"], p["max_steps"], cfg.master_seed,
        max_transitions=p["max_transitions"],
    )

    def rows():
        for i, tr in enumerate(traces):
            for ell, eta, tau, censored in trace_rows(tr):
                yield (i, ell, eta, tau, censored)

    _write_csv(tmp / "transitions.csv", ("trace", "ell", "eta", "tau", "censored"), rows())
    summary = {
        "n_traces": p["n_traces"],
        "eta0": p["eta0"],
        "n_absorbed": sum(tr.absorbed for tr in traces),
        "n_censored": sum(tr.censored for tr in traces),
    }
    try:
        p_hat, ci, (ups, downs) = jump_prob_estimate(traces, aparams.eta_plus)
        summary["p_hat_up"] = p_hat
        summary["p_hat_ci"] = list(ci)
        summary["n_moves"] = ups + downs
    except SimulationError:
        summary["p_hat_up"] = None
    try:
        dwell = dwell_stats(traces)
        summary["dwell_median"] = dwell.quantiles[0.5]
        summary["n_dwells"] = dwell.n_dwells
    except SimulationError:
        summary["dwell_median"] = None
    return ["transitions.csv"], summary, []


def _run_exit_prob(cfg: RunConfig, tmp: Path):
    p = cfg.params
    gamma = p["gamma"]
    spec = _aux_spec(gamma)
    p_hat, ci = exit_prob_mc(spec, p["xi0"], p["a_minus"], p["a_plus"], p["n_paths"], cfg.master_seed)
    _write_csv(
        tmp / "exit.csv",
        ("xi0", "a_minus", "a_plus", "n_paths", "p_hat", "ci_lo", "ci_hi"),
        [(p["xi0"], p["a_minus"], p["a_plus"], p["n_paths"], p_hat, ci[0], ci[1])],
    )
    summary = {"p_hat": p_hat, "ci": list(ci), "n_paths": p["n_paths"]}
    if gamma > 0.5:
        summary["weak_limit"] = exit_prob_exact(gamma, p["a_minus"], p["a_plus"])
    return ["exit.csv"], summary, []


def _run_verify(cfg: RunConfig, tmp: Path):
    from .acceptance import run_criteria

    results = run_criteria(cfg.params["criteria"], workers=cfg.workers)
    checks = [
        (r.index, r.name, r.measured, r.tolerance, r.passed, r.seconds)
        for r in results
    ]
    _write_csv(
        tmp / "criteria.csv",
        ("index", "name", "measured", "tolerance", "passed", "seconds"),
        checks,
    )
    summary = {
        "criteria": [
            {
                "index": r.index,
                "name": r.name,
                "measured": r.measured,
                "tolerance": r.tolerance,
                "passed": r.passed,
                "detail": r.detail,
                "seconds": round(r.seconds, 3),
            }
            for r in results
        ],
        "all_passed": all(r.passed for r in results),
    }
    return ["criteria.csv"], summary, checks


_RUNNERS = {
    "full_chain": _run_full_chain,
    "xi_chain": _run_xi_chain,
    "bessel": _run_bessel,
    "moments": _run_moments,
    "aux": _run_aux,
    "exit_prob": _run_exit_prob,
    "verify": _run_verify,
}


def run(config: RunConfig) -> ResultBundle:
    """Execute one experiment and write its bundle atomically.

    The manifest lands first so a surviving bundle always identifies its
    config, seed, and code version; the whole directory is staged as a
    temporary sibling and renamed over the target in one step.
    """
    out_dir = Path(config.output_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_dir.parent / f".{out_dir.name}.tmp.{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    try:
        manifest = {
            "experiment": config.experiment,
            "params": config.params,
            "master_seed": config.master_seed,
            "workers": config.workers,
            "version": __version__,
            "created": datetime.now(timezone.utc).isoformat(),
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        files, summary, checks = _RUNNERS[config.experiment](config, tmp)
        (tmp / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return ResultBundle(
        manifest=manifest,
        data_files=tuple(files),
        summary=summary,
        checks=tuple(checks),
        path=out_dir,
    )


def emit_report(bundle: ResultBundle) -> Tuple[str, int]:
    """Render a bundle for humans; returns (text, process exit code).

    Exit code 0 when everything passed (or the experiment has no verdicts),
    1 when any acceptance criterion failed, 2 for an empty bundle.
    """
    if not bundle.checks and not bundle.data_files:
        return "error: empty bundle (no data files, no checks)", 2
    lines = [f"experiment: {bundle.manifest.get('experiment', '?')}"]
    if bundle.path is not None:
        lines.append(f"output: {bundle.path}")
    if not bundle.checks:
        lines.append(f"data files: {', '.join(bundle.data_files)}")
        for key in sorted(bundle.summary):
            lines.append(f"  {key} = {bundle.summary[key]}")
        return "\n".join(lines), 0

    header = f"{'crit':>4}  {'name':<28} {'measured':>14}  {'tolerance':<26} verdict"
    lines.append(header)
    lines.append("-" * len(header))
    failed = 0
    for index, name, measured, tolerance, passed, seconds in bundle.checks:
        verdict = "pass" if passed else "FAIL"
        failed += not passed
        if isinstance(measured, float):
            measured = f"{measured:.6g}"
        lines.append(f"{index:>4}  {name:<28} {str(measured):>14}  {tolerance:<26} {verdict}")
    lines.append(f"{len(bundle.checks) - failed} of {len(bundle.checks)} criteria passed")
    return "\n".join(lines), 0 if failed == 0 else 1
