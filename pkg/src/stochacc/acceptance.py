"""The acceptance gate: one check per quantitative law the library claims.

Every criterion is a pinned-seed Monte Carlo surrogate for an asymptotic
statement, with an explicit tolerance chosen for desk-scale sample sizes.
``run_criteria`` runs any subset and returns structured verdicts; the
harness verify experiment and the acceptance test module are both thin
wrappers around it.  A criterion that raises is reported as failed, never
as a crash, so a long gate always produces a full table.

Seeds are fixed per criterion.  A fixed seed is still a fair draw from the
verified law; it just makes the gate reproducible down to the byte.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np

from .aux_process import aux_params_for, dwell_stats, jump_prob_estimate, sample_aux_traces
from .bessel_ref import _bessel_path_kernel
from .estimators import (
    d_squared_quadrature,
    estimate_transfer_moments,
    exit_prob_mc,
    fit_growth_exponent,
    reduced_speed_series,
)
from .harness import _map_indices
from .particle_chain import ChainConfig, run_trajectory
from .potential import PotentialSpec
from .rng import spawn_generator
from .scattering import alpha1
from .xi_chain import XiChainSpec, _xi_kernel, run_xi, BelowBehavior

__all__ = ["CriterionResult", "run_criteria", "CRITERIA"]

_SPEEDS = (30.0, 50.0, 80.0, 130.0, 210.0)
_N_MOMENT = 1_000_000
_TARGET_RATIO = (8 - 3) / 2.0  # dimension default d = 8


@dataclass(frozen=True)
class CriterionResult:
    """Verdict for one acceptance criterion."""

    index: int
    name: str
    measured: float
    tolerance: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"[{verdict}] criterion {self.index:2d} {self.name}: "
            f"measured {self.measured:.6g}, require {self.tolerance} ({self.detail})"
        )


class _Context:
    """Shared lazily computed artifacts, so criteria 1-3 bill one moment run."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self._cache: Dict[str, object] = {}

    def map(self, n: int, fn):
        return _map_indices(n, self.workers, fn)

    @property
    def moment_fit(self):
        if "fit" not in self._cache:
            self._cache["fit"] = estimate_transfer_moments(
                PotentialSpec(), _SPEEDS, _N_MOMENT, 101, tol=1e-10
            )
        return self._cache["fit"]


def _crit_moment_ratio(ctx: _Context):
    fit = ctx.moment_fit
    detail = (
        f"B_hat = {fit.B_hat:.4g} +- {fit.B_se:.3g}, "
        f"D2_hat = {fit.D2_hat:.4g} +- {fit.D2_se:.3g}; "
        f"the drift target {_TARGET_RATIO * fit.D2_hat:.3g} sits far below B's "
        f"noise floor at this sample size"
    )
    ratio = fit.ratio
    return ratio, "ratio in [2.1, 2.9]", bool(2.1 <= ratio <= 2.9), detail


def _crit_d2_cross_oracle(ctx: _Context):
    fit = ctx.moment_fit
    quad, quad_se = d_squared_quadrature(PotentialSpec(), 1_000_000, 202)
    combined = math.hypot(quad_se, fit.D2_se)
    z = abs(quad - fit.D2_hat) / combined
    detail = f"quadrature {quad:.6g} +- {quad_se:.3g} vs collisions {fit.D2_hat:.6g} +- {fit.D2_se:.3g}"
    return z, "|difference| <= 3 combined SE", bool(z <= 3.0), detail


def _crit_zero_mean_transfer(ctx: _Context):
    fit = ctx.moment_fit
    z = np.abs(fit.mean_de) / fit.se_de
    detail = "per-speed z: " + ", ".join(
        f"{v:g}: {zi:.2f}" for v, zi in zip(fit.speeds_used, z)
    )
    worst = float(np.max(z))
    return worst, "max |mean dE| / SE <= 3 at every speed", bool(worst <= 3.0), detail


def _crit_elastic_limit(ctx: _Context):
    spec = PotentialSpec(omega=(0.0,))
    v0 = np.zeros(spec.d)
    v0[0] = 30.0
    cfg = ChainConfig(spec=spec, v0=v0, max_collisions=1000, tol=1e-9)
    trace = run_trajectory(cfg, spawn_generator(404, 0), store_kinematics=False)
    sq = trace.speeds**2
    rel = np.abs(0.5 * np.diff(sq)) / sq[:-1]
    worst = float(np.max(rel))
    detail = f"{trace.speeds.size - 1} collisions, static potential, tol 1e-9"
    return worst, "max |dE| / speed^2 <= 1e-5", bool(worst <= 1e-5), detail


def _crit_exit_probability(ctx: _Context):
    spec = XiChainSpec(gamma=1.0)
    target = 2.0 / 3.0
    n_paths = 10_000
    sigma = math.sqrt(target * (1 - target) / n_paths)
    out = {}
    for i, xi0 in enumerate((50.0, 200.0, 800.0)):
        p, ci = exit_prob_mc(spec, xi0, 0.5, 2.0, n_paths, 505 + i)
        out[xi0] = (p, 0.5 * (ci[1] - ci[0]))
    z = abs(out[200.0][0] - target) / sigma
    dev50 = abs(out[50.0][0] - target)
    dev800 = abs(out[800.0][0] - target)
    slack = out[50.0][1] + out[800.0][1]
    converges = dev800 <= dev50 + slack
    detail = (
        f"p_hat: 50 -> {out[50.0][0]:.4f}, 200 -> {out[200.0][0]:.4f}, "
        f"800 -> {out[800.0][0]:.4f} (target {target:.4f}); "
        f"dev800 {dev800:.4f} vs dev50 {dev50:.4f} + overlap {slack:.4f}"
    )
    passed = bool(z <= 3.0 and converges)
    return z, "|p_hat(200) - 2/3| <= 3 sigma and no widening at 800", passed, detail


_BLOCK = 64


def _mean_square_curve(master_seed: int, gamma: float, r0: float, dt: float,
                       n_steps: int, n_paths: int, ctx: _Context) -> np.ndarray:
    """Ensemble mean of R_t^2 accumulated over fixed blocks (worker-stable)."""
    n_blocks = (n_paths + _BLOCK - 1) // _BLOCK

    def one_block(b):
        acc = np.zeros(n_steps + 1)
        buf = np.empty(n_steps + 1)
        for i in range(b * _BLOCK, min((b + 1) * _BLOCK, n_paths)):
            status = _bessel_path_kernel(master_seed, i, r0, gamma, dt, n_steps, buf)
            if status != 0:
                raise RuntimeError(f"path {i} degenerated")
            acc += buf * buf
        return acc

    total = np.zeros(n_steps + 1)
    for acc in ctx.map(n_blocks, one_block):
        total += acc
    return total / n_paths


def _crit_bessel_mean_square(ctx: _Context):
    dt = 1e-4
    n_steps = 10_000
    n_paths = 10_000
    worst = 0.0
    parts = []
    for gamma in (0.75, 1.0, 2.0):
        msq = _mean_square_curve(606, gamma, 1.0, dt, n_steps, n_paths, ctx)
        t = np.arange(n_steps + 1) * dt
        slope = float(np.polyfit(t, msq, 1)[0])
        target = 2.0 * gamma + 1.0
        rel = abs(slope - target) / target
        worst = max(worst, rel)
        parts.append(f"gamma {gamma:g}: slope {slope:.4f} vs {target:g}")
    return worst, "slope within 5% of 2*gamma + 1 for each gamma", bool(worst <= 0.05), "; ".join(parts)


def _crit_envelope_bound(ctx: _Context):
    xi0, nu, n_steps, n_seeds = 50.0, 0.1, 1_000_000, 1000
    k = np.arange(n_steps + 1, dtype=float)
    base = xi0 + np.sqrt(k)
    lo = base ** (1.0 - nu)
    hi = base ** (1.0 + nu)

    def one(i):
        buf = np.empty(n_steps + 1)
        below = _xi_kernel(707, i, xi0, 1.0, True, 0.5, True, n_steps, buf)
        if below >= 0:
            return below  # left the domain: the lower envelope broke first
        bad = (buf < lo) | (buf > hi)
        return int(np.argmax(bad)) if bad.any() else -1

    firsts = np.array(ctx.map(n_seeds, one))
    held = int(np.sum(firsts < 0))
    frac = held / n_seeds
    violated = firsts[firsts >= 0]
    typical = int(np.median(violated)) if violated.size else -1
    detail = f"{held}/{n_seeds} seeds held for 10^6 steps; typical first violation k ~ {typical}"
    return frac, "envelope holds on >= 95% of seeds", bool(frac >= 0.95), detail


def _crit_second_moment_slope(ctx: _Context):
    xi0, n_steps, n_traces, block = 50.0, 2000, 2000, 50
    n_blocks = n_traces // block

    def one_block(b):
        acc = np.zeros(n_steps + 1)
        buf = np.empty(n_steps + 1)
        for i in range(b * block, (b + 1) * block):
            below = _xi_kernel(808, i, xi0, 1.0, True, 0.5, True, n_steps, buf)
            if below >= 0:
                raise RuntimeError(f"trace {i} left the domain")
            acc += buf * buf
        return acc

    k = np.arange(n_steps + 1, dtype=float)
    blocks = ctx.map(n_blocks, one_block)
    block_slopes = [float(np.polyfit(k, acc / block, 1)[0]) for acc in blocks]
    total = np.zeros(n_steps + 1)
    for acc in blocks:
        total += acc
    slope = float(np.polyfit(k, total / n_traces, 1)[0])
    se = float(np.std(block_slopes, ddof=1) / math.sqrt(n_blocks))
    passed = bool(slope + 3 * se >= 3.0 and slope - 3 * se <= 4.0)
    detail = f"ensemble-mean xi_k^2 slope {slope:.4f} +- {se:.4f} over {n_traces} traces"
    return slope, "slope in [3, 4] within 3 SE", passed, detail


def _crit_level_drift(ctx: _Context):
    spec = XiChainSpec(gamma=1.0)
    params = aux_params_for(spec)
    eta0, n_traces, n_moves = 12, 500, 3
    traces = sample_aux_traces(
        spec, params, eta0, n_traces, 2_000_000_000, 909, max_transitions=n_moves
    )
    p_hat, ci, (ups, downs) = jump_prob_estimate(traces, 9)
    target = 2.0 / 3.0
    in_ci = ci[0] <= target <= ci[1]

    levels = np.array([tr.levels[: n_moves + 1] for tr in traces if tr.levels.size == n_moves + 1])
    mean_eta = levels.mean(axis=0)
    slope = float(np.polyfit(np.arange(n_moves + 1), mean_eta, 1)[0])
    drift_ok = abs(slope - 1.0 / 3.0) <= 0.15 / 3.0
    detail = (
        f"pooled p_hat {p_hat:.4f} (99% CI [{ci[0]:.4f}, {ci[1]:.4f}], {ups + downs} moves, "
        f"departures from levels >= 10); mean-level slope {slope:.4f} vs 1/3"
    )
    return p_hat, "2/3 inside 99% CI and drift within 15% of 1/3", bool(in_ci and drift_ok), detail


def _crit_dwell_scaling(ctx: _Context):
    spec = XiChainSpec(gamma=1.0)
    params = aux_params_for(spec)
    medians = {}
    all_traces = []
    for eta0 in range(10, 15):
        cap = 40 * 4**eta0 + 1000
        traces = sample_aux_traces(
            spec, params, eta0, 40, cap, 1010 + eta0, max_transitions=1
        )
        first = [
            float(tr.stop_times[1] - tr.stop_times[0])
            for tr in traces
            if tr.levels.size >= 2
        ]
        if len(first) < 35:
            return (
                float("nan"),
                "median normalized dwell stable within factor 2",
                False,
                f"only {len(first)}/40 paths completed a first dwell at level {eta0}",
            )
        medians[eta0] = float(np.median(first)) / 4.0**eta0
        all_traces.extend(traces)
    spread = max(medians.values()) / min(medians.values())
    summary = dwell_stats(all_traces)
    geometric = summary.tail_slope <= -0.3
    detail = (
        "median dwell / 4^eta: "
        + ", ".join(f"{e}: {m:.3f}" for e, m in sorted(medians.items()))
        + f"; survival tail slope {summary.tail_slope:.3f} per unit of normalized time"
    )
    passed = bool(spread <= 2.0 and geometric)
    return spread, "max/min median ratio <= 2 and survival decays geometrically", passed, detail


def _collect_chain_traces(ctx: _Context, n_traces: int, max_collisions: int, seed: int):
    spec = PotentialSpec()
    v0 = np.zeros(spec.d)
    v0[0] = 30.0
    cfg = ChainConfig(spec=spec, v0=v0, max_collisions=max_collisions)

    def one(i):
        return run_trajectory(cfg, spawn_generator(seed, i), store_kinematics=False)

    return ctx.map(n_traces, one)


def _crit_growth_full_model(ctx: _Context):
    # 50 traces: the reduced-model check is the binding one at this budget
    traces = _collect_chain_traces(ctx, 50, 100_000, 1111)
    t_min = max(100.0 * tr.times[1] for tr in traces) * 1.05
    t_max = min(tr.times[-1] for tr in traces)
    fit = fit_growth_exponent(traces, (t_min, t_max))
    detail = (
        f"50 traces x 1e5 collisions from speed 30; window ({t_min:.3g}, {t_max:.3g}); "
        f"at this horizon the speed has moved well under one percent, so the "
        f"log-log slope sits near zero rather than at the asymptotic value"
    )
    return fit.slope, "median-speed slope in [0.15, 0.25]", bool(0.15 <= fit.slope <= 0.25), detail


def _crit_growth_reduced_model(ctx: _Context):
    # a small start keeps the sqrt-k regime in charge of the whole window;
    # reflection handles the few paths that graze the floor from this low
    spec = XiChainSpec(gamma=1.0, below_behavior=BelowBehavior.REFLECT)
    xi0, n_steps, n_paths, D = 5.0, 1_000_000, 1000, 1.0 / 3.0

    # path horizons spread by tens of percent, so scan them all before
    # fixing the common fit window; regenerating a path is milliseconds
    def bounds(i):
        path = run_xi(spec, xi0, n_steps, spawn_generator(1212, i))
        speeds = (3.0 * D * path.values) ** (1.0 / 3.0)
        return 1.0 / speeds[1], float(np.sum(1.0 / speeds[1:]))

    first_flights, horizons = zip(*ctx.map(n_paths, bounds))
    window = (max(100.0, 105.0 * max(first_flights)), 0.999 * min(horizons))

    def series():
        for i in range(n_paths):
            yield reduced_speed_series(run_xi(spec, xi0, n_steps, spawn_generator(1212, i)), D)

    fit = fit_growth_exponent(series(), window)
    detail = (
        f"{n_paths} paths x 1e6 steps, start {xi0:g}; window ({window[0]:.3g}, {window[1]:.3g}); "
        f"r^2 {fit.r_squared:.5f}"
    )
    return fit.slope, "median-speed slope in [0.17, 0.23]", bool(0.17 <= fit.slope <= 0.23), detail


def _bundle_payload(path) -> Dict[str, bytes]:
    return {
        p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.name != "manifest.json"
    }


def _crit_infrastructure(ctx: _Context):
    import tempfile
    from pathlib import Path

    from . import harness

    failures: List[str] = []

    # byte-identical reruns across worker counts, for a chain and a diffusion run
    with tempfile.TemporaryDirectory() as tmp:
        for exp, params in (
            ("xi_chain", {"n_traces": 12, "steps": 20_000}),
            ("bessel", {"n_paths": 200, "horizon": 0.05}),
        ):
            payloads = []
            for tag, workers in (("a", 1), ("b", 8), ("c", 1)):
                cfg = harness.RunConfig(
                    experiment=exp,
                    params={**harness._DEFAULTS[exp], **params},
                    master_seed=1313,
                    workers=workers,
                    output_dir=str(Path(tmp) / f"{exp}_{tag}"),
                )
                payloads.append(_bundle_payload(harness.run(cfg).path))
            if not (payloads[0] == payloads[1] == payloads[2]):
                failures.append(f"{exp} bundles differ across reruns/worker counts")

    # recorded kinematics are internally consistent
    spec = PotentialSpec()
    v0 = np.zeros(spec.d)
    v0[0] = 30.0
    cfg = ChainConfig(spec=spec, v0=v0, max_collisions=500)
    trace = run_trajectory(cfg, spawn_generator(1313, 0), store_kinematics=True)
    if not np.all(np.diff(trace.times) > 0):
        failures.append("collision times not strictly increasing")
    norms = np.linalg.norm(trace.velocities, axis=1)
    if not np.allclose(norms, trace.speeds, rtol=1e-12, atol=0.0):
        failures.append("stored speeds disagree with velocity norms")
    flight = np.diff(trace.times) * trace.speeds[1:]
    if not np.allclose(flight, cfg.mean_free_path, rtol=1e-9, atol=0.0):
        failures.append("flight times inconsistent with the mean free path")
    if not (np.all(np.isfinite(trace.positions)) and np.all(np.isfinite(trace.velocities))):
        failures.append("non-finite kinematics recorded")

    # level walks move one level at a time with increasing stop times
    xspec = XiChainSpec(gamma=1.0)
    traces = sample_aux_traces(xspec, aux_params_for(xspec), 6, 20, 2_000_000, 1313,
                               max_transitions=8)
    for tr in traces:
        if tr.levels.size >= 2 and not np.all(np.abs(np.diff(tr.levels)) == 1):
            failures.append("level walk skipped a level")
            break
        if not np.all(np.diff(tr.stop_times) > 0):
            failures.append("level stop times not increasing")
            break

    # leading-order momentum transfer stays orthogonal to the incoming direction
    rng = spawn_generator(1313, 1)
    worst_dot = 0.0
    for _ in range(25):
        e = rng.standard_normal(spec.d)
        e /= np.linalg.norm(e)
        raw = rng.standard_normal(spec.d)
        raw -= (raw @ e) * e
        b = raw / np.linalg.norm(raw) * (0.5 * rng.random() ** (1.0 / (spec.d - 1)))
        phi = rng.random(spec.m) * 2.0 * math.pi
        lam = 2.0 * rng.random() - 1.0
        a1 = alpha1(spec, e, b, phi, lam)
        scale = max(float(np.linalg.norm(a1)), 1e-300)
        worst_dot = max(worst_dot, abs(float(a1 @ e)) / scale)
    if worst_dot > 1e-9:
        failures.append(f"transfer not orthogonal to the direction: {worst_dot:.2e}")

    detail = "; ".join(failures) if failures else (
        f"reruns byte-identical at workers 1 and 8; kinematics, level walks, and "
        f"orthogonality (worst {worst_dot:.2e}) all clean"
    )
    return worst_dot, "reruns byte-identical and all invariants hold", not failures, detail


CRITERIA: Dict[int, Tuple[str, Callable]] = {
    1: ("moment_ratio", _crit_moment_ratio),
    2: ("d2_cross_oracle", _crit_d2_cross_oracle),
    3: ("zero_mean_transfer", _crit_zero_mean_transfer),
    4: ("elastic_limit", _crit_elastic_limit),
    5: ("exit_probability", _crit_exit_probability),
    6: ("bessel_mean_square", _crit_bessel_mean_square),
    7: ("envelope_bound", _crit_envelope_bound),
    8: ("second_moment_slope", _crit_second_moment_slope),
    9: ("level_drift", _crit_level_drift),
    10: ("dwell_scaling", _crit_dwell_scaling),
    11: ("growth_full_model", _crit_growth_full_model),
    12: ("growth_reduced_model", _crit_growth_reduced_model),
    13: ("infrastructure", _crit_infrastructure),
}


def run_criteria(
    indices: Iterable[int], workers: int = 1, ctx: _Context = None
) -> List[CriterionResult]:
    """Run the requested criteria in index order and return their verdicts.

    Passing an existing context lets separate calls share the cached moment
    fit instead of recomputing it.
    """
    ctx = ctx if ctx is not None else _Context(workers)
    results = []
    for index in sorted(set(int(i) for i in indices)):
        if index not in CRITERIA:
            raise KeyError(f"no criterion {index}; valid indices are 1..13")
        name, fn = CRITERIA[index]
        start = time.perf_counter()
        try:
            measured, tolerance, passed, detail = fn(ctx)
        except Exception as err:  # a broken criterion is a failed criterion
            measured = float("nan")
            tolerance = "criterion completed"
            passed = False
            detail = f"{type(err).__name__}: {err}"
        results.append(
            CriterionResult(
                index=index,
                name=name,
                measured=float(measured),
                tolerance=tolerance,
                passed=bool(passed),
                detail=detail,
                seconds=time.perf_counter() - start,
            )
        )
    return results
