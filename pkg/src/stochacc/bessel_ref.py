"""Reference Bessel process of dimension 2 gamma + 1.

The diffusive limit of the scalar chain solves dR = dB + gamma/R dt.  This
module simulates that SDE by Euler-Maruyama with local step subdivision near
zero, and provides the closed-form two-barrier exit probability plus the
derived level-walk constants p_plus and mu used by the auxiliary process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numba import njit

from ._prng import next_normal, stream_state
from .errors import DegeneratePath, InvalidInput, InvalidInterval, SubcriticalGamma
from .rng import as_seed

__all__ = [
    "BesselParams",
    "ExitTimeStats",
    "simulate_bessel",
    "exit_prob_exact",
    "p_plus",
    "mu",
    "bessel_exit_time_mc",
]

_MAX_SPLIT_LEVELS = 20
_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class BesselParams:
    """Simulation parameters; gamma > 1/2 is the transient regime."""

    gamma: float
    r0: float = 1.0
    dt: float = 1e-4
    horizon: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r0", float(self.r0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "horizon", float(self.horizon))
        if not self.gamma > 0.5:
            raise SubcriticalGamma(f"gamma must exceed 1/2, got {self.gamma}")
        if not self.r0 > 0.0:
            raise InvalidInput(f"r0 must be > 0, got {self.r0}")
        if not 0.0 < self.dt <= self.horizon:
            raise InvalidInput("need 0 < dt <= horizon")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@njit(cache=True, nogil=True, inline="always")
def _advance(s, r, gamma, h, floor_value, stack):
    """One EM step of size h with local halving when the proposal dips
    under the floor.  Returns the new value, or -1.0 after 20 split levels.
    """
    h_min = h / 2.0**_MAX_SPLIT_LEVELS
    sp = 0
    stack[sp] = h
    sp = 1
    while sp > 0:
        sp -= 1
        step = stack[sp]
        prop = r + math.sqrt(step) * next_normal(s) + gamma * step / r
        if prop > floor_value:
            r = prop
            continue
        if step <= h_min:
            return -1.0
        stack[sp] = step / 2.0  # second half, done after the first
        stack[sp + 1] = step / 2.0
        sp += 2
    return r


@njit(cache=True, nogil=True)
def _bessel_path_kernel(master, stream, r0, gamma, dt, n, out):
    s = stream_state(master, stream)
    stack = np.empty(2 * _MAX_SPLIT_LEVELS + 2)
    floor_value = math.sqrt(dt) / 100.0
    r = r0
    out[0] = r
    for i in range(n):
        r = _advance(s, r, gamma, dt, floor_value, stack)
        if r < 0.0:
            return 1
        out[i + 1] = r
    return 0


@njit(cache=True, nogil=True)
def _bessel_exit_kernel(master, stream, r0, gamma, dt, a_lo, a_hi, max_steps):
    """First passage out of (a_lo, a_hi); outcome 0 = low, 1 = high,
    2 = degenerate, 3 = censored at max_steps."""
    s = stream_state(master, stream)
    stack = np.empty(2 * _MAX_SPLIT_LEVELS + 2)
    floor_value = math.sqrt(dt) / 100.0
    r = r0
    for i in range(max_steps):
        r = _advance(s, r, gamma, dt, floor_value, stack)
        if r < 0.0:
            return 2, 0.0
        if r <= a_lo:
            return 0, (i + 1) * dt
        if r >= a_hi:
            return 1, (i + 1) * dt
    return 3, max_steps * dt


def simulate_bessel(params: BesselParams, rng) -> np.ndarray:
    """Euler-Maruyama path on the grid t_i = i dt, i = 0..round(T/dt).

    Proposals at or below sqrt(dt)/100 are retried as two half-steps with
    fresh noise, recursively up to 20 levels; exhausting them raises
    DegeneratePath.
    """
    seed = as_seed(rng)
    n = params.n_steps
    out = np.empty(n + 1)
    status = _bessel_path_kernel(seed, 0, params.r0, params.gamma, params.dt, n, out)
    if status != 0:
        raise DegeneratePath("path pinned at zero beyond the subdivision budget")
    return out


def exit_prob_exact(gamma: float, a_minus: float, a_plus: float) -> float:
    """P(hit a_plus before a_minus) for R(0) = 1, barriers a_minus < 1 < a_plus."""
    gamma = float(gamma)
    a_minus = float(a_minus)
    a_plus = float(a_plus)
    if not gamma > 0.5:
        raise SubcriticalGamma(f"gamma must exceed 1/2, got {gamma}")
    if not 0.0 < a_minus < 1.0 < a_plus:
        raise InvalidInterval(
            f"need 0 < a_minus < 1 < a_plus, got ({a_minus}, {a_plus})"
        )
    p = 1.0 - 2.0 * gamma
    lo = a_minus**p
    hi = a_plus**p
    return (lo - 1.0) / (lo - hi)


def p_plus(gamma: float) -> float:
    """Probability the scale-free doubling walk steps up: exit at 2 before 1/2."""
    return exit_prob_exact(gamma, 0.5, 2.0)


def mu(gamma: float) -> float:
    """Mean drift 2 p_plus - 1 of the induced level walk."""
    return 2.0 * p_plus(gamma) - 1.0


@dataclass(frozen=True)
class ExitTimeStats:
    """First-passage Monte Carlo summary.

    Iterates as the documented triple (prob_upper, mean_exit_time, ci);
    degenerate and censored paths are excluded from both estimates and
    reported by count.  Exit times of clean paths are kept for tail checks.
    """

    prob_upper: float
    mean_exit_time: float
    ci: Tuple[float, float]
    n_degenerate: int = 0
    n_censored: int = 0
    exit_times: np.ndarray = None

    def __iter__(self):
        return iter((self.prob_upper, self.mean_exit_time, self.ci))


def wilson_interval(successes: int, n: int, z: float = _Z99) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion (99% by default)."""
    if n <= 0:
        raise InvalidInput("need at least one trial")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def bessel_exit_time_mc(
    params: BesselParams,
    a_minus: float,
    a_plus: float,
    n_paths: int,
    rng,
) -> ExitTimeStats:
    """Simulate first passage out of (a_minus, a_plus) for n_paths paths.

    Paths run to exit regardless of params.horizon (the safety cap is far in
    the exponential tail of the exit time).
    """
    if not a_minus < params.r0 < a_plus:
        raise InvalidInterval(
            f"need a_minus < r0 < a_plus, got ({a_minus}, {params.r0}, {a_plus})"
        )
    if n_paths < 1:
        raise InvalidInput("need at least one path")
    seed = as_seed(rng)
    max_steps = int(math.ceil(200.0 * max(1.0, a_plus - a_minus) ** 2 / params.dt))
    hits = 0
    n_deg = 0
    n_cen = 0
    times = np.empty(n_paths)
    kept = 0
    for i in range(n_paths):
        outcome, t_exit = _bessel_exit_kernel(
            seed, i, params.r0, params.gamma, params.dt, a_minus, a_plus, max_steps
        )
        if outcome == 2:
            n_deg += 1
        elif outcome == 3:
            n_cen += 1
        else:
            hits += outcome
            times[kept] = t_exit
            kept += 1
    if kept == 0:
        raise DegeneratePath("no path exited cleanly")
    times = times[:kept]
    return ExitTimeStats(
        prob_upper=hits / kept,
        mean_exit_time=float(times.mean()),
        ci=wilson_interval(hits, kept),
        n_degenerate=n_deg,
        n_censored=n_cen,
        exit_times=times,
    )
