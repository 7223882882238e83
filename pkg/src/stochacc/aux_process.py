"""Level-crossing skeleton of the scalar chain.

The chain's visits to the dyadic windows J_eta = [2^eta - L, 2^eta + L] induce
a nearest-neighbor walk on levels eta with stopping times tau.  This module
builds that walk from simulated paths (or directly, fused with the chain
update), and computes its jump, drift, dwell-time, and good-set statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from ._prng import next_sign, next_unit, stream_state
from .bessel_ref import mu as _level_drift
from .bessel_ref import wilson_interval
from .errors import (
    BelowDomain,
    EmptyPath,
    InfeasibleL,
    InvalidInput,
    MissingBound,
    NoTransitions,
    OffGridStart,
)
from .rng import as_seed
from .xi_chain import BelowBehavior, NoiseLaw, XiChainSpec, XiPath

__all__ = [
    "AuxParams",
    "AuxTrace",
    "DwellSummary",
    "step_bound",
    "eta_plus_of",
    "choose_L",
    "aux_params_for",
    "build_aux_trace",
    "sample_aux_traces",
    "jump_prob_estimate",
    "dwell_stats",
    "g_set_occupancy",
]

_SQRT3 = 1.7320508075688772
_MAX_LEVEL = 900  # floats overflow past 2^1024; levels never get near this


def step_bound(spec: XiChainSpec) -> float:
    """Uniform bound on |xi_{k+1} - xi_k| over the hypothesis region.

    For the pure chain with drift the bound is 2M (|omega + gamma/xi| <=
    M + |gamma|/xi_plus <= 2M since xi_plus >= |gamma|/M); without drift it
    is M.  Perturbations contribute their declared sup-bounds at xi_plus.
    """
    m = spec.noise_bound
    bound = m if spec.gamma == 0.0 else 2.0 * m
    for name, pert in (("g0", spec.g0), ("g1", spec.g1)):
        if pert is None:
            continue
        if pert.sup_bound is None:
            raise MissingBound(f"perturbation {name} declares no sup-bound")
        bound += abs(float(pert.sup_bound(spec.xi_plus, m)))
    return bound


def eta_plus_of(xi_plus: float, c_step: float) -> int:
    """Smallest integer eta with 2^eta > 2 max(xi_plus, c_step)."""
    if not (xi_plus > 0.0 and c_step > 0.0):
        raise InvalidInput("eta_plus_of needs positive inputs")
    target = 2.0 * max(float(xi_plus), float(c_step))
    eta = 0
    while 2.0**eta <= target:
        eta += 1
    return eta


def choose_L(c_step: float, eta_plus: int) -> float:
    """Window half-width: midpoint of the admissible range (c_step, 2^(eta_plus-1)).

    Any value in the open range keeps consecutive windows disjoint above
    eta_plus; the midpoint is a determinate choice.
    """
    c_step = float(c_step)
    if not c_step > 0.0:
        raise InvalidInput("c_step must be positive")
    half = 2.0 ** (int(eta_plus) - 1)
    if not c_step < half:
        raise InfeasibleL(
            f"no admissible half-width: c_step {c_step} >= 2^(eta_plus-1) = {half}"
        )
    return 0.5 * (c_step + half)


@dataclass(frozen=True)
class AuxParams:
    """Constants of the level walk plus the good-set rule sequences.

    k_plus, k_minus, a_seq are callables of (ell, eta0); drift is the mean
    level increment 2 p_plus - 1 used by the envelope set.  xi_plus is
    carried from the generating chain so both structural inequalities are
    checkable here.
    """

    L: float
    eta_plus: int
    c_step: float
    delta: float
    k_plus: Callable[[int, int], int]
    k_minus: Callable[[int, int], int]
    a_seq: Callable[[int, int], float]
    xi_plus: float
    drift: float

    def __post_init__(self):
        errs = []
        if not self.c_step < self.L < 2.0 ** (self.eta_plus - 1):
            errs.append(
                f"need c_step < L < 2^(eta_plus-1), got {self.c_step}, {self.L}, "
                f"{2.0 ** (self.eta_plus - 1)}"
            )
        if not 2.0**self.eta_plus > 2.0 * max(self.xi_plus, self.c_step):
            errs.append("need 2^eta_plus > 2 max(xi_plus, c_step)")
        if not self.delta > 0.0:
            errs.append("delta must be positive")
        if not 0.0 < self.drift < 1.0:
            errs.append("drift must lie in (0, 1)")
        if errs:
            raise InvalidInput("; ".join(errs))


def aux_params_for(spec: XiChainSpec, delta: float = 0.2) -> AuxParams:
    """Derive the full parameter set from a chain spec.

    The rule sequences follow the level-walk analysis: k_plus(ell) =
    ceil(2^(delta (ell + eta0))), k_minus(ell) = min(floor(delta (ell +
    eta0)), ell) clipped to >= 1, and a_seq the dwell lower-bound ladder
    built from those.  Requires gamma > 1/2 so the drift is positive.
    """
    c = step_bound(spec)
    ep = eta_plus_of(spec.xi_plus, c)
    half_width = choose_L(c, ep)
    drift = _level_drift(spec.gamma)
    delta = float(delta)
    if not delta > 0.0:
        raise InvalidInput("delta must be positive")

    def k_plus(ell: int, eta0: int) -> int:
        return int(math.ceil(2.0 ** (delta * (ell + eta0))))

    def k_minus(ell: int, eta0: int) -> int:
        return max(1, min(int(math.floor(delta * (ell + eta0))), int(ell)))

    def a_seq(ell: int, eta0: int) -> float:
        km = k_minus(ell, eta0)
        expo = 2.0 * ((1.0 - delta) * eta0 + (drift - delta) * (ell - 1 - km))
        return 2.0**expo * 2.0 ** (-delta * km)

    return AuxParams(
        L=half_width,
        eta_plus=ep,
        c_step=c,
        delta=delta,
        k_plus=k_plus,
        k_minus=k_minus,
        a_seq=a_seq,
        xi_plus=spec.xi_plus,
        drift=drift,
    )


@dataclass(frozen=True)
class AuxTrace:
    """Realized level walk: levels eta_ell at chain indices stop_times tau_ell.

    Recording stops at absorption (first visit to eta_plus) or at the end of
    the scanned path; in the latter case the walk is censored mid-dwell.
    offsets holds the within-window position xi_tau - 2^eta, a diagnostic
    only (the walk is not Markov in eta alone).
    """

    levels: np.ndarray
    stop_times: np.ndarray
    absorbed: bool
    censored: bool
    offsets: np.ndarray
    horizon: int

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.int64)
        stops = np.asarray(self.stop_times, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "stop_times", stops)
        object.__setattr__(self, "offsets", offsets)
        if not (levels.size == stops.size == offsets.size >= 1):
            raise InvalidInput("levels, stop_times, offsets must align, nonempty")
        if stops[0] != 0:
            raise InvalidInput("stop_times must start at 0")
        if stops.size > 1:
            if not np.all(np.diff(stops) > 0):
                raise InvalidInput("stop_times must be strictly increasing")
            if not np.all(np.abs(np.diff(levels)) == 1):
                raise InvalidInput("levels must move by exactly one per stop")
        if self.absorbed and self.censored:
            raise InvalidInput("a trace cannot be absorbed and censored at once")

    def __len__(self) -> int:
        return int(self.levels.size)

    @property
    def n_transitions(self) -> int:
        return int(self.levels.size - 1)


def _locate_level(xi0: float, params: AuxParams) -> int:
    for eta in range(params.eta_plus + 1, _MAX_LEVEL):
        center = 2.0**eta
        if abs(xi0 - center) <= params.L:
            return eta
        if center - params.L > xi0:
            break
    raise OffGridStart(
        f"xi0 = {xi0} lies in no window J_eta with eta > {params.eta_plus}"
    )


@njit(cache=True, nogil=True)
def _scan_levels(values, L, eta_plus, eta0, out_eta, out_tau, out_off):
    eta = eta0
    out_eta[0] = eta0
    out_tau[0] = 0
    out_off[0] = values[0] - 2.0**eta0
    cnt = 1
    lo = 2.0 ** (eta - 1)
    hi = 2.0 ** (eta + 1)
    for k in range(1, values.size):
        x = values[k]
        if abs(x - lo) <= L:
            eta -= 1
        elif abs(x - hi) <= L:
            eta += 1
        else:
            continue
        out_eta[cnt] = eta
        out_tau[cnt] = k
        out_off[cnt] = x - 2.0**eta
        cnt += 1
        if eta == eta_plus:
            return cnt, True
        lo = 2.0 ** (eta - 1)
        hi = 2.0 ** (eta + 1)
    return cnt, False


def build_aux_trace(path: XiPath, params: AuxParams) -> AuxTrace:
    """Scan a stored chain path into its level walk.

    The start must already sit in a window J_eta0 with eta0 > eta_plus; the
    walk then records each first entry into a neighboring window, freezing
    at eta_plus.
    """
    values = np.asarray(path.values, dtype=np.float64)
    if values.size == 0:
        raise EmptyPath("cannot scan an empty path")
    eta0 = _locate_level(float(values[0]), params)
    out_eta = np.empty(values.size, dtype=np.int64)
    out_tau = np.empty(values.size, dtype=np.int64)
    out_off = np.empty(values.size, dtype=np.float64)
    cnt, absorbed = _scan_levels(
        values, params.L, params.eta_plus, eta0, out_eta, out_tau, out_off
    )
    return AuxTrace(
        levels=out_eta[:cnt].copy(),
        stop_times=out_tau[:cnt].copy(),
        absorbed=bool(absorbed),
        censored=not bool(absorbed),
        offsets=out_off[:cnt].copy(),
        horizon=int(values.size - 1),
    )


@njit(cache=True, nogil=True)
def _aux_walk_kernel(
    master,
    stream,
    xi0,
    gamma,
    rademacher,
    xi_minus,
    forbid,
    L,
    eta_plus,
    eta0,
    max_steps,
    max_records,
    out_eta,
    out_tau,
    out_off,
):
    """Chain update fused with the window scan; no path storage.

    The stepping replicates the stored-path kernel bit for bit, so a fused
    trace equals the scan of the stored path for the same seed.  Returns
    (record count, absorbed, steps done, status); status 1 flags a
    below-domain state, which callers surface as BelowDomain.
    """
    s = stream_state(master, stream)
    xi = xi0
    eta = eta0
    out_eta[0] = eta0
    out_tau[0] = 0
    out_off[0] = xi0 - 2.0**eta0
    cnt = 1
    lo = 2.0 ** (eta - 1)
    hi = 2.0 ** (eta + 1)
    for k in range(1, max_steps + 1):
        if forbid and xi <= xi_minus:
            return cnt, False, k - 1, 1
        if rademacher:
            w = next_sign(s)
        else:
            w = (2.0 * next_unit(s) - 1.0) * _SQRT3
        xi = xi + w + gamma / xi
        if not forbid and xi < xi_minus:
            xi = abs(xi) + xi_minus
        if abs(xi - lo) <= L:
            eta -= 1
        elif abs(xi - hi) <= L:
            eta += 1
        else:
            continue
        out_eta[cnt] = eta
        out_tau[cnt] = k
        out_off[cnt] = xi - 2.0**eta
        cnt += 1
        if eta == eta_plus:
            return cnt, True, k, 0
        if cnt == max_records:
            return cnt, False, k, 0
        lo = 2.0 ** (eta - 1)
        hi = 2.0 ** (eta + 1)
    return cnt, False, max_steps, 0


def sample_aux_traces(
    spec: XiChainSpec,
    params: AuxParams,
    eta0: int,
    n_traces: int,
    max_steps: int,
    rng,
    max_transitions: Optional[int] = None,
) -> List[AuxTrace]:
    """Simulate fresh chains from 2^eta0 and return their level walks.

    Fused with the chain update, so arbitrarily long dwells cost no memory.
    Each trace ends at absorption, at max_transitions recorded moves, or at
    max_steps (censored).  Pure chains only; perturbed chains go through
    run_xi + build_aux_trace.
    """
    if not spec.is_pure:
        raise InvalidInput("fused sampling supports pure chains only")
    if eta0 <= params.eta_plus:
        raise OffGridStart(f"eta0 must exceed eta_plus = {params.eta_plus}")
    if n_traces < 1 or max_steps < 1:
        raise InvalidInput("need n_traces >= 1 and max_steps >= 1")
    seed = as_seed(rng)
    cap = max_steps + 1 if max_transitions is None else max_transitions + 1
    rademacher = spec.noise is NoiseLaw.RADEMACHER
    traces = []
    for i in range(n_traces):
        out_eta = np.empty(cap, dtype=np.int64)
        out_tau = np.empty(cap, dtype=np.int64)
        out_off = np.empty(cap, dtype=np.float64)
        cnt, absorbed, steps, status = _aux_walk_kernel(
            seed,
            i,
            2.0**eta0,
            spec.gamma,
            rademacher,
            spec.xi_minus,
            spec.below_behavior is BelowBehavior.FORBID,
            params.L,
            params.eta_plus,
            eta0,
            max_steps,
            cap,
            out_eta,
            out_tau,
            out_off,
        )
        if status == 1:
            raise BelowDomain(steps, f"chain left the domain at step {steps}")
        traces.append(
            AuxTrace(
                levels=out_eta[:cnt].copy(),
                stop_times=out_tau[:cnt].copy(),
                absorbed=bool(absorbed),
                censored=not bool(absorbed),
                offsets=out_off[:cnt].copy(),
                horizon=int(steps),
            )
        )
    return traces


def jump_prob_estimate(
    traces: Sequence[AuxTrace], eta_threshold: int
) -> Tuple[float, Tuple[float, float], Tuple[int, int]]:
    """Pooled up-move fraction over transitions leaving levels above the threshold.

    Returns (p_hat_plus, 99% Wilson interval, (n_up, n_down)).
    """
    traces = list(traces)
    if not traces:
        raise InvalidInput("need at least one trace")
    up = 0
    total = 0
    for tr in traces:
        if tr.n_transitions == 0:
            continue
        mask = tr.levels[:-1] > eta_threshold
        moves = np.diff(tr.levels)[mask]
        total += moves.size
        up += int(np.count_nonzero(moves > 0))
    if total == 0:
        raise NoTransitions(f"no transitions above eta = {eta_threshold}")
    return up / total, wilson_interval(up, total), (up, total - up)


@dataclass(frozen=True)
class DwellSummary:
    """Pooled statistics of the normalized dwell time dtau / 2^(2 eta_prev)."""

    quantiles: Dict[float, float]
    survival_m: np.ndarray
    survival: np.ndarray
    tail_slope: float
    n_dwells: int


def dwell_stats(
    traces: Sequence[AuxTrace], paths: Optional[Sequence[XiPath]] = None
) -> DwellSummary:
    """Quantiles and tail decay of dwell times in diffusive units.

    Every recorded dwell is a completed level move; the unfinished final
    dwell of a censored trace is never recorded, so no censoring correction
    is needed.  When the generating paths are supplied they are checked to
    align with the traces.
    """
    traces = list(traces)
    if not traces:
        raise InvalidInput("need at least one trace")
    if paths is not None:
        paths = list(paths)
        if len(paths) != len(traces):
            raise InvalidInput("traces and paths must align one-to-one")
        for tr, path in zip(traces, paths):
            values = np.asarray(path.values)
            if tr.stop_times[-1] >= values.size:
                raise InvalidInput("trace indexes beyond its path")
            centers = tr.levels.astype(np.float64)
            recon = values[tr.stop_times] - 2.0**centers
            if not np.array_equal(recon, tr.offsets):
                raise InvalidInput("trace does not match its generating path")
    normalized = []
    for tr in traces:
        if tr.n_transitions == 0:
            continue
        dwell = np.diff(tr.stop_times).astype(np.float64)
        scale = 2.0 ** (2.0 * tr.levels[:-1].astype(np.float64))
        normalized.append(dwell / scale)
    if not normalized:
        raise NoTransitions("no completed dwells in the ensemble")
    pooled = np.concatenate(normalized)
    qs = (0.1, 0.25, 0.5, 0.75, 0.9)
    quantiles = {q: float(np.quantile(pooled, q)) for q in qs}
    m_max = 1
    while m_max < 64 and np.mean(pooled > m_max + 1) > 0.0:
        m_max += 1
    m_grid = np.arange(1, m_max + 1, dtype=np.float64)
    survival = np.array([float(np.mean(pooled > m)) for m in m_grid])
    keep = survival > 0.0
    if np.count_nonzero(keep) >= 2:
        slope = float(np.polyfit(m_grid[keep], np.log(survival[keep]), 1)[0])
    else:
        slope = -math.inf
    return DwellSummary(
        quantiles=quantiles,
        survival_m=m_grid,
        survival=survival,
        tail_slope=slope,
        n_dwells=int(pooled.size),
    )


def g_set_occupancy(
    traces: Sequence[AuxTrace], params: AuxParams
) -> Tuple[float, float, float, float]:
    """Fractions of traces satisfying the three good-set conditions.

    G1: the level stays in the drift cone |eta_ell - drift*ell - eta0| <=
    delta (ell + eta0).  G2: every dwell is at most k_plus(ell-1) diffusive
    units.  G3: each window of k_minus(ell) recent dwells contains one of
    length >= a_seq(ell).  All evaluated over the realized horizon.
    """
    traces = list(traces)
    if not traces:
        raise InvalidInput("need at least one trace")
    n1 = n2 = n3 = nall = 0
    for tr in traces:
        eta0 = int(tr.levels[0])
        n = tr.n_transitions
        ells = np.arange(n + 1, dtype=np.float64)
        dev = np.abs(tr.levels.astype(np.float64) - params.drift * ells - eta0)
        g1 = bool(np.all(dev <= params.delta * (ells + eta0)))
        dwell = np.diff(tr.stop_times).astype(np.float64)
        g2 = True
        for ell in range(1, n + 1):
            cap = params.k_plus(ell - 1, eta0) * 2.0 ** (
                2.0 * float(tr.levels[ell - 1])
            )
            if dwell[ell - 1] > cap:
                g2 = False
                break
        g3 = True
        for ell in range(1, n + 1):
            km = params.k_minus(ell, eta0)
            lo = max(1, ell - km)
            threshold = params.a_seq(ell, eta0)
            if not np.any(dwell[lo - 1 : ell] >= threshold):
                g3 = False
                break
        n1 += g1
        n2 += g2
        n3 += g3
        nall += g1 and g2 and g3
    n = len(traces)
    return n1 / n, n2 / n, n3 / n, nall / n


def trace_rows(trace: AuxTrace) -> List[Tuple[int, int, int, bool]]:
    """Flatten a trace to (ell, eta, tau, censored) rows for CSV export."""
    cen = bool(trace.censored)
    return [
        (ell, int(trace.levels[ell]), int(trace.stop_times[ell]), cen)
        for ell in range(len(trace))
    ]
