"""The coupled collision chain: scatter, then fly ballistically for one mean
free path.

State n holds the arrival time t_n, velocity v_n and position q_n.  A step
draws scattering data (b, phi, lambda), integrates the collision to get the
outgoing velocity v_{n+1} = v_n + R, then advances t_{n+1} = t_n + l/||v_{n+1}||
and q_{n+1} = q_n + v_{n+1} (t_{n+1} - t_n).  Scattering duration is ignored.
Between arrival times the motion is linear, so the speed seen by
``speed_at_time`` is piecewise constant and right-continuous from the left:
the speed on (t_n, t_{n+1}] is ||v_{n+1}||.

``run_trajectory`` executes whole traces in a compiled kernel with a
counter-based per-trace random stream, so ensembles are reproducible
independently of how traces are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit

from ._prng import next_normal, next_unit, stream_state
from .errors import InvalidInput, OutOfRange, TrappedEvent, ZeroVelocity
from .potential import SUPPORT_RADIUS, PotentialSpec
from .scattering import (
    _BASE_TOL_FACTOR,
    _DP_A,
    _DP_C,
    _DP_E,
    TIME_CAP_CHORDS,
    CollisionInput,
    _collide_plane,
    integrate_collision,
    trapping_threshold,
)

__all__ = [
    "ChainConfig",
    "ParticleTrace",
    "sample_kappa",
    "step_chain",
    "run_trajectory",
    "speed_at_time",
]

_LAMBDA_LAWS = ("uniform", "zero")
_PHI_LAWS = ("uniform",)


@dataclass(frozen=True)
class ChainConfig:
    """Immutable configuration of the collision chain."""

    spec: PotentialSpec
    v0: np.ndarray
    max_collisions: int
    mean_free_path: float = 1.0
    lambda_law: str = "uniform"
    phi_law: str = "uniform"
    tol: float = 1e-8

    def __post_init__(self):
        v0 = np.ascontiguousarray(self.v0, dtype=float)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "mean_free_path", float(self.mean_free_path))
        object.__setattr__(self, "tol", float(self.tol))
        if v0.shape != (self.spec.d,):
            raise InvalidInput(f"v0 must have {self.spec.d} components")
        if not (isinstance(self.max_collisions, (int, np.integer)) and self.max_collisions >= 0):
            raise InvalidInput(f"max_collisions must be a nonnegative integer")
        if not (np.isfinite(self.mean_free_path) and self.mean_free_path > 0.0):
            raise InvalidInput("mean_free_path must be positive")
        if not (0.0 < self.tol <= 1e-3):
            raise InvalidInput(f"tol must lie in (0, 1e-3], got {self.tol}")
        if self.lambda_law not in _LAMBDA_LAWS:
            raise InvalidInput(f"lambda_law must be one of {_LAMBDA_LAWS}")
        if self.phi_law not in _PHI_LAWS:
            raise InvalidInput(f"phi_law must be one of {_PHI_LAWS}")
        speed = float(np.linalg.norm(v0))
        threshold = trapping_threshold(self.spec, 1.0)
        if not speed > threshold:
            raise InvalidInput(
                f"initial speed {speed} must exceed the worst-case trapping "
                f"threshold {threshold}"
            )


@dataclass(frozen=True)
class ParticleTrace:
    """Recorded chain states: arrival times, speeds, optional kinematics.

    ``trapped_at = n`` means the collision attempted from state n trapped;
    the trace then ends at state n.  Positions and velocities are stored only
    when requested (long ensembles keep times and speeds alone).
    """

    times: np.ndarray
    speeds: np.ndarray
    positions: Optional[np.ndarray] = None
    velocities: Optional[np.ndarray] = None
    trapped_at: Optional[int] = None

    def __len__(self) -> int:
        return int(self.times.size)


def sample_kappa(rng: np.random.Generator, v: np.ndarray, m: int = 1):
    """Draw scattering data for incoming velocity ``v``.

    b is uniform on the radius-1/2 disk in the hyperplane orthogonal to v,
    lambda is Uniform[-1,1], phi is uniform on the m-torus.
    """
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    if not speed > 0.0:
        raise ZeroVelocity("cannot scatter a zero velocity")
    d = v.size
    e = v / speed
    while True:
        z = rng.normal(size=d)
        z -= (z @ e) * e
        zn = float(np.linalg.norm(z))
        if zn > 1e-12:
            break
    bnorm = SUPPORT_RADIUS * rng.random() ** (1.0 / (d - 1))
    b = (bnorm / zn) * z
    phi = rng.uniform(0.0, 2.0 * np.pi, size=m)
    lam = rng.uniform(-1.0, 1.0)
    return b, phi, lam


def step_chain(
    cfg: ChainConfig,
    rng: np.random.Generator,
    state: Tuple[float, np.ndarray, np.ndarray],
):
    """One collision plus one mean-free-path flight from ``state=(t, v, q)``."""
    t, v, q = state
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    if not float(np.linalg.norm(v)) > 0.0:
        raise ZeroVelocity("cannot scatter a zero velocity")
    b, phi, lam = sample_kappa(rng, v, m=cfg.spec.m)
    if cfg.lambda_law == "zero":
        lam = 0.0
    out = integrate_collision(cfg.spec, CollisionInput(v=v, b=b, phi=phi, lam=lam), cfg.tol)
    if out.trapped:
        raise TrappedEvent(-1, "collision did not exit within the time cap")
    v_new = v + out.R
    dt = cfg.mean_free_path / float(np.linalg.norm(v_new))
    return t + dt, v_new, q + v_new * dt


@njit(cache=True, nogil=True)
def _chain_kernel(master, stream, v0, ell, amp, omega1, rtol, lam_zero,
                  n_steps, times, speeds, pos, vel, store,
                  A_, C_, E_):
    """Run a whole trace; returns the trapping collision index or -1."""
    s = stream_state(master, stream)
    d = v0.shape[0]
    v = v0.copy()
    e = np.empty(d)
    bhat = np.empty(d)
    nostore = np.empty(1)
    ball_exp = 1.0 / (d - 1.0)
    t = 0.0
    vnorm = 0.0
    for k in range(d):
        vnorm += v[k] * v[k]
    vnorm = np.sqrt(vnorm)
    times[0] = 0.0
    speeds[0] = vnorm
    if store:
        for k in range(d):
            pos[0, k] = 0.0
            vel[0, k] = v[k]
    for n in range(n_steps):
        for k in range(d):
            e[k] = v[k] / vnorm
        # uniform direction in the hyperplane orthogonal to e
        while True:
            dot = 0.0
            for k in range(d):
                bhat[k] = next_normal(s)
                dot += bhat[k] * e[k]
            zn = 0.0
            for k in range(d):
                bhat[k] -= dot * e[k]
                zn += bhat[k] * bhat[k]
            zn = np.sqrt(zn)
            if zn > 1e-12:
                break
        for k in range(d):
            bhat[k] /= zn
        bnorm = 0.5 * next_unit(s) ** ball_exp
        phi1 = 6.283185307179586 * next_unit(s)
        lam = 0.0 if lam_zero else 2.0 * next_unit(s) - 1.0
        s_entry = np.sqrt(0.25 - bnorm * bnorm)
        t_entry = (0.5 - s_entry) / vnorm
        tcap = TIME_CAP_CHORDS / vnorm - t_entry
        status, t_in, x, y, vx, vy, nacc = _collide_plane(
            -s_entry, bnorm, vnorm, 0.0,
            lam * amp, omega1, phi1 + omega1 * t_entry, rtol, tcap,
            np.inf, False, nostore, nostore, nostore, nostore, nostore,
            A_, C_, E_,
        )
        if status != 0:
            return n
        sp = 0.0
        for k in range(d):
            v[k] = v[k] + (vx - vnorm) * e[k] + vy * bhat[k]
            sp += v[k] * v[k]
        vnorm = np.sqrt(sp)
        dt = ell / vnorm
        t = t + dt
        times[n + 1] = t
        speeds[n + 1] = vnorm
        if store:
            for k in range(d):
                pos[n + 1, k] = pos[n, k] + v[k] * dt
                vel[n + 1, k] = v[k]
    return -1


def run_trajectory(
    cfg: ChainConfig,
    rng: np.random.Generator,
    store_kinematics: bool = True,
) -> ParticleTrace:
    """Run the chain for ``cfg.max_collisions`` steps or until trapped.

    The trace is computed by a compiled kernel on a dedicated counter-based
    stream seeded from ``rng``, so a given (seed, config) pair is bit-for-bit
    reproducible regardless of scheduling.
    """
    master = int(rng.integers(0, 2**63 - 1))
    stream = int(rng.integers(0, 2**63 - 1))
    n = int(cfg.max_collisions)
    times = np.zeros(n + 1)
    speeds = np.empty(n + 1)
    speeds[0] = float(np.linalg.norm(cfg.v0))
    if store_kinematics:
        pos = np.zeros((n + 1, cfg.spec.d))
        vel = np.empty((n + 1, cfg.spec.d))
        vel[0] = cfg.v0
    else:
        pos = vel = np.empty((1, cfg.spec.d))
    trapped_at = -1
    if n > 0:
        trapped_at = _chain_kernel(
            master, stream, cfg.v0, cfg.mean_free_path,
            cfg.spec.amplitude, cfg.spec.omega[0],
            cfg.tol * _BASE_TOL_FACTOR, cfg.lambda_law == "zero",
            n, times, speeds, pos, vel, store_kinematics,
            _DP_A, _DP_C, _DP_E,
        )
    end = (trapped_at if trapped_at >= 0 else n) + 1
    return ParticleTrace(
        times=times[:end],
        speeds=speeds[:end],
        positions=pos[:end] if store_kinematics else None,
        velocities=vel[:end] if store_kinematics else None,
        trapped_at=None if trapped_at < 0 else int(trapped_at),
    )


def speed_at_time(trace: ParticleTrace, t):
    """Speed of the linearly interpolated path at time ``t``.

    Piecewise constant: ||v_{n+1}|| on (t_n, t_{n+1}], ||v_0|| at t = 0.
    Accepts a scalar or an array of query times.
    """
    t_arr = np.asarray(t, dtype=float)
    t_end = float(trace.times[-1])
    if np.any(t_arr < 0.0) or np.any(t_arr > t_end):
        raise OutOfRange(f"query time outside [0, {t_end}]")
    idx = np.searchsorted(trace.times, t_arr, side="left")
    out = trace.speeds[idx]
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out
