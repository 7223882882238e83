"""Scalar surrogate chain for the speed process.

The cubed-speed variable xi = ||v||^3 / (3D) turns the collision chain into a
one-dimensional random walk with a 1/xi drift: xi' = xi + omega + gamma/xi,
up to perturbations that decay in xi.  This module implements that chain in
the abstract: bounded unit-variance noise, the drift coefficient gamma, the
optional decaying perturbations, explicit handling below the lower threshold,
and the diffusive rescaling t = k eps^2, R = eps xi used to compare against a
Bessel process.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from ._prng import next_sign, next_unit, stream_state
from .errors import BelowDomain, InvalidInput, NonPositive, OutOfRange
from .rng import as_seed, spawn_generator

__all__ = [
    "NoiseLaw",
    "BelowBehavior",
    "Perturbation",
    "XiChainSpec",
    "XiPath",
    "RescaledPath",
    "gamma_from_dim",
    "xi_from_speed",
    "speed_from_xi",
    "sample_noise",
    "step_xi",
    "run_xi",
    "rescaled_process",
    "canned_g0",
    "canned_g1",
]

_SQRT3 = math.sqrt(3.0)


class NoiseLaw(enum.Enum):
    """Bounded unit-variance mean-zero step noises."""

    RADEMACHER = "Rademacher"
    UNIFORM_SYM = "UniformSym"

    @property
    def bound(self) -> float:
        """The hard bound M with |omega| <= M and M >= 1."""
        return 1.0 if self is NoiseLaw.RADEMACHER else _SQRT3


class BelowBehavior(enum.Enum):
    """What the chain does at or below the lower threshold.

    The regime below xi_minus is deliberately unconstrained by the model, so
    the choice is explicit config: Forbid raises, Reflect folds the value
    back above the threshold.
    """

    FORBID = "Forbid"
    REFLECT = "Reflect"


@dataclass(frozen=True)
class Perturbation:
    """A decaying correction term fn(xi, omega) with declared decay exponent.

    The exponent is metadata used for validation and reporting; the callback
    itself is trusted to decay accordingly.  sup_bound, when declared, maps
    (xi_floor, noise_bound) to a sup of |fn| over xi >= xi_floor and
    |omega| <= noise_bound; level-crossing analysis requires it.
    """

    fn: Callable[[float, float], float]
    decay: float
    sup_bound: Optional[Callable[[float, float], float]] = None


def canned_g0(c0: float = 1.0) -> Perturbation:
    """Mean-zero leading correction c0 * omega * xi^(-1/3)."""
    return Perturbation(
        fn=lambda xi, omega: c0 * omega * xi ** (-1.0 / 3.0),
        decay=1.0 / 3.0,
        sup_bound=lambda xi_floor, m: abs(c0) * m * xi_floor ** (-1.0 / 3.0),
    )


def canned_g1(c1: float = 1.0) -> Perturbation:
    """Deterministic remainder c1 * xi^(-4/3)."""
    return Perturbation(
        fn=lambda xi, omega: c1 * xi ** (-4.0 / 3.0),
        decay=4.0 / 3.0,
        sup_bound=lambda xi_floor, m: abs(c1) * xi_floor ** (-4.0 / 3.0),
    )


@dataclass(frozen=True)
class XiChainSpec:
    """Parameters of the abstract scalar chain."""

    gamma: float = 1.0
    noise: NoiseLaw = NoiseLaw.RADEMACHER
    g0: Optional[Perturbation] = None
    g1: Optional[Perturbation] = None
    xi_minus: float = 0.5
    xi_plus: float = 1.0
    below_behavior: BelowBehavior = BelowBehavior.FORBID

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "xi_minus", float(self.xi_minus))
        object.__setattr__(self, "xi_plus", float(self.xi_plus))
        if not math.isfinite(self.gamma):
            raise InvalidInput("gamma must be finite")
        if not isinstance(self.noise, NoiseLaw):
            raise InvalidInput("noise must be a NoiseLaw")
        if not isinstance(self.below_behavior, BelowBehavior):
            raise InvalidInput("below_behavior must be a BelowBehavior")
        if not 0.0 < self.xi_minus < self.xi_plus:
            raise InvalidInput(
                f"thresholds must satisfy 0 < xi_minus < xi_plus, got "
                f"({self.xi_minus}, {self.xi_plus})"
            )
        if self.xi_plus < abs(self.gamma) / self.noise.bound:
            raise InvalidInput(
                f"xi_plus must be at least |gamma|/M = {abs(self.gamma) / self.noise.bound}"
            )
        if self.g0 is not None and not self.g0.decay > 0.0:
            raise InvalidInput("g0 decay exponent must be > 0")
        if self.g1 is not None and not self.g1.decay > 1.0:
            raise InvalidInput("g1 decay exponent must be > 1")

    @property
    def noise_bound(self) -> float:
        return self.noise.bound

    @property
    def is_pure(self) -> bool:
        return self.g0 is None and self.g1 is None


@dataclass(frozen=True)
class XiPath:
    """A realized chain path with the parameters and seed that produced it."""

    values: np.ndarray
    spec: XiChainSpec
    seed: int

    def __len__(self) -> int:
        return int(self.values.size)


def gamma_from_dim(d: int) -> float:
    """Drift coefficient of the cubed-speed chain in ambient dimension d."""
    if not (isinstance(d, (int, np.integer)) and d >= 2):
        raise InvalidInput(f"dimension must be an integer >= 2, got {d}")
    return (d - 2) / 6.0


def xi_from_speed(speed: float, D: float) -> float:
    """Map a speed to the chain variable speed^3 / (3 D)."""
    if not speed > 0.0:
        raise NonPositive(f"speed must be > 0, got {speed}")
    if not D > 0.0:
        raise NonPositive(f"D must be > 0, got {D}")
    return speed**3 / (3.0 * D)


def speed_from_xi(xi: float, D: float) -> float:
    """Inverse of xi_from_speed."""
    if not xi > 0.0:
        raise NonPositive(f"xi must be > 0, got {xi}")
    if not D > 0.0:
        raise NonPositive(f"D must be > 0, got {D}")
    return (3.0 * D * xi) ** (1.0 / 3.0)


def sample_noise(noise: NoiseLaw, gen: np.random.Generator, size=None):
    """Draw from the given noise law using a NumPy generator."""
    if noise is NoiseLaw.RADEMACHER:
        draw = gen.integers(0, 2, size=size) * 2 - 1
        return float(draw) if size is None else draw.astype(float)
    return gen.uniform(-_SQRT3, _SQRT3, size=size)


def step_xi(spec: XiChainSpec, xi: float, omega_draw: float) -> float:
    """One transition of the chain from state ``xi`` with noise ``omega_draw``."""
    xi = float(xi)
    if spec.below_behavior is BelowBehavior.FORBID and xi <= spec.xi_minus:
        raise BelowDomain(-1, xi)
    if not xi > 0.0:
        raise NonPositive(f"chain state must be > 0, got {xi}")
    result = xi + float(omega_draw) + spec.gamma / xi
    if spec.g0 is not None:
        result += spec.g0.fn(xi, omega_draw)
    if spec.g1 is not None:
        result += spec.g1.fn(xi, omega_draw)
    if spec.below_behavior is BelowBehavior.REFLECT and result < spec.xi_minus:
        result = abs(result) + spec.xi_minus
    return result


@njit(cache=True, nogil=True)
def _xi_kernel(master, stream, xi0, gamma, rademacher, xi_minus, forbid, n, out):
    """Pure-chain path; returns the index that hit the Forbid region, or -1."""
    s = stream_state(master, stream)
    xi = xi0
    out[0] = xi
    for k in range(n):
        if forbid and xi <= xi_minus:
            return k
        if rademacher:
            om = next_sign(s)
        else:
            om = (2.0 * next_unit(s) - 1.0) * 1.7320508075688772
        xi = xi + om + gamma / xi
        if not forbid and xi < xi_minus:
            xi = abs(xi) + xi_minus
        out[k + 1] = xi
    return -1


def run_xi(spec: XiChainSpec, xi0: float, n_steps: int, rng) -> XiPath:
    """Run the chain for ``n_steps`` transitions; deterministic per seed.

    ``rng`` may be an integer seed or a Generator (one draw is consumed to
    derive the seed, which is recorded on the returned path).
    """
    if not xi0 > 0.0:
        raise NonPositive(f"xi0 must be > 0, got {xi0}")
    n = int(n_steps)
    if n < 0:
        raise InvalidInput("n_steps must be >= 0")
    seed = as_seed(rng)
    values = np.empty(n + 1)
    if spec.is_pure:
        below = _xi_kernel(
            seed, 0, float(xi0), spec.gamma,
            spec.noise is NoiseLaw.RADEMACHER, spec.xi_minus,
            spec.below_behavior is BelowBehavior.FORBID, n, values,
        )
        if below >= 0:
            raise BelowDomain(below, float(values[below]))
    else:
        gen = spawn_generator(seed, 0)
        values[0] = xi0
        for k in range(n):
            try:
                values[k + 1] = step_xi(spec, values[k], sample_noise(spec.noise, gen))
            except BelowDomain as err:
                raise BelowDomain(k, float(values[k])) from err
    return XiPath(values=values, spec=spec, seed=seed)


@dataclass(frozen=True)
class RescaledPath:
    """Piecewise-linear diffusive rescaling of a chain path.

    Grid point n sits at time n * eps^2 with value eps * xi_n.
    """

    times: np.ndarray
    values: np.ndarray
    epsilon: float

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __call__(self, t: float) -> float:
        t = float(t)
        if not 0.0 <= t <= self.horizon:
            raise OutOfRange(f"t = {t} outside [0, {self.horizon}]")
        if t == self.horizon:
            return float(self.values[-1])
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[idx]) / (self.times[idx + 1] - self.times[idx])
        return float(self.values[idx] + w * (self.values[idx + 1] - self.values[idx]))


def rescaled_process(path: XiPath, epsilon: float) -> RescaledPath:
    """Diffusively rescale a path: time step eps^2, amplitude eps.

    The model's convention is eps = 1/xi_0 (then the process starts at 1);
    the factor is exposed rather than hard-coded.
    """
    if not epsilon > 0.0:
        raise NonPositive(f"epsilon must be > 0, got {epsilon}")
    n = path.values.size
    times = (epsilon * epsilon) * np.arange(n, dtype=float)
    return RescaledPath(times=times, values=epsilon * path.values, epsilon=epsilon)
