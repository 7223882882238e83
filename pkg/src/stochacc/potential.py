"""Compactly supported, time-oscillating potential family.

The potential is separable: ``V(q, phi) = A * bump(||q||) * (1 + cos(phi_1))``
with the smooth radial cutoff ``bump(r) = exp(1 - 1/(1 - 4 r^2))`` for
``r < 1/2`` and exactly zero outside.  The bump is C-infinity with all
derivatives vanishing at the boundary, so trajectories see no kinks when they
cross the support sphere.

All three evaluation operations accept a single point ``q`` of shape ``(d,)``
or a batch of shape ``(n, d)``; the phase may be shared (shape ``(m,)``) or
per-point (shape ``(n, m)``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import InvalidInput

SUPPORT_RADIUS = 0.5


class Shape(enum.Enum):
    """Radial cutoff selector (a single smooth bump is currently offered)."""

    SMOOTH_BUMP = "SmoothBump"


def radial_bump(r):
    """The cutoff profile: exp(1 - 1/(1 - 4 r^2)) inside radius 1/2, else 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < SUPPORT_RADIUS
    u = 1.0 - 4.0 * np.square(r, where=inside, out=np.ones_like(r))
    with np.errstate(under="ignore"):
        np.exp(1.0 - 1.0 / u, where=inside, out=out)
    out[~inside] = 0.0
    return out if out.ndim else float(out)


def bump_gradient_factor(r_squared):
    """Factor g with grad bump(||q||) = g(||q||^2) * q; finite at q = 0.

    g(r^2) = -8 exp(1 - 1/u) / u^2 with u = 1 - 4 r^2.  Keep in sync with the
    compiled copy in ``scattering.py``.
    """
    r_squared = np.asarray(r_squared, dtype=float)
    out = np.zeros_like(r_squared)
    inside = r_squared < SUPPORT_RADIUS**2
    u = np.subtract(1.0, 4.0 * r_squared, where=inside, out=np.ones_like(r_squared))
    with np.errstate(under="ignore"):
        out = np.where(inside, -8.0 * np.exp(1.0 - 1.0 / u) / (u * u), 0.0)
    return out if out.ndim else float(out)


@lru_cache(maxsize=1)
def bump_slope_max() -> float:
    """max over r of |d bump / dr|, computed once on a dense grid + refinement."""
    from scipy.optimize import minimize_scalar

    r = np.linspace(0.0, SUPPORT_RADIUS, 200_001)
    slope = np.abs(bump_gradient_factor(r * r) * r)
    i = int(np.argmax(slope))
    lo, hi = r[max(i - 2, 0)], r[min(i + 2, r.size - 1)]
    res = minimize_scalar(
        lambda x: -abs(float(bump_gradient_factor(x * x)) * x),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-14},
    )
    return max(float(-res.fun), float(slope[i]))


@dataclass(frozen=True)
class PotentialSpec:
    """Immutable parameters of one potential, with cached magnitude bounds.

    ``omega = (0, ...)`` is allowed and yields a static (elastic) potential.
    """

    d: int = 8
    m: int = 1
    amplitude: float = 0.25
    omega: tuple = (4.0,)
    shape: Shape = Shape.SMOOTH_BUMP

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise InvalidInput(f"spatial dimension must be an integer >= 2, got {self.d}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidInput(f"torus dimension must be an integer >= 1, got {self.m}")
        if not (self.amplitude > 0):
            raise InvalidInput(f"amplitude must be > 0, got {self.amplitude}")
        omega = tuple(float(w) for w in np.atleast_1d(np.asarray(self.omega, dtype=float)))
        if len(omega) != self.m:
            raise InvalidInput(f"omega has {len(omega)} components, expected m = {self.m}")
        if not all(math.isfinite(w) for w in omega):
            raise InvalidInput("omega components must be finite")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "omega", omega)
        if not isinstance(self.shape, Shape):
            object.__setattr__(self, "shape", Shape(self.shape))

    @cached_property
    def v_max(self) -> float:
        """Sup of |V|: bump <= 1 and |1 + cos| <= 2."""
        return 2.0 * self.amplitude

    @cached_property
    def grad_norm_max(self) -> float:
        """Sup of ||grad_q V||, from the cached bump slope maximum."""
        return 2.0 * self.amplitude * bump_slope_max()

    def to_config(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "amplitude": self.amplitude,
            "omega": list(self.omega),
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "PotentialSpec":
        known = {"d", "m", "amplitude", "omega", "shape"}
        extra = set(cfg) - known
        if extra:
            raise InvalidInput(f"unknown potential fields: {sorted(extra)}")
        kwargs = {k: cfg[k] for k in known if k in cfg}
        if "omega" in kwargs:
            kwargs["omega"] = tuple(np.atleast_1d(np.asarray(kwargs["omega"], dtype=float)))
        return cls(**kwargs)


def _split_point_phase(spec: PotentialSpec, q, phi):
    """Normalise (q, phi) to batch form; returns (q2, phi1, scalar_input)."""
    q = np.asarray(q, dtype=float)
    scalar = q.ndim == 1
    q2 = q[None, :] if scalar else q
    if q2.ndim != 2 or q2.shape[1] != spec.d:
        raise InvalidInput(f"q must have {spec.d} components, got shape {q.shape}")
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0:
        if spec.m != 1:
            raise InvalidInput("scalar phase only valid when m = 1")
        phi1 = phi[None]
    elif phi.ndim == 1:
        if phi.shape[0] != spec.m:
            raise InvalidInput(f"phase must have {spec.m} components, got {phi.shape[0]}")
        phi1 = phi[0:1]
    else:
        if phi.shape[1] != spec.m:
            raise InvalidInput(f"phase must have {spec.m} components, got {phi.shape[1]}")
        phi1 = phi[:, 0]
    return q2, phi1, scalar


def eval_potential(spec: PotentialSpec, q, phi):
    """Potential value A * bump(||q||) * (1 + cos(phi_1)); zero off support."""
    q2, phi1, scalar = _split_point_phase(spec, q, phi)
    val = spec.amplitude * radial_bump(np.linalg.norm(q2, axis=1)) * (1.0 + np.cos(phi1))
    return float(val[0]) if scalar else val


def grad_q_potential(spec: PotentialSpec, q, phi):
    """Spatial gradient of the potential; the force is its negation."""
    q2, phi1, scalar = _split_point_phase(spec, q, phi)
    r_squared = np.einsum("ij,ij->i", q2, q2)
    coeff = spec.amplitude * (1.0 + np.cos(phi1)) * bump_gradient_factor(r_squared)
    grad = coeff[:, None] * q2
    return grad[0] if scalar else grad


def dt_potential(spec: PotentialSpec, q, phi):
    """Time derivative along the phase flow: (omega . d/dphi) V."""
    q2, phi1, scalar = _split_point_phase(spec, q, phi)
    val = -spec.amplitude * radial_bump(np.linalg.norm(q2, axis=1)) * spec.omega[0] * np.sin(phi1)
    return float(val[0]) if scalar else val
