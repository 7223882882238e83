"""Stochastic-acceleration simulation library.

A particle bouncing through randomly placed, time-oscillating soft
scatterers gains energy like a power law.  This package simulates the full
collision chain, the reduced scalar chain for the cubed speed, the limiting
Bessel diffusion, and the dyadic level walk used to analyse it, and ships
the estimators and acceptance checks that verify each growth law.
"""

__version__ = "0.1.0"

from .potential import PotentialSpec, radial_bump
from .scattering import CollisionInput, CollisionOutcome, alpha1, energy_transfer, integrate_collision, trapping_threshold
from .particle_chain import ChainConfig, ParticleTrace, run_trajectory, speed_at_time
from .xi_chain import (
    BelowBehavior,
    NoiseLaw,
    XiChainSpec,
    XiPath,
    gamma_from_dim,
    run_xi,
    speed_from_xi,
    step_xi,
    xi_from_speed,
)
from .bessel_ref import BesselParams, exit_prob_exact, mu, p_plus, simulate_bessel, wilson_interval
from .aux_process import AuxParams, AuxTrace, aux_params_for, build_aux_trace, dwell_stats, jump_prob_estimate, sample_aux_traces
from .estimators import (
    ExponentFit,
    MomentFit,
    d_squared_quadrature,
    envelope_check,
    estimate_transfer_moments,
    exit_prob_mc,
    fit_growth_exponent,
    reduced_speed_series,
)
from .harness import ResultBundle, RunConfig, emit_report, parse_config, run
from .acceptance import CriterionResult, run_criteria
from .rng import as_seed, spawn_generator
from . import errors

__all__ = [
    "__version__",
    "PotentialSpec",
    "radial_bump",
    "CollisionInput",
    "CollisionOutcome",
    "alpha1",
    "energy_transfer",
    "integrate_collision",
    "trapping_threshold",
    "ChainConfig",
    "ParticleTrace",
    "run_trajectory",
    "speed_at_time",
    "BelowBehavior",
    "NoiseLaw",
    "XiChainSpec",
    "XiPath",
    "gamma_from_dim",
    "run_xi",
    "speed_from_xi",
    "step_xi",
    "xi_from_speed",
    "BesselParams",
    "exit_prob_exact",
    "mu",
    "p_plus",
    "simulate_bessel",
    "wilson_interval",
    "AuxParams",
    "AuxTrace",
    "aux_params_for",
    "build_aux_trace",
    "dwell_stats",
    "jump_prob_estimate",
    "sample_aux_traces",
    "ExponentFit",
    "MomentFit",
    "d_squared_quadrature",
    "envelope_check",
    "estimate_transfer_moments",
    "exit_prob_mc",
    "fit_growth_exponent",
    "reduced_speed_series",
    "ResultBundle",
    "RunConfig",
    "emit_report",
    "parse_config",
    "run",
    "CriterionResult",
    "run_criteria",
    "as_seed",
    "spawn_generator",
    "errors",
]
