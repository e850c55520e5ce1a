"""Elephant random walks, the randomized play-the-winner urn and their
stochastic-approximation form, with limit constants and Monte Carlo checks."""
from .gaussian import GaussianGrid, integrate_path, sample_brownian, sample_G_diffusive, sample_G_hat, sample_G_super, sample_I
from .model import ConfigError, MemorySchedule, StepSizeModel, WalkConfig, critical_p, regime_classify, rho_from_p
from .sa import SaSpec, SaTrajectory, erw_sa_spec, run_sa, rpw_sa_spec
from .walkers import RpwConfig, WalkBatch, WalkPath, rpw_as_biased_erw, simulate_batch, simulate_rpw, simulate_rpw_batch, simulate_walk

__all__ = [
    "ConfigError",
    "GaussianGrid",
    "MemorySchedule",
    "RpwConfig",
    "SaSpec",
    "SaTrajectory",
    "StepSizeModel",
    "WalkBatch",
    "WalkConfig",
    "WalkPath",
    "critical_p",
    "erw_sa_spec",
    "integrate_path",
    "regime_classify",
    "rho_from_p",
    "rpw_as_biased_erw",
    "rpw_sa_spec",
    "run_sa",
    "sample_G_diffusive",
    "sample_G_hat",
    "sample_G_super",
    "sample_I",
    "sample_brownian",
    "simulate_batch",
    "simulate_rpw",
    "simulate_rpw_batch",
    "simulate_walk",
]
