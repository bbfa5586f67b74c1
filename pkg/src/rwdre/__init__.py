"""Random walks in dynamic random environments: simulation, coupling and exact checks."""

from .config import ExperimentConfig, load as load_config, validate as validate_config
from .coupling import (CoupledPath, DecouplingReport, Walker, WalkResult, decoupling_lower_bound,
                       estimate_decoupling, sandwich_ok, simulate_coupled_walk, simulate_walk)
from .ctmc import Bounded, FiniteChain, PathSet, distribution, enumerate_paths, semigroup, sequence_probability
from .env_process import (ContinuityCheck, ErgodicAverage, SemigroupDifference, continuity_bound_check,
                          estimate_mu_ep, phi_weighted_integral, semigroup_difference_integral)
from .environments import (DecayCurve, EnvironmentModel, EnvTrajectory, deterministic_relaxation,
                           independent_refresh, measure_coupling_decay, simulate_env, simulate_env_coupled,
                           weak_glauber)
from .errors import ConfigError, EvaluationError, ModelError, RefusedError
from .lattice import (BINARY, UNIT, Affine, Configuration, Constant, Generic, LocalFunction, Product, Projection,
                      RateFamily, SiteSpace, TorusGeometry, osc_norm, rate_difference_norm, rate_norms,
                      triple_norm)
from .limits import (CltReport, ConcentrationReport, EinsteinReport, RegimeReport, SpeedReport, clt_report,
                     concentration_tail_check, corrector_variance, einstein_relation_check, estimate_speed,
                     stationary_expectation, transience_recurrence_diagnostic, walker_constants)
from .martingale import (ChainProvider, ExponentialMartingale, MonteCarloProvider, additive_functional_bound,
                         expected_qv, moment_bound, predictable_qv, tail_bound, upper_lower_generator)
from .rng import RandomStream, run_replicas
from .stats import Estimate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "additive_functional_bound",
    "Affine",
    "BINARY",
    "Bounded",
    "ChainProvider",
    "clt_report",
    "CltReport",
    "concentration_tail_check",
    "ConcentrationReport",
    "ConfigError",
    "Configuration",
    "Constant",
    "continuity_bound_check",
    "ContinuityCheck",
    "corrector_variance",
    "CoupledPath",
    "DecayCurve",
    "decoupling_lower_bound",
    "DecouplingReport",
    "deterministic_relaxation",
    "distribution",
    "einstein_relation_check",
    "EinsteinReport",
    "enumerate_paths",
    "EnvironmentModel",
    "EnvTrajectory",
    "ErgodicAverage",
    "Estimate",
    "estimate_decoupling",
    "estimate_mu_ep",
    "estimate_speed",
    "EvaluationError",
    "expected_qv",
    "ExperimentConfig",
    "ExponentialMartingale",
    "FiniteChain",
    "Generic",
    "independent_refresh",
    "load_config",
    "LocalFunction",
    "measure_coupling_decay",
    "ModelError",
    "moment_bound",
    "MonteCarloProvider",
    "osc_norm",
    "PathSet",
    "phi_weighted_integral",
    "predictable_qv",
    "Product",
    "Projection",
    "RandomStream",
    "rate_difference_norm",
    "rate_norms",
    "RateFamily",
    "RefusedError",
    "RegimeReport",
    "run_replicas",
    "sandwich_ok",
    "semigroup",
    "semigroup_difference_integral",
    "SemigroupDifference",
    "sequence_probability",
    "simulate_coupled_walk",
    "simulate_env",
    "simulate_env_coupled",
    "simulate_walk",
    "SiteSpace",
    "SpeedReport",
    "stationary_expectation",
    "tail_bound",
    "TorusGeometry",
    "transience_recurrence_diagnostic",
    "triple_norm",
    "UNIT",
    "upper_lower_generator",
    "validate_config",
    "Walker",
    "walker_constants",
    "WalkResult",
    "weak_glauber",
]
