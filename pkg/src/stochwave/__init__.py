"""Pseudospectral simulation and verification engine for stochastic
semilinear wave models: exact free propagators on periodic grids, five
concrete model instantiations, Q-Wiener noise with deterministic seeding,
Picard and Ito mild solvers, truncated Fock-space Wick calculus, and a
Monte Carlo harness for convergence and consistency studies.
"""

from .chaos import (ChaosSpace, ChaosState, ChaosVector, FockOperator,
                    GrowthFit, TestVector, annihilate, create, duality,
                    exp_vector, growth_bound_fit, norm_beta, operator_symbol,
                    s_transform, second_quantization, solve_wick_evolution,
                    wick_nonlinearity, wick_power, wick_product)
from .config import ConfigError, ExperimentConfig
from .ensemble import (ChaosMcReport, EnsembleConfig, EnsembleResult,
                       OrderFit, TailCurve, chaos_vs_mc, run_ensemble,
                       strong_order, tail_curve, weak_order)
from .grids import Field, Grid, State, make_grid
from .models import (EstimateReport, Model, ModelParams, apply_J, build_model,
                     conserved, verify_estimates)
from .noise import (BrownianPath, CovarianceSpec, QWienerSampler,
                    default_covariance, discrete_pairing, empirical_covariance,
                    multiple_wiener, orthogonality_check)
from .operators import SpectralOperator, apply, graph_norm, make_operator, propagate
from .solver import (BlowUpError, PicardResult, ThetaPotential, Trajectory,
                     holomorphy_check, picard_solve, solve_deterministic,
                     solve_ito, step_exp_euler, step_strang)

__version__ = "0.1.0"
