"""Resonant averaging toolkit for stochastically perturbed oscillators.

Given a frequency vector, a polynomial perturbation and a dispersion
matrix, the package constructs the effective (averaged) equation,
simulates the original / interaction / effective / action dynamics, and
quantifies the weak convergence between the resulting laws with
empirical distribution distances.
"""

from .complexcore import (
    FrequencySpectrum,
    SampledPath,
    actions,
    angles,
    holder_norm,
    rotate,
)
from .fields import (
    Monomial,
    OpaqueField,
    PolynomialVectorField,
    average_function,
    average_numeric,
    partial_average,
    pushforward,
    radial_decomposition,
    resonant_average_symbolic,
    torus_average,
)
from .noisemodel import (
    DispersionSpec,
    EffectiveModel,
    StateDependentDispersion,
    build_effective_model,
    effective_diffusion,
    hermitian_sqrt,
    noise_increment_covariance,
    sample_complex_gaussian,
)
from .simulate import (
    SdeEnsemble,
    SimulationConfig,
    SystemSpec,
    simulate_action_sde,
    simulate_effective,
    simulate_general,
    simulate_interaction,
    simulate_original,
)

__version__ = "0.1.0"
