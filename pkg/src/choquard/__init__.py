"""Spectral laboratory for standing waves of the generalized Choquard equation.

Computes ground states of

    -Delta phi + omega phi + V(x) phi = (|x|^-mu * |phi|^p) |phi|^(p-2) phi

on a truncated 3-D domain, evaluates the associated energy/action/virial
functionals, diagnoses the linearized spectrum about a ground state, and
evolves the time-dependent flow to run orbital stability and finite-time
collapse experiments.
"""

__version__ = "0.1.0"

from .grid import (
    ComplexField,
    GridError,
    SpectralGrid,
    integrate_weighted,
    make_grid,
    riesz_convolve,
    spectral_gradient_sqnorm,
)
from .potentials import (
    PotentialSpec,
    PotentialFields,
    build_potential,
    validate_conditions,
)
from .functionals import (
    FunctionalReport,
    SupportError,
    d2E_lambda,
    d2E_lambda_reduced,
    dilate,
    functional_report,
    hartree_term,
    nehari_scale,
    rescale_omega,
)
from .ground_state import (
    GroundStateResult,
    residual_norm,
    solve_ground_state,
    solve_psi1,
)
from .spectrum import (
    SpectrumReport,
    apply_linearized,
    constrained_coercivity,
    lowest_eigenpairs,
    rescaled_operator_identity_check,
    scaling_mode_check,
)
from .dynamics import EvolutionTrace, evolve, strang_step, virial_check
from .stability import (
    ExperimentVerdict,
    instability_experiment,
    orbital_distance,
    rescaled_limit_study,
    stability_experiment,
)

__all__ = [
    "ComplexField", "GridError", "SpectralGrid", "integrate_weighted",
    "make_grid", "riesz_convolve", "spectral_gradient_sqnorm",
    "PotentialSpec", "PotentialFields", "build_potential",
    "validate_conditions",
    "FunctionalReport", "SupportError", "d2E_lambda", "d2E_lambda_reduced",
    "dilate", "functional_report", "hartree_term", "nehari_scale",
    "rescale_omega",
    "GroundStateResult", "residual_norm", "solve_ground_state", "solve_psi1",
    "SpectrumReport", "apply_linearized", "constrained_coercivity",
    "lowest_eigenpairs", "rescaled_operator_identity_check",
    "scaling_mode_check",
    "EvolutionTrace", "evolve", "strang_step", "virial_check",
    "ExperimentVerdict", "instability_experiment", "orbital_distance",
    "rescaled_limit_study", "stability_experiment",
]
