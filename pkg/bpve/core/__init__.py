"""Exact generating-function machinery."""

from .series import (
    LinearFractionalParams,
    TruncatedSeries,
    compose,
    compose_coefficients,
    dilate,
    evaluate,
    factorial_moment,
    lf_apply,
    lf_compose,
    lf_eval,
    lf_gf,
    multiply,
    power,
    series_exp,
    series_log,
    shift_to_origin
)
from .environment import (
    EnvironmentSpec,
    ImmigrationAtom,
    ImmigrationFamily,
    OffspringFamily,
    ScalingTable,
    asymptotic_scaling,
    condition_diagnostics,
    cumulative_mean,
    immigration_gf,
    immigration_lambdas,
    offspring_gf,
    offspring_params,
    offspring_second_moment,
    scaling_A,
    scaling_constant,
    shape_function
)
from .exact import CompositionChain, ExactEngine, scaled_checkpoints, scaled_generation

__all__ = [
    'LinearFractionalParams',
    'TruncatedSeries',
    'compose',
    'compose_coefficients',
    'dilate',
    'evaluate',
    'factorial_moment',
    'lf_apply',
    'lf_compose',
    'lf_eval',
    'lf_gf',
    'multiply',
    'power',
    'series_exp',
    'series_log',
    'shift_to_origin',
    'EnvironmentSpec',
    'ImmigrationAtom',
    'ImmigrationFamily',
    'OffspringFamily',
    'ScalingTable',
    'asymptotic_scaling',
    'condition_diagnostics',
    'cumulative_mean',
    'immigration_gf',
    'immigration_lambdas',
    'offspring_gf',
    'offspring_params',
    'offspring_second_moment',
    'scaling_A',
    'scaling_constant',
    'shape_function',
    'CompositionChain',
    'ExactEngine',
    'scaled_checkpoints',
    'scaled_generation'
]
