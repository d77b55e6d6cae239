"""Monte Carlo samplers for the discrete processes and their limits."""

from .streams import SeededStream, batch_sizes, run_batches
from .discrete import (
    ConditionedSampler,
    OffspringSampler,
    PathBatch,
    PathSample,
    simulate_X,
    simulate_X_batch,
    simulate_X_conditioned,
    simulate_X_conditioned_batch,
    simulate_Y,
    simulate_Y_batch,
    validate_grid
)
from .limit import (
    LimitSpec,
    Trajectory,
    W_transition_gf,
    W_transition_pmf,
    bd_transition_gf,
    conditioned_kernel,
    draw_stationary,
    entrance_law,
    entrance_law_limit,
    generator_a,
    generator_b,
    kernel_small_time_limit,
    log_fY,
    quasi_stationary_pmf,
    reverse_marginals,
    reversed_kernel,
    sample_U_conditioned,
    sample_U_conditioned_batch,
    sample_W_batch,
    sample_Z_batch,
    simulate_W,
    simulate_Z,
    stationary_fY,
    survival_from_geom
)

__all__ = [
    'SeededStream',
    'batch_sizes',
    'run_batches',
    'ConditionedSampler',
    'OffspringSampler',
    'PathBatch',
    'PathSample',
    'simulate_X',
    'simulate_X_batch',
    'simulate_X_conditioned',
    'simulate_X_conditioned_batch',
    'simulate_Y',
    'simulate_Y_batch',
    'validate_grid',
    'LimitSpec',
    'Trajectory',
    'W_transition_gf',
    'W_transition_pmf',
    'bd_transition_gf',
    'conditioned_kernel',
    'draw_stationary',
    'entrance_law',
    'entrance_law_limit',
    'generator_a',
    'generator_b',
    'kernel_small_time_limit',
    'log_fY',
    'quasi_stationary_pmf',
    'reverse_marginals',
    'reversed_kernel',
    'sample_U_conditioned',
    'sample_U_conditioned_batch',
    'sample_W_batch',
    'sample_Z_batch',
    'simulate_W',
    'simulate_Z',
    'stationary_fY',
    'survival_from_geom'
]
