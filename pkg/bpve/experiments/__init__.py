from .runner import (
    EXPERIMENTS,
    ExperimentRunner,
    run_diagnostics,
    run_entrance_law,
    run_reverse,
    run_theorem1_fdd,
    run_theorem2,
    run_yaglom,
)
from .utils import apply_overrides, create_error_response, load_scenario, named_scenarios, write_reports

__all__ = [
    'EXPERIMENTS',
    'ExperimentRunner',
    'apply_overrides',
    'create_error_response',
    'load_scenario',
    'named_scenarios',
    'run_diagnostics',
    'run_entrance_law',
    'run_reverse',
    'run_theorem1_fdd',
    'run_theorem2',
    'run_yaglom',
    'write_reports',
]
