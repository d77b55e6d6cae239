"""Command-line entry point: ``bpve <experiment> --config ...``."""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from . import __version__, configure_logging
from .config import get_config
from .errors import ConfigurationError, GridError, HorizonExhaustedError
from .experiments import EXPERIMENTS, ExperimentRunner, apply_overrides, load_scenario, write_reports
from .experiments.utils import create_error_response

logger = logging.getLogger(__name__)

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_CONFIGURATION = 2


def create_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per experiment plus ``all``."""
    parser = argparse.ArgumentParser(
        prog='bpve',
        description='Verification experiments for branching processes in nearly degenerate varying environment.',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='experiment', required=True)
    for name in (*EXPERIMENTS, 'all'):
        sub = commands.add_parser(name, help=f"run the {name} experiment" if name != 'all' else 'run every experiment')
        sub.add_argument('--config', required=True, help='scenario TOML path or named scenario')
        sub.add_argument('--seed', type=int, default=None, help='override [mc] seed')
        sub.add_argument('--replicates', type=int, default=None, help='override [mc] replicates')
        sub.add_argument('--workers', type=int, default=None, help='override [mc] workers')
        sub.add_argument('--out', default=None, help='output directory')
        sub.add_argument('--format', choices=('csv', 'json'), default='csv', dest='fmt')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run the requested experiment; returns 0 if every check passed, 1 if any failed, 2 on bad input."""
    args = create_parser().parse_args(argv)
    try:
        settings = get_config()
        configure_logging(settings)
        config = apply_overrides(load_scenario(args.config), args.seed, args.replicates, args.workers)
        reports = ExperimentRunner(config).run(args.experiment)
        out = args.out or f"{settings.OUTPUT_ROOT}/{config.name}/{args.experiment}"
        write_reports(reports, out, args.fmt)
    except (ConfigurationError, GridError, HorizonExhaustedError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        print(json.dumps(create_error_response(type(e).__name__, str(e), {'config': args.config}), indent=2))
        return EXIT_CONFIGURATION

    failures = [f"{r.experiment}/{c.name}" for r in reports for c in r.failures()]
    for report in reports:
        logger.info(f"{report.experiment}: {len(report.checks) - len(report.failures())}/{len(report.checks)} passed")
    if failures:
        logger.warning(f"Failed checks: {', '.join(failures)}")
        return EXIT_FAILED
    return EXIT_PASSED


if __name__ == '__main__':
    sys.exit(main())
