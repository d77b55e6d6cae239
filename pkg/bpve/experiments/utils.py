"""Scenario loading, check construction and report writing."""
import csv
import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from ..errors import ConfigurationError
from ..schemas import CheckRecord, ErrorResponse, PmfRow, PmfTable, ScenarioConfig, VerificationReport
from ..stats import total_variation, tv_confidence_radius

logger = logging.getLogger(__name__)

SCENARIO_PACKAGE = 'bpve.scenarios'


def named_scenarios() -> List[str]:
    """Scenario names shipped with the package."""
    files = resources.files(SCENARIO_PACKAGE).iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith('.toml'))


def load_scenario(source: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a TOML path or one of the named scenarios.

    Raises:
        ConfigurationError: If the file is missing, unparsable or invalid
    """
    path = Path(source)
    try:
        if path.is_file():
            text = path.read_text()
        elif str(source) in named_scenarios():
            text = resources.files(SCENARIO_PACKAGE).joinpath(f"{source}.toml").read_text()
        else:
            raise ConfigurationError(f"no scenario file or named scenario '{source}'")
        return ScenarioConfig(**tomllib.loads(text))
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"cannot parse scenario '{source}': {e}") from e
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario '{source}': {e}") from e


def apply_overrides(config: ScenarioConfig, seed: Optional[int] = None, replicates: Optional[int] = None,
                    workers: Optional[int] = None) -> ScenarioConfig:
    """Copy of ``config`` with command-line values replacing the ``[mc]`` ones."""
    updates: Dict[str, Any] = {}
    if seed is not None:
        updates['seed'] = seed
    if replicates is not None:
        updates['replicates'] = replicates
    if workers is not None:
        updates['workers'] = workers
    if not updates:
        return config
    data = config.model_dump()
    data['mc'].update(updates)
    try:
        return ScenarioConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid override: {e}") from e


def create_error_response(error_type: str, message: str,
                          details: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Create the standardized error payload.

    Args:
        error_type: Type of error
        message: Error message
        details: Additional error details

    Returns:
        Error response dictionary
    """
    return ErrorResponse(
        error_type=error_type,
        message=message,
        details=details or {},
        timestamp=datetime.now(timezone.utc)
    ).model_dump(mode='json')


def scalar_check(name: str, value: float, reference: float, tolerance: float,
                 relative: bool = False, **details) -> CheckRecord:
    """Check ``|value - reference|`` (optionally relative) against ``tolerance``."""
    gap = abs(value - reference)
    if relative and reference != 0.0:
        gap /= abs(reference)
    return CheckRecord(name=name, kind='scalar', value=float(value), reference=float(reference),
                       tolerance=tolerance, passed=bool(gap <= tolerance),
                       details={'gap': float(gap), 'relative': relative, **details})


def exact_check(name: str, residual: float, tolerance: float, tail_mass: Optional[float] = None,
                **details) -> CheckRecord:
    """Check a residual of an identity with no sampling error."""
    return CheckRecord(name=name, kind='exact', value=float(residual), tolerance=tolerance,
                       passed=bool(residual <= tolerance), tail_mass=tail_mass, details=details)


def tv_check(name: str, p: np.ndarray, q: np.ndarray, tolerance: float, samples: Optional[int] = None,
             tail_mass: Optional[float] = None, support: Optional[int] = None, **details) -> CheckRecord:
    """TV distance between two pmf arrays; with ``samples`` the confidence radius is attached.

    The radius counts ``support`` states, by default the length of one axis
    of ``p`` (cap + 2 for the tables built here).

    Raises:
        ConfigurationError: If the tolerance is below the confidence radius
    """
    support = int(np.shape(p)[0]) if support is None else support
    a = np.asarray(p, dtype=float).ravel()
    b = np.asarray(q, dtype=float).ravel()
    value = total_variation(a, b)
    radius = None
    if samples is not None:
        radius = tv_confidence_radius(samples, support)
        if tolerance < radius:
            raise ConfigurationError(
                f"check {name}: tolerance {tolerance} is below the confidence radius {radius:.4f}"
                f" at {samples} samples"
            )
    return CheckRecord(name=name, kind='tv', value=value, tolerance=tolerance, passed=bool(value <= tolerance),
                       confidence_radius=radius, samples=samples, tail_mass=tail_mass, details=details)


def pmf_table(check: str, cap: int, exact: Optional[np.ndarray] = None, limit: Optional[np.ndarray] = None,
              mc: Optional[np.ndarray] = None, radius: Optional[float] = None) -> PmfTable:
    """Rows for states 0..cap of the available columns."""
    def cell(vec: Optional[np.ndarray], k: int) -> Optional[float]:
        if vec is None or k >= len(vec):
            return None if vec is None else 0.0
        return float(vec[k])

    rows = [
        PmfRow(state=k, exact=cell(exact, k), limit=cell(limit, k), mc=cell(mc, k),
               mc_ci_radius=radius if mc is not None else None)
        for k in range(cap + 1)
    ]
    return PmfTable(check=check, rows=rows)


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return format(value, '.17g')


def write_pmf_csv(table: PmfTable, out_dir: Path) -> Path:
    """Write ``pmf_<check>.csv`` with columns state,exact,limit,mc,mc_ci_radius."""
    path = out_dir / f"pmf_{table.check}.csv"
    with path.open('w', newline='') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(['state', 'exact', 'limit', 'mc', 'mc_ci_radius'])
        for row in table.rows:
            writer.writerow([row.state, _fmt(row.exact), _fmt(row.limit), _fmt(row.mc), _fmt(row.mc_ci_radius)])
    return path


def write_reports(reports: Sequence[VerificationReport], out_dir: Union[str, Path],
                  fmt: str = 'csv') -> List[Path]:
    """Write ``report.json`` and, for ``fmt='csv'``, one CSV per table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    payload = [report.model_dump(mode='json', exclude={'tables'} if fmt == 'csv' else None)
               for report in reports]
    report_path = out_dir / 'report.json'
    report_path.write_text(json.dumps(payload if len(payload) > 1 else payload[0], indent=2))
    written.append(report_path)
    if fmt == 'csv':
        for report in reports:
            for table in report.tables:
                written.append(write_pmf_csv(table, out_dir))
    logger.info(f"Wrote {len(written)} files to {out_dir}")
    return written
