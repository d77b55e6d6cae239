"""Varying environments in the nearly degenerate regime.

The mean sequence is ``f_n = 1`` before ``start_index`` and ``1 - alpha/n``
from there on. Offspring laws are Bernoulli or linear-fractional with
``f_n''(1) = nu (1 - f_n)``; immigration is a bounded categorical law whose
nonzero atoms are scaled by ``1 - f_n``.
"""
from __future__ import annotations

import logging
import math
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import comb, gammaln

from ..config import get_config
from ..errors import ConfigurationError, HorizonExhaustedError, SeriesError
from .series import (
    LinearFractionalParams,
    TruncatedSeries,
    default_order,
    evaluate,
    factorial_moment,
    lf_gf,
)

logger = logging.getLogger(__name__)

# Relative slack on the 1/n threshold so telescoping products land on A(n)
SCALING_SLACK = 1e-10


class OffspringFamily(str, Enum):
    """Offspring law family."""
    BERNOULLI = "bernoulli"
    LINEAR_FRACTIONAL = "linear_fractional"


class ImmigrationFamily(str, Enum):
    """Immigration law family."""
    NONE = "none"
    CATEGORICAL_SCALED = "categorical_scaled"


class ImmigrationAtom(BaseModel):
    """One atom of the immigration law: P(eps_n = value) = weight (1 - f_n)."""

    model_config = ConfigDict(frozen=True)

    value: int = Field(..., ge=1)
    weight: float = Field(..., ge=0.0)


class EnvironmentSpec(BaseModel):
    """Offspring and immigration sequences of a nearly degenerate BPVE(I)."""

    model_config = ConfigDict(frozen=True)

    offspring_family: OffspringFamily = OffspringFamily.LINEAR_FRACTIONAL
    alpha: float = Field(1.0, gt=0.0, description="Decay rate in f_n = 1 - alpha/n")
    nu: float = Field(0.0, ge=0.0, description="Limit of f_n''(1)/(1 - f_n)")
    immigration_family: ImmigrationFamily = ImmigrationFamily.NONE
    immigration_support: Tuple[ImmigrationAtom, ...] = ()
    start_index: Optional[int] = Field(default=None, ge=1)

    @field_validator('immigration_support')
    @classmethod
    def validate_support(cls, v: Tuple[ImmigrationAtom, ...]) -> Tuple[ImmigrationAtom, ...]:
        """Atoms must have distinct values; keep them sorted."""
        values = [atom.value for atom in v]
        if len(set(values)) != len(values):
            raise ValueError('immigration atoms must have distinct values')
        return tuple(sorted(v, key=lambda atom: atom.value))

    @model_validator(mode='after')
    def validate_conditions(self) -> 'EnvironmentSpec':
        """Check (C1)-(C4) hold by construction."""
        if self.offspring_family is OffspringFamily.BERNOULLI and self.nu != 0.0:
            raise ValueError('bernoulli offspring forces nu = 0')
        if self.start <= self.alpha:
            raise ValueError(f'start_index {self.start} must exceed alpha {self.alpha}')
        if self.immigration_family is ImmigrationFamily.NONE:
            if self.immigration_support:
                raise ValueError('immigration_support given without an immigration family')
        else:
            if not self.immigration_support:
                raise ValueError('categorical_scaled immigration needs a nonempty support')
            # 1 - f_n is largest at the first decaying generation
            scale = self.alpha / self.start
            total = sum(atom.weight for atom in self.immigration_support)
            if total * scale > 1.0:
                raise ValueError(
                    f'immigration pmf invalid: sum c_k (1 - f_n) = {total * scale:.4f} > 1'
                )
        return self

    @property
    def start(self) -> int:
        """First generation with f_n < 1."""
        if self.start_index is not None:
            return self.start_index
        return math.floor(self.alpha) + 1

    @property
    def has_immigration(self) -> bool:
        return self.immigration_family is not ImmigrationFamily.NONE


class ConditionDiagnostics(BaseModel):
    """Numeric evidence for the Toeplitz-sum and shape-function conditions."""

    horizon: int
    toeplitz_sums: Dict[int, float] = Field(description="k -> sum_j a^(k)_{n,j} x_j")
    toeplitz_targets: Dict[int, float] = Field(description="k -> nu/(2k)")
    shape_sup_ratio: float = Field(description="sup_s |phi_n(1)-phi_n(s)| / (1-f_n)")
    harmonic_sum: float = Field(description="sum_{j<=horizon} (1 - f_j)")
    harmonic_reference: float = Field(description="alpha * log(horizon)")


def mean(spec: EnvironmentSpec, n: int) -> float:
    """Offspring mean f_n of generation ``n``."""
    if n < 1:
        raise ValueError(f"generation index must be >= 1, got {n}")
    if n < spec.start:
        return 1.0
    return 1.0 - spec.alpha / n


def means(spec: EnvironmentSpec, upto: int) -> np.ndarray:
    """Array of f_1 .. f_upto."""
    k = np.arange(1, upto + 1, dtype=float)
    return np.where(k < spec.start, 1.0, 1.0 - spec.alpha / k)


def offspring_params(spec: EnvironmentSpec, n: int) -> LinearFractionalParams:
    """Offspring law of generation ``n`` as a linear-fractional law.

    The shape parameter is ``nu / f_n`` so that ``f_n''(1) = nu (1 - f_n)``.
    """
    m = mean(spec, n)
    if spec.offspring_family is OffspringFamily.BERNOULLI:
        return LinearFractionalParams(a=m, nu=0.0)
    shape = spec.nu / m
    if not math.isfinite(shape):
        raise ConfigurationError(f"offspring law of generation {n} has no valid shape (mean {m})")
    return LinearFractionalParams(a=m, nu=shape)


def offspring_gf(spec: EnvironmentSpec, n: int, order: Optional[int] = None) -> TruncatedSeries:
    """Offspring g.f. f_n truncated at ``order``."""
    params = offspring_params(spec, n)
    if params.a == 1.0:
        return TruncatedSeries.identity(default_order() if order is None else order)
    return lf_gf(params, order)


def offspring_second_moment(spec: EnvironmentSpec, n: int) -> float:
    """Closed-form f_n''(1)."""
    if spec.offspring_family is OffspringFamily.BERNOULLI:
        return 0.0
    return spec.nu * (1.0 - mean(spec, n))


def immigration_gf(spec: EnvironmentSpec, n: int, order: Optional[int] = None) -> TruncatedSeries:
    """G.f. of the immigration law in generation ``n``.

    Raises:
        ConfigurationError: If no immigration is configured or the pmf is invalid
    """
    if not spec.has_immigration:
        raise ConfigurationError("immigration is not configured for this environment")
    order = default_order() if order is None else order
    scale = 1.0 - mean(spec, n)
    out = np.zeros(order + 1)
    for atom in spec.immigration_support:
        if atom.value > order:
            raise ConfigurationError(f"immigration atom {atom.value} exceeds truncation order {order}")
        out[atom.value] = atom.weight * scale
    out[0] = 1.0 - out[1:].sum()
    if out[0] < 0.0:
        raise ConfigurationError(f"immigration pmf invalid at generation {n}")
    return TruncatedSeries(out)


def immigration_lambdas(spec: EnvironmentSpec) -> List[float]:
    """Limits lambda_j of m_{n,j} / (j! (1 - f_n)) for j = 1 .. max support."""
    if not spec.has_immigration:
        return []
    top = max(atom.value for atom in spec.immigration_support)
    return [
        float(sum(atom.weight * comb(atom.value, j, exact=True) for atom in spec.immigration_support))
        for j in range(1, top + 1)
    ]


def cumulative_mean(spec: EnvironmentSpec, j: int, n: int) -> float:
    """``f_{j,n} = f_{j+1} ... f_n``; equals 1 when ``j == n``."""
    if not 0 <= j <= n:
        raise ValueError(f"need 0 <= j <= n, got j={j}, n={n}")
    if j == n:
        return 1.0
    return float(np.prod(means(spec, n)[j:]))


class ScalingTable:
    """Memoized A(n) = min{m >= 1 : f_{0,m} <= 1/n}.

    Cumulative products are precomputed up to a horizon that grows on
    demand (doubling) until the configured cap.
    """

    def __init__(self, spec: EnvironmentSpec, horizon: int = 4096, cap: Optional[int] = None):
        self.spec = spec
        self.cap = get_config().HORIZON_CAP if cap is None else cap
        self.values: Dict[int, int] = {}
        self._cumulative = np.empty(0)
        self._extend(min(horizon, self.cap))

    def _extend(self, horizon: int) -> None:
        # _cumulative[m-1] = f_{0,m}
        self._cumulative = np.cumprod(means(self.spec, horizon))
        logger.debug(f"Scaling table extended to horizon {horizon}")

    @property
    def horizon(self) -> int:
        return self._cumulative.size

    def cumulative(self, m: int) -> float:
        """f_{0,m} for ``m`` within the horizon."""
        if m == 0:
            return 1.0
        if m > self.horizon:
            self._grow(m)
        return float(self._cumulative[m - 1])

    def _grow(self, needed: int) -> None:
        if needed > self.cap:
            raise HorizonExhaustedError(f"generation {needed} exceeds horizon cap {self.cap}")
        self._extend(min(self.cap, max(needed, 2 * self.horizon)))

    def __call__(self, n: int) -> int:
        if n < 1:
            raise ValueError(f"scale parameter must be >= 1, got {n}")
        if n in self.values:
            return self.values[n]
        threshold = (1.0 / n) * (1.0 + SCALING_SLACK)
        while True:
            idx = int(np.searchsorted(-self._cumulative, -threshold, side='left'))
            if idx < self.horizon:
                break
            if self.horizon >= self.cap:
                raise HorizonExhaustedError(
                    f"f_(0,m) stays above 1/{n} up to the horizon cap {self.cap}"
                )
            self._grow(min(2 * self.horizon, self.cap))
        self.values[n] = idx + 1
        return idx + 1

    def min_mean(self, upto: int) -> float:
        """Smallest f_m for m <= upto."""
        return float(means(self.spec, upto).min())


@lru_cache(maxsize=32)
def scaling_table(spec: EnvironmentSpec) -> ScalingTable:
    """Shared ScalingTable per environment."""
    return ScalingTable(spec)


def scaling_A(spec: EnvironmentSpec, n: int) -> int:
    """The scaling sequence A(n); ``A(nt)`` means ``A(floor(nt))``."""
    return scaling_table(spec)(int(n))


def scaling_constant(spec: EnvironmentSpec) -> float:
    """c = lim n^alpha f_{0,n} = Gamma(s) / Gamma(s - alpha)."""
    s = spec.start
    return math.exp(gammaln(s) - gammaln(s - spec.alpha))


def asymptotic_scaling(spec: EnvironmentSpec, n: int) -> int:
    """The closed-form choice floor(c^(1/alpha) n^(1/alpha))."""
    return math.floor((scaling_constant(spec) * n) ** (1.0 / spec.alpha))


def shape_function(f: TruncatedSeries, s: float) -> float:
    """``phi(s) = 1/(1 - f(s)) - 1/(fbar (1 - s))``; ``phi(1) = f''(1) / (2 fbar^2)``.

    Raises:
        SeriesError: If f is degenerate (mean 0, or f(s) = 1 for some s < 1)
    """
    fbar = factorial_moment(f, 1)
    if fbar <= 0.0:
        raise SeriesError("shape function needs a positive mean")
    if s == 1.0:
        return factorial_moment(f, 2) / (2.0 * fbar ** 2)
    gap = 1.0 - evaluate(f, s)
    if gap <= 0.0:
        raise SeriesError(f"degenerate offspring: f({s}) = 1")
    return 1.0 / gap - 1.0 / (fbar * (1.0 - s))


def condition_diagnostics(spec: EnvironmentSpec, horizon: int,
                          order: Optional[int] = None) -> ConditionDiagnostics:
    """Toeplitz sums, the shape-function sup ratio and the harmonic sum at ``horizon``."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    m = means(spec, horizon)
    decay = 1.0 - m
    # tail[j] = f_{j,horizon} for j = 0..horizon
    tail = np.append(np.cumprod(m[::-1])[::-1], 1.0)
    if spec.offspring_family is OffspringFamily.BERNOULLI:
        x = np.zeros(horizon)
    else:
        x = np.where(decay > 0.0, 0.5 * spec.nu, 0.0)
    sums = {k: float(np.sum(decay * tail[1:] ** k * x)) for k in (1, 2)}
    targets = {k: spec.nu / (2.0 * k) for k in (1, 2)}

    ratio = 0.0
    if decay[-1] > 0.0:
        f = offspring_gf(spec, horizon, order)
        at_one = shape_function(f, 1.0)
        grid = np.linspace(0.0, 0.99, 100)
        ratio = max(abs(at_one - shape_function(f, s)) for s in grid) / decay[-1]

    report = ConditionDiagnostics(
        horizon=horizon,
        toeplitz_sums=sums,
        toeplitz_targets=targets,
        shape_sup_ratio=float(ratio),
        harmonic_sum=float(decay.sum()),
        harmonic_reference=spec.alpha * math.log(horizon),
    )
    logger.debug(f"Condition diagnostics at horizon {horizon}: {report.model_dump()}")
    return report
