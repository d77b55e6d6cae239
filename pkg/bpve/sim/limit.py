"""Continuous-time limit objects: Z, the time-changed U and the CTBP with immigration W.

``Z`` is the birth-death process with birth rate ``nu/2`` and death rate
``1 + nu/2``; its transition g.f. over time ``t`` is ``h_{exp(-t)}``.
``U(t) = Z(log t)``. ``W`` adds immigration at rate ``beta`` in batches with
g.f. ``h(s) = 1 + beta^-1 sum lambda_k (s-1)^k`` and is stationary with
initial law ``f_Y``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.environment import EnvironmentSpec, immigration_lambdas
from ..core.series import (
    ArrayLike,
    LinearFractionalParams,
    TruncatedSeries,
    compose_coefficients,
    default_order,
    dilate,
    exp_coefficients,
    lf_eval,
    lf_gf,
    power,
    shift_to_origin,
)
from ..errors import ConfigurationError, GridError, RejectionExhaustedError, SeriesError
from .discrete import PathBatch, PathSample, validate_grid
from .streams import SeededStream

logger = logging.getLogger(__name__)

COEFFICIENT_TOLERANCE = 1e-12
REJECTION_ATTEMPTS = 10_000


class LimitSpec(BaseModel):
    """Parameters (nu, lambda_1..lambda_kappa) of the limit processes."""

    model_config = ConfigDict(frozen=True)

    nu: float = Field(..., ge=0.0)
    lambdas: Tuple[float, ...] = ()

    @field_validator('lambdas')
    @classmethod
    def validate_lambdas(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        """Factorial-moment limits are nonnegative."""
        if any(x < 0.0 for x in v):
            raise ValueError('lambdas must be nonnegative')
        return tuple(float(x) for x in v)

    @model_validator(mode='after')
    def validate_immigration(self) -> 'LimitSpec':
        """h must be a probability g.f. whenever immigration is present."""
        if not self.lambdas:
            return self
        if self.beta_rate <= 0.0:
            raise ValueError(f'beta = {self.beta_rate} must be positive')
        h = self.immigration_pmf()
        if h.min() < -COEFFICIENT_TOLERANCE or abs(h.sum() - 1.0) > 1e-9:
            raise ValueError(f'lambdas {self.lambdas} do not define an immigration law')
        return self

    @classmethod
    def from_environment(cls, spec: EnvironmentSpec) -> "LimitSpec":
        return cls(nu=spec.nu, lambdas=tuple(immigration_lambdas(spec)))

    @property
    def p(self) -> float:
        return 2.0 / (2.0 + self.nu)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def alpha_rate(self) -> float:
        """Total event rate per individual."""
        return 1.0 + self.nu

    @property
    def birth_rate(self) -> float:
        return 0.5 * self.nu

    @property
    def death_rate(self) -> float:
        return 1.0 + 0.5 * self.nu

    @property
    def beta_rate(self) -> float:
        return float(sum((-1) ** k * lam for k, lam in enumerate(self.lambdas)))

    @property
    def has_immigration(self) -> bool:
        return bool(self.lambdas)

    def offspring_pmf(self) -> np.ndarray:
        """Atoms of f on {0, 1, 2}."""
        return np.array([self.death_rate, 0.0, self.birth_rate]) / self.alpha_rate

    def immigration_pmf(self) -> np.ndarray:
        """Coefficients of h in s (index 0 is P(batch = 0))."""
        if not self.lambdas:
            return np.array([1.0])
        shifted = np.concatenate(([1.0], np.asarray(self.lambdas) / self.beta_rate))
        return shift_to_origin(shifted)

    def transition_params(self, t: float) -> LinearFractionalParams:
        """h_{exp(-t)}, the one-individual transition law of Z over time ``t``."""
        return LinearFractionalParams(a=math.exp(-t), nu=self.nu)

    def ratio_params(self, a: float) -> LinearFractionalParams:
        return LinearFractionalParams(a=a, nu=self.nu)


@dataclass(frozen=True)
class Trajectory:
    """Jump times and post-jump states of one path on [t0, t1]."""

    t0: float
    t1: float
    initial_state: int
    times: np.ndarray
    states: np.ndarray

    def state_at(self, t: float) -> int:
        if not self.t0 <= t <= self.t1:
            raise GridError(f"time {t} outside [{self.t0}, {self.t1}]")
        k = int(np.searchsorted(self.times, t, side='right'))
        return self.initial_state if k == 0 else int(self.states[k - 1])

    @property
    def final_state(self) -> int:
        return int(self.states[-1]) if self.states.size else self.initial_state


def bd_transition_gf(spec: LimitSpec, s: ArrayLike, t: float) -> ArrayLike:
    """F(s, t) = 1 - e^{-t} (1/(1-s) + nu/2 (1 - e^{-t}))^{-1}."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    return lf_eval(spec.transition_params(t), s)


def conditioned_kernel(spec: LimitSpec, u: float, t: float, x0: int,
                       order: Optional[int] = None) -> TruncatedSeries:
    """Law of U(t) given U(u) = x0 and survival to time 1.

    ``k(s) = [h_{u/t}(s)^x0 - h_{u/t}(h_t(0) s)^x0] / [1 - h_u(0)^x0]``.

    Raises:
        GridError: If not 0 < u < t <= 1
        ValueError: If x0 < 1
    """
    if not 0.0 < u < t <= 1.0:
        raise GridError(f"need 0 < u < t <= 1, got u={u}, t={t}")
    if x0 < 1:
        raise ValueError(f"initial state must be >= 1, got {x0}")
    forward = power(lf_gf(spec.ratio_params(u / t), order), x0)
    theta = lf_eval(spec.ratio_params(t), 0.0)
    killed = dilate(forward, theta)
    norm = -math.expm1(x0 * math.log(lf_eval(spec.ratio_params(u), 0.0)))
    coeffs = (forward.coeffs - killed) / norm
    coeffs[0] = 0.0
    return TruncatedSeries(coeffs)


def kernel_small_time_limit(spec: LimitSpec, ratio: float, x0: int, s: ArrayLike) -> ArrayLike:
    """Limit of the conditioned kernel from ``ratio * t`` to ``t`` as t -> 0.

    Equals ``ratio^-1 s h'_ratio(s) h_ratio(s)^(x0-1)``.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    params = spec.ratio_params(ratio)
    s = np.asarray(s, dtype=float)
    x = 1.0 - s
    derivative = ratio / (1.0 + params.c * x) ** 2
    value = s * derivative * np.power(lf_eval(params, s), x0 - 1) / ratio
    return float(value) if np.ndim(value) == 0 else value


def entrance_law(spec: LimitSpec, t: float, order: Optional[int] = None) -> TruncatedSeries:
    """g_t[x] = p q^(x-1) t^-1 (1 - h_t(0)^x) for x >= 1."""
    if not 0.0 < t <= 1.0:
        raise GridError(f"entrance law needs t in (0, 1], got {t}")
    order = default_order() if order is None else order
    x = np.arange(1, order + 1)
    theta = lf_eval(spec.ratio_params(t), 0.0)
    survive = (x > 0).astype(float) if theta <= 0.0 else -np.expm1(x * math.log(theta))
    out = np.zeros(order + 1)
    out[1:] = spec.p * np.power(spec.q, x - 1) * survive / t
    return TruncatedSeries(out)


def entrance_law_limit(spec: LimitSpec, order: Optional[int] = None) -> TruncatedSeries:
    """The t -> 0 law of the entrance family: x p^2 q^(x-1)."""
    order = default_order() if order is None else order
    x = np.arange(1, order + 1)
    out = np.zeros(order + 1)
    out[1:] = x * spec.p ** 2 * np.power(spec.q, x - 1)
    return TruncatedSeries(out)


def quasi_stationary_pmf(spec: LimitSpec, order: Optional[int] = None) -> TruncatedSeries:
    """Geom(p) on {1, 2, ...}."""
    order = default_order() if order is None else order
    x = np.arange(1, order + 1)
    out = np.zeros(order + 1)
    out[1:] = spec.p * np.power(spec.q, x - 1)
    return TruncatedSeries(out)


def survival_from_geom(spec: LimitSpec, eps: float) -> float:
    """P(U(1) > 0) for U(eps) ~ Geom(p); equals eps."""
    if not 0.0 < eps <= 1.0:
        raise GridError(f"eps must lie in (0, 1], got {eps}")
    theta = lf_eval(spec.ratio_params(eps), 0.0)
    return 1.0 - spec.p * theta / (1.0 - spec.q * theta)


def generator_a(spec: LimitSpec, s: ArrayLike) -> ArrayLike:
    """a(s) = (1 - s)(1 + nu/2 (1 - s))."""
    x = 1.0 - np.asarray(s, dtype=float)
    return x * (1.0 + 0.5 * spec.nu * x)


def generator_b(spec: LimitSpec, s: ArrayLike) -> ArrayLike:
    """b(s) = sum lambda_k (s - 1)^k."""
    d = np.asarray(s, dtype=float) - 1.0
    total = np.zeros_like(d)
    for k, lam in enumerate(spec.lambdas, start=1):
        total = total + lam * d ** k
    return total


def log_fY(spec: LimitSpec, s: ArrayLike) -> ArrayLike:
    """Closed-form log f_Y(s); 0 without immigration."""
    s = np.asarray(s, dtype=float)
    d = s - 1.0
    total = np.zeros_like(s)
    if spec.nu == 0.0:
        for k, lam in enumerate(spec.lambdas, start=1):
            total = total + lam * d ** k / k
        return total
    half = 0.5 * spec.nu
    head = np.log1p(-half * d)
    for k, lam in enumerate(spec.lambdas, start=1):
        inner = head + sum(half ** i * d ** i / i for i in range(1, k))
        total = total - (1.0 / half) ** k * lam * inner
    return total


def _log_fY_series(spec: LimitSpec, order: int) -> np.ndarray:
    """Coefficients in s of log f_Y, cut at ``order``."""
    out = np.zeros(order + 1)
    if spec.nu == 0.0:
        poly = np.concatenate(([0.0], [lam / k for k, lam in enumerate(spec.lambdas, start=1)]))
        return shift_to_origin(poly, order)
    half = 0.5 * spec.nu
    q = spec.q
    m = np.arange(1, order + 1)
    # log(1 + half (1 - s)) = log(1 + half) + log(1 - q s)
    log_term = np.concatenate(([math.log1p(half)], -np.power(q, m) / m))
    for k, lam in enumerate(spec.lambdas, start=1):
        poly = np.concatenate(([0.0], [half ** i / i for i in range(1, k)]))
        out -= (1.0 / half) ** k * lam * (log_term + shift_to_origin(poly, order))
    return out


@lru_cache(maxsize=32)
def _stationary_fY(spec: LimitSpec, order: int) -> TruncatedSeries:
    try:
        return TruncatedSeries(exp_coefficients(_log_fY_series(spec, order)))
    except SeriesError as e:
        raise ConfigurationError(f"lambdas {spec.lambdas} give no valid f_Y: {e}") from e


def stationary_fY(spec: LimitSpec, order: Optional[int] = None) -> TruncatedSeries:
    """Coefficients of the stationary law f_Y of W.

    Raises:
        ConfigurationError: If there is no immigration or the series is not a pmf
    """
    if not spec.has_immigration:
        raise ConfigurationError("stationary law needs a nonempty lambda vector")
    return _stationary_fY(spec, default_order() if order is None else order)


def W_transition_gf(spec: LimitSpec, y: int, s: ArrayLike, t: float) -> ArrayLike:
    """G_y(s, t) = f_Y(s) / f_Y(h(s)) h(s)^y with h = h_{exp(-t)}."""
    if y < 0:
        raise ValueError(f"state must be >= 0, got {y}")
    inner = bd_transition_gf(spec, s, t)
    value = np.exp(log_fY(spec, s) - log_fY(spec, inner)) * np.power(inner, y)
    return float(value) if np.ndim(value) == 0 else value


def W_transition_pmf(spec: LimitSpec, y: int, t: float, order: Optional[int] = None) -> TruncatedSeries:
    """Coefficients of G_y(., t)."""
    order = default_order() if order is None else order
    h = lf_gf(spec.transition_params(t), order)
    moved = power(h, y)
    if not spec.has_immigration:
        return moved
    log_f = _log_fY_series(spec, order)
    arrivals = exp_coefficients(log_f - compose_coefficients(log_f, h.coeffs))
    return TruncatedSeries(np.convolve(arrivals, moved.coeffs)[:order + 1])


def reversed_kernel(spec: LimitSpec, u: float, t: float, cap: int,
                    order: Optional[int] = None) -> np.ndarray:
    """Transition matrix of v -> U~(1 - v) from time u to t on states 0..cap.

    Built from the entrance law and the forward conditioned kernel; row 0
    is left empty since the entrance process never visits 0.
    """
    if not 0.0 <= u < t < 1.0:
        raise GridError(f"need 0 <= u < t < 1, got u={u}, t={t}")
    later, earlier = 1.0 - u, 1.0 - t
    start = entrance_law(spec, earlier, order).coeffs
    end = entrance_law(spec, later, order).coeffs
    out = np.zeros((cap + 1, cap + 1))
    for y in range(1, cap + 1):
        forward = conditioned_kernel(spec, earlier, later, y, order).coeffs
        weight = start[y] * forward[1:cap + 1]
        np.divide(weight, end[1:cap + 1], out=out[1:, y], where=end[1:cap + 1] > 0.0)
    return out


def _advance(states: np.ndarray, duration: float, spec: LimitSpec, rng: np.random.Generator,
             immigrate: bool, counts: Optional[np.ndarray] = None) -> np.ndarray:
    """Exact event-driven advance of every replicate over ``duration``.

    ``counts`` (shape (3,)) accumulates immigration, birth and death events.
    """
    x = states.astype(np.int64).copy()
    if duration <= 0.0:
        return x
    beta = spec.beta_rate if immigrate and spec.has_immigration else 0.0
    batches = np.cumsum(spec.immigration_pmf()) if beta > 0.0 else None
    clock = np.zeros(x.size)
    active = np.ones(x.size, dtype=bool)
    while True:
        rate = x * spec.alpha_rate + beta
        active &= rate > 0.0
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        clock[idx] += rng.exponential(1.0 / rate[idx])
        late = clock[idx] > duration
        active[idx[late]] = False
        idx = idx[~late]
        if idx.size == 0:
            break
        pick = rng.random(idx.size) * rate[idx]
        immigration = pick < beta
        death = ~immigration & (pick - beta < x[idx] * spec.death_rate)
        birth = ~immigration & ~death
        x[idx[death]] -= 1
        x[idx[birth]] += 1
        if immigration.any():
            arrivals = np.searchsorted(batches, rng.random(int(immigration.sum())), side='right')
            x[idx[immigration]] += np.minimum(arrivals, batches.size - 1)
        if counts is not None:
            counts += (int(immigration.sum()), int(birth.sum()), int(death.sum()))
    return x


def _trajectory(spec: LimitSpec, init_state: int, t0: float, t1: float,
                stream: SeededStream, immigrate: bool) -> Trajectory:
    if init_state < 0:
        raise ValueError(f"initial state must be >= 0, got {init_state}")
    if t1 < t0:
        raise GridError(f"need t0 <= t1, got t0={t0}, t1={t1}")
    rng = stream.generator()
    beta = spec.beta_rate if immigrate and spec.has_immigration else 0.0
    batches = np.cumsum(spec.immigration_pmf()) if beta > 0.0 else None
    clock, x = t0, init_state
    times, states = [], []
    while True:
        rate = x * spec.alpha_rate + beta
        if rate <= 0.0:
            break
        clock += rng.exponential(1.0 / rate)
        if clock > t1:
            break
        pick = rng.random() * rate
        if pick < beta:
            x += min(int(np.searchsorted(batches, rng.random(), side='right')), batches.size - 1)
        elif pick - beta < x * spec.death_rate:
            x -= 1
        else:
            x += 1
        times.append(clock)
        states.append(x)
    return Trajectory(t0=t0, t1=t1, initial_state=init_state,
                      times=np.array(times), states=np.array(states, dtype=np.int64))


def simulate_Z(spec: LimitSpec, init_state: int, t0: float, t1: float, stream: SeededStream) -> Trajectory:
    """Exact simulation of the birth-death process Z on [t0, t1]."""
    return _trajectory(spec, init_state, t0, t1, stream, immigrate=False)


def simulate_W(spec: LimitSpec, init_state: int, t0: float, t1: float, stream: SeededStream) -> Trajectory:
    """Exact simulation of W on [t0, t1] (competing exponentials)."""
    return _trajectory(spec, init_state, t0, t1, stream, immigrate=True)


def _sample_on_grid(spec: LimitSpec, initial_states, times: Sequence[float], rng: np.random.Generator,
                    immigrate: bool, counts: Optional[np.ndarray] = None) -> np.ndarray:
    """States at ``times[1:]`` of replicates started at ``times[0]``."""
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise GridError(f"times must be nondecreasing: {times}")
    current = np.asarray(initial_states, dtype=np.int64)
    out = np.zeros((current.size, len(times) - 1), dtype=np.int64)
    for col, (a, b) in enumerate(zip(times, times[1:])):
        current = _advance(current, b - a, spec, rng, immigrate, counts)
        out[:, col] = current
    return out


def sample_Z_batch(spec: LimitSpec, initial_states, times: Sequence[float],
                   rng: np.random.Generator) -> np.ndarray:
    """Vectorized Z: column i holds the states at ``times[i + 1]``."""
    return _sample_on_grid(spec, initial_states, times, rng, immigrate=False)


def sample_W_batch(spec: LimitSpec, initial_states, times: Sequence[float], rng: np.random.Generator,
                   counts: Optional[np.ndarray] = None) -> np.ndarray:
    """Vectorized W: column i holds the states at ``times[i + 1]``."""
    return _sample_on_grid(spec, initial_states, times, rng, immigrate=True, counts=counts)


def draw_stationary(spec: LimitSpec, size: int, rng: np.random.Generator,
                    order: Optional[int] = None) -> np.ndarray:
    """``size`` draws from f_Y."""
    cdf = np.cumsum(stationary_fY(spec, order).coeffs)
    return np.minimum(np.searchsorted(cdf, rng.random(size), side='right'), cdf.size - 1)


def sample_U_conditioned_batch(spec: LimitSpec, eps: float, time_grid: Sequence[float],
                               extended_grid: Sequence[float], stream: SeededStream,
                               size: int) -> Tuple[PathBatch, int]:
    """U on ``time_grid + extended_grid`` given Z(0) > 0, by rejection.

    ``size`` proposals start from Geom(p) at ``log eps``; the accepted ones
    are returned with the number of proposals.
    """
    if not 0.0 < eps <= 1.0:
        raise GridError(f"eps must lie in (0, 1], got {eps}")
    inner = validate_grid(time_grid)
    outer = tuple(float(t) for t in extended_grid)
    if inner[0] < eps or inner[-1] > 1.0:
        raise GridError(f"time grid must lie in [{eps}, 1]")
    if any(t <= 1.0 for t in outer):
        raise GridError('extended grid must lie above 1')
    times = validate_grid(inner + outer)
    rng = stream.generator()
    start = rng.geometric(spec.p, size).astype(np.int64)
    origin = math.log(eps)
    clock = [origin] + sorted(({math.log(t) for t in times} | {0.0}) - {origin})
    states = _sample_on_grid(spec, start, clock, rng, immigrate=False)
    lookup = {origin: start, **{c: states[:, i] for i, c in enumerate(clock[1:])}}
    recorded = np.column_stack([lookup[math.log(t)] for t in times])
    alive = lookup[0.0] > 0
    batch = PathBatch(times=times, states=recorded[alive], n=1, conditioned=True)
    logger.debug(f"Accepted {int(alive.sum())} of {size} proposals at eps={eps}")
    return batch, size


def sample_U_conditioned(spec: LimitSpec, eps: float, time_grid: Sequence[float],
                         extended_grid: Sequence[float], stream: SeededStream,
                         max_attempts: int = REJECTION_ATTEMPTS) -> PathSample:
    """One accepted path of U.

    Raises:
        RejectionExhaustedError: If no proposal survives within ``max_attempts`` rounds
    """
    proposals = max(1, math.ceil(2.0 / eps))
    for offset in range(max_attempts):
        batch, _ = sample_U_conditioned_batch(spec, eps, time_grid, extended_grid,
                                              stream.child(offset), proposals)
        if batch.replicates:
            return next(batch.paths())
    raise RejectionExhaustedError(
        f"no accepted path at eps={eps} after {max_attempts} rounds of {proposals} proposals")


def reverse_marginals(batch: PathBatch) -> PathBatch:
    """Re-index every path by t -> 1/t.

    Raises:
        GridError: If the grid is not closed under inversion
    """
    keys = {round(t, 9) for t in batch.times}
    if {round(1.0 / t, 9) for t in batch.times} != keys:
        raise GridError(f"grid {batch.times} is not closed under inversion")
    order = sorted(range(len(batch.times)), key=lambda i: 1.0 / batch.times[i])
    return PathBatch(
        times=tuple(1.0 / batch.times[i] for i in order),
        states=batch.states[:, order],
        n=batch.n,
        conditioned=batch.conditioned,
        immigration=batch.immigration,
        overflow_count=batch.overflow_count,
    )
