"""Monte Carlo paths of X_n and Y_n observed at generations A(n t).

Unconditioned paths are simulated forward generation by generation. Paths
conditioned on ``X_{A(n)} > 0`` are drawn from the Doob h-transform of the
checkpoint chain: the transition from checkpoint ``j`` to ``k`` in state
``x`` is ``power(f_{j,k}, x)`` reweighted by ``h_k(y) / h_j(x)`` with
``h_k(y) = 1 - f_{k,A(n)}(0)^y``.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..config import get_config
from ..core.environment import EnvironmentSpec, offspring_gf, offspring_params
from ..core.exact import ExactEngine, scaled_generation
from ..core.series import default_order, evaluate, power
from ..errors import ExtinctionError, GridError, PopulationOverflowError
from ..stats import EmpiricalDistribution, JointEmpirical
from .streams import SeededStream

logger = logging.getLogger(__name__)


class PathSample(BaseModel):
    """One path observed on a scaled time grid."""

    times: List[float]
    states: List[int]
    n: int = Field(..., ge=1)
    conditioned: bool = False
    immigration: bool = False

    @model_validator(mode='after')
    def validate_path(self) -> 'PathSample':
        """States are nonnegative, absorbed at 0 without immigration, alive up to t=1 when conditioned."""
        if len(self.times) != len(self.states):
            raise ValueError('times and states must have the same length')
        if any(x < 0 for x in self.states):
            raise ValueError('states must be nonnegative')
        if not self.immigration:
            hit = next((i for i, x in enumerate(self.states) if x == 0), None)
            if hit is not None and any(self.states[hit:]):
                raise ValueError('state 0 is absorbing without immigration')
        if self.conditioned and any(x < 1 for t, x in zip(self.times, self.states) if t <= 1.0):
            raise ValueError('conditioned path must be alive at every t <= 1')
        return self


@dataclass(frozen=True)
class PathBatch:
    """States of many replicates on one time grid (rows are replicates)."""

    times: Tuple[float, ...]
    states: np.ndarray
    n: int
    conditioned: bool = False
    immigration: bool = False
    overflow_count: int = 0

    @property
    def replicates(self) -> int:
        return int(self.states.shape[0])

    def column(self, t: float) -> int:
        """Index of grid time ``t``."""
        for i, s in enumerate(self.times):
            if np.isclose(s, t, rtol=1e-12, atol=1e-12):
                return i
        raise GridError(f"time {t} is not on the grid {self.times}")

    def marginal(self, t: float) -> EmpiricalDistribution:
        return EmpiricalDistribution.from_samples(self.states[:, self.column(t)], self.overflow_count)

    def joint(self, times: Optional[Sequence[float]] = None) -> JointEmpirical:
        times = self.times if times is None else tuple(times)
        cols = [self.column(t) for t in times]
        return JointEmpirical.from_states(times, self.states[:, cols], self.overflow_count)

    def paths(self) -> Iterator[PathSample]:
        for row in self.states:
            yield PathSample(times=list(self.times), states=[int(x) for x in row], n=self.n,
                             conditioned=self.conditioned, immigration=self.immigration)

    @classmethod
    def concat(cls, batches: Sequence["PathBatch"]) -> "PathBatch":
        """Stack batches in the given order."""
        if not batches:
            raise ValueError('nothing to concatenate')
        first = batches[0]
        if any(b.times != first.times for b in batches):
            raise GridError('batches were sampled on different grids')
        return cls(
            times=first.times,
            states=np.concatenate([b.states for b in batches], axis=0),
            n=first.n,
            conditioned=first.conditioned,
            immigration=first.immigration,
            overflow_count=sum(b.overflow_count for b in batches),
        )


def validate_grid(time_grid: Sequence[float]) -> Tuple[float, ...]:
    """Grid must be strictly increasing and positive."""
    times = tuple(float(t) for t in time_grid)
    if not times:
        raise GridError('time grid is empty')
    if times[0] <= 0.0:
        raise GridError(f"grid times must be positive, got {times[0]}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise GridError(f"grid must be strictly increasing: {times}")
    return times


class OffspringSampler:
    """Draws next-generation totals; inverse-CDF tables are cached per generation.

    Replicates above ``threshold`` individuals switch to a compound draw of
    the generation total: the number of individuals leaving offspring is
    binomial and, given it, the extra offspring beyond one each are negative
    binomial. This is the law of a sum of linear-fractional variables.
    """

    def __init__(self, spec: EnvironmentSpec, order: Optional[int] = None,
                 threshold: Optional[int] = None):
        self.spec = spec
        self.order = default_order() if order is None else order
        self.threshold = get_config().COMPOUND_THRESHOLD if threshold is None else threshold
        self._tables: Dict[int, np.ndarray] = {}

    def table(self, generation: int) -> np.ndarray:
        if generation not in self._tables:
            self._tables[generation] = np.cumsum(offspring_gf(self.spec, generation, self.order).coeffs)
        return self._tables[generation]

    def advance(self, generation: int, populations: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Totals of the next generation for positive ``populations``."""
        params = offspring_params(self.spec, generation)
        if params.a == 1.0:
            return populations.copy()
        out = np.empty_like(populations)
        small = populations <= self.threshold
        if small.any():
            counts = populations[small]
            u = rng.random(int(counts.sum()))
            draws = np.minimum(np.searchsorted(self.table(generation), u, side='right'), self.order)
            offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
            out[small] = np.add.reduceat(draws, offsets)
        if not small.all():
            out[~small] = self._compound(params.a / (1.0 + params.c), params.ratio, populations[~small], rng)
        return out

    @staticmethod
    def _compound(positive: float, ratio: float, populations: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
        parents = rng.binomial(populations, positive)
        total = parents.astype(np.int64)
        if ratio > 0.0:
            busy = parents > 0
            total[busy] += rng.negative_binomial(parents[busy], 1.0 - ratio)
        return total

    def immigrants(self, generation: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """Immigration draws for ``size`` replicates."""
        coeffs = self._immigration_atoms(generation)
        if coeffs is None:
            return np.zeros(size, dtype=np.int64)
        values, cdf = coeffs
        return values[np.searchsorted(cdf, rng.random(size), side='right').clip(max=values.size - 1)]

    def _immigration_atoms(self, generation: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        scale = 1.0 - offspring_params(self.spec, generation).a
        if scale == 0.0 or not self.spec.has_immigration:
            return None
        atoms = self.spec.immigration_support
        probs = np.array([atom.weight * scale for atom in atoms])
        values = np.array([0] + [atom.value for atom in atoms], dtype=np.int64)
        cdf = np.cumsum(np.concatenate(([1.0 - probs.sum()], probs)))
        return values, cdf


def _forward_batch(spec: EnvironmentSpec, n: int, time_grid: Sequence[float], stream: SeededStream,
                   size: int, immigrate: bool, sampler: Optional[OffspringSampler]) -> PathBatch:
    times = validate_grid(time_grid)
    generations = [scaled_generation(spec, n, t) for t in times]
    columns: Dict[int, List[int]] = defaultdict(list)
    for col, generation in enumerate(generations):
        columns[generation].append(col)
    sampler = sampler or OffspringSampler(spec)
    cap = get_config().POPULATION_CAP
    rng = stream.generator()

    pop = np.zeros(size, dtype=np.int64) if immigrate else np.ones(size, dtype=np.int64)
    states = np.zeros((size, len(times)), dtype=np.int64)
    overflow = np.zeros(size, dtype=bool)
    for generation in range(1, max(generations) + 1):
        alive = np.flatnonzero(pop > 0)
        if alive.size == 0 and not immigrate:
            break
        if alive.size:
            pop[alive] = sampler.advance(generation, pop[alive], rng)
        if immigrate:
            pop += sampler.immigrants(generation, size, rng)
        over = pop > cap
        if over.any():
            overflow |= over
            pop[over] = 0
        for col in columns.get(generation, ()):
            states[:, col] = pop

    dropped = int(overflow.sum())
    if dropped:
        logger.warning(f"{dropped} of {size} replicates exceeded the population cap {cap}")
    return PathBatch(times=times, states=states[~overflow], n=n, conditioned=False,
                     immigration=immigrate, overflow_count=dropped)


def simulate_X_batch(spec: EnvironmentSpec, n: int, time_grid: Sequence[float], stream: SeededStream,
                     size: int, sampler: Optional[OffspringSampler] = None) -> PathBatch:
    """Forward simulation of ``size`` replicates of X with X_0 = 1."""
    return _forward_batch(spec, n, time_grid, stream, size, False, sampler)


def simulate_Y_batch(spec: EnvironmentSpec, n: int, time_grid: Sequence[float], stream: SeededStream,
                     size: int, sampler: Optional[OffspringSampler] = None) -> PathBatch:
    """Forward simulation of ``size`` replicates of Y with Y_0 = 0."""
    return _forward_batch(spec, n, time_grid, stream, size, spec.has_immigration, sampler)


def _h_values(theta: float, states: np.ndarray) -> np.ndarray:
    """``1 - theta**y`` computed without cancellation."""
    states = np.asarray(states, dtype=float)
    if theta <= 0.0:
        return (states > 0).astype(float)
    return -np.expm1(states * np.log(theta))


class ConditionedSampler:
    """Exact sampler of X on a grid given survival at generation A(n)."""

    def __init__(self, engine: ExactEngine, n: int, time_grid: Sequence[float]):
        self.times = validate_grid(time_grid)
        self.n = n
        self.order = engine.order
        self.generations = [engine.generation(n, t) for t in self.times]
        self.target = engine.generation(n)
        self.checkpoints = sorted({0, self.target, *self.generations})
        self.segments = [engine.chain.segment(j, k) for j, k in zip(self.checkpoints, self.checkpoints[1:])]

        # thetas[i] = f_{c_i, A(n)}(0) for checkpoints up to the target
        stop = self.checkpoints.index(self.target)
        self.thetas: Dict[int, float] = {stop: 0.0}
        for i in range(stop - 1, -1, -1):
            self.thetas[i] = float(evaluate(self.segments[i], self.thetas[i + 1]))
        if self.thetas[0] >= 1.0:
            raise ExtinctionError(f"X_{self.target} = 0 with probability 1")
        self._rows: Dict[Tuple[int, int], np.ndarray] = {}
        logger.debug(f"Conditioned sampler over checkpoints {self.checkpoints}")

    @property
    def survival(self) -> float:
        """P(X_{A(n)} > 0)."""
        return 1.0 - self.thetas[0]

    def row(self, i: int, x: int) -> np.ndarray:
        """Cumulative transition law from checkpoint ``i`` in state ``x``."""
        key = (i, x)
        if key not in self._rows:
            weights = power(self.segments[i], x).coeffs.copy()
            if i + 1 in self.thetas:
                weights *= _h_values(self.thetas[i + 1], np.arange(self.order + 1))
                weights /= weights.sum()
            self._rows[key] = np.cumsum(weights)
        return self._rows[key]

    def exact_marginals(self, floor: float = 1e-15) -> Dict[float, np.ndarray]:
        """Exact conditioned law at every grid time, by pushing pmfs through the rows."""
        law = np.zeros(self.order + 1)
        law[1] = 1.0
        out: Dict[float, np.ndarray] = {}
        for i, checkpoint in enumerate(self.checkpoints[1:]):
            nxt = np.zeros_like(law)
            for x in np.flatnonzero(law > floor):
                nxt += law[x] * np.diff(self.row(i, int(x)), prepend=0.0)
            law = nxt
            for t, generation in zip(self.times, self.generations):
                if generation == checkpoint:
                    out[t] = law.copy()
        return out

    def sample(self, stream: SeededStream, size: int) -> PathBatch:
        rng = stream.generator()
        current = np.ones(size, dtype=np.int64)
        states = np.zeros((size, len(self.times)), dtype=np.int64)
        for i, checkpoint in enumerate(self.checkpoints[1:]):
            nxt = np.empty_like(current)
            for x in np.unique(current):
                idx = np.flatnonzero(current == x)
                u = rng.random(idx.size)
                nxt[idx] = np.minimum(np.searchsorted(self.row(i, int(x)), u, side='right'), self.order)
            current = nxt
            for col, generation in enumerate(self.generations):
                if generation == checkpoint:
                    states[:, col] = current
        return PathBatch(times=self.times, states=states, n=self.n, conditioned=True)


def simulate_X_conditioned_batch(spec: EnvironmentSpec, n: int, time_grid: Sequence[float],
                                 stream: SeededStream, size: int,
                                 engine: Optional[ExactEngine] = None) -> PathBatch:
    """``size`` replicates of X on the grid conditioned on X_{A(n)} > 0."""
    engine = engine or ExactEngine(spec)
    return ConditionedSampler(engine, n, time_grid).sample(stream, size)


def _single(batch: PathBatch) -> PathSample:
    if batch.overflow_count:
        raise PopulationOverflowError(f"path exceeded the population cap {get_config().POPULATION_CAP}")
    return next(batch.paths())


def simulate_X(spec: EnvironmentSpec, n: int, time_grid: Sequence[float], stream: SeededStream) -> PathSample:
    """One unconditioned path of X.

    Raises:
        PopulationOverflowError: If the population exceeds the configured cap
    """
    return _single(simulate_X_batch(spec, n, time_grid, stream, 1))


def simulate_X_conditioned(spec: EnvironmentSpec, n: int, time_grid: Sequence[float],
                           stream: SeededStream, engine: Optional[ExactEngine] = None) -> PathSample:
    """One path of X conditioned on X_{A(n)} > 0."""
    return _single(simulate_X_conditioned_batch(spec, n, time_grid, stream, 1, engine))


def simulate_Y(spec: EnvironmentSpec, n: int, time_grid: Sequence[float], stream: SeededStream) -> PathSample:
    """One path of Y started from 0."""
    return _single(simulate_Y_batch(spec, n, time_grid, stream, 1))
