"""Empirical distributions, total variation and exact joint laws."""
from __future__ import annotations

import logging
import math
from collections import Counter
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .core.series import TruncatedSeries
from .errors import SeriesError

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-6
# Mass an initial law may keep above the joint-law state cap
CAP_TOLERANCE = 1e-9

PmfLike = Union[TruncatedSeries, Sequence[float], np.ndarray]


class EmpiricalDistribution(BaseModel):
    """State -> count table of a Monte Carlo sample."""

    counts: Dict[int, int] = Field(default_factory=dict)
    total: int = Field(0, ge=0)
    overflow_count: int = Field(0, ge=0)

    @model_validator(mode='after')
    def validate_total(self) -> 'EmpiricalDistribution':
        """Counts and overflow must add up to the sample size."""
        if sum(self.counts.values()) + self.overflow_count != self.total:
            raise ValueError('sum of counts plus overflow must equal total')
        if any(state < 0 or count < 0 for state, count in self.counts.items()):
            raise ValueError('states and counts must be nonnegative')
        return self

    @classmethod
    def from_samples(cls, samples, overflow_count: int = 0) -> "EmpiricalDistribution":
        values, counts = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
        table = {int(v): int(c) for v, c in zip(values, counts)}
        return cls(counts=table, total=int(counts.sum()) + overflow_count,
                   overflow_count=overflow_count)

    @property
    def accepted(self) -> int:
        """Samples that were not discarded."""
        return self.total - self.overflow_count

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        """Combine two samples; commutative and associative."""
        merged = Counter(self.counts)
        merged.update(other.counts)
        return EmpiricalDistribution(
            counts=dict(sorted(merged.items())),
            total=self.total + other.total,
            overflow_count=self.overflow_count + other.overflow_count,
        )

    def frequencies(self) -> Dict[int, float]:
        if self.accepted == 0:
            return {}
        return {state: count / self.accepted for state, count in sorted(self.counts.items())}

    def mean(self) -> float:
        if self.accepted == 0:
            return float('nan')
        return sum(state * count for state, count in self.counts.items()) / self.accepted

    def pmf_vector(self, cap: int) -> np.ndarray:
        """Frequencies of states 0..cap, states above cap pooled in entry cap+1."""
        out = np.zeros(cap + 2)
        for state, freq in self.frequencies().items():
            out[min(state, cap + 1)] += freq
        return out


class JointEmpirical(BaseModel):
    """Counts of state tuples observed on a fixed time grid."""

    times: Tuple[float, ...]
    counts: Dict[Tuple[int, ...], int] = Field(default_factory=dict)
    total: int = Field(0, ge=0)
    overflow_count: int = Field(0, ge=0)

    @model_validator(mode='after')
    def validate_total(self) -> 'JointEmpirical':
        """Counts and overflow must add up to the sample size."""
        if sum(self.counts.values()) + self.overflow_count != self.total:
            raise ValueError('sum of counts plus overflow must equal total')
        if any(len(key) != len(self.times) for key in self.counts):
            raise ValueError('every state tuple must match the time grid')
        return self

    @classmethod
    def from_states(cls, times: Sequence[float], states: np.ndarray,
                    overflow_count: int = 0) -> "JointEmpirical":
        states = np.asarray(states, dtype=np.int64).reshape(-1, len(times))
        rows, counts = np.unique(states, axis=0, return_counts=True)
        table = {tuple(int(v) for v in row): int(c) for row, c in zip(rows, counts)}
        return cls(times=tuple(times), counts=table,
                   total=int(counts.sum()) + overflow_count, overflow_count=overflow_count)

    @property
    def accepted(self) -> int:
        return self.total - self.overflow_count

    def merge(self, other: "JointEmpirical") -> "JointEmpirical":
        if self.times != other.times:
            raise ValueError('cannot merge joint samples on different grids')
        merged = Counter(self.counts)
        merged.update(other.counts)
        return JointEmpirical(times=self.times, counts=dict(sorted(merged.items())),
                              total=self.total + other.total,
                              overflow_count=self.overflow_count + other.overflow_count)

    def to_array(self, cap: int) -> np.ndarray:
        """Joint frequencies on {0..cap, >cap}^T."""
        out = np.zeros((cap + 2,) * len(self.times))
        if self.accepted == 0:
            return out
        for key, count in self.counts.items():
            out[tuple(min(v, cap + 1) for v in key)] += count / self.accepted
        return out


def as_pmf(p: PmfLike) -> np.ndarray:
    """Vector form of a pmf; a TruncatedSeries contributes its tail as one more state."""
    if isinstance(p, TruncatedSeries):
        return p.pmf_vector()
    return np.asarray(p, dtype=float).ravel()


def total_variation(p: PmfLike, q: PmfLike) -> float:
    """``1/2 sum |p - q|`` after padding to a common length.

    Raises:
        SeriesError: If either input is not normalized within 1e-6
    """
    a, b = as_pmf(p), as_pmf(q)
    for name, vec in (('p', a), ('q', b)):
        if abs(math.fsum(vec) - 1.0) > NORMALIZATION_TOLERANCE:
            raise SeriesError(f"{name} is not normalized (sum {math.fsum(vec):.9f})")
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def tv_confidence_radius(total: int, support_size: int, delta: float = 0.01) -> float:
    """Radius r with P(TV(empirical, true) > r) <= delta, approximately.

    ``sqrt(support/(2 total))`` bounds the expected TV of the empirical
    measure; ``log(1/delta)/total`` is the union slack.
    """
    if total < 1:
        raise ValueError(f"sample size must be >= 1, got {total}")
    radius = math.sqrt(support_size / (2.0 * total)) + math.log(1.0 / delta) / total
    return min(1.0, radius)


def kernel_matrix(row: Callable[[int], PmfLike], cap: int) -> np.ndarray:
    """Square matrix ``K[x, y] = row(x)[y]`` for x, y in 0..cap."""
    out = np.zeros((cap + 1, cap + 1))
    for x in range(cap + 1):
        law = row(x)
        vec = law.coeffs if isinstance(law, TruncatedSeries) else np.asarray(law, dtype=float).ravel()
        k = min(cap + 1, vec.size)
        out[x, :k] = vec[:k]
    return out


def joint_pmf_from_kernels(initial: PmfLike, kernels: List[np.ndarray], cap: int) -> np.ndarray:
    """Exact joint law on {0..cap, >cap}^T from an initial pmf and transition matrices.

    Kernel ``i`` maps the state at grid time ``i`` to grid time ``i+1``;
    mass leaving 0..cap is pooled in the absorbing state ``cap+1``.

    Raises:
        ValueError: If the initial law puts more than 1e-9 above the cap
    """
    init = initial.coeffs if isinstance(initial, TruncatedSeries) else np.asarray(initial, dtype=float)
    kept = init[:cap + 1]
    beyond = 1.0 - math.fsum(kept)
    if beyond > CAP_TOLERANCE:
        raise ValueError(f"initial support exceeds cap {cap} (mass {beyond:.3e} above it)")
    joint = np.zeros(cap + 2)
    joint[:kept.size] = kept
    joint[cap + 1] = max(0.0, beyond)
    for kernel in kernels:
        extended = np.zeros((cap + 2, cap + 2))
        block = np.asarray(kernel, dtype=float)[:cap + 1, :cap + 1]
        extended[:block.shape[0], :block.shape[1]] = block
        extended[:cap + 1, cap + 1] = np.clip(1.0 - extended[:cap + 1, :cap + 1].sum(axis=1), 0.0, None)
        extended[cap + 1, cap + 1] = 1.0
        joint = joint[..., :, None] * extended
    return joint


def marginalize(joint: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Sum a joint array over every axis not listed in ``keep``."""
    drop = tuple(axis for axis in range(joint.ndim) if axis not in keep)
    return joint.sum(axis=drop) if drop else joint
