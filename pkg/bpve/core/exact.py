"""Exact laws of X_n and Y_n through generating-function composition.

The composition chain runs backward: starting from ``f_{n,n}(s) = s`` it
applies ``f_{l-1,n} = f_l(f_{l,n})`` for ``l = n, n-1, ...`` and, when
immigration is present, accumulates ``g_{l-1,n} = h_l(f_{l,n}) g_{l,n}``.
Segments between checkpoints are cached and glued with

    f_{j,n} = f_{j,k} o f_{k,n},    g_{j,n} = g_{j,k}(f_{k,n}) * g_{k,n}.
"""
from __future__ import annotations

import logging
import math
from collections import OrderedDict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..config import get_config
from ..errors import ExtinctionError, HorizonExhaustedError
from .environment import (
    EnvironmentSpec,
    cumulative_mean,
    immigration_gf,
    mean,
    offspring_gf,
    offspring_params,
    scaling_A,
    shape_function,
)
from .series import (
    TruncatedSeries,
    compose,
    default_order,
    factorial_moment,
    lf_apply,
    lf_eval,
    multiply,
    power,
)

logger = logging.getLogger(__name__)

Segment = Tuple[int, int]


def scaled_generation(spec: EnvironmentSpec, n: int, t: float) -> int:
    """Generation A(floor(n t))."""
    scale = math.floor(n * t)
    if scale < 1:
        raise ValueError(f"n*t = {n * t} is below 1; A is undefined there")
    return scaling_A(spec, scale)


def scaled_checkpoints(spec: EnvironmentSpec, n: int, times: Iterable[float]) -> List[int]:
    """Generation 0 followed by A(n t_i) for every grid time, sorted."""
    return sorted({0, *(scaled_generation(spec, n, t) for t in times)})


class SegmentCache:
    """Least-recently-used store of chain segments keyed by ``(j, n)``."""

    def __init__(self, maxsize: int):
        if maxsize < 1:
            raise ValueError(f"cache size must be positive, got {maxsize}")
        self.maxsize = maxsize
        self._entries: OrderedDict[Segment, TruncatedSeries] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: Segment) -> bool:
        return key in self._entries

    def get(self, key: Segment) -> Optional[TruncatedSeries]:
        value = self._entries.get(key)
        if value is not None:
            self._entries.move_to_end(key)
        return value

    def put(self, key: Segment, value: TruncatedSeries) -> None:
        self._entries[key] = value
        self._entries.move_to_end(key)
        while len(self._entries) > self.maxsize:
            self._entries.popitem(last=False)


class CompositionChain:
    """Cached f_{j,n} and g_{j,n} series for one environment."""

    def __init__(self, spec: EnvironmentSpec, order: Optional[int] = None,
                 checkpoints: Sequence[int] = (), horizon_cap: Optional[int] = None,
                 cache_size: Optional[int] = None):
        settings = get_config()
        self.spec = spec
        self.order = default_order() if order is None else order
        self.checkpoints = sorted(set(checkpoints))
        self.horizon_cap = settings.HORIZON_CAP if horizon_cap is None else horizon_cap
        size = settings.SEGMENT_CACHE_SIZE if cache_size is None else cache_size
        self._offspring = SegmentCache(size)
        self._immigration = SegmentCache(size)

    def _step(self, generation: int, inner: TruncatedSeries) -> TruncatedSeries:
        params = offspring_params(self.spec, generation)
        if params.a == 1.0:
            return inner
        return lf_apply(params, inner)

    def sweep(self, n: int, stops: Iterable[int],
              with_immigration: bool = False) -> Dict[int, Tuple[TruncatedSeries, TruncatedSeries]]:
        """One backward pass from ``n`` caching f_{k,n} (and g_{k,n}) for every stop.

        Returns the recorded ``(f_{k,n}, g_{k,n})`` pairs by stop.
        """
        if n > self.horizon_cap:
            raise HorizonExhaustedError(f"chain end {n} exceeds horizon cap {self.horizon_cap}")
        stops = {k for k in stops if 0 <= k <= n}
        recorded: Dict[int, Tuple[TruncatedSeries, TruncatedSeries]] = {}
        if not stops:
            return recorded
        lowest = min(stops)
        current = TruncatedSeries.identity(self.order)
        product = TruncatedSeries.constant_one(self.order)
        immigrate = with_immigration and self.spec.has_immigration

        def record(k: int) -> None:
            recorded[k] = (current, product)
            self._offspring.put((k, n), current)
            if immigrate:
                self._immigration.put((k, n), product)

        if n in stops:
            record(n)
        for generation in range(n, lowest, -1):
            if immigrate and mean(self.spec, generation) < 1.0:
                arrivals = compose(immigration_gf(self.spec, generation, self.order), current)
                product = multiply(product, arrivals)
            current = self._step(generation, current)
            if generation - 1 in stops:
                record(generation - 1)
        logger.debug(f"Backward sweep from {n} down to {lowest} cached {len(stops)} stops")
        return recorded

    def _split(self, j: int, n: int) -> Optional[int]:
        if j not in self.checkpoints or n not in self.checkpoints:
            return None
        inner = [c for c in self.checkpoints if j < c < n]
        return inner[-1] if inner else None

    def _stops(self, j: int, n: int) -> List[int]:
        # checkpoints passed on the way down are cached by the same sweep
        return [j, *(c for c in self.checkpoints if j < c < n)]

    def segment(self, j: int, n: int) -> TruncatedSeries:
        """f_{j,n}, glued from cached checkpoint segments when possible."""
        if not 0 <= j <= n:
            raise ValueError(f"need 0 <= j <= n, got j={j}, n={n}")
        key = (j, n)
        cached = self._offspring.get(key)
        if cached is not None:
            return cached
        k = self._split(j, n)
        if k is None:
            return self.sweep(n, self._stops(j, n))[j][0]
        value = compose(self.segment(j, k), self.segment(k, n))
        self._offspring.put(key, value)
        return value

    def immigration_segment(self, j: int, n: int) -> TruncatedSeries:
        """g_{j,n}(s) = E[s^{Y_n} | Y_j = 0]."""
        if not 0 <= j <= n:
            raise ValueError(f"need 0 <= j <= n, got j={j}, n={n}")
        if not self.spec.has_immigration:
            return TruncatedSeries.constant_one(self.order)
        key = (j, n)
        cached = self._immigration.get(key)
        if cached is not None:
            return cached
        k = self._split(j, n)
        if k is None:
            return self.sweep(n, self._stops(j, n), with_immigration=True)[j][1]
        head = compose(self.immigration_segment(j, k), self.segment(k, n))
        value = multiply(head, self.immigration_segment(k, n))
        self._immigration.put(key, value)
        return value


class ExactEngine:
    """Exact marginal and transition laws of the discrete-time processes."""

    def __init__(self, spec: EnvironmentSpec, order: Optional[int] = None,
                 checkpoints: Sequence[int] = ()):
        self.spec = spec
        self.chain = CompositionChain(spec, order, checkpoints)

    @property
    def order(self) -> int:
        return self.chain.order

    def generation(self, n: int, t: float = 1.0) -> int:
        """A(floor(n t))."""
        return scaled_generation(self.spec, n, t)

    def marginal_pmf_X(self, n: int) -> TruncatedSeries:
        """Law of X_n with X_0 = 1 (coefficients of f_{0,n})."""
        if n == 0:
            return TruncatedSeries.identity(self.order)
        return self.chain.segment(0, n)

    def survival_probability(self, n: int) -> float:
        """P(X_n > 0)."""
        return 1.0 - float(self.marginal_pmf_X(n).coeffs[0])

    def conditional_pmf_survival(self, n: int) -> TruncatedSeries:
        """Law of X_n given X_n > 0.

        Raises:
            ExtinctionError: If X_n = 0 almost surely
        """
        marginal = self.marginal_pmf_X(n)
        alive = 1.0 - float(marginal.coeffs[0])
        if alive <= 0.0:
            raise ExtinctionError(f"X_{n} = 0 with probability 1")
        coeffs = marginal.coeffs.copy()
        coeffs[0] = 0.0
        return TruncatedSeries(coeffs / alive)

    def transition_pmf_X(self, j: int, n: int, x: int) -> TruncatedSeries:
        """Law of X_n given X_j = x."""
        return power(self.chain.segment(j, n), x)

    def marginal_pmf_Y(self, n: int) -> TruncatedSeries:
        """Law of Y_n with Y_0 = 0 (coefficients of g_{0,n})."""
        if n == 0 or not self.spec.has_immigration:
            return TruncatedSeries.constant_one(self.order)
        return self.chain.immigration_segment(0, n)

    def transition_pmf_Y(self, j: int, n: int, y: int) -> TruncatedSeries:
        """Law of Y_n given Y_j = y: ``g_{j,n} (f_{j,n})^y``."""
        arrivals = self.chain.immigration_segment(j, n)
        return multiply(arrivals, power(self.chain.segment(j, n), y))

    def conditional_mean_X(self, j: int, n: int) -> float:
        """E[X_n | X_j > 0] = f_{0,n} / P(X_j > 0) for j <= n."""
        if j > n:
            raise ValueError(f"need j <= n, got j={j}, n={n}")
        alive = self.survival_probability(j)
        if alive <= 0.0:
            raise ExtinctionError(f"X_{j} = 0 with probability 1")
        return cumulative_mean(self.spec, 0, n) / alive

    def mean_Y(self, n: int) -> float:
        """E[Y_n]."""
        return factorial_moment(self.marginal_pmf_Y(n), 1)

    def survival_ratio(self, j: int, n: int) -> float:
        """P(X_n > 0) / P(X_j > 0)."""
        alive = self.survival_probability(j)
        if alive <= 0.0:
            raise ExtinctionError(f"X_{j} = 0 with probability 1")
        return self.survival_probability(n) / alive

    def shape_identity_residual(self, j: int, n: int, s_values: Sequence[float]) -> float:
        """Largest gap in the telescoping identity of the shape function along f_{j,n}.

        Compares ``1/(1 - f_{j,n}(s)) - 1/(f_{j,n}bar (1 - s))`` with
        ``sum_{k=j+1}^{n} phi_k(f_{k,n}(s)) / f_{j,k-1}bar``.
        """
        if not 0 <= j < n:
            raise ValueError(f"need 0 <= j < n, got j={j}, n={n}")
        worst = 0.0
        for s in s_values:
            # values[k] = f_{k,n}(s)
            values = {n: float(s)}
            for k in range(n, j, -1):
                values[k - 1] = lf_eval(offspring_params(self.spec, k), values[k])
            lhs = 1.0 / (1.0 - values[j]) - 1.0 / (cumulative_mean(self.spec, j, n) * (1.0 - s))
            rhs = math.fsum(
                shape_function(offspring_gf(self.spec, k, self.order), values[k]) / cumulative_mean(self.spec, j, k - 1)
                for k in range(j + 1, n + 1)
            )
            worst = max(worst, abs(lhs - rhs))
        return worst
