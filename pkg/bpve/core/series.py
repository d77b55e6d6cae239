"""Truncated probability generating functions.

Every distribution handled by bpve is a ``TruncatedSeries``: the
coefficients of ``s**0 .. s**N`` plus the probability mass sitting above
``N``. Tail mass is tracked and reported, never renormalized away.

Linear-fractional laws ``h_a`` get their own closed forms
(``lf_gf``, ``lf_eval``, ``lf_compose``) and an O(N^2) composition step
(``lf_apply``); generic composition goes through Horner's scheme.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import solve_triangular, toeplitz
from scipy.special import perm

from ..config import get_config
from ..errors import SeriesError

logger = logging.getLogger(__name__)

CLAMP_TOLERANCE = 1e-12
MASS_TOLERANCE = 1e-9

ArrayLike = Union[float, np.ndarray]


def default_order() -> int:
    """Truncation order N from the active configuration."""
    return get_config().TRUNCATION_ORDER


@dataclass(frozen=True)
class TruncatedSeries:
    """Probability generating function truncated at order N.

    ``coeffs[k]`` is P(value = k) for k <= N; ``tail_mass`` is
    P(value > N) and always equals ``1 - sum(coeffs)`` (clamped at 0).
    Instances are immutable and the coefficient array is read-only.
    """

    coeffs: np.ndarray
    tail_mass: float = field(init=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise SeriesError("coefficient vector must be one-dimensional with order >= 1")
        if not np.all(np.isfinite(c)):
            raise SeriesError("coefficient vector contains non-finite values")
        lowest = float(c.min())
        if lowest < -CLAMP_TOLERANCE:
            raise SeriesError(f"negative coefficient {lowest:.3e} below tolerance")
        if float(c.max()) > 1.0 + CLAMP_TOLERANCE:
            raise SeriesError(f"coefficient {float(c.max()):.6f} exceeds 1")
        c = np.clip(c, 0.0, 1.0)
        total = math.fsum(c)
        if total > 1.0 + MASS_TOLERANCE:
            raise SeriesError(f"coefficients sum to {total:.12f} > 1")
        c.setflags(write=False)
        object.__setattr__(self, 'coeffs', c)
        object.__setattr__(self, 'tail_mass', max(0.0, 1.0 - total))

    @property
    def order(self) -> int:
        """Truncation order N."""
        return self.coeffs.size - 1

    @property
    def mean(self) -> float:
        return factorial_moment(self, 1)

    def pmf_vector(self) -> np.ndarray:
        """Coefficients followed by the tail mass as one extra state."""
        return np.append(self.coeffs, self.tail_mass)

    def __call__(self, s: ArrayLike) -> ArrayLike:
        return evaluate(self, s)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self) -> int:
        return hash(self.coeffs.tobytes())

    @classmethod
    def point_mass(cls, value: int, order: Optional[int] = None) -> "TruncatedSeries":
        order = default_order() if order is None else order
        if value < 0 or value > order:
            raise SeriesError(f"point mass at {value} outside 0..{order}")
        out = np.zeros(order + 1)
        out[value] = 1.0
        return cls(out)

    @classmethod
    def identity(cls, order: Optional[int] = None) -> "TruncatedSeries":
        """The g.f. ``s`` (degenerate at 1)."""
        return cls.point_mass(1, order)

    @classmethod
    def constant_one(cls, order: Optional[int] = None) -> "TruncatedSeries":
        """The g.f. ``1`` (degenerate at 0, extinction)."""
        return cls.point_mass(0, order)

    @classmethod
    def bernoulli(cls, p: float, order: Optional[int] = None) -> "TruncatedSeries":
        order = default_order() if order is None else order
        out = np.zeros(order + 1)
        out[0], out[1] = 1.0 - p, p
        return cls(out)


class LinearFractionalParams(BaseModel):
    """Parameters (a, nu) of ``h_a(s) = 1 - a / (1/(1-s) + nu/2 (1-a))``.

    ``a`` is the mean; ``a=1`` is the identity g.f. and ``a=0`` the
    constant 1. With ``nu=0`` the law is Bernoulli(a).
    """

    model_config = ConfigDict(frozen=True)

    a: float = Field(..., ge=0.0, le=1.0, description="Mean of the law")
    nu: float = Field(..., ge=0.0, description="Shape parameter")

    @property
    def c(self) -> float:
        return 0.5 * self.nu * (1.0 - self.a)

    @property
    def ratio(self) -> float:
        """Geometric ratio of the coefficients beyond order 1."""
        return self.c / (1.0 + self.c)


def _check_argument(s: ArrayLike) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise SeriesError(f"argument outside [0, 1]: {s}")
    return arr


def evaluate(f: TruncatedSeries, s: ArrayLike) -> ArrayLike:
    """Evaluate ``sum coeffs[k] s**k`` for ``s`` in [0, 1].

    Args:
        f: Series to evaluate
        s: Scalar or array of arguments

    Returns:
        Value(s) in [0, 1]; ``evaluate(f, 1) == 1 - f.tail_mass``

    Raises:
        SeriesError: If an argument lies outside [0, 1]
    """
    arr = _check_argument(s)
    value = np.polynomial.polynomial.polyval(arr, f.coeffs)
    value = np.clip(value, 0.0, 1.0)
    return float(value) if np.ndim(value) == 0 else value


def compose_coefficients(outer, inner, order: Optional[int] = None) -> np.ndarray:
    """Horner composition ``outer(inner(s))`` on raw coefficient vectors.

    Neither vector needs to be a probability g.f.; the result is cut at
    ``order`` (default: length of ``inner`` minus one).
    """
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    n = inner.size if order is None else order + 1
    nonzero = np.flatnonzero(outer)
    out = np.zeros(n)
    if nonzero.size == 0:
        return out
    degree = int(nonzero[-1])
    out[0] = outer[degree]
    for k in range(degree - 1, -1, -1):
        out = np.convolve(out, inner)[:n]
        out[0] += outer[k]
    if out.size < n:
        out = np.pad(out, (0, n - out.size))
    return out


def compose(f: TruncatedSeries, g: TruncatedSeries) -> TruncatedSeries:
    """Return ``f(g(s))`` truncated at the common order.

    Mass that composition pushes above N ends up in the tail.
    """
    if f.order != g.order:
        raise SeriesError(f"truncation orders differ: {f.order} != {g.order}")
    return TruncatedSeries(compose_coefficients(f.coeffs, g.coeffs))


def _multiply(x: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    return np.convolve(x, y)[:n]


def multiply(f: TruncatedSeries, g: TruncatedSeries) -> TruncatedSeries:
    """G.f. of the sum of independent variables with g.f.'s f and g."""
    if f.order != g.order:
        raise SeriesError(f"truncation orders differ: {f.order} != {g.order}")
    return TruncatedSeries(_multiply(f.coeffs, g.coeffs, f.order + 1))


def power(f: TruncatedSeries, x: int) -> TruncatedSeries:
    """G.f. of the sum of ``x`` independent copies (``f**x``)."""
    if x < 0:
        raise SeriesError(f"power must be nonnegative, got {x}")
    n = f.order + 1
    result = np.zeros(n)
    result[0] = 1.0
    base = f.coeffs.copy()
    while x:
        if x & 1:
            result = _multiply(result, base, n)
        x >>= 1
        if x:
            base = _multiply(base, base, n)
    return TruncatedSeries(result)


def factorial_moment(f: TruncatedSeries, k: int) -> float:
    """``f^{(k)}(1-)`` computed from the coefficients; k=1 is the mean."""
    if k < 1 or k > f.order:
        raise SeriesError(f"factorial moment order {k} outside 1..{f.order}")
    j = np.arange(f.order + 1)
    return float(np.dot(perm(j, k), f.coeffs))


def dilate(f: TruncatedSeries, theta: float) -> np.ndarray:
    """Coefficients of ``f(theta * s)``."""
    return f.coeffs * np.power(theta, np.arange(f.order + 1))


def lf_gf(p: LinearFractionalParams, order: Optional[int] = None) -> TruncatedSeries:
    """Expand ``h_a`` into coefficients.

    ``h_a[0] = 1 - a/(1+c)`` and ``h_a[k] = a/(1+c)^2 * r^(k-1)`` for
    k >= 1, with ``c = nu/2 (1-a)`` and ``r = c/(1+c)``.
    """
    order = default_order() if order is None else order
    c, r = p.c, p.ratio
    out = np.zeros(order + 1)
    out[0] = 1.0 - p.a / (1.0 + c)
    out[1:] = p.a / (1.0 + c) ** 2 * np.power(r, np.arange(order))
    return TruncatedSeries(out)


def lf_eval(p: LinearFractionalParams, s: ArrayLike) -> ArrayLike:
    """Closed-form ``h_a(s)``, exact at ``s = 1``."""
    x = 1.0 - _check_argument(s)
    value = 1.0 - p.a * x / (1.0 + p.c * x)
    return float(value) if np.ndim(value) == 0 else value


def lf_compose(p: LinearFractionalParams, q: LinearFractionalParams) -> LinearFractionalParams:
    """``h_a(h_b(s)) = h_{ab}(s)`` for a shared nu."""
    if not math.isclose(p.nu, q.nu, rel_tol=1e-12, abs_tol=1e-15):
        raise SeriesError(f"nu mismatch: {p.nu} != {q.nu}")
    return LinearFractionalParams(a=p.a * q.a, nu=p.nu)


def lf_apply(p: LinearFractionalParams, g: TruncatedSeries) -> TruncatedSeries:
    """Return ``h_a(g(s))`` with one triangular Toeplitz solve.

    Uses ``1 - h_a(g) = a X / (1 + c X)`` with ``X = 1 - g``.
    """
    x = -g.coeffs.copy()
    x[0] += 1.0
    if p.c == 0.0:
        y = x
    else:
        d = p.c * x
        d[0] += 1.0
        y = solve_triangular(toeplitz(d, np.zeros_like(d)), x, lower=True, check_finite=False)
    out = -p.a * y
    out[0] += 1.0
    return TruncatedSeries(out)


def shift_to_origin(coeffs, order: Optional[int] = None) -> np.ndarray:
    """Re-expand a polynomial in ``(s-1)`` as a polynomial in ``s``."""
    coeffs = np.asarray(coeffs, dtype=float)
    order = coeffs.size - 1 if order is None else order
    shifted = Polynomial(coeffs)(Polynomial([-1.0, 1.0])).coef
    out = np.zeros(order + 1)
    k = min(out.size, shifted.size)
    out[:k] = shifted[:k]
    return out


def series_log(f: TruncatedSeries) -> np.ndarray:
    """Coefficients of ``log f(s)`` up to order N.

    Raises:
        SeriesError: If ``f[0] <= 0``
    """
    c = f.coeffs
    if c[0] <= 0.0:
        raise SeriesError("log of a series requires a positive constant term")
    n = c.size
    derivative = np.zeros(n)
    derivative[:-1] = c[1:] * np.arange(1, n)
    quotient = solve_triangular(toeplitz(c, np.zeros(n)), derivative, lower=True, check_finite=False)
    out = np.zeros(n)
    out[0] = math.log(c[0])
    out[1:] = quotient[:-1] / np.arange(1, n)
    return out


def exp_coefficients(coeffs) -> np.ndarray:
    """Coefficients of ``exp(c(s))`` for a formal series ``c`` in s."""
    c = np.asarray(coeffs, dtype=float)
    n = c.size
    weighted = c * np.arange(n)
    out = np.zeros(n)
    out[0] = math.exp(c[0])
    for k in range(1, n):
        out[k] = np.dot(weighted[1:k + 1], out[k - 1::-1]) / k
    return out


def series_exp(coeffs, center: Literal['zero', 'one'] = 'zero',
               order: Optional[int] = None) -> TruncatedSeries:
    """Exponentiate a log-p.g.f. given as a series in ``s`` or ``(s-1)``.

    Args:
        coeffs: Coefficients of the exponent
        center: ``'zero'`` for a series in s, ``'one'`` for a polynomial in (s-1)
        order: Truncation order of the result (default: length of ``coeffs`` - 1,
            or the configured order for ``center='one'``)

    Returns:
        The exponentiated series

    Raises:
        SeriesError: If the result is not a valid truncated p.g.f.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if center == 'one':
        order = default_order() if order is None else order
        coeffs = shift_to_origin(coeffs, order)
    elif order is not None:
        padded = np.zeros(order + 1)
        k = min(order + 1, coeffs.size)
        padded[:k] = coeffs[:k]
        coeffs = padded
    if coeffs.size < 2:
        coeffs = np.pad(coeffs, (0, 2 - coeffs.size))
    return TruncatedSeries(exp_coefficients(coeffs))
