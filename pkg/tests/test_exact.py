"""Exact engine tests against closed forms."""
import math

import numpy as np
import pytest

from bpve.core.environment import means
from bpve.core.exact import CompositionChain, ExactEngine, SegmentCache, scaled_checkpoints, scaled_generation
from bpve.errors import ExtinctionError
from bpve.core.series import TruncatedSeries, compose


def survival_closed_form(spec, n):
    """1 / (1/f_{0,n} + sum_k c_k / f_{0,k}) for a linear-fractional chain."""
    m = means(spec, n)
    cumulative = np.cumprod(m)
    c = 0.5 * spec.nu * (1.0 - m) / m
    return 1.0 / (1.0 / cumulative[-1] + math.fsum(c / cumulative))


@pytest.fixture
def engine(lf_spec):
    return ExactEngine(lf_spec, 128)


def test_bernoulli_marginal(bernoulli_spec):
    """Test X_n is Bernoulli(f_{0,n}) under Bernoulli offspring."""
    engine = ExactEngine(bernoulli_spec, 16)
    law = engine.marginal_pmf_X(10)

    assert law.coeffs[:3] == pytest.approx([0.9, 0.1, 0.0], abs=1e-12)
    assert engine.survival_probability(10) == pytest.approx(0.1)
    assert engine.conditional_pmf_survival(10).coeffs[1] == pytest.approx(1.0)


def test_survival_matches_linear_fractional_closed_form(engine, lf_spec):
    """Test P(X_n > 0) against the telescoped shape-function formula."""
    for n in (5, 50, 120):
        assert engine.survival_probability(n) == pytest.approx(survival_closed_form(lf_spec, n), rel=1e-10)


def test_marginal_mean(engine):
    """Test E[X_n] = f_{0,n}."""
    assert engine.marginal_pmf_X(40).mean == pytest.approx(1 / 40, rel=1e-9)


def test_marginal_at_zero_is_identity(engine):
    """Test X_0 = 1."""
    assert engine.marginal_pmf_X(0).coeffs[1] == 1.0


def test_segments_glue(lf_spec):
    """Test f_{0,n} glued at checkpoints equals the direct composition."""
    glued = CompositionChain(lf_spec, 64, checkpoints=[0, 10, 30])
    direct = CompositionChain(lf_spec, 64)

    joined = glued.segment(0, 30)
    manual = compose(direct.segment(0, 10), direct.segment(10, 30))

    assert np.abs(joined.coeffs - direct.segment(0, 30).coeffs).max() < 1e-12
    assert np.abs(manual.coeffs - joined.coeffs).max() < 1e-12


def test_transition_is_power_of_segment(engine):
    """Test X_n given X_j = x is the x-fold convolution of f_{j,n}."""
    single = engine.transition_pmf_X(5, 20, 1)
    triple = engine.transition_pmf_X(5, 20, 3)

    assert triple.mean == pytest.approx(3 * single.mean, rel=1e-9)
    assert single.mean == pytest.approx(5 / 20, rel=1e-9)


def test_conditional_mean(engine):
    """Test E[X_n | X_j > 0] = f_{0,n} / P(X_j > 0)."""
    value = engine.conditional_mean_X(25, 50)

    assert value == pytest.approx((1 / 50) / engine.survival_probability(25), rel=1e-12)
    assert engine.survival_ratio(25, 50) == pytest.approx(
        engine.survival_probability(50) / engine.survival_probability(25))


def test_mean_Y(immigration_spec):
    """Test E[Y_n] = sum_k c_1 (1 - f_k) f_{k,n} = (n - 1)/n."""
    engine = ExactEngine(immigration_spec, 128)

    assert engine.mean_Y(30) == pytest.approx(29 / 30, rel=1e-9)


def test_Y_without_immigration_stays_zero(engine):
    """Test Y is degenerate at 0 when nothing immigrates."""
    assert engine.marginal_pmf_Y(25).coeffs[0] == 1.0


def test_transition_Y_from_zero_is_marginal(immigration_spec):
    """Test Y_n given Y_0 = 0 has the law of Y_n."""
    engine = ExactEngine(immigration_spec, 64)

    from_zero = engine.transition_pmf_Y(0, 20, 0)
    marginal = engine.marginal_pmf_Y(20)

    assert np.abs(from_zero.coeffs - marginal.coeffs).max() < 1e-12


def test_shape_identity(engine):
    """Test the telescoping identity along f_{j,n}."""
    assert engine.shape_identity_residual(0, 30, np.linspace(0.0, 0.9, 7)) < 1e-9


def test_scaled_generations(lf_spec):
    """Test A(floor(n t)) and the checkpoint list."""
    assert scaled_generation(lf_spec, 100, 0.5) == 50
    assert scaled_checkpoints(lf_spec, 100, [0.5, 1.0, 2.0]) == [0, 50, 100, 200]
    with pytest.raises(ValueError):
        scaled_generation(lf_spec, 1, 0.5)


def test_transition_total_probability(engine):
    """Test summing X_k over its law given X_j = x recovers the law of X_n."""
    j, k, n, x = 5, 15, 40, 2
    middle = engine.transition_pmf_X(j, k, x)

    total = sum(middle.coeffs[y] * engine.transition_pmf_X(k, n, y).coeffs for y in range(engine.order + 1))

    assert np.abs(total - engine.transition_pmf_X(j, n, x).coeffs).max() < 1e-10


def test_chain_consistency_at_random_triples(lf_spec):
    """Test f_{j,n} = f_{j,k} o f_{k,n} for randomly drawn j < k < n."""
    chain = CompositionChain(lf_spec, 64)
    rng = np.random.default_rng(21)

    for _ in range(6):
        j, k, n = sorted(int(v) for v in rng.choice(120, size=3, replace=False))
        glued = compose(chain.segment(j, k), chain.segment(k, n))
        direct = CompositionChain(lf_spec, 64).segment(j, n)
        assert np.abs(glued.coeffs - direct.coeffs).max() < 1e-12, (j, k, n)


def test_sweep_caches_inner_checkpoints(lf_spec):
    """Test one backward pass also stores the checkpoints it passes."""
    chain = CompositionChain(lf_spec, 64, checkpoints=[0, 10, 30])

    chain.segment(3, 30)

    assert (10, 30) in chain._offspring
    assert (3, 30) in chain._offspring
    assert np.abs(chain.segment(0, 30).coeffs - CompositionChain(lf_spec, 64).segment(0, 30).coeffs).max() < 1e-12


def test_segment_cache_is_bounded(lf_spec):
    """Test the segment caches evict old entries once full."""
    chain = CompositionChain(lf_spec, 32, cache_size=4)

    for n in range(1, 30):
        chain.segment(0, n)

    assert len(chain._offspring) == 4
    assert (0, 29) in chain._offspring
    assert (0, 1) not in chain._offspring
    assert chain.segment(0, 1).coeffs[1] == 1.0


def test_segment_cache_keeps_recent_entries():
    """Test a read refreshes an entry so the least recently used one goes first."""
    cache = SegmentCache(2)
    cache.put((0, 1), TruncatedSeries.identity(4))
    cache.put((0, 2), TruncatedSeries.identity(4))
    cache.get((0, 1))
    cache.put((0, 3), TruncatedSeries.identity(4))

    assert (0, 1) in cache
    assert (0, 2) not in cache
    with pytest.raises(ValueError):
        SegmentCache(0)


def test_conditioning_on_certain_extinction(engine, monkeypatch):
    """Test conditional laws refuse a generation where X is 0 almost surely."""
    monkeypatch.setattr(engine, 'marginal_pmf_X', lambda n: TruncatedSeries.constant_one(engine.order))

    with pytest.raises(ExtinctionError):
        engine.conditional_pmf_survival(10)
    with pytest.raises(ExtinctionError):
        engine.conditional_mean_X(5, 10)
