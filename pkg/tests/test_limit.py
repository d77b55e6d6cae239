"""Continuous-time limit process tests."""
import math

import numpy as np
import pytest
from pydantic import ValidationError

import bpve.sim.limit as limit_module
from bpve.core.environment import EnvironmentSpec, ImmigrationAtom, ImmigrationFamily
from bpve.core.series import evaluate, lf_gf
from bpve.errors import ConfigurationError, GridError, RejectionExhaustedError
from bpve.sim.discrete import PathBatch
from bpve.sim.limit import (
    LimitSpec,
    W_transition_gf,
    W_transition_pmf,
    bd_transition_gf,
    conditioned_kernel,
    entrance_law,
    entrance_law_limit,
    generator_a,
    generator_b,
    kernel_small_time_limit,
    log_fY,
    quasi_stationary_pmf,
    reverse_marginals,
    reversed_kernel,
    sample_U_conditioned,
    sample_U_conditioned_batch,
    sample_W_batch,
    sample_Z_batch,
    simulate_W,
    simulate_Z,
    stationary_fY,
    survival_from_geom,
)
from bpve.sim.streams import SeededStream
from bpve.stats import total_variation


def test_limit_rates(limit_spec):
    """Test p, q and the event rates for nu = 2."""
    assert limit_spec.p == pytest.approx(0.5)
    assert limit_spec.q == pytest.approx(0.5)
    assert limit_spec.alpha_rate == 3.0
    assert limit_spec.birth_rate == 1.0
    assert limit_spec.death_rate == 2.0
    assert limit_spec.offspring_pmf() == pytest.approx([2 / 3, 0.0, 1 / 3])
    assert not limit_spec.has_immigration


def test_immigration_law_from_lambdas():
    """Test beta and h for lambda = (1.5, 0.5)."""
    spec = LimitSpec(nu=2.0, lambdas=(1.5, 0.5))

    assert spec.beta_rate == pytest.approx(1.0)
    assert spec.immigration_pmf() == pytest.approx([0.0, 0.5, 0.5])


def test_invalid_lambdas_rejected():
    """Test lambdas that give no probability law are refused."""
    with pytest.raises(ValidationError):
        LimitSpec(nu=2.0, lambdas=(0.5, 1.0))
    with pytest.raises(ValidationError):
        LimitSpec(nu=2.0, lambdas=(-1.0,))


def test_from_environment():
    """Test lambdas are read off the immigration atoms."""
    env = EnvironmentSpec(
        nu=2.0,
        immigration_family=ImmigrationFamily.CATEGORICAL_SCALED,
        immigration_support=(ImmigrationAtom(value=1, weight=0.5), ImmigrationAtom(value=2, weight=0.5)),
    )

    assert LimitSpec.from_environment(env).lambdas == pytest.approx((1.5, 0.5))


def test_bd_transition_gf(limit_spec):
    """Test F(s, t) against its closed form and at the boundaries."""
    t = 0.7
    decay = math.exp(-t)
    expected = 1.0 - decay / (1.0 + (1.0 - decay))

    assert bd_transition_gf(limit_spec, 0.0, t) == pytest.approx(expected)
    assert bd_transition_gf(limit_spec, 1.0, t) == pytest.approx(1.0)
    assert bd_transition_gf(limit_spec, 0.3, 0.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        bd_transition_gf(limit_spec, 0.3, -1.0)


def test_entrance_law_is_a_pmf(limit_spec):
    """Test g_t sums to one and g_1 is Geom(p)."""
    for t in (0.1, 0.5, 1.0):
        assert entrance_law(limit_spec, t, 256).coeffs.sum() == pytest.approx(1.0, abs=1e-12)
    geom = quasi_stationary_pmf(limit_spec, 256)
    assert np.abs(entrance_law(limit_spec, 1.0, 256).coeffs - geom.coeffs).max() < 1e-15
    with pytest.raises(GridError):
        entrance_law(limit_spec, 1.5)


def test_entrance_law_small_time_limit(limit_spec):
    """Test g_t tends to x p^2 q^(x-1) as t -> 0."""
    small = entrance_law(limit_spec, 1e-5, 256)

    assert total_variation(small, entrance_law_limit(limit_spec, 256)) < 1e-3


def test_survival_from_geom(limit_spec):
    """Test P(U(1) > 0 | U(eps) ~ Geom(p)) = eps."""
    for eps in (0.1, 0.25, 0.5, 1.0):
        assert survival_from_geom(limit_spec, eps) == pytest.approx(eps, abs=1e-12)


def test_conditioned_kernel_rows(limit_spec):
    """Test kernel rows are pmfs on {1, 2, ...}."""
    for x0 in (1, 3, 7):
        k = conditioned_kernel(limit_spec, 0.5, 0.8, x0, 256)
        assert k.coeffs[0] == 0.0
        assert k.coeffs.sum() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(GridError):
        conditioned_kernel(limit_spec, 0.8, 0.5, 1)
    with pytest.raises(ValueError):
        conditioned_kernel(limit_spec, 0.5, 0.8, 0)


def test_conditioned_kernel_nu_zero_single_individual():
    """Test with nu = 0 one individual conditioned to survive stays single."""
    k = conditioned_kernel(LimitSpec(nu=0.0), 0.3, 0.9, 1, 16)

    assert k.coeffs[1] == pytest.approx(1.0)


def test_entrance_law_propagates(limit_spec):
    """Test g_u pushed through the conditioned kernel gives g_t."""
    u, t = 0.4, 0.9
    start = entrance_law(limit_spec, u, 128).coeffs
    pushed = sum(start[x] * conditioned_kernel(limit_spec, u, t, x, 128).coeffs
                 for x in range(1, 80))

    assert np.abs(pushed - entrance_law(limit_spec, t, 128).coeffs).max() < 1e-10


def test_kernel_small_time_limit(limit_spec):
    """Test the conditioned kernel from ratio*t to t converges as t -> 0."""
    t, ratio, x0 = 1e-6, 0.5, 2
    s = np.array([0.2, 0.5, 0.8])
    kernel = conditioned_kernel(limit_spec, ratio * t, t, x0, 256)

    assert evaluate(kernel, s) == pytest.approx(kernel_small_time_limit(limit_spec, ratio, x0, s), abs=1e-4)


def test_generators(limit_spec):
    """Test a and b vanish at s = 1 and match their polynomials."""
    spec = LimitSpec(nu=2.0, lambdas=(1.5, 0.5))

    assert generator_a(limit_spec, 1.0) == pytest.approx(0.0)
    assert generator_a(limit_spec, 0.0) == pytest.approx(2.0)
    assert generator_b(spec, 1.0) == pytest.approx(0.0)
    assert generator_b(spec, 0.0) == pytest.approx(-1.5 + 0.5)


def test_stationary_poisson_for_nu_zero():
    """Test f_Y is Poisson(lambda_1) when nu = 0."""
    f = stationary_fY(LimitSpec(nu=0.0, lambdas=(1.0,)), 40)
    expected = [math.exp(-1.0) / math.factorial(k) for k in range(41)]

    assert f.coeffs == pytest.approx(expected, abs=1e-14)


def test_stationary_negative_binomial():
    """Test f_Y(s) = (1 + nu/2 (1 - s))^(-2 lambda/nu); for nu = 2, lambda = 1 it is Geom on {0, 1, ...}."""
    f = stationary_fY(LimitSpec(nu=2.0, lambdas=(1.0,)), 64)

    assert f.coeffs[:10] == pytest.approx([0.5 ** (k + 1) for k in range(10)], abs=1e-14)


def test_log_fY_matches_series():
    """Test the closed-form log f_Y against the coefficient series."""
    spec = LimitSpec(nu=2.0, lambdas=(1.5, 0.5))
    f = stationary_fY(spec, 256)
    s = np.linspace(0.0, 0.95, 12)

    assert np.abs(np.log(evaluate(f, s)) - log_fY(spec, s)).max() < 1e-10


def test_stationary_requires_immigration(limit_spec):
    """Test f_Y is undefined without lambdas."""
    with pytest.raises(ConfigurationError):
        stationary_fY(limit_spec)


def test_W_transition_keeps_f_Y_stationary():
    """Test sum_y f_Y[y] G_y(., t) = f_Y."""
    spec = LimitSpec(nu=2.0, lambdas=(1.0,))
    f = stationary_fY(spec, 96)
    mixed = sum(f.coeffs[y] * W_transition_pmf(spec, y, 0.6, 96).coeffs for y in range(97))

    assert np.abs(mixed - f.coeffs).max() < 1e-8


def test_W_transition_gf_matches_pmf():
    """Test the closed-form G_y agrees with its coefficients."""
    spec = LimitSpec(nu=2.0, lambdas=(1.5, 0.5))
    s = np.linspace(0.0, 0.9, 7)
    pmf = W_transition_pmf(spec, 3, 0.4, 256)

    assert np.abs(evaluate(pmf, s) - W_transition_gf(spec, 3, s, 0.4)).max() < 1e-10


def test_Z_batch_mean(limit_spec):
    """Test E[Z(t) | Z(0) = 1] = exp(-t)."""
    rng = np.random.default_rng(0)
    states = sample_Z_batch(limit_spec, np.ones(40_000, dtype=np.int64), [0.0, math.log(2.0)], rng)

    assert states.shape == (40_000, 1)
    assert states.mean() == pytest.approx(0.5, abs=0.03)


def test_Z_batch_law(limit_spec):
    """Test the Gillespie marginal against h_{exp(-t)}."""
    rng = np.random.default_rng(1)
    t = 0.8
    states = sample_Z_batch(limit_spec, np.ones(40_000, dtype=np.int64), [0.0, t], rng)[:, 0]
    empirical = np.bincount(states, minlength=257)[:257] / states.size
    empirical = np.append(empirical, 1.0 - empirical.sum())

    assert total_variation(empirical, lf_gf(limit_spec.transition_params(t), 256)) < 0.02


def test_single_trajectories(limit_spec):
    """Test jump chains move by one and stay in the window."""
    path = simulate_Z(limit_spec, 5, 0.0, 2.0, SeededStream(scenario_seed=3))

    assert np.all(np.diff(path.times) > 0)
    assert np.all((path.times > 0.0) & (path.times <= 2.0))
    assert np.all(np.abs(np.diff(np.concatenate(([5], path.states)))) == 1)
    assert path.state_at(0.0) == 5

    immigrating = LimitSpec(nu=2.0, lambdas=(1.0,))
    w = simulate_W(immigrating, 0, 0.0, 1.0, SeededStream(scenario_seed=3))
    assert w.final_state >= 0


def test_W_batch_counts_events():
    """Test immigration events occur at rate beta."""
    spec = LimitSpec(nu=2.0, lambdas=(1.0,))
    counts = np.zeros(3, dtype=np.int64)
    sample_W_batch(spec, np.zeros(20_000, dtype=np.int64), [0.0, 1.0], np.random.default_rng(2), counts)

    assert counts[0] == pytest.approx(20_000, rel=0.05)


def test_U_rejection_sampler(limit_spec):
    """Test accepted paths are alive up to 1 and acceptance is about eps."""
    batch, proposals = sample_U_conditioned_batch(limit_spec, 0.5, [0.5, 1.0], [2.0],
                                                  SeededStream(scenario_seed=6), 20_000)

    assert proposals == 20_000
    assert batch.times == (0.5, 1.0, 2.0)
    assert (batch.states[:, :2] > 0).all()
    assert batch.replicates / proposals == pytest.approx(0.5, abs=0.02)
    empirical = batch.marginal(1.0).pmf_vector(64)
    geom = quasi_stationary_pmf(limit_spec, 64)
    assert total_variation(empirical, geom.pmf_vector()) < 0.04


def test_U_single_path(limit_spec):
    """Test one accepted path of U is a conditioned sample alive on [eps, 1]."""
    path = sample_U_conditioned(limit_spec, 0.5, [0.5, 1.0], [2.0], SeededStream(scenario_seed=9))

    assert path.conditioned
    assert path.times == [0.5, 1.0, 2.0]
    assert min(path.states[:2]) > 0


def test_U_single_path_gives_up(limit_spec, monkeypatch):
    """Test the single-path sampler raises once every round rejects all proposals."""
    rounds = []

    def reject_all(spec, eps, time_grid, extended_grid, stream, size):
        rounds.append(stream.replicate_index)
        empty = np.zeros((0, 3), dtype=np.int64)
        return PathBatch(times=(0.5, 1.0, 2.0), states=empty, n=1, conditioned=True), size

    monkeypatch.setattr(limit_module, 'sample_U_conditioned_batch', reject_all)

    with pytest.raises(RejectionExhaustedError):
        sample_U_conditioned(limit_spec, 0.5, [0.5, 1.0], [2.0], SeededStream(scenario_seed=9), max_attempts=3)
    assert rounds == [0, 1, 2]


def test_reverse_marginals():
    """Test re-indexing by 1/t on an inversion-closed grid."""
    batch = PathBatch(times=(0.5, 1.0, 2.0), states=np.array([[1, 2, 3]]), n=10)
    reversed_batch = reverse_marginals(batch)

    assert reversed_batch.times == (0.5, 1.0, 2.0)
    assert reversed_batch.states.tolist() == [[3, 2, 1]]
    with pytest.raises(GridError):
        reverse_marginals(PathBatch(times=(0.5, 1.0), states=np.array([[1, 1]]), n=10))


def test_reversed_kernel_pushes_entrance_laws(limit_spec):
    """Test g_{1-u} through the reversed kernel gives g_{1-t}."""
    matrix = reversed_kernel(limit_spec, 0.1, 0.6, 48, 128)
    start = entrance_law(limit_spec, 0.9, 128).coeffs[:49]
    target = entrance_law(limit_spec, 0.4, 128).coeffs[:49]

    assert np.abs(start @ matrix - target).max() < 1e-8
    with pytest.raises(GridError):
        reversed_kernel(limit_spec, 0.6, 0.1, 8)
