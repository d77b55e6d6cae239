"""Environment sequences, scaling and condition diagnostics tests."""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from bpve.core.environment import (
    EnvironmentSpec,
    ImmigrationAtom,
    ImmigrationFamily,
    OffspringFamily,
    ScalingTable,
    asymptotic_scaling,
    condition_diagnostics,
    cumulative_mean,
    immigration_gf,
    immigration_lambdas,
    mean,
    means,
    offspring_gf,
    offspring_params,
    offspring_second_moment,
    scaling_A,
    scaling_constant,
    shape_function,
)
from bpve.core.series import LinearFractionalParams, factorial_moment, lf_gf
from bpve.errors import ConfigurationError, HorizonExhaustedError


def test_means_start_after_alpha(lf_spec):
    """Test f_n = 1 before the start index and 1 - alpha/n after."""
    assert lf_spec.start == 2
    assert mean(lf_spec, 1) == 1.0
    assert mean(lf_spec, 4) == pytest.approx(0.75)
    assert means(lf_spec, 4) == pytest.approx([1.0, 0.5, 2 / 3, 0.75])


def test_start_index_must_exceed_alpha():
    """Test an environment whose first decaying mean is not positive is rejected."""
    with pytest.raises(ValidationError):
        EnvironmentSpec(alpha=2.0, nu=1.0, start_index=2)


def test_bernoulli_forces_nu_zero():
    """Test Bernoulli offspring with nu > 0 is rejected."""
    with pytest.raises(ValidationError):
        EnvironmentSpec(offspring_family=OffspringFamily.BERNOULLI, nu=1.0)


def test_immigration_mass_must_fit():
    """Test c_k (1 - f_n) may not exceed 1 in total."""
    with pytest.raises(ValidationError):
        EnvironmentSpec(
            immigration_family=ImmigrationFamily.CATEGORICAL_SCALED,
            immigration_support=(ImmigrationAtom(value=1, weight=3.0),),
        )


def test_offspring_law_moments(lf_spec):
    """Test the offspring law has mean f_n and f_n''(1) = nu (1 - f_n)."""
    f = offspring_gf(lf_spec, 10, 256)

    assert factorial_moment(f, 1) == pytest.approx(0.9, abs=1e-10)
    assert factorial_moment(f, 2) == pytest.approx(offspring_second_moment(lf_spec, 10), rel=1e-8)
    assert offspring_second_moment(lf_spec, 10) == pytest.approx(0.2)


def test_bernoulli_offspring(bernoulli_spec):
    """Test Bernoulli offspring puts mass on {0, 1} only."""
    params = offspring_params(bernoulli_spec, 5)
    f = offspring_gf(bernoulli_spec, 5, 16)

    assert params == LinearFractionalParams(a=0.8, nu=0.0)
    assert f.coeffs[:3] == pytest.approx([0.2, 0.8, 0.0])


def test_immigration_gf(immigration_spec):
    """Test P(eps_n = 1) = c_1 (1 - f_n)."""
    g = immigration_gf(immigration_spec, 4, 16)

    assert g.coeffs[:3] == pytest.approx([0.75, 0.25, 0.0])


def test_immigration_gf_requires_immigration(lf_spec):
    """Test asking for immigration on a plain environment fails."""
    with pytest.raises(ConfigurationError):
        immigration_gf(lf_spec, 4)


def test_immigration_lambdas():
    """Test lambda_j = sum_k c_k C(k, j)."""
    spec = EnvironmentSpec(
        nu=2.0,
        immigration_family=ImmigrationFamily.CATEGORICAL_SCALED,
        immigration_support=(ImmigrationAtom(value=1, weight=0.5), ImmigrationAtom(value=2, weight=0.5)),
    )

    assert immigration_lambdas(spec) == pytest.approx([1.5, 0.5])


def test_cumulative_mean(lf_spec):
    """Test f_{j,n} is the product of means with f_{n,n} = 1."""
    assert cumulative_mean(lf_spec, 0, 10) == pytest.approx(0.1)
    assert cumulative_mean(lf_spec, 5, 10) == pytest.approx(0.5)
    assert cumulative_mean(lf_spec, 7, 7) == 1.0
    with pytest.raises(ValueError):
        cumulative_mean(lf_spec, 8, 7)


def test_scaling_A_for_alpha_one(lf_spec):
    """Test f_{0,m} = 1/m gives A(n) = n."""
    for n in (1, 2, 100, 12345):
        assert scaling_A(lf_spec, n) == n


def test_scaling_A_is_monotone():
    """Test A is nondecreasing and lands f_{0,A(n)} in the sandwich."""
    spec = EnvironmentSpec(alpha=0.7, nu=1.0)
    table = ScalingTable(spec)
    previous = 0
    for n in (1, 3, 10, 50, 400, 3000):
        generation = table(n)
        assert generation >= previous
        scaled = n * table.cumulative(generation)
        assert table.min_mean(generation) <= scaled <= 1.0 + 1e-9
        previous = generation


def test_scaling_horizon_cap():
    """Test the search stops at the configured cap."""
    table = ScalingTable(EnvironmentSpec(alpha=1.0, nu=0.0, offspring_family=OffspringFamily.BERNOULLI),
                         horizon=16, cap=64)
    with pytest.raises(HorizonExhaustedError):
        table(1000)


def test_asymptotic_scaling(lf_spec):
    """Test the closed-form sequence matches A(n) when alpha = 1 and s = 2."""
    assert scaling_constant(lf_spec) == pytest.approx(1.0)
    assert asymptotic_scaling(lf_spec, 5000) == 5000


def test_shape_function_of_linear_fractional_is_constant():
    """Test phi(s) = c/a at every s for h_a."""
    params = LinearFractionalParams(a=0.5, nu=2.0)
    f = lf_gf(params, 256)
    expected = params.c / params.a

    for s in (0.0, 0.3, 0.9, 1.0):
        assert shape_function(f, s) == pytest.approx(expected, rel=1e-9)


def test_condition_diagnostics(lf_spec):
    """Test the Toeplitz sums approach nu/(2k) and the harmonic sum grows like log."""
    report = condition_diagnostics(lf_spec, 10_000, 256)

    assert report.toeplitz_sums[1] == pytest.approx(1.0, rel=0.05)
    assert report.toeplitz_sums[2] == pytest.approx(0.5, rel=0.05)
    assert report.shape_sup_ratio < 0.05
    assert abs(report.harmonic_sum - math.log(10_000)) < 2.0


def test_condition_diagnostics_bernoulli(bernoulli_spec):
    """Test Bernoulli environments have vanishing Toeplitz sums."""
    report = condition_diagnostics(bernoulli_spec, 1000, 64)

    assert report.toeplitz_sums[1] == 0.0
    assert report.toeplitz_targets[1] == 0.0
    assert np.isclose(report.shape_sup_ratio, 0.0)
