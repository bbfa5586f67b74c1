import math

import pytest

from rwdre import (ConfigError, Constant, Projection, RateFamily, continuity_bound_check, estimate_mu_ep,
                   phi_weighted_integral, semigroup_difference_integral)

from conftest import running_rates

F = Projection((0,))


def test_mu_ep_env_independent_walker_sees_marginal(refresh_model):
    alpha = RateFamily.constant({1: 1.0, -1: 1.0})
    res = estimate_mu_ep(refresh_model, alpha, F, 5.0, 65.0, 30, 0)
    assert res.value.within(0.5)
    assert res.epoch_value.within(0.5)


def test_mu_ep_constant(refresh_model, running_alpha):
    res = estimate_mu_ep(refresh_model, running_alpha, Constant(2.5), 5.0, 25.0, 4, 0)
    assert res.value.mean == pytest.approx(2.5) and res.value.se == pytest.approx(0.0, abs=1e-12)


def test_mu_ep_estimators_agree(refresh_model, running_alpha):
    res = estimate_mu_ep(refresh_model, running_alpha, F, 10.0, 110.0, 40, 1)
    assert abs(res.value.mean - res.epoch_value.mean) <= 3 * math.hypot(res.value.se, res.epoch_value.se)


def test_mu_ep_argument_checks(refresh_model, running_alpha):
    with pytest.raises(ConfigError):
        estimate_mu_ep(refresh_model, running_alpha, F, 10.0, 5.0, 2, 0)
    with pytest.raises(ConfigError):
        estimate_mu_ep(refresh_model, running_alpha, F, 0.0, 5.0, 2, 0, n_batches=5)


def test_pure_environment_integral_is_inverse_rate(refresh_model):
    frozen = RateFamily.constant({1: 0.0})
    res = semigroup_difference_integral(refresh_model, frozen, F, horizon=10.0, replicas=1500, seed=2)
    assert abs(res.integral.mean - 1.0) <= 3 * res.integral.se
    assert res.bound == pytest.approx(1.0)
    assert res.flag == ""


def test_identical_starts_give_zero(refresh_model, running_alpha):
    pair = {refresh_model.geometry.index((0,)): (1.0, 1.0)}
    res = semigroup_difference_integral(refresh_model, running_alpha, F, pair, horizon=5.0, replicas=50, seed=0)
    assert res.integral.mean == 0.0


def test_constant_observable_gives_zero(refresh_model, running_alpha):
    res = semigroup_difference_integral(refresh_model, running_alpha, Constant(1.0), horizon=5.0, replicas=50)
    assert res.integral.mean == 0.0


def test_zero_growth_weight_is_unweighted(refresh_model, running_alpha):
    a = semigroup_difference_integral(refresh_model, running_alpha, F, horizon=5.0, replicas=100, seed=3)
    b = semigroup_difference_integral(refresh_model, running_alpha, F, horizon=5.0, replicas=100, seed=3,
                                      phi=("exp", 0.0))
    assert a.integral.mean == pytest.approx(b.integral.mean, rel=1e-12)


def test_exponential_weight_closed_form(refresh_model):
    frozen = RateFamily.constant({1: 0.0})
    res = phi_weighted_integral(refresh_model, frozen, F, ("exp", 1.0), 2.0, horizon=14.0, replicas=3000, seed=4)
    assert res.flag in ("", "inconclusive")
    assert abs(res.integral.mean - 2.0) <= 3 * res.integral.se + 0.05


def test_exponential_weight_divergent(refresh_model):
    frozen = RateFamily.constant({1: 0.0})
    res = phi_weighted_integral(refresh_model, frozen, F, ("exp", 1.0), 0.5, horizon=8.0, replicas=1000, seed=5)
    assert res.flag == "divergent"


def test_weighted_integral_rejects_bad_scale(refresh_model, running_alpha):
    with pytest.raises(ConfigError):
        phi_weighted_integral(refresh_model, running_alpha, F, ("exp", 1.0), 0.0)


def test_continuity_same_rates(refresh_model, running_alpha):
    res = continuity_bound_check(refresh_model, running_alpha, running_alpha, F, 5.0, 50.0, 8, 0)
    assert res.lhs.mean == 0.0 and res.rhs == 0.0 and res.holds


def test_continuity_env_independent(refresh_model):
    a = RateFamily.constant({1: 1.0, -1: 1.0})
    b = RateFamily.constant({1: 1.5, -1: 1.0})
    res = continuity_bound_check(refresh_model, a, b, F, 5.0, 105.0, 30, 1)
    assert res.lhs.mean <= 3 * res.lhs.se
    assert res.rhs == pytest.approx(0.5)


def test_continuity_running_example(refresh_model):
    res = continuity_bound_check(refresh_model, running_rates(0.2), running_rates(0.25), F, 10.0, 110.0, 30, 2)
    assert res.holds and res.label == "certified"
