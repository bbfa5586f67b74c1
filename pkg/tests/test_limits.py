import pytest

from rwdre import (ModelError, Projection, RateFamily, clt_report, concentration_tail_check, corrector_variance,
                   einstein_relation_check, estimate_speed, independent_refresh, stationary_expectation,
                   transience_recurrence_diagnostic, walker_constants, weak_glauber)
from rwdre.limits import assembled_constants, fast_environment_trend, moment_constant

from conftest import running_rates


def test_stationary_expectation_exact_for_refresh():
    m = independent_refresh(1.0, 0.3, L=16)
    e = stationary_expectation(m, Projection((0,)))
    assert e.mean == pytest.approx(0.3) and e.se == 0.0


def test_poisson_speed_exact(refresh_model, poisson_alpha):
    rep = estimate_speed(refresh_model, poisson_alpha, 50.0, 400, 0)
    assert rep.v_hat[0].within(1.0)
    assert rep.formula_speed[0].mean == 1.0 and rep.formula_speed[0].se == 0.0
    assert rep.consistent


def test_biased_constant_walker_speed(refresh_model):
    alpha = RateFamily.constant({1: 0.7, -1: 0.3})
    rep = estimate_speed(refresh_model, alpha, 50.0, 400, 1)
    assert rep.v_hat[0].within(0.4)


def test_running_example_speed_small_run(refresh_model, running_alpha):
    rep = estimate_speed(refresh_model, running_alpha, 100.0, 300, 2, formula_replicas=20)
    assert abs(rep.v_hat[0].mean - 0.2) <= 0.04 + 3 * rep.v_hat[0].se
    assert rep.consistent


def test_einstein_rhs_and_labels(refresh_model):
    def fam(scale):
        return lambda e: running_rates(scale * e)

    holds = einstein_relation_check(refresh_model, fam(2.0), [0.05], horizon=40.0, replicas=300, seed=0)
    assert holds.rhs_condition == pytest.approx(2.0, abs=1e-9)
    assert holds.sigma0_sq == 2.0 and holds.label == "ER holds"
    fails = einstein_relation_check(refresh_model, fam(1.0), [0.05], horizon=40.0, replicas=300, seed=0)
    assert fails.rhs_condition == pytest.approx(1.0, abs=1e-9)
    assert fails.label == "ER fails"
    assert fails.derivative.within(1.0, 4.0)


def test_einstein_requires_env_independent_base(refresh_model):
    with pytest.raises(ModelError):
        einstein_relation_check(refresh_model, lambda e: running_rates(0.2 + e), [0.1], horizon=5.0, replicas=5)


def test_unperturbed_speed_is_zero(refresh_model):
    rep = estimate_speed(refresh_model, running_rates(0.0), 20.0, 50, 3)
    assert rep.formula_speed[0].mean == 0.0


def test_walker_constants_env_independent(refresh_model, poisson_alpha):
    c = walker_constants(refresh_model, poisson_alpha)
    assert c.p_alpha == 1.0 and c.C_a == pytest.approx(1.0) and c.certified
    c1, c2, offset = assembled_constants(refresh_model, poisson_alpha, c)
    assert offset == 0.0 and c1 == pytest.approx(4.0)
    value, terms = moment_constant(poisson_alpha, c, 2.0)
    assert value > 0 and set(terms) == {"A1", "A2", "A3"}


def test_concentration_poisson_small(refresh_model, poisson_alpha):
    rep = concentration_tail_check(refresh_model, poisson_alpha, [0, 5, 10, 20], 100.0, 500, 0)
    assert rep.all_dominated
    zero = [r for r in rep.rows if r.r == 0 and r.kind == "assembled"][0]
    assert zero.bound == 1.0
    bennett = [r for r in rep.rows if r.kind == "bennett"]
    assert len(bennett) == 4 and all(r.dominated for r in bennett)


def test_poisson_clt_formula_exact(refresh_model, poisson_alpha):
    rep = clt_report(refresh_model, poisson_alpha, horizon=50.0, replicas=600, seed=0)
    assert rep.sigma2_formula.mean == 1.0 and rep.sigma2_formula.se == 0.0
    assert rep.sigma2_empirical.within(1.0)
    assert rep.ks_pvalue > 0.001


def test_env_independent_corrector(refresh_model):
    alpha = RateFamily.constant({1: 0.7, -1: 0.4})
    assert corrector_variance(refresh_model, alpha).mean == pytest.approx(1.1)


def test_corrector_unavailable_for_glauber(running_alpha):
    with pytest.raises(ModelError):
        corrector_variance(weak_glauber(1.0, 0.1, L=64), running_alpha, outer=2, inner=2)


def test_corrector_running_example_small(refresh_model, running_alpha):
    est = corrector_variance(refresh_model, running_alpha, outer=20, inner=8, seed=1)
    # jump part alone is about the mean rate 2, corrections are of order eps
    assert 1.5 < est.mean < 2.5 and est.se > 0


def test_transience_regimes(refresh_model, poisson_alpha):
    rep = transience_recurrence_diagnostic(refresh_model, poisson_alpha, [10, 20, 40], 100, 0)
    assert rep.regime == "transient"
    assert all(e.mean == 0.0 for e in rep.mean_returns)
    sym = transience_recurrence_diagnostic(refresh_model, RateFamily.constant({1: 1.0, -1: 1.0}),
                                           [25, 100, 400], 200, 1)
    assert sym.regime == "recurrent"
    assert sym.mean_returns[-1].mean > sym.mean_returns[0].mean


def test_fast_environment_trend_runs(refresh_model, running_alpha):
    out = fast_environment_trend(refresh_model, running_alpha, (1, 8), horizon=20.0, replicas=200)
    assert out["target"] == pytest.approx(2.0)
    assert len(out["sigma2"]) == 2
