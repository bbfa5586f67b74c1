import math

import numpy as np
import pytest

from rwdre import Estimate, RandomStream, run_replicas
from rwdre.rng import generator
from rwdre.stats import Welford, agree, batch_means, cumulative_trapezoid, estimate, fit_exponential_tail, trapezoid


def test_streams_reproducible_and_distinct():
    a = RandomStream.from_seed(7, "x", 3)
    b = RandomStream.from_seed(7, "x", 3)
    assert [a.u() for _ in range(5000)] == [b.u() for _ in range(5000)]
    c = RandomStream.from_seed(7, "y", 3)
    d = RandomStream.from_seed(7, "x", 4)
    first = RandomStream.from_seed(7, "x", 3).u()
    assert c.u() != first and d.u() != first


def test_large_seed_accepted():
    assert 0 <= generator(2**64 - 1, "t").random() < 1


def test_exp_with_zero_rate_is_infinite():
    assert RandomStream.from_seed(0).exp(0.0) == math.inf


def _task(i):
    return RandomStream.from_seed(11, "fan", i).u()


def test_run_replicas_order_independent_of_threads():
    assert run_replicas(_task, 40, 1) == run_replicas(_task, 40, 3)


def test_estimate_and_agree():
    e = estimate([1.0, 2.0, 3.0])
    assert e.mean == 2.0 and e.se == pytest.approx(1 / math.sqrt(3))
    assert e.within(2.5, k=1)
    assert agree(Estimate(0.0, 1.0, 10), Estimate(1.0, 1.0, 10))


def test_welford_matches_numpy():
    x = np.random.default_rng(0).normal(size=1000)
    w1, w2 = Welford(), Welford()
    for v in x[:400]:
        w1.push(v)
    for v in x[400:]:
        w2.push(v)
    w = w1.merge(w2)
    assert w.var == pytest.approx(np.var(x, ddof=1))


def test_batch_means_of_iid_series():
    x = np.random.default_rng(1).normal(size=20000)
    b = batch_means(x, 20)
    assert abs(b.mean) < 4 * b.se


def test_trapezoid_and_cumulative():
    t = np.linspace(0, 1, 101)
    assert trapezoid(t, t) == pytest.approx(0.5)
    assert cumulative_trapezoid(t, t)[-1] == pytest.approx(0.5)


def test_exponential_fit_recovers_rate():
    t = np.linspace(0, 5, 50)
    fit = fit_exponential_tail(t, 2 * np.exp(-1.5 * t))
    assert fit.rate == pytest.approx(1.5, rel=1e-6)
    assert fit.tail_integral(5.0) == pytest.approx(2 * math.exp(-7.5) / 1.5, rel=1e-6)
