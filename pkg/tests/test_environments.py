import math

import numpy as np
import pytest

from rwdre import (ModelError, deterministic_relaxation, independent_refresh, measure_coupling_decay, simulate_env,
                   simulate_env_coupled, weak_glauber)
from rwdre.environments import decay_integral, default_decay_grid, phi_weight
from rwdre.stats import estimate


def test_invalid_parameters_rejected():
    with pytest.raises(ModelError):
        independent_refresh(r=0.0)
    with pytest.raises(ModelError):
        deterministic_relaxation(kappa=-1.0)
    with pytest.raises(ModelError):
        weak_glauber(beta_int=-0.1)
    with pytest.raises(ModelError):
        independent_refresh(nu_p=1.5)


def test_time_zero_returns_init():
    m = independent_refresh(L=16)
    init = np.arange(16) % 2
    assert np.array_equal(simulate_env(m, init, 1.0, 0).at(0.0).values, init)


def test_relaxation_closed_form():
    m = deterministic_relaxation(1.0, 0.0, L=8)
    conf = simulate_env(m, np.ones(8), 1.0, 0).at(math.log(2))
    assert np.allclose(conf.values, 0.5, atol=1e-12)


def test_refresh_survival_mean():
    m = independent_refresh(1.0, 0.5, L=4)
    init = np.ones(4)
    vals = [simulate_env(m, init, 1.0, 0, replica=i).at(1.0).values[0] for i in range(4000)]
    e = estimate(vals)
    assert e.within(0.5 + 0.5 * math.exp(-1))


def test_trajectory_queries_replay_consistently():
    m = weak_glauber(1.0, 0.1, L=16)
    tr = simulate_env(m, np.zeros(16), 2.0, 3)
    late = tr.at(1.5).values.copy()
    tr.at(0.2)
    assert np.array_equal(tr.at(1.5).values, late)


def test_identical_coupled_inits_stay_identical():
    m = weak_glauber(1.0, 0.1, L=16)
    init = np.random.default_rng(0).integers(0, 2, 16).astype(float)
    tr = simulate_env_coupled(m, (init, init), 3.0, 1)
    for t in (0.5, 1.5, 3.0):
        assert tr.discrepancy(t).sum() == 0.0


def test_refresh_discrepancy_does_not_spread():
    m = independent_refresh(1.0, 0.5, L=16)
    a = np.zeros(16)
    b = a.copy()
    b[0] = 1.0
    for rep in range(50):
        tr = simulate_env_coupled(m, (a, b), 3.0, 2, replica=rep)
        for t in (0.5, 2.0):
            assert tr.discrepancy(t)[1:].sum() == 0.0


def test_coupled_geometry_mismatch_rejected():
    m = independent_refresh(L=16)
    with pytest.raises(ModelError):
        simulate_env_coupled(m, (np.zeros(16), np.zeros(8)), 1.0, 0)


def test_relaxation_decay_exact():
    m = deterministic_relaxation(2.0, 0.3, L=32)
    curve = measure_coupling_decay(m, replicas=10)
    assert max(abs(y - math.exp(-2 * t)) for t, y in zip(curve.t, curve.mean)) < 1e-10


def test_refresh_decay_statistical():
    m = independent_refresh(1.0, 0.5, L=32)
    curve = measure_coupling_decay(m, replicas=2000, seed=1)
    z = [abs(y - math.exp(-t)) / max(s, 1e-12) for t, y, s in zip(curve.t, curve.mean, curve.se) if s > 0]
    assert sum(v > 3.5 for v in z) <= 2
    assert abs(curve.integral_td - 1.0) <= 4 * curve.integral_td_se
    assert curve.certified


def test_glauber_free_case_decays_at_twice_rate():
    m = weak_glauber(1.0, 0.0, L=32)
    curve = measure_coupling_decay(m, replicas=1500, seed=2)
    mid = len(curve.t) // 2
    assert abs(curve.mean[mid] - math.exp(-2 * curve.t[mid])) <= 4 * curve.se[mid] + 1e-12


def test_decay_grid_and_weights():
    g = default_decay_grid(independent_refresh(2.0))
    assert len(g) == 64 and g[0] == 0.0 and g[-1] == pytest.approx(2.25)
    assert phi_weight(("exp", 0.0))(5.0) == 1.0
    assert phi_weight(("poly", 2.0), 2.0)(2.0) == 4.0
    with pytest.raises(ValueError):
        phi_weight(("log", 1.0))


def test_decay_integral_closed_form():
    C, cert = decay_integral(independent_refresh(1.0), 2.2)
    assert cert and C == pytest.approx(3.2)
