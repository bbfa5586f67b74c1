import math

import numpy as np
import pytest

from rwdre import FiniteChain, enumerate_paths, semigroup, sequence_probability
from rwdre.ctmc import distribution
from rwdre.rng import generator


@pytest.fixture
def two():
    return FiniteChain.two_state()


def test_invalid_rates_rejected():
    with pytest.raises(Exception):
        FiniteChain([[-1.0, 0.5], [1.0, -1.0]])
    with pytest.raises(Exception):
        FiniteChain([[1.0, -1.0], [1.0, -1.0]])


def test_semigroup_at_zero_is_identity(two):
    f = np.array([0.3, 0.9])
    assert np.array_equal(semigroup(two, 0.0, f), f)


def test_negative_time_rejected(two):
    with pytest.raises(ValueError):
        semigroup(two, -1.0, [0.0, 1.0])


def test_two_state_closed_form(two):
    t = math.log(2) / 2
    assert semigroup(two, t, [0.0, 1.0])[0] == pytest.approx(0.25, abs=1e-12)


def test_semigroup_property_random_chains():
    rng = generator(3, "test/semigroup")
    for _ in range(20):
        chain = FiniteChain.random(6, rng)
        f = rng.uniform(size=6)
        s, t = rng.uniform(0, 2, size=2)
        lhs = semigroup(chain, s + t, f)
        rhs = semigroup(chain, s, semigroup(chain, t, f))
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_distribution_rows_are_probabilities():
    chain = FiniteChain.birth(10)
    p = distribution(chain, 2.0, 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert p[3] == pytest.approx(math.exp(-2) * 8 / 6, abs=1e-12)


def test_no_jump_path_probability(two):
    ps = enumerate_paths(two, 0, 1.0, 0)
    assert ps.mass == pytest.approx(math.exp(-1), abs=1e-12)
    assert sequence_probability(two, (0,), 1.0) == pytest.approx(math.exp(-1), abs=1e-14)


def test_enumeration_mass_and_tail(two):
    # uniformization rate 1 on the two-state chain, so rate*T = 2 at T = 2
    ps = enumerate_paths(two, 0, 2.0, 12)
    assert ps.mass + ps.tail_mass >= 1 - 1e-9
    assert ps.tail_mass < 1e-5


def test_enumeration_matches_semigroup():
    rng = generator(5, "test/enumeration")
    for _ in range(10):
        chain = FiniteChain.random(4, rng)
        f = rng.uniform(size=4)
        T = 4.0 / chain.lam
        e = enumerate_paths(chain, 0, T, 40).expect(f)
        assert abs(e.value - semigroup(chain, T, f)[0]) < 1e-9
        assert e.lower - 1e-12 <= semigroup(chain, T, f)[0] <= e.upper + 1e-12


def test_explicit_sequences_sum_to_enumerated_mass(two):
    ps = enumerate_paths(two, 0, 1.0, 6)
    total = sum(p for _, p in ps.sequences())
    assert total == pytest.approx(ps.mass, abs=1e-12)


def test_sequence_probability_two_jumps(two):
    # exit rate 1 in both states: P(exactly two jumps by T) = T^2 e^{-T} / 2
    T = 1.5
    assert sequence_probability(two, (0, 1, 0), T) == pytest.approx(T**2 * math.exp(-T) / 2, rel=1e-12)


def test_large_horizon_recursion_is_stable():
    chain = FiniteChain.birth(5, 3.0)
    p = sequence_probability(chain, (0, 1, 2), 5.0)
    assert 0 <= p < 1 and math.isfinite(p)
