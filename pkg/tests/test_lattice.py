import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwdre import (BINARY, UNIT, Affine, Configuration, Constant, ModelError, Product, Projection, RateFamily,
                   TorusGeometry, osc_norm, rate_difference_norm, rate_norms, triple_norm)
from rwdre.lattice import lipschitz_constant

from conftest import running_rates


def test_projection_lipschitz_at_origin_and_outside():
    f = Projection((0,))
    assert lipschitz_constant(f, (0,)) == 1.0
    assert lipschitz_constant(f, (1,)) == 0.0


def test_product_lipschitz_enumerated():
    f = Product([(0, 0), (1, 0)])
    assert lipschitz_constant(f, (0, 0)) == 1.0
    assert triple_norm(f) == 2.0


def test_triple_norm_examples():
    assert triple_norm(Projection((0,))) == 1.0
    assert triple_norm(Constant(3.0, 1)) == 0.0
    assert triple_norm(Affine(0.0, {(0,): 1.0, (1,): 0.5})) == pytest.approx(1.5)


def test_oscillation_of_projection():
    assert osc_norm(Projection((0,))) == 1.0
    assert osc_norm(Constant(2.0)) == 0.0


def test_rate_norms_running_example():
    n = rate_norms(running_rates(0.2))
    assert n.alpha_p == pytest.approx(2.2)
    assert n.triple_alpha == pytest.approx(0.4)
    assert n.triple_alpha_1 == pytest.approx(0.4)


def test_rate_norms_poisson():
    alpha = RateFamily.constant({1: 1.0})
    n = rate_norms(alpha)
    assert (n.alpha_p, n.triple_alpha) == (1.0, 0.0)
    assert rate_norms(alpha, 2.0).alpha_p == 1.0
    assert alpha.is_env_independent


def test_rate_norms_rejects_small_p():
    with pytest.raises(ModelError):
        rate_norms(RateFamily.constant({1: 1.0}), 0.5)


def test_negative_rate_rejected():
    with pytest.raises(ModelError):
        RateFamily.affine([{"z": [1], "base": 0.1, "slope": -0.5}])


def test_gamma_spread_running_example():
    alpha = running_rates(0.2)
    assert alpha.gamma_plus[0] == pytest.approx(1.2)
    assert alpha.gamma_minus[0] == pytest.approx(-1.0)
    assert alpha.gamma_spread == pytest.approx(2.2)


def test_rate_difference_norm():
    assert rate_difference_norm(running_rates(0.2), running_rates(0.2)) == 0.0
    assert rate_difference_norm(running_rates(0.2), running_rates(0.25)) == pytest.approx(0.1)


def test_configuration_shape_checked():
    g = TorusGeometry(1, 8)
    with pytest.raises(ModelError):
        Configuration(g, np.zeros(7))


def test_shift_moves_values():
    g = TorusGeometry(1, 8)
    c = Configuration(g, np.arange(8.0))
    assert c.shift((3,))[(0,)] == 5.0
    assert c.shift((3,))[(6,)] == 3.0
    # seen from a walker at 3
    assert c.shift((-3,))[(0,)] == 3.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(2, 6), st.data())
def test_index_coords_roundtrip(d, L, data):
    g = TorusGeometry(d, L)
    idx = data.draw(st.integers(0, g.n_sites - 1))
    assert g.index(g.coords(idx)) == idx


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=3))
def test_affine_triple_norm_is_sum_of_abs_coefficients(coeffs):
    f = Affine(1.0, {(k,): c for k, c in enumerate(coeffs)})
    assert triple_norm(f) == pytest.approx(sum(abs(c) for c in coeffs), abs=1e-12)


def test_unit_space_grid_norm():
    f = Projection((0,))
    assert triple_norm(f, UNIT) == pytest.approx(1.0)
    assert BINARY.rho(0.0, 1.0) == 1.0 and UNIT.rho(0.2, 0.5) == pytest.approx(0.3)


def test_drift_of_running_example():
    g = running_rates(0.2).drift()
    assert g.evaluate([1.0]) == pytest.approx(0.4)
    assert g.evaluate([0.0]) == pytest.approx(0.0)
    assert math.isclose(running_rates(0.2).max_jump, 1.0)
