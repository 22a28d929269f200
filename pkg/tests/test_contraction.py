import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from recagg import (
    DiscountedMax,
    DiscountedMin,
    DiscountedSum,
    Mean,
    Statistic,
    Variance,
    aggregate,
    check_contraction,
)
from recagg.aggregation import AggregationError
from recagg.contraction import euclidean_distance, pullback_distance, table_distance


def _pairs(rng, n):
    out = []
    while len(out) < n:
        a, b = rng.randint(-100, 100), rng.randint(-100, 100)
        if a != b:
            out.append((Statistic((float(a),)), Statistic((float(b),))))
    return out


def test_pullback_distance_basics():
    g = DiscountedSum(0.9)
    a, b = aggregate(g, [1.0]), aggregate(g, [4.0])
    assert pullback_distance(g, a, b) == 3.0
    assert pullback_distance(g, a, a) == 0.0
    m = Mean()
    assert pullback_distance(m, m.init, m.init) == 0.0
    assert pullback_distance(m, m.init, aggregate(m, [1.0])) == math.inf


def test_pullback_is_only_a_premetric():
    # different statistics, same post: distance zero
    v = Variance()
    a, b = aggregate(v, [0.0, 2.0]), aggregate(v, [5.0, 7.0])
    assert a != b
    assert pullback_distance(v, a, b) == 0.0
    assert euclidean_distance(v, a, b) > 0.0


def test_table_distance_is_sup():
    g = DiscountedSum(1.0)
    a = {0: Statistic((1.0,)), 1: Statistic((5.0,))}
    b = {0: Statistic((2.0,)), 1: Statistic((1.0,))}
    assert table_distance(g, a, b) == 4.0
    with pytest.raises(KeyError):
        table_distance(g, a, {0: a[0]})


@pytest.mark.parametrize("cls", [DiscountedSum, DiscountedMin, DiscountedMax])
@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_discounted_updates_contract(cls, gamma):
    rng = random.Random(7)
    rep = check_contraction(cls(gamma), [rng.randint(-50, 50) for _ in range(5)],
                            _pairs(rng, 500), threshold=gamma)
    assert rep.max_ratio <= gamma + 1e-12
    assert rep.contractive
    assert rep.sampled_pairs == 2500


def test_undiscounted_sum_is_an_isometry():
    rng = random.Random(3)
    rep = check_contraction(DiscountedSum(1.0), [0.0, 2.5], _pairs(rng, 200), threshold=1.0)
    assert rep.max_ratio == 1.0


def test_violations_are_reported():
    # mean shrinks distances between long lists less than between short ones
    m = Mean()
    pairs = [(aggregate(m, [0.0]), aggregate(m, [4.0]))]
    rep = check_contraction(m, [10.0], pairs, threshold=0.1)
    assert rep.max_ratio == pytest.approx(0.5)
    assert not rep.contractive
    assert rep.violating_samples


def test_empty_inputs_rejected():
    g = DiscountedSum(0.5)
    with pytest.raises((ValueError, AggregationError)):
        check_contraction(g, [], [(g.init, g.init)], 1.0)
    with pytest.raises((ValueError, AggregationError)):
        check_contraction(g, [1.0], [], 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(-1000, 1000), st.integers(-1000, 1000),
       st.integers(-1000, 1000))
def test_dmax_lipschitz(gamma, r, a, b):
    g = DiscountedMax(gamma)
    ta, tb = Statistic((float(a),)), Statistic((float(b),))
    after = pullback_distance(g, g.update(float(r), ta), g.update(float(r), tb))
    assert after <= gamma * abs(a - b) + 1e-9
