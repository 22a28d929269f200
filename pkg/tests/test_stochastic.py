import math

import pytest

from recagg import (
    DiscountedMax,
    DiscountedSum,
    Mean,
    StochasticMdp,
    StochasticPolicy,
    Variance,
    exact_aggregate_distribution,
    expectation_gap,
    mc_aggregate_distribution,
    parse_aggregation,
    toy_dag,
)
from recagg.mdp import MdpError, all_policies, evaluate_policy
from recagg.stochastic import (
    HorizonExceeded,
    OutcomeCapExceeded,
    enumerate_outcomes,
    sample_reward_sequences,
    two_step_example,
)


def test_two_step_outcomes():
    smdp, pi = two_step_example()
    outs = sorted(enumerate_outcomes(smdp, pi))
    assert outs == [(0.5, (0.0, 5.0)), (0.5, (10.0, 5.0))]


def test_expectation_gap_max():
    smdp, pi = two_step_example()
    assert expectation_gap(smdp, pi, DiscountedMax(1.0)) == (7.5, 5.0)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 0.9, 1.0])
def test_expectation_gap_vanishes_for_dsum(gamma):
    smdp, pi = two_step_example()
    a, b = expectation_gap(smdp, pi, DiscountedSum(gamma))
    assert a == pytest.approx(b, abs=1e-9)


def test_gap_needs_fixed_horizon():
    with pytest.raises(MdpError, match="fixed-horizon"):
        smdp = StochasticMdp.from_tabular(toy_dag())
        expectation_gap(smdp, StochasticPolicy.uniform(smdp), DiscountedSum(1.0))


def test_exact_distribution():
    smdp, pi = two_step_example()
    d = exact_aggregate_distribution(smdp, pi, Variance())
    assert d.support == (6.25,) and d.weights == (1.0,)
    d = exact_aggregate_distribution(smdp, pi, DiscountedMax(1.0))
    assert d.support == (5.0, 10.0) and d.weights == (0.5, 0.5)
    assert d.mean() == 7.5 and d.std() == 2.5


@pytest.mark.parametrize("spec", ["dmax(1)", "dsum(0.9)", "mean", "range"])
def test_mc_matches_exact(spec):
    smdp, pi = two_step_example()
    agg = parse_aggregation(spec)
    exact = exact_aggregate_distribution(smdp, pi, agg)
    for seed in range(3):
        mc = mc_aggregate_distribution(smdp, pi, agg, 20_000, seed)
        se = max(mc.std() / math.sqrt(20_000), 1e-12)
        assert abs(mc.mean() - exact.mean()) <= 4 * se


def test_dirac_degeneracy():
    # Dirac transitions and a deterministic policy give a point mass at the
    # deterministic evaluation
    mdp = toy_dag()
    smdp = StochasticMdp.from_tabular(mdp)
    for pol in all_policies(mdp):
        sp = StochasticPolicy.from_deterministic(pol)
        for agg in (DiscountedSum(0.9), DiscountedMax(1.0), Mean()):
            want = agg.post(evaluate_policy(mdp, pol, agg)[0])
            d = exact_aggregate_distribution(smdp, sp, agg)
            assert d.support == (want,) and d.weights == (1.0,)
            mc = mc_aggregate_distribution(smdp, sp, agg, 50, seed=1)
            assert mc.support == (want,)


def test_sampling_is_seeded():
    smdp = StochasticMdp.from_tabular(toy_dag())
    pi = StochasticPolicy.uniform(smdp)
    a = sample_reward_sequences(smdp, pi, 500, seed=42)
    b = sample_reward_sequences(smdp, pi, 500, seed=42)
    assert a == b
    assert sum(a[0].values()) == 500 and a[1] == 0


def _coin_loop():
    # state 0 keeps looping with probability 1/2
    trans = {(0, "go"): ((0, 0.5), (1, 0.5))}
    return StochasticMdp(2, (("go",), ()), trans, {(0, "go"): 1.0}, (False, True), 0)


def test_horizon_handling():
    smdp = _coin_loop()
    pi = StochasticPolicy.uniform(smdp)
    with pytest.raises(HorizonExceeded, match=r"\[0, 0, 0"):
        enumerate_outcomes(smdp, pi, horizon=3)
    d = mc_aggregate_distribution(smdp, pi, DiscountedSum(1.0), 4000, seed=0, horizon=3)
    assert d.excluded > 0
    assert set(d.support) <= {1.0, 2.0, 3.0}


def test_outcome_cap():
    fan = {(0, "go"): tuple((s, 1 / 6) for s in range(1, 7))}
    smdp = StochasticMdp(7, (("go",),) + ((),) * 6, fan, {(0, "go"): 0.0},
                         (False,) + (True,) * 6, 0)
    pi = StochasticPolicy.uniform(smdp)
    assert len(enumerate_outcomes(smdp, pi, cap=6)) == 6
    with pytest.raises(OutcomeCapExceeded):
        enumerate_outcomes(smdp, pi, cap=5)


def test_validation():
    with pytest.raises(MdpError):
        StochasticMdp(2, (("go",), ()), {(0, "go"): ((1, 0.6),)}, {(0, "go"): 0.0},
                      (False, True), 0)
    smdp, _ = two_step_example()
    with pytest.raises(MdpError):
        StochasticPolicy(((("low", 0.7), ("high", 0.7)), (("go", 1.0),), ())).validate(smdp)
