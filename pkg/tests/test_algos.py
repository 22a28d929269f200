import random

import pytest
from hypothesis import given, settings, strategies as st

from recagg import (
    DiscountedMax,
    DiscountedMin,
    DiscountedSum,
    Mean,
    QLearnConfig,
    Range,
    Statistic,
    TopK,
    aggregate,
    catalog,
    critic_targets,
    dsum_gae_closed_form,
    evaluate_policy,
    fold,
    generate,
    grid_world,
    parse_aggregation,
    q_learning,
    recursive_gae,
    toy_dag,
    twin_min_target,
    value_iteration,
)
from recagg.aggregation import AggregationError, CapabilityError
from recagg.algos import greedy_start_value
from recagg.mdp import all_policies, greedy_policy

from _gen import random_acyclic_mdp, random_policy


@pytest.mark.parametrize("spec", ["dsum(0.9)", "dmax(0.9)", "dmin(1)", "mean"])
def test_q_learning_matches_value_iteration_on_toy_dag(spec):
    mdp, agg = toy_dag(), parse_aggregation(spec)
    want = agg.post(value_iteration(mdp, agg).table[0])
    for seed in range(3):
        q = q_learning(mdp, agg, QLearnConfig(total_steps=10_000, seed=seed))
        assert greedy_start_value(mdp, q) == pytest.approx(want, abs=1e-6)


def test_q_learning_on_grid():
    mdp = grid_world()
    for spec in ("dsum(0.9)", "dmax(0.9)", "min"):
        agg = parse_aggregation(spec)
        want = agg.post(value_iteration(mdp, agg).table[0])
        q = q_learning(mdp, agg, QLearnConfig(seed=1))
        assert greedy_start_value(mdp, q) == pytest.approx(want, abs=1e-6)


def test_q_learning_seed_determinism():
    mdp, agg = grid_world(), DiscountedSum(0.9)
    a = q_learning(mdp, agg, QLearnConfig(total_steps=3000, seed=5))
    b = q_learning(mdp, agg, QLearnConfig(total_steps=3000, seed=5))
    c = q_learning(mdp, agg, QLearnConfig(total_steps=3000, seed=6))
    assert a.entries == b.entries
    assert a.entries != c.entries


def test_q_learning_minimize_range():
    mdp, agg = toy_dag(), Range()
    q = q_learning(mdp, agg, QLearnConfig(seed=0), minimize=True)
    assert greedy_policy(mdp, q, minimize=True)(0) == "blue"


def test_q_learning_rejects_topk_and_bad_config():
    with pytest.raises(CapabilityError):
        q_learning(toy_dag(), TopK(2), QLearnConfig())
    for kw in (dict(learning_rate=0.0), dict(epsilon=1.5), dict(total_steps=-1)):
        with pytest.raises(ValueError):
            QLearnConfig(**kw)


def test_q_learning_horizon_cap_restarts():
    # a lone self-loop never terminates; the cap keeps episodes bounded
    from recagg import TabularMdp
    mdp = TabularMdp(2, (("stay", "exit"), ()), {(0, "stay"): 0, (0, "exit"): 1},
                     {(0, "stay"): -1.0, (0, "exit"): 2.0}, (False, True), 0)
    q = q_learning(mdp, DiscountedSum(0.5), QLearnConfig(total_steps=2000, horizon_cap=3))
    assert greedy_policy(mdp, q)(0) == "exit"


# -- advantages ---------------------------------------------------------------


def _episode(rng, n):
    rewards = [rng.uniform(-10, 10) for _ in range(n)]
    values = [rng.uniform(-10, 10) for _ in range(n + 1)]
    return rewards, values


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.booleans(),
       st.randoms(use_true_random=False))
def test_gae_matches_closed_form(n, gamma, lam, normalized, rnd):
    rewards, values = _episode(rnd, n)
    stats = [Statistic((v,)) for v in values]
    a = recursive_gae(rewards, stats, DiscountedSum(gamma), lam, normalized)
    b = dsum_gae_closed_form(rewards, values, gamma, lam, normalized=normalized)
    assert a.advantages == pytest.approx(b.advantages, abs=1e-9)


def test_gae_lambda_zero_is_one_step_td():
    rewards, values = [1.0, 2.0], [0.5, 1.0, 0.0]
    adv = recursive_gae(rewards, [Statistic((v,)) for v in values], DiscountedSum(0.9), 0.0)
    assert adv.advantages == pytest.approx((1.0 + 0.9 * 1.0 - 0.5, 2.0 - 1.0))


def test_gae_unnormalized_lambda_one():
    # every lookahead contributes with weight 1
    rewards, values = [1.0, 1.0], [0.0, 0.0, 0.0]
    adv = recursive_gae(rewards, [Statistic((v,)) for v in values], DiscountedSum(1.0), 1.0,
                        normalized=False)
    closed = dsum_gae_closed_form(rewards, values, 1.0, 1.0, normalized=False)
    assert adv.advantages == closed.advantages == (3.0, 1.0)


def test_gae_input_checks():
    with pytest.raises(ValueError):
        recursive_gae([1.0], [Statistic((0.0,))], DiscountedSum(1.0), 0.5)
    with pytest.raises(ValueError):
        recursive_gae([1.0], [Statistic((0.0,))] * 2, DiscountedSum(1.0), 1.5)
    with pytest.raises(ValueError):
        dsum_gae_closed_form([1.0], [0.0, 0.0], 0.9, 0.5, horizon=3)


def test_zero_advantage_at_true_critic():
    rng = random.Random(3)
    for _ in range(30):
        mdp = random_acyclic_mdp(rng)
        pi = random_policy(mdp, rng)
        traj = generate(mdp, pi)
        if not traj.rewards:
            continue
        for agg in catalog(0.9, 2):
            tau = evaluate_policy(mdp, pi, agg)
            stats = [tau[s] for s in traj.states]
            for lam in (0.0, 0.5, 1.0):
                adv = recursive_gae(traj.rewards, stats, agg, lam, normalized=False)
                assert max(abs(a) for a in adv.advantages) <= 1e-9


def test_critic_targets_fold_suffixes():
    mdp = toy_dag()
    for pi in all_policies(mdp):
        traj = generate(mdp, pi)
        for agg in (DiscountedSum(0.9), Mean(), TopK(2), Range()):
            tau = evaluate_policy(mdp, pi, agg)
            targets = critic_targets(traj, tau, agg)
            assert len(targets) == len(traj.rewards)
            for t, target in enumerate(targets):
                assert agg.post(target) == pytest.approx(fold(agg, traj.rewards[t:]))


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.lists(st.floats(-10, 10), max_size=5),
       st.lists(st.floats(-10, 10), max_size=5))
def test_twin_min_is_conservative(r, xs, ys):
    for agg in (DiscountedSum(0.9), DiscountedMin(0.9), DiscountedMax(0.9), Range()):
        t1, t2 = aggregate(agg, xs), aggregate(agg, ys)
        v = agg.post(twin_min_target(r, t1, t2, agg))
        assert v <= agg.post(agg.update(r, t1))
        assert v <= agg.post(agg.update(r, t2))
        assert v in (agg.post(agg.update(r, t1)), agg.post(agg.update(r, t2)))


def test_twin_min_terminal_and_arity():
    g = DiscountedSum(0.9)
    assert twin_min_target(3.0, g.init, g.init, g, next_terminal=True) == g.update(3.0, g.init)
    with pytest.raises(AggregationError):
        twin_min_target(1.0, Statistic((0.0, 0.0)), g.init, g)
