"""Sample-based algorithms over recursive aggregations.

Tabular Q-learning on statistics, the generalized advantage estimator for an
arbitrary aggregation, its closed-form discounted-sum special case, and the
critic target computations used by actor-critic methods.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .aggregation import (
    Aggregation,
    AggregationError,
    CapabilityError,
    Statistic,
    _blend,
    post_or_none,
)
from .mdp import (
    DEFAULT_HORIZON,
    MdpError,
    StatisticTable,
    TabularMdp,
    Trajectory,
    q_target,
)


@dataclass(frozen=True)
class QLearnConfig:
    learning_rate: float = 0.5
    epsilon: float = 0.3
    total_steps: int = 10_000
    seed: int = 0
    horizon_cap: int = DEFAULT_HORIZON
    # multiplicative per-episode decay; 1.0 keeps epsilon fixed
    epsilon_decay: float = 1.0
    min_epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning rate must lie in (0, 1], got {self.learning_rate}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.total_steps < 0 or self.horizon_cap < 1:
            raise ValueError("total_steps must be >= 0 and horizon_cap >= 1")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must lie in (0, 1]")


def q_learning(mdp: TabularMdp, agg: Aggregation, cfg: QLearnConfig,
               minimize: bool = False) -> StatisticTable:
    """Epsilon-greedy Q-learning on state-action statistics.

    Each transition (s, a, r, s') moves q(s, a) towards ``r |> q(s', a*)``
    with a* = argmax_a' post(r |> q(s', a')), or towards ``r |> init`` when
    s' is terminal. Episodes restart from the initial state, also when an
    episode reaches ``cfg.horizon_cap`` steps.
    """
    if not agg.blendable:
        raise CapabilityError(f"Q-learning needs blendable statistics; {agg.spec} is not")
    if mdp.terminal[mdp.initial_state]:
        raise MdpError("initial state is terminal; nothing to learn")
    rng = random.Random(cfg.seed)
    init = agg.init
    q: dict[tuple[int, str], Statistic] = {(s, a): init for s, a in mdp.state_actions()}
    alpha, eps = cfg.learning_rate, cfg.epsilon
    fallback = math.inf if minimize else -math.inf
    s, ep_len = mdp.initial_state, 0
    for _ in range(cfg.total_steps):
        acts = mdp.actions[s]
        if rng.random() < eps:
            a = acts[rng.randrange(len(acts))]
        else:
            a, best_v = acts[0], None
            for b in acts:
                v = post_or_none(agg, q[(s, b)])
                v = fallback if v is None else v
                if best_v is None or (v < best_v if minimize else v > best_v):
                    a, best_v = b, v
        r, s2 = mdp.step(s, a)
        target = q_target(mdp, agg, q, r, s2, minimize)
        q[(s, a)] = _blend(q[(s, a)], target, alpha)
        s, ep_len = s2, ep_len + 1
        if mdp.terminal[s] or ep_len >= cfg.horizon_cap:
            s, ep_len = mdp.initial_state, 0
            eps = max(cfg.min_epsilon, eps * cfg.epsilon_decay)
    return StatisticTable("state_action", q, agg)


def greedy_start_value(mdp: TabularMdp, q: StatisticTable, minimize: bool = False) -> float:
    """Best post(q(s0, a)) over the initial state's actions."""
    agg = q.aggregation
    vals = [post_or_none(agg, q[(mdp.initial_state, a)]) for a in mdp.actions[mdp.initial_state]]
    vals = [v for v in vals if v is not None]
    if not vals:
        raise AggregationError("no defined value at the initial state")
    return min(vals) if minimize else max(vals)


# -- advantages ---------------------------------------------------------------


@dataclass(frozen=True)
class AdvantageSeries:
    advantages: tuple[float, ...]
    lam: float
    normalized: bool

    def __len__(self):
        return len(self.advantages)

    def __getitem__(self, i):
        return self.advantages[i]


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


def recursive_gae(rewards: Sequence[float], statistics: Sequence[Statistic],
                  agg: Aggregation, lam: float,
                  normalized: bool = True) -> AdvantageSeries:
    """Generalized advantage estimates for any aggregation.

    ``statistics[i]`` is the critic's statistic for state ``s_i``, for
    ``i = 0..len(rewards)``. For each t::

        adv_t = sum_{i>=1} lam**(i-1) * (post(r_t |> ... |> r_{t+i-1} |> stat_{t+i})
                                          - post(stat_t))

    scaled by ``1 - lam`` when ``normalized``. Evaluated term by term, since
    no general recursion exists.
    """
    _check_lambda(lam)
    n = len(rewards)
    if len(statistics) != n + 1:
        raise ValueError(f"need {n + 1} statistics for {n} rewards, got {len(statistics)}")
    base = [agg.post(statistics[t]) for t in range(n)]
    adv = [0.0] * n
    # chain[t] = r_t |> ... |> r_{j-1} |> stat_j, built backwards for each end j
    for j in range(1, n + 1):
        chain = statistics[j]
        for t in range(j - 1, -1, -1):
            chain = agg.update(rewards[t], chain)
            w = lam ** (j - t - 1)
            v = agg.post(chain)
            # equal infinite posts count as no advantage rather than nan
            if w and v != base[t]:
                adv[t] += w * (v - base[t])
    if normalized:
        adv = [(1.0 - lam) * a for a in adv]
    return AdvantageSeries(tuple(adv), lam, normalized)


def dsum_gae_closed_form(rewards: Sequence[float], values: Sequence[float], gamma: float,
                         lam: float, horizon: int | None = None,
                         normalized: bool = True) -> AdvantageSeries:
    """Discounted-sum advantages by the finite-horizon backward recursion.

    ``adv_t = c_t * (r_t + gamma v_{t+1} - v_t) + lam * gamma * adv_{t+1}``
    with ``c_t = 1 + lam + ... + lam**(T-t-1)`` (which is T - t at lam=1).
    """
    _check_lambda(lam)
    n = len(rewards)
    if horizon is not None and horizon != n:
        raise ValueError(f"horizon {horizon} does not match {n} rewards")
    if len(values) != n + 1:
        raise ValueError(f"need {n + 1} values for {n} rewards, got {len(values)}")
    adv = [0.0] * n
    nxt = 0.0
    for t in range(n - 1, -1, -1):
        k = n - t
        c = float(k) if lam == 1.0 else (1.0 - lam ** k) / (1.0 - lam)
        nxt = c * (rewards[t] + gamma * values[t + 1] - values[t]) + lam * gamma * nxt
        adv[t] = nxt
    if normalized:
        adv = [(1.0 - lam) * a for a in adv]
    return AdvantageSeries(tuple(adv), lam, normalized)


def twin_min_target(r: float, t1: Statistic, t2: Statistic, agg: Aggregation,
                    next_terminal: bool = False) -> Statistic:
    """Pessimistic target from two critics: the whole statistic with the
    smaller post travels (``r |> t1`` on ties)."""
    if len(t1.values) != agg.arity or len(t2.values) != agg.arity:
        raise AggregationError("statistic arity does not match the aggregation")
    if next_terminal:
        return agg.update(r, agg.init)
    a, b = agg.update(r, t1), agg.update(r, t2)
    return a if agg.post(a) <= agg.post(b) else b


def critic_targets(trajectory: Trajectory, tau: StatisticTable | Mapping[int, Statistic],
                   agg: Aggregation) -> list[Statistic]:
    """Full-horizon targets ``r_t |> ... |> r_{T-1} |> tau(s_T)`` for each t."""
    entries = tau.entries if isinstance(tau, StatisticTable) else tau
    last = trajectory.states[-1]
    try:
        t = entries[last]
    except (KeyError, IndexError) as e:
        raise IndexError(f"state {last} missing from the critic table") from e
    out = []
    for r in reversed(trajectory.rewards):
        t = agg.update(r, t)
        out.append(t)
    return out[::-1]
