"""Stochastic MDPs and distributions of aggregated rewards.

The value distribution is realized in trajectory space: exactly, by
enumerating every outcome with its path probability, or approximately, by
Monte-Carlo rollouts.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .aggregation import Aggregation, fold
from .mdp import DEFAULT_HORIZON, MdpError, Policy, TabularMdp

PROB_TOL = 1e-12
DEFAULT_OUTCOME_CAP = 1_000_000


class OutcomeCapExceeded(MdpError):
    pass


class HorizonExceeded(MdpError):
    pass


@dataclass(frozen=True)
class StochasticMdp:
    num_states: int
    actions: tuple[tuple[str, ...], ...]
    transition: Mapping[tuple[int, str], tuple[tuple[int, float], ...]]
    reward: Mapping[tuple[int, str], float]
    terminal: tuple[bool, ...]
    initial_state: int = 0

    __hash__ = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(tuple(a) for a in self.actions))
        object.__setattr__(self, "terminal", tuple(bool(x) for x in self.terminal))
        object.__setattr__(self, "transition",
                           {k: tuple((int(s), float(p)) for s, p in v)
                            for k, v in self.transition.items()})
        n = self.num_states
        if n < 1 or len(self.actions) != n or len(self.terminal) != n:
            raise MdpError("actions and terminal must have one entry per state")
        if not 0 <= self.initial_state < n:
            raise MdpError(f"initial state {self.initial_state} out of range")
        for s in range(n):
            if not self.terminal[s] and not self.actions[s]:
                raise MdpError(f"non-terminal state {s} has no actions")
            for a in self.actions[s]:
                dist = self.transition.get((s, a))
                if dist is None or (s, a) not in self.reward:
                    raise MdpError(f"missing transition or reward for ({s}, {a!r})")
                if any(not 0 <= to < n for to, _ in dist):
                    raise MdpError(f"transition ({s}, {a!r}) has a target out of range")
                if any(p < 0 for _, p in dist) or abs(sum(p for _, p in dist) - 1.0) > PROB_TOL:
                    raise MdpError(f"transition probabilities of ({s}, {a!r}) do not sum to 1")

    @classmethod
    def from_tabular(cls, mdp: TabularMdp) -> "StochasticMdp":
        """Dirac transitions reproducing a deterministic MDP."""
        trans = {k: ((s2, 1.0),) for k, s2 in mdp.transition.items()}
        return cls(mdp.num_states, mdp.actions, trans, dict(mdp.reward), mdp.terminal,
                   mdp.initial_state)


@dataclass(frozen=True)
class StochasticPolicy:
    """Per-state categorical distribution over actions; empty at terminals."""

    probs: tuple[tuple[tuple[str, float], ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "probs",
                           tuple(tuple((a, float(p)) for a, p in row) for row in self.probs))

    def validate(self, smdp: StochasticMdp) -> None:
        if len(self.probs) != smdp.num_states:
            raise MdpError("policy length does not match the number of states")
        for s, row in enumerate(self.probs):
            if smdp.terminal[s]:
                continue
            if any(a not in smdp.actions[s] for a, _ in row):
                raise MdpError(f"policy uses an unavailable action at state {s}")
            if any(p < 0 for _, p in row) or abs(sum(p for _, p in row) - 1.0) > PROB_TOL:
                raise MdpError(f"policy probabilities at state {s} do not sum to 1")

    @classmethod
    def uniform(cls, smdp) -> "StochasticPolicy":
        rows = []
        for s in range(smdp.num_states):
            acts = () if smdp.terminal[s] else smdp.actions[s]
            rows.append(tuple((a, 1.0 / len(acts)) for a in acts))
        return cls(tuple(rows))

    @classmethod
    def from_deterministic(cls, policy: Policy) -> "StochasticPolicy":
        return cls(tuple(() if a is None else ((a, 1.0),) for a in policy.action_of))


@dataclass(frozen=True)
class EmpiricalDistribution:
    support: tuple[float, ...]
    weights: tuple[float, ...]
    exact: bool
    excluded: int = 0  # sampled rollouts dropped for hitting the horizon

    def mean(self) -> float:
        return math.fsum(v * w for v, w in zip(self.support, self.weights))

    def variance(self) -> float:
        m = self.mean()
        return math.fsum(w * (v - m) ** 2 for v, w in zip(self.support, self.weights))

    def std(self) -> float:
        return math.sqrt(max(self.variance(), 0.0))

    @classmethod
    def from_weighted(cls, pairs, exact: bool, excluded: int = 0) -> "EmpiricalDistribution":
        acc: dict[float, float] = defaultdict(float)
        for v, w in pairs:
            acc[v] += w
        total = math.fsum(acc.values())
        support = tuple(sorted(acc))
        return cls(support, tuple(acc[v] / total for v in support), exact, excluded)


def _joint(smdp: StochasticMdp, policy: StochasticPolicy, s: int):
    """(prob, reward, next state) outcomes of one step from s."""
    out = []
    for a, pa in policy.probs[s]:
        if pa == 0.0:
            continue
        r = smdp.reward[(s, a)]
        for s2, ps in smdp.transition[(s, a)]:
            if ps > 0.0:
                out.append((pa * ps, r, s2))
    return out


def enumerate_outcomes(smdp: StochasticMdp, policy: StochasticPolicy,
                       horizon: int = DEFAULT_HORIZON,
                       cap: int = DEFAULT_OUTCOME_CAP) -> list[tuple[float, tuple[float, ...]]]:
    """Every (path probability, reward sequence) from the initial state."""
    policy.validate(smdp)
    steps = {s: _joint(smdp, policy, s) for s in range(smdp.num_states)
             if not smdp.terminal[s]}
    outcomes = []
    stack = [(smdp.initial_state, 1.0, (), (smdp.initial_state,))]
    while stack:
        s, w, rewards, path = stack.pop()
        if smdp.terminal[s]:
            outcomes.append((w, rewards))
            if len(outcomes) > cap:
                raise OutcomeCapExceeded(f"more than {cap} weighted outcomes")
            continue
        if len(rewards) >= horizon:
            raise HorizonExceeded(f"path does not terminate within {horizon} steps: {list(path)}")
        for p, r, s2 in reversed(steps[s]):
            stack.append((s2, w * p, rewards + (r,), path + (s2,)))
    return outcomes


def _fold_cached(agg, rewards, cache):
    v = cache.get(rewards)
    if v is None:
        v = cache[rewards] = fold(agg, rewards)
    return v


def exact_aggregate_distribution(smdp: StochasticMdp, policy: StochasticPolicy,
                                 agg: Aggregation, horizon: int = DEFAULT_HORIZON,
                                 cap: int = DEFAULT_OUTCOME_CAP) -> EmpiricalDistribution:
    """Exact law of post(fold(rewards)) over all trajectory outcomes."""
    cache: dict = {}
    pairs = [(_fold_cached(agg, rw, cache), w)
             for w, rw in enumerate_outcomes(smdp, policy, horizon, cap)]
    return EmpiricalDistribution.from_weighted(pairs, exact=True)


def _step_tables(smdp, policy):
    n = smdp.num_states
    joints = [_joint(smdp, policy, s) if not smdp.terminal[s] else [] for s in range(n)]
    width = max(1, max(len(j) for j in joints))
    cum = np.ones((n, width))
    rew = np.zeros((n, width))
    nxt = np.zeros((n, width), dtype=np.int64)
    for s, j in enumerate(joints):
        if not j:
            continue
        c = np.cumsum([p for p, _, _ in j])
        c[-1] = 1.0
        cum[s, : len(j)] = c
        rew[s, : len(j)] = [r for _, r, _ in j]
        nxt[s, : len(j)] = [s2 for _, _, s2 in j]
        nxt[s, len(j):] = j[-1][2]
        rew[s, len(j):] = j[-1][1]
    return cum, rew, nxt


def sample_reward_sequences(smdp: StochasticMdp, policy: StochasticPolicy, n_samples: int,
                            seed: int, horizon: int = DEFAULT_HORIZON):
    """Roll out ``n_samples`` episodes at once.

    Returns ``(counts, excluded)`` where ``counts`` maps each distinct
    terminated reward sequence to how often it was sampled and ``excluded``
    counts rollouts still running at the horizon.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    policy.validate(smdp)
    rng = np.random.default_rng(seed)
    cum, rew, nxt = _step_tables(smdp, policy)
    terminal = np.array(smdp.terminal)
    state = np.full(n_samples, smdp.initial_state, dtype=np.int64)
    active = ~terminal[state]
    taken = []
    for _ in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = state[idx]
        u = rng.random(idx.size)
        k = np.minimum((u[:, None] >= cum[s]).sum(axis=1), cum.shape[1] - 1)
        taken.append((idx, rew[s, k]))
        state[idx] = nxt[s, k]
        active[idx] = ~terminal[state[idx]]
    seqs: list[list[float]] = [[] for _ in range(n_samples)]
    for idx, r in taken:
        for i, x in zip(idx.tolist(), r.tolist()):
            seqs[i].append(x)
    counts: dict[tuple[float, ...], int] = defaultdict(int)
    for i in np.flatnonzero(~active).tolist():
        counts[tuple(seqs[i])] += 1
    return dict(counts), int(active.sum())


def mc_aggregate_distribution(smdp: StochasticMdp, policy: StochasticPolicy, agg: Aggregation,
                              n_samples: int, seed: int,
                              horizon: int = DEFAULT_HORIZON) -> EmpiricalDistribution:
    """Empirical law of the aggregated reward from ``n_samples`` rollouts.

    Rollouts that do not terminate within ``horizon`` are dropped and
    counted in ``excluded``.
    """
    counts, excluded = sample_reward_sequences(smdp, policy, n_samples, seed, horizon)
    if not counts:
        raise HorizonExceeded(f"none of {n_samples} rollouts terminated within {horizon} steps")
    pairs = [(fold(agg, rw), c) for rw, c in counts.items()]
    return EmpiricalDistribution.from_weighted(pairs, exact=False, excluded=excluded)


def expectation_gap(smdp: StochasticMdp, policy: StochasticPolicy, agg: Aggregation,
                    horizon: int = DEFAULT_HORIZON,
                    cap: int = DEFAULT_OUTCOME_CAP) -> tuple[float, float]:
    """(E[agg(rewards)], agg(E[r_1], ..., E[r_T])) on a fixed-horizon task."""
    outcomes = enumerate_outcomes(smdp, policy, horizon, cap)
    lengths = {len(rw) for _, rw in outcomes}
    if len(lengths) != 1:
        raise MdpError(
            f"episode lengths vary ({sorted(lengths)}); per-step expected rewards are only "
            "defined on fixed-horizon tasks")
    (T,) = lengths
    cache: dict = {}
    expected_aggregated = math.fsum(w * _fold_cached(agg, rw, cache) for w, rw in outcomes)
    means = [math.fsum(w * rw[t] for w, rw in outcomes) for t in range(T)]
    return expected_aggregated, fold(agg, means)


def two_step_example() -> tuple[StochasticMdp, StochasticPolicy]:
    """r1 is 0 or 10 with probability 1/2 each, then r2 = 5.

    The coin flip is the policy's: state 0 offers ``low`` (reward 0) and
    ``high`` (reward 10), picked uniformly.
    """
    trans = {(0, "low"): ((1, 1.0),), (0, "high"): ((1, 1.0),), (1, "go"): ((2, 1.0),)}
    rew = {(0, "low"): 0.0, (0, "high"): 10.0, (1, "go"): 5.0}
    smdp = StochasticMdp(3, (("low", "high"), ("go",), ()), trans, rew, (False, False, True), 0)
    return smdp, StochasticPolicy.uniform(smdp)
