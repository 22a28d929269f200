"""Deterministic tabular MDPs and generalized Bellman solvers.

States are integers ``0..num_states-1``; actions are strings, listed per
state. Terminal states have no actions consulted: generation halts there and
their statistic is the aggregation's initial value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterator, Mapping, Sequence

from .aggregation import (
    Aggregation,
    AggregationError,
    Statistic,
    UndefinedAtInit,
    fold,
    post_or_none,
)
from .contraction import table_distance


class MdpError(ValueError):
    """Malformed MDP, policy or table."""


class NonConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3g})")
        self.residual = residual


class EnumerationCapExceeded(MdpError):
    pass


DEFAULT_HORIZON = 10_000
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True, eq=True)
class TabularMdp:
    num_states: int
    actions: tuple[tuple[str, ...], ...]
    transition: Mapping[tuple[int, str], int]
    reward: Mapping[tuple[int, str], float]
    terminal: tuple[bool, ...]
    initial_state: int = 0

    __hash__ = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(tuple(a) for a in self.actions))
        object.__setattr__(self, "terminal", tuple(bool(x) for x in self.terminal))
        n = self.num_states
        if n < 1:
            raise MdpError("an MDP needs at least one state")
        if len(self.actions) != n or len(self.terminal) != n:
            raise MdpError("actions and terminal must have one entry per state")
        if not 0 <= self.initial_state < n:
            raise MdpError(f"initial state {self.initial_state} out of range")
        for s in range(n):
            acts = self.actions[s]
            if len(set(acts)) != len(acts):
                raise MdpError(f"duplicate action at state {s}")
            if not self.terminal[s] and not acts:
                raise MdpError(f"non-terminal state {s} has no actions")
            for a in acts:
                if (s, a) not in self.transition or (s, a) not in self.reward:
                    raise MdpError(f"missing transition or reward for ({s}, {a!r})")
                s2 = self.transition[(s, a)]
                if not 0 <= s2 < n:
                    raise MdpError(f"transition ({s}, {a!r}) -> {s2} out of range")
                if not math.isfinite(self.reward[(s, a)]):
                    raise MdpError(f"reward for ({s}, {a!r}) is not finite")

    @property
    def states(self) -> range:
        return range(self.num_states)

    def step(self, s: int, a: str) -> tuple[float, int]:
        return self.reward[(s, a)], self.transition[(s, a)]

    def state_actions(self) -> Iterator[tuple[int, str]]:
        for s in self.states:
            if not self.terminal[s]:
                for a in self.actions[s]:
                    yield s, a


@dataclass(frozen=True)
class Policy:
    """Deterministic stationary policy; ``None`` at terminal states."""

    action_of: tuple[str | None, ...]

    def __call__(self, s: int) -> str | None:
        return self.action_of[s]

    def validate(self, mdp: TabularMdp) -> None:
        if len(self.action_of) != mdp.num_states:
            raise MdpError("policy length does not match the number of states")
        for s in mdp.states:
            if not mdp.terminal[s] and self.action_of[s] not in mdp.actions[s]:
                raise MdpError(f"policy action {self.action_of[s]!r} not available at state {s}")


@dataclass(frozen=True)
class StatisticTable:
    """Statistics keyed by state (``kind="state"``) or (state, action)."""

    kind: str
    entries: Mapping[Hashable, Statistic]
    aggregation: Aggregation

    def __getitem__(self, key) -> Statistic:
        return self.entries[key]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def posts(self) -> dict[Hashable, float | None]:
        return {k: post_or_none(self.aggregation, t) for k, t in self.entries.items()}


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]
    rewards: tuple[float, ...]
    truncated: bool = False

    def __len__(self):
        return len(self.rewards)


# -- generation ---------------------------------------------------------------


def generate(mdp: TabularMdp, policy: Policy, start: int | None = None,
             max_steps: int = DEFAULT_HORIZON) -> Trajectory:
    """Roll the policy out from ``start`` until a terminal state or the cap."""
    s = mdp.initial_state if start is None else start
    if not 0 <= s < mdp.num_states:
        raise MdpError(f"invalid state index {s}")
    if max_steps < 0:
        raise MdpError("max_steps must be non-negative")
    states, rewards = [s], []
    while not mdp.terminal[s]:
        if len(rewards) >= max_steps:
            return Trajectory(tuple(states), tuple(rewards), True)
        r, s = mdp.step(s, policy(s))
        rewards.append(r)
        states.append(s)
    return Trajectory(tuple(states), tuple(rewards), False)


# -- policy evaluation --------------------------------------------------------

# A chain maps each key to None (its statistic is init) or to (reward, next
# key); next key None also means init. Both state and state-action evaluation
# under a fixed policy are chains.
_Chain = dict


def _chain_order(chain: _Chain) -> list | None:
    """Keys ordered so that successors come first, or None if cyclic."""
    order, state = [], {}
    for root in chain:
        path = []
        k = root
        while k is not None and state.get(k) is None:
            state[k] = 1
            path.append(k)
            link = chain[k]
            k = None if link is None else link[1]
        if k is not None and state.get(k) == 1:
            return None
        for p in reversed(path):
            state[p] = 2
            order.append(p)
    return order


def _chain_backup(agg: Aggregation, chain: _Chain, tau: Mapping) -> dict:
    init = agg.init
    out = {}
    for k, link in chain.items():
        if link is None:
            out[k] = init
        else:
            r, nxt = link
            out[k] = agg.update(r, init if nxt is None else tau[nxt])
    return out


def _solve_chain(agg: Aggregation, chain: _Chain, tol: float, max_iter: int,
                 method: str = "auto", start: Mapping | None = None) -> dict:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method not in ("auto", "exact", "iterate"):
        raise ValueError(f"unknown method {method!r}")
    order = _chain_order(chain) if method != "iterate" else None
    if order is not None:
        init = agg.init
        tau: dict = {}
        for k in order:
            link = chain[k]
            if link is None:
                tau[k] = init
            else:
                r, nxt = link
                tau[k] = agg.update(r, init if nxt is None else tau[nxt])
        return tau
    if method == "exact":
        raise MdpError("policy graph is cyclic; exact evaluation unavailable")
    tau = dict(start) if start is not None else {k: agg.init for k in chain}
    residual = math.inf
    for _ in range(max_iter):
        new = _chain_backup(agg, chain, tau)
        residual = table_distance(agg, new, tau)
        tau = new
        if residual < tol:
            return tau
    raise NonConvergence(
        f"{agg.spec} did not converge in {max_iter} iterations; "
        "the update may not be contractive on this cyclic MDP", residual)


def _state_chain(mdp: TabularMdp, policy: Policy) -> _Chain:
    chain: _Chain = {}
    for s in mdp.states:
        if mdp.terminal[s]:
            chain[s] = None
        else:
            chain[s] = mdp.step(s, policy(s))
    return chain


def _state_action_chain(mdp: TabularMdp, policy: Policy) -> _Chain:
    chain: _Chain = {}
    for s in mdp.states:
        for a in mdp.actions[s]:
            if mdp.terminal[s]:
                chain[(s, a)] = None
                continue
            r, s2 = mdp.step(s, a)
            chain[(s, a)] = (r, None if mdp.terminal[s2] else (s2, policy(s2)))
    return chain


def bellman_backup(mdp: TabularMdp, policy: Policy, agg: Aggregation,
                   tau: StatisticTable) -> StatisticTable:
    """One application of the policy Bellman operator to a state table."""
    if tau.kind != "state":
        raise MdpError("bellman_backup needs a state-indexed table")
    if tau.aggregation != agg:
        raise MdpError("table belongs to a different aggregation")
    entries = _chain_backup(agg, _state_chain(mdp, policy), tau.entries)
    return StatisticTable("state", entries, agg)


def evaluate_policy(mdp: TabularMdp, policy: Policy, agg: Aggregation,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    method: str = "auto",
                    start: StatisticTable | None = None) -> StatisticTable:
    """State statistic function of ``policy``.

    Exact backward recursion when the policy graph is acyclic into
    terminals; otherwise the Bellman operator is iterated from ``start``
    (all-init by default) until successive tables are within ``tol`` in the
    pullback premetric at every state.
    """
    policy.validate(mdp)
    entries = _solve_chain(agg, _state_chain(mdp, policy), tol, max_iter, method,
                           None if start is None else start.entries)
    return StatisticTable("state", entries, agg)


def state_action_statistics(mdp: TabularMdp, policy: Policy, agg: Aggregation,
                            tol: float = DEFAULT_TOL,
                            max_iter: int = DEFAULT_MAX_ITER,
                            method: str = "auto") -> StatisticTable:
    """State-action statistic function, solved on the (s, a) chain directly."""
    policy.validate(mdp)
    entries = _solve_chain(agg, _state_action_chain(mdp, policy), tol, max_iter, method)
    return StatisticTable("state_action", entries, agg)


# -- optimality ---------------------------------------------------------------


def _better(a: float, b: float, minimize: bool) -> bool:
    return a < b if minimize else a > b


def best_index(agg: Aggregation, candidates: Sequence[Statistic],
               minimize: bool = False) -> int:
    """Index of the best candidate by post; ties go to the lowest index."""
    best, best_v = 0, None
    for i, t in enumerate(candidates):
        try:
            v = agg.post(t)
        except UndefinedAtInit as e:
            raise AggregationError(
                f"unsupported configuration: cannot compare undefined {agg.spec} values"
            ) from e
        if best_v is None or _better(v, best_v, minimize):
            best, best_v = i, v
    return best


def _optimality_backup(mdp, agg, tau, minimize):
    init = agg.init
    out, choice = {}, {}
    for s in mdp.states:
        if mdp.terminal[s]:
            out[s] = init
            continue
        cands = [agg.update(mdp.reward[(s, a)], tau[mdp.transition[(s, a)]])
                 for a in mdp.actions[s]]
        i = best_index(agg, cands, minimize)
        out[s] = cands[i]
        choice[s] = mdp.actions[s][i]
    return out, choice


def optimality_backup(mdp: TabularMdp, agg: Aggregation, tau: StatisticTable,
                      minimize: bool = False) -> StatisticTable:
    """One application of the Bellman optimality operator to a state table."""
    if tau.kind != "state":
        raise MdpError("optimality_backup needs a state-indexed table")
    return StatisticTable("state", _optimality_backup(mdp, agg, tau.entries, minimize)[0], agg)


def q_target(mdp: TabularMdp, agg: Aggregation, q: Mapping, r: float, s2: int,
             minimize: bool = False) -> Statistic:
    """``r |> q(s2, a*)`` with a* the best action by post(r |> q(s2, a'))."""
    if mdp.terminal[s2]:
        return agg.update(r, agg.init)
    cands = [agg.update(r, q[(s2, a)]) for a in mdp.actions[s2]]
    return cands[best_index(agg, cands, minimize)]


def q_optimality_backup(mdp: TabularMdp, agg: Aggregation, q: StatisticTable,
                        minimize: bool = False) -> StatisticTable:
    """Bellman optimality operator on a state-action table."""
    if q.kind != "state_action":
        raise MdpError("q_optimality_backup needs a state-action table")
    out = {}
    for (s, a) in q.entries:
        if mdp.terminal[s]:
            out[(s, a)] = agg.init
        else:
            r, s2 = mdp.step(s, a)
            out[(s, a)] = q_target(mdp, agg, q.entries, r, s2, minimize)
    return StatisticTable("state_action", out, agg)


def greedy_policy(mdp: TabularMdp, q: StatisticTable, minimize: bool = False,
                  unvisited: float | None = None) -> Policy:
    """argmax_a post(q(s, a)); undefined posts count as ``unvisited``."""
    agg = q.aggregation
    acts: list[str | None] = []
    for s in mdp.states:
        if mdp.terminal[s]:
            acts.append(None)
            continue
        best, best_v = None, None
        for a in mdp.actions[s]:
            v = post_or_none(agg, q[(s, a)])
            if v is None:
                if unvisited is None:
                    raise AggregationError(f"undefined {agg.spec} value at ({s}, {a!r})")
                v = unvisited
            if best_v is None or _better(v, best_v, minimize):
                best, best_v = a, v
        acts.append(best)
    return Policy(tuple(acts))


def _full_graph_order(mdp: TabularMdp) -> list[int] | None:
    """States with all successors first, or None if a cycle is reachable."""
    order, state = [], [0] * mdp.num_states
    for root in mdp.states:
        if state[root]:
            continue
        stack = [(root, iter(mdp.actions[root] if not mdp.terminal[root] else ()))]
        state[root] = 1
        while stack:
            s, it = stack[-1]
            for a in it:
                s2 = mdp.transition[(s, a)]
                if state[s2] == 1:
                    return None
                if state[s2] == 0:
                    state[s2] = 1
                    stack.append((s2, iter(mdp.actions[s2] if not mdp.terminal[s2] else ())))
                    break
            else:
                stack.pop()
                state[s] = 2
                order.append(s)
    return order


@dataclass(frozen=True)
class ValueIterationResult:
    table: StatisticTable
    policy: Policy
    iterations: int
    exact: bool

    def __iter__(self):
        return iter((self.table, self.policy))


def value_iteration(mdp: TabularMdp, agg: Aggregation, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER, minimize: bool = False,
                    method: str = "auto") -> ValueIterationResult:
    """Optimal state statistics and the greedy policy.

    On acyclic MDPs the optimality equation is solved by backward induction;
    otherwise the optimality operator is iterated from all-init until the
    pullback residual drops below ``tol``. Unpacks as ``(table, policy)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    init = agg.init
    order = _full_graph_order(mdp) if method != "iterate" else None
    if order is not None:
        tau: dict[int, Statistic] = {}
        acts: dict[int, str] = {}
        for s in order:
            if mdp.terminal[s]:
                tau[s] = init
                continue
            cands = [agg.update(mdp.reward[(s, a)], tau[mdp.transition[(s, a)]])
                     for a in mdp.actions[s]]
            i = best_index(agg, cands, minimize)
            tau[s], acts[s] = cands[i], mdp.actions[s][i]
        tau = {s: tau[s] for s in mdp.states}
        policy = Policy(tuple(acts.get(s) for s in mdp.states))
        return ValueIterationResult(StatisticTable("state", tau, agg), policy, 1, True)
    if method == "exact":
        raise MdpError("MDP is cyclic; exact value iteration unavailable")
    tau = {s: init for s in mdp.states}
    residual = math.inf
    for it in range(1, max_iter + 1):
        new, choice = _optimality_backup(mdp, agg, tau, minimize)
        residual = table_distance(agg, new, tau)
        tau = new
        if residual < tol:
            policy = Policy(tuple(choice.get(s) for s in mdp.states))
            return ValueIterationResult(StatisticTable("state", tau, agg), policy, it, False)
    raise NonConvergence(f"value iteration for {agg.spec} did not converge in {max_iter} sweeps",
                         residual)


# -- brute force --------------------------------------------------------------


def policy_count(mdp: TabularMdp) -> int:
    return math.prod(len(mdp.actions[s]) for s in mdp.states if not mdp.terminal[s])


def all_policies(mdp: TabularMdp, cap: int = 1_000_000) -> Iterator[Policy]:
    """Every deterministic stationary policy, in lexicographic action order."""
    n = policy_count(mdp)
    if n > cap:
        raise EnumerationCapExceeded(f"{n} policies exceed the enumeration cap of {cap}")
    choices = [mdp.actions[s] if not mdp.terminal[s] else (None,) for s in mdp.states]
    for combo in itertools.product(*choices):
        yield Policy(tuple(combo))


@dataclass(frozen=True)
class RankedPolicy:
    index: int
    policy: Policy
    value: float | None  # None when post is undefined
    truncated: bool
    trajectory: Trajectory = field(repr=False, compare=False, default=None)


def enumerate_policies(mdp: TabularMdp, agg: Aggregation, horizon: int = DEFAULT_HORIZON,
                       cap: int = 1_000_000, minimize: bool = False,
                       start: int | None = None) -> list[RankedPolicy]:
    """Fold every policy's generated rewards; best first.

    Truncated rollouts aggregate their prefix and are flagged. Undefined
    values sort last; ties keep policy-index order.
    """
    ranked = []
    for i, pi in enumerate(all_policies(mdp, cap)):
        traj = generate(mdp, pi, start, horizon)
        try:
            v = fold(agg, traj.rewards)
        except UndefinedAtInit:
            v = None
        ranked.append(RankedPolicy(i, pi, v, traj.truncated, traj))
    sign = 1.0 if minimize else -1.0
    ranked.sort(key=lambda rp: (rp.value is None, 0.0 if rp.value is None else sign * rp.value))
    return ranked
