"""Built-in environments and the JSON MDP file format.

File schema (deterministic)::

    {"states": 6, "initial": 0, "terminal": [5],
     "transitions": [{"from": 0, "action": "red", "to": 1, "reward": 1.0}, ...]}

Stochastic MDPs replace ``to`` by ``to_dist``: a list of ``{"to", "prob"}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .mdp import MdpError, TabularMdp

ACTIONS = ("up", "down", "left", "right")
_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}

# toy DAG state indices
ENTRY, RED_1, RED_2, BLUE, YELLOW, EXIT = range(6)


def toy_dag() -> TabularMdp:
    """Three disjoint routes from the entry node to one terminal node.

    Route rewards: red ``[1, 3, 5]``, blue ``[4, 4]``, yellow ``[0, 6]``.
    The shared node is terminal, so the exit edge carries no reward.
    """
    edges = [
        (ENTRY, "red", RED_1, 1.0),
        (ENTRY, "blue", BLUE, 4.0),
        (ENTRY, "yellow", YELLOW, 0.0),
        (RED_1, "red", RED_2, 3.0),
        (RED_2, "red", EXIT, 5.0),
        (BLUE, "blue", EXIT, 4.0),
        (YELLOW, "yellow", EXIT, 6.0),
    ]
    return _from_edges(6, ENTRY, [EXIT], edges)


def _from_edges(n, initial, terminal, edges) -> TabularMdp:
    actions = [[] for _ in range(n)]
    transition, reward = {}, {}
    for s, a, s2, r in edges:
        actions[s].append(a)
        transition[(s, a)] = s2
        reward[(s, a)] = float(r)
    term = [False] * n
    for s in terminal:
        term[s] = True
    return TabularMdp(n, tuple(map(tuple, actions)), transition, reward, tuple(term), initial)


@dataclass(frozen=True)
class GridSpec:
    """Deterministic grid world; ``step_rewards`` is row-major.

    Entering a cell pays that cell's step reward, entering the goal pays
    ``goal_reward``. Moves into a wall leave the agent in place (and pay the
    current cell's step reward).
    """

    rows: int = 3
    cols: int = 4
    start: tuple[int, int] = (0, 0)
    goal: tuple[int, int] = (2, 3)
    step_rewards: tuple[float, ...] = field(default=None)
    goal_reward: float = 10.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise MdpError("grid dimensions must be at least 1")
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        if self.step_rewards is None:
            object.__setattr__(self, "step_rewards", default_step_rewards(self.rows, self.cols))
        rewards = self.step_rewards
        if rewards and isinstance(rewards[0], (list, tuple)):
            rewards = [x for row in rewards for x in row]
        object.__setattr__(self, "step_rewards", tuple(float(x) for x in rewards))
        if len(self.step_rewards) != self.rows * self.cols:
            raise MdpError(f"step_rewards needs {self.rows * self.cols} entries, "
                           f"got {len(self.step_rewards)}")
        for name, (r, c) in (("start", self.start), ("goal", self.goal)):
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise MdpError(f"{name} {(r, c)} lies outside the grid")
        if self.start == self.goal:
            raise MdpError("start and goal must differ")
        if not all(math.isfinite(x) for x in self.step_rewards + (self.goal_reward,)):
            raise MdpError("grid rewards must be finite")

    def index(self, r: int, c: int) -> int:
        return r * self.cols + c

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        known = {"rows", "cols", "start", "goal", "step_rewards", "goal_reward"}
        extra = set(d) - known
        if extra:
            raise MdpError(f"unknown grid spec keys: {sorted(extra)}")
        return cls(**d)


def default_step_rewards(rows: int, cols: int) -> tuple[float, ...]:
    """-1, -2, -3 repeating along the columns."""
    return tuple(-float(c % 3 + 1) for _ in range(rows) for c in range(cols))


def grid_world(spec: GridSpec | None = None) -> TabularMdp:
    spec = spec or GridSpec()
    n = spec.rows * spec.cols
    goal = spec.index(*spec.goal)
    edges = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            s = spec.index(r, c)
            if s == goal:
                continue
            for a in ACTIONS:
                dr, dc = _MOVES[a]
                r2, c2 = r + dr, c + dc
                if not (0 <= r2 < spec.rows and 0 <= c2 < spec.cols):
                    r2, c2 = r, c
                s2 = spec.index(r2, c2)
                rew = spec.goal_reward if s2 == goal else spec.step_rewards[s2]
                edges.append((s, a, s2, rew))
    return _from_edges(n, spec.index(*spec.start), [goal], edges)


# -- file format --------------------------------------------------------------


class SchemaError(MdpError):
    pass


def _parse_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e


def _require(doc, key, kind, where):
    if key not in doc:
        raise SchemaError(f"{where}: missing {key!r} key")
    val = doc[key]
    if kind is int and (not isinstance(val, int) or isinstance(val, bool)):
        raise SchemaError(f"{where}: {key!r} must be an integer")
    if kind is float and (not isinstance(val, (int, float)) or isinstance(val, bool)):
        raise SchemaError(f"{where}: {key!r} must be a number")
    if kind is list and not isinstance(val, list):
        raise SchemaError(f"{where}: {key!r} must be an array")
    if kind is str and not isinstance(val, str):
        raise SchemaError(f"{where}: {key!r} must be a string")
    return val


def _header(doc, source):
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: top level must be an object")
    n = _require(doc, "states", int, source)
    initial = _require(doc, "initial", int, source)
    terminal = _require(doc, "terminal", list, source)
    rows = _require(doc, "transitions", list, source)
    for i, t in enumerate(terminal):
        if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t < max(n, 0):
            raise SchemaError(f"{source}: terminal[{i}] is not a valid state")
    return n, initial, terminal, rows


def _rows(rows, n, source, stochastic):
    seen = set()
    for i, row in enumerate(rows):
        where = f"{source}: transitions[{i}]"
        if not isinstance(row, dict):
            raise SchemaError(f"{where}: must be an object")
        s = _require(row, "from", int, where)
        a = _require(row, "action", str, where)
        r = float(_require(row, "reward", float, where))
        if not 0 <= s < n:
            raise SchemaError(f"{where}: 'from' state {s} out of range")
        if (s, a) in seen:
            raise SchemaError(f"{where}: duplicate (from, action) pair ({s}, {a!r})")
        seen.add((s, a))
        if stochastic:
            dist = _require(row, "to_dist", list, where)
            out = []
            for j, item in enumerate(dist):
                w = f"{where}.to_dist[{j}]"
                if not isinstance(item, dict):
                    raise SchemaError(f"{w}: must be an object")
                to = _require(item, "to", int, w)
                p = float(_require(item, "prob", float, w))
                if not 0 <= to < n:
                    raise SchemaError(f"{w}: state {to} out of range")
                out.append((to, p))
            yield s, a, tuple(out), r
        else:
            to = _require(row, "to", int, where)
            if not 0 <= to < n:
                raise SchemaError(f"{where}: 'to' state {to} out of range")
            yield s, a, to, r


def _source(path) -> tuple[str, str]:
    p = Path(path)
    try:
        return p.read_text(), str(p)
    except OSError as e:
        raise FileNotFoundError(f"{path}: {e.strerror or e}") from e


def mdp_from_json(text: str, source: str = "<string>") -> TabularMdp:
    doc = _parse_json(text, source)
    n, initial, terminal, rows = _header(doc, source)
    if rows and isinstance(rows[0], dict) and "to_dist" in rows[0]:
        raise SchemaError(f"{source}: stochastic transitions; use load_stochastic_mdp")
    edges = list(_rows(rows, n, source, stochastic=False))
    try:
        return _from_edges(n, initial, terminal, edges)
    except MdpError as e:
        raise SchemaError(f"{source}: {e}") from e


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "states": mdp.num_states,
        "initial": mdp.initial_state,
        "terminal": [s for s in mdp.states if mdp.terminal[s]],
        "transitions": [
            {"from": s, "action": a, "to": mdp.transition[(s, a)], "reward": mdp.reward[(s, a)]}
            for s in mdp.states for a in mdp.actions[s]
        ],
    }


def load_mdp(path) -> TabularMdp:
    text, source = _source(path)
    return mdp_from_json(text, source)


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=2) + "\n")


def load_stochastic_mdp(path):
    text, source = _source(path)
    return stochastic_mdp_from_json(text, source)


def stochastic_mdp_from_json(text: str, source: str = "<string>"):
    from .stochastic import StochasticMdp

    doc = _parse_json(text, source)
    n, initial, terminal, rows = _header(doc, source)
    actions = [[] for _ in range(max(n, 0))]
    transition, reward = {}, {}
    for s, a, dist, r in _rows(rows, n, source, stochastic=True):
        actions[s].append(a)
        transition[(s, a)] = dist
        reward[(s, a)] = r
    term = [s in set(terminal) for s in range(max(n, 0))]
    try:
        return StochasticMdp(n, tuple(map(tuple, actions)), transition, reward, tuple(term), initial)
    except MdpError as e:
        raise SchemaError(f"{source}: {e}") from e


def stochastic_mdp_to_dict(smdp) -> dict:
    return {
        "states": smdp.num_states,
        "initial": smdp.initial_state,
        "terminal": [s for s in range(smdp.num_states) if smdp.terminal[s]],
        "transitions": [
            {"from": s, "action": a,
             "to_dist": [{"to": to, "prob": p} for to, p in smdp.transition[(s, a)]],
             "reward": smdp.reward[(s, a)]}
            for s in range(smdp.num_states) for a in smdp.actions[s]
        ],
    }


def save_stochastic_mdp(smdp, path) -> None:
    Path(path).write_text(json.dumps(stochastic_mdp_to_dict(smdp), indent=2) + "\n")
