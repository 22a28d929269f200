"""Command-line front end.

Exit codes: 0 on success, 1 on domain errors (undefined values,
non-convergence, failed checks), 2 on usage errors (bad flags, specs or
files). Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import (
    AggregationError,
    DiscountedSum,
    Statistic,
    UndefinedAtInit,
    fold,
    post_or_none,
)
from .algos import (
    QLearnConfig,
    critic_targets,
    dsum_gae_closed_form,
    greedy_start_value,
    q_learning,
    recursive_gae,
    twin_min_target,
)
from .contraction import check_contraction
from .envs import GridSpec, SchemaError, grid_world, mdp_from_json, stochastic_mdp_from_json, toy_dag
from .mdp import (
    MdpError,
    NonConvergence,
    Policy,
    TabularMdp,
    all_policies,
    bellman_backup,
    enumerate_policies,
    evaluate_policy,
    generate,
    greedy_policy,
    policy_count,
    state_action_statistics,
    value_iteration,
)
from .parse import ParseError, parse_aggregation, split_specs
from .stochastic import (
    StochasticMdp,
    StochasticPolicy,
    exact_aggregate_distribution,
    expectation_gap,
    mc_aggregate_distribution,
    two_step_example,
)

COMMANDS = ("enumerate", "eval", "vi", "qlearn", "mc", "gap", "gae-check")
BUILTIN_ENVS = ("toy-dag", "grid", "two-step")
EVAL_POLICY_CAP = 1000


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    env: str = "toy-dag"
    agg_specs: list[str] = field(default_factory=lambda: ["dsum(1)"])
    seed: int = 0
    seeds: list[int] | None = None
    out: str | None = None
    format: str = "table"
    tol: float = 1e-9
    max_iter: int = 100_000
    horizon: int = 10_000
    minimize: bool = False
    alpha: float = 0.5
    epsilon: float = 0.3
    steps: int = 10_000
    samples: int = 10_000
    policy: int | None = None
    grid: str | None = None

    @property
    def seed_list(self) -> list[int]:
        return self.seeds if self.seeds is not None else [self.seed]


@dataclass
class Results:
    columns: list[str]
    rows: list[list]
    notes: list[str] = field(default_factory=list)
    failed: bool = False


# -- formatting ---------------------------------------------------------------


def format_cell(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "n/a"
        return f"{x:.9g}"
    return str(x)


def emit_csv(results: Results, path=None) -> str:
    """Write header + rows as CSV to ``path`` (or return the text)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(results.columns)
    for row in results.rows:
        w.writerow([format_cell(x) for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def format_table(results: Results) -> str:
    cells = [results.columns] + [[format_cell(x) for x in row] for row in results.rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(results.columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines + results.notes) + "\n"


# -- environment resolution ---------------------------------------------------


def resolve_env(cfg: RunConfig) -> TabularMdp | tuple[StochasticMdp, StochasticPolicy]:
    name = cfg.env
    if name == "toy-dag":
        return toy_dag()
    if name == "grid" or name.startswith("grid:"):
        spec = {}
        if cfg.grid:
            try:
                spec = json.loads(cfg.grid)
            except json.JSONDecodeError as e:
                raise UsageError(f"--grid: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
        if name.startswith("grid:"):
            try:
                rows, cols = (int(x) for x in name[5:].lower().split("x"))
            except ValueError:
                raise UsageError(f"--env {name}: expected grid:<rows>x<cols>")
            spec = {"rows": rows, "cols": cols, "goal": [rows - 1, cols - 1], **spec}
        try:
            return grid_world(GridSpec.from_dict(spec))
        except (MdpError, TypeError) as e:
            raise UsageError(f"grid spec: {e}")
    if name == "two-step":
        return two_step_example()
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"--env {name}: no such builtin environment or file "
                         f"(builtins: {', '.join(BUILTIN_ENVS)})")
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}")
    try:
        if isinstance(doc, dict) and "rows" in doc:
            return grid_world(GridSpec.from_dict(doc))
        rows = doc.get("transitions") if isinstance(doc, dict) else None
        if rows and isinstance(rows[0], dict) and "to_dist" in rows[0]:
            smdp = stochastic_mdp_from_json(text, str(path))
            return smdp, StochasticPolicy.uniform(smdp)
        return mdp_from_json(text, str(path))
    except (MdpError, TypeError) as e:
        raise UsageError(str(e))


def _deterministic(env, command) -> TabularMdp:
    if not isinstance(env, TabularMdp):
        raise UsageError(f"{command} needs a deterministic MDP")
    return env


def _stochastic(env) -> tuple[StochasticMdp, StochasticPolicy]:
    if isinstance(env, TabularMdp):
        smdp = StochasticMdp.from_tabular(env)
        return smdp, StochasticPolicy.uniform(smdp)
    return env


def _policy_str(policy: Policy) -> str:
    return " ".join("-" if a is None else a for a in policy.action_of)


def _objective(cfg):
    return "minimize" if cfg.minimize else "maximize"


# -- commands -----------------------------------------------------------------


def cmd_enumerate(cfg, env, aggs) -> Results:
    mdp = _deterministic(env, "enumerate")
    columns = ["policy_id", *cfg.agg_specs, "truncated"]
    ranked = {spec: enumerate_policies(mdp, agg, cfg.horizon, minimize=cfg.minimize)
              for spec, agg in zip(cfg.agg_specs, aggs)}
    by_index = {spec: {rp.index: rp for rp in rs} for spec, rs in ranked.items()}
    rows = []
    for i in range(policy_count(mdp)):
        vals = [by_index[spec][i].value for spec in cfg.agg_specs]
        truncated = any(by_index[spec][i].truncated for spec in cfg.agg_specs)
        rows.append([i + 1, *vals, truncated])
    notes = [f"objective: {_objective(cfg)}"]
    for spec in cfg.agg_specs:
        best = ranked[spec][0]
        if best.value is not None:
            notes.append(f"best {spec}: policy {best.index + 1} ({format_cell(best.value)})")
    return Results(columns, rows, notes)


def _eval_policies(mdp, cfg):
    n = policy_count(mdp)
    if cfg.policy is not None:
        if not 1 <= cfg.policy <= n:
            raise UsageError(f"--policy must lie in 1..{n}")
        return [(cfg.policy, next(itertools.islice(all_policies(mdp, n), cfg.policy - 1, None)))]
    if n > EVAL_POLICY_CAP:
        raise UsageError(f"{n} policies; pick one with --policy")
    return [(i + 1, pi) for i, pi in enumerate(all_policies(mdp, n))]


def cmd_eval(cfg, env, aggs) -> Results:
    mdp = _deterministic(env, "eval")
    columns = ["policy_id", "state", "aggregation", "value", "q_value", "bellman_residual"]
    rows = []
    for pid, pi in _eval_policies(mdp, cfg):
        for spec, agg in zip(cfg.agg_specs, aggs):
            tau = evaluate_policy(mdp, pi, agg, cfg.tol, cfg.max_iter)
            q = state_action_statistics(mdp, pi, agg, cfg.tol, cfg.max_iter)
            backed = bellman_backup(mdp, pi, agg, tau)
            for s in mdp.states:
                v = post_or_none(agg, tau[s])
                qv = None if mdp.terminal[s] else post_or_none(agg, q[(s, pi(s))])
                b = post_or_none(agg, backed[s])
                res = None if v is None or b is None else (0.0 if v == b else abs(v - b))
                rows.append([pid, s, spec, v, qv, res])
    return Results(columns, rows)


def _contraction_ratio(mdp, agg, table) -> float | None:
    stats = []
    for t in table.entries.values():
        v = post_or_none(agg, t)
        if v is not None and math.isfinite(v) and t not in stats:
            stats.append(t)
    pairs = [(a, b) for a, b in itertools.combinations(stats, 2)
             if agg.post(a) != agg.post(b)]
    rewards = sorted(set(mdp.reward.values()))
    if not pairs or not rewards:
        return None
    return check_contraction(agg, rewards, pairs, threshold=1.0).max_ratio


def cmd_vi(cfg, env, aggs) -> Results:
    mdp = _deterministic(env, "vi")
    columns = ["aggregation", "objective", "start_value", "iterations", "policy",
               "contraction_ratio"]
    rows = []
    for spec, agg in zip(cfg.agg_specs, aggs):
        res = value_iteration(mdp, agg, cfg.tol, cfg.max_iter, minimize=cfg.minimize)
        start = post_or_none(agg, res.table[mdp.initial_state])
        rows.append([spec, _objective(cfg), start, res.iterations, _policy_str(res.policy),
                     _contraction_ratio(mdp, agg, res.table)])
    return Results(columns, rows)


def _qlearn_job(args):
    mdp, spec, cfg, seed = args
    agg = parse_aggregation(spec)
    qcfg = QLearnConfig(cfg.alpha, cfg.epsilon, cfg.steps, seed, cfg.horizon)
    q = q_learning(mdp, agg, qcfg, minimize=cfg.minimize)
    vi = value_iteration(mdp, agg, cfg.tol, cfg.max_iter, minimize=cfg.minimize)
    start = greedy_start_value(mdp, q, cfg.minimize)
    target = agg.post(vi.table[mdp.initial_state])
    err = 0.0 if start == target else abs(start - target)
    unvisited = math.inf if cfg.minimize else -math.inf
    pi = greedy_policy(mdp, q, cfg.minimize, unvisited=unvisited)
    return [seed, spec, start, target, err, _policy_str(pi)]


def _map_seeds(fn, jobs, parallel):
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_qlearn(cfg, env, aggs) -> Results:
    mdp = _deterministic(env, "qlearn")
    for spec, agg in zip(cfg.agg_specs, aggs):
        if not agg.blendable:
            raise AggregationError(f"{spec} statistics cannot be blended; Q-learning unavailable")
    jobs = [(mdp, spec, cfg, seed) for seed in cfg.seed_list for spec in cfg.agg_specs]
    rows = _map_seeds(_qlearn_job, jobs, cfg.seeds is not None)
    order = {spec: i for i, spec in enumerate(cfg.agg_specs)}
    rows.sort(key=lambda r: (r[0], order[r[1]]))
    return Results(["seed", "aggregation", "start_value", "vi_value", "abs_error", "policy"], rows)


def _mc_job(args):
    smdp, policy, spec, cfg, seed = args
    agg = parse_aggregation(spec)
    dist = mc_aggregate_distribution(smdp, policy, agg, cfg.samples, seed, cfg.horizon)
    n = cfg.samples - dist.excluded
    try:
        exact = exact_aggregate_distribution(smdp, policy, agg, cfg.horizon).mean()
    except (MdpError, UndefinedAtInit):
        exact = None
    return [seed, spec, n, dist.mean(), dist.std() / math.sqrt(n), exact, dist.excluded]


def cmd_mc(cfg, env, aggs) -> Results:
    smdp, policy = _stochastic(env)
    if cfg.samples < 1:
        raise UsageError("--samples must be at least 1")
    jobs = [(smdp, policy, spec, cfg, seed) for seed in cfg.seed_list for spec in cfg.agg_specs]
    rows = _map_seeds(_mc_job, jobs, cfg.seeds is not None)
    order = {spec: i for i, spec in enumerate(cfg.agg_specs)}
    rows.sort(key=lambda r: (r[0], order[r[1]]))
    return Results(["seed", "aggregation", "samples", "mean", "std_error", "exact_mean",
                    "excluded"], rows)


def cmd_gap(cfg, env, aggs) -> Results:
    smdp, policy = _stochastic(env)
    rows = []
    for spec, agg in zip(cfg.agg_specs, aggs):
        ea, ae = expectation_gap(smdp, policy, agg, cfg.horizon)
        rows.append([spec, ea, ae, ea - ae])
    return Results(["aggregation", "expected_aggregated", "aggregated_expected", "gap"], rows)


def _gae_oracle_error(gamma, rng, episodes=500, max_len=50) -> float:
    agg = DiscountedSum(gamma)
    worst = 0.0
    for _ in range(episodes):
        n = rng.randint(1, max_len)
        rewards = [rng.uniform(-10, 10) for _ in range(n)]
        values = [rng.uniform(-10, 10) for _ in range(n + 1)]
        lam = rng.random()
        stats = [Statistic((v,)) for v in values]
        for normalized in (False, True):
            a = recursive_gae(rewards, stats, agg, lam, normalized)
            b = dsum_gae_closed_form(rewards, values, gamma, lam, normalized=normalized)
            worst = max(worst, max((abs(x - y) for x, y in zip(a, b)), default=0.0))
    return worst


def _check_policies(mdp):
    n = policy_count(mdp)
    if n <= EVAL_POLICY_CAP:
        return list(all_policies(mdp, n))
    return []


def cmd_gae_check(cfg, env, aggs) -> Results:
    mdp = _deterministic(env, "gae-check")
    rows = []
    failed = False

    def record(spec, check, cases, err):
        nonlocal failed
        ok = err is not None and err <= cfg.tol
        failed |= not ok
        rows.append([spec, check, cases, err, ok])

    for spec, agg in zip(cfg.agg_specs, aggs):
        rng = random.Random(cfg.seed)
        if isinstance(agg, DiscountedSum):
            record(spec, "closed-form", 500, _gae_oracle_error(agg.gamma, rng))
        policies = _check_policies(mdp) or [value_iteration(mdp, agg, cfg.tol, cfg.max_iter).policy]
        adv_err, tgt_err, cases = 0.0, 0.0, 0
        for pi in policies:
            tau = evaluate_policy(mdp, pi, agg, cfg.tol, cfg.max_iter)
            traj = generate(mdp, pi, None, cfg.horizon)
            if traj.truncated or not traj.rewards:
                continue
            stats = [tau[s] for s in traj.states]
            try:
                adv = recursive_gae(traj.rewards, stats, agg, 0.0, normalized=False)
            except UndefinedAtInit:
                continue
            cases += 1
            adv_err = max(adv_err, max(abs(a) for a in adv))
            for t, target in enumerate(critic_targets(traj, tau, agg)):
                want = fold(agg, traj.rewards[t:])
                got = agg.post(target)
                tgt_err = max(tgt_err, 0.0 if want == got else abs(want - got))
        record(spec, "zero-advantage", cases, adv_err if cases else None)
        record(spec, "critic-targets", cases, tgt_err if cases else None)
        rewards = sorted(set(mdp.reward.values()))
        stats = [tau[s] for tau in [evaluate_policy(mdp, pi, agg, cfg.tol, cfg.max_iter)
                                    for pi in policies[:20]] for s in mdp.states]
        worst, n = 0.0, 0
        for t1, t2 in itertools.product(stats[:30], repeat=2):
            for r in rewards:
                t = twin_min_target(r, t1, t2, agg)
                v = post_or_none(agg, t)
                a, b = post_or_none(agg, agg.update(r, t1)), post_or_none(agg, agg.update(r, t2))
                if None in (v, a, b):
                    continue
                n += 1
                worst = max(worst, v - min(a, b))
        record(spec, "twin-min", n, worst)
    return Results(["aggregation", "check", "cases", "max_abs_error", "passed"], rows,
                   failed=failed)


HANDLERS = {
    "enumerate": cmd_enumerate,
    "eval": cmd_eval,
    "vi": cmd_vi,
    "qlearn": cmd_qlearn,
    "mc": cmd_mc,
    "gap": cmd_gap,
    "gae-check": cmd_gae_check,
}


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        if cfg.command not in HANDLERS:
            raise UsageError(f"unknown command {cfg.command!r}")
        if cfg.format not in ("table", "csv"):
            raise UsageError("--format must be table or csv")
        if not cfg.agg_specs:
            raise UsageError("--aggs is empty")
        aggs = [parse_aggregation(s) for s in cfg.agg_specs]
        env = resolve_env(cfg)
        results = HANDLERS[cfg.command](cfg, env, aggs)
    except (UsageError, ParseError, SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=stderr)
        return 2
    except (AggregationError, NonConvergence, MdpError, ValueError) as e:
        print(f"error: {e}", file=stderr)
        return 1
    text = emit_csv(results) if cfg.format == "csv" else format_table(results)
    if cfg.out:
        try:
            Path(cfg.out).write_text(text)
        except OSError as e:
            print(f"error: cannot write {cfg.out}: {e}", file=stderr)
            return 1
    else:
        stdout.write(text)
    return 1 if results.failed else 0


def _seed_range(text: str) -> list[int]:
    try:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}")
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"empty or negative seed range {text!r}")
    return list(range(lo, hi + 1))


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("expected an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recagg",
                                description="Tabular RL with recursive reward aggregation.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--env", default="toy-dag",
                   help="builtin (toy-dag, grid, grid:RxC, two-step) or JSON file")
    p.add_argument("--grid", help="inline grid spec as JSON")
    p.add_argument("--aggs", default="dsum(1)", help="comma-separated aggregation specs")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--seeds", type=_seed_range, help="inclusive seed range a..b")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--out")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--minimize", action="store_true",
                   help="prefer lower values (e.g. for range or variance)")
    p.add_argument("--alpha", type=float, default=0.5, help="Q-learning rate")
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=10_000, help="Q-learning steps")
    p.add_argument("--samples", type=int, default=10_000, help="Monte-Carlo rollouts")
    p.add_argument("--policy", type=int, help="1-based policy index for eval")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=args.command, env=args.env, agg_specs=split_specs(args.aggs), seed=args.seed,
        seeds=args.seeds, out=args.out, format=args.format, tol=args.tol,
        max_iter=args.max_iter, horizon=args.horizon, minimize=args.minimize,
        alpha=args.alpha, epsilon=args.epsilon, steps=args.steps, samples=args.samples,
        policy=args.policy, grid=args.grid,
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
