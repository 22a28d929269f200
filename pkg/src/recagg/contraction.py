"""Premetrics on statistics and an empirical contraction check for updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .aggregation import Aggregation, AggregationError, Statistic, UndefinedAtInit


def pullback_distance(agg: Aggregation, t1: Statistic, t2: Statistic) -> float:
    """|post(t1) - post(t2)|, with equal statistics at distance 0.

    Statistics whose posts are undefined or infinite and unequal are
    infinitely far apart.
    """
    if t1 == t2:
        return 0.0
    try:
        a, b = agg.post(t1), agg.post(t2)
    except UndefinedAtInit:
        return math.inf
    if a == b:
        return 0.0
    return abs(a - b)


def euclidean_distance(agg: Aggregation, t1: Statistic, t2: Statistic) -> float:
    """Componentwise Euclidean distance over values and the count slot."""
    if t1 == t2:
        return 0.0
    acc = (t1.count - t2.count) ** 2
    for x, y in zip(t1.values, t2.values):
        if x == y:
            continue
        acc += (x - y) ** 2
    return math.sqrt(acc)


PREMETRICS = {"pullback": pullback_distance, "euclidean": euclidean_distance}


def table_distance(agg: Aggregation, a, b, premetric: str = "pullback") -> float:
    """Sup over keys of the premetric between two mappings to statistics."""
    d = PREMETRICS[premetric]
    return max((d(agg, a[k], b[k]) for k in a), default=0.0)


@dataclass
class ContractionReport:
    sampled_pairs: int
    max_ratio: float
    threshold: float
    violating_samples: list[tuple[float, Statistic, Statistic]] = field(default_factory=list)

    @property
    def contractive(self) -> bool:
        return not self.violating_samples


def check_contraction(
    agg: Aggregation,
    reward_samples: Sequence[float],
    statistic_pairs: Iterable[tuple[Statistic, Statistic]],
    threshold: float,
    premetric: str = "pullback",
    slack: float = 1e-12,
) -> ContractionReport:
    """Measure d(r |> t1, r |> t2) / d(t1, t2) over all samples.

    Pairs at distance 0 are skipped. Every (r, t1, t2) whose ratio exceeds
    ``threshold + slack`` is reported; the slack absorbs float rounding.
    """
    if premetric not in PREMETRICS:
        raise AggregationError(f"unknown premetric {premetric!r}")
    d = PREMETRICS[premetric]
    pairs = list(statistic_pairs)
    if not reward_samples or not pairs:
        raise AggregationError("contraction check needs at least one reward and one pair")
    n, worst, bad = 0, 0.0, []
    for t1, t2 in pairs:
        d0 = d(agg, t1, t2)
        if d0 == 0.0:
            continue
        if math.isinf(d0):
            raise AggregationError(f"statistics {t1!r}, {t2!r} are not at finite distance")
        for r in reward_samples:
            ratio = d(agg, agg.update(r, t1), agg.update(r, t2)) / d0
            n += 1
            worst = max(worst, ratio)
            if ratio > threshold + slack:
                bad.append((r, t1, t2))
    return ContractionReport(n, worst, threshold, bad)
