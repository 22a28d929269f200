"""Recursive reward aggregation: statistics, update/post pairs and combinators.

An aggregation folds a reward list from the right::

    fold([r1, r2, r3]) == post(r1 |> (r2 |> (r3 |> init)))

where ``|>`` is :meth:`Aggregation.update`. The catalog below covers the
discounted sum/min/max, log-sum-exp, range, mean, variance (two variants),
top-k and the Sharpe ratio, plus sums, differences and interpolations of
any two aggregations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

INF = math.inf


class AggregationError(ValueError):
    """Base class for aggregation errors."""


class ArityError(AggregationError):
    """A statistic does not have the shape its aggregation expects."""


class UndefinedAtInit(AggregationError):
    """post() of a statistic that summarises no rewards (e.g. mean of [])."""


class CapabilityError(AggregationError):
    """The aggregation does not support the requested operation."""


@dataclass(frozen=True, slots=True)
class Statistic:
    """Accumulator carried through a fold.

    ``values`` holds the extended-real components; ``count`` is the length
    slot used by the counting aggregations (0 when unused). ``count`` is an
    integer under update but may become fractional under :func:`blend`.
    """

    values: tuple[float, ...]
    count: float = 0

    def __repr__(self) -> str:
        if self.count:
            return f"Statistic({self.values!r}, count={self.count!r})"
        return f"Statistic({self.values!r})"


def _scale(gamma: float, x: float) -> float:
    # infinite sentinels are absorbing, so gamma=0 never yields 0*inf=nan
    return x if math.isinf(x) else gamma * x


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise AggregationError(f"discount must lie in [0, 1], got {gamma}")


def _fmt(x: float) -> str:
    return f"{x:g}"


class Aggregation:
    """Base class for an (init, update, post) triple.

    Subclasses are frozen dataclasses; ``update`` and ``post`` are the
    unchecked fast paths used by the solvers. The module-level functions
    :func:`update`, :func:`post` and friends validate their arguments.
    """

    name: str = ""
    arity: int = 1
    blendable: bool = True
    # statistics whose post is undefined when nothing has been aggregated
    counting: bool = False

    @property
    def init(self) -> Statistic:
        raise NotImplementedError

    def update(self, r: float, t: Statistic) -> Statistic:
        raise NotImplementedError

    def post(self, t: Statistic) -> float:
        raise NotImplementedError

    @property
    def params(self) -> dict[str, float]:
        return {}

    @property
    def spec(self) -> str:
        """Canonical spec string accepted by :func:`parse_aggregation`."""
        ps = self.params
        if not ps:
            return self.name
        return f"{self.name}({','.join(_fmt(v) for v in ps.values())})"

    def __str__(self) -> str:
        return self.spec


@dataclass(frozen=True)
class DiscountedSum(Aggregation):
    gamma: float = 1.0
    name = "dsum"

    def __post_init__(self):
        _check_gamma(self.gamma)

    @property
    def params(self):
        return {"gamma": self.gamma}

    @property
    def init(self):
        return Statistic((0.0,))

    def update(self, r, t):
        return Statistic((r + self.gamma * t.values[0],))

    def post(self, t):
        return t.values[0]


@dataclass(frozen=True)
class DiscountedMin(Aggregation):
    gamma: float = 1.0
    name = "dmin"

    def __post_init__(self):
        _check_gamma(self.gamma)

    @property
    def params(self):
        return {"gamma": self.gamma}

    @property
    def init(self):
        return Statistic((INF,))

    def update(self, r, t):
        return Statistic((min(r, _scale(self.gamma, t.values[0])),))

    def post(self, t):
        return t.values[0]


@dataclass(frozen=True)
class DiscountedMax(Aggregation):
    gamma: float = 1.0
    name = "dmax"

    def __post_init__(self):
        _check_gamma(self.gamma)

    @property
    def params(self):
        return {"gamma": self.gamma}

    @property
    def init(self):
        return Statistic((-INF,))

    def update(self, r, t):
        return Statistic((max(r, _scale(self.gamma, t.values[0])),))

    def post(self, t):
        return t.values[0]


def logaddexp(a: float, b: float) -> float:
    if a == -INF:
        return b
    if b == -INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


@dataclass(frozen=True)
class LogSumExp(Aggregation):
    name = "lse"

    @property
    def init(self):
        return Statistic((-INF,))

    def update(self, r, t):
        return Statistic((logaddexp(r, t.values[0]),))

    def post(self, t):
        return t.values[0]


@dataclass(frozen=True)
class Range(Aggregation):
    """Statistic is (max, min); post is max - min."""

    name = "range"
    arity = 2

    @property
    def init(self):
        return Statistic((-INF, INF))

    def update(self, r, t):
        m, n = t.values
        return Statistic((max(r, m), min(r, n)))

    def post(self, t):
        m, n = t.values
        return m - n


@dataclass(frozen=True)
class Mean(Aggregation):
    """Length and sum."""

    name = "mean"
    counting = True

    @property
    def init(self):
        return Statistic((0.0,), 0)

    def update(self, r, t):
        return Statistic((t.values[0] + r,), t.count + 1)

    def post(self, t):
        if t.count == 0:
            raise UndefinedAtInit("mean of an empty reward list")
        return t.values[0] / t.count


@dataclass(frozen=True)
class RunningMean(Aggregation):
    """Length and running mean; same values as :class:`Mean`."""

    name = "runmean"
    counting = True

    @property
    def init(self):
        return Statistic((0.0,), 0)

    def update(self, r, t):
        n = t.count
        return Statistic(((n * t.values[0] + r) / (n + 1),), n + 1)

    def post(self, t):
        if t.count == 0:
            raise UndefinedAtInit("mean of an empty reward list")
        return t.values[0]


@dataclass(frozen=True)
class Variance(Aggregation):
    """Population variance from length, sum and sum of squares."""

    name = "var"
    arity = 2
    counting = True

    @property
    def init(self):
        return Statistic((0.0, 0.0), 0)

    def update(self, r, t):
        s, q = t.values
        return Statistic((s + r, q + r * r), t.count + 1)

    def post(self, t):
        n = t.count
        if n == 0:
            raise UndefinedAtInit("variance of an empty reward list")
        s, q = t.values
        return q / n - (s / n) ** 2


def _welford(r: float, t: Statistic) -> Statistic:
    n = t.count
    m, v = t.values
    m_new = (n * m + r) / (n + 1)
    v_new = v + (n * (r - m) ** 2 - (n + 1) * v) / (n + 1) ** 2
    return Statistic((m_new, v_new), n + 1)


@dataclass(frozen=True)
class WelfordVariance(Aggregation):
    """Population variance from length, mean and variance (Welford)."""

    name = "welfordvar"
    arity = 2
    counting = True

    @property
    def init(self):
        return Statistic((0.0, 0.0), 0)

    def update(self, r, t):
        return _welford(r, t)

    def post(self, t):
        if t.count == 0:
            raise UndefinedAtInit("variance of an empty reward list")
        return t.values[1]


@dataclass(frozen=True)
class Sharpe(Aggregation):
    """Mean over standard deviation, tracked with Welford updates.

    Zero variance posts a signed infinity (0 when the mean is also 0) so
    that comparisons during learning stay total.
    """

    name = "sharpe"
    arity = 2
    counting = True

    @property
    def init(self):
        return Statistic((0.0, 0.0), 0)

    def update(self, r, t):
        return _welford(r, t)

    def post(self, t):
        if t.count == 0:
            raise UndefinedAtInit("Sharpe ratio of an empty reward list")
        m, v = t.values
        if v <= 0.0:
            if m == 0.0:
                return 0.0
            return math.copysign(INF, m)
        return m / math.sqrt(v)


@dataclass(frozen=True)
class TopK(Aggregation):
    """k-th largest reward; buffer kept sorted in descending order."""

    k: int = 1
    name = "top"
    blendable = False

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise AggregationError(f"top-k needs an integer k >= 1, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def arity(self):
        return self.k

    @property
    def params(self):
        return {"k": self.k}

    @property
    def init(self):
        return Statistic((-INF,) * self.k)

    def update(self, r, t):
        b = t.values
        if r <= b[-1]:
            return t
        return Statistic(tuple(sorted(b[:-1] + (r,), reverse=True)))

    def post(self, t):
        return t.values[-1]


COMBINE_MODES = ("add", "sub", "lerp")


@dataclass(frozen=True)
class Composite(Aggregation):
    """Product of two aggregations with post = combination of their posts.

    The statistic concatenates ``(count, *values)`` of each side, so the
    two count slots stay separate. ``lerp`` posts
    ``lam * left + (1 - lam) * right``.
    """

    left: Aggregation = field(default_factory=DiscountedSum)
    right: Aggregation = field(default_factory=DiscountedSum)
    mode: str = "add"
    lam: float = 0.0

    def __post_init__(self):
        if self.mode not in COMBINE_MODES:
            raise AggregationError(f"unknown combine mode {self.mode!r}")
        if self.mode == "lerp" and not 0.0 <= self.lam <= 1.0:
            raise AggregationError(f"interpolation weight must lie in [0, 1], got {self.lam}")

    @property
    def name(self):
        return self.mode

    @property
    def arity(self):
        return self.left.arity + self.right.arity + 2

    @property
    def blendable(self):
        return self.left.blendable and self.right.blendable

    @property
    def counting(self):
        return self.left.counting or self.right.counting

    @property
    def spec(self):
        if self.mode == "lerp":
            return f"lerp({self.left.spec},{self.right.spec},{_fmt(self.lam)})"
        return f"{self.mode}({self.left.spec},{self.right.spec})"

    @property
    def params(self):
        return {"lam": self.lam} if self.mode == "lerp" else {}

    def split(self, t: Statistic) -> tuple[Statistic, Statistic]:
        w = self.left.arity + 1
        a, b = t.values[:w], t.values[w:]
        return Statistic(a[1:], a[0]), Statistic(b[1:], b[0])

    @staticmethod
    def _join(a: Statistic, b: Statistic) -> Statistic:
        return Statistic((a.count, *a.values, b.count, *b.values))

    @property
    def init(self):
        return self._join(self.left.init, self.right.init)

    def update(self, r, t):
        a, b = self.split(t)
        return self._join(self.left.update(r, a), self.right.update(r, b))

    def post(self, t):
        a, b = self.split(t)
        x, y = self.left.post(a), self.right.post(b)
        if self.mode == "add":
            v = x + y
        elif self.mode == "sub":
            v = x - y
        else:
            v = self.lam * x + (1.0 - self.lam) * y
        if math.isnan(v):
            # opposite infinite sentinels, e.g. min and max of an empty list
            raise UndefinedAtInit(f"{self.spec} is undefined here ({x} and {y})")
        return v


# -- checked operations -------------------------------------------------------


def _check(agg: Aggregation, t: Statistic) -> None:
    if len(t.values) != agg.arity:
        raise ArityError(
            f"{agg.spec} expects {agg.arity} statistic component(s), got {len(t.values)}"
        )
    if any(math.isnan(x) for x in t.values) or math.isnan(t.count):
        raise AggregationError(f"NaN in statistic {t!r}")


def update(agg: Aggregation, r: float, t: Statistic) -> Statistic:
    """Return ``r |> t``: the statistic of ``[r, *rest]`` given that of ``rest``."""
    if not math.isfinite(r):
        raise AggregationError(f"reward must be finite, got {r}")
    _check(agg, t)
    return agg.update(r, t)


def post(agg: Aggregation, t: Statistic) -> float:
    _check(agg, t)
    return agg.post(t)


def aggregate(agg: Aggregation, rewards: Sequence[float]) -> Statistic:
    """Right fold of ``rewards`` into a statistic, starting from ``agg.init``."""
    t = agg.init
    for r in reversed(rewards):
        t = update(agg, r, t)
    return t


def fold(agg: Aggregation, rewards: Sequence[float]) -> float:
    return agg.post(aggregate(agg, rewards))


def compare(agg: Aggregation, t1: Statistic, t2: Statistic) -> int:
    """Pullback total preorder: -1, 0 or 1 as post(t1) is <, == or > post(t2)."""
    a, b = post(agg, t1), post(agg, t2)
    return (a > b) - (a < b)


def blend(agg: Aggregation, t: Statistic, target: Statistic, alpha: float) -> Statistic:
    """``t + alpha * (target - t)`` componentwise.

    A component of ``t`` that still holds an infinite sentinel is replaced
    by the target's component outright.
    """
    if not agg.blendable:
        raise CapabilityError(f"{agg.spec} statistics cannot be blended")
    if not 0.0 < alpha <= 1.0:
        raise AggregationError(f"alpha must lie in (0, 1], got {alpha}")
    _check(agg, t)
    _check(agg, target)
    return _blend(t, target, alpha)


def _blend(t: Statistic, target: Statistic, alpha: float) -> Statistic:
    vals = tuple(
        y if math.isinf(x) else x + alpha * (y - x)
        for x, y in zip(t.values, target.values)
    )
    return Statistic(vals, t.count + alpha * (target.count - t.count))


def combine(agg1: Aggregation, agg2: Aggregation, mode: str, lam: float = 0.0) -> Composite:
    return Composite(agg1, agg2, mode, lam)


def post_or_none(agg: Aggregation, t: Statistic) -> float | None:
    try:
        return agg.post(t)
    except UndefinedAtInit:
        return None


def catalog(gamma: float = 1.0, k: int = 2) -> list[Aggregation]:
    """One instance of every catalog aggregation."""
    return [
        DiscountedSum(gamma),
        DiscountedMin(gamma),
        DiscountedMax(gamma),
        LogSumExp(),
        Range(),
        Mean(),
        RunningMean(),
        Variance(),
        WelfordVariance(),
        TopK(k),
        Sharpe(),
    ]
