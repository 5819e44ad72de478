"""Utilities and action orderings over objective vectors."""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@functools.total_ordering
class _NegInfinity:
    """Sentinel ordered below every real number.

    Arithmetic is deliberately unsupported so it never leaks into averages.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEG_INFINITY"

    __str__ = __repr__

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return other is not self

    def __hash__(self):
        return hash("NEG_INFINITY")

    def __reduce__(self):
        return (_NegInfinity, ())


NEG_INFINITY = _NegInfinity()


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True)
class LinearWeights:
    w: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if any(x < 0 or not math.isfinite(x) for x in w):
            raise ValueError(f"weights must be finite and non-negative, got {w}")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got sum {sum(w):g}")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class TLOParams:
    """Thresholds as ``(objective, threshold)`` pairs in priority order.

    ``payoff`` is the unthresholded objective maximised last; by default the
    highest-index objective without a threshold.
    """

    thresholds: tuple[tuple[int, float], ...] = ((0, 0.88),)
    payoff: int | None = None

    def __post_init__(self):
        th = tuple((int(i), float(t)) for i, t in self.thresholds)
        idx = [i for i, _ in th]
        if len(set(idx)) != len(idx) or any(i < 0 for i in idx):
            raise ValueError(f"threshold objectives must be distinct and valid, got {idx}")
        if self.payoff is not None and self.payoff in idx:
            raise ValueError("payoff objective cannot also be thresholded")
        object.__setattr__(self, "thresholds", th)

    def payoff_index(self, n_objectives: int) -> int:
        if self.payoff is not None:
            if self.payoff >= n_objectives:
                raise ValueError(f"payoff index {self.payoff} out of range")
            return self.payoff
        used = {i for i, _ in self.thresholds}
        free = [i for i in range(n_objectives) if i not in used]
        if not free:
            raise ValueError("TLO needs one unthresholded objective")
        return free[-1]

    def key(self, v: Sequence[float]) -> tuple[float, ...]:
        """Sort key: clipped thresholded objectives, then the payoff."""
        return tuple(min(v[i], t) for i, t in self.thresholds) + (
            v[self.payoff_index(len(v))],
        )


@dataclass(frozen=True)
class ThresholdUtility:
    """Payoff objective if the guarded objective clears ``threshold``, else NEG_INFINITY."""

    threshold: float
    guarded: int = 0
    payoff: int = 1
    strict: bool = True

    def __post_init__(self):
        if self.guarded == self.payoff or self.guarded < 0 or self.payoff < 0:
            raise ValueError("guarded and payoff objectives must be distinct and valid")

    def satisfied(self, v: Sequence[float]) -> bool:
        g = v[self.guarded]
        return g > self.threshold if self.strict else g >= self.threshold

    def __call__(self, v: Sequence[float]):
        return threshold_utility(v, self)


def linear_scalarise(v: Sequence[float], w: LinearWeights | Sequence[float]) -> float:
    weights = w.w if isinstance(w, LinearWeights) else tuple(w)
    if len(weights) != len(v):
        raise ValueError(f"length mismatch: {len(v)} values, {len(weights)} weights")
    return float(sum(wi * vi for wi, vi in zip(weights, v)))


def threshold_utility(v: Sequence[float], u: ThresholdUtility):
    if u.satisfied(v):
        return float(v[u.payoff])
    return NEG_INFINITY


def tlo_compare(v1: Sequence[float], v2: Sequence[float], t: TLOParams) -> Ordering:
    if len(v1) != len(v2):
        raise ValueError("length mismatch")
    k1, k2 = t.key(v1), t.key(v2)
    if k1 < k2:
        return Ordering.LESS
    if k1 > k2:
        return Ordering.GREATER
    return Ordering.EQUAL


def as_key(order) -> Callable[[Sequence[float]], object]:
    """Turn an ordering spec into a sort key over objective vectors.

    Accepts :class:`LinearWeights`, :class:`TLOParams`, :class:`ThresholdUtility`
    or any callable mapping a vector to something comparable.
    """
    if isinstance(order, LinearWeights):
        return lambda v: linear_scalarise(v, order)
    if isinstance(order, TLOParams):
        return order.key
    if callable(order):
        return order
    raise TypeError(f"unsupported ordering {order!r}")


def argmax_by(values, order):
    """Best action of ``(action, vector)`` pairs; ties go to the earliest entry."""
    values = list(values)
    if not values:
        raise ValueError("argmax_by of an empty sequence")
    key = as_key(order)
    best_action, best_score = values[0][0], key(values[0][1])
    for action, v in values[1:]:
        score = key(v)
        if score > best_score:
            best_action, best_score = action, score
    return best_action


def parse_utility(text: str):
    """Parse a utility spec.

    ``threshold:0.88[:strict]`` gives a :class:`ThresholdUtility` (non-strict
    unless ``strict``); ``linear:0.5,0.5`` gives :class:`LinearWeights`.
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "threshold":
        parts = [p.strip() for p in rest.split(":") if p.strip()]
        if not parts:
            raise ValueError("threshold utility needs a value, e.g. threshold:0.88")
        strict = False
        for flag in parts[1:]:
            if flag not in ("strict", "nonstrict"):
                raise ValueError(f"unknown threshold flag {flag!r}")
            strict = flag == "strict"
        return ThresholdUtility(float(parts[0]), strict=strict)
    if kind == "linear":
        return LinearWeights(tuple(float(x) for x in rest.split(",")))
    raise ValueError(f"unknown utility {text!r}")


def utility_value(v, utility) -> float | _NegInfinity:
    """Scalar utility of a mean-return vector for any supported utility spec."""
    v = np.asarray(v, dtype=float)
    if isinstance(utility, LinearWeights):
        return linear_scalarise(v, utility)
    if isinstance(utility, ThresholdUtility):
        return threshold_utility(v, utility)
    return utility(v)
