"""Exact policy-space analysis of small tabular MOMDPs.

Everything here works from the model: policies are enumerated and evaluated
exactly, so the results serve as ground truth for the learners.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .momdp import (
    TERMINAL,
    DeterministicPolicy,
    MOMDPError,
    TabularMOMDP,
    check_policy,
    expected_return_exact,
)
from .scalarisation import (
    NEG_INFINITY,
    LinearWeights,
    ThresholdUtility,
    linear_scalarise,
    utility_value,
)


class OracleError(MOMDPError):
    pass


class InfeasibleError(OracleError):
    pass


@dataclass(frozen=True)
class PolicyValuePoint:
    policy: DeterministicPolicy
    value: np.ndarray
    pareto_optimal: bool
    on_ccs: bool


@dataclass(frozen=True)
class MixturePolicy:
    components: tuple[tuple[DeterministicPolicy, float], ...]

    def __post_init__(self):
        weights = [w for _, w in self.components]
        if not weights or any(w <= 0 or not math.isfinite(w) for w in weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {sum(weights):g}")


@dataclass
class Optimum:
    policy: DeterministicPolicy
    value: np.ndarray
    utility: float
    feasible: bool = True
    mode: str = "ser"

    def __iter__(self):
        return iter((self.policy, self.value, self.utility))


def enumerate_policies(env: TabularMOMDP, cap: int = 10**6) -> list[DeterministicPolicy]:
    """All deterministic stationary policies, in declared state/action order."""
    count = math.prod(len(env.actions[s]) for s in env.state_ids)
    if count > cap:
        raise OracleError(f"{count} deterministic policies exceed the cap of {cap}")
    return [
        DeterministicPolicy(dict(zip(env.state_ids, combo)))
        for combo in itertools.product(*(env.actions[s] for s in env.state_ids))
    ]


def policy_label(env: TabularMOMDP, policy: DeterministicPolicy) -> str:
    """Short name: action initials (``DI``) when unambiguous, else ``(pi2,pi3)``.

    States with a single available action are left out.
    """
    states = [s for s in env.state_ids if len(env.actions[s]) > 1] or list(env.state_ids)
    initials_ok = all(
        len({a[0] for a in env.actions[s]}) == len(env.actions[s]) for s in states
    )
    if initials_ok:
        return "".join(policy[s][0] for s in states)
    return "(" + ",".join(policy[s] for s in states) + ")"


def dominates(a, b, tol: float = 0.0) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(a >= b - tol) and np.any(a > b + tol))


def pareto_filter(points: Sequence[Sequence[float]], tol: float = 0.0) -> list[int]:
    """Indices of non-dominated points. Equal points are all kept."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 and len(pts):
        raise ValueError("points must all have the same length")
    keep = []
    for i in range(len(pts)):
        if not any(dominates(pts[j], pts[i], tol) for j in range(len(pts)) if j != i):
            keep.append(i)
    return keep


def ccs_2objective(points: Sequence[Sequence[float]], tol: float = 1e-12) -> list[int]:
    """Indices of points on the upper-right convex hull, by objective-0 value.

    These are the points some non-negative linear weighting can select.
    Collinear points on a hull edge are included.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return []
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise OracleError("convex coverage set is only supported for 2 objectives")
    front = pareto_filter(pts)
    distinct = sorted({(pts[i, 0], pts[i, 1]) for i in front})
    scale = max(1.0, float(np.abs(pts).max()))
    hull: list[tuple[float, float]] = []
    for p in distinct:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            cross = (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1)
            if cross > tol * scale * scale:
                hull.pop()
            else:
                break
        hull.append(p)
    on_hull = set(hull)
    chosen = [i for i in front if (pts[i, 0], pts[i, 1]) in on_hull]
    return sorted(chosen, key=lambda i: (pts[i, 0], i))


def policy_table(env: TabularMOMDP, policies=None) -> list[PolicyValuePoint]:
    policies = enumerate_policies(env) if policies is None else list(policies)
    values = [expected_return_exact(env, p) for p in policies]
    front = set(pareto_filter(values))
    ccs = set(ccs_2objective(values)) if env.num_objectives == 2 else set()
    return [
        PolicyValuePoint(p, v, i in front, i in ccs)
        for i, (p, v) in enumerate(zip(policies, values))
    ]


def _fallback_key(value, utility):
    if isinstance(utility, ThresholdUtility):
        return (value[utility.guarded], value[utility.payoff])
    return tuple(value)


def _best(candidates, utility, mode) -> Optimum:
    best = None
    for policy, value, u in candidates:
        if best is None or u > best.utility:
            best = Optimum(policy, value, u, True, mode)
    if best.utility is NEG_INFINITY:
        fallback = None
        for policy, value, _ in candidates:
            if fallback is None or _fallback_key(value, utility) > _fallback_key(fallback.value, utility):
                fallback = Optimum(policy, value, NEG_INFINITY, False, mode)
        return fallback
    return best


def ser_optimal(env: TabularMOMDP, utility, policies=None) -> Optimum:
    """Deterministic policy maximising the utility of its mean return.

    If every policy scores NEG_INFINITY the result is flagged infeasible and
    holds the policy with the best guarded objective instead.
    """
    policies = enumerate_policies(env) if policies is None else list(policies)
    candidates = []
    for p in policies:
        v = expected_return_exact(env, p)
        candidates.append((p, v, utility_value(v, utility)))
    return _best(candidates, utility, "ser")


def trajectories(env: TabularMOMDP, policy: DeterministicPolicy, cap: int = 10**6):
    """``(probability, return)`` for every outcome sequence of ``policy``."""
    check_policy(env, policy)
    out = []

    def walk(s, prob, ret, depth):
        if depth > env.horizon:
            raise OracleError(f"policy exceeds horizon {env.horizon}")
        for o in env.transitions[(s, policy[s])]:
            r = ret + np.asarray(o.reward, dtype=float)
            if o.successor == TERMINAL:
                out.append((prob * o.probability, r))
                if len(out) > cap:
                    raise OracleError(f"more than {cap} trajectories")
            else:
                walk(o.successor, prob * o.probability, r, depth + 1)

    walk(env.start_state, 1.0, np.zeros(env.num_objectives), 1)
    return out


def esr_value(env: TabularMOMDP, policy: DeterministicPolicy, utility, cap: int = 10**6):
    """Exact expected utility of the episodic return."""
    total = 0.0
    for prob, ret in trajectories(env, policy, cap):
        u = utility_value(ret, utility)
        if u is NEG_INFINITY:
            return NEG_INFINITY
        total += prob * u
    return total


def _reachable_values(env, policy):
    """Expected return-to-go from every state reachable under ``policy``."""
    values = {}

    def value(s):
        if s not in values:
            v = env.mean_reward(s, policy[s])
            for o in env.transitions[(s, policy[s])]:
                if o.successor != TERMINAL:
                    v = v + o.probability * value(o.successor)
            values[s] = v
        return values[s]

    value(env.start_state)
    return values


def per_branch_feasible(env: TabularMOMDP, policy: DeterministicPolicy,
                        utility: ThresholdUtility) -> bool:
    """True if the guarded objective's expected return-to-go clears the
    threshold at every state the policy can reach."""
    return all(utility.satisfied(v) for v in _reachable_values(env, policy).values())


def esr_optimal(env: TabularMOMDP, utility, mode: str = "episode", policies=None) -> Optimum:
    """Policy maximising expected scalarised return.

    ``mode="episode"`` scores each policy by :func:`esr_value`.
    ``mode="per_branch"`` instead requires the threshold to hold from every
    reachable state (each branch must succeed on its own) and then maximises
    the payoff of the mean return; it needs a :class:`ThresholdUtility`.
    """
    policies = enumerate_policies(env) if policies is None else list(policies)
    candidates = []
    for p in policies:
        v = expected_return_exact(env, p)
        if mode == "episode":
            u = esr_value(env, p, utility)
        elif mode == "per_branch":
            if not isinstance(utility, ThresholdUtility):
                if isinstance(utility, LinearWeights):
                    u = linear_scalarise(v, utility)
                else:
                    raise OracleError("per_branch mode needs a threshold utility")
            else:
                u = float(v[utility.payoff]) if per_branch_feasible(env, p, utility) else NEG_INFINITY
        else:
            raise ValueError(f"unknown ESR mode {mode!r}")
        candidates.append((p, v, u))
    return _best(candidates, utility, f"esr-{mode}")


def mixture_return(env: TabularMOMDP, m: MixturePolicy) -> np.ndarray:
    total = np.zeros(env.num_objectives)
    for policy, weight in m.components:
        total += weight * expected_return_exact(env, policy)
    return total


def best_mixture_2(env: TabularMOMDP, pA: DeterministicPolicy, pB: DeterministicPolicy,
                   threshold: float, guarded: int = 0, payoff: int = 1):
    """Weight on ``pA`` maximising the payoff of the mixture subject to the
    guarded objective of its mean return being >= ``threshold``.

    Returns ``(weight, value)``; raises :class:`InfeasibleError` when no
    weight in [0, 1] satisfies the constraint.
    """
    va, vb = expected_return_exact(env, pA), expected_return_exact(env, pB)
    ga, gb = va[guarded], vb[guarded]
    if max(ga, gb) < threshold:
        raise InfeasibleError(
            f"threshold {threshold:g} unreachable: best guarded value is {max(ga, gb):g}"
        )
    if ga == gb:
        lo, hi = 0.0, 1.0
    elif ga > gb:
        lo, hi = max(0.0, (threshold - gb) / (ga - gb)), 1.0
    else:
        lo, hi = 0.0, min(1.0, (threshold - gb) / (ga - gb))
    if va[payoff] > vb[payoff]:
        p = hi
    elif va[payoff] < vb[payoff]:
        p = lo
    else:
        p = hi
    return p, p * va + (1.0 - p) * vb


@dataclass(frozen=True)
class TaggedValue:
    value: np.ndarray
    policy: DeterministicPolicy


def _tree_order(env: TabularMOMDP) -> list[str]:
    """States reachable from the start in post-order; requires each state to
    be entered from a single parent state."""
    parents: dict[str, set[str]] = {}
    for (s, a), outs in env.transitions.items():
        for o in outs:
            if o.successor != TERMINAL and o.successor != s:
                parents.setdefault(o.successor, set()).add(s)
            elif o.successor == s:
                raise OracleError(f"self-loop at {s!r}")
    for s, ps in parents.items():
        if len(ps) > 1:
            raise OracleError(
                f"state {s!r} has several parent states {sorted(ps)}; "
                "set-based backups need a tree-shaped state graph"
            )
    if env.start_state in parents:
        raise OracleError("start state must not be re-entered")
    order, seen = [], set()

    def visit(s):
        seen.add(s)
        for a in env.actions[s]:
            for o in env.transitions[(s, a)]:
                if o.successor != TERMINAL and o.successor not in seen:
                    visit(o.successor)
        order.append(s)

    visit(env.start_state)
    return order


def pareto_dp(env: TabularMOMDP, tol: float = 0.0, cap: int = 10**5) -> dict[str, list[TaggedValue]]:
    """Set-based backward backup of non-dominated value vectors.

    Each vector carries the policy (over the states it reaches) that achieves
    it, so any element of the start-state set can be executed directly.
    """
    sets: dict[str, list[TaggedValue]] = {}
    for s in _tree_order(env):
        candidates: list[TaggedValue] = []
        for a in env.actions[s]:
            base = env.mean_reward(s, a)
            succ_prob: dict[str, float] = {}
            for o in env.transitions[(s, a)]:
                if o.successor != TERMINAL:
                    succ_prob[o.successor] = succ_prob.get(o.successor, 0.0) + o.probability
            succs = list(succ_prob)
            for combo in itertools.product(*(sets[t] for t in succs)):
                v = base.copy()
                choices = {s: a}
                for t, tv in zip(succs, combo):
                    v = v + succ_prob[t] * tv.value
                    choices.update(tv.policy.choices)
                candidates.append(TaggedValue(v, DeterministicPolicy(choices)))
                if len(candidates) > cap:
                    raise OracleError(f"more than {cap} candidate vectors at state {s!r}")
        keep = pareto_filter([c.value for c in candidates], tol)
        sets[s] = [candidates[i] for i in keep]
    return sets


def reachable_restriction(env: TabularMOMDP, policy: DeterministicPolicy) -> DeterministicPolicy:
    """``policy`` limited to the states it can actually reach."""
    return DeterministicPolicy({s: policy[s] for s in _reachable_values(env, policy)})


def complete_policy(env: TabularMOMDP, partial: DeterministicPolicy) -> DeterministicPolicy:
    """Extend a partial policy with each missing state's first action."""
    return DeterministicPolicy(
        {s: partial.choices.get(s, env.actions[s][0]) for s in env.state_ids}
    )
