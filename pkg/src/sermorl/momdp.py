"""Tabular multiobjective MDPs: data model, validation, exact evaluation and
seeded simulation.

All objectives are maximised and returns are undiscounted episode sums.
Costs and durations are stored as negative rewards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

TERMINAL = "TERMINAL"
PROB_TOL = 1e-9


class MOMDPError(ValueError):
    """Raised for malformed environments or invalid state/action arguments."""


class HorizonError(MOMDPError):
    """Raised when a policy cannot be guaranteed to terminate within the horizon."""


@dataclass(frozen=True)
class Outcome:
    probability: float
    reward: tuple[float, ...]
    successor: str

    @property
    def is_terminal(self) -> bool:
        return self.successor == TERMINAL


@dataclass(frozen=True)
class TabularMOMDP:
    """Finite MOMDP with stochastic transitions and vector rewards.

    ``actions`` maps every non-terminal state to its ordered action names and
    ``transitions`` maps ``(state, action)`` to a tuple of :class:`Outcome`.
    Construction does not validate; use :func:`validate`.
    """

    state_ids: tuple[str, ...]
    actions: Mapping[str, tuple[str, ...]]
    transitions: Mapping[tuple[str, str], tuple[Outcome, ...]]
    start_state: str
    num_objectives: int
    horizon: int
    name: str = "momdp"

    def outcomes(self, state: str, action: str) -> tuple[Outcome, ...]:
        try:
            return self.transitions[(state, action)]
        except KeyError:
            if state not in self.actions:
                raise MOMDPError(f"unknown state {state!r}") from None
            raise MOMDPError(
                f"unknown action {action!r} in state {state!r}"
            ) from None

    def mean_reward(self, state: str, action: str) -> np.ndarray:
        """Probability-weighted immediate reward of taking ``action`` in ``state``."""
        total = np.zeros(self.num_objectives)
        for o in self.outcomes(state, action):
            total += o.probability * np.asarray(o.reward, dtype=float)
        return total

    def scaled(self, c: float) -> "TabularMOMDP":
        """Copy of this environment with every reward multiplied by ``c``."""
        transitions = {
            key: tuple(
                Outcome(o.probability, tuple(c * r for r in o.reward), o.successor)
                for o in outs
            )
            for key, outs in self.transitions.items()
        }
        return TabularMOMDP(
            self.state_ids, self.actions, transitions, self.start_state,
            self.num_objectives, self.horizon, self.name,
        )


@dataclass(frozen=True)
class DeterministicPolicy:
    choices: Mapping[str, str]

    def __getitem__(self, state: str) -> str:
        return self.choices[state]

    def __hash__(self):
        return hash(tuple(sorted(self.choices.items())))

    def __eq__(self, other):
        if not isinstance(other, DeterministicPolicy):
            return NotImplemented
        return dict(self.choices) == dict(other.choices)

    @classmethod
    def parse(cls, text: str) -> "DeterministicPolicy":
        """Parse ``"A=Direct,B=Indirect"``."""
        choices = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"expected state=action, got {part!r}")
            s, a = part.split("=", 1)
            choices[s.strip()] = a.strip()
        return cls(choices)


@dataclass
class EpisodeResult:
    steps: list[tuple[str, str, tuple[float, ...], str]] = field(default_factory=list)
    return_total: np.ndarray | None = None
    truncated: bool = False


def validate(env: TabularMOMDP) -> list[str]:
    """Return a list of human-readable violations; an empty list means valid."""
    problems: list[str] = []
    if env.num_objectives < 1:
        problems.append(f"num_objectives must be positive, got {env.num_objectives}")
    if env.horizon < 1:
        problems.append(f"horizon must be positive, got {env.horizon}")
    declared = set(env.state_ids)
    if len(declared) != len(env.state_ids):
        problems.append("duplicate state ids")
    if TERMINAL in declared:
        problems.append(f"{TERMINAL!r} is reserved and cannot be a state id")
    if env.start_state not in declared:
        problems.append(f"start state {env.start_state!r} is not declared")

    for s in env.state_ids:
        acts = env.actions.get(s, ())
        if not acts:
            problems.append(f"state {s!r} has no actions")
        if len(set(acts)) != len(acts):
            problems.append(f"state {s!r} has duplicate action names")
        for a in acts:
            outs = env.transitions.get((s, a))
            where = f"({s}, {a})"
            if not outs:
                problems.append(f"{where}: no outcomes")
                continue
            total = 0.0
            for o in outs:
                if not (0.0 < o.probability <= 1.0) or not math.isfinite(o.probability):
                    problems.append(f"{where}: probability {o.probability:g} outside (0, 1]")
                total += o.probability
                if len(o.reward) != env.num_objectives:
                    problems.append(
                        f"{where}: reward has {len(o.reward)} components, "
                        f"expected {env.num_objectives}"
                    )
                if not all(math.isfinite(r) for r in o.reward):
                    problems.append(f"{where}: non-finite reward {o.reward}")
                if o.successor != TERMINAL and o.successor not in declared:
                    problems.append(f"{where}: unknown successor {o.successor!r}")
            if abs(total - 1.0) > PROB_TOL:
                problems.append(f"{where}: probabilities sum to {round(total, 9):g}")
    for (s, a) in env.transitions:
        if a not in env.actions.get(s, ()):
            problems.append(f"transition for undeclared state/action ({s}, {a})")

    if not problems:
        try:
            depth = _longest_path(env, lambda s: env.actions[s])
        except HorizonError as exc:
            problems.append(str(exc))
        else:
            if depth > env.horizon:
                problems.append(
                    f"some episodes need {depth} steps, exceeding horizon {env.horizon}"
                )
    return problems


def _successors(env: TabularMOMDP, state: str, actions) -> list[str]:
    out = []
    for a in actions:
        for o in env.transitions[(state, a)]:
            if o.successor != TERMINAL and o.successor not in out:
                out.append(o.successor)
    return out


def _longest_path(env: TabularMOMDP, actions_at) -> int:
    """Longest number of steps from the start state, following ``actions_at``.

    Raises :class:`HorizonError` naming the cycle if one is reachable.
    """
    depth: dict[str, int] = {}
    on_stack: list[str] = []

    def visit(s: str) -> int:
        if s in depth:
            return depth[s]
        if s in on_stack:
            cycle = on_stack[on_stack.index(s):] + [s]
            raise HorizonError(
                "episodes may never terminate: cycle " + " -> ".join(cycle)
            )
        on_stack.append(s)
        best = 0
        for succ in _successors(env, s, actions_at(s)):
            best = max(best, visit(succ))
        on_stack.pop()
        depth[s] = best + 1
        return depth[s]

    return visit(env.start_state)


def check_policy(env: TabularMOMDP, policy: DeterministicPolicy) -> None:
    for s in env.state_ids:
        if s not in policy.choices:
            raise MOMDPError(f"policy has no action for state {s!r}")
        if policy.choices[s] not in env.actions[s]:
            raise MOMDPError(
                f"unknown action {policy.choices[s]!r} in state {s!r}"
            )
    extra = set(policy.choices) - set(env.state_ids)
    if extra:
        raise MOMDPError(f"policy names unknown states {sorted(extra)}")


def expected_return_exact(env: TabularMOMDP, policy: DeterministicPolicy) -> np.ndarray:
    """Exact expected episodic return of ``policy`` by backward induction."""
    check_policy(env, policy)
    depth = _longest_path(env, lambda s: (policy[s],))
    if depth > env.horizon:
        raise HorizonError(
            f"policy needs up to {depth} steps, exceeding horizon {env.horizon}"
        )
    values: dict[str, np.ndarray] = {}

    def value(s: str) -> np.ndarray:
        if s not in values:
            v = np.zeros(env.num_objectives)
            for o in env.transitions[(s, policy[s])]:
                v += o.probability * np.asarray(o.reward, dtype=float)
                if o.successor != TERMINAL:
                    v += o.probability * value(o.successor)
            values[s] = v
        return values[s]

    return value(env.start_state)


def _pick(outcomes: Sequence[Outcome], u: float) -> Outcome:
    acc = 0.0
    for o in outcomes:
        acc += o.probability
        if u < acc:
            return o
    return outcomes[-1]


def step(env: TabularMOMDP, state: str, action: str, rng: np.random.Generator):
    """Sample one transition. Consumes exactly one uniform draw from ``rng``.

    Returns ``(successor, reward, is_terminal)``.
    """
    if state == TERMINAL:
        raise MOMDPError("cannot step from the terminal state")
    o = _pick(env.outcomes(state, action), rng.random())
    return o.successor, o.reward, o.is_terminal


def run_episode(env: TabularMOMDP, policy: DeterministicPolicy,
                rng: np.random.Generator) -> EpisodeResult:
    result = EpisodeResult()
    total = np.zeros(env.num_objectives)
    s = env.start_state
    for _ in range(env.horizon):
        a = policy[s]
        succ, r, done = step(env, s, a, rng)
        result.steps.append((s, a, r, succ))
        total += r
        s = succ
        if done:
            break
    else:
        result.truncated = s != TERMINAL
    result.return_total = total
    return result


def monte_carlo_return(env: TabularMOMDP, policy: DeterministicPolicy,
                       n_episodes: int, seed: int = 0):
    """Sample mean and standard error of the episodic return.

    Uses a single PCG64 stream seeded with ``seed``; row ``i`` of a
    ``(n_episodes, horizon)`` block of uniforms drives episode ``i``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    check_policy(env, policy)
    rng = np.random.default_rng(seed)
    draws = rng.random((n_episodes, env.horizon)).tolist()
    start = env.start_state
    chosen = {s: env.transitions[(s, policy[s])] for s in env.state_ids}
    returns = np.empty((n_episodes, env.num_objectives))
    for i, row in enumerate(draws):
        total = [0.0] * env.num_objectives
        s = start
        for u in row:
            o = _pick(chosen[s], u)
            total = [t + r for t, r in zip(total, o.reward)]
            s = o.successor
            if s == TERMINAL:
                break
        returns[i] = total
    mean = returns.mean(axis=0)
    if n_episodes > 1:
        stderr = returns.std(axis=0, ddof=1) / math.sqrt(n_episodes)
    else:
        stderr = np.zeros(env.num_objectives)
    return mean, stderr
