"""Built-in environments and the JSON environment file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .momdp import (
    TERMINAL,
    MOMDPError,
    DeterministicPolicy,
    Outcome,
    TabularMOMDP,
    expected_return_exact,
    validate,
)


class EnvironmentFileError(MOMDPError):
    """Malformed environment file; the message names the offending field."""


class EnvironmentValidationError(MOMDPError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid environment: " + "; ".join(self.violations))


def _build(name, num_objectives, horizon, start, states) -> TabularMOMDP:
    """``states`` is ``[(id, [(action, [(p, reward, next), ...]), ...]), ...]``."""
    actions, transitions = {}, {}
    for sid, acts in states:
        actions[sid] = tuple(a for a, _ in acts)
        for a, outs in acts:
            transitions[(sid, a)] = tuple(
                Outcome(float(p), tuple(float(x) for x in r), nxt) for p, r, nxt in outs
            )
    return TabularMOMDP(
        state_ids=tuple(s for s, _ in states),
        actions=actions,
        transitions=transitions,
        start_state=start,
        num_objectives=num_objectives,
        horizon=horizon,
        name=name,
    )


def space_traders() -> TabularMOMDP:
    """Two-planet delivery task: mission success vs. (negated) travel time."""
    T = TERMINAL
    return _build("space_traders", 2, 2, "A", [
        ("A", [
            ("Indirect", [(1.0, (0, -12), "B")]),
            ("Direct", [(0.9, (0, -6), "B"), (0.1, (0, -1), T)]),
            ("Teleport", [(0.85, (0, 0), "B"), (0.15, (0, 0), T)]),
        ]),
        ("B", [
            ("Indirect", [(1.0, (1, -10), T)]),
            ("Direct", [(0.9, (1, -8), T), (0.1, (0, -7), T)]),
            ("Teleport", [(0.85, (1, 0), T), (0.15, (0, 0), T)]),
        ]),
    ])


@dataclass(frozen=True)
class SubPlan:
    success_prob: float
    cost: float


@dataclass(frozen=True)
class BryceParams:
    """Branch probabilities and the four sub-plans ``pi1, pi2`` (branch b1)
    and ``pi3, pi4`` (branch b2). Failure costs the same as success."""

    branch_probs: tuple[float, float] = (0.2, 0.8)
    subplans: tuple[SubPlan, SubPlan, SubPlan, SubPlan] = field(default_factory=lambda: (
        SubPlan(0.8, 10.0), SubPlan(0.3, 2.0), SubPlan(0.7, 5.0), SubPlan(0.9, 12.0),
    ))
    threshold: float = 0.6

    def check(self) -> None:
        p1, p2 = self.branch_probs
        if not (0 <= p1 <= 1 and 0 <= p2 <= 1) or abs(p1 + p2 - 1.0) > 1e-9:
            raise MOMDPError(f"branch probabilities must sum to 1, got {self.branch_probs}")
        if len(self.subplans) != 4:
            raise MOMDPError("exactly four sub-plans are required")
        for i, sp in enumerate(self.subplans, 1):
            if not 0 <= sp.success_prob <= 1:
                raise MOMDPError(f"pi{i} success probability {sp.success_prob} outside [0, 1]")
            if sp.cost < 0 or not math.isfinite(sp.cost):
                raise MOMDPError(f"pi{i} cost must be finite and non-negative")

    def replace_subplan(self, index: int, **changes) -> "BryceParams":
        plans = list(self.subplans)
        old = plans[index - 1]
        plans[index - 1] = SubPlan(
            changes.get("success_prob", old.success_prob), changes.get("cost", old.cost)
        )
        return BryceParams(self.branch_probs, tuple(plans), self.threshold)


def _subplan_outcomes(sp: SubPlan):
    outs = []
    if sp.success_prob > 0:
        outs.append((sp.success_prob, (1, -sp.cost), TERMINAL))
    if sp.success_prob < 1:
        outs.append((1.0 - sp.success_prob, (0, -sp.cost), TERMINAL))
    return outs


def bryce_branch(params: BryceParams | None = None) -> TabularMOMDP:
    """Stochastic branch followed by a choice of two sub-plans per branch."""
    params = params or BryceParams()
    params.check()
    p1, p2 = params.branch_probs
    s = params.subplans
    branch = [(p, (0, 0), nxt) for p, nxt in ((p1, "b1"), (p2, "b2")) if p > 0]
    return _build("bryce", 2, 2, "b_t", [
        ("b_t", [("a", branch)]),
        ("b1", [("pi1", _subplan_outcomes(s[0])), ("pi2", _subplan_outcomes(s[1]))]),
        ("b2", [("pi3", _subplan_outcomes(s[2])), ("pi4", _subplan_outcomes(s[3]))]),
    ])


@dataclass
class BryceReport:
    checks: dict[str, bool]
    details: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def verify_bryce_structure(params: BryceParams | None = None) -> BryceReport:
    """Check the qualitative properties the Bryce example relies on, using
    exact policy evaluation of :func:`bryce_branch`."""
    from .oracle import pareto_filter

    params = params or BryceParams()
    env = bryce_branch(params)
    th = params.threshold

    def value(b1, b2):
        return expected_return_exact(
            env, DeterministicPolicy({"b_t": "a", "b1": b1, "b2": b2})
        )

    def subplan_success(state, action):
        return env.mean_reward(state, action)[0]

    checks, details = {}, {}
    s1, s3 = subplan_success("b1", "pi1"), subplan_success("b2", "pi3")
    checks["a_pi1_pi3_meet_threshold"] = bool(s1 >= th and s3 >= th)
    details["a_pi1_pi3_meet_threshold"] = f"pi1={s1:g}, pi3={s3:g}, threshold={th:g}"
    s2 = subplan_success("b1", "pi2")
    checks["b_pi2_fails_threshold"] = bool(s2 < th)
    details["b_pi2_fails_threshold"] = f"pi2={s2:g}"
    v23, v13 = value("pi2", "pi3"), value("pi1", "pi3")
    checks["c_pi2_pi3_cheaper_and_feasible"] = bool(v23[0] >= th and v23[1] > v13[1])
    details["c_pi2_pi3_cheaper_and_feasible"] = f"(pi2,pi3)={tuple(v23)}, (pi1,pi3)={tuple(v13)}"
    joint = [value(a, b) for a in ("pi1", "pi2") for b in ("pi3", "pi4")]
    front = pareto_filter(joint)
    checks["d_no_dominated_policies"] = len(front) == len(joint)
    details["d_no_dominated_policies"] = f"{len(front)} of {len(joint)} non-dominated"
    return BryceReport(checks, details)


BUILTINS = {"space_traders": space_traders, "bryce": bryce_branch}


def to_dict(env: TabularMOMDP) -> dict:
    return {
        "name": env.name,
        "num_objectives": env.num_objectives,
        "horizon": env.horizon,
        "start_state": env.start_state,
        "states": [
            {
                "id": s,
                "actions": [
                    {
                        "name": a,
                        "outcomes": [
                            {"p": o.probability, "reward": list(o.reward), "next": o.successor}
                            for o in env.transitions[(s, a)]
                        ],
                    }
                    for a in env.actions[s]
                ],
            }
            for s in env.state_ids
        ],
    }


def save_environment(env: TabularMOMDP, path) -> None:
    Path(path).write_text(json.dumps(to_dict(env), indent=2) + "\n", encoding="utf-8")


def _field(obj, key, where, kind):
    if not isinstance(obj, dict):
        raise EnvironmentFileError(f"{where or 'document'}: expected an object")
    if key not in obj:
        raise EnvironmentFileError(f"{where or 'document'}: missing field {key!r}")
    value = obj[key]
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "num": isinstance(value, (int, float)) and not isinstance(value, bool),
        "str": isinstance(value, str),
        "list": isinstance(value, list),
    }[kind]
    if not ok:
        loc = f"{where}.{key}" if where else key
        raise EnvironmentFileError(f"{loc}: expected {kind}, got {type(value).__name__}")
    return value


def from_dict(doc: dict) -> TabularMOMDP:
    """Build an environment from a parsed document without validating it."""
    name = doc.get("name", "momdp") if isinstance(doc, dict) else None
    k = _field(doc, "num_objectives", "", "int")
    horizon = _field(doc, "horizon", "", "int")
    start = _field(doc, "start_state", "", "str")
    states = []
    for i, st in enumerate(_field(doc, "states", "", "list")):
        w = f"states[{i}]"
        sid = _field(st, "id", w, "str")
        acts = []
        for j, act in enumerate(_field(st, "actions", w, "list")):
            wa = f"{w}.actions[{j}]"
            aname = _field(act, "name", wa, "str")
            outs = []
            for m, out in enumerate(_field(act, "outcomes", wa, "list")):
                wo = f"{wa}.outcomes[{m}]"
                p = _field(out, "p", wo, "num")
                reward = _field(out, "reward", wo, "list")
                if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in reward):
                    raise EnvironmentFileError(f"{wo}.reward: expected numbers")
                nxt = _field(out, "next", wo, "str")
                outs.append((p, reward, nxt))
            acts.append((aname, outs))
        states.append((sid, acts))
    return _build(str(name), k, horizon, start, states)


def load_environment(source) -> TabularMOMDP:
    """Load and validate an environment from a path or an open file."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EnvironmentFileError(
            f"line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    env = from_dict(doc)
    problems = validate(env)
    if problems:
        raise EnvironmentValidationError(problems)
    return env


def resolve_environment(spec: str) -> TabularMOMDP:
    """Built-in name or path to an environment file."""
    if spec in BUILTINS:
        return BUILTINS[spec]()
    return load_environment(spec)
