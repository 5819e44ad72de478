import numpy as np
import pytest

from sermorl.environments import bryce_branch, space_traders
from sermorl.learners import LearnerConfig, train
from sermorl.oracle import enumerate_policies, policy_label
from sermorl.scalarisation import TLOParams

TABLE2 = {
    "II": (1, -22), "ID": (0.9, -19.9), "IT": (0.85, -12), "DI": (0.9, -14.5),
    "DD": (0.81, -12.61), "DT": (0.765, -5.5), "TI": (0.85, -8.5), "TD": (0.765, -6.715),
    "TT": (0.7225, 0),
}
TABLE3 = {"Indirect": (0.9, -19.9), "Direct": (0.81, -12.61), "Teleport": (0.765, -6.715)}
TLO88 = TLOParams(((0, 0.88),))

_acceptance_lines = []


def record_criterion(number, name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name}"
    if detail:
        line += f" -- {detail}"
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def st():
    return space_traders()


@pytest.fixture
def bryce():
    return bryce_branch()


@pytest.fixture
def st_policies():
    env = space_traders()
    return {policy_label(env, p): p for p in enumerate_policies(env)}


@pytest.fixture(scope="session")
def tlo_decay_runs():
    """20 seeds of TLO(0.88) with the per-key decaying step size."""
    env = space_traders()
    return [
        train(env, TLO88, LearnerConfig(episodes=200_000, seed=s, alpha_schedule="decay"))[0]
        for s in range(1, 21)
    ]


def random_tree_env(rng: np.random.Generator, max_states=4):
    """Random valid 2-objective MOMDP whose states form a tree."""
    from sermorl.momdp import TERMINAL, Outcome, TabularMOMDP

    n = int(rng.integers(1, max_states + 1))
    names = [f"s{i}" for i in range(n)]
    parent = {i: int(rng.integers(0, i)) for i in range(1, n)}
    children = {i: [c for c, p in parent.items() if p == i] for i in range(n)}
    actions, transitions = {}, {}
    for i, s in enumerate(names):
        n_act = int(rng.integers(1, 4))
        acts = tuple(f"a{j}" for j in range(n_act))
        actions[s] = acts
        for j, a in enumerate(acts):
            # make sure every child is reachable from at least one action
            targets = [TERMINAL] + [names[c] for c in children[i]]
            n_out = int(rng.integers(1, 4))
            succ = list(rng.choice(targets, size=n_out))
            if j == 0:
                succ += [names[c] for c in children[i]]
            probs = rng.dirichlet(np.ones(len(succ)))
            probs = probs / probs.sum()
            outs = [Outcome(float(p), (float(np.round(rng.uniform(0, 1), 3)),
                                       float(np.round(rng.uniform(-10, 0), 3))), str(t))
                    for p, t in zip(probs, succ)]
            transitions[(s, a)] = tuple(outs)

    def depth(i):
        return 1 + max((depth(c) for c in children[i]), default=0)

    return TabularMOMDP(tuple(names), actions, transitions, "s0", 2, depth(0), "random")
