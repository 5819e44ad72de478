"""Model-free tabular Q-learning with vector-valued action values.

Two action selectors are supported: linear scalarisation (``LinearWeights``)
and thresholded lexicographic ordering (``TLOParams``). Nonlinear selectors
condition Q-values on the reward accrued so far in the episode.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .formatting import fmt
from .momdp import TERMINAL, DeterministicPolicy, MOMDPError, TabularMOMDP, validate
from .scalarisation import LinearWeights, TLOParams, argmax_by, as_key

PLAIN = "plain"
ACCRUED = "accrued"
ACCRUED_DECIMALS = 6
_CHUNK = 4096


class ConfigError(ValueError):
    pass


class ExtractionError(LookupError):
    pass


def quantise(values) -> tuple[float, ...]:
    # + 0.0 folds -0.0 into 0.0 so keys compare equal
    return tuple(float(round(x, ACCRUED_DECIMALS)) + 0.0 for x in values)


@dataclass
class LearnerConfig:
    episodes: int = 200_000
    alpha: float = 0.1
    epsilon: float = 0.1
    seed: int = 0
    conditioning: str | None = None
    alpha_schedule: str = "constant"
    alpha_decay: float = 0.85

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be positive")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.conditioning not in (None, PLAIN, ACCRUED):
            raise ConfigError(f"unknown conditioning {self.conditioning!r}")
        if self.alpha_schedule not in ("constant", "decay"):
            raise ConfigError(f"unknown alpha schedule {self.alpha_schedule!r}")


def resolve_conditioning(selector, conditioning: str | None) -> str:
    if isinstance(selector, TLOParams):
        if conditioning == PLAIN:
            raise ConfigError("TLO action selection requires accrued-reward conditioning")
        return ACCRUED
    if isinstance(selector, LinearWeights):
        return conditioning or PLAIN
    raise ConfigError(f"unsupported selector {selector!r}")


@dataclass
class QTable:
    """Vector action values keyed by ``(state, accrued)``.

    ``accrued`` is ``()`` for plain conditioning.
    """

    num_objectives: int
    conditioning: str
    values: dict[tuple[str, tuple], dict[str, np.ndarray]] = field(default_factory=dict)
    visits: dict[tuple[str, tuple], dict[str, int]] = field(default_factory=dict)

    def key(self, state: str, accrued=None) -> tuple[str, tuple]:
        if self.conditioning == PLAIN:
            return (state, ())
        if accrued is None:
            accrued = (0.0,) * self.num_objectives
        return (state, quantise(accrued))

    def q(self, state: str, action: str, accrued=None) -> np.ndarray:
        return self.values[self.key(state, accrued)][action]

    def to_csv(self, path=None) -> str:
        k = self.num_objectives
        header = (["state"] + [f"accrued_{i}" for i in range(k)] + ["action"]
                  + [f"q_{i}" for i in range(k)] + ["visits"])
        rows = []
        for (state, acc), by_action in self.values.items():
            for action, q in by_action.items():
                rows.append(((state, acc, action), [state]
                             + ([fmt(x) for x in acc] if acc else [""] * k)
                             + [action] + [fmt(x) for x in q]
                             + [str(self.visits[(state, acc)][action])]))
        rows.sort(key=lambda r: r[0])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(r for _, r in rows)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


class _Compiled:
    """Index-based view of an environment for the training loop."""

    def __init__(self, env: TabularMOMDP):
        self.names = list(env.state_ids)
        index = {s: i for i, s in enumerate(self.names)}
        self.start = index[env.start_state]
        self.actions = [list(env.actions[s]) for s in self.names]
        # per state, per action: list of (cumulative p, reward tuple, successor index or -1)
        self.outcomes = []
        for s in self.names:
            per_action = []
            for a in env.actions[s]:
                acc, outs = 0.0, []
                for o in env.transitions[(s, a)]:
                    acc += o.probability
                    nxt = -1 if o.successor == TERMINAL else index[o.successor]
                    outs.append((acc, tuple(float(r) for r in o.reward), nxt))
                per_action.append(outs)
            self.outcomes.append(per_action)


def _make_scorer(selector, k: int):
    """Scoring function over ``(q, accrued)``; higher is better."""
    if isinstance(selector, LinearWeights):
        w = selector.w
        if k == 2:
            w0, w1 = w
            return lambda q, acc: w0 * q[0] + w1 * q[1]
        return lambda q, acc: sum(wi * qi for wi, qi in zip(w, q))
    thresholds = selector.thresholds
    payoff = selector.payoff_index(k)
    if k == 2 and len(thresholds) == 1:
        (gi, t), = thresholds
        if gi == 0 and payoff == 1:
            def score(q, acc):
                g = q[0] + acc[0]
                return (g if g < t else t, q[1] + acc[1])
            return score

    def score(q, acc):
        return tuple(min(q[i] + acc[i], t) for i, t in thresholds) + (q[payoff] + acc[payoff],)
    return score


def _greedy(row, acc, score):
    best, best_s = 0, score(row[0], acc)
    for j in range(1, len(row)):
        sj = score(row[j], acc)
        if sj > best_s:
            best, best_s = j, sj
    return best


def train(env: TabularMOMDP, selector, config: LearnerConfig):
    """Run ε-greedy vector Q-learning; returns ``(QTable, log)``.

    The bootstrap uses the successor's greedy action under the same selector
    (evaluated on the successor's accrued key), and zero at terminal or at
    the horizon.
    """
    problems = validate(env)
    if problems:
        raise MOMDPError("invalid environment: " + "; ".join(problems))
    conditioning = resolve_conditioning(selector, config.conditioning)
    accrued = conditioning == ACCRUED
    k = env.num_objectives
    comp = _Compiled(env)
    score = _make_scorer(selector, k)
    horizon = env.horizon
    eps = config.epsilon
    alpha_const = config.alpha
    decay = config.alpha_schedule == "decay"
    power = config.alpha_decay

    env_ss, explore_ss = np.random.SeedSequence(config.seed).spawn(2)
    env_rng = np.random.default_rng(env_ss)
    explore_rng = np.random.default_rng(explore_ss)

    rows: dict = {}
    counts: dict = {}
    zero_acc = (0.0,) * k if accrued else ()
    n_actions = [len(a) for a in comp.actions]
    outcomes = comp.outcomes
    start = comp.start

    def get_row(key):
        row = rows.get(key)
        if row is None:
            n = n_actions[key[0]]
            row = rows[key] = [[0.0] * k for _ in range(n)]
            counts[key] = [0] * n
        return row

    t0 = time.perf_counter()
    returns_sum = [0.0] * k
    log_every = max(1, config.episodes // 20)
    progress = []
    done_eps = 0
    while done_eps < config.episodes:
        n = min(_CHUNK, config.episodes - done_eps)
        u_env = env_rng.random(n * horizon).tolist()
        u_eps = explore_rng.random(n * horizon).tolist()
        u_act = explore_rng.random(n * horizon).tolist()
        pos = 0
        for _ in range(n):
            s = start
            acc = zero_acc
            key = (s, acc)
            row = get_row(key)
            a_next = None
            ep_ret = [0.0] * k
            for t in range(horizon):
                i = pos + t
                if u_eps[i] < eps:
                    a = int(u_act[i] * n_actions[s])
                elif a_next is not None:
                    a = a_next
                else:
                    a = _greedy(row, acc, score)
                u = u_env[i]
                for cum, r, nxt in outcomes[s][a]:
                    if u < cum:
                        break
                ep_ret = [x + y for x, y in zip(ep_ret, r)]
                q = row[a]
                if nxt < 0 or t == horizon - 1:
                    target = r
                    a_next = None
                    nrow = None
                else:
                    nacc = quantise([x + y for x, y in zip(acc, r)]) if accrued else ()
                    nkey = (nxt, nacc)
                    nrow = get_row(nkey)
                    a_next = _greedy(nrow, nacc, score)
                    target = [x + y for x, y in zip(r, nrow[a_next])]
                c = counts[key]
                if decay:
                    lr = (1.0 + c[a]) ** -power
                else:
                    lr = alpha_const
                c[a] += 1
                row[a] = [x + lr * (y - x) for x, y in zip(q, target)]
                if nrow is None:
                    break
                s, acc, key, row = nxt, nacc, nkey, nrow
            pos += horizon
            returns_sum = [x + y for x, y in zip(returns_sum, ep_ret)]
            done_eps += 1
            if done_eps % log_every == 0:
                progress.append((done_eps, [x / done_eps for x in returns_sum]))

    names, acts = comp.names, comp.actions
    table = QTable(k, conditioning)
    for (si, acc), row in rows.items():
        skey = (names[si], acc)
        table.values[skey] = {acts[si][j]: np.array(row[j]) for j in range(len(row))}
        table.visits[skey] = {acts[si][j]: counts[(si, acc)][j] for j in range(len(row))}
    log = {
        "selector": repr(selector),
        "conditioning": conditioning,
        "bootstrap": "greedy-successor",
        "episodes": config.episodes,
        "alpha": config.alpha,
        "alpha_schedule": config.alpha_schedule,
        "epsilon": config.epsilon,
        "seed": config.seed,
        "mean_return_progress": progress,
        "runtime_s": time.perf_counter() - t0,
    }
    return table, log


def _augmented_greedy(qtable: QTable, selector, state, acc):
    key = qtable.key(state, acc)
    if key not in qtable.values:
        raise ExtractionError(f"no Q-values for state {state!r} with accrued {key[1]}")
    by_action = qtable.values[key]
    score = as_key(selector)
    offset = np.asarray(key[1]) if key[1] else 0.0
    if isinstance(selector, TLOParams):
        return argmax_by([(a, q + offset) for a, q in by_action.items()], score)
    return argmax_by(list(by_action.items()), score)


def extract_greedy_policy(env: TabularMOMDP, qtable: QTable, selector) -> DeterministicPolicy:
    """Follow the greedy policy through every augmented state it can reach.

    Raises :class:`ExtractionError` if a reachable key is missing or if one
    base state would need different actions for different accrued rewards.
    """
    choices: dict[str, str] = {}
    frontier = [(env.start_state, (0.0,) * env.num_objectives, 0)]
    seen = set()
    while frontier:
        s, acc, t = frontier.pop()
        if (s, acc) in seen or t >= env.horizon:
            continue
        seen.add((s, acc))
        a = _augmented_greedy(qtable, selector, s, acc)
        if choices.setdefault(s, a) != a:
            raise ExtractionError(
                f"greedy action at {s!r} depends on accrued reward ({choices[s]} vs {a})"
            )
        for o in env.transitions[(s, a)]:
            if o.successor != TERMINAL:
                nacc = quantise(x + y for x, y in zip(acc, o.reward))
                frontier.append((o.successor, nacc, t + 1))
    for s in env.state_ids:
        # unreachable states get the greedy choice at zero accrued reward, if known
        if s not in choices:
            try:
                choices[s] = _augmented_greedy(qtable, selector, s, None)
            except ExtractionError:
                choices[s] = env.actions[s][0]
    return DeterministicPolicy({s: choices[s] for s in env.state_ids})


def greedy_action_given_values(mean_q, selector) -> dict:
    """Greedy action per state from supplied action values.

    ``mean_q`` maps each state to an ordered ``{action: vector}`` mapping.
    """
    return {
        s: argmax_by([(a, np.asarray(v, dtype=float)) for a, v in by_action.items()], selector)
        for s, by_action in mean_q.items()
    }


def tlo_fixed_point(env: TabularMOMDP, selector):
    """Exact action values the greedy-bootstrap learner converges to.

    Returns ``{(state, accrued): {action: vector}}`` over every augmented
    state reachable by any action sequence. With accrued conditioning the
    selector compares ``Q + accrued`` as the learner does.
    """
    accrued = isinstance(selector, TLOParams)
    k = env.num_objectives
    memo: dict = {}

    def greedy_value(s, acc, depth):
        qs = q_values(s, acc, depth)
        offset = np.asarray(acc) if accrued else 0.0
        if accrued:
            a = argmax_by([(a, q + offset) for a, q in qs.items()], selector)
        else:
            a = argmax_by(list(qs.items()), selector)
        return qs[a]

    def q_values(s, acc, depth):
        key = (s, acc)
        if key not in memo:
            out = {}
            for a in env.actions[s]:
                v = np.zeros(k)
                for o in env.transitions[(s, a)]:
                    r = np.asarray(o.reward, dtype=float)
                    v += o.probability * r
                    if o.successor != TERMINAL and depth + 1 < env.horizon:
                        nacc = quantise(np.asarray(acc) + r) if accrued else ()
                        v += o.probability * greedy_value(o.successor, nacc, depth + 1)
                out[a] = v
            memo[key] = out
        return memo[key]

    q_values(env.start_state, (0.0,) * k if accrued else (), 0)
    return memo


class _QLearnerBase(BaseEstimator):
    """Shared fit/predict plumbing; subclasses define ``_selector``."""

    def _config(self) -> LearnerConfig:
        return LearnerConfig(
            episodes=self.episodes, alpha=self.alpha, epsilon=self.epsilon,
            seed=self.random_state, conditioning=self.conditioning,
            alpha_schedule=self.alpha_schedule, alpha_decay=self.alpha_decay,
        )

    def fit(self, env: TabularMOMDP, y=None):
        if not isinstance(env, TabularMOMDP):
            raise TypeError(f"fit expects a TabularMOMDP, got {type(env).__name__}")
        selector = self._selector(env.num_objectives)
        self.q_table_, self.log_ = train(env, selector, self._config())
        self.env_ = env
        self.policy_ = extract_greedy_policy(env, self.q_table_, selector)
        return self

    def predict(self, X):
        """Greedy action for each ``state`` or ``(state, accrued)`` in ``X``."""
        check_is_fitted(self, "q_table_")
        selector = self._selector(self.env_.num_objectives)
        out = []
        for item in X:
            state, acc = (item, None) if isinstance(item, str) else item
            out.append(_augmented_greedy(self.q_table_, selector, state, acc))
        return np.array(out, dtype=object)

    def score(self, X=None, y=None):
        """Exact SER utility of the extracted greedy policy under the selector
        (linear value, or TLO key for TLO learners)."""
        from .momdp import expected_return_exact

        check_is_fitted(self, "q_table_")
        v = expected_return_exact(self.env_, self.policy_)
        return as_key(self._selector(len(v)))(v)


class LinearQLearner(_QLearnerBase):
    def __init__(self, weights=(0.5, 0.5), episodes=200_000, alpha=0.1, epsilon=0.1,
                 alpha_schedule="constant", alpha_decay=0.85, conditioning="plain",
                 random_state=0):
        self.weights = weights
        self.episodes = episodes
        self.alpha = alpha
        self.epsilon = epsilon
        self.alpha_schedule = alpha_schedule
        self.alpha_decay = alpha_decay
        self.conditioning = conditioning
        self.random_state = random_state

    def _selector(self, k):
        w = LinearWeights(tuple(self.weights))
        if len(w.w) != k:
            raise ConfigError(f"{len(w.w)} weights for {k} objectives")
        return w


class TLOQLearner(_QLearnerBase):
    """``thresholds`` is a float (applied to objective 0) or
    ``[(objective, threshold), ...]`` in priority order."""

    def __init__(self, thresholds=0.88, payoff=None, episodes=200_000, alpha=0.1,
                 epsilon=0.1, alpha_schedule="constant", alpha_decay=0.85,
                 conditioning="accrued", random_state=0):
        self.thresholds = thresholds
        self.payoff = payoff
        self.episodes = episodes
        self.alpha = alpha
        self.epsilon = epsilon
        self.alpha_schedule = alpha_schedule
        self.alpha_decay = alpha_decay
        self.conditioning = conditioning
        self.random_state = random_state

    def _selector(self, k):
        th = self.thresholds
        th = ((0, float(th)),) if isinstance(th, (int, float)) else tuple(th)
        return TLOParams(th, self.payoff)


def with_seed(config: LearnerConfig, seed: int) -> LearnerConfig:
    return replace(config, seed=seed)
