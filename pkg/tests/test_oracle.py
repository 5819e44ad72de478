import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from sermorl.environments import BryceParams
from sermorl.momdp import DeterministicPolicy, Outcome, TabularMOMDP, TERMINAL, expected_return_exact, validate
from sermorl.oracle import (
    InfeasibleError,
    MixturePolicy,
    OracleError,
    best_mixture_2,
    ccs_2objective,
    complete_policy,
    enumerate_policies,
    esr_optimal,
    esr_value,
    mixture_return,
    pareto_dp,
    pareto_filter,
    policy_label,
    reachable_restriction,
    ser_optimal,
)
from sermorl.scalarisation import NEG_INFINITY, LinearWeights, ThresholdUtility, linear_scalarise

from .conftest import TABLE2, random_tree_env

LABELS = list(TABLE2)
POINTS = [TABLE2[k] for k in LABELS]


def brute_pareto(points):
    pts = [tuple(map(float, p)) for p in points]
    out = []
    for i, p in enumerate(pts):
        dominated = False
        for j, q in enumerate(pts):
            if j != i and all(qa >= pa for qa, pa in zip(q, p)) and any(qa > pa for qa, pa in zip(q, p)):
                dominated = True
        if not dominated:
            out.append(i)
    return out


def weight_interval(points, i):
    """Interval of t in [0, 1] where weights (t, 1 - t) make point i maximal."""
    lo, hi = 0.0, 1.0
    p = np.asarray(points[i], dtype=float)
    for q in np.asarray(points, dtype=float):
        d = p - q
        # t * d0 + (1 - t) * d1 >= 0  <=>  t * (d0 - d1) >= -d1
        a, b = d[0] - d[1], -d[1]
        if abs(a) < 1e-15:
            if b > 1e-12:
                return None
        elif a > 0:
            lo = max(lo, b / a)
        else:
            hi = min(hi, b / a)
    return (lo, hi) if lo <= hi + 1e-12 else None


def test_enumerate_counts(st, bryce):
    assert len(enumerate_policies(st)) == 9
    assert len(enumerate_policies(bryce)) == 4
    single = TabularMOMDP(("s",), {"s": ("a",)}, {("s", "a"): (Outcome(1.0, (1.0,), TERMINAL),)}, "s", 1, 1)
    assert len(enumerate_policies(single)) == 1


def test_enumerate_order_and_cap(st):
    assert [policy_label(st, p) for p in enumerate_policies(st)] == LABELS
    with pytest.raises(OracleError, match="9"):
        enumerate_policies(st, cap=8)


def test_pareto_table2():
    got = {LABELS[i] for i in pareto_filter(POINTS)}
    assert got == {LABELS[i] for i in brute_pareto(POINTS)} == {"II", "DI", "TI", "DT", "TT"}


def test_pareto_small_cases():
    assert pareto_filter([(0, 0)]) == [0]
    assert pareto_filter([(1, 0), (0, 1), (0.5, 0.5), (0.4, 0.4)]) == [0, 1, 2]
    assert pareto_filter([(1, 1), (1, 1)]) == [0, 1]


def test_ccs_table2():
    got = [LABELS[i] for i in ccs_2objective(POINTS)]
    assert got == ["TT", "TI", "II"]
    expected = {LABELS[i] for i in range(len(POINTS)) if weight_interval(POINTS, i)}
    assert set(got) == expected
    assert "DI" not in got


def test_ccs_collinear_and_single():
    pts = [(0, 3), (1, 2), (2, 1), (3, 0)]
    assert ccs_2objective(pts) == [0, 1, 2, 3]
    assert ccs_2objective([(0.5, 0.5)]) == [0]
    with pytest.raises(OracleError):
        ccs_2objective([(1, 2, 3)])


@settings(max_examples=150, deadline=None)
@given(hst.lists(hst.tuples(hst.integers(-20, 20), hst.integers(-20, 20)), min_size=1, max_size=12))
def test_ccs_matches_weight_lp(points):
    pts = [(float(a), float(b)) for a, b in points]
    ccs = set(ccs_2objective(pts))
    front = set(pareto_filter(pts))
    assert ccs <= front
    assert front == set(brute_pareto(pts))
    for i in front:
        assert (i in ccs) == (weight_interval(pts, i) is not None)


def test_ser_optimal_threshold(st):
    best = ser_optimal(st, ThresholdUtility(0.88, strict=True))
    assert policy_label(st, best.policy) == "DI"
    np.testing.assert_allclose(best.value, (0.9, -14.5), atol=1e-9)
    assert best.utility == pytest.approx(-14.5)


def test_ser_optimal_linear_time_only(st):
    best = ser_optimal(st, LinearWeights((0, 1)))
    assert policy_label(st, best.policy) == "TT"
    np.testing.assert_allclose(best.value, (0.7225, 0), atol=1e-9)


def test_ser_optimal_bryce(bryce):
    best = ser_optimal(bryce, ThresholdUtility(0.6, strict=False))
    assert policy_label(bryce, best.policy) == "(pi2,pi3)"
    np.testing.assert_allclose(best.value, (0.62, -4.4), atol=1e-9)


def test_ser_infeasible_fallback(st):
    best = ser_optimal(st, ThresholdUtility(1.5))
    assert not best.feasible and policy_label(st, best.policy) == "II"


def test_esr_values(st, st_policies):
    u = ThresholdUtility(0.88, strict=True)
    assert esr_value(st, st_policies["II"], u) == -22
    assert esr_value(st, st_policies["DI"], u) is NEG_INFINITY
    assert esr_value(st, st_policies["DI"], LinearWeights((0.5, 0.5))) == pytest.approx(-6.8, abs=1e-9)


def test_esr_optimal(st, bryce):
    best = esr_optimal(st, ThresholdUtility(0.88, strict=True))
    assert policy_label(st, best.policy) == "II" and best.utility == -22
    per_branch = esr_optimal(bryce, ThresholdUtility(0.6, strict=False), mode="per_branch")
    assert policy_label(bryce, per_branch.policy) == "(pi1,pi3)"
    episode = esr_optimal(bryce, ThresholdUtility(0.6, strict=False))
    assert not episode.feasible


@pytest.mark.parametrize("w0", [0.0, 0.3, 0.7, 1.0])
def test_linear_esr_equals_ser(st, w0):
    w = LinearWeights((w0, 1 - w0))
    assert esr_optimal(st, w).policy == ser_optimal(st, w).policy
    for p in enumerate_policies(st):
        assert esr_value(st, p, w) == pytest.approx(linear_scalarise(expected_return_exact(st, p), w), abs=1e-9)


def test_mixture_returns(st, st_policies):
    P = st_policies
    np.testing.assert_allclose(mixture_return(st, MixturePolicy(((P["TI"], 0.65), (P["II"], 0.35)))),
                               (0.9025, -13.225), atol=1e-9)
    np.testing.assert_allclose(mixture_return(st, MixturePolicy(((P["DI"], 1.0),))), (0.9, -14.5), atol=1e-9)
    np.testing.assert_allclose(mixture_return(st, MixturePolicy(((P["TT"], 0.5), (P["II"], 0.5)))),
                               (0.86125, -11), atol=1e-9)
    with pytest.raises(ValueError):
        MixturePolicy(((P["TT"], 0.5), (P["II"], 0.6)))


@settings(max_examples=50, deadline=None)
@given(p=hst.floats(0.001, 0.999), a=hst.sampled_from(LABELS), b=hst.sampled_from(LABELS))
def test_mixture_linear_in_weight(p, a, b):
    from sermorl.environments import space_traders
    env = space_traders()
    pols = {policy_label(env, x): x for x in enumerate_policies(env)}
    if a == b:
        return
    got = mixture_return(env, MixturePolicy(((pols[a], p), (pols[b], 1 - p))))
    np.testing.assert_allclose(got, p * np.array(TABLE2[a]) + (1 - p) * np.array(TABLE2[b]), atol=1e-9)


def _grid_best_mixture(va, vb, threshold):
    best = None
    for p in np.linspace(0, 1, 100_001):
        v = p * np.asarray(va) + (1 - p) * np.asarray(vb)
        if v[0] >= threshold - 1e-12 and (best is None or v[1] > best[1][1]):
            best = (p, v)
    return best


def test_best_mixture_ti_ii(st, st_policies):
    p, v = best_mixture_2(st, st_policies["TI"], st_policies["II"], 0.88)
    gp, gv = _grid_best_mixture(TABLE2["TI"], TABLE2["II"], 0.88)
    assert p == pytest.approx(0.8, abs=1e-9) and gp == pytest.approx(0.8, abs=1e-5)
    np.testing.assert_allclose(v, (0.88, -11.2), atol=1e-9)


def test_best_mixture_identical_and_infeasible(st, st_policies):
    p, v = best_mixture_2(st, st_policies["II"], st_policies["II"], 0.88)
    assert p == 1.0
    np.testing.assert_allclose(v, (1, -22))
    with pytest.raises(InfeasibleError, match="0.765"):
        best_mixture_2(st, st_policies["TT"], st_policies["DT"], 0.88)


def test_mixture_065_ti_dominates_di(st, st_policies):
    from sermorl.oracle import dominates
    mix = mixture_return(st, MixturePolicy(((st_policies["TI"], 0.65), (st_policies["II"], 0.35))))
    assert dominates(mix, TABLE2["DI"])


def _as_set(entries):
    return {(tuple(np.round(e.value, 9)), tuple(sorted(e.policy.choices.items()))) for e in entries}


def test_pareto_dp_state_b(st):
    sets = pareto_dp(st)
    got = {(e.policy["B"], tuple(np.round(e.value, 9))) for e in sets["B"]}
    assert got == {("Indirect", (1.0, -10.0)), ("Direct", (0.9, -7.9)), ("Teleport", (0.85, 0.0))}


def test_pareto_dp_start_state(st):
    start = pareto_dp(st)["A"]
    got = {policy_label(st, complete_policy(st, e.policy)) for e in start}
    assert got == {"II", "DI", "TI", "DT", "TT"}
    for e in start:
        np.testing.assert_allclose(e.value, TABLE2[policy_label(st, complete_policy(st, e.policy))], atol=1e-9)


def test_pareto_dp_single_action():
    env = TabularMOMDP(("s", "t"), {"s": ("a",), "t": ("b",)},
                       {("s", "a"): (Outcome(0.5, (1.0, 0.0), "t"), Outcome(0.5, (0.0, 2.0), TERMINAL)),
                        ("t", "b"): (Outcome(1.0, (1.0, 1.0), TERMINAL),)}, "s", 2, 2)
    (only,) = pareto_dp(env)["s"]
    np.testing.assert_allclose(only.value, expected_return_exact(env, complete_policy(env, only.policy)))


def test_pareto_dp_rejects_shared_children():
    env = TabularMOMDP(("s", "u", "t"), {"s": ("a",), "u": ("b",), "t": ("c",)},
                       {("s", "a"): (Outcome(0.5, (0.0, 0.0), "u"), Outcome(0.5, (0.0, 0.0), "t")),
                        ("u", "b"): (Outcome(1.0, (0.0, 0.0), "t"),),
                        ("t", "c"): (Outcome(1.0, (1.0, 1.0), TERMINAL),)}, "s", 2, 3)
    with pytest.raises(OracleError, match="parent"):
        pareto_dp(env)


def brute_front(env):
    pols = enumerate_policies(env)
    values = [expected_return_exact(env, p) for p in pols]
    keep = pareto_filter(values, tol=1e-9)
    return {(tuple(np.round(values[i], 9)), tuple(sorted(reachable_restriction(env, pols[i]).choices.items())))
            for i in keep}


@pytest.mark.parametrize("seed", range(25))
def test_pareto_dp_matches_enumeration_random(seed):
    env = random_tree_env(np.random.default_rng(seed))
    assert validate(env) == []
    assert _as_set(pareto_dp(env, tol=1e-9)[env.start_state]) == brute_front(env)


def test_pareto_dp_matches_enumeration_bryce(bryce):
    assert _as_set(pareto_dp(bryce, tol=1e-9)["b_t"]) == brute_front(bryce)


def test_ccs_contains_every_linear_optimum(st):
    ccs = {LABELS[i] for i in ccs_2objective(POINTS)}
    for w0 in np.round(np.arange(0, 1.0001, 0.05), 10):
        best = ser_optimal(st, LinearWeights((w0, 1 - w0)))
        assert policy_label(st, best.policy) in ccs
