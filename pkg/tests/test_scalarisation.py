import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as hst

from sermorl.scalarisation import (
    NEG_INFINITY,
    LinearWeights,
    Ordering,
    ThresholdUtility,
    TLOParams,
    argmax_by,
    linear_scalarise,
    parse_utility,
    threshold_utility,
    tlo_compare,
)

from .conftest import TABLE2, TLO88

vec = hst.tuples(hst.floats(-2, 2, allow_nan=False), hst.floats(-30, 30, allow_nan=False))


@pytest.mark.parametrize("v,w,expected", [
    ((0.9, -14.5), (1, 0), 0.9),
    ((0.9, -14.5), (0, 1), -14.5),
    ((0.7225, 0), (0.5, 0.5), 0.36125),
])
def test_linear_scalarise(v, w, expected):
    assert linear_scalarise(v, LinearWeights(w)) == pytest.approx(expected, abs=1e-12)


def test_linear_length_mismatch():
    with pytest.raises(ValueError):
        linear_scalarise((1, 2, 3), LinearWeights((0.5, 0.5)))


def test_weights_validated():
    with pytest.raises(ValueError):
        LinearWeights((0.7, 0.7))
    with pytest.raises(ValueError):
        LinearWeights((-0.5, 1.5))


def test_threshold_utility_examples():
    strict = ThresholdUtility(0.88, strict=True)
    assert threshold_utility((0.9, -14.5), strict) == -14.5
    assert threshold_utility((0.85, -8.5), strict) is NEG_INFINITY
    assert threshold_utility((0.88, -11.2), strict) is NEG_INFINITY
    assert threshold_utility((0.88, -11.2), ThresholdUtility(0.88, strict=False)) == -11.2


def test_neg_infinity_orders_below_reals():
    assert NEG_INFINITY < -1e308 and -1e308 > NEG_INFINITY
    assert max([NEG_INFINITY, -5.0]) == -5.0
    assert NEG_INFINITY == NEG_INFINITY and not NEG_INFINITY < NEG_INFINITY
    with pytest.raises(TypeError):
        NEG_INFINITY + 1


@pytest.mark.parametrize("v1,v2,expected", [
    ((1, -10), (0.9, -7.9), Ordering.LESS),
    ((0.9, -7.9), (0.85, 0), Ordering.GREATER),
    ((0.9, -19.9), (0.81, -12.61), Ordering.GREATER),
])
def test_tlo_compare_examples(v1, v2, expected):
    assert tlo_compare(v1, v2, TLO88) is expected


def test_argmax_table1_b_row():
    row = [("Indirect", (1, -10)), ("Direct", (0.9, -7.9)), ("Teleport", (0.85, 0))]
    assert argmax_by(row, TLO88) == "Direct"


def test_argmax_table3_a_row():
    row = [("Indirect", (0.9, -19.9)), ("Direct", (0.81, -12.61)), ("Teleport", (0.765, -6.715))]
    assert argmax_by(row, TLO88) == "Indirect"


def test_argmax_single_and_empty():
    assert argmax_by([("x", (0, 0))], TLO88) == "x"
    with pytest.raises(ValueError):
        argmax_by([], TLO88)


def test_argmax_ties_lowest_index():
    assert argmax_by([("a", (1, 1)), ("b", (1, 1))], LinearWeights((0.5, 0.5))) == "a"


def test_parse_utility():
    u = parse_utility("threshold:0.88:strict")
    assert u == ThresholdUtility(0.88, strict=True)
    assert parse_utility("threshold:0.6").strict is False
    assert parse_utility("linear:0.5,0.5") == LinearWeights((0.5, 0.5))
    with pytest.raises(ValueError):
        parse_utility("hypervolume:1")


@settings(max_examples=200)
@given(a=vec, b=vec, c=vec, t=hst.floats(-1, 1, allow_nan=False))
def test_tlo_total_preorder(a, b, c, t):
    p = TLOParams(((0, t),))
    assert tlo_compare(a, a, p) is Ordering.EQUAL
    assert tlo_compare(a, b, p) == -tlo_compare(b, a, p)
    if tlo_compare(a, b, p) >= 0 and tlo_compare(b, c, p) >= 0:
        assert tlo_compare(a, c, p) >= 0


@settings(max_examples=200)
@given(a=vec, b=vec, t=hst.floats(-1, 1, allow_nan=False))
def test_tlo_above_threshold_is_payoff_order(a, b, t):
    assume(a[0] > t and b[0] > t)
    p = TLOParams(((0, t),))
    assert tlo_compare(a, b, p) == np.sign(a[1] - b[1])


@settings(max_examples=100)
@given(w0=hst.floats(0, 1), scale=hst.floats(0.01, 100))
def test_linear_argmax_scale_invariant(w0, scale):
    rows = list(TABLE2.items())
    w = (w0, 1 - w0)
    base = argmax_by(rows, lambda v: w[0] * v[0] + w[1] * v[1])
    scaled = argmax_by(rows, lambda v: scale * w[0] * v[0] + scale * w[1] * v[1])
    assert base == scaled


@settings(max_examples=200)
@given(v=vec, t=hst.floats(-2, 2, allow_nan=False), strict=hst.booleans())
def test_threshold_neg_infinity_iff_guard_fails(v, t, strict):
    u = ThresholdUtility(t, strict=strict)
    fails = not (v[0] > t if strict else v[0] >= t)
    assert (threshold_utility(v, u) is NEG_INFINITY) == fails
