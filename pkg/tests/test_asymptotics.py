import math

import numpy as np
import pytest

from nlevel_core.asymptotics import (
    SweepRecord,
    auto_epsilon_floor,
    bound_element,
    crossing_loop,
    fit_sweep,
    predict_element,
    sweep,
)
from nlevel_core.errors import DynamicRangeExceeded, NoCrossingChain, NotApplicable
from nlevel_core.geometry import collapsed_loop_integral, degeneracies_of, two_level_gamma
from nlevel_core.models import constant_model, three_level_adiabatic, two_level_avoided
from nlevel_core.smatrix import Window

GAMMA = two_level_gamma(0.5)


@pytest.fixture(scope="module")
def two_level():
    return two_level_avoided(0.5)


@pytest.fixture(scope="module")
def three_level():
    return three_level_adiabatic(0.1)


@pytest.mark.parametrize("base", [0.0, -3.0, 3.0])
def test_crossing_loop_shape(base):
    z0 = 0.5 + 0.2j
    loop = crossing_loop(z0, orientation=1, base=base)
    assert loop.closed and loop.vertices[0] == complex(base)
    assert max(v.imag for v in loop.vertices) == pytest.approx(0.3)
    assert min(v.real for v in loop.vertices) <= 0.1
    assert max(v.real for v in loop.vertices) >= 0.9


def test_two_level_prediction(two_level):
    pred = predict_element(two_level, 0)
    assert (pred.source, pred.target) == (0, 1)
    assert len(pred.crossing_loops) == 1
    assert abs(pred.gamma_total - GAMMA) < 1e-7
    assert pred.modulus(0.1) == pytest.approx(abs(pred.prefactor) * math.exp(-GAMMA / 0.1), rel=1e-6)
    assert pred.as_dict()["element"] == [2, 1]


def test_three_level_chain(three_level):
    pred = predict_element(three_level, 0)
    assert pred.target == 2
    assert [c.label for c in pred.crossing_loops] == [0, 1]
    # real-axis legs do not change the imaginary part of a loop integral
    oracle = sum(
        abs(collapsed_loop_integral(three_level, complex(c.point.z0.real), c.point.z0, *c.point.pair).imag)
        for c in pred.crossing_loops
    )
    assert abs(pred.gamma_total - oracle) < 1e-6


def test_fixed_level_has_no_chain():
    with pytest.raises(NoCrossingChain):
        predict_element(constant_model(np.diag([1.0, 2.0])), 0)


def test_bound_not_applicable(two_level, three_level):
    with pytest.raises(NotApplicable):
        bound_element(two_level, 0, 1)
    with pytest.raises(NotApplicable):
        bound_element(three_level, 0, 1)


def test_bound_exceeds_target_rate(three_level):
    pred = predict_element(three_level, 0)
    exponent = bound_element(three_level, 0, 2, height=0.2)
    assert exponent > pred.gamma_total


def test_fit_recovers_rate_and_prefactor():
    records = [
        SweepRecord(e, (1, 0), 2.0 * math.exp(-0.37 / e), math.exp(-0.37 / e), 0.0)
        for e in (0.2, 0.1, 0.05)
    ]
    fit = fit_sweep(records, 0.37)
    assert fit.gamma_fit == pytest.approx(0.37, abs=1e-10)
    assert fit.log_prefactor_fit == pytest.approx(math.log(2.0), abs=1e-10)
    assert fit.gamma_rel_error < 1e-9
    assert fit.monotone


def test_monotone_check_allows_rises_within_resolution():
    def rec(e, rel, noise):
        return SweepRecord(e, (1, 0), math.exp(-0.37 / e), math.exp(-0.37 / e), rel, noise=noise)

    resolved = [rec(0.2, 0.02, 1e-6), rec(0.1, 0.01, 1e-5), rec(0.05, 0.012, 4e-3)]
    assert fit_sweep(resolved, 0.37).monotone
    unresolved = [rec(0.2, 0.02, 1e-6), rec(0.1, 0.01, 1e-5), rec(0.05, 0.012, 1e-4)]
    assert not fit_sweep(unresolved, 0.37).monotone


def test_dynamic_range_guard_scales_with_window(two_level):
    pred = predict_element(two_level, 0)
    window = Window(-12.5, 12.5, 0.0)
    # between 100 * ode_tol and 100 * ode_tol * span
    eps = pred.gamma_total / math.log(abs(pred.prefactor) / 5e-8)
    with pytest.raises(DynamicRangeExceeded, match="below 2.5e-07"):
        sweep(two_level, 0, [eps], ode_tol=1e-10, prediction=pred, window=window)


def test_epsilon_floor():
    eps = auto_epsilon_floor(GAMMA, 1e-12)
    assert math.exp(-GAMMA / eps) == pytest.approx(1e-10, rel=1e-9)


def test_dynamic_range_guard(two_level):
    with pytest.raises(DynamicRangeExceeded):
        sweep(two_level, 0, [0.1, 0.005])


def test_degeneracies_cached(two_level):
    assert degeneracies_of(two_level) is degeneracies_of(two_level)


@pytest.mark.slow
def test_two_level_sweep_converges(two_level):
    records, fit = sweep(two_level, 0, [0.05, 0.2, 0.1, 0.033, 0.025])
    assert [r.epsilon for r in records] == [0.2, 0.1, 0.05, 0.033, 0.025]
    assert fit.gamma_rel_error < 0.03
    assert fit.monotone
    assert all(r.noise > 0.0 for r in records)
    assert records[-1].rel_error_modulus < 0.25
    r1, r2 = sweep(two_level, 0, [0.1])[0][0], sweep(two_level, 0, [0.1])[0][0]
    assert r1.s_numeric == r2.s_numeric


@pytest.mark.slow
def test_three_level_sweep_recovers_chained_rate(three_level):
    records, fit = sweep(three_level, 0, [0.2, 0.1, 0.05, 0.033, 0.025])
    assert {r.element for r in records} == {(2, 0)}
    assert fit.gamma_rel_error < 0.05
