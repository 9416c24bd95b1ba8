import numpy as np
import pytest

from nlevel_core.errors import WindowTooSmall
from nlevel_core.models import constant_model, three_level_adiabatic, two_level_avoided
from nlevel_core.smatrix import Window, integrate_column, integrate_schrodinger_column, s_matrix, tail_window
from nlevel_core.symmetry import verify_s_unitarity


@pytest.fixture(scope="module")
def model():
    return two_level_avoided(0.5)


def test_constant_generator_scatters_trivially():
    res = s_matrix(constant_model(np.diag([1.0, 2.0, 4.0])), 0.1, ode_tol=1e-10)
    assert np.allclose(res.S, np.eye(3), atol=1e-12)
    assert res.tail_estimate == 0.0


def test_tail_window(model):
    w = tail_window(model, 1e-10)
    assert w.T_plus == -w.T_minus
    assert w.T_plus >= 4.0
    assert w.tail_estimate < 1e-10


def test_unitarity_and_columns(model):
    res = s_matrix(model, 0.2, ode_tol=1e-10)
    assert verify_s_unitarity(res.S) < 1e-6
    col = integrate_column(model, 0.2, 0, ode_tol=1e-10)
    assert np.allclose(col, res.S[:, 0], atol=1e-7)
    assert res.step_count > 0
    assert res.error_budget == pytest.approx(res.ode_tol * (res.T_plus - res.T_minus) + res.tail_estimate)
    assert len(res.as_dict()["S"]) == 2


def test_state_equation_agrees(model):
    res = s_matrix(model, 0.2, ode_tol=1e-10)
    col = integrate_schrodinger_column(model, 0.2, 1, ode_tol=1e-10)
    assert np.allclose(col, res.S[:, 1], atol=1e-5)


def test_positive_epsilon_required(model):
    with pytest.raises(ValueError):
        s_matrix(model, 0.0)


@pytest.mark.parametrize("integrate", [integrate_column, integrate_schrodinger_column])
def test_short_caller_window_is_rejected(model, integrate):
    with pytest.raises(WindowTooSmall, match="exceeds ode_tol"):
        integrate(model, 0.2, 0, ode_tol=1e-10, window=Window(-2.0, 2.0, 0.0))


def test_caller_window_tail_is_re_estimated(model):
    w = tail_window(model, 1e-10)
    res = s_matrix(model, 0.2, ode_tol=1e-10, window=w._replace(tail_estimate=0.0))
    assert res.tail_estimate == pytest.approx(w.tail_estimate)
    assert 0.0 < res.tail_estimate < 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("build", [lambda: two_level_avoided(0.5), lambda: three_level_adiabatic(0.1)])
def test_diagonal_deviation_is_first_order(build):
    model = build()
    # off-diagonal elements are exponentially small; the diagonal carries the O(eps) phases
    ratios = [
        float(np.max(np.abs(np.diag(s_matrix(model, eps, ode_tol=1e-10).S) - 1.0))) / eps
        for eps in (0.2, 0.1, 0.05, 0.025)
    ]
    assert max(ratios) < 2.0 * min(ratios)
