import math
from dataclasses import replace

import numpy as np
import pytest

from nlevel_core.errors import GapCollapse, ModelDomainError
from nlevel_core.models import constant_model, two_level_avoided
from nlevel_core.smatrix import s_matrix
from nlevel_core.superasymptotic import (
    PathGrid,
    cheb,
    clencurt,
    improved_prediction,
    optimal_truncation,
    renorm_sequence,
    transport_on_grid,
)
from nlevel_core.transport import PathSpec, transport_frame


@pytest.fixture(scope="module")
def model():
    return two_level_avoided(0.5)


def test_cheb_differentiates_polynomials():
    x, D = cheb(12)
    assert np.allclose(D @ x**3, 3 * x**2, atol=1e-10)


@pytest.mark.parametrize("N", [8, 9, 16])
def test_clencurt_weights(N):
    x, _ = cheb(N)
    w = clencurt(N)
    assert w.sum() == pytest.approx(2.0, abs=1e-13)
    assert w @ x**2 == pytest.approx(2.0 / 3.0, abs=1e-13)


def test_grid_calculus_along_complex_segment():
    grid = PathGrid.along(PathSpec.segment(0j, 1.0 + 1.0j), density=40)
    z = grid.z
    assert grid.integral(np.ones_like(z)) == pytest.approx(1.0 + 1.0j, abs=1e-12)
    assert grid.integral(z**2) == pytest.approx((1.0 + 1.0j) ** 3 / 3, abs=1e-12)
    assert np.allclose(grid.derivative(z**3), 3 * z**2, atol=1e-8)


def test_optimal_truncation():
    assert optimal_truncation(1.0, 0.1) == 3
    with pytest.raises(ValueError):
        optimal_truncation(0.0, 0.1)


def test_first_corrections_shrink(model):
    seq = renorm_sequence(model, 0.05, PathGrid.segment(-5.0, 5.0, density=40), q_max=3)
    assert seq.q_max == 3 and len(seq.diffs) == 3
    assert seq.diffs[1] < seq.diffs[0]
    assert seq.eigenvalue_deviation[0] == 0.0
    assert seq.eigenvalue_deviation[1] > 0.0
    assert seq.as_dict()["argmin"] in (1, 2, 3)
    assert seq.c_fit > 0 and seq.q_star >= 1


def test_grid_transport_matches_path_transport(model):
    grid = PathGrid.segment(0.0, 2.0, density=40)
    seq = renorm_sequence(model, 0.1, grid, q_max=1)
    W_grid = transport_on_grid(grid, seq.K[0])
    W_path = transport_frame(model, PathSpec.segment(0.0, 2.0), tol=1e-12).end.W
    assert np.allclose(W_grid, W_path, atol=1e-8)


def test_degenerate_generator_collapses():
    with pytest.raises(GapCollapse) as exc:
        renorm_sequence(constant_model(np.eye(2)), 0.1, PathGrid.segment(0.0, 1.0, density=20), q_max=1)
    assert exc.value.q == 0


def test_grid_outside_strip(model):
    with pytest.raises(ModelDomainError):
        renorm_sequence(model, 0.1, PathGrid.along(PathSpec.segment(0j, 2.0j), density=20))


def test_positive_epsilon(model):
    with pytest.raises(ValueError):
        renorm_sequence(model, -0.1, PathGrid.segment(0.0, 1.0, density=20))


@pytest.mark.slow
def test_improved_prediction_two_level(model):
    imp = improved_prediction(model, 0, 0.1, q=1, half_line=6.0)
    assert imp.q == 1
    assert len(imp.loop_integrals) == 1
    assert abs(imp.gamma_star - imp.plain.gamma_total) < 0.5 * imp.plain.gamma_total
    assert math.isfinite(imp.modulus()) and imp.modulus() > 0
    assert np.asarray(imp.corrections.alpha_star).shape == (2, 2)
    assert imp.as_dict()["corrections"]["max_abs_exp_alpha_minus_one"] >= 0.0


@pytest.mark.slow
def test_corrections_diverge_after_an_interior_minimum(model):
    seq = renorm_sequence(model, 0.1, PathGrid.segment(-5.0, 5.0, density=40), q_max=12)
    assert 1 < seq.argmin < seq.q_max
    assert seq.diffs[-1] > seq.diffs[seq.argmin - 1]


@pytest.mark.slow
def test_first_eigenvalue_shift_is_second_order(model):
    grid = PathGrid.segment(-5.0, 5.0, density=40)
    coarse = renorm_sequence(model, 0.05, grid, q_max=1).eigenvalue_deviation[1]
    fine = renorm_sequence(model, 0.025, grid, q_max=1).eigenvalue_deviation[1]
    assert coarse / fine == pytest.approx(4.0, rel=0.2)


@pytest.mark.slow
@pytest.mark.parametrize("eps", [0.2, 0.1])
def test_improved_prediction_is_never_worse(model, eps):
    reference = complex(s_matrix(model, eps).S[1, 0])
    imp = improved_prediction(model, 0, eps, half_line=6.0, reference=reference)
    assert imp.rel_error <= imp.plain_rel_error
    assert imp.as_dict()["rel_error_modulus"] == imp.rel_error
    # a reference equal to the plain value forces the fallback
    tied = replace(imp, reference=imp.plain.value(eps))
    assert tied.used_plain
    assert tied.value() == imp.plain.value(eps)
    assert tied.rel_error == 0.0
