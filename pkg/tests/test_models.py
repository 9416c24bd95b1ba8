import numpy as np
import pytest

from nlevel_core.errors import ModelDomainError, PositivityViolated
from nlevel_core.models import (
    channel_potential,
    constant_model,
    crossing_table,
    crossings_of,
    custom_model,
    diagram,
    three_level_adiabatic,
    two_channel_schrodinger,
    two_level_avoided,
    validate,
)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.2, 1.5])
def test_two_level_domain(delta):
    with pytest.raises(ModelDomainError):
        two_level_avoided(delta)


def test_three_level_domain():
    with pytest.raises(ModelDomainError):
        three_level_adiabatic(0.5)


def test_three_level_crossing_table_exact():
    table = crossing_table(three_level_adiabatic(0.0))
    assert len(table) == 2
    left, right = table
    assert abs(left.t - np.arctanh(-1 / 3)) < 1e-6 and (left.lower, left.upper) == (0, 1)
    assert abs(right.t - np.arctanh(1 / 3)) < 1e-6 and (right.lower, right.upper) == (0, 2)
    assert abs(left.slope - 8 / 3) < 1e-3


def test_diagrams():
    assert diagram(two_level_avoided(0.5)).sigma == (1, 0)
    dg = diagram(three_level_adiabatic(0.1))
    assert dg.sigma == (2, 0, 1)
    assert [link.to_pos for link in dg.chains[0]] == [1, 2]
    assert [link.to_pos for link in dg.chains[1]] == [0]
    assert dg.inverse() == (1, 2, 0)


def test_validate_two_level():
    report = validate(two_level_avoided(0.5))
    assert report.passed
    assert report.decay_kind == "exponential"
    assert abs(report.gap_min - 1.0) < 1e-9
    assert abs(report.gap_argmin) < 1e-12
    assert report.analyticity_residual < 1e-8
    assert report.as_dict()["crossing_table"][0]["j"] == 1


def test_constant_model_validates_without_decay():
    report = validate(constant_model(np.diag([1.0, 2.0])))
    assert report.decay_kind == "none"
    assert report.passed
    assert report.crossing_table == ()


def test_custom_model_finds_unperturbed_crossing():
    model = custom_model([["tanh(z)", "delta"], ["delta", "-tanh(z)"]], {"delta": 0.3})
    assert model.unperturbed() is not None
    cs = crossings_of(model)
    assert len(cs) == 1 and abs(cs[0].t) < 1e-6


def test_two_channel_structure():
    V, dV = channel_potential(0.3, 0.1)
    model = two_channel_schrodinger(1.0, V, dV)
    assert model.dim == 4 and model.block_size == 2
    assert model.real_on_real
    report = validate(model)
    assert report.metric_residual < 1e-10
    assert report.real_spectrum_residual < 1e-10


def test_two_channel_complex_coupling_not_real_on_real():
    V, dV = channel_potential(0.3, 0.1 + 0.05j)
    assert not two_channel_schrodinger(1.0, V, dV).real_on_real


def test_two_channel_needs_positive_energy():
    V, dV = channel_potential(0.3, 0.1)
    with pytest.raises(PositivityViolated):
        two_channel_schrodinger(0.1, V, dV)
