import numpy as np
import pytest

from nlevel_core.errors import ConfigError
from nlevel_core.expressions import compile_matrix, parse_entry
from nlevel_core.models import two_level_avoided

TWO_LEVEL = [["tanh(z)", "delta"], ["delta", "-tanh(z)"]]


def test_matches_builtin_two_level():
    M = compile_matrix(TWO_LEVEL, {"delta": 0.5})
    ref = two_level_avoided(0.5)
    z = 0.3 + 0.2j
    assert np.allclose(M(z), ref.H(z), atol=1e-14)
    assert np.allclose(M.deriv(z), ref.dH(z), atol=1e-13)
    assert M.is_real_on_real_axis()


def test_sech_is_reciprocal_cosh():
    M = compile_matrix([["sech(z)**2", "0"], ["0", "1"]], {})
    assert abs(M(0.7)[0, 0] - 1.0 / np.cosh(0.7) ** 2) < 1e-14


def test_imaginary_unit_marks_complex_model():
    M = compile_matrix([["I*z", "1"], ["1", "0"]], {})
    assert not M.is_real_on_real_axis()


@pytest.mark.parametrize("text", ["sin(z)", "z**0.5", "__import__('os')", "abs(z)", "", "delta2*z"])
def test_outside_grammar_rejected(text):
    with pytest.raises(ConfigError):
        parse_entry(text, {"delta": 0.1})


def test_reserved_parameter_name_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_entry("z", {"tanh": 1.0})
    assert exc.value.field == "model.params"


def test_non_square_rejected():
    with pytest.raises(ConfigError):
        compile_matrix([["z", "1"], ["1"]], {})


def test_numeric_entries_pass_through():
    M = compile_matrix([[1, 0.5], [0.5, -1]], {})
    assert np.allclose(M(0.0), [[1, 0.5], [0.5, -1]])
    assert np.allclose(M.deriv(0.0), 0.0)
