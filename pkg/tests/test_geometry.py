from pathlib import Path

import numpy as np
import pytest
import yaml

from nlevel_core.errors import ModelDomainError
from nlevel_core.geometry import (
    Region,
    char_poly_coefficients,
    check_dissipative,
    collapsed_loop_integral,
    construct_candidate_path,
    discriminant,
    dissipative_domain,
    dissipative_side,
    enclosing_loop,
    find_degeneracies,
    level_line_samples,
    loop_eigenvalue_integral,
    scan_degeneracies,
    two_level_gamma,
)
from nlevel_core.models import diagram, three_level_adiabatic, two_level_avoided
from nlevel_core.transport import PathSpec, transport_frame

CONSTANTS = yaml.safe_load(Path("data/regression_constants.yaml").read_text(encoding="utf-8"))


def test_char_poly_matches_numpy():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(char_poly_coefficients(A), np.poly(A), atol=1e-10)


def test_discriminant_is_product_of_squared_gaps():
    assert abs(abs(discriminant(np.diag([1.0, 2.0, 4.0]))) - 36.0) < 1e-9
    assert abs(discriminant(np.diag([1.0, 1.0, 2.0]))) < 1e-9


def test_two_level_gamma_frozen():
    assert abs(two_level_gamma(0.5) - CONSTANTS["two_level_gamma"]["delta_0_5"]) < 1e-12


def test_two_level_degeneracies():
    pts = find_degeneracies(two_level_avoided(0.5))
    assert len(pts) == 2
    lower, upper = sorted(pts, key=lambda p: p.z0.imag)
    assert abs(upper.z0 - 1j * np.arctan(0.5)) < 1e-8
    assert abs(lower.z0 - np.conj(upper.z0)) < 1e-12
    assert upper.pair == (0, 1)
    assert upper.conjugate_partner == lower.z0
    assert upper.as_dict()["pair"] == [1, 2]


def test_three_level_degeneracies_near_crossings():
    pts = [p for p in find_degeneracies(three_level_adiabatic(0.1)) if 0 < p.z0.imag < 0.3]
    left = min(pts, key=lambda p: abs(p.z0.real - np.arctanh(-1 / 3)))
    right = min(pts, key=lambda p: abs(p.z0.real - np.arctanh(1 / 3)))
    assert abs(left.z0.real - np.arctanh(-1 / 3)) < 0.05
    assert abs(right.z0.real - np.arctanh(1 / 3)) < 0.05
    assert left.pair == (0, 1)
    assert right.pair == (1, 2)


def test_scan_is_deterministic():
    model = two_level_avoided(0.5)
    r1, r2, r3 = (tuple(p.z0 for p in scan_degeneracies(model).points) for _ in range(3))
    assert r1 == r2 == r3


def test_region_outside_strip():
    with pytest.raises(ModelDomainError):
        scan_degeneracies(two_level_avoided(0.5), Region(-1, 1, -2, 2))


def test_collapsed_oracle_gives_gamma():
    model = two_level_avoided(0.5)
    val = collapsed_loop_integral(model, 0j, 1j * np.arctan(0.5), 0, 1)
    assert abs(val.imag + two_level_gamma(0.5)) < 1e-9


def test_loop_integral_matches_collapsed_oracle():
    model = two_level_avoided(0.5)
    z0 = 1j * np.arctan(0.5)
    loop = PathSpec((0j, 1.0 + 0j, 1.0 + 0.7j, -1.0 + 0.7j, -1.0 + 0j, 0j), closed=True, orientation=-1)
    assert abs(loop_eigenvalue_integral(model, loop, 0) - collapsed_loop_integral(model, 0j, z0, 0, 1)) < 1e-7


def test_candidate_path_is_dissipative():
    model = two_level_avoided(0.5)
    path = construct_candidate_path(model, 0)
    assert all(v.imag > 0 for v in path.vertices)
    assert path.vertices[0].real == pytest.approx(-4.0)
    assert path.vertices[-1].real == pytest.approx(4.0, abs=0.01)
    report = check_dissipative(model, path, 0)
    assert report.passed
    assert report.as_dict()["pairs"][0]["k"] == 2
    loop = enclosing_loop(path)
    assert loop.closed and loop.orientation == -1


def test_no_crossing_gives_real_axis():
    from nlevel_core.models import constant_model
    path = construct_candidate_path(constant_model(np.diag([1.0, 2.0])), 0)
    assert all(v.imag == 0 for v in path.vertices)


def test_level_lines_vanish_on_real_axis():
    rows = level_line_samples(two_level_avoided(0.5), 0, 1, Region(-0.2, 0.2, -0.2, 0.2), 0.1)
    assert rows == sorted(rows, key=lambda r: (r[0], r[1]))
    on_axis = [r for r in rows if r[1] == 0.0]
    assert len(on_axis) == 5
    assert all(abs(r[2]) < 1e-12 for r in on_axis)


@pytest.mark.slow
@pytest.mark.parametrize("model", [two_level_avoided(0.5), three_level_adiabatic(0.1)], ids=["two", "three"])
def test_every_index_has_a_dissipative_domain(model):
    sigma = diagram(model).sigma
    for j in range(model.dim):
        domain = dissipative_domain(model, j)
        expected = 1 if sigma[j] > j else -1
        assert domain.side == dissipative_side(model, j) == expected
        assert domain.passed, domain.as_dict()
        assert sorted(domain.paths) == [k for k in range(model.dim) if k != j]
        for path in domain.paths.values():
            assert all(np.sign(v.imag) == expected for v in path.vertices)
            loop = enclosing_loop(path)
            assert tuple(transport_frame(model, loop, carry_frame=False).label_map) == tuple(sigma)


@pytest.mark.slow
def test_middle_level_paths_run_below_the_axis():
    model = three_level_adiabatic(0.1)
    assert diagram(model).sigma[1] == 0
    path = construct_candidate_path(model, 1, k=0)
    assert all(v.imag < 0 for v in path.vertices)
    report = check_dissipative(model, path, 1, pairs=(0,))
    assert report.passed and list(report.margins) == [0]
