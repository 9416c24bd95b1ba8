import numpy as np
import pytest

from nlevel_core.asymptotics import crossing_loop
from nlevel_core.errors import ConfigError, ModelDomainError, PathThroughDegeneracy
from nlevel_core.geometry import collapsed_loop_integral, two_level_gamma
from nlevel_core.models import two_level_avoided
from nlevel_core.transport import (
    PathSpec,
    conjugate_monodromy_residual,
    couplings,
    delta_phase,
    intertwining_residual,
    metric_products_along,
    monodromy,
    transport_frame,
)

EP = 1j * np.arctan(0.5)


@pytest.fixture(scope="module")
def model():
    return two_level_avoided(0.5)


@pytest.mark.parametrize("verts, closed", [((0j,), False), ((0j, 0j, 1 + 0j), False), ((0j, 1 + 0j, 1j), True)])
def test_malformed_paths(verts, closed):
    with pytest.raises(ConfigError):
        PathSpec(verts, closed=closed)


def test_rectangle_orientation():
    ccw = PathSpec.rectangle(0j, 1.0, 0.5, orientation=1)
    assert ccw.signed_area > 0
    assert ccw.oriented_vertices() == ccw.vertices
    cw = PathSpec.rectangle(0j, 1.0, 0.5, orientation=-1)
    assert cw.oriented_vertices() == cw.vertices[::-1]
    conj = ccw.conjugate()
    assert conj.orientation == -1
    assert abs(ccw.length - 6.0) < 1e-12


def test_real_segment_transport(model):
    fp = transport_frame(model, PathSpec.segment(0.0, 3.0))
    assert intertwining_residual(fp) < 1e-7
    assert metric_products_along(fp) < 1e-8
    a = couplings(fp)
    assert np.all(np.diag(a) == 0)
    # real eigenvalues on the real axis keep the phase difference real
    assert abs(delta_phase(fp, 0, 1).imag) < 1e-10
    assert delta_phase(fp, 1, 1) == 0


def test_path_outside_strip(model):
    with pytest.raises(ModelDomainError):
        transport_frame(model, PathSpec.segment(0.0, 2.0j))


def test_avoid_margin(model):
    with pytest.raises(PathThroughDegeneracy):
        transport_frame(model, PathSpec.segment(-1.0 + 0.45j, 1.0 + 0.45j), avoid=[EP], margin=0.05)


def test_monodromy_swaps_levels(model):
    loop = crossing_loop(EP, orientation=-1)
    mono = monodromy(model, loop)
    assert mono.sigma0 == (1, 0)
    assert mono.residual < 1e-8
    oracle = collapsed_loop_integral(model, 0j, EP, 0, 1)
    assert abs(mono.loop_integrals[0] - oracle) < 1e-7
    assert abs(mono.loop_integrals[0].imag + two_level_gamma(0.5)) < 1e-7


def test_monodromy_of_empty_loop_is_identity(model):
    loop = PathSpec.rectangle(2.0 + 0.2j, 0.5, 0.1)
    mono = monodromy(model, loop)
    assert mono.sigma0 == (0, 1)
    assert np.allclose(mono.proportionality, 1.0, atol=1e-8)


def test_monodromy_needs_closed_loop(model):
    with pytest.raises(ConfigError):
        monodromy(model, PathSpec.segment(0.0, 1.0))


def test_conjugate_loop(model):
    res = conjugate_monodromy_residual(model, crossing_loop(EP, orientation=-1))
    assert res["sigma_equal"]
    assert res["loop_integral"] < 1e-7


def test_real_axis_phase_difference_matches_quadrature(model):
    from scipy.integrate import quad

    fp = transport_frame(model, PathSpec.segment(0.0, 2.0), tol=1e-12)
    ref = -2.0 * quad(lambda t: np.sqrt(np.tanh(t) ** 2 + 0.25), 0.0, 2.0, epsabs=1e-13)[0]
    assert abs(delta_phase(fp, 0, 1) - ref) < 1e-8
    assert abs(delta_phase(fp, 0, 1) + delta_phase(fp, 1, 0)) < 1e-12


def test_loop_deformation_invariance(model):
    small = monodromy(model, crossing_loop(EP, orientation=-1))
    big = monodromy(model, crossing_loop(EP, orientation=-1, width=1.5, clearance=2.0))
    assert small.sigma0 == big.sigma0
    assert abs(small.loop_integrals[0] - big.loop_integrals[0]) < 1e-7
    # theta is fixed by the homotopy class only up to 2 pi
    assert np.allclose(np.exp(-1j * small.thetas), np.exp(-1j * big.thetas), atol=1e-6)


def test_three_level_loop_swaps_first_pair():
    from nlevel_core.geometry import find_degeneracies
    from nlevel_core.models import three_level_adiabatic

    m3 = three_level_adiabatic(0.1)
    t1 = np.arctanh(-1 / 3)
    p = min((q for q in find_degeneracies(m3) if q.z0.imag > 0), key=lambda q: abs(q.z0.real - t1))
    mono = monodromy(m3, crossing_loop(p, orientation=-1, base=p.z0.real))
    assert mono.sigma0 == (1, 0, 2)


def test_channel_transport_preserves_metric_products():
    from nlevel_core.models import channel_potential, two_channel_schrodinger

    V, dV = channel_potential(0.3, 0.1)
    channel = two_channel_schrodinger(1.0, V, dV)
    for a, b in ((-4.0, 0.0), (0.0, 4.0), (-2.0, 3.0)):
        fp = transport_frame(channel, PathSpec.segment(a, b))
        assert metric_products_along(fp) < 1e-7
